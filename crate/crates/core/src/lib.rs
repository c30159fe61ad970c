//! Secret-key rates for simultaneous subspace coding with high-dimensional
//! entanglement.
//!
//! Two parties share a `d x d` entangled state, split each local space into
//! `d / k` blocks of size `k`, and run an independent key-extraction instance
//! inside every block in which both of their outcomes land. This crate
//! provides:
//!
//! * [`quantum`]: block-Fourier measurement bases, the isotropic state,
//!   Born-rule statistics and subspace projection;
//! * [`keyrate`]: the min-entropy bound, per-block and total key rates, the
//!   isotropic closed form and critical visibility;
//! * [`noise`]: analytic time-bin and spatial-mode photon noise models;
//! * [`mc`]: event-level Monte Carlo simulators that validate the noise models;
//! * [`sdp`]: dual certificates and a primal attack search for the guessing
//!   probability bound;
//! * [`protocol`]: a finite-round simulation of distribution, measurement,
//!   sifting and parameter estimation;
//! * [`figures`]: the data series behind the noise-versus-rate figures.

pub mod error;
pub mod figures;
pub mod keyrate;
pub mod mc;
pub mod noise;
pub mod protocol;
pub mod quantum;
mod rng;
pub mod sdp;

pub use error::{Error, Result};
pub use keyrate::{IsoKeyRate, KeyRateReport, SubspaceStats};
pub use mc::{McComparison, McEstimate};
pub use noise::spatial::{SpatialDerived, SpatialParams};
pub use noise::temporal::{TemporalDerived, TemporalParams};
pub use noise::PartyNoise;
pub use protocol::{ProtocolConfig, ProtocolEstimates, RoundRecord};
pub use quantum::{DensityMatrix, JointDistribution, MeasurementBasis, SubspaceLayout};
pub use sdp::{DualCertificate, PrimalAttack, WitnessOperator};

//! Bipartite states, block-Fourier measurements and subspace projection.
//!
//! Composite indices follow the usual Kronecker convention: the basis vector
//! `|a>|b>` of a `d x d` system sits at position `a * d + b`.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_probability, Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Projections with probability below this are reported as degenerate.
pub const DEGENERATE_PROBABILITY: f64 = 1e-14;

/// Split of a `d`-dimensional local space into `d / k` blocks of size `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubspaceLayout {
    d: usize,
    k: usize,
}

impl SubspaceLayout {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::ZeroDimension);
        }
        if d % k != 0 {
            return Err(Error::IndivisibleLayout { d, k });
        }
        Ok(Self { d, k })
    }

    /// Global local dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Subspace size.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of blocks, `d / k`.
    pub fn blocks(&self) -> usize {
        self.d / self.k
    }

    pub fn block_of(&self, outcome: usize) -> usize {
        outcome / self.k
    }

    pub fn block_range(&self, m: usize) -> Range<usize> {
        m * self.k..(m + 1) * self.k
    }

    fn check_block(&self, m: usize) -> Result<()> {
        if m < self.blocks() {
            Ok(())
        } else {
            Err(Error::BlockOutOfRange {
                m,
                blocks: self.blocks(),
            })
        }
    }
}

/// All divisors of `d` in increasing order.
pub fn divisors(d: usize) -> Vec<usize> {
    (1..=d).filter(|k| d % k == 0).collect()
}

/// Trace-one Hermitian positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-12;
    pub const EIGEN_TOL: f64 = 1e-10;

    /// Validates `matrix` and wraps it.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let state = Self { matrix };
        state.validate()?;
        Ok(state)
    }

    /// Wraps a matrix that is a density matrix by construction.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        debug_assert!(matrix.is_square());
        Self { matrix }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() || self.matrix.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "matrix is {}x{}",
                self.matrix.nrows(),
                self.matrix.ncols()
            )));
        }
        let herm = self.hermitian_deviation();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -Self::EIGEN_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// Side length of the matrix.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Local dimension `d` when the matrix acts on `C^d (x) C^d`.
    pub fn local_dim(&self) -> Option<usize> {
        let n = self.dim();
        let d = (n as f64).sqrt().round() as usize;
        (d * d == n).then_some(d)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let diff = self.matrix[(i, j)] - self.matrix[(j, i)].conj();
                worst = worst.max(diff.norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(f64::NAN)
    }
}

/// Which of the two measurement settings a basis implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisLabel {
    /// Computational basis, used for key generation.
    Computational,
    /// Block-wise Fourier basis, mutually unbiased to the computational basis
    /// inside every block; used for testing.
    BlockFourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

/// Complete projective measurement made of rank-one projectors `|v_x><v_x|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBasis {
    pub label: BasisLabel,
    pub party: Party,
    /// Columns are the measurement vectors `v_0 .. v_{d-1}`.
    vectors: CMatrix,
}

impl MeasurementBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vector(&self, x: usize) -> CVector {
        self.vectors.column(x).into_owned()
    }

    /// Matrix whose columns are the measurement vectors.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn projector(&self, x: usize) -> CMatrix {
        let v = self.vectors.column(x);
        v * v.adjoint()
    }

    pub fn projectors(&self) -> Vec<CMatrix> {
        (0..self.dim()).map(|x| self.projector(x)).collect()
    }
}

/// The four local measurements of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub alice_key: MeasurementBasis,
    pub alice_test: MeasurementBasis,
    pub bob_key: MeasurementBasis,
    pub bob_test: MeasurementBasis,
}

impl Measurements {
    pub fn get(&self, party: Party, label: BasisLabel) -> &MeasurementBasis {
        match (party, label) {
            (Party::Alice, BasisLabel::Computational) => &self.alice_key,
            (Party::Alice, BasisLabel::BlockFourier) => &self.alice_test,
            (Party::Bob, BasisLabel::Computational) => &self.bob_key,
            (Party::Bob, BasisLabel::BlockFourier) => &self.bob_test,
        }
    }
}

/// Block-diagonal unitary with one normalised `k x k` DFT matrix per block.
pub fn build_block_fourier_unitary(layout: SubspaceLayout) -> CMatrix {
    let (d, k) = (layout.d(), layout.k());
    let norm = 1.0 / (k as f64).sqrt();
    let mut u = CMatrix::zeros(d, d);
    for m in 0..layout.blocks() {
        for i in 0..k {
            for j in 0..k {
                let phase = 2.0 * PI * ((i * j) % k) as f64 / k as f64;
                u[(m * k + i, m * k + j)] = Complex64::from_polar(norm, phase);
            }
        }
    }
    u
}

/// Builds `A_1`, `A_2 = U A_1 U^dag`, `B_1` and `B_2 = U^* B_1 U^T`.
pub fn build_measurements(layout: SubspaceLayout) -> Measurements {
    let d = layout.d();
    let u = build_block_fourier_unitary(layout);
    let identity = CMatrix::identity(d, d);
    let basis = |label, party, vectors| MeasurementBasis {
        label,
        party,
        vectors,
    };
    Measurements {
        alice_key: basis(BasisLabel::Computational, Party::Alice, identity.clone()),
        alice_test: basis(BasisLabel::BlockFourier, Party::Alice, u.clone()),
        bob_key: basis(BasisLabel::Computational, Party::Bob, identity),
        bob_test: basis(BasisLabel::BlockFourier, Party::Bob, u.conjugate()),
    }
}

/// `|psi_d^+> = sum_i |ii> / sqrt(d)`.
pub fn max_entangled_vector(d: usize) -> CVector {
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut psi = CVector::zeros(d * d);
    for i in 0..d {
        psi[i * d + i] = amp;
    }
    psi
}

/// `v |psi_d^+><psi_d^+| + (1 - v) / d^2 * I`.
pub fn isotropic_state(d: usize, v: f64) -> Result<DensityMatrix> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    check_probability("visibility", v)?;
    let n = d * d;
    let noise = (1.0 - v) / n as f64;
    let mut rho = CMatrix::from_diagonal_element(n, n, Complex64::new(noise, 0.0));
    let weight = v / d as f64;
    for i in 0..d {
        for j in 0..d {
            rho[(i * d + i, j * d + j)] += Complex64::new(weight, 0.0);
        }
    }
    Ok(DensityMatrix::from_trusted(rho))
}

/// Joint outcome distribution `P(x, y)` on a square grid of outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    d: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub const NEGATIVE_TOL: f64 = 1e-12;
    pub const SUM_TOL: f64 = 1e-10;

    /// Row-major probabilities `probs[x * d + y]`. Entries above `-1e-12` are
    /// clamped at zero.
    pub fn new(d: usize, mut probs: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        if probs.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: probs.len(),
            });
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -Self::NEGATIVE_TOL {
                return Err(Error::InvalidDistribution(format!("entry {p}")));
            }
            *p = p.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self { d, probs })
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_counts(d: usize, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("no counts".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(d, probs)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.d + y]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Marginal of the second party.
    pub fn marginal_y(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for x in 0..self.d {
            for (y, slot) in out.iter_mut().enumerate() {
                *slot += self.get(x, y);
            }
        }
        out
    }

    /// `sum_x P(x, x)`.
    pub fn agreement(&self) -> f64 {
        (0..self.d).map(|x| self.get(x, x)).sum()
    }

    /// Raw (unnormalised) restriction to the square `range x range`.
    pub fn block_weights(&self, range: Range<usize>) -> Vec<f64> {
        let mut out = Vec::with_capacity(range.len() * range.len());
        for x in range.clone() {
            for y in range.clone() {
                out.push(self.get(x, y));
            }
        }
        out
    }
}

/// `P(x, y) = Tr(rho (A^x (x) B^y))` for rank-one projective measurements.
pub fn born_joint_distribution(
    state: &DensityMatrix,
    basis_a: &MeasurementBasis,
    basis_b: &MeasurementBasis,
) -> Result<JointDistribution> {
    let d = basis_a.dim();
    if basis_b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: basis_b.dim(),
        });
    }
    if state.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: state.dim(),
        });
    }
    let product = basis_a.vectors().kronecker(basis_b.vectors());
    let applied = state.matrix() * &product;
    let probs = (0..d * d)
        .map(|j| {
            product
                .column(j)
                .iter()
                .zip(applied.column(j).iter())
                .map(|(m, r)| (m.conj() * r).re)
                .sum::<f64>()
        })
        .collect();
    JointDistribution::new(d, probs)
}

/// Result of the local block projection `Pi^m (x) Pi^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub probability: f64,
    /// Normalised `k^2 x k^2` block state; `None` when the probability is
    /// below [`DEGENERATE_PROBABILITY`].
    pub state: Option<DensityMatrix>,
}

impl Projection {
    pub fn is_degenerate(&self) -> bool {
        self.state.is_none()
    }
}

/// Projects both parties onto block `m` and re-indexes the result as a
/// `k^2 x k^2` state.
pub fn project_subspace(
    state: &DensityMatrix,
    m: usize,
    layout: SubspaceLayout,
) -> Result<Projection> {
    layout.check_block(m)?;
    let (d, k) = (layout.d(), layout.k());
    if state.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: state.dim(),
        });
    }
    let global = |i: usize| {
        let (a, b) = (i / k, i % k);
        (m * k + a) * d + (m * k + b)
    };
    let n = k * k;
    let rho = state.matrix();
    let block = CMatrix::from_fn(n, n, |i, j| rho[(global(i), global(j))]);
    let probability = block.trace().re;
    if probability < DEGENERATE_PROBABILITY {
        return Ok(Projection {
            probability: probability.max(0.0),
            state: None,
        });
    }
    let normalised = block.map(|z| z / probability);
    Ok(Projection {
        probability,
        state: Some(DensityMatrix::from_trusted(normalised)),
    })
}

/// Local block projector `Pi^m = sum_i |mk+i><mk+i|`.
pub fn block_projector(layout: SubspaceLayout, m: usize) -> Result<CMatrix> {
    layout.check_block(m)?;
    let d = layout.d();
    let mut pi = CMatrix::zeros(d, d);
    for i in layout.block_range(m) {
        pi[(i, i)] = ONE;
    }
    Ok(pi)
}

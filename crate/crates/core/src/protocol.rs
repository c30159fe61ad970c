//! Round-by-round simulation of distribution, measurement, sifting and
//! parameter estimation, sampling outcomes from Born-rule statistics.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keyrate::{conditional_entropy, min_entropy_bound};
use crate::quantum::{born_joint_distribution, build_measurements, DensityMatrix, JointDistribution, SubspaceLayout};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub layout: SubspaceLayout,
    /// Probability of choosing the test basis, per party.
    pub epsilon: f64,
    pub n_rounds: u64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: self.epsilon,
                range: "(0, 1)",
            });
        }
        if self.n_rounds == 0 {
            return Err(Error::InvalidParameter("n_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRecord {
    /// `true` for the test basis.
    pub w_a: bool,
    pub w_b: bool,
    pub x: u32,
    pub y: u32,
    pub m_a: u32,
    pub m_b: u32,
    /// Agreed block, `None` when the round is discarded.
    pub block: Option<u32>,
    pub x_prime: Option<u32>,
    pub y_prime: Option<u32>,
}

impl RoundRecord {
    pub fn new(w_a: bool, w_b: bool, x: u32, y: u32, k: u32) -> Self {
        let (m_a, m_b) = (x / k, y / k);
        let block = (w_a == w_b && m_a == m_b).then_some(m_a);
        Self {
            w_a,
            w_b,
            x,
            y,
            m_a,
            m_b,
            block,
            x_prime: block.map(|m| x - m * k),
            y_prime: block.map(|m| y - m * k),
        }
    }

    pub fn is_test(&self) -> bool {
        self.block.is_some() && self.w_a
    }

    pub fn is_key(&self) -> bool {
        self.block.is_some() && !self.w_a
    }
}

/// Samples `config.n_rounds` rounds from `state`.
pub fn run_protocol(state: &DensityMatrix, config: &ProtocolConfig) -> Result<Vec<RoundRecord>> {
    config.validate()?;
    let layout = config.layout;
    let d = layout.d();
    if state.dim() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: state.dim(),
        });
    }
    let ms = build_measurements(layout);
    let mut samplers = Vec::with_capacity(4);
    for wa in [false, true] {
        for wb in [false, true] {
            let a = if wa { &ms.alice_test } else { &ms.alice_key };
            let b = if wb { &ms.bob_test } else { &ms.bob_key };
            let joint = born_joint_distribution(state, a, b)?;
            samplers.push(
                WeightedIndex::new(joint.probs())
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            );
        }
    }
    let (eps, d32, k32) = (config.epsilon, d as u32, layout.k() as u32);
    let chunks: Vec<(u64, u64)> = rng::chunks(config.n_rounds).collect();
    let parts: Vec<Vec<RoundRecord>> = chunks
        .into_par_iter()
        .map(|(index, len)| {
            let mut r = rng::stream(config.seed, index);
            (0..len)
                .map(|_| {
                    let w_a = r.random::<f64>() < eps;
                    let w_b = r.random::<f64>() < eps;
                    let idx = samplers[2 * w_a as usize + w_b as usize].sample(&mut r) as u32;
                    RoundRecord::new(w_a, w_b, idx / d32, idx % d32, k32)
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub m: usize,
    pub test_rounds: u64,
    pub test_agreements: u64,
    /// Fraction of test rounds with equal in-block outcomes.
    pub w: Option<f64>,
    pub w_stderr: Option<f64>,
    /// Share of same-basis rounds assigned to this block.
    pub p_block: f64,
    pub key_rounds: u64,
    pub cond_dist: Option<JointDistribution>,
}

impl BlockEstimate {
    pub fn is_defined(&self) -> bool {
        self.w.is_some() && self.cond_dist.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolEstimates {
    pub layout: SubspaceLayout,
    pub rounds: u64,
    pub same_basis_rounds: u64,
    pub kept_rounds: u64,
    pub blocks: Vec<BlockEstimate>,
    pub warnings: Vec<String>,
}

impl ProtocolEstimates {
    pub fn defined_blocks(&self) -> impl Iterator<Item = &BlockEstimate> {
        self.blocks.iter().filter(|b| b.is_defined())
    }
}

pub fn estimate_parameters(records: &[RoundRecord], layout: SubspaceLayout) -> Result<ProtocolEstimates> {
    if records.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    let (ell, k) = (layout.blocks(), layout.k());
    let mut test = vec![(0u64, 0u64); ell];
    let mut key = vec![vec![0u64; k * k]; ell];
    let mut kept = vec![0u64; ell];
    let mut same_basis = 0u64;
    for r in records {
        same_basis += (r.w_a == r.w_b) as u64;
        let (Some(m), Some(xp), Some(yp)) = (r.block, r.x_prime, r.y_prime) else {
            continue;
        };
        let m = m as usize;
        if m >= ell || xp as usize >= k || yp as usize >= k {
            return Err(Error::BlockOutOfRange { m, blocks: ell });
        }
        kept[m] += 1;
        if r.w_a {
            test[m].0 += 1;
            test[m].1 += (xp == yp) as u64;
        } else {
            key[m][xp as usize * k + yp as usize] += 1;
        }
    }
    let mut warnings = Vec::new();
    let mut blocks = Vec::with_capacity(ell);
    for m in 0..ell {
        let (n_test, agree) = test[m];
        let (w, w_stderr) = if n_test > 0 {
            let w = agree as f64 / n_test as f64;
            (Some(w), Some((w * (1.0 - w) / n_test as f64).sqrt()))
        } else {
            warnings.push(format!("block {m} has no test rounds and is excluded"));
            (None, None)
        };
        let key_rounds: u64 = key[m].iter().sum();
        let cond_dist = if key_rounds > 0 {
            Some(JointDistribution::from_counts(k, &key[m])?)
        } else {
            warnings.push(format!("block {m} has no key rounds and is excluded"));
            None
        };
        blocks.push(BlockEstimate {
            m,
            test_rounds: n_test,
            test_agreements: agree,
            w,
            w_stderr,
            p_block: if same_basis > 0 {
                kept[m] as f64 / same_basis as f64
            } else {
                0.0
            },
            key_rounds,
            cond_dist,
        });
    }
    Ok(ProtocolEstimates {
        layout,
        rounds: records.len() as u64,
        same_basis_rounds: same_basis,
        kept_rounds: kept.iter().sum(),
        blocks,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub signed: f64,
    pub clamped: f64,
    /// Three standard errors of the rate, propagated from the witness
    /// estimates only.
    pub half_width: f64,
    pub blocks_used: usize,
}

impl RateEstimate {
    pub fn contains(&self, value: f64, clamp: bool) -> bool {
        let centre = if clamp { self.clamped } else { self.signed };
        (value - centre).abs() <= self.half_width
    }
}

pub const BAND_SIGMAS: f64 = 3.0;

fn min_entropy_slope(w: f64, k: usize) -> Result<f64> {
    let h = 1e-6;
    let (lo, hi) = ((w - h).max(0.0), (w + h).min(1.0));
    Ok((min_entropy_bound(hi, k)? - min_entropy_bound(lo, k)?) / (hi - lo))
}

/// Plug-in rate `sum_m p_m (H_min(W_m) - H(X'|Y')_m)` over defined blocks.
pub fn asymptotic_rate_estimate(estimates: &ProtocolEstimates) -> Result<RateEstimate> {
    let k = estimates.layout.k();
    let (mut signed, mut clamped, mut var, mut used) = (0.0, 0.0, 0.0, 0usize);
    for b in estimates.defined_blocks() {
        let (Some(w), Some(se), Some(cond)) = (b.w, b.w_stderr, &b.cond_dist) else {
            continue;
        };
        let rate = min_entropy_bound(w, k)? - conditional_entropy(cond);
        signed += b.p_block * rate;
        clamped += b.p_block * rate.max(0.0);
        var += (b.p_block * min_entropy_slope(w, k)? * se).powi(2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoDefinedBlocks);
    }
    Ok(RateEstimate {
        signed,
        clamped,
        half_width: BAND_SIGMAS * var.sqrt(),
        blocks_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::{iso_block_probability, iso_keyrate_closed_form, iso_witness};
    use crate::quantum::isotropic_state;

    fn config(d: usize, k: usize, epsilon: f64, n: u64, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            layout: SubspaceLayout::new(d, k).unwrap(),
            epsilon,
            n_rounds: n,
            seed,
        }
    }

    #[test]
    fn sifting_rules() {
        let r = RoundRecord::new(true, true, 5, 4, 2);
        assert_eq!((r.block, r.x_prime, r.y_prime), (Some(2), Some(1), Some(0)));
        assert!(r.is_test());
        assert_eq!(RoundRecord::new(true, false, 5, 4, 2).block, None);
        assert_eq!(RoundRecord::new(false, false, 5, 2, 2).block, None);
    }

    #[test]
    fn config_validation() {
        assert!(config(4, 2, 0.0, 10, 0).validate().is_err());
        assert!(config(4, 2, 1.0, 10, 0).validate().is_err());
        assert!(config(4, 2, 0.5, 0, 0).validate().is_err());
    }

    #[test]
    fn bell_state_rounds_agree() {
        let state = isotropic_state(2, 1.0).unwrap();
        let recs = run_protocol(&state, &config(2, 2, 0.5, 20_000, 1)).unwrap();
        for r in &recs {
            if r.w_a == r.w_b {
                assert_eq!(r.x, r.y);
            }
            if let Some(m) = r.block {
                assert_eq!(r.m_a, m);
                assert_eq!(r.m_b, m);
                assert_eq!(r.w_a, r.w_b);
            }
        }
        let est = estimate_parameters(&recs, SubspaceLayout::new(2, 2).unwrap()).unwrap();
        assert_eq!(est.blocks[0].w, Some(1.0));
        let rate = asymptotic_rate_estimate(&est).unwrap();
        assert!((rate.signed - 1.0).abs() < 1e-12);
        assert_eq!(rate.half_width, 0.0);
    }

    #[test]
    fn rare_test_basis() {
        let state = isotropic_state(4, 0.8).unwrap();
        let eps = 0.02;
        let n = 200_000;
        let recs = run_protocol(&state, &config(4, 2, eps, n, 3)).unwrap();
        let both = recs.iter().filter(|r| r.w_a && r.w_b).count() as f64 / n as f64;
        let sd = (eps * eps * (1.0 - eps * eps) / n as f64).sqrt();
        assert!((both - eps * eps).abs() < 4.0 * sd);
    }

    #[test]
    fn kept_fraction_matches_sifting_probability() {
        let (d, k, v, eps, n) = (4usize, 2usize, 0.8, 0.3, 1_000_000u64);
        let state = isotropic_state(d, v).unwrap();
        let recs = run_protocol(&state, &config(d, k, eps, n, 4)).unwrap();
        let kept = recs.iter().filter(|r| r.block.is_some()).count() as f64 / n as f64;
        let p_m = iso_block_probability(d, v, k).unwrap() * (d / k) as f64;
        let expect = p_m * ((1.0 - eps).powi(2) + eps * eps);
        let sd = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((kept - expect).abs() < 3.0 * sd, "{kept} vs {expect}");
    }

    #[test]
    fn deterministic_given_seed() {
        let state = isotropic_state(4, 0.7).unwrap();
        let a = run_protocol(&state, &config(4, 2, 0.2, 50_000, 8)).unwrap();
        let b = run_protocol(&state, &config(4, 2, 0.2, 50_000, 8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_kept_rounds_means_no_defined_blocks() {
        let layout = SubspaceLayout::new(4, 2).unwrap();
        let recs = vec![RoundRecord::new(true, false, 0, 0, 2); 10];
        let est = estimate_parameters(&recs, layout).unwrap();
        assert!(est.blocks.iter().all(|b| !b.is_defined()));
        assert_eq!(asymptotic_rate_estimate(&est), Err(Error::NoDefinedBlocks));
        assert!(estimate_parameters(&[], layout).is_err());
    }

    #[test]
    fn convergence_with_round_number() {
        let (d, k, v) = (8usize, 2usize, 0.6);
        let state = isotropic_state(d, v).unwrap();
        let layout = SubspaceLayout::new(d, k).unwrap();
        let target = iso_keyrate_closed_form(d, v, k).unwrap().signed;
        let w_true = iso_witness(d, v, k).unwrap();
        let mut widths = Vec::new();
        for (i, n) in [10_000u64, 100_000, 1_000_000].into_iter().enumerate() {
            let recs = run_protocol(&state, &config(d, k, 0.1, n, 20 + i as u64)).unwrap();
            let est = estimate_parameters(&recs, layout).unwrap();
            for b in est.defined_blocks() {
                assert!((b.w.unwrap() - w_true).abs() <= 4.0 * b.w_stderr.unwrap());
            }
            let rate = asymptotic_rate_estimate(&est).unwrap();
            widths.push(rate.half_width);
            if n >= 100_000 {
                assert!(rate.contains(target, false), "n={n} {rate:?} vs {target}");
            }
        }
        for pair in widths.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.35, "{widths:?}");
        }
    }

    #[test]
    fn below_threshold_band_touches_zero() {
        let (d, k, v) = (4usize, 2usize, 0.3);
        let state = isotropic_state(d, v).unwrap();
        let recs = run_protocol(&state, &config(d, k, 0.3, 200_000, 5)).unwrap();
        let est = estimate_parameters(&recs, SubspaceLayout::new(d, k).unwrap()).unwrap();
        let rate = asymptotic_rate_estimate(&est).unwrap();
        assert!(rate.clamped - rate.half_width <= 0.0);
    }
}

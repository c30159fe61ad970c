//! Entropic bounds and asymptotic key rates.

use crate::error::{check_probability, Error, Result};
use crate::quantum::{
    born_joint_distribution, build_measurements, DensityMatrix, JointDistribution,
    SubspaceLayout, DEGENERATE_PROBABILITY,
};

const W_SLACK: f64 = 1e-9;

fn check_witness(w: f64) -> Result<f64> {
    if !(-W_SLACK..=1.0 + W_SLACK).contains(&w) || w.is_nan() {
        return Err(Error::OutOfRange {
            name: "W",
            value: w,
            range: "[0, 1]",
        });
    }
    Ok(w.clamp(0.0, 1.0))
}

/// Eve's optimal guessing probability `(sqrt(W) + sqrt((k-1)(1-W)))^2 / k`.
pub fn guessing_probability(w: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroDimension);
    }
    let w = check_witness(w)?;
    let w = if w > 1.0 - W_SLACK { 1.0 } else { w };
    let root = w.sqrt() + ((k - 1) as f64 * (1.0 - w)).sqrt();
    Ok(root * root / k as f64)
}

/// Min-entropy of the key outcome given Eve, in bits. Zero for `W <= 1/k`.
pub fn min_entropy_bound(w: f64, k: usize) -> Result<f64> {
    let pg = guessing_probability(w, k)?;
    if w <= 1.0 / k as f64 {
        return Ok(0.0);
    }
    Ok((-pg.log2()).clamp(0.0, (k as f64).log2()))
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// `H(X|Y) = H(X,Y) - H(Y)` in bits.
pub fn conditional_entropy(joint: &JointDistribution) -> f64 {
    let h_xy: f64 = -joint.probs().iter().map(|&p| plogp(p)).sum::<f64>();
    let h_y: f64 = -joint.marginal_y().into_iter().map(plogp).sum::<f64>();
    (h_xy - h_y).max(0.0)
}

/// Observed statistics of one block after sifting.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceStats {
    pub m: usize,
    /// Probability of equal test-basis outcomes inside the block.
    pub w: f64,
    /// `P(M = m)`.
    pub p_block: f64,
    /// Key-basis outcomes inside the block, renormalised; its side is `k`.
    pub cond_dist: JointDistribution,
}

impl SubspaceStats {
    pub fn k(&self) -> usize {
        self.cond_dist.d()
    }
}

/// `K_m = H_min(W) - H(X'|Y')`, possibly negative.
pub fn keyrate_subspace(stats: &SubspaceStats) -> Result<f64> {
    check_probability("p_block", stats.p_block)?;
    Ok(min_entropy_bound(stats.w, stats.k())? - conditional_entropy(&stats.cond_dist))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRate {
    pub m: usize,
    /// Bits per sifted symbol of this block.
    pub rate: f64,
    pub p_block: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub per_block: Vec<BlockRate>,
    /// Bits per round.
    pub total: f64,
    pub bits_per_second: Option<f64>,
    pub clamped: bool,
}

impl KeyRateReport {
    fn from_blocks(per_block: Vec<BlockRate>, clamp: bool) -> Self {
        let total = per_block
            .iter()
            .map(|b| {
                let rate = if clamp { b.rate.max(0.0) } else { b.rate };
                b.p_block * rate
            })
            .sum();
        Self {
            per_block,
            total,
            bits_per_second: None,
            clamped: clamp,
        }
    }
}

/// Sums `P(M=m) K_m` over a complete set of blocks. With `clamp`, blocks with
/// negative rate contribute nothing.
pub fn keyrate_total(
    blocks: &[SubspaceStats],
    layout: SubspaceLayout,
    clamp: bool,
) -> Result<KeyRateReport> {
    let ell = layout.blocks();
    let mut seen = vec![false; ell];
    for b in blocks {
        if b.m >= ell {
            return Err(Error::BlockOutOfRange { m: b.m, blocks: ell });
        }
        if std::mem::replace(&mut seen[b.m], true) {
            return Err(Error::BlockCoverage(format!("block {} given twice", b.m)));
        }
        if b.k() != layout.k() {
            return Err(Error::DimensionMismatch {
                expected: layout.k(),
                got: b.k(),
            });
        }
    }
    if let Some(m) = seen.iter().position(|s| !s) {
        return Err(Error::BlockCoverage(format!("block {m} missing")));
    }
    let mut per_block = blocks
        .iter()
        .map(|b| {
            Ok(BlockRate {
                m: b.m,
                rate: keyrate_subspace(b)?,
                p_block: b.p_block,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    per_block.sort_by_key(|b| b.m);
    Ok(KeyRateReport::from_blocks(per_block, clamp))
}

fn check_iso(d: usize, v: f64, k: usize) -> Result<SubspaceLayout> {
    check_probability("visibility", v)?;
    SubspaceLayout::new(d, k)
}

/// Visibility of the isotropic state after projecting onto one block.
pub fn iso_effective_visibility(d: usize, v: f64, k: usize) -> Result<f64> {
    check_iso(d, v, k)?;
    let (d, k) = (d as f64, k as f64);
    if v == 0.0 {
        return Ok(0.0);
    }
    Ok(v * d / (v * d + k - v * k))
}

/// Per-block test-basis agreement `(vd + 1 - v) / (vd + k - vk)`.
pub fn iso_witness(d: usize, v: f64, k: usize) -> Result<f64> {
    check_iso(d, v, k)?;
    let (d, k) = (d as f64, k as f64);
    Ok((v * d + 1.0 - v) / (v * d + k - v * k))
}

/// Probability that both parties land in a given block, `k(vd + k - vk)/d^2`.
pub fn iso_block_probability(d: usize, v: f64, k: usize) -> Result<f64> {
    check_iso(d, v, k)?;
    let (d, k) = (d as f64, k as f64);
    Ok(k * (v * d + k - v * k) / (d * d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoKeyRate {
    pub signed: f64,
    pub clamped: f64,
}

impl IsoKeyRate {
    pub fn value(&self, clamp: bool) -> f64 {
        if clamp {
            self.clamped
        } else {
            self.signed
        }
    }
}

/// Total key rate of the isotropic state in closed form.
pub fn iso_keyrate_closed_form(d: usize, v: f64, k: usize) -> Result<IsoKeyRate> {
    check_iso(d, v, k)?;
    let (df, kf) = (d as f64, k as f64);
    let signed = if v == 1.0 || k == 1 {
        kf.log2()
    } else {
        let a = v * df + 1.0 - v;
        let root = a.sqrt() + (kf - 1.0) * (1.0 - v).sqrt();
        let weight = (v * df + kf - v * kf) / df;
        let noise = if v < 1.0 {
            (kf - 1.0) * (1.0 - v) / df * (1.0 - v).log2()
        } else {
            0.0
        };
        weight * (kf / (root * root)).log2() + a / df * a.log2() + noise
    };
    Ok(IsoKeyRate {
        signed,
        clamped: signed.max(0.0),
    })
}

/// Key rate of an arbitrary bipartite state via block projection of the
/// Born statistics of both measurement settings.
pub fn keyrate_from_state(
    state: &DensityMatrix,
    layout: SubspaceLayout,
    clamp: bool,
) -> Result<KeyRateReport> {
    let ms = build_measurements(layout);
    let key = born_joint_distribution(state, &ms.alice_key, &ms.bob_key)?;
    let test = born_joint_distribution(state, &ms.alice_test, &ms.bob_test)?;
    let k = layout.k();
    let mut per_block = Vec::with_capacity(layout.blocks());
    for m in 0..layout.blocks() {
        let range = layout.block_range(m);
        let weights = key.block_weights(range.clone());
        let p_block: f64 = weights.iter().sum();
        if p_block < DEGENERATE_PROBABILITY {
            per_block.push(BlockRate {
                m,
                rate: 0.0,
                p_block: p_block.max(0.0),
            });
            continue;
        }
        let agree: f64 = range.map(|x| test.get(x, x)).sum();
        let test_weight: f64 = test.block_weights(layout.block_range(m)).iter().sum();
        let stats = SubspaceStats {
            m,
            w: (agree / test_weight).min(1.0),
            p_block: p_block.min(1.0),
            cond_dist: JointDistribution::new(
                k,
                weights.iter().map(|p| p / p_block).collect(),
            )?,
        };
        per_block.push(BlockRate {
            m,
            rate: keyrate_subspace(&stats)?,
            p_block: stats.p_block,
        });
    }
    Ok(KeyRateReport::from_blocks(per_block, clamp))
}

/// Smallest isotropic visibility with positive key rate, by bisection.
/// Returns 1 when no visibility below 1 gives a positive rate.
pub fn critical_visibility(d: usize, k: usize) -> Result<f64> {
    SubspaceLayout::new(d, k)?;
    if k == 1 {
        return Ok(1.0);
    }
    let f = |v: f64| iso_keyrate_closed_form(d, v, k).map(|r| r.signed);
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-6);
    if f(lo)? > 0.0 {
        return Ok(lo);
    }
    if f(hi)? <= 0.0 {
        return Ok(1.0);
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

//! Data series for key rate versus noise (time-bin encoding) and key rate
//! versus dimension (spatial encoding).

use crate::error::{check_positive, Error, Result};
use crate::keyrate::iso_keyrate_closed_form;
use crate::noise::spatial::{self, SpatialParams};
use crate::noise::temporal::{self, TemporalParams};
use crate::noise::PartyNoise;
use crate::quantum::{divisors, SubspaceLayout};

/// Expands a dimension list and an optional subspace list into `(d, k)` pairs.
/// Without `ks`, every divisor `k >= 2` of each `d` is used.
pub fn grid_pairs(ds: &[usize], ks: Option<&[usize]>) -> Result<Vec<(usize, usize)>> {
    if ds.is_empty() {
        return Err(Error::InvalidParameter("empty dimension list".into()));
    }
    let mut out = Vec::new();
    for &d in ds {
        match ks {
            Some(ks) => {
                if ks.is_empty() {
                    return Err(Error::InvalidParameter("empty subspace list".into()));
                }
                for &k in ks {
                    SubspaceLayout::new(d, k)?;
                    out.push((d, k));
                }
            }
            None => {
                SubspaceLayout::new(d, 1)?;
                out.extend(divisors(d).into_iter().filter(|&k| k >= 2).map(|k| (d, k)));
            }
        }
    }
    Ok(out)
}

/// Time-bin sweep over the environment rate at fixed bin width and
/// detected-pair rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig1Config {
    pub bin_width: f64,
    /// Detected-pair rate `gamma` (1/s).
    pub gamma: f64,
    /// Party template; its `env_rate` is replaced by the swept value.
    pub party: PartyNoise,
    pub nu_max: f64,
    pub points: usize,
}

impl Fig1Config {
    pub fn validate(&self) -> Result<()> {
        check_positive("t_b", self.bin_width)?;
        check_positive("gamma", self.gamma)?;
        self.party.validate()?;
        if self.party.detect_prob() <= 0.0 {
            return Err(Error::DegenerateSignal);
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("need at least 2 sweep points".into()));
        }
        if !(self.nu_max > 0.0 && self.nu_max.is_finite()) {
            return Err(Error::OutOfRange {
                name: "nu_max",
                value: self.nu_max,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    /// Pair rate giving the configured `gamma`.
    pub fn pair_rate(&self) -> f64 {
        self.gamma / self.party.detect_prob().powi(2)
    }

    pub fn params(&self, nu: f64) -> TemporalParams {
        let party = PartyNoise {
            env_rate: nu,
            ..self.party
        };
        TemporalParams::symmetric(self.pair_rate(), party, self.bin_width)
    }

    pub fn nu_grid(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n).map(|i| self.nu_max * i as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig1Point {
    pub d: usize,
    pub k: usize,
    pub nu: f64,
    pub nsr: f64,
    pub visibility: f64,
    pub frame_rate: f64,
    /// Bits per second.
    pub key_signed: f64,
    pub key_clamped: f64,
}

fn fig1_point(cfg: &Fig1Config, d: usize, k: usize, nu: f64) -> Result<Fig1Point> {
    let params = cfg.params(nu);
    let c = temporal::derive_constants(&params)?;
    let v = temporal::visibility(d, &c, params.bin_width)?;
    let rate = temporal::frame_rate(d, &c, params.bin_width);
    let key = iso_keyrate_closed_form(d, v, k)?;
    Ok(Fig1Point {
        d,
        k,
        nu,
        nsr: temporal::noise_to_signal(&c).ratio,
        visibility: v,
        frame_rate: rate,
        key_signed: rate * key.signed,
        key_clamped: rate * key.clamped,
    })
}

pub fn fig1_series(cfg: &Fig1Config, pairs: &[(usize, usize)]) -> Result<Vec<Fig1Point>> {
    cfg.validate()?;
    let grid = cfg.nu_grid();
    let mut out = Vec::with_capacity(pairs.len() * grid.len());
    for &(d, k) in pairs {
        for &nu in &grid {
            out.push(fig1_point(cfg, d, k, nu)?);
        }
    }
    Ok(out)
}

/// Noise-to-signal ratio at which the key rate reaches zero, found by
/// bisection over the environment rate. `None` if the rate is not positive
/// even without environment photons.
pub fn fig1_endpoint(cfg: &Fig1Config, d: usize, k: usize) -> Result<Option<f64>> {
    cfg.validate()?;
    SubspaceLayout::new(d, k)?;
    let positive = |nu: f64| fig1_point(cfg, d, k, nu).map(|p| p.key_signed > 0.0);
    if !positive(0.0)? {
        return Ok(None);
    }
    let mut hi = cfg.gamma.max(1.0);
    while positive(hi)? {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::InvalidParameter("key rate never vanishes".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if positive(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(Some(fig1_point(cfg, d, k, 0.5 * (lo + hi))?.nsr))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Point {
    pub d: usize,
    pub k: usize,
    pub visibility: f64,
    pub round_rate: f64,
    /// Bits per second.
    pub key_signed: f64,
    pub key_clamped: f64,
}

pub fn fig2_series(params: &SpatialParams, pairs: &[(usize, usize)]) -> Result<Vec<Fig2Point>> {
    let c = spatial::derive_constants(params)?;
    pairs
        .iter()
        .map(|&(d, k)| {
            let v = spatial::visibility(d, &c, params.window)?;
            let rate = spatial::round_rate(d, &c, params.window);
            let key = iso_keyrate_closed_form(d, v, k)?;
            Ok(Fig2Point {
                d,
                k,
                visibility: v,
                round_rate: rate,
                key_signed: rate * key.signed,
                key_clamped: rate * key.clamped,
            })
        })
        .collect()
}

/// Dimensions `2..=64` with every divisor `k >= 2`.
pub fn fig2_default_pairs() -> Vec<(usize, usize)> {
    let ds: Vec<usize> = (2..=64).collect();
    grid_pairs(&ds, None).expect("static grid")
}

/// Point with the largest clamped key rate among those with dimension `d`.
pub fn best_subspace(points: &[Fig2Point], d: usize) -> Option<&Fig2Point> {
    points
        .iter()
        .filter(|p| p.d == d)
        .max_by(|a, b| a.key_clamped.total_cmp(&b.key_clamped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> Fig1Config {
        Fig1Config {
            bin_width: 1e-9,
            gamma: 9e4,
            party: PartyNoise {
                env_rate: 0.0,
                dark_rate: 100.0,
                loss: 0.5,
                efficiency: 0.6,
            },
            nu_max: 1e8,
            points: 11,
        }
    }

    #[test]
    fn grid_expansion() {
        assert_eq!(grid_pairs(&[6], None).unwrap(), vec![(6, 2), (6, 3), (6, 6)]);
        assert!(matches!(
            grid_pairs(&[6], Some(&[4])),
            Err(Error::IndivisibleLayout { d: 6, k: 4 })
        ));
        assert!(grid_pairs(&[], None).is_err());
    }

    #[test]
    fn fig1_rejects_missing_signal() {
        let mut cfg = fig1();
        cfg.gamma = 0.0;
        assert!(fig1_series(&cfg, &[(2, 2)]).is_err());
    }

    #[test]
    fn fig1_nsr_increases_along_sweep() {
        let pts = fig1_series(&fig1(), &[(4, 2)]).unwrap();
        assert_eq!(pts.len(), 11);
        for w in pts.windows(2) {
            assert!(w[1].nsr > w[0].nsr);
            assert!(w[1].key_signed < w[0].key_signed);
        }
    }

    #[test]
    fn fig1_endpoints() {
        let cfg = fig1();
        let e2: Vec<f64> = [2usize, 4, 8]
            .iter()
            .map(|&d| fig1_endpoint(&cfg, d, 2).unwrap().unwrap())
            .collect();
        for e in &e2 {
            assert!((e - e2[0]).abs() < 1e-6);
        }
        for (d, k) in [(4usize, 4usize), (8, 4), (8, 8)] {
            let e = fig1_endpoint(&cfg, d, k).unwrap().unwrap();
            assert!(e < e2[0]);
        }
    }

    #[test]
    fn fig2_shape() {
        let p = SpatialParams::fig2();
        let pts = fig2_series(&p, &fig2_default_pairs()).unwrap();
        let best8 = best_subspace(&pts, 8).unwrap();
        assert!(best8.k > 2 && best8.k < 8);
        let full64 = pts.iter().find(|q| q.d == 64 && q.k == 64).unwrap();
        assert!(best_subspace(&pts, 64).unwrap().key_clamped > full64.key_clamped);
    }
}

//! Time-bin encoding: a frame of `d` bins of width `t_b` carries one symbol.

use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::keyrate::iso_keyrate_closed_form;
use crate::noise::PartyNoise;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalParams {
    /// Pair production rate `lambda` (1/s).
    pub pair_rate: f64,
    pub alice: PartyNoise,
    pub bob: PartyNoise,
    /// Bin width `t_b` (s).
    pub bin_width: f64,
}

impl TemporalParams {
    pub fn symmetric(pair_rate: f64, party: PartyNoise, bin_width: f64) -> Self {
        Self {
            pair_rate,
            alice: party,
            bob: party,
            bin_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("lambda", self.pair_rate)?;
        check_positive("t_b", self.bin_width)?;
        self.alice.validate()?;
        self.bob.validate()
    }

    pub fn frame(&self, d: usize) -> f64 {
        d as f64 * self.bin_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalDerived {
    /// `S = 1 - P_C + P_C P_L` per party.
    pub miss_a: f64,
    pub miss_b: f64,
    /// `Q = mu + nu P_C` per party (1/s).
    pub noise_a: f64,
    pub noise_b: f64,
    /// `T_A = Q_A + lambda S_B (1 - S_A)` and symmetric (1/s).
    pub singles_a: f64,
    pub singles_b: f64,
    /// Rate of pairs detected on both sides (1/s).
    pub gamma: f64,
}

pub fn derive_constants(params: &TemporalParams) -> Result<TemporalDerived> {
    params.validate()?;
    let (a, b, lambda) = (&params.alice, &params.bob, params.pair_rate);
    let (miss_a, miss_b) = (a.miss_prob(), b.miss_prob());
    let noise_a = a.dark_rate + a.env_rate * a.efficiency;
    let noise_b = b.dark_rate + b.env_rate * b.efficiency;
    Ok(TemporalDerived {
        miss_a,
        miss_b,
        noise_a,
        noise_b,
        singles_a: noise_a + lambda * miss_b * (1.0 - miss_a),
        singles_b: noise_b + lambda * miss_a * (1.0 - miss_b),
        gamma: lambda * (1.0 - miss_a) * (1.0 - miss_b),
    })
}

/// `v = 1 / (1 + F T_A T_B / gamma)` with `F = d t_b`.
pub fn visibility(d: usize, derived: &TemporalDerived, bin_width: f64) -> Result<f64> {
    if derived.gamma <= 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let f = d as f64 * bin_width;
    Ok(1.0 / (1.0 + f * derived.singles_a * derived.singles_b / derived.gamma))
}

/// Post-selected frames per second, `P(11) / F`.
pub fn frame_rate(d: usize, derived: &TemporalDerived, bin_width: f64) -> f64 {
    let f = d as f64 * bin_width;
    let (ta, tb, g) = (derived.singles_a, derived.singles_b, derived.gamma);
    (-f * (ta + tb + g)).exp() * (f * ta * tb + g)
}

/// Probability that a frame has exactly one click on each side.
pub fn coincidence_probability(d: usize, derived: &TemporalDerived, bin_width: f64) -> f64 {
    frame_rate(d, derived, bin_width) * d as f64 * bin_width
}

/// Probability that a frame holds a single click per side, both from one pair.
pub fn success_probability(d: usize, derived: &TemporalDerived, bin_width: f64) -> f64 {
    let f = d as f64 * bin_width;
    let (ta, tb, g) = (derived.singles_a, derived.singles_b, derived.gamma);
    (-f * (ta + tb + g)).exp() * g * f
}

/// Secret bits per second for encoding dimension `d` and subspace size `k`.
pub fn secret_bits_per_second(
    d: usize,
    k: usize,
    params: &TemporalParams,
    clamp: bool,
) -> Result<f64> {
    let derived = derive_constants(params)?;
    let v = visibility(d, &derived, params.bin_width)?;
    let rate = frame_rate(d, &derived, params.bin_width);
    Ok(rate * iso_keyrate_closed_form(d, v, k)?.value(clamp))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseToSignal {
    pub ratio: f64,
    /// Set when `T_A != T_B`; the larger one is used.
    pub asymmetric: bool,
}

/// `T / (T + gamma)`.
pub fn noise_to_signal(derived: &TemporalDerived) -> NoiseToSignal {
    let t = derived.singles_a.max(derived.singles_b);
    let asymmetric =
        (derived.singles_a - derived.singles_b).abs() > 1e-12 * t.max(f64::MIN_POSITIVE);
    let ratio = if t + derived.gamma > 0.0 {
        t / (t + derived.gamma)
    } else {
        0.0
    };
    NoiseToSignal { ratio, asymmetric }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiphotonCheck {
    /// Mean number of pairs per frame.
    pub lambda_f: f64,
    /// `P(n >= 2) = 1 - (1 + lambda F) e^{-lambda F}`.
    pub p_multi: f64,
    pub pass: bool,
}

pub const MULTIPHOTON_LIMIT: f64 = 0.2;

pub fn validate_multiphoton_assumption(params: &TemporalParams, d: usize) -> MultiphotonCheck {
    let lambda_f = params.pair_rate * params.frame(d);
    MultiphotonCheck {
        lambda_f,
        p_multi: -(-lambda_f).exp_m1() - lambda_f * (-lambda_f).exp(),
        pass: lambda_f < MULTIPHOTON_LIMIT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePairApprox {
    pub coincidence_probability: f64,
    pub frame_rate: f64,
    pub visibility: f64,
}

/// Coincidence statistics keeping at most one pair per frame.
pub fn single_pair_approximation(d: usize, params: &TemporalParams) -> Result<SinglePairApprox> {
    params.validate()?;
    let f = params.frame(d);
    let lambda = params.pair_rate;
    let q = |p: &PartyNoise| p.dark_rate + p.env_rate * p.efficiency;
    let alpha = |p: &PartyNoise| {
        let q = q(p);
        p.detect_prob() + f * q * p.loss + f * q * (1.0 - p.efficiency) * (1.0 - p.loss)
    };
    let (a, b) = (&params.alice, &params.bob);
    let beta = lambda * alpha(a) * alpha(b) + f * q(a) * q(b);
    let p11 = (-(q(a) + q(b) + lambda) * f).exp() * f * beta;
    if beta <= 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(SinglePairApprox {
        coincidence_probability: p11,
        frame_rate: p11 / f,
        visibility: lambda * a.detect_prob() * b.detect_prob() / beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn party(nu: f64, mu: f64, pl: f64, pc: f64) -> PartyNoise {
        PartyNoise {
            env_rate: nu,
            dark_rate: mu,
            loss: pl,
            efficiency: pc,
        }
    }

    #[test]
    fn derived_constants_examples() {
        let p = TemporalParams::symmetric(1e5, party(300.0, 20.0, 0.0, 1.0), 1e-9);
        let c = derive_constants(&p).unwrap();
        assert_eq!((c.miss_a, c.miss_b), (0.0, 0.0));
        assert_eq!(c.singles_a, 320.0);
        assert_eq!(c.gamma, 1e5);

        let p = TemporalParams::symmetric(1e5, party(300.0, 20.0, 0.1, 0.0), 1e-9);
        assert_eq!(derive_constants(&p).unwrap().gamma, 0.0);

        let c = derive_constants(&TemporalParams::symmetric(
            1e5,
            party(0.0, 0.0, 0.984, 0.6),
            1e-9,
        ))
        .unwrap();
        assert_abs_diff_eq!(c.miss_a, 0.9904, epsilon = 1e-12);
    }

    #[test]
    fn visibility_examples() {
        let mut c = TemporalDerived {
            miss_a: 0.0,
            miss_b: 0.0,
            noise_a: 0.0,
            noise_b: 0.0,
            singles_a: 0.0,
            singles_b: 0.0,
            gamma: 10.0,
        };
        assert_eq!(visibility(4, &c, 1e-3).unwrap(), 1.0);
        c.singles_a = 50.0;
        c.singles_b = 50.0;
        // F T^2 / gamma = 4e-3 * 2500 / 10 = 1
        assert_abs_diff_eq!(visibility(4, &c, 1e-3).unwrap(), 0.5, epsilon = 1e-15);
        c.gamma = 0.0;
        assert_eq!(visibility(4, &c, 1e-3), Err(Error::DegenerateSignal));
    }

    #[test]
    fn frame_rate_examples() {
        let p = TemporalParams::symmetric(0.0, party(0.0, 0.0, 0.0, 1.0), 1e-9);
        let c = derive_constants(&p).unwrap();
        assert_eq!(frame_rate(8, &c, 1e-9), 0.0);

        // The success probability peaks at F = 1 / (T_A + T_B + gamma).
        let p = TemporalParams::symmetric(1e6, party(2e5, 1e3, 0.5, 0.6), 1e-8);
        let c = derive_constants(&p).unwrap();
        let total = c.singles_a + c.singles_b + c.gamma;
        let at = |f: f64| success_probability(1, &c, f);
        let best = 1.0 / total;
        assert!(at(best) > at(best * 0.99) && at(best) > at(best * 1.01));
    }

    #[test]
    fn noiseless_secret_rate() {
        let (lambda, tb) = (1e6, 1e-9);
        let p = TemporalParams::symmetric(lambda, PartyNoise::ideal(), tb);
        for (d, k) in [(4usize, 2usize), (8, 8), (16, 4)] {
            let r = secret_bits_per_second(d, k, &p, true).unwrap();
            let expect = lambda * (-(d as f64) * tb * lambda).exp() * (k as f64).log2();
            assert_abs_diff_eq!(r, expect, epsilon = 1e-9 * expect);
        }
    }

    #[test]
    fn below_threshold_rate_is_zero() {
        let p = TemporalParams::symmetric(1e6, party(5e7, 1e3, 0.5, 0.6), 1e-8);
        let c = derive_constants(&p).unwrap();
        let v = visibility(8, &c, p.bin_width).unwrap();
        assert!(v < crate::keyrate::critical_visibility(8, 8).unwrap());
        assert_eq!(secret_bits_per_second(8, 8, &p, true).unwrap(), 0.0);
        assert!(secret_bits_per_second(8, 8, &p, false).unwrap() < 0.0);
    }

    #[test]
    fn noise_to_signal_examples() {
        let mut c = derive_constants(&TemporalParams::symmetric(1.0, PartyNoise::ideal(), 1.0)).unwrap();
        assert_eq!(noise_to_signal(&c).ratio, 0.0);
        c.singles_a = c.gamma;
        c.singles_b = c.gamma;
        let n = noise_to_signal(&c);
        assert_eq!((n.ratio, n.asymmetric), (0.5, false));
        c.singles_b = 0.0;
        assert!(noise_to_signal(&c).asymmetric);

        let mut prev = -1.0;
        for i in 0..50 {
            let nu = 1e4 * i as f64;
            let p = TemporalParams::symmetric(1e6, party(nu, 100.0, 0.5, 0.6), 1e-9);
            let r = noise_to_signal(&derive_constants(&p).unwrap()).ratio;
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn multiphoton_examples() {
        let at = |lf: f64| {
            let p = TemporalParams::symmetric(lf, PartyNoise::ideal(), 1.0);
            validate_multiphoton_assumption(&p, 1)
        };
        let c = at(0.2);
        assert_abs_diff_eq!(c.p_multi, 1.0 - 1.2 * (-0.2f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(c.p_multi, 0.0175, epsilon = 1e-4);
        assert!(!c.pass);
        assert_eq!(at(0.0).p_multi, 0.0);
        let c = at(0.1);
        assert_abs_diff_eq!(c.p_multi, 0.00468, epsilon = 1e-5);
        assert!(c.pass);
    }

    #[test]
    fn visibility_decreases_with_dimension() {
        let p = TemporalParams::symmetric(1e6, party(1e5, 1e3, 0.5, 0.6), 1e-9);
        let c = derive_constants(&p).unwrap();
        let mut prev = 2.0;
        for d in 1..200 {
            let v = visibility(d, &c, p.bin_width).unwrap();
            assert!(v < prev);
            assert!(frame_rate(d, &c, p.bin_width) > 0.0);
            prev = v;
        }
        assert!(frame_rate(1 << 30, &c, p.bin_width) < 1e-6);
    }

    #[test]
    fn inverse_square_scaling_when_pair_rate_tracks_frame() {
        // lambda = 0.1 / F keeps the mean pair number per frame fixed.
        let base = party(1e7, 1e4, 0.5, 0.6);
        let v_at = |d: usize| {
            let tb = 1e-9;
            let p = TemporalParams::symmetric(0.1 / (d as f64 * tb), base, tb);
            let c = derive_constants(&p).unwrap();
            visibility(d, &c, tb).unwrap()
        };
        for d in [256usize, 512, 1024] {
            let ratio = v_at(2 * d) / v_at(d);
            assert!((ratio / 0.25 - 1.0).abs() < 0.05, "d={d} ratio={ratio}");
        }
    }

    #[test]
    fn single_pair_approximation_agrees_at_low_pair_number() {
        let p = TemporalParams::symmetric(1e5, party(1e4, 100.0, 0.3, 0.7), 1e-9);
        let c = derive_constants(&p).unwrap();
        let approx = single_pair_approximation(16, &p).unwrap();
        let exact_v = visibility(16, &c, p.bin_width).unwrap();
        let exact_p = coincidence_probability(16, &c, p.bin_width);
        assert!((approx.visibility / exact_v - 1.0).abs() < 1e-2);
        assert!((approx.coincidence_probability / exact_p - 1.0).abs() < 1e-2);
    }
}

//! Spatial-mode encoding: `d` modes with one detector each, read out once per
//! coincidence window `dt`.

use crate::error::{check_non_negative, check_positive, check_probability, Error, Result};
use crate::keyrate::iso_keyrate_closed_form;
use crate::noise::PartyNoise;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialParams {
    /// Coincidence window `dt` (s).
    pub window: f64,
    /// Pair production rate `lambda` (1/s).
    pub pair_rate: f64,
    pub alice: PartyNoise,
    pub bob: PartyNoise,
    /// Probability that a pair falls inside the `d` encoded modes.
    pub projection_prob: f64,
}

impl SpatialParams {
    /// 60% efficient detectors, 600 dark counts/s, 21000 environment photons/s,
    /// a 100 ns window, 2e5 pairs/s and 98.4% loss on Bob's side.
    pub fn fig2() -> Self {
        let party = PartyNoise {
            env_rate: 21_000.0,
            dark_rate: 600.0,
            loss: 0.0,
            efficiency: 0.6,
        };
        Self {
            window: 1e-7,
            pair_rate: 2e5,
            alice: party,
            bob: PartyNoise {
                loss: 0.984,
                ..party
            },
            projection_prob: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("dt", self.window)?;
        check_non_negative("lambda", self.pair_rate)?;
        check_probability("P_P", self.projection_prob)?;
        self.alice.validate()?;
        self.bob.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialDerived {
    /// Rate of clicks uncorrelated with the other side (1/s).
    pub xi_a: f64,
    pub xi_b: f64,
    /// Rate of pairs detected on both sides (1/s).
    pub gamma: f64,
    /// Prefactor `e^{dt (mu_A + mu_B - xi_A - xi_B - gamma)} / dt` (1/s).
    pub c: f64,
    pub mu_a: f64,
    pub mu_b: f64,
}

pub fn derive_constants(params: &SpatialParams) -> Result<SpatialDerived> {
    params.validate()?;
    let (a, b) = (&params.alice, &params.bob);
    let pairs = params.projection_prob * params.pair_rate;
    let (ta, tb) = (a.detect_prob(), b.detect_prob());
    let xi_a = a.efficiency * a.env_rate + pairs * ta * (1.0 - tb);
    let xi_b = b.efficiency * b.env_rate + pairs * tb * (1.0 - ta);
    let gamma = pairs * ta * tb;
    let dt = params.window;
    Ok(SpatialDerived {
        xi_a,
        xi_b,
        gamma,
        c: (dt * (a.dark_rate + b.dark_rate - xi_a - xi_b - gamma)).exp() / dt,
        mu_a: a.dark_rate,
        mu_b: b.dark_rate,
    })
}

struct Exponents {
    /// `1 - e^{-dt (mu + xi / d)}` per side.
    fire_a: f64,
    fire_b: f64,
    /// `e^{dt gamma / d} - 1`.
    signal: f64,
}

fn exponents(d: usize, c: &SpatialDerived, dt: f64) -> Exponents {
    let df = d as f64;
    Exponents {
        fire_a: -(-dt * (c.mu_a + c.xi_a / df)).exp_m1(),
        fire_b: -(-dt * (c.mu_b + c.xi_b / df)).exp_m1(),
        signal: (dt * c.gamma / df).exp_m1(),
    }
}

pub fn visibility(d: usize, derived: &SpatialDerived, window: f64) -> Result<f64> {
    if derived.gamma <= 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let e = exponents(d, derived, window);
    Ok(e.signal / (e.signal + d as f64 * e.fire_a * e.fire_b))
}

/// Probability that each side has exactly one detector firing in a window.
pub fn coincidence_probability(d: usize, derived: &SpatialDerived, window: f64) -> f64 {
    let df = d as f64;
    let e = exponents(d, derived, window);
    let x = window * (derived.mu_a + derived.xi_a / df + derived.mu_b + derived.xi_b / df);
    df * (-(df - 1.0) * x - window * derived.gamma).exp()
        * (df * e.fire_a * e.fire_b + e.signal)
}

/// Probability of a coincidence where both clicks come from one pair.
pub fn success_probability(d: usize, derived: &SpatialDerived, window: f64) -> f64 {
    let df = d as f64;
    let e = exponents(d, derived, window);
    let x = window * (derived.mu_a + derived.xi_a / df + derived.mu_b + derived.xi_b / df);
    df * (-(df - 1.0) * x - window * derived.gamma).exp() * e.signal
}

/// Post-selected rounds per second.
pub fn round_rate(d: usize, derived: &SpatialDerived, window: f64) -> f64 {
    coincidence_probability(d, derived, window) / window
}

/// The same rate written with the `C` prefactor.
pub fn round_rate_prefactor_form(d: usize, derived: &SpatialDerived, window: f64) -> f64 {
    let df = d as f64;
    let e = exponents(d, derived, window);
    derived.c
        * (-df * window * (derived.mu_a + derived.mu_b)).exp()
        * (window * (derived.xi_a + derived.xi_b) / df).exp()
        * (df * df * e.fire_a * e.fire_b + df * e.signal)
}

pub fn secret_bits_per_second(
    d: usize,
    k: usize,
    params: &SpatialParams,
    clamp: bool,
) -> Result<f64> {
    let derived = derive_constants(params)?;
    let v = visibility(d, &derived, params.window)?;
    let rate = round_rate(d, &derived, params.window);
    Ok(rate * iso_keyrate_closed_form(d, v, k)?.value(clamp))
}

/// Per-party detection probabilities in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyEvents {
    /// No click from `j` source photons.
    pub p0: f64,
    /// Source photons fire exactly one detector.
    pub p1: f64,
    /// `P_D(n, d)` for `n = 0..=d`.
    pub dark: Vec<f64>,
    /// No dark count in the other `d - 1` detectors.
    pub dark_rest_silent: f64,
    /// No environment click outside an already fired detector.
    pub env_rest_silent: f64,
    /// Environment photons fire exactly one detector.
    pub env_one: f64,
    /// Exactly one detector fires in total.
    pub single_click: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventProbabilities {
    pub alice: PartyEvents,
    pub bob: PartyEvents,
    /// Both sides fire one detector from source photons, same mode.
    pub same: f64,
    /// Both sides fire one detector from source photons, different modes.
    pub different: f64,
}

pub fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn p_none(j: usize, party: &PartyNoise) -> f64 {
    (1.0 - party.detect_prob()).powi(j as i32)
}

pub fn p_single(j: usize, d: usize, party: &PartyNoise) -> f64 {
    let t = party.detect_prob();
    let df = d as f64;
    df * ((1.0 - t + t / df).powi(j as i32) - (1.0 - t).powi(j as i32))
}

fn joint_terms(j: usize, d: usize, a: &PartyNoise, b: &PartyNoise) -> [f64; 4] {
    let (ta, tb) = (a.detect_prob(), b.detect_prob());
    let df = d as f64;
    let j = j as i32;
    [
        ((1.0 - ta) * (1.0 - tb)).powi(j),
        ((1.0 - ta + ta / df) * (1.0 - tb)).powi(j),
        ((1.0 - ta) * (1.0 - tb + tb / df)).powi(j),
        (1.0 - ta) * (1.0 - tb),
    ]
}

pub fn p_same(j: usize, d: usize, a: &PartyNoise, b: &PartyNoise) -> f64 {
    let (ta, tb) = (a.detect_prob(), b.detect_prob());
    let [none, only_a, only_b, base] = joint_terms(j, d, a, b);
    let mixed = base + (ta * (1.0 - tb) + tb * (1.0 - ta) + ta * tb) / d as f64;
    d as f64 * (none + mixed.powi(j as i32) - only_a - only_b)
}

pub fn p_different(j: usize, d: usize, a: &PartyNoise, b: &PartyNoise) -> f64 {
    let (ta, tb) = (a.detect_prob(), b.detect_prob());
    let [none, only_a, only_b, base] = joint_terms(j, d, a, b);
    let mixed = base + (ta * (1.0 - tb) + tb * (1.0 - ta)) / d as f64;
    let df = d as f64;
    df * (df - 1.0) * (none + mixed.powi(j as i32) - only_a - only_b)
}

pub fn p_dark(n: usize, d: usize, dark_rate: f64, window: f64) -> f64 {
    let silent = (-window * dark_rate).exp();
    binomial(d, n) * silent.powi((d - n.min(d)) as i32) * (1.0 - silent).powi(n as i32)
}

pub fn p_env_rest_silent(d: usize, party: &PartyNoise, window: f64) -> f64 {
    let df = d as f64;
    (-party.efficiency * party.env_rate * window * (df - 1.0) / df).exp()
}

pub fn p_env_one(d: usize, party: &PartyNoise, window: f64) -> f64 {
    let df = d as f64;
    df * p_env_rest_silent(d, party, window)
        * -(-party.efficiency * party.env_rate * window / df).exp_m1()
}

fn party_events(j: usize, d: usize, party: &PartyNoise, window: f64) -> PartyEvents {
    let dark: Vec<f64> = (0..=d)
        .map(|n| p_dark(n, d, party.dark_rate, window))
        .collect();
    let df = d as f64;
    let dark_rest_silent = dark.get(1).copied().unwrap_or(0.0) / df + dark[0];
    let env_rest_silent = p_env_rest_silent(d, party, window);
    let t = party.detect_prob();
    let single_click = df
        * dark_rest_silent
        * env_rest_silent
        * ((1.0 - t + t / df).powi(j as i32)
            - (1.0 - t).powi(j as i32)
                * (-window * (party.dark_rate + party.efficiency * party.env_rate / df)).exp());
    PartyEvents {
        p0: p_none(j, party),
        p1: p_single(j, d, party),
        dark,
        dark_rest_silent,
        env_rest_silent,
        env_one: p_env_one(d, party, window),
        single_click,
    }
}

pub fn event_probabilities(j: usize, d: usize, params: &SpatialParams) -> Result<EventProbabilities> {
    params.validate()?;
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    let (a, b, dt) = (&params.alice, &params.bob, params.window);
    Ok(EventProbabilities {
        alice: party_events(j, d, a, dt),
        bob: party_events(j, d, b, dt),
        same: p_same(j, d, a, b),
        different: if d >= 2 { p_different(j, d, a, b) } else { 0.0 },
    })
}

/// Term-by-term sums over photon fates, exponential in `j`. Used to check the
/// closed forms.
pub mod nested {
    use super::binomial;
    use crate::noise::PartyNoise;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    fn multinomial(parts: &[usize]) -> f64 {
        factorial(parts.iter().sum()) / parts.iter().map(|&p| factorial(p)).product::<f64>()
    }

    pub fn p_none(j: usize, party: &PartyNoise) -> f64 {
        let (pl, pc) = (party.loss, party.efficiency);
        (0..=j)
            .map(|r| {
                pl.powi((j - r) as i32)
                    * (1.0 - pl).powi(r as i32)
                    * binomial(j, r)
                    * (1.0 - pc).powi(r as i32)
            })
            .sum()
    }

    pub fn p_single(j: usize, d: usize, party: &PartyNoise) -> f64 {
        let (pl, pc) = (party.loss, party.efficiency);
        let df = d as f64;
        let mut total = 0.0;
        for r1 in 1..=j {
            let arrive = pl.powi((j - r1) as i32) * (1.0 - pl).powi(r1 as i32) * binomial(j, r1);
            for r2 in 1..=r1 {
                total += arrive
                    * ((df - 1.0) / df * (1.0 - pc)).powi((r1 - r2) as i32)
                    * (1.0 / df).powi(r2 as i32)
                    * (1.0 - (1.0 - pc).powi(r2 as i32))
                    * df
                    * binomial(r1, r2);
            }
        }
        total
    }

    /// Loops over `(r0, r1, r2, r3)`: photons lost on both sides, arriving
    /// only at Alice, only at Bob, and at both.
    fn fates(j: usize, a: &PartyNoise, b: &PartyNoise, mut f: impl FnMut(usize, usize, usize, f64)) {
        let (la, lb) = (a.loss, b.loss);
        for r0 in 0..j {
            for r1 in 0..=j - r0 {
                for r2 in 0..=j - r0 - r1 {
                    let r3 = j - r0 - r1 - r2;
                    let w = multinomial(&[r0, r1, r2, r3])
                        * (la * lb).powi(r0 as i32)
                        * (lb * (1.0 - la)).powi(r1 as i32)
                        * (la * (1.0 - lb)).powi(r2 as i32)
                        * ((1.0 - la) * (1.0 - lb)).powi(r3 as i32);
                    f(r1, r2, r3, w);
                }
            }
        }
    }

    fn one_side(r: usize, l: usize, d: f64, pc: f64) -> f64 {
        ((d - 1.0) / d).powi((r - l) as i32)
            * (1.0 - pc).powi((r - l) as i32)
            * (1.0 / d).powi(l as i32)
            * binomial(r, l)
    }

    pub fn p_same(j: usize, d: usize, a: &PartyNoise, b: &PartyNoise) -> f64 {
        let (ca, cb) = (a.efficiency, b.efficiency);
        let df = d as f64;
        let mut total = 0.0;
        fates(j, a, b, |r1, r2, r3, w| {
            for l1 in 0..=r1 {
                let a1 = one_side(r1, l1, df, ca);
                for l2 in 0..=r2 {
                    let a2 = one_side(r2, l2, df, cb);
                    for l3 in 0..=r3 {
                        let a3 = ((df - 1.0) / df).powi((r3 - l3) as i32)
                            * (1.0 / df).powi(l3 as i32)
                            * ((1.0 - ca) * (1.0 - cb)).powi((r3 - l3) as i32)
                            * binomial(r3, l3);
                        total += w
                            * a1
                            * a2
                            * a3
                            * (1.0 - (1.0 - ca).powi((l1 + l3) as i32))
                            * (1.0 - (1.0 - cb).powi((l2 + l3) as i32));
                    }
                }
            }
        });
        df * total
    }

    pub fn p_different(j: usize, d: usize, a: &PartyNoise, b: &PartyNoise) -> f64 {
        let (ca, cb) = (a.efficiency, b.efficiency);
        let df = d as f64;
        let mut total = 0.0;
        fates(j, a, b, |r1, r2, r3, w| {
            for l1 in 0..=r1 {
                let a1 = one_side(r1, l1, df, ca);
                for l2 in 0..=r2 {
                    let a2 = one_side(r2, l2, df, cb);
                    for s3 in 0..=r3 {
                        for p3 in 0..=r3 - s3 {
                            let q3 = r3 - s3 - p3;
                            let a3 = (1.0 / df).powi((s3 + p3) as i32)
                                * ((df - 2.0) / df).powi(q3 as i32)
                                * multinomial(&[s3, p3, q3])
                                * (1.0 - cb).powi((s3 + q3) as i32)
                                * (1.0 - ca).powi((p3 + q3) as i32);
                            total += w
                                * a1
                                * a2
                                * a3
                                * (1.0 - (1.0 - ca).powi((l1 + s3) as i32))
                                * (1.0 - (1.0 - cb).powi((l2 + p3) as i32));
                        }
                    }
                }
            }
        });
        df * (df - 1.0) * total
    }

    /// Poisson average over environment photon number, truncated once the
    /// tail is below `1e-18`.
    pub fn p_env_one(d: usize, party: &PartyNoise, window: f64) -> f64 {
        let (pc, mean) = (party.efficiency, party.env_rate * window);
        let df = d as f64;
        let mut total = 0.0;
        let mut poisson = (-mean).exp();
        let mut mass = 0.0;
        let mut q = 0usize;
        while 1.0 - mass > 1e-18 && q < 10_000 {
            let mut inner = 0.0;
            for r in 1..=q {
                inner += ((df - 1.0) / df * (1.0 - pc)).powi((q - r) as i32)
                    * (1.0 / df).powi(r as i32)
                    * (1.0 - (1.0 - pc).powi(r as i32))
                    * binomial(q, r);
            }
            total += poisson * df * inner;
            mass += poisson;
            q += 1;
            poisson *= mean / q as f64;
        }
        total
    }
}

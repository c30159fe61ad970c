//! Event-level Monte Carlo of the photon-counting noise models.
//!
//! Trials are split into fixed-size chunks, each driven by its own ChaCha
//! stream keyed by `(seed, chunk index)`, so results do not depend on the
//! number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::spatial::SpatialParams;
use crate::noise::temporal::TemporalParams;
use crate::noise::PartyNoise;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub trials: u64,
    pub successes: u64,
    pub mean: f64,
    /// Binomial standard error `sqrt(mean (1 - mean) / trials)`.
    pub stderr: f64,
}

impl McEstimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(successes <= trials, "more successes than trials");
        if trials == 0 {
            return Self {
                trials,
                successes,
                mean: 0.0,
                stderr: 0.0,
            };
        }
        let mean = successes as f64 / trials as f64;
        Self {
            trials,
            successes,
            mean,
            stderr: (mean * (1.0 - mean) / trials as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McComparison {
    pub analytic: f64,
    pub empirical: McEstimate,
    pub z_score: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Differences within this are treated as agreement when the standard error
/// vanishes.
const EXACT_TOL: f64 = 1e-12;

pub fn compare_to_analytic(
    analytic: f64,
    empirical: &McEstimate,
    z_threshold: f64,
) -> Result<McComparison> {
    if empirical.trials == 0 {
        return Err(Error::EmptyEstimate);
    }
    let diff = empirical.mean - analytic;
    let z_score = if empirical.stderr > 0.0 {
        diff / empirical.stderr
    } else if diff.abs() <= EXACT_TOL {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    Ok(McComparison {
        analytic,
        empirical: *empirical,
        z_score,
        threshold: z_threshold,
        pass: z_score.abs() <= z_threshold,
    })
}

/// Post-selection rate and the share of post-selected trials that stem from
/// a single source pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOutcome {
    pub coincidence: McEstimate,
    pub visibility: McEstimate,
}

struct Poissonian(Option<Poisson<f64>>);

impl Poissonian {
    fn new(mean: f64) -> Result<Self> {
        if mean > 0.0 {
            Poisson::new(mean)
                .map(|p| Self(Some(p)))
                .map_err(|e| Error::InvalidParameter(format!("Poisson mean {mean}: {e}")))
        } else {
            Ok(Self(None))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        self.0.as_ref().map_or(0, |p| p.sample(rng) as u64)
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    trials: u64,
    coincident: u64,
    correlated: u64,
}

impl Tally {
    fn merge(self, other: Self) -> Self {
        Self {
            trials: self.trials + other.trials,
            coincident: self.coincident + other.coincident,
            correlated: self.correlated + other.correlated,
        }
    }

    fn outcome(self) -> McOutcome {
        McOutcome {
            coincidence: McEstimate::new(self.coincident, self.trials),
            visibility: McEstimate::new(self.correlated, self.coincident),
        }
    }
}

fn run_chunks<F>(n: u64, seed: u64, trial: F) -> McOutcome
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> (bool, bool) + Sync,
{
    let chunks: Vec<(u64, u64)> = rng::chunks(n).collect();
    chunks
        .into_par_iter()
        .map(|(index, len)| {
            let mut r = rng::stream(seed, index);
            let mut t = Tally {
                trials: len,
                ..Tally::default()
            };
            for _ in 0..len {
                let (hit, corr) = trial(&mut r);
                t.coincident += hit as u64;
                t.correlated += corr as u64;
            }
            t
        })
        .reduce(Tally::default, Tally::merge)
        .outcome()
}

struct TemporalSide {
    env: Poissonian,
    dark: Poissonian,
    detect: f64,
}

impl TemporalSide {
    fn new(p: &PartyNoise, frame: f64) -> Result<Self> {
        Ok(Self {
            env: Poissonian::new(p.env_rate * p.efficiency * frame)?,
            dark: Poissonian::new(p.dark_rate * frame)?,
            detect: p.detect_prob(),
        })
    }
}

/// Frames of length `d t_b`; a frame is kept when each side records exactly
/// one click.
pub fn simulate_temporal(
    params: &TemporalParams,
    d: usize,
    n_frames: u64,
    seed: u64,
) -> Result<McOutcome> {
    params.validate()?;
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if n_frames == 0 {
        return Err(Error::EmptyEstimate);
    }
    let frame = params.frame(d);
    let pairs = Poissonian::new(params.pair_rate * frame)?;
    let a = TemporalSide::new(&params.alice, frame)?;
    let b = TemporalSide::new(&params.bob, frame)?;
    Ok(run_chunks(n_frames, seed, |r| {
        let n = pairs.sample(r);
        let (mut clicks_a, mut clicks_b, mut both) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let ha = r.random::<f64>() < a.detect;
            let hb = r.random::<f64>() < b.detect;
            clicks_a += ha as u64;
            clicks_b += hb as u64;
            both += (ha && hb) as u64;
        }
        clicks_a += a.env.sample(r) + a.dark.sample(r);
        clicks_b += b.env.sample(r) + b.dark.sample(r);
        let kept = clicks_a == 1 && clicks_b == 1;
        (kept, kept && both == 1)
    }))
}

/// Detectors that fired on one side within a window.
#[derive(Default)]
struct Fired {
    mode: Option<usize>,
    several: bool,
}

impl Fired {
    fn fire(&mut self, mode: usize) {
        match self.mode {
            None => self.mode = Some(mode),
            Some(m) if m != mode => self.several = true,
            _ => {}
        }
    }

    fn single(&self) -> Option<usize> {
        if self.several {
            None
        } else {
            self.mode
        }
    }
}

struct SpatialSide {
    env: Poissonian,
    dark: Poissonian,
    detect: f64,
}

impl SpatialSide {
    fn new(p: &PartyNoise, d: usize, window: f64) -> Result<Self> {
        Ok(Self {
            env: Poissonian::new(p.env_rate * p.efficiency * window)?,
            dark: Poissonian::new(d as f64 * p.dark_rate * window)?,
            detect: p.detect_prob(),
        })
    }

    fn noise<R: Rng>(&self, r: &mut R, d: usize, fired: &mut Fired) {
        for _ in 0..self.env.sample(r) + self.dark.sample(r) {
            fired.fire(r.random_range(0..d));
        }
    }
}

/// Windows of length `dt`; pairs occupy the same mode index on both sides.
pub fn simulate_spatial(
    params: &SpatialParams,
    d: usize,
    n_windows: u64,
    seed: u64,
) -> Result<McOutcome> {
    params.validate()?;
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    if n_windows == 0 {
        return Err(Error::EmptyEstimate);
    }
    let dt = params.window;
    let pairs = Poissonian::new(params.pair_rate * dt)?;
    let a = SpatialSide::new(&params.alice, d, dt)?;
    let b = SpatialSide::new(&params.bob, d, dt)?;
    let pp = params.projection_prob;
    Ok(run_chunks(n_windows, seed, |r| {
        let (mut fa, mut fb) = (Fired::default(), Fired::default());
        let mut both = false;
        for _ in 0..pairs.sample(r) {
            if r.random::<f64>() >= pp {
                continue;
            }
            let mode = r.random_range(0..d);
            let ha = r.random::<f64>() < a.detect;
            let hb = r.random::<f64>() < b.detect;
            if ha {
                fa.fire(mode);
            }
            if hb {
                fb.fire(mode);
            }
            both |= ha && hb;
        }
        a.noise(r, d, &mut fa);
        b.noise(r, d, &mut fb);
        let kept = fa.single().is_some() && fb.single().is_some();
        // With one fired detector per side, a pair seen by both sits in it.
        (kept, kept && both)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{spatial, temporal};

    #[test]
    fn estimate_stderr() {
        let e = McEstimate::new(25, 100);
        assert_eq!(e.mean, 0.25);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn comparison_examples() {
        let e = McEstimate::new(500, 1000);
        let c = compare_to_analytic(0.5, &e, 4.0).unwrap();
        assert_eq!((c.z_score, c.pass), (0.0, true));
        let c = compare_to_analytic(0.5 - 10.0 * e.stderr, &e, 4.0).unwrap();
        assert!(!c.pass && (c.z_score - 10.0).abs() < 1e-9);

        let exact = McEstimate::new(10, 10);
        assert!(compare_to_analytic(1.0, &exact, 4.0).unwrap().pass);
        let c = compare_to_analytic(0.999, &exact, 4.0).unwrap();
        assert!(!c.pass && c.z_score.is_infinite());
        assert_eq!(
            compare_to_analytic(0.5, &McEstimate::new(0, 0), 4.0),
            Err(Error::EmptyEstimate)
        );
    }

    #[test]
    fn comparison_false_fail_fraction() {
        // Exact binomial draws around a known mean fail at |z| > 4 rarely.
        let p = 0.3;
        let mut fails = 0;
        for seed in 0..200u64 {
            let mut r = rng::stream(seed, 0);
            let n = 10_000u64;
            let s = (0..n).filter(|_| r.random::<f64>() < p).count() as u64;
            let c = compare_to_analytic(p, &McEstimate::new(s, n), 4.0).unwrap();
            fails += !c.pass as usize;
        }
        assert!(fails <= 1);
    }

    fn quiet() -> PartyNoise {
        PartyNoise::ideal()
    }

    #[test]
    fn temporal_without_sources_is_silent() {
        let p = TemporalParams::symmetric(0.0, quiet(), 1e-9);
        let o = simulate_temporal(&p, 8, 10_000, 1).unwrap();
        assert_eq!(o.coincidence.successes, 0);
    }

    #[test]
    fn temporal_noiseless_is_perfectly_correlated() {
        let p = TemporalParams::symmetric(1e6, quiet(), 1e-8);
        let o = simulate_temporal(&p, 4, 50_000, 2).unwrap();
        assert!(o.coincidence.successes > 0);
        assert_eq!(o.visibility.mean, 1.0);
    }

    #[test]
    fn temporal_is_deterministic_across_thread_counts() {
        let party = PartyNoise {
            env_rate: 1e6,
            dark_rate: 1e4,
            loss: 0.3,
            efficiency: 0.7,
        };
        let p = TemporalParams::symmetric(2e6, party, 1e-8);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_temporal(&p, 4, 100_000, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn temporal_matches_analytic_model() {
        let party = PartyNoise {
            env_rate: 2e6,
            dark_rate: 1e4,
            loss: 0.4,
            efficiency: 0.6,
        };
        let p = TemporalParams::symmetric(5e6, party, 1e-8);
        let c = temporal::derive_constants(&p).unwrap();
        let d = 4;
        let o = simulate_temporal(&p, d, 200_000, 3).unwrap();
        let v = temporal::visibility(d, &c, p.bin_width).unwrap();
        let p11 = temporal::coincidence_probability(d, &c, p.bin_width);
        assert!(compare_to_analytic(v, &o.visibility, 5.0).unwrap().pass);
        assert!(compare_to_analytic(p11, &o.coincidence, 5.0).unwrap().pass);
    }

    #[test]
    fn spatial_without_sources_is_silent() {
        let p = SpatialParams {
            window: 1e-7,
            pair_rate: 0.0,
            alice: quiet(),
            bob: quiet(),
            projection_prob: 1.0,
        };
        let o = simulate_spatial(&p, 4, 10_000, 1).unwrap();
        assert_eq!(o.coincidence.successes, 0);
    }

    #[test]
    fn spatial_noiseless_is_perfectly_correlated() {
        let p = SpatialParams {
            window: 1e-6,
            pair_rate: 2e5,
            alice: quiet(),
            bob: quiet(),
            projection_prob: 1.0,
        };
        let o = simulate_spatial(&p, 8, 50_000, 2).unwrap();
        assert!(o.coincidence.successes > 0);
        assert_eq!(o.visibility.mean, 1.0);
    }

    #[test]
    fn spatial_matches_analytic_model() {
        let mut p = SpatialParams::fig2();
        p.window = 2e-6;
        p.bob.loss = 0.5;
        let c = spatial::derive_constants(&p).unwrap();
        let d = 8;
        let o = simulate_spatial(&p, d, 200_000, 4).unwrap();
        let v = spatial::visibility(d, &c, p.window).unwrap();
        let p11 = spatial::coincidence_probability(d, &c, p.window);
        assert!(compare_to_analytic(v, &o.visibility, 5.0).unwrap().pass);
        assert!(compare_to_analytic(p11, &o.coincidence, 5.0).unwrap().pass);
    }
}

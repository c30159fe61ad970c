use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use subqkd_core::figures::{self, Fig1Config};
use subqkd_core::keyrate::{
    critical_visibility, iso_block_probability, iso_effective_visibility, iso_keyrate_closed_form,
    iso_witness,
};
use subqkd_core::mc::{compare_to_analytic, simulate_spatial, simulate_temporal, McEstimate};
use subqkd_core::noise::{spatial, temporal};
use subqkd_core::protocol::{asymptotic_rate_estimate, estimate_parameters, run_protocol};
use subqkd_core::quantum::{divisors, isotropic_state};
use subqkd_core::sdp::{closed_form_guessing, dual_certificate, primal_search, CertificateKind};
use subqkd_core::{PartyNoise, ProtocolConfig, SpatialParams, SubspaceLayout, TemporalParams};

use crate::args::{CommonArgs, FigureKind, Format, GridArgs, NoiseArgs, NoiseModel, SweepModel};
use crate::config::{parse_count, parse_f64_list, parse_usize_list, Settings};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Largest accepted primal gap in `sdp-verify`.
pub const SDP_GAP_LIMIT: f64 = 1e-3;
pub const MIN_MC_TRIALS: u64 = 10_000;

/// Table plus an optional reason for exiting with a failure status.
pub struct Report {
    pub table: Table,
    pub failure: Option<String>,
}

impl From<Table> for Report {
    fn from(table: Table) -> Self {
        Self {
            table,
            failure: None,
        }
    }
}

pub struct Context {
    pub settings: Settings,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub clamp: bool,
}

impl Context {
    pub fn new(common: &CommonArgs) -> Result<Self, CliError> {
        let settings = Settings::load(common.config.as_deref())?;
        let format = match common.format {
            Some(f) => f,
            None => match settings.raw("format") {
                None | Some("csv") => Format::Csv,
                Some("json") => Format::Json,
                Some(other) => {
                    return Err(CliError::Usage(format!("config key `format`: unknown `{other}`")))
                }
            },
        };
        let out = common
            .out
            .clone()
            .or_else(|| settings.raw("out").map(PathBuf::from));
        let seed = settings.get("seed", common.seed)?.unwrap_or(1);
        let clamp = if common.allow_negative {
            false
        } else if common.clamp {
            true
        } else {
            settings.get("clamp", None)?.unwrap_or(true)
        };
        Ok(Self {
            settings,
            format,
            out,
            seed,
            clamp,
        })
    }

    fn dims(&self, grid: &GridArgs, default: Option<&str>) -> Result<Vec<usize>, CliError> {
        let text = self
            .settings
            .text("d", grid.d.as_deref())
            .or(default.map(str::to_string))
            .ok_or_else(|| CliError::Usage("--d is required".into()))?;
        let ds = parse_usize_list("d", &text)?;
        if ds.contains(&0) {
            return Err(CliError::Usage("`d`: dimensions must be positive".into()));
        }
        Ok(ds)
    }

    /// `(d, k)` pairs; without `--k` every divisor `k >= min_k` of each `d`.
    fn pairs(
        &self,
        grid: &GridArgs,
        default_d: Option<&str>,
        min_k: usize,
    ) -> Result<Vec<(usize, usize)>, CliError> {
        let ds = self.dims(grid, default_d)?;
        match self.settings.text("k", grid.k.as_deref()) {
            Some(text) => {
                let ks = parse_usize_list("k", &text)?;
                let mut out = Vec::new();
                for &d in &ds {
                    for &k in &ks {
                        if k == 0 || d % k != 0 {
                            return Err(CliError::Usage(format!(
                                "subspace size k={k} does not divide d={d}"
                            )));
                        }
                        out.push((d, k));
                    }
                }
                Ok(out)
            }
            None => Ok(ds
                .iter()
                .flat_map(|&d| divisors(d).into_iter().filter(move |&k| k >= min_k).map(move |k| (d, k)))
                .collect()),
        }
    }

    fn value(&self, key: &str, flag: Option<f64>) -> Result<Option<f64>, CliError> {
        self.settings.get(key, flag)
    }

    fn required(&self, key: &str, flag: Option<f64>, what: &str) -> Result<f64, CliError> {
        self.value(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("{what} requires --{key}")))
    }

    /// Party-specific flag, shared flag, party-specific config entry, shared
    /// config entry, then `default`.
    fn party_value(
        &self,
        key: &str,
        side: char,
        specific: Option<f64>,
        shared: Option<f64>,
        default: f64,
    ) -> Result<f64, CliError> {
        if let Some(v) = specific.or(shared) {
            return Ok(v);
        }
        let own = format!("{key}-{side}");
        Ok(self
            .value(&own, None)?
            .or(self.value(key, None)?)
            .unwrap_or(default))
    }

    fn party(&self, n: &NoiseArgs, side: char, base: PartyNoise) -> Result<PartyNoise, CliError> {
        let pick = |a: Option<f64>, b: Option<f64>| if side == 'a' { a } else { b };
        Ok(PartyNoise {
            env_rate: self.party_value("nu", side, pick(n.nu_a, n.nu_b), n.nu, base.env_rate)?,
            dark_rate: self.party_value("mu", side, pick(n.mu_a, n.mu_b), n.mu, base.dark_rate)?,
            loss: self.party_value("pl", side, pick(n.pl_a, n.pl_b), n.pl, base.loss)?,
            efficiency: self.party_value("pc", side, pick(n.pc_a, n.pc_b), n.pc, base.efficiency)?,
        })
    }

    /// Ideal detectors unless overridden; pair rate and bin width are required.
    fn temporal(&self, n: &NoiseArgs, what: &str) -> Result<TemporalParams, CliError> {
        let p = TemporalParams {
            pair_rate: self.required("lambda", n.lambda, what)?,
            alice: self.party(n, 'a', PartyNoise::ideal())?,
            bob: self.party(n, 'b', PartyNoise::ideal())?,
            bin_width: self.required("tb", n.tb, what)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// The 100 ns, 2e5 pairs/s preset with any overrides applied.
    fn spatial(&self, n: &NoiseArgs) -> Result<SpatialParams, CliError> {
        let base = SpatialParams::fig2();
        let p = SpatialParams {
            window: self.value("dt", n.dt)?.unwrap_or(base.window),
            pair_rate: self.value("lambda", n.lambda)?.unwrap_or(base.pair_rate),
            alice: self.party(n, 'a', base.alice)?,
            bob: self.party(n, 'b', base.bob)?,
            projection_prob: self.value("pp", n.pp)?.unwrap_or(base.projection_prob),
        };
        p.validate()?;
        Ok(p)
    }

    fn count(&self, key: &str, flag: Option<&str>, default: u64) -> Result<u64, CliError> {
        Ok(self.settings.count(key, flag)?.unwrap_or(default))
    }
}

pub fn keyrate_iso(ctx: &Context, grid: &GridArgs, v: Option<&str>) -> Result<Report, CliError> {
    let pairs = ctx.pairs(grid, None, 1)?;
    let text = ctx
        .settings
        .text("v", v)
        .ok_or_else(|| CliError::Usage("--v is required".into()))?;
    let vs = parse_f64_list("v", &text)?;
    let mut t = Table::new(&[
        "d",
        "k",
        "v",
        "effective_visibility",
        "witness",
        "block_probability",
        "critical_visibility",
        "key_signed",
        "key_clamped",
        "key",
    ]);
    for &(d, k) in &pairs {
        let vc = critical_visibility(d, k)?;
        for &v in &vs {
            let r = iso_keyrate_closed_form(d, v, k)?;
            t.push(vec![
                d.into(),
                k.into(),
                v.into(),
                iso_effective_visibility(d, v, k)?.into(),
                iso_witness(d, v, k)?.into(),
                iso_block_probability(d, v, k)?.into(),
                vc.into(),
                r.signed.into(),
                r.clamped.into(),
                r.value(ctx.clamp).into(),
            ]);
        }
    }
    Ok(t.into())
}

pub fn keyrate_temporal(ctx: &Context, grid: &GridArgs, n: &NoiseArgs) -> Result<Report, CliError> {
    let pairs = ctx.pairs(grid, None, 1)?;
    let p = ctx.temporal(n, "keyrate-temporal")?;
    let c = temporal::derive_constants(&p)?;
    let nsr = temporal::noise_to_signal(&c).ratio;
    let mut t = Table::new(&[
        "d",
        "k",
        "frame_s",
        "lambda_f",
        "p_multi",
        "multiphoton_ok",
        "noise_to_signal",
        "visibility",
        "visibility_single_pair",
        "coincidence_probability",
        "frame_rate",
        "key_per_frame_signed",
        "key_rate",
    ]);
    for &(d, k) in &pairs {
        let check = temporal::validate_multiphoton_assumption(&p, d);
        let v = temporal::visibility(d, &c, p.bin_width)?;
        let approx = temporal::single_pair_approximation(d, &p)?;
        let rate = temporal::frame_rate(d, &c, p.bin_width);
        let key = iso_keyrate_closed_form(d, v, k)?;
        t.push(vec![
            d.into(),
            k.into(),
            p.frame(d).into(),
            check.lambda_f.into(),
            check.p_multi.into(),
            check.pass.into(),
            nsr.into(),
            v.into(),
            approx.visibility.into(),
            temporal::coincidence_probability(d, &c, p.bin_width).into(),
            rate.into(),
            key.signed.into(),
            (rate * key.value(ctx.clamp)).into(),
        ]);
    }
    Ok(t.into())
}

pub fn keyrate_spatial(ctx: &Context, grid: &GridArgs, n: &NoiseArgs) -> Result<Report, CliError> {
    let pairs = ctx.pairs(grid, None, 1)?;
    let p = ctx.spatial(n)?;
    let c = spatial::derive_constants(&p)?;
    let mut t = Table::new(&[
        "d",
        "k",
        "visibility",
        "coincidence_probability",
        "round_rate",
        "key_per_round_signed",
        "key_rate",
    ]);
    for &(d, k) in &pairs {
        let v = spatial::visibility(d, &c, p.window)?;
        let rate = spatial::round_rate(d, &c, p.window);
        let key = iso_keyrate_closed_form(d, v, k)?;
        t.push(vec![
            d.into(),
            k.into(),
            v.into(),
            spatial::coincidence_probability(d, &c, p.window).into(),
            rate.into(),
            key.signed.into(),
            (rate * key.value(ctx.clamp)).into(),
        ]);
    }
    Ok(t.into())
}

fn nu_grid(ctx: &Context, n: &NoiseArgs, what: &str, default_points: usize) -> Result<Vec<f64>, CliError> {
    let nu_max = ctx.required("nu-max", n.nu_max, what)?;
    let points = ctx.settings.get("points", n.points)?.unwrap_or(default_points);
    if points < 2 || !(nu_max > 0.0 && nu_max.is_finite()) {
        return Err(CliError::Usage(format!("{what}: need --points >= 2 and --nu-max > 0")));
    }
    Ok((0..points)
        .map(|i| nu_max * i as f64 / (points - 1) as f64)
        .collect())
}

fn with_env(party: PartyNoise, nu: f64) -> PartyNoise {
    PartyNoise {
        env_rate: nu,
        ..party
    }
}

pub fn sweep(
    ctx: &Context,
    grid: &GridArgs,
    n: &NoiseArgs,
    model: Option<SweepModel>,
    v: Option<&str>,
) -> Result<Report, CliError> {
    let model = match model {
        Some(m) => m,
        None => match ctx.settings.raw("model") {
            None | Some("iso") => SweepModel::Iso,
            Some("temporal") => SweepModel::Temporal,
            Some("spatial") => SweepModel::Spatial,
            Some(other) => return Err(CliError::Usage(format!("unknown model `{other}`"))),
        },
    };
    let pairs = ctx.pairs(grid, None, 1)?;
    let mut t = Table::new(&[
        "model",
        "d",
        "k",
        "v",
        "nu",
        "visibility",
        "event_rate",
        "key_per_event_signed",
        "key_rate",
    ]);
    match model {
        SweepModel::Iso => {
            let text = ctx.settings.text("v", v).unwrap_or_else(|| "0..1:21".into());
            let vs = parse_f64_list("v", &text)?;
            for &(d, k) in &pairs {
                for &v in &vs {
                    let key = iso_keyrate_closed_form(d, v, k)?;
                    t.push(vec![
                        "iso".into(),
                        d.into(),
                        k.into(),
                        v.into(),
                        Cell::Empty,
                        v.into(),
                        Cell::Empty,
                        key.signed.into(),
                        key.value(ctx.clamp).into(),
                    ]);
                }
            }
        }
        SweepModel::Temporal => {
            let base = ctx.temporal(n, "sweep --model temporal")?;
            for nu in nu_grid(ctx, n, "sweep", 11)? {
                let p = TemporalParams {
                    alice: with_env(base.alice, nu),
                    bob: with_env(base.bob, nu),
                    ..base
                };
                let c = temporal::derive_constants(&p)?;
                for &(d, k) in &pairs {
                    let vis = temporal::visibility(d, &c, p.bin_width)?;
                    let rate = temporal::frame_rate(d, &c, p.bin_width);
                    let key = iso_keyrate_closed_form(d, vis, k)?;
                    t.push(vec![
                        "temporal".into(),
                        d.into(),
                        k.into(),
                        Cell::Empty,
                        nu.into(),
                        vis.into(),
                        rate.into(),
                        key.signed.into(),
                        (rate * key.value(ctx.clamp)).into(),
                    ]);
                }
            }
        }
        SweepModel::Spatial => {
            let base = ctx.spatial(n)?;
            for nu in nu_grid(ctx, n, "sweep", 11)? {
                let p = SpatialParams {
                    alice: with_env(base.alice, nu),
                    bob: with_env(base.bob, nu),
                    ..base
                };
                let c = spatial::derive_constants(&p)?;
                for &(d, k) in &pairs {
                    let vis = spatial::visibility(d, &c, p.window)?;
                    let rate = spatial::round_rate(d, &c, p.window);
                    let key = iso_keyrate_closed_form(d, vis, k)?;
                    t.push(vec![
                        "spatial".into(),
                        d.into(),
                        k.into(),
                        Cell::Empty,
                        nu.into(),
                        vis.into(),
                        rate.into(),
                        key.signed.into(),
                        (rate * key.value(ctx.clamp)).into(),
                    ]);
                }
            }
        }
    }
    Ok(t.into())
}

pub fn figure(
    ctx: &Context,
    which: FigureKind,
    grid: &GridArgs,
    n: &NoiseArgs,
    endpoints: bool,
) -> Result<Report, CliError> {
    match which {
        FigureKind::Fig1 => fig1(ctx, grid, n, ctx.settings.flag("endpoints", endpoints)?),
        FigureKind::Fig2 => fig2(ctx, grid, n),
    }
}

fn fig1(ctx: &Context, grid: &GridArgs, n: &NoiseArgs, endpoints: bool) -> Result<Report, CliError> {
    let missing: Vec<&str> = [("tb", n.tb), ("gamma", n.gamma), ("nu-max", n.nu_max)]
        .into_iter()
        .filter_map(|(key, flag)| match ctx.value(key, flag) {
            Ok(Some(_)) => None,
            _ => Some(key),
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!(
            "fig1 needs explicit --{}",
            missing.join(", --")
        )));
    }
    let alice = ctx.party(n, 'a', PartyNoise::ideal())?;
    let bob = ctx.party(n, 'b', PartyNoise::ideal())?;
    if alice != bob {
        return Err(CliError::Usage("fig1 uses identical parties; drop the -a/-b flags".into()));
    }
    let cfg = Fig1Config {
        bin_width: ctx.required("tb", n.tb, "fig1")?,
        gamma: ctx.required("gamma", n.gamma, "fig1")?,
        party: alice,
        nu_max: ctx.required("nu-max", n.nu_max, "fig1")?,
        points: ctx.settings.get("points", n.points)?.unwrap_or(101),
    };
    cfg.validate()?;
    let pairs = ctx.pairs(grid, Some("2,4,8"), 2)?;
    if endpoints {
        let mut t = Table::new(&["d", "k", "endpoint_noise_to_signal"]);
        for &(d, k) in &pairs {
            t.push(vec![d.into(), k.into(), figures::fig1_endpoint(&cfg, d, k)?.into()]);
        }
        return Ok(t.into());
    }
    let mut t = Table::new(&[
        "d",
        "k",
        "nu",
        "noise_to_signal",
        "visibility",
        "frame_rate",
        "key_signed",
        "key_clamped",
    ]);
    for p in figures::fig1_series(&cfg, &pairs)? {
        t.push(vec![
            p.d.into(),
            p.k.into(),
            p.nu.into(),
            p.nsr.into(),
            p.visibility.into(),
            p.frame_rate.into(),
            p.key_signed.into(),
            p.key_clamped.into(),
        ]);
    }
    Ok(t.into())
}

fn fig2(ctx: &Context, grid: &GridArgs, n: &NoiseArgs) -> Result<Report, CliError> {
    let params = ctx.spatial(n)?;
    let pairs = ctx.pairs(grid, Some("2..64"), 2)?;
    let points = figures::fig2_series(&params, &pairs)?;
    let mut t = Table::new(&[
        "d",
        "k",
        "visibility",
        "round_rate",
        "key_signed",
        "key_clamped",
        "best_k",
    ]);
    for p in &points {
        let best = figures::best_subspace(&points, p.d).is_some_and(|b| b.k == p.k);
        t.push(vec![
            p.d.into(),
            p.k.into(),
            p.visibility.into(),
            p.round_rate.into(),
            p.key_signed.into(),
            p.key_clamped.into(),
            best.into(),
        ]);
    }
    Ok(t.into())
}

/// Comparison cells `analytic, empirical, stderr, z, pass`.
fn comparison_cells(analytic: f64, e: &McEstimate, z: f64) -> Result<(Vec<Cell>, bool), CliError> {
    if e.trials == 0 {
        let cells = vec![analytic.into(), Cell::Empty, Cell::Empty, Cell::Empty, false.into()];
        return Ok((cells, false));
    }
    let c = compare_to_analytic(analytic, e, z)?;
    let cells = vec![
        analytic.into(),
        e.mean.into(),
        e.stderr.into(),
        c.z_score.into(),
        c.pass.into(),
    ];
    Ok((cells, c.pass))
}

pub fn mc_validate(
    ctx: &Context,
    grid: &GridArgs,
    n: &NoiseArgs,
    model: Option<NoiseModel>,
    trials: Option<&str>,
    z: Option<f64>,
) -> Result<Report, CliError> {
    let model = match model {
        Some(m) => m,
        None => match ctx.settings.raw("model") {
            Some("temporal") => NoiseModel::Temporal,
            Some("spatial") => NoiseModel::Spatial,
            Some(other) => return Err(CliError::Usage(format!("unknown model `{other}`"))),
            None => return Err(CliError::Usage("--model temporal|spatial is required".into())),
        },
    };
    let z = ctx.value("z", z)?.unwrap_or(4.0);
    let mut t = Table::new(&[
        "model",
        "d",
        "trials",
        "post_selected",
        "visibility_analytic",
        "visibility_empirical",
        "visibility_stderr",
        "visibility_z",
        "visibility_pass",
        "coincidence_analytic",
        "coincidence_empirical",
        "coincidence_stderr",
        "coincidence_z",
        "coincidence_pass",
    ]);
    let mut failed = Vec::new();
    let (name, default_d, default_n) = match model {
        NoiseModel::Temporal => ("temporal", "2,8,32", 1_000_000),
        NoiseModel::Spatial => ("spatial", "4,16", 10_000_000),
    };
    let ds = ctx.dims(grid, Some(default_d))?;
    let count = ctx.count("n", trials, default_n)?;
    if count < MIN_MC_TRIALS {
        return Err(CliError::Usage(format!("--n must be at least {MIN_MC_TRIALS}")));
    }
    let temporal_params = match model {
        NoiseModel::Temporal => Some(ctx.temporal(n, "mc-validate --model temporal")?),
        NoiseModel::Spatial => None,
    };
    let spatial_params = match model {
        NoiseModel::Spatial => Some(ctx.spatial(n)?),
        NoiseModel::Temporal => None,
    };
    for &d in &ds {
        let seed = ctx.seed.wrapping_add(d as u64);
        let (outcome, v, p11) = if let Some(p) = &temporal_params {
            let c = temporal::derive_constants(p)?;
            (
                simulate_temporal(p, d, count, seed)?,
                temporal::visibility(d, &c, p.bin_width)?,
                temporal::coincidence_probability(d, &c, p.bin_width),
            )
        } else {
            let p = spatial_params.as_ref().expect("spatial parameters");
            let c = spatial::derive_constants(p)?;
            (
                simulate_spatial(p, d, count, seed)?,
                spatial::visibility(d, &c, p.window)?,
                spatial::coincidence_probability(d, &c, p.window),
            )
        };
        let (v_cells, v_ok) = comparison_cells(v, &outcome.visibility, z)?;
        let (r_cells, r_ok) = comparison_cells(p11, &outcome.coincidence, z)?;
        if !(v_ok && r_ok) {
            failed.push(d.to_string());
        }
        let mut row = vec![
            name.into(),
            d.into(),
            count.into(),
            outcome.coincidence.successes.into(),
        ];
        row.extend(v_cells);
        row.extend(r_cells);
        t.push(row);
    }
    Ok(Report {
        table: t,
        failure: (!failed.is_empty())
            .then(|| format!("Monte Carlo disagrees with the analytic model at d = {}", failed.join(", "))),
    })
}

pub fn sdp_verify(
    ctx: &Context,
    k: Option<&str>,
    w: Option<&str>,
    restarts: Option<usize>,
) -> Result<Report, CliError> {
    let ks = parse_usize_list("k", &ctx.settings.text("k", k).unwrap_or_else(|| "2..5".into()))?;
    let ws = parse_f64_list("w", &ctx.settings.text("w", w).unwrap_or_else(|| "0.55..0.99:12".into()))?;
    let restarts = ctx.settings.get("restarts", restarts)?.unwrap_or(8);
    if ks.iter().any(|&k| k < 2) || restarts == 0 {
        return Err(CliError::Usage("need k >= 2 and --restarts >= 1".into()));
    }
    let mut t = Table::new(&[
        "k",
        "w",
        "closed_form",
        "dual_value",
        "min_eigenvalue",
        "certificate",
        "feasible",
        "primal_value",
        "primal_w",
        "gap",
        "pass",
    ]);
    let mut failed = 0;
    for (i, &k) in ks.iter().enumerate() {
        for (j, &w) in ws.iter().enumerate() {
            let closed = closed_form_guessing(w, k)?;
            let cert = dual_certificate(w, k)?;
            let seed = ctx.seed.wrapping_add((i * ws.len() + j) as u64);
            let attack = primal_search(w, k, restarts, seed)?;
            let gap = cert.dual_value - attack.value;
            let pass = cert.is_feasible()
                && (cert.dual_value - closed).abs() <= 1e-9
                && gap <= SDP_GAP_LIMIT;
            failed += !pass as usize;
            let kind = match cert.kind {
                CertificateKind::Exact => "exact",
                CertificateKind::Limit => "limit",
            };
            t.push(vec![
                k.into(),
                w.into(),
                closed.into(),
                cert.dual_value.into(),
                Some(cert.min_eigenvalue).filter(|e| !e.is_nan()).into(),
                kind.into(),
                cert.is_feasible().into(),
                attack.value.into(),
                attack.achieved_w.into(),
                gap.into(),
                pass.into(),
            ]);
        }
    }
    Ok(Report {
        table: t,
        failure: (failed > 0).then(|| format!("{failed} grid point(s) failed certification")),
    })
}

pub struct ProtocolArgs<'a> {
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub v: Option<f64>,
    pub epsilon: Option<f64>,
    pub n: Option<&'a str>,
    pub rounds_out: Option<&'a Path>,
}

pub fn protocol_sim(ctx: &Context, a: &ProtocolArgs) -> Result<Report, CliError> {
    let d = ctx
        .settings
        .get("d", a.d)?
        .ok_or_else(|| CliError::Usage("--d is required".into()))?;
    let k = ctx
        .settings
        .get("k", a.k)?
        .ok_or_else(|| CliError::Usage("--k is required".into()))?;
    if k == 0 || d == 0 || d % k != 0 {
        return Err(CliError::Usage(format!("subspace size k={k} does not divide d={d}")));
    }
    let v = ctx.required("v", a.v, "protocol-sim")?;
    let epsilon = ctx.value("epsilon", a.epsilon)?.unwrap_or(0.1);
    let n_rounds = match a.n {
        Some(s) => parse_count("n", s)?,
        None => ctx.count("n", None, 1_000_000)?,
    };
    let layout = SubspaceLayout::new(d, k)?;
    let config = ProtocolConfig {
        layout,
        epsilon,
        n_rounds,
        seed: ctx.seed,
    };
    config.validate()?;
    let state = isotropic_state(d, v)?;
    let records = run_protocol(&state, &config)?;

    let rounds_out = a
        .rounds_out
        .map(Path::to_path_buf)
        .or_else(|| ctx.settings.raw("rounds-out").map(PathBuf::from));
    if let Some(path) = rounds_out {
        write_rounds(&path, &records)?;
    }

    let est = estimate_parameters(&records, layout)?;
    let rate = asymptotic_rate_estimate(&est).ok();
    let w_target = iso_witness(d, v, k)?;
    let p_target = iso_block_probability(d, v, k)?;
    let k_target = iso_keyrate_closed_form(d, v, k)?;
    let mut t = Table::new(&[
        "d",
        "k",
        "v",
        "epsilon",
        "rounds",
        "m",
        "test_rounds",
        "test_agreements",
        "witness_hat",
        "witness_stderr",
        "witness_analytic",
        "block_probability_hat",
        "block_probability_analytic",
        "key_rounds",
        "defined",
        "key_hat",
        "key_band",
        "key_analytic",
        "key_in_band",
    ]);
    let key_hat = rate.as_ref().map(|r| if ctx.clamp { r.clamped } else { r.signed });
    let in_band = rate
        .as_ref()
        .map(|r| r.contains(k_target.value(ctx.clamp), ctx.clamp));
    for b in &est.blocks {
        t.push(vec![
            d.into(),
            k.into(),
            v.into(),
            epsilon.into(),
            n_rounds.into(),
            b.m.into(),
            b.test_rounds.into(),
            b.test_agreements.into(),
            b.w.into(),
            b.w_stderr.into(),
            w_target.into(),
            b.p_block.into(),
            p_target.into(),
            b.key_rounds.into(),
            b.is_defined().into(),
            key_hat.into(),
            rate.as_ref().map(|r| r.half_width).into(),
            k_target.value(ctx.clamp).into(),
            in_band.into(),
        ]);
    }
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    Ok(t.into())
}

fn write_rounds(path: &Path, records: &[subqkd_core::RoundRecord]) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["round", "w_a", "w_b", "x", "y", "m_a", "m_b", "block", "x_prime", "y_prime"])?;
    let opt = |v: Option<u32>| v.map_or_else(String::new, |v| v.to_string());
    for (i, r) in records.iter().enumerate() {
        w.write_record([
            i.to_string(),
            (r.w_a as u8).to_string(),
            (r.w_b as u8).to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.m_a.to_string(),
            r.m_b.to_string(),
            opt(r.block),
            opt(r.x_prime),
            opt(r.y_prime),
        ])?;
    }
    w.flush()?;
    Ok(())
}

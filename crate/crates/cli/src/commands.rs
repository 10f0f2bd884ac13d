//! Subcommand implementations.

use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;
use replica_mac::channel::Scenario;
use replica_mac::mc_oracle;
use replica_mac::precoder::{self, OptimizerParams, PrecoderOptState};
use replica_mac::replica::{self, SolverParams, SumRateReport};
use replica_mac::scenario::{self, db_to_linear, ScenarioSpec};
use replica_mac::Error;

use crate::args::{ExtrapolateArgs, Mode, OptimizeArgs, RegionArgs, SolverOpts, SumrateArgs, SweepArgs, Target, ValidateArgs};
use crate::output::{bits, num, Table};
use crate::region::{self, RateRegionSpec};
use crate::validate::{self, Check};

pub const SWEEP_HEADER: [&str; 7] = [
    "snr_db",
    "mode",
    "sum_rate_nats_per_antenna",
    "sum_rate_bits_per_antenna",
    "std_error_bits",
    "converged",
    "iterations",
];

pub const REGION_HEADER: [&str; 12] = [
    "sample",
    "angle_rad",
    "w1",
    "w2",
    "r1_nats",
    "r2_nats",
    "r1_bits",
    "r2_bits",
    "support_bits",
    "c1_bits",
    "c2_bits",
    "c12_bits",
];

pub const EXTRAPOLATE_HEADER: [&str; 6] = [
    "size",
    "inv_size",
    "mi_nats_per_antenna",
    "mi_bits_per_antenna",
    "std_error_bits",
    "realizations",
];

/// Process exit status for an error: 2 parse/config, 3 numerical, 4 capacity.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config { .. } | Error::Io(_) => 2,
                Error::Capacity { .. } => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<clap::Error>().is_some() {
            return 2;
        }
    }
    3
}

impl SolverOpts {
    pub fn params(&self) -> SolverParams {
        SolverParams {
            tol: self.tol,
            damping: self.damping,
            ..SolverParams::default()
        }
    }
}

pub fn load(path: &Path) -> Result<ScenarioSpec> {
    scenario::load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))
}

/// Applies the `optimize` markers: interferers first (selfish), then users
/// against the replica sum-rate.
pub fn prepare(spec: &ScenarioSpec, scenario: &Scenario, solver: &SolverParams) -> Result<Scenario> {
    let mut sc = scenario.clone();
    let params = OptimizerParams {
        solver: solver.clone(),
        ..OptimizerParams::default()
    };
    for &l in &spec.optimize_interferers {
        sc.interferers[l].precoder = precoder::optimize_interferer(&sc, l, &params)?.g;
    }
    if !spec.optimize_users.is_empty() {
        let states = precoder::optimize_users(&sc, &spec.optimize_users, &params)?;
        for (&u, st) in spec.optimize_users.iter().zip(states) {
            sc.users[u].precoder = st.g;
        }
    }
    Ok(sc)
}

fn format_state(r: &SumRateReport) -> String {
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ");
    format!(
        "xi_users = [{}]\neps_users = [{}]\nxi_interf = [{}]\neps_interf = [{}]\nxi_bar = [{}]\neps_bar = [{}]",
        list(&r.state.xi_users),
        list(&r.state.eps_users),
        list(&r.state.xi_interf),
        list(&r.state.eps_interf),
        list(&r.state.xi_bar),
        list(&r.state.eps_bar)
    )
}

pub fn cmd_sumrate(args: &SumrateArgs) -> Result<SumRateReport> {
    let spec = load(&args.scenario)?;
    let solver = args.solver.params();
    let sc = prepare(&spec, &spec.scenario, &solver)?;
    let r = replica::sum_rate(&sc, &solver)?;
    println!("sum_rate_bits_per_antenna = {}", num(r.sum_rate_bits()));
    println!("sum_rate_nats_per_antenna = {}", num(r.sum_rate));
    println!("h_s = {}\nh_i = {}", num(r.h_s), num(r.h_i));
    println!("converged = {}\niterations = {}\nresidual = {:e}", r.converged, r.iterations, r.residual);
    println!("{}", format_state(&r));
    if let Some(out) = &args.out {
        let mut t = Table::create(out, &["sum_rate_nats_per_antenna", "sum_rate_bits_per_antenna", "h_s", "h_i", "converged", "iterations", "residual"])?;
        t.row([
            num(r.sum_rate),
            num(r.sum_rate_bits()),
            num(r.h_s),
            num(r.h_i),
            r.converged.to_string(),
            r.iterations.to_string(),
            num(r.residual),
        ])?;
        t.finish()?;
    }
    Ok(r)
}

/// SNR grid from `start:stop:step` or a comma list; must be strictly increasing.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |m: String| anyhow::Error::new(Error::config("grid", m));
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("`{text}`: {e}")))?;
        let [start, stop, step] = parts[..] else {
            return Err(bad(format!("`{text}`: expected start:stop:step")));
        };
        if !(step > 0.0) || stop < start {
            return Err(bad(format!("`{text}`: step must be positive and stop ≥ start")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + step * i as f64).collect()
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("`{text}`: {e}")))?
    };
    if grid.is_empty() {
        return Err(bad("grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(bad(format!("`{text}`: grid must be finite and strictly increasing")));
    }
    Ok(grid)
}

/// Sets the SNR of the targeted terminals.
pub fn at_snr(scenario: &Scenario, target: Target, snr_db: f64) -> Scenario {
    let rho = db_to_linear(snr_db);
    let mut sc = scenario.clone();
    if matches!(target, Target::All | Target::Users) {
        sc.users.iter_mut().for_each(|t| t.snr = rho);
    }
    if matches!(target, Target::All | Target::Interferers) {
        sc.interferers.iter_mut().for_each(|t| t.snr = rho);
    }
    sc
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mode: &'static str,
    pub nats: f64,
    pub std_error_nats: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
}

impl SweepRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            num(self.snr_db),
            self.mode.to_string(),
            num(self.nats),
            num(bits(self.nats)),
            self.std_error_nats.map(|s| num(bits(s))).unwrap_or_default(),
            self.converged.map(|c| c.to_string()).unwrap_or_default(),
            self.iterations.map(|i| i.to_string()).unwrap_or_default(),
        ]
    }
}

pub struct SweepSettings {
    pub grid: Vec<f64>,
    pub target: Target,
    pub mode: Mode,
    pub realizations: usize,
    pub noise_samples: usize,
    pub seed: u64,
}

/// Rows of one grid point: replica first, then Monte Carlo.
fn sweep_point(spec: &ScenarioSpec, s: &SweepSettings, solver: &SolverParams, idx: usize) -> Result<Vec<SweepRow>> {
    let db = s.grid[idx];
    let sc = prepare(spec, &at_snr(&spec.scenario, s.target, db), solver)?;
    let mut rows = Vec::new();
    if matches!(s.mode, Mode::Replica | Mode::Both) {
        let r = replica::sum_rate(&sc, solver)?;
        rows.push(SweepRow {
            snr_db: db,
            mode: "replica",
            nats: r.sum_rate,
            std_error_nats: None,
            converged: Some(r.converged),
            iterations: Some(r.iterations),
        });
    }
    if matches!(s.mode, Mode::Mc | Mode::Both) {
        let seed = replica_mac::rng::derive_seed(s.seed, idx as u64);
        let e = mc_oracle::estimate_mi(&sc, s.realizations, s.noise_samples, seed)?;
        rows.push(SweepRow {
            snr_db: db,
            mode: "mc",
            nats: e.value,
            std_error_nats: Some(e.std_error),
            converged: None,
            iterations: None,
        });
    }
    Ok(rows)
}

/// Evaluates every grid point in parallel; results are in grid order.
pub fn run_sweep(spec: &ScenarioSpec, s: &SweepSettings, solver: &SolverParams) -> Vec<Result<Vec<SweepRow>>> {
    (0..s.grid.len())
        .into_par_iter()
        .map(|i| sweep_point(spec, s, solver, i))
        .collect()
}

pub fn write_sweep(path: &Path, results: Vec<Result<Vec<SweepRow>>>) -> Result<()> {
    let mut t = Table::create(path, &SWEEP_HEADER)?;
    for r in results {
        match r {
            Ok(rows) => {
                for row in rows {
                    t.row(row.fields())?;
                }
            }
            Err(e) => {
                t.abandon(&format!("{e:#}"))?;
                return Err(e);
            }
        }
    }
    t.finish()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let spec = load(&args.scenario)?;
    let settings = SweepSettings {
        grid: parse_grid(&args.grid)?,
        target: args.target,
        mode: args.mode,
        realizations: args.realizations,
        noise_samples: args.noise_samples,
        seed: args.solver.seed,
    };
    let results = run_sweep(&spec, &settings, &args.solver.params());
    write_sweep(&args.out, results)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

pub fn write_region(path: &Path, c: &region::RegionConstraints, points: &[region::BoundaryPoint]) -> Result<()> {
    let mut t = Table::create(path, &REGION_HEADER)?;
    for (j, p) in points.iter().enumerate() {
        t.row([
            j.to_string(),
            num(p.angle),
            num(p.w1),
            num(p.w2),
            num(p.r1),
            num(p.r2),
            num(bits(p.r1)),
            num(bits(p.r2)),
            num(bits(p.support)),
            num(bits(c.c1)),
            num(bits(c.c2)),
            num(bits(c.c12)),
        ])?;
    }
    t.finish()
}

pub fn cmd_rate_region(args: &RegionArgs) -> Result<(region::RegionConstraints, Vec<region::BoundaryPoint>)> {
    let spec = load(&args.scenario)?;
    let rs = RateRegionSpec {
        scenario: spec.scenario,
        boundary_samples: args.samples,
        snr: args.snr_db.map(db_to_linear),
        precoding: args.precoding,
    };
    let (c, points) = region::rate_region(&rs, &args.solver.params())?;
    write_region(&args.out, &c, &points)?;
    println!(
        "c1 = {} bits, c2 = {} bits, c12 = {} bits",
        num(bits(c.c1)),
        num(bits(c.c2)),
        num(bits(c.c12))
    );
    Ok((c, points))
}

/// Terminals to optimize: `--user` wins over the scenario's markers.
fn optimize_targets(spec: &ScenarioSpec, user: Option<&str>) -> Result<Vec<usize>> {
    match user {
        None => Ok(spec.optimize_users.clone()),
        Some("all") => Ok((0..spec.scenario.users.len()).collect()),
        Some(s) => {
            let k: usize = s
                .parse()
                .map_err(|_| Error::config("user", format!("expected an index or `all`, got `{s}`")))?;
            if k >= spec.scenario.users.len() {
                bail!(Error::config("user", format!("index {k} out of range ({} users)", spec.scenario.users.len())));
            }
            Ok(vec![k])
        }
    }
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<Vec<(usize, PrecoderOptState)>> {
    let spec = load(&args.scenario)?;
    let users = optimize_targets(&spec, args.user.as_deref())?;
    let solver = args.solver.params();
    let params = OptimizerParams {
        solver: solver.clone(),
        ..OptimizerParams::default()
    };
    let mut sc = spec.scenario.clone();
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for &l in &spec.optimize_interferers {
        let st = precoder::optimize_interferer(&sc, l, &params)?;
        sc.interferers[l].precoder = st.g.clone();
        let path = args.out.join(format!("interferer_{l}.txt"));
        precoder::write_precoder(&path, &st.g, &sc.interferers[l].constellation)?;
    }
    if users.is_empty() {
        bail!(Error::config("user", "no user selected; pass --user or mark users with precoder = \"optimize\""));
    }
    let states = precoder::optimize_users(&sc, &users, &params)?;
    let mut log = Table::create(
        &args.out.join("objective_log.csv"),
        &["outer_iteration", "sum_rate_nats_per_antenna", "sum_rate_bits_per_antenna"],
    )?;
    for (i, r) in states[0].rate_trace.iter().enumerate() {
        log.row([i.to_string(), num(*r), num(bits(*r))])?;
    }
    log.finish()?;
    let mut out = Vec::new();
    for (&u, st) in users.iter().zip(states) {
        let path = args.out.join(format!("user_{u}.txt"));
        precoder::write_precoder(&path, &st.g, &sc.users[u].constellation)?;
        println!(
            "users[{u}]: objective {} nats (identity {}), sum-rate {} bits/antenna after {} outer iterations{}",
            num(st.objective),
            num(st.baseline_objective),
            num(bits(*st.rate_trace.last().unwrap_or(&0.0))),
            st.iteration,
            if st.converged { "" } else { " (not converged)" }
        );
        out.push((u, st));
    }
    Ok(out)
}

pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::config("sizes", format!("`{text}`: {e}")).into())
}

pub struct ExtrapolationRun {
    pub sizes: Vec<usize>,
    pub estimates: Vec<mc_oracle::McEstimate>,
    pub fit: mc_oracle::ExtrapolationFit,
    pub replica_nats: f64,
}

/// Monte-Carlo estimates of `template` resized to every size, the 1/M fit,
/// and the replica value of the template (size invariant at fixed loads).
pub fn extrapolation(
    spec: &ScenarioSpec,
    sizes: &[usize],
    realizations: usize,
    noise_samples: usize,
    seed: u64,
    solver: &SolverParams,
) -> Result<ExtrapolationRun> {
    let estimates = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let cfg = spec.config.resized(m)?;
            let sc = cfg.build(Path::new("."))?.scenario;
            let e = mc_oracle::estimate_mi(&sc, realizations, noise_samples, replica_mac::rng::derive_seed(seed, i as u64))?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = mc_oracle::extrapolate(sizes, &estimates)?;
    let replica_nats = replica::sum_rate(&spec.scenario, solver)?.sum_rate;
    Ok(ExtrapolationRun {
        sizes: sizes.to_vec(),
        estimates,
        fit,
        replica_nats,
    })
}

pub fn write_extrapolation(path: &Path, run: &ExtrapolationRun) -> Result<()> {
    let mut t = Table::create(path, &EXTRAPOLATE_HEADER)?;
    for (&m, e) in run.sizes.iter().zip(&run.estimates) {
        t.row([
            m.to_string(),
            num(1.0 / m as f64),
            num(e.value),
            num(bits(e.value)),
            num(bits(e.std_error)),
            e.realizations.to_string(),
        ])?;
    }
    t.row([
        "limit".to_string(),
        num(0.0),
        num(run.fit.predicted_limit),
        num(bits(run.fit.predicted_limit)),
        String::new(),
        String::new(),
    ])?;
    t.row([
        "replica".to_string(),
        num(0.0),
        num(run.replica_nats),
        num(bits(run.replica_nats)),
        String::new(),
        String::new(),
    ])?;
    t.finish()
}

pub fn cmd_extrapolate(args: &ExtrapolateArgs) -> Result<ExtrapolationRun> {
    let spec = load(&args.scenario)?;
    if spec.scenario.terminals().any(|t| !linalg_identity(&t.precoder)) || !spec.optimize_users.is_empty() {
        bail!(Error::config("precoder", "extrapolation templates must use identity precoders"));
    }
    let sizes = parse_sizes(&args.sizes)?;
    let run = extrapolation(&spec, &sizes, args.realizations, args.noise_samples, args.solver.seed, &args.solver.params())?;
    write_extrapolation(&args.out, &run)?;
    let [c0, c1, c2] = run.fit.coefficients;
    println!("fit: {} + {}/M + {}/M^2 (rms residual {:e})", num(c0), num(c1), num(c2), run.fit.fit_residual);
    println!("limit = {} nats/antenna, replica = {} nats/antenna", num(run.fit.predicted_limit), num(run.replica_nats));
    Ok(run)
}

/// Runs the acceptance suite; every failed check makes the run fail.
pub fn cmd_validate(args: &ValidateArgs) -> Result<Vec<Check>> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let checks = validate::run_all(&args.out, &validate::Settings::new(args.profile, args.seed))?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
    if !failed.is_empty() {
        bail!(Error::Domain(format!("failed criteria: {}", failed.join(", "))));
    }
    Ok(checks)
}

fn linalg_identity(g: &replica_mac::linalg::CMatrix) -> bool {
    replica_mac::linalg::is_identity(g, 1e-12)
}

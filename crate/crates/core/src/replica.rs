//! Large-system fixed point for the sum-rate `I(y; x_s)/N = h_s - h_i`.
//!
//! The unbarred block (users and interferers, entropy `h(y|H)`) and the
//! barred block (interferers only, entropy `h(y|x_s, H)`) are independent
//! systems and are solved and selected separately. Each block iterates on its
//! `ε` vector; `ξ` follows from `ε` through the resolvent.

use std::f64::consts::PI;

use log::{debug, info};
use rayon::prelude::*;

use crate::channel::{Role, Scenario, TerminalProfile};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::rng::derive_seed;
use crate::su_channel::{self, NoiseRule};

/// Six parameter families of the fixed point.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaState {
    pub xi_users: Vec<f64>,
    pub eps_users: Vec<f64>,
    pub xi_interf: Vec<f64>,
    pub eps_interf: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub eps_bar: Vec<f64>,
}

/// Starting point of a fixed-point run.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `ε = 0`.
    Zero,
    /// `ε = ρ`, the value at vanishing `ξ`.
    FullPower,
    /// `ε = f ρ`.
    Fraction(f64),
    /// Explicit `ε` values; the `ξ` entries are ignored.
    State(ReplicaState),
}

impl Init {
    /// `ε = 0`, `ε = ρ`, and eight log-spaced fractions `10^{-4 + 4j/9}`.
    pub fn presets() -> Vec<Init> {
        let mut v = vec![Init::Zero, Init::FullPower];
        for j in 1..=8 {
            v.push(Init::Fraction(10f64.powf(-4.0 + 4.0 * j as f64 / 9.0)));
        }
        v
    }

    fn eps_for(&self, block: &Block<'_>) -> Vec<f64> {
        block
            .terms
            .iter()
            .enumerate()
            .map(|(pos, t)| match self {
                Init::Zero => 0.0,
                Init::FullPower => t.profile.snr,
                Init::Fraction(f) => f * t.profile.snr,
                Init::State(s) => {
                    let v = match (block.kind, t.profile.role) {
                        (BlockKind::Full, Role::User) => s.eps_users.get(t.index),
                        (BlockKind::Full, Role::Interferer) => s.eps_interf.get(t.index),
                        (BlockKind::Barred, _) => s.eps_bar.get(t.index),
                    };
                    v.copied().unwrap_or_else(|| {
                        debug!("init state too short at block position {pos}; using 0");
                        0.0
                    })
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SolverParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Noise expectation for exhaustive single-user evaluations.
    pub noise: NoiseRule,
    /// Assemble a sum-rate even from an unconverged state.
    pub force: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            noise: NoiseRule::default(),
            force: false,
        }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        Ok(())
    }
}

/// Output of one fixed-point run.
#[derive(Clone, Debug)]
pub struct Solution {
    pub state: ReplicaState,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Scalar resolvents were used (identity correlations only).
    pub uncorrelated: bool,
}

#[derive(Clone, Debug)]
pub struct SumRateReport {
    pub h_s: f64,
    pub h_i: f64,
    /// Nats per receive antenna.
    pub sum_rate: f64,
    pub per_user_mi: Vec<f64>,
    pub per_interferer_mi: Vec<f64>,
    pub per_interferer_mi_bar: Vec<f64>,
    pub state: ReplicaState,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl SumRateReport {
    pub fn sum_rate_bits(&self) -> f64 {
        self.sum_rate / std::f64::consts::LN_2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BlockKind {
    Full,
    Barred,
}

struct BlockTerm<'a> {
    profile: &'a TerminalProfile,
    /// Position within users or interferers.
    index: usize,
    tx_sqrt: CMatrix,
    noise: NoiseRule,
}

/// One self-contained fixed-point system.
struct Block<'a> {
    kind: BlockKind,
    n: usize,
    terms: Vec<BlockTerm<'a>>,
    uncorrelated: bool,
}

struct BlockRun {
    eps: Vec<f64>,
    xi: Vec<f64>,
    converged: bool,
    iterations: usize,
    residual: f64,
}

fn terminal_noise(rule: &NoiseRule, role: Role, index: usize) -> NoiseRule {
    match *rule {
        NoiseRule::MonteCarlo { samples, seed } => {
            let tag = match role {
                Role::User => index as u64,
                Role::Interferer => (1u64 << 32) + index as u64,
            };
            NoiseRule::MonteCarlo {
                samples,
                seed: derive_seed(seed, tag),
            }
        }
        other => other,
    }
}

impl<'a> Block<'a> {
    fn new(scenario: &'a Scenario, kind: BlockKind, uncorrelated: bool, rule: &NoiseRule) -> Self {
        let mut terms = Vec::new();
        let mut push = |profile: &'a TerminalProfile, index: usize| {
            let tx_sqrt = if linalg::is_identity(&profile.correlation.tx, 0.0) {
                linalg::identity(profile.antennas)
            } else {
                linalg::psd_sqrt(&profile.correlation.tx)
            };
            terms.push(BlockTerm {
                profile,
                index,
                tx_sqrt,
                noise: terminal_noise(rule, profile.role, index),
            });
        };
        if kind == BlockKind::Full {
            for (k, u) in scenario.users.iter().enumerate() {
                push(u, k);
            }
        }
        for (l, t) in scenario.interferers.iter().enumerate() {
            push(t, l);
        }
        Self {
            kind,
            n: scenario.rx_antennas,
            terms,
            uncorrelated,
        }
    }

    fn load(&self, t: &BlockTerm<'_>) -> f64 {
        self.n as f64 / t.profile.antennas as f64
    }

    fn resolvent_arg(&self, eps: &[f64]) -> CMatrix {
        let mut s = linalg::identity(self.n);
        for (t, &e) in self.terms.iter().zip(eps) {
            s += &t.profile.correlation.rx * c(e);
        }
        linalg::hermitize(&s)
    }

    /// `ξ_k = tr(R_k S^{-1}) / M_k`.
    fn xi(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if self.uncorrelated {
            let denom = 1.0 + eps.iter().sum::<f64>();
            return Ok(self.terms.iter().map(|t| self.load(t) / denom).collect());
        }
        let inv = linalg::inv_hpd(&self.resolvent_arg(eps))?;
        Ok(self
            .terms
            .iter()
            .map(|t| linalg::trace_product_re(&t.profile.correlation.rx, &inv) / t.profile.antennas as f64)
            .collect())
    }

    /// `(1/N) ln det S`.
    fn log_det_term(&self, eps: &[f64]) -> Result<f64> {
        if self.uncorrelated {
            return Ok((eps.iter().sum::<f64>()).ln_1p());
        }
        Ok(linalg::ln_det_hpd(&self.resolvent_arg(eps))? / self.n as f64)
    }

    fn effective(&self, t: &BlockTerm<'_>, xi: f64) -> CMatrix {
        &t.tx_sqrt * c((t.profile.snr * xi).max(0.0).sqrt())
    }

    /// `ε_k = (ρ_k / M_k) tr(E_k T_k)` at the current `ξ`.
    fn eps_map(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.terms
            .iter()
            .zip(xi)
            .map(|(t, &x)| {
                let p = t.profile;
                if p.snr == 0.0 {
                    return Ok(0.0);
                }
                let ev = su_channel::evaluate(&self.effective(t, x), &p.precoder, &p.constellation, &t.noise)?;
                let tr = if self.uncorrelated {
                    linalg::trace_re(&ev.mmse.matrix)
                } else {
                    linalg::trace_product_re(&ev.mmse.matrix, &p.correlation.tx)
                };
                Ok(p.snr / p.antennas as f64 * tr)
            })
            .collect()
    }

    fn solve(&self, init: &[f64], params: &SolverParams) -> Result<BlockRun> {
        let mut eps = init.to_vec();
        let mut xi = self.xi(&eps)?;
        if self.terms.is_empty() {
            return Ok(BlockRun {
                eps,
                xi,
                converged: true,
                iterations: 0,
                residual: 0.0,
            });
        }
        let mut residual = f64::INFINITY;
        for iter in 1..=params.max_iter {
            let target = self.eps_map(&xi)?;
            let xi_target = self.xi(&target)?;
            residual = 0.0;
            for (a, b) in eps.iter().zip(&target).chain(xi.iter().zip(&xi_target)) {
                residual = f64::max(residual, (b - a).abs() / (1.0 + b.abs()));
            }
            if !residual.is_finite() {
                return Err(Error::Numerical(format!(
                    "fixed-point update became non-finite at iteration {iter}"
                )));
            }
            if residual < params.tol {
                return Ok(BlockRun {
                    eps,
                    xi,
                    converged: true,
                    iterations: iter,
                    residual,
                });
            }
            for (e, t) in eps.iter_mut().zip(&target) {
                *e += params.damping * (t - *e);
            }
            xi = self.xi(&eps)?;
        }
        Ok(BlockRun {
            eps,
            xi,
            converged: false,
            iterations: params.max_iter,
            residual,
        })
    }

    /// Block entropy (`h_s` or `h_i`) and its per-terminal information terms.
    fn entropy(&self, eps: &[f64], xi: &[f64], rule_override: Option<&NoiseRule>) -> Result<(f64, Vec<f64>)> {
        let mut h = 1.0 + PI.ln() + self.log_det_term(eps)?;
        let mut mi = Vec::with_capacity(self.terms.len());
        for ((t, &e), &x) in self.terms.iter().zip(eps).zip(xi) {
            let p = t.profile;
            let i = if p.snr == 0.0 {
                0.0
            } else {
                let rule = rule_override.copied().unwrap_or(t.noise);
                su_channel::evaluate(&self.effective(t, x), &p.precoder, &p.constellation, &rule)?.mi
            };
            h += i / self.n as f64 - x * e / self.load(t);
            mi.push(i);
        }
        Ok((h, mi))
    }
}

fn check_uncorrelated(scenario: &Scenario) -> Result<()> {
    if !scenario.is_uncorrelated(1e-12) {
        return Err(Error::Domain(
            "scalar resolvents require identity transmit and receive correlation".into(),
        ));
    }
    Ok(())
}

fn state_from_blocks(scenario: &Scenario, full: &BlockRun, barred: &BlockRun) -> ReplicaState {
    let k = scenario.users.len();
    ReplicaState {
        xi_users: full.xi[..k].to_vec(),
        eps_users: full.eps[..k].to_vec(),
        xi_interf: full.xi[k..].to_vec(),
        eps_interf: full.eps[k..].to_vec(),
        xi_bar: barred.xi.clone(),
        eps_bar: barred.eps.clone(),
    }
}

fn solve_with(scenario: &Scenario, init: &Init, params: &SolverParams, uncorrelated: bool) -> Result<Solution> {
    scenario.validate()?;
    params.validate()?;
    let full = Block::new(scenario, BlockKind::Full, uncorrelated, &params.noise);
    let barred = Block::new(scenario, BlockKind::Barred, uncorrelated, &params.noise);
    let rf = full.solve(&init.eps_for(&full), params)?;
    let rb = barred.solve(&init.eps_for(&barred), params)?;
    Ok(Solution {
        state: state_from_blocks(scenario, &rf, &rb),
        converged: rf.converged && rb.converged,
        iterations: rf.iterations.max(rb.iterations),
        residual: rf.residual.max(rb.residual),
        uncorrelated,
    })
}

/// Damped Picard iteration with matrix resolvents.
pub fn solve_fixed_point(scenario: &Scenario, init: &Init, params: &SolverParams) -> Result<Solution> {
    solve_with(scenario, init, params, false)
}

/// Same iteration with the scalar resolvents of the identity-correlation case.
pub fn solve_fixed_point_uncorrelated(scenario: &Scenario, init: &Init, params: &SolverParams) -> Result<Solution> {
    check_uncorrelated(scenario)?;
    solve_with(scenario, init, params, true)
}

fn block_runs(state: &ReplicaState) -> (BlockRun, BlockRun) {
    let mk = |eps: Vec<f64>, xi: Vec<f64>| BlockRun {
        eps,
        xi,
        converged: true,
        iterations: 0,
        residual: 0.0,
    };
    let full = mk(
        state.eps_users.iter().chain(&state.eps_interf).copied().collect(),
        state.xi_users.iter().chain(&state.xi_interf).copied().collect(),
    );
    let barred = mk(state.eps_bar.clone(), state.xi_bar.clone());
    (full, barred)
}

/// `h_s`, `h_i` and the sum-rate at a solved state.
pub fn assemble_sum_rate(scenario: &Scenario, solution: &Solution, params: &SolverParams) -> Result<SumRateReport> {
    if !solution.converged && !params.force {
        return Err(Error::Unconverged {
            iterations: solution.iterations,
            residual: solution.residual,
        });
    }
    let full = Block::new(scenario, BlockKind::Full, solution.uncorrelated, &params.noise);
    let barred = Block::new(scenario, BlockKind::Barred, solution.uncorrelated, &params.noise);
    let (rf, rb) = block_runs(&solution.state);
    let (h_s, mi_full) = full.entropy(&rf.eps, &rf.xi, None)?;
    let (h_i, mi_bar) = barred.entropy(&rb.eps, &rb.xi, None)?;
    let k = scenario.users.len();
    Ok(SumRateReport {
        h_s,
        h_i,
        sum_rate: h_s - h_i,
        per_user_mi: mi_full[..k].to_vec(),
        per_interferer_mi: mi_full[k..].to_vec(),
        per_interferer_mi_bar: mi_bar,
        state: solution.state.clone(),
        converged: solution.converged,
        iterations: solution.iterations,
        residual: solution.residual,
    })
}

struct Scored {
    run: BlockRun,
    h: f64,
}

fn pick(mut scored: Vec<Scored>, label: &str) -> Result<Scored> {
    if scored.is_empty() {
        return Err(Error::Domain("no candidate solutions to select from".into()));
    }
    let any_converged = scored.iter().any(|s| s.run.converged);
    if any_converged {
        scored.retain(|s| s.run.converged);
    } else {
        // Fall back to the smallest residual; the caller sees the flag.
        scored.sort_by(|a, b| a.run.residual.total_cmp(&b.run.residual));
        scored.truncate(1);
    }
    let mut best = 0;
    for i in 1..scored.len() {
        let (a, b) = (&scored[i], &scored[best]);
        let sum_a: f64 = a.run.eps.iter().sum();
        let sum_b: f64 = b.run.eps.iter().sum();
        let tie = (a.h - b.h).abs() <= 1e-12 * (1.0 + b.h.abs());
        let same_point = a.run.eps.iter().zip(&b.run.eps).all(|(x, y)| (x - y).abs() <= 1e-8 * (1.0 + y.abs()));
        if tie && !same_point {
            info!("{label}: distinct fixed points with equal entropy; keeping the lower total eps");
            if sum_a < sum_b {
                best = i;
            }
        } else if a.h < b.h && !tie {
            best = i;
        }
    }
    Ok(scored.swap_remove(best))
}

fn score_block(block: &Block<'_>, runs: Vec<BlockRun>) -> Result<Vec<Scored>> {
    // Collapse duplicates before paying for information evaluations.
    let mut unique: Vec<BlockRun> = Vec::new();
    for r in runs {
        let dup = unique.iter_mut().find(|u| {
            u.converged == r.converged
                && u.eps.iter().zip(&r.eps).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + y.abs()))
        });
        match dup {
            Some(u) => u.iterations = u.iterations.max(r.iterations),
            None => unique.push(r),
        }
    }
    unique
        .into_iter()
        .map(|run| {
            let (h, _) = block.entropy(&run.eps, &run.xi, None)?;
            Ok(Scored { run, h })
        })
        .collect()
}

/// Candidate with the smallest `h_s` for the unbarred block and, independently,
/// the smallest `h_i` for the barred block.
pub fn select_solution(scenario: &Scenario, candidates: &[Solution], params: &SolverParams) -> Result<Solution> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::Domain("no candidate solutions to select from".into()))?;
    let uncorrelated = first.uncorrelated;
    let full = Block::new(scenario, BlockKind::Full, uncorrelated, &params.noise);
    let barred = Block::new(scenario, BlockKind::Barred, uncorrelated, &params.noise);
    let mut full_runs = Vec::new();
    let mut bar_runs = Vec::new();
    for cand in candidates {
        let (mut f, mut b) = block_runs(&cand.state);
        f.converged = cand.converged;
        b.converged = cand.converged;
        f.iterations = cand.iterations;
        b.iterations = cand.iterations;
        f.residual = cand.residual;
        b.residual = cand.residual;
        full_runs.push(f);
        bar_runs.push(b);
    }
    let f = pick(score_block(&full, full_runs)?, "h_s")?;
    let b = pick(score_block(&barred, bar_runs)?, "h_i")?;
    Ok(Solution {
        state: state_from_blocks(scenario, &f.run, &b.run),
        converged: f.run.converged && b.run.converged,
        iterations: f.run.iterations.max(b.run.iterations),
        residual: f.run.residual.max(b.run.residual),
        uncorrelated,
    })
}

/// Per-block multi-start solve: each block is run from every initialization
/// and the entropy-minimizing converged point is kept.
fn solve_multistart(scenario: &Scenario, inits: &[Init], params: &SolverParams, uncorrelated: bool) -> Result<Solution> {
    scenario.validate()?;
    params.validate()?;
    let full = Block::new(scenario, BlockKind::Full, uncorrelated, &params.noise);
    let barred = Block::new(scenario, BlockKind::Barred, uncorrelated, &params.noise);
    let run_all = |block: &Block<'_>| -> Result<Vec<BlockRun>> {
        inits
            .par_iter()
            .map(|init| block.solve(&init.eps_for(block), params))
            .collect()
    };
    let f = pick(score_block(&full, run_all(&full)?)?, "h_s")?;
    let b = pick(score_block(&barred, run_all(&barred)?)?, "h_i")?;
    Ok(Solution {
        state: state_from_blocks(scenario, &f.run, &b.run),
        converged: f.run.converged && b.run.converged,
        iterations: f.run.iterations.max(b.run.iterations),
        residual: f.run.residual.max(b.run.residual),
        uncorrelated,
    })
}

/// Full pipeline: preset initializations, selection and assembly. Scalar
/// resolvents are used automatically when every correlation is the identity.
pub fn sum_rate(scenario: &Scenario, params: &SolverParams) -> Result<SumRateReport> {
    sum_rate_from(scenario, &Init::presets(), params)
}

pub fn sum_rate_from(scenario: &Scenario, inits: &[Init], params: &SolverParams) -> Result<SumRateReport> {
    let uncorrelated = scenario.is_uncorrelated(0.0);
    let sol = solve_multistart(scenario, inits, params, uncorrelated)?;
    assemble_sum_rate(scenario, &sol, params)
}

/// Largest per-coordinate mismatch `|F(v) - v| / (1 + |F(v)|)` of a state
/// under one application of the fixed-point map.
pub fn fixed_point_residual(scenario: &Scenario, solution: &Solution, params: &SolverParams) -> Result<f64> {
    let full = Block::new(scenario, BlockKind::Full, solution.uncorrelated, &params.noise);
    let barred = Block::new(scenario, BlockKind::Barred, solution.uncorrelated, &params.noise);
    let (rf, rb) = block_runs(&solution.state);
    let mut worst = 0.0_f64;
    for (block, run) in [(&full, &rf), (&barred, &rb)] {
        let xi = block.xi(&run.eps)?;
        let eps = block.eps_map(&run.xi)?;
        for (a, b) in run.xi.iter().zip(&xi).chain(run.eps.iter().zip(&eps)) {
            worst = worst.max((b - a).abs() / (1.0 + b.abs()));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{AzimuthSpectrumParams, Constellation, synthesize_correlation};
    use proptest::prelude::*;

    fn single_user(m: usize, n: usize, snr: f64, cst: Constellation) -> Scenario {
        Scenario::new(n, vec![TerminalProfile::new(Role::User, m, n, snr, cst)], vec![]).unwrap()
    }

    fn user_and_interferer(m: usize, snr: f64, cu: Constellation, ci: Constellation) -> Scenario {
        Scenario::new(
            m,
            vec![TerminalProfile::new(Role::User, m, m, snr, cu)],
            vec![TerminalProfile::new(Role::Interferer, m, m, snr, ci)],
        )
        .unwrap()
    }

    /// Bisection on `ε = ρ / (1 + ρ / (1 + ε))`, the β = 1 Gaussian fixed point.
    fn gaussian_oracle(rho: f64) -> f64 {
        let f = |e: f64| rho / (1.0 + rho / (1.0 + e)) - e;
        let (mut lo, mut hi) = (0.0, rho);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let eps = 0.5 * (lo + hi);
        let xi = 1.0 / (1.0 + eps);
        (1.0 + rho * xi).ln() - xi * eps + (1.0 + eps).ln()
    }

    #[test]
    fn zero_snr_gives_trivial_state() {
        let sc = single_user(2, 2, 0.0, Constellation::qpsk());
        let sol = solve_fixed_point(&sc, &Init::FullPower, &SolverParams::default()).unwrap();
        assert_eq!(sol.state.eps_users, vec![0.0]);
        assert!((sol.state.xi_users[0] - 1.0).abs() < 1e-15);
        let rep = assemble_sum_rate(&sc, &sol, &SolverParams::default()).unwrap();
        assert!(rep.sum_rate.abs() < 1e-12);
        assert_eq!(rep.h_i, 1.0 + PI.ln());
    }

    #[test]
    fn gaussian_matches_bisection_oracle() {
        for &(rho, frozen) in &[(1.0, 0.580_457_638_869_1), (10.0, 1.887_666_061_469_536), (100.0, 3.800_253_488_099_29)] {
            let sc = single_user(4, 4, rho, Constellation::gaussian());
            let rep = sum_rate(&sc, &SolverParams::default()).unwrap();
            assert!((rep.sum_rate - gaussian_oracle(rho)).abs() < 1e-8, "rho {rho}: {}", rep.sum_rate);
            assert!((rep.sum_rate - frozen).abs() < 1e-8);
        }
    }

    #[test]
    fn correlated_path_reduces_to_scalar_path() {
        let sc = user_and_interferer(3, 10.0, Constellation::qpsk(), Constellation::gaussian());
        let p = SolverParams::default();
        let a = solve_fixed_point(&sc, &Init::Zero, &p).unwrap();
        let b = solve_fixed_point_uncorrelated(&sc, &Init::Zero, &p).unwrap();
        for (x, y) in a.state.eps_users.iter().chain(&a.state.eps_bar).zip(b.state.eps_users.iter().chain(&b.state.eps_bar)) {
            assert!((x - y).abs() < 1e-10);
        }
        let ra = assemble_sum_rate(&sc, &a, &p).unwrap();
        let rb = assemble_sum_rate(&sc, &b, &p).unwrap();
        assert!((ra.sum_rate - rb.sum_rate).abs() < 1e-8);
    }

    #[test]
    fn silent_interferer_vanishes() {
        let p = SolverParams::default();
        let mut sc = user_and_interferer(2, 10.0, Constellation::qpsk(), Constellation::qpsk());
        sc.interferers[0].snr = 0.0;
        let with = sum_rate(&sc, &p).unwrap();
        let alone = sum_rate(&single_user(2, 2, 10.0, Constellation::qpsk()), &p).unwrap();
        assert!((with.sum_rate - alone.sum_rate).abs() < 1e-9);
    }

    #[test]
    fn silent_user_has_zero_rate() {
        let p = SolverParams::default();
        let mut sc = user_and_interferer(2, 10.0, Constellation::qpsk(), Constellation::qam16());
        sc.users[0].snr = 0.0;
        let rep = sum_rate(&sc, &p).unwrap();
        assert!(rep.sum_rate.abs() < 1e-10, "{}", rep.sum_rate);
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let t = synthesize_correlation(&AzimuthSpectrumParams::from_degrees(1.0, 0.0, 5.0).unwrap(), 3).unwrap();
        let mut sc = user_and_interferer(3, 3.0, Constellation::gaussian(), Constellation::gaussian());
        sc.users[0].correlation.tx = t;
        let p = SolverParams::default();
        let sol = solve_fixed_point(&sc, &Init::Zero, &p).unwrap();
        assert!(sol.converged);
        assert!(fixed_point_residual(&sc, &sol, &p).unwrap() < 10.0 * p.tol);
    }

    #[test]
    fn unconverged_state_is_refused_unless_forced() {
        let sc = single_user(2, 2, 10.0, Constellation::gaussian());
        let mut p = SolverParams { max_iter: 2, ..SolverParams::default() };
        let sol = solve_fixed_point(&sc, &Init::Zero, &p).unwrap();
        assert!(!sol.converged);
        assert!(matches!(assemble_sum_rate(&sc, &sol, &p), Err(Error::Unconverged { .. })));
        p.force = true;
        assert!(assemble_sum_rate(&sc, &sol, &p).is_ok());
    }

    #[test]
    fn selection_of_single_candidate_is_identity() {
        let sc = single_user(1, 1, 5.0, Constellation::qpsk());
        let p = SolverParams::default();
        let sol = solve_fixed_point(&sc, &Init::Zero, &p).unwrap();
        let sel = select_solution(&sc, &[sol.clone()], &p).unwrap();
        assert_eq!(sel.state, sol.state);
        let sel = select_solution(&sc, &[sol.clone(), sol.clone()], &p).unwrap();
        assert_eq!(sel.state, sol.state);
        assert!(select_solution(&sc, &[], &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn gaussian_rate_is_monotone_in_user_snr(db in -5.0f64..25.0, step in 0.5f64..5.0) {
            let p = SolverParams::default();
            let mk = |d: f64| {
                let mut sc = user_and_interferer(2, 10f64.powf(d / 10.0), Constellation::gaussian(), Constellation::qpsk());
                sc.interferers[0].snr = 10.0;
                sum_rate(&sc, &p).unwrap().sum_rate
            };
            prop_assert!(mk(db + step) >= mk(db) - 1e-9);
        }
    }
}

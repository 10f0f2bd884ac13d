//! Precoders from statistical channel knowledge.
//!
//! Gaussian users get statistical water-filling on their effective channel;
//! discrete users get the alternating power / eigenvector ascent. Both are
//! iterated against the replica fixed point, whose parameters are held fixed
//! inside each pass.
//!
//! Discrete precoders are parametrized as `G = U_T diag(sqrt(g)) V_G^H`, so the
//! symbol-domain Gram matrix is `W = G^H A^H A G = V_G diag(σ_A² g) V_G^H` and
//! the gradient of the information with respect to `W` is the MMSE matrix of
//! `s`.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;

use crate::channel::{Constellation, Role, Scenario};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, HermitianEigen};
use crate::replica::{self, Init, SolverParams};
use crate::su_channel::{self, NoiseRule};

/// Water-filling solution on `A^H A`.
#[derive(Clone, Debug)]
pub struct Waterfill {
    pub covariance: CMatrix,
    /// Per-mode powers, aligned with `eigenvalues` (descending).
    pub powers: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `1 / ν`.
    pub water_level: f64,
    /// The channel carried no energy; power was spread uniformly.
    pub degenerate: bool,
}

/// Statistical water-filling: `p_m = [1/ν - 1/λ_m]_+` with `λ_m` the
/// eigenvalues of `A^H A`, `Σ p_m = budget`.
pub fn waterfill(a: &CMatrix, budget: f64) -> Result<Waterfill> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Domain(format!("power budget must be positive, got {budget}")));
    }
    let gram = linalg::hermitize(&(a.adjoint() * a));
    let eig = HermitianEigen::new(&gram);
    let scale = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let lambda: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > 1e-14 * scale { l } else { 0.0 })
        .collect();
    let m = lambda.len();
    if scale <= 0.0 {
        let p = vec![budget / m as f64; m];
        return Ok(Waterfill {
            covariance: linalg::scaled_identity(m, budget / m as f64),
            powers: p,
            eigenvalues: lambda,
            water_level: f64::INFINITY,
            degenerate: true,
        });
    }
    let filled = |level: f64| -> f64 {
        lambda
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| (level - 1.0 / l).max(0.0))
            .sum()
    };
    let strongest = 1.0 / lambda[0];
    let (mut lo, mut hi) = (strongest, strongest + budget);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if filled(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    // The bisection fixes the active set; the level then follows exactly.
    let trial = 0.5 * (lo + hi);
    let active: Vec<usize> = (0..m).filter(|&i| lambda[i] > 0.0 && trial - 1.0 / lambda[i] > 0.0).collect();
    let level = (budget + active.iter().map(|&i| 1.0 / lambda[i]).sum::<f64>()) / active.len() as f64;
    let powers: Vec<f64> = (0..m)
        .map(|i| if active.contains(&i) { (level - 1.0 / lambda[i]).max(0.0) } else { 0.0 })
        .collect();
    let mut scaled = eig.vectors.clone();
    for (j, &p) in powers.iter().enumerate() {
        for i in 0..m {
            scaled[(i, j)] *= c(p);
        }
    }
    let covariance = linalg::hermitize(&(&scaled * eig.vectors.adjoint()));
    Ok(Waterfill {
        covariance,
        powers,
        eigenvalues: lambda,
        water_level: level,
        degenerate: false,
    })
}

#[derive(Clone, Debug)]
pub struct OptimizerParams {
    /// Initial eigenvector step `μ_F`.
    pub step_f: f64,
    /// Initial power step `μ_g`.
    pub step_g: f64,
    pub shrink: f64,
    /// Armijo constant on the predicted first-order increase.
    pub sufficient_increase: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Inner pass stops when one sweep gains less than this.
    pub inner_tol: f64,
    pub max_backtracks: usize,
    pub solver: SolverParams,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            step_f: 0.1,
            step_g: 0.1,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            outer_tol: 1e-6,
            max_outer: 50,
            max_inner: 100,
            inner_tol: 1e-9,
            max_backtracks: 30,
            solver: SolverParams::default(),
        }
    }
}

impl OptimizerParams {
    fn validate(&self) -> Result<()> {
        if !(self.step_f > 0.0 && self.step_g > 0.0) {
            return Err(Error::config("step", "optimizer steps must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config("shrink", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Optimizer output for one terminal.
#[derive(Clone, Debug)]
pub struct PrecoderOptState {
    pub g: CMatrix,
    /// `A G G^H A^H` at the final replica parameters.
    pub f: CMatrix,
    pub sigma_g2: Vec<f64>,
    pub v_g: CMatrix,
    /// Single-user information `I(z; x | A)` at the returned precoder, nats.
    pub objective: f64,
    /// Same quantity for the identity precoder at the initial replica state.
    pub baseline_objective: f64,
    /// Replica sum-rate (nats per rx antenna) after each accepted outer step,
    /// starting with the initial precoder.
    pub rate_trace: Vec<f64>,
    /// Single-user objective after every accepted inner step of the last pass.
    pub inner_trace: Vec<f64>,
    pub iteration: usize,
    pub converged: bool,
    /// A line search failed to find any increase before the inner tolerance.
    pub stalled: bool,
}

/// Eigen-decomposition of `T` with `σ_A = sqrt(ρ ξ λ_T)`.
struct Modes {
    u: CMatrix,
    sigma_a2: Vec<f64>,
}

fn modes(tx: &CMatrix, snr: f64, xi: f64) -> Modes {
    let e = HermitianEigen::new(tx);
    Modes {
        u: e.vectors.clone(),
        sigma_a2: e.values.iter().map(|&l| snr * xi * l.max(0.0)).collect(),
    }
}

fn effective(tx: &CMatrix, snr: f64, xi: f64) -> CMatrix {
    linalg::psd_sqrt(tx) * c((snr * xi).max(0.0).sqrt())
}

fn compose(u: &CMatrix, g: &[f64], v: &CMatrix) -> CMatrix {
    let d = linalg::real_diag(&g.iter().map(|x| x.max(0.0).sqrt()).collect::<Vec<_>>());
    u * d * v.adjoint()
}

fn gram_of(sigma_a2: &[f64], g: &[f64], v: &CMatrix) -> CMatrix {
    let d = linalg::real_diag(&sigma_a2.iter().zip(g).map(|(s, x)| s * x).collect::<Vec<_>>());
    linalg::hermitize(&(v * d * v.adjoint()))
}

/// Projects `g` onto `{g ≥ 0, Σ g = budget}` by zeroing negatives and rescaling.
fn renormalize(g: &mut [f64], budget: f64) {
    for x in g.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.iter_mut().for_each(|x| *x *= budget / s);
    } else {
        let n = g.len() as f64;
        g.iter_mut().for_each(|x| *x = budget / n);
    }
}

/// Nearest Hermitian matrix to `target` with spectrum `prescribed`, matched in
/// sorted order. Returns the eigenvector matrix with column `m` carrying
/// `prescribed[m]`.
fn impose_spectrum(target: &CMatrix, prescribed: &[f64]) -> CMatrix {
    let e = HermitianEigen::new(target);
    let mut order: Vec<usize> = (0..prescribed.len()).collect();
    order.sort_by(|&a, &b| prescribed[b].total_cmp(&prescribed[a]));
    let m = prescribed.len();
    let mut v = CMatrix::zeros(m, m);
    for (rank, &mode) in order.iter().enumerate() {
        v.set_column(mode, &e.vectors.column(rank));
    }
    v
}

struct DiscreteInner<'a> {
    modes: &'a Modes,
    constellation: &'a Constellation,
    noise: NoiseRule,
    budget: f64,
}

impl DiscreteInner<'_> {
    fn eval(&self, g: &[f64], v: &CMatrix) -> Result<su_channel::GramEvaluation> {
        su_channel::evaluate_gram(&gram_of(&self.modes.sigma_a2, g, v), self.constellation, &self.noise)
    }

    /// Power gradient `σ_A,m² [V^H E_s V]_mm`.
    fn power_gradient(&self, v: &CMatrix, mmse_s: &CMatrix) -> Vec<f64> {
        let rot = v.adjoint() * mmse_s * v;
        (0..self.modes.sigma_a2.len())
            .map(|m| self.modes.sigma_a2[m] * rot[(m, m)].re)
            .collect()
    }
}

/// One frozen-parameter pass of the alternating ascent.
fn discrete_pass(
    inner: &DiscreteInner<'_>,
    g: &mut Vec<f64>,
    v: &mut CMatrix,
    params: &OptimizerParams,
    trace: &mut Vec<f64>,
) -> Result<bool> {
    let alpha = params.sufficient_increase;
    let mut current = inner.eval(g, v)?;
    trace.push(current.mi);
    let mut mu_g = params.step_g;
    let mut mu_f = params.step_f;
    let mut stalled = false;
    for _ in 0..params.max_inner {
        let start = current.mi;

        // (a) power allocation on fixed eigenvectors
        let d = inner.power_gradient(v, &current.mmse_s);
        let gamma = d.iter().sum::<f64>() / d.len() as f64;
        let dir: Vec<f64> = d.iter().map(|x| x - gamma).collect();
        if dir.iter().any(|x| x.abs() > 0.0) {
            let mut mu = (2.0 * mu_g).min(1e3 * params.step_g);
            let mut accepted = false;
            for _ in 0..params.max_backtracks {
                let mut trial: Vec<f64> = g.iter().zip(&dir).map(|(x, s)| x + mu * s).collect();
                renormalize(&mut trial, inner.budget);
                let pred: f64 = d.iter().zip(trial.iter().zip(g.iter())).map(|(di, (t, x))| di * (t - x)).sum();
                let ev = inner.eval(&trial, v)?;
                if ev.mi > current.mi && ev.mi - current.mi >= alpha * pred.max(0.0) {
                    *g = trial;
                    current = ev;
                    trace.push(current.mi);
                    mu_g = mu;
                    accepted = true;
                    break;
                }
                mu *= params.shrink;
            }
            if !accepted {
                mu_g = params.step_g;
            }
        }

        // (b) eigenvectors of the quadratic form with fixed spectrum
        let w = gram_of(&inner.modes.sigma_a2, g, v);
        let prescribed: Vec<f64> = inner.modes.sigma_a2.iter().zip(g.iter()).map(|(s, x)| s * x).collect();
        let mut mu = (2.0 * mu_f).min(1e3 * params.step_f);
        for _ in 0..params.max_backtracks {
            let target = &w + &current.mmse_s * c(mu);
            let v_trial = impose_spectrum(&linalg::hermitize(&target), &prescribed);
            let w_trial = gram_of(&inner.modes.sigma_a2, g, &v_trial);
            let pred = linalg::trace_product_re(&current.mmse_s, &(&w_trial - &w));
            let ev = inner.eval(g, &v_trial)?;
            if ev.mi > current.mi && ev.mi - current.mi >= alpha * pred.max(0.0) {
                *v = v_trial;
                current = ev;
                trace.push(current.mi);
                mu_f = mu;
                break;
            }
            mu *= params.shrink;
        }

        let gain = current.mi - start;
        if gain < params.inner_tol {
            stalled = gain <= 0.0;
            break;
        }
    }
    Ok(stalled)
}

fn check_user(scenario: &Scenario, user: usize) -> Result<()> {
    if user >= scenario.users.len() {
        return Err(Error::Domain(format!(
            "user index {user} out of range ({} users)",
            scenario.users.len()
        )));
    }
    Ok(())
}

/// Alternates replica solves with per-user precoder updates for every user in
/// `users`, in parallel across users. A new set of precoders is kept only if
/// the replica sum-rate does not decrease, so `rate_trace` is nondecreasing.
pub fn optimize_users(scenario: &Scenario, users: &[usize], params: &OptimizerParams) -> Result<Vec<PrecoderOptState>> {
    params.validate()?;
    for &u in users {
        check_user(scenario, u)?;
    }
    let mut sc = scenario.clone();
    let solver = SolverParams {
        force: true,
        ..params.solver.clone()
    };

    let initial = replica::sum_rate(&sc, &solver)?;
    let mut state = initial.state.clone();
    let mut rate = initial.sum_rate;
    let mut rate_trace = vec![rate];

    struct PerUser {
        g: Vec<f64>,
        v: CMatrix,
        baseline: f64,
        inner_trace: Vec<f64>,
        stalled: bool,
    }
    let mut per: Vec<PerUser> = users
        .iter()
        .map(|&u| {
            let p = &sc.users[u];
            let m = modes(&p.correlation.tx, p.snr, state.xi_users[u]);
            let a = effective(&p.correlation.tx, p.snr, state.xi_users[u]);
            let baseline = su_channel::evaluate(&a, &linalg::identity(p.antennas), &p.constellation, &solver.noise)?.mi;
            let rot = m.u.adjoint() * &p.precoder;
            // Start from the configured precoder's power profile in the T basis.
            let mut g: Vec<f64> = (0..p.antennas).map(|i| rot.row(i).iter().map(|z| z.norm_sqr()).sum()).collect();
            renormalize(&mut g, p.antennas as f64);
            Ok(PerUser {
                g,
                v: m.u.clone(),
                baseline,
                inner_trace: Vec::new(),
                stalled: false,
            })
        })
        .collect::<Result<_>>()?;

    let mut converged = false;
    let mut iteration = 0;
    for outer in 1..=params.max_outer {
        iteration = outer;
        let updates: Vec<(CMatrix, PerUser)> = users
            .par_iter()
            .zip(per.par_iter())
            .map(|(&u, cur)| {
                let p = &sc.users[u];
                let xi = state.xi_users[u];
                let mut next = PerUser {
                    g: cur.g.clone(),
                    v: cur.v.clone(),
                    baseline: cur.baseline,
                    inner_trace: Vec::new(),
                    stalled: false,
                };
                let g_new = if p.constellation.is_gaussian() {
                    let a = effective(&p.correlation.tx, p.snr, xi);
                    let wf = waterfill(&a, p.antennas as f64)?;
                    let root = linalg::psd_sqrt(&wf.covariance);
                    let obj = su_channel::gaussian_mi(&a, &wf.covariance)?;
                    next.inner_trace.push(obj);
                    root
                } else {
                    let m = modes(&p.correlation.tx, p.snr, xi);
                    let inner = DiscreteInner {
                        modes: &m,
                        constellation: &p.constellation,
                        noise: solver.noise,
                        budget: p.antennas as f64,
                    };
                    next.stalled = discrete_pass(&inner, &mut next.g, &mut next.v, params, &mut next.inner_trace)?;
                    compose(&m.u, &next.g, &next.v)
                };
                Ok((g_new, next))
            })
            .collect::<Result<_>>()?;

        let change: f64 = users
            .iter()
            .zip(&updates)
            .map(|(&u, (g_new, _))| linalg::frobenius(&(g_new - &sc.users[u].precoder)))
            .fold(0.0, f64::max);

        let mut trial = sc.clone();
        for (&u, (g_new, _)) in users.iter().zip(&updates) {
            trial.users[u].precoder = g_new.clone();
        }
        // warm start plus the two extreme branches
        let inits = [Init::State(state.clone()), Init::Zero, Init::FullPower];
        let report = replica::sum_rate_from(&trial, &inits, &solver)?;
        debug!("outer {outer}: rate {} -> {}, precoder change {change:e}", rate, report.sum_rate);
        if report.sum_rate + 1e-12 < rate {
            warn!("outer step {outer} would lower the sum-rate; keeping the previous precoders");
            converged = true;
            break;
        }
        sc = trial;
        state = report.state;
        let gain = report.sum_rate - rate;
        rate = report.sum_rate;
        rate_trace.push(rate);
        per = updates.into_iter().map(|(_, p)| p).collect();
        if change < params.outer_tol || gain < params.outer_tol * (1.0 + rate.abs()) {
            converged = true;
            break;
        }
    }

    users
        .iter()
        .zip(per)
        .map(|(&u, pu)| {
            let p = &sc.users[u];
            let xi = state.xi_users[u];
            let a = effective(&p.correlation.tx, p.snr, xi);
            let ev = su_channel::evaluate(&a, &p.precoder, &p.constellation, &solver.noise)?;
            let q = linalg::hermitize(&(&p.precoder * p.precoder.adjoint()));
            let (sigma_g2, v_g) = if p.constellation.is_gaussian() {
                let e = HermitianEigen::new(&q);
                (e.values.clone(), e.vectors)
            } else {
                (pu.g.clone(), pu.v.clone())
            };
            Ok(PrecoderOptState {
                f: linalg::hermitize(&(&a * &q * a.adjoint())),
                g: p.precoder.clone(),
                sigma_g2,
                v_g,
                objective: ev.mi,
                baseline_objective: pu.baseline,
                rate_trace: rate_trace.clone(),
                inner_trace: pu.inner_trace,
                iteration,
                converged,
                stalled: pu.stalled,
            })
        })
        .collect()
}

/// Statistical water-filling iterated against the replica fixed point.
pub fn optimize_gaussian(scenario: &Scenario, user: usize, params: &OptimizerParams) -> Result<PrecoderOptState> {
    check_user(scenario, user)?;
    if !scenario.users[user].constellation.is_gaussian() {
        return Err(Error::Domain("water-filling applies to Gaussian inputs only".into()));
    }
    Ok(optimize_users(scenario, &[user], params)?.remove(0))
}

/// Alternating power / eigenvector ascent for a discrete user.
pub fn optimize_discrete(scenario: &Scenario, user: usize, params: &OptimizerParams) -> Result<PrecoderOptState> {
    check_user(scenario, user)?;
    let p = &scenario.users[user];
    if p.constellation.is_gaussian() {
        return Err(Error::Domain("discrete optimizer needs a finite constellation".into()));
    }
    let size = su_channel::enumeration_size(p.constellation.cardinality(), p.antennas);
    if size > su_channel::ENUMERATION_LIMIT as f64 {
        return Err(Error::Capacity {
            group: format!("users[{user}] symbol vectors"),
            size,
            limit: su_channel::ENUMERATION_LIMIT,
        });
    }
    Ok(optimize_users(scenario, &[user], params)?.remove(0))
}

/// Selfish design for interferer `l`: its precoder is optimized for its own
/// link to the receiver as if it were the only transmitter.
pub fn optimize_interferer(scenario: &Scenario, l: usize, params: &OptimizerParams) -> Result<PrecoderOptState> {
    let t = scenario.interferers.get(l).ok_or_else(|| {
        Error::Domain(format!(
            "interferer index {l} out of range ({} interferers)",
            scenario.interferers.len()
        ))
    })?;
    let mut alone = t.clone();
    alone.role = Role::User;
    let sc = Scenario::new(scenario.rx_antennas, vec![alone], vec![])?;
    if sc.users[0].constellation.is_gaussian() {
        optimize_gaussian(&sc, 0, params)
    } else {
        optimize_discrete(&sc, 0, params)
    }
}

/// Text form: a header line `precoder <M> <constellation>`, then `M` rows of
/// `M` whitespace-separated `re im` pairs; values round-trip exactly.
pub fn format_precoder(g: &CMatrix, constellation: &Constellation) -> String {
    let m = g.nrows();
    let mut out = format!("precoder {m} {}\n", constellation.name());
    for i in 0..m {
        let row: Vec<String> = (0..g.ncols()).map(|j| format!("{:?} {:?}", g[(i, j)].re, g[(i, j)].im)).collect();
        let _ = writeln!(out, "{}", row.join("  "));
    }
    out
}

pub fn parse_precoder(text: &str) -> Result<(CMatrix, String)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| Error::config("precoder", "empty file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 || head[0] != "precoder" {
        return Err(Error::config("precoder:1", "expected header `precoder <M> <constellation>`"));
    }
    let m: usize = head[1]
        .parse()
        .map_err(|_| Error::config("precoder:1", format!("bad dimension `{}`", head[1])))?;
    let mut g = CMatrix::zeros(m, m);
    for i in 0..m {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::config("precoder", format!("expected {m} rows, found {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(format!("precoder:{}", ln + 1), e.to_string()))?;
        if vals.len() != 2 * m {
            return Err(Error::config(
                format!("precoder:{}", ln + 1),
                format!("expected {} numbers, found {}", 2 * m, vals.len()),
            ));
        }
        for j in 0..m {
            g[(i, j)] = num_complex::Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
    }
    Ok((g, head[2].to_string()))
}

pub fn write_precoder(path: &Path, g: &CMatrix, constellation: &Constellation) -> Result<()> {
    std::fs::write(path, format_precoder(g, constellation))?;
    Ok(())
}

pub fn read_precoder(path: &Path) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_precoder(&text)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_correlation, AzimuthSpectrumParams, Role, TerminalProfile};
    use proptest::prelude::*;

    fn diag_channel(lambda: &[f64]) -> CMatrix {
        linalg::real_diag(&lambda.iter().map(|l| l.sqrt()).collect::<Vec<_>>())
    }

    #[test]
    fn waterfill_examples() {
        let wf = waterfill(&linalg::scaled_identity(3, 2.0), 3.0).unwrap();
        assert!(linalg::frobenius(&(wf.covariance - linalg::identity(3))) < 1e-12);
        let wf = waterfill(&diag_channel(&[1.0, 0.0]), 2.0).unwrap();
        assert!((wf.powers[0] - 2.0).abs() < 1e-12 && wf.powers[1] == 0.0);
        let wf = waterfill(&diag_channel(&[1.0, 0.25]), 2.0).unwrap();
        assert!((wf.powers[0] - 2.0).abs() < 1e-12 && wf.powers[1] == 0.0);
        assert!((wf.water_level - 3.0).abs() < 1e-12);
        let wf = waterfill(&CMatrix::zeros(2, 2), 2.0).unwrap();
        assert!(wf.degenerate);
        assert!(waterfill(&linalg::identity(2), 0.0).is_err());
    }

    fn spectrum_with_g(sigma_a2: &[f64], g: &[f64], v: &CMatrix) -> Vec<f64> {
        let mut expect: Vec<f64> = sigma_a2.iter().zip(g).map(|(s, x)| s * x).collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        let got = HermitianEigen::new(&gram_of(sigma_a2, g, v)).values;
        got.iter().zip(&expect).map(|(a, b)| (a - b).abs()).collect()
    }

    #[test]
    fn projection_keeps_prescribed_spectrum() {
        let target = CMatrix::from_fn(3, 3, |i, j| num_complex::Complex64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let target = linalg::hermitize(&target);
        let prescribed = [0.3, 2.0, 1.1];
        let v = impose_spectrum(&target, &prescribed);
        let w = gram_of(&[1.0, 1.0, 1.0], &prescribed, &v);
        let mut sorted = prescribed.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in HermitianEigen::new(&w).values.iter().zip(&sorted) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(spectrum_with_g(&[1.0, 2.0, 3.0], &[1.0, 0.5, 1.5], &v).iter().all(|d| *d < 1e-12));
    }

    /// Finite differences of `I(W)` along Hermitian directions reproduce
    /// `Re tr(E_s H)`, with a deterministic noise rule.
    #[test]
    fn mmse_is_the_information_gradient() {
        let rule = NoiseRule::GaussHermite { order: 12 };
        let cst = Constellation::qpsk();
        let mut rng = crate::rng::SimRng::new(21);
        for _ in 0..3 {
            let b = CMatrix::from_fn(2, 2, |_, _| rng.complex_normal() * 0.8);
            let w = linalg::hermitize(&(b.adjoint() * &b));
            let e = su_channel::evaluate_gram(&w, &cst, &rule).unwrap().mmse_s;
            let h = linalg::hermitize(&CMatrix::from_fn(2, 2, |_, _| rng.complex_normal()));
            let t = 1e-4;
            let up = su_channel::evaluate_gram(&(&w + &h * c(t)), &cst, &rule).unwrap().mi;
            let dn = su_channel::evaluate_gram(&(&w - &h * c(t)), &cst, &rule).unwrap().mi;
            let fd = (up - dn) / (2.0 * t);
            let an = linalg::trace_product_re(&e, &h);
            assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-3), "fd {fd} analytic {an}");
        }
    }

    fn one_user(m: usize, snr: f64, cst: Constellation, tx: Option<CMatrix>) -> Scenario {
        let mut u = TerminalProfile::new(Role::User, m, m, snr, cst);
        if let Some(t) = tx {
            u.correlation.tx = t;
        }
        Scenario::new(m, vec![u], vec![]).unwrap()
    }

    fn azimuth_t(m: usize) -> CMatrix {
        synthesize_correlation(&AzimuthSpectrumParams::from_degrees(1.0, 0.0, 5.0).unwrap(), m).unwrap()
    }

    #[test]
    fn identity_correlation_keeps_identity_precoder() {
        let sc = one_user(3, 2.0, Constellation::gaussian(), None);
        let st = optimize_gaussian(&sc, 0, &OptimizerParams::default()).unwrap();
        assert!(linalg::frobenius(&(&st.g - linalg::identity(3))) < 1e-6);
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn high_snr_waterfilling_flattens() {
        // Moderate correlation; with δ = 5° the weakest mode is still well
        // below the water level at 30 dB.
        let t = synthesize_correlation(&AzimuthSpectrumParams::from_degrees(0.5, 0.0, 30.0).unwrap(), 3).unwrap();
        let sc = one_user(3, 1000.0, Constellation::gaussian(), Some(t));
        let st = optimize_gaussian(&sc, 0, &OptimizerParams::default()).unwrap();
        assert!(st.sigma_g2.iter().all(|p| (p - 1.0).abs() < 0.05), "{:?}", st.sigma_g2);
    }

    #[test]
    fn correlated_low_snr_waterfilling_helps() {
        let sc = one_user(3, 10f64.powf(-0.5), Constellation::gaussian(), Some(azimuth_t(3)));
        let st = optimize_gaussian(&sc, 0, &OptimizerParams::default()).unwrap();
        assert!(st.objective > st.baseline_objective + 1e-6);
        assert!(st.rate_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(st.rate_trace.last().unwrap() > &st.rate_trace[0]);
        let tr = linalg::trace_re(&(&st.g * st.g.adjoint()));
        assert!((tr - 3.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_discrete_user_has_nothing_to_optimize() {
        let sc = one_user(1, 3.0, Constellation::qpsk(), None);
        let st = optimize_discrete(&sc, 0, &OptimizerParams::default()).unwrap();
        assert!((st.g[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let xi = replica::sum_rate(&sc, &SolverParams::default()).unwrap().state.xi_users[0];
        let k = su_channel::qpsk_kernel(1.0, (3.0 * xi).sqrt()).unwrap();
        assert!((st.objective - k.mi).abs() < 1e-10);
    }

    #[test]
    fn isotropic_precoder_is_stationary_for_white_qpsk() {
        let params = OptimizerParams {
            solver: SolverParams {
                noise: NoiseRule::GaussHermite { order: 10 },
                ..SolverParams::default()
            },
            ..OptimizerParams::default()
        };
        let sc = one_user(2, 2.0, Constellation::qpsk(), None);
        let st = optimize_discrete(&sc, 0, &params).unwrap();
        let gain = st.objective - st.baseline_objective;
        assert!(gain.abs() < 1e-6, "gain {gain}");
    }

    #[test]
    fn precoder_file_round_trips() {
        let g = CMatrix::from_fn(2, 2, |i, j| num_complex::Complex64::new(0.1 * i as f64 + 1.0 / 3.0, -(j as f64) / 7.0));
        let text = format_precoder(&g, &Constellation::qpsk());
        let (back, name) = parse_precoder(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(name, "qpsk");
        assert!(parse_precoder("precoder 2 qpsk\n1 0 0 0\n").is_err());
        assert!(parse_precoder("matrix 2\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn waterfill_satisfies_kkt(lambda in proptest::collection::vec(0.0f64..5.0, 1..6), budget in 0.1f64..10.0) {
            let wf = waterfill(&diag_channel(&lambda), budget).unwrap();
            prop_assume!(!wf.degenerate);
            let total: f64 = wf.powers.iter().sum();
            prop_assert!((total - budget).abs() < 1e-8 * budget.max(1.0));
            for (&p, &l) in wf.powers.iter().zip(&wf.eigenvalues) {
                if p > 0.0 {
                    prop_assert!((p + 1.0 / l - wf.water_level).abs() < 1e-8 * wf.water_level);
                } else if l > 0.0 {
                    prop_assert!(1.0 / l >= wf.water_level - 1e-8 * wf.water_level);
                }
            }
        }

        #[test]
        fn renormalized_powers_meet_the_budget(g in proptest::collection::vec(-1.0f64..3.0, 1..6)) {
            let mut g = g;
            let budget = g.len() as f64;
            renormalize(&mut g, budget);
            prop_assert!(g.iter().all(|x| *x >= 0.0));
            prop_assert!((g.iter().sum::<f64>() - budget).abs() < 1e-9);
        }
    }
}

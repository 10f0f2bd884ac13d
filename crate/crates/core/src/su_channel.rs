//! Mutual information and MMSE of the fixed channel `z = A x + w`, `x = G s`,
//! `w ~ CN(0, I)`.
//!
//! Everything below is evaluated in the symbol domain through the Gram matrix
//! `W = G^H A^H A G`: the input-output statistics of `s` depend on `(A, G)`
//! only through `W`. The MMSE matrix of `x` is recovered as `G E_s G^H`.

use std::f64::consts::LN_2;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, HermitianEigen};
use crate::quadrature;
use crate::rng::SimRng;

/// Largest constellation product `C^M` the exhaustive evaluators accept.
pub const ENUMERATION_LIMIT: usize = 1 << 16;

/// Which replica channel an effective matrix stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EffectiveRole {
    User(usize),
    Interferer(usize),
    InterfererBar(usize),
}

/// `A = sqrt(ρ ξ) T^{1/2}` for one terminal.
#[derive(Clone, Debug)]
pub struct EffectiveChannel {
    pub matrix: CMatrix,
    pub role: EffectiveRole,
}

impl EffectiveChannel {
    pub fn from_replica(role: EffectiveRole, snr: f64, xi: f64, tx_sqrt: &CMatrix) -> Self {
        Self {
            matrix: tx_sqrt * c((snr * xi).max(0.0).sqrt()),
            role,
        }
    }
}

/// MMSE matrix of `x` together with the input covariance it is bounded by.
#[derive(Clone, Debug)]
pub struct MmseMatrix {
    pub matrix: CMatrix,
    pub input_covariance: CMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarKernelResult {
    /// Nats per symbol.
    pub mi: f64,
    pub mmse: f64,
}

/// How the noise expectation of the exhaustive evaluators is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseRule {
    /// Antithetic Monte Carlo with `samples` draws (rounded up to even).
    MonteCarlo { samples: usize, seed: u64 },
    /// Tensor Gauss–Hermite rule of `order` nodes in each of the `2M` real
    /// noise coordinates; deterministic, practical only for `M ≤ 2`.
    GaussHermite { order: usize },
}

impl Default for NoiseRule {
    fn default() -> Self {
        NoiseRule::MonteCarlo {
            samples: 1024,
            seed: 0x5EED_0F_5EED,
        }
    }
}

/// Result of a symbol-domain evaluation.
#[derive(Clone, Debug)]
pub struct GramEvaluation {
    pub mi: f64,
    /// Monte-Carlo standard error of `mi`; zero for closed forms and quadrature.
    pub mi_std_error: f64,
    /// MMSE matrix of `s`, within `[0, I]`.
    pub mmse_s: CMatrix,
}

/// Full evaluation at `(A, G)`.
#[derive(Clone, Debug)]
pub struct SuEvaluation {
    pub mi: f64,
    pub mi_std_error: f64,
    pub mmse_s: CMatrix,
    pub mmse: MmseMatrix,
}

fn check_psd(p: &CMatrix, what: &str) -> Result<HermitianEigen> {
    if !p.is_square() {
        return Err(Error::Domain(format!("{what} must be square")));
    }
    let e = HermitianEigen::new(p);
    if e.min_value() < -1e-8 {
        return Err(Error::Domain(format!(
            "{what} is not positive semidefinite (min eigenvalue {:e})",
            e.min_value()
        )));
    }
    Ok(e)
}

/// `ln det(I + A P A^H)`.
pub fn gaussian_mi(a: &CMatrix, p: &CMatrix) -> Result<f64> {
    check_psd(p, "input covariance")?;
    if a.ncols() != p.nrows() {
        return Err(Error::Domain("channel and covariance dimensions differ".into()));
    }
    let n = a.nrows();
    let arg = linalg::hermitize(&(linalg::identity(n) + a * p * a.adjoint()));
    linalg::ln_det_hpd(&arg)
}

/// `(P^{-1} + A^H A)^{-1}`, evaluated as `P^{1/2} (I + P^{1/2} A^H A P^{1/2})^{-1} P^{1/2}`
/// so that singular `P` is handled on its range space.
pub fn gaussian_mmse_matrix(a: &CMatrix, p: &CMatrix) -> Result<MmseMatrix> {
    let e = check_psd(p, "input covariance")?;
    if a.ncols() != p.nrows() {
        return Err(Error::Domain("channel and covariance dimensions differ".into()));
    }
    let root = e.map(|l| l.max(0.0).sqrt());
    let m = p.nrows();
    let inner = linalg::hermitize(&(linalg::identity(m) + &root * a.adjoint() * a * &root));
    let inv = linalg::inv_hpd(&inner)?;
    Ok(MmseMatrix {
        matrix: linalg::hermitize(&(&root * inv * &root)),
        input_covariance: linalg::hermitize(p),
    })
}

/// `mmse = g²/(1+g²a²)`, `mi = ln(1+g²a²)`.
pub fn gaussian_kernel(g: f64, a: f64) -> ScalarKernelResult {
    let snr = g * g * a * a;
    ScalarKernelResult {
        mi: snr.ln_1p(),
        mmse: g * g / (1.0 + snr),
    }
}

/// Above this effective SNR the QPSK kernel is saturated to double precision.
const QPSK_SATURATION: f64 = 1500.0;

/// `log(1 + e^{-2x})` without overflow.
fn softplus_neg2(x: f64) -> f64 {
    if x >= 0.0 {
        (-2.0 * x).exp().ln_1p()
    } else {
        -2.0 * x + (2.0 * x).exp().ln_1p()
    }
}

/// Above this effective SNR the Hermite rules are skipped: the integrands
/// are concentrated near a few transitions and adaptive splitting wins.
const SPLIT_SNR: f64 = 0.5;
const SPLIT_REL_TOL: f64 = 1e-10;

fn expectation(snr: f64, f: impl Fn(f64) -> f64, cuts: &[f64]) -> Result<f64> {
    if snr < SPLIT_SNR {
        quadrature::normal_expectation(f, cuts)
    } else {
        quadrature::normal_expectation_split(f, cuts, SPLIT_REL_TOL)
    }
}

/// Unit-power QPSK `(mi, mmse)` at effective SNR `snr`.
fn qpsk_unit(snr: f64) -> Result<(f64, f64)> {
    if snr <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if snr >= QPSK_SATURATION {
        return Ok((2.0 * LN_2, 0.0));
    }
    let r = snr.sqrt();
    let cut = [r];
    // 1 - tanh(x) = 2 / (1 + e^{2x})
    let mmse = expectation(
        snr,
        |s| {
            let x = snr - r * s;
            if x > 0.0 {
                let e = (-2.0 * x).exp();
                2.0 * e / (1.0 + e)
            } else {
                2.0 / (1.0 + (2.0 * x).exp())
            }
        },
        &cut,
    )?;
    let loss = expectation(snr, |s| softplus_neg2(snr - r * s), &cut)?;
    Ok(((2.0 * LN_2 - 2.0 * loss).max(0.0), mmse.clamp(0.0, 1.0)))
}

/// Per-stream QPSK kernel.
pub fn qpsk_kernel(g: f64, a: f64) -> Result<ScalarKernelResult> {
    let (mi, mmse) = qpsk_unit(g * g * a * a)?;
    Ok(ScalarKernelResult { mi, mmse: g * g * mmse })
}

/// Posterior mean of the 4-PAM level `l ∈ {±1, ±3}` from `y = c l + n`,
/// written with `u = c y` and `log_r = -4c²`.
fn pam4_posterior_mean(u: f64, log_r: f64) -> f64 {
    let t = [u, -u, 3.0 * u + log_r, -3.0 * u + log_r];
    let m = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = t.iter().map(|&x| (x - m).exp()).collect();
    (e[0] - e[1] + 3.0 * (e[2] - e[3])) / (e[0] + e[1] + e[2] + e[3])
}

/// Unit-power 16-QAM MMSE at effective SNR `snr`.
///
/// Each quadrature is a 4-PAM with levels `{±1, ±3}/sqrt(10)` at real SNR
/// `2 snr`, i.e. `y = c l + n` with `c² = snr/5`; the MMSE of `s` is
/// `E[(l - p̂)²]/5`, integrated directly so that it keeps its relative
/// accuracy when small.
fn qam16_mmse_unit(snr: f64) -> Result<f64> {
    if snr <= 0.0 {
        return Ok(1.0);
    }
    let cc = (snr / 5.0).sqrt();
    let log_r = -4.0 * cc * cc;
    let mut acc = 0.0;
    for level in [1.0, 3.0] {
        // decision boundaries y ∈ {0, ±2c} expressed in the noise variable
        let cuts = [-2.0 * cc - level * cc, -level * cc, 2.0 * cc - level * cc];
        let v = expectation(
            snr,
            |n| {
                let d = level - pam4_posterior_mean(cc * (cc * level + n), log_r);
                d * d
            },
            &cuts,
        )?;
        acc += 0.5 * v;
    }
    Ok((acc / 5.0).clamp(0.0, 1.0))
}

/// Knot spacing of the 16-QAM information integral.
const QAM16_KNOT: f64 = 0.5;
/// Beyond this SNR the remaining information is below 1e-15 nats.
const QAM16_SATURATION: f64 = 400.0;

/// `∫_0^{kΔ} mmse(t) dt` at knots `k = 0, 1, ...`, extended on demand.
static QAM16_KNOTS: Mutex<Vec<f64>> = Mutex::new(Vec::new());

fn qam16_segment(lo: f64, hi: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    // A failed inner expectation surfaces as NaN and is reported below.
    let f = |t: f64| qam16_mmse_unit(t).unwrap_or(f64::NAN);
    let r = quadrature::adaptive(&f, lo, hi, 1e-15, 1e-12, 200);
    match r {
        Ok(r) if r.value.is_finite() => Ok(r.value),
        _ => Err(Error::Integration {
            context: format!("16-QAM information integral on [{lo}, {hi}]"),
        }),
    }
}

/// 8-point Gauss–Legendre nodes and weights on `[-1, 1]` (positive half).
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Integral over a piece shorter than one knot, where the MMSE is smooth
/// enough for a fixed rule.
fn qam16_tail(lo: f64, hi: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut acc = 0.0;
    for (x, w) in GL8 {
        acc += w * (qam16_mmse_unit(mid - half * x)? + qam16_mmse_unit(mid + half * x)?);
    }
    Ok(acc * half)
}

fn qam16_mi_unit(snr: f64) -> Result<f64> {
    if snr <= 0.0 {
        return Ok(0.0);
    }
    let snr = snr.min(QAM16_SATURATION);
    let k = (snr / QAM16_KNOT).floor() as usize;
    let base = {
        let mut knots = QAM16_KNOTS.lock().unwrap_or_else(|p| p.into_inner());
        if knots.is_empty() {
            knots.push(0.0);
        }
        while knots.len() <= k {
            let j = knots.len() - 1;
            let seg = qam16_segment(j as f64 * QAM16_KNOT, (j + 1) as f64 * QAM16_KNOT)?;
            let next = knots[j] + seg;
            knots.push(next);
        }
        knots[k]
    };
    let tail = qam16_tail(k as f64 * QAM16_KNOT, snr)?;
    Ok((base + tail).min(4.0 * 2.0 * LN_2))
}

/// Per-stream 16-QAM kernel; information from the I-MMSE integral.
pub fn qam16_kernel(g: f64, a: f64) -> Result<ScalarKernelResult> {
    let snr = g * g * a * a;
    let mmse = qam16_mmse_unit(snr)?;
    let mi = qam16_mi_unit(snr)?;
    Ok(ScalarKernelResult { mi, mmse: g * g * mmse })
}

/// Unit-power `(mi, mmse)` of a named constellation at effective SNR `snr`.
pub fn unit_kernel(kind: ConstellationKind, snr: f64) -> Result<(f64, f64)> {
    match kind {
        ConstellationKind::Gaussian => {
            let r = gaussian_kernel(1.0, snr.max(0.0).sqrt());
            Ok((r.mi, r.mmse))
        }
        ConstellationKind::Qpsk => qpsk_unit(snr),
        ConstellationKind::Qam16 => Ok((qam16_mi_unit(snr)?, qam16_mmse_unit(snr)?)),
        ConstellationKind::Custom => Err(Error::Domain(
            "no scalar kernel for custom constellations; use the exhaustive evaluator".into(),
        )),
    }
}

pub fn kernel(constellation: &Constellation, g: f64, a: f64) -> Result<ScalarKernelResult> {
    let (mi, mmse) = unit_kernel(constellation.kind(), g * g * a * a)?;
    Ok(ScalarKernelResult { mi, mmse: g * g * mmse })
}

/// Sum of per-stream kernel informations.
pub fn parallel_mi(gains: &[f64], a: &[f64], constellation: &Constellation) -> Result<f64> {
    if gains.len() != a.len() {
        return Err(Error::Domain(format!(
            "gain vector has length {}, channel vector {}",
            gains.len(),
            a.len()
        )));
    }
    let mut total = 0.0;
    for (&g, &am) in gains.iter().zip(a) {
        total += kernel(constellation, g, am)?.mi;
    }
    Ok(total)
}

/// `C^M` as `f64`, for guard messages that must not overflow.
pub fn enumeration_size(cardinality: usize, antennas: usize) -> f64 {
    (cardinality as f64).powi(antennas as i32)
}

fn enumerate_symbols(points: &[Complex64], m: usize) -> Vec<Vec<Complex64>> {
    let c_len = points.len();
    let n = c_len.pow(m as u32);
    (0..n)
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let p = points[idx % c_len];
                    idx /= c_len;
                    p
                })
                .collect()
        })
        .collect()
}

/// Noise draws `v ~ CN(0, I_M)` with weights summing to one, grouped so that
/// antithetic partners share a group (for the standard error).
fn noise_nodes(rule: &NoiseRule, m: usize) -> Result<(Vec<Vec<Complex64>>, Vec<f64>, usize)> {
    match *rule {
        NoiseRule::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Domain("noise_samples must be at least 1".into()));
            }
            let pairs = samples.div_ceil(2);
            let mut rng = SimRng::with_stream(seed, 0x6E6F_6973_65);
            let mut nodes = Vec::with_capacity(2 * pairs);
            for _ in 0..pairs {
                let v: Vec<Complex64> = (0..m).map(|_| rng.complex_normal()).collect();
                let neg: Vec<Complex64> = v.iter().map(|z| -z).collect();
                nodes.push(v);
                nodes.push(neg);
            }
            let w = 1.0 / nodes.len() as f64;
            let weights = vec![w; nodes.len()];
            Ok((nodes, weights, 2))
        }
        NoiseRule::GaussHermite { order } => {
            if order == 0 {
                return Err(Error::Domain("Gauss-Hermite order must be positive".into()));
            }
            let dims = 2 * m;
            let total = (order as f64).powi(dims as i32);
            if total > 4.0e6 {
                return Err(Error::Capacity {
                    group: "noise quadrature".into(),
                    size: total,
                    limit: 4_000_000,
                });
            }
            // Re and Im of CN(0,1) are N(0, 1/2): density ∝ e^{-x²}.
            let (x, w) = quadrature::gauss_hermite(order);
            let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
            let count = total as usize;
            let mut nodes = Vec::with_capacity(count);
            let mut weights = Vec::with_capacity(count);
            for mut idx in 0..count {
                let mut coord = vec![0.0; dims];
                let mut weight = 1.0;
                for slot in coord.iter_mut() {
                    let k = idx % order;
                    idx /= order;
                    *slot = x[k];
                    weight *= w[k] * inv_sqrt_pi;
                }
                nodes.push((0..m).map(|j| Complex64::new(coord[2 * j], coord[2 * j + 1])).collect());
                weights.push(weight);
            }
            Ok((nodes, weights, 1))
        }
    }
}

/// One symbol vector per orbit of the largest rotation `s -> u s`
/// (`u ∈ {j, -1}`) that maps the alphabet onto itself; returns the
/// representatives and the orbit size.
fn orbit_representatives(points: &[Complex64], m: usize) -> (Vec<usize>, usize) {
    let n_pts = points.len();
    let n = n_pts.pow(m as u32);
    let find = |z: Complex64| points.iter().position(|p| (p - z).norm() <= 1e-12);
    for (u, order) in [(Complex64::new(0.0, 1.0), 4usize), (Complex64::new(-1.0, 0.0), 2)] {
        let perm: Option<Vec<usize>> = points.iter().map(|&p| find(p * u)).collect();
        let Some(perm) = perm else { continue };
        let rotate = |mut idx: usize| {
            let mut out = 0;
            let mut place = 1;
            for _ in 0..m {
                out += perm[idx % n_pts] * place;
                idx /= n_pts;
                place *= n_pts;
            }
            out
        };
        let mut seen = vec![false; n];
        let mut reps = Vec::with_capacity(n / order);
        for i in 0..n {
            if seen[i] {
                continue;
            }
            reps.push(i);
            let mut j = i;
            for _ in 0..order {
                seen[j] = true;
                j = rotate(j);
            }
        }
        // E_s is only rotation invariant as a whole if every orbit is full.
        if reps.len() * order == n {
            return (reps, order);
        }
    }
    ((0..n).collect(), 1)
}

/// Exhaustive evaluation in the symbol domain.
///
/// `I = M ln C - C^{-M} Σ_i E_v ln Σ_j exp(-‖y_i - y_j + v‖² + ‖v‖²)` with
/// `y_j = W^{1/2} s_j`, which is the noise-marginalized form of the sum over
/// `‖A(x_i - x_j) + w‖²` after the `‖w‖²` term is cancelled analytically.
/// The same pass yields `E_s = I - E[ŝ ŝ^H]`.
pub fn discrete_exhaustive_gram(w: &CMatrix, constellation: &Constellation, rule: &NoiseRule) -> Result<GramEvaluation> {
    let m = w.nrows();
    let points = constellation.points();
    if points.is_empty() {
        return Err(Error::Domain("exhaustive evaluation needs a discrete constellation".into()));
    }
    let size = enumeration_size(points.len(), m);
    if size > ENUMERATION_LIMIT as f64 {
        return Err(Error::Capacity {
            group: format!("{}^{} symbol vectors", points.len(), m),
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    check_psd(w, "Gram matrix")?;
    let root = linalg::psd_sqrt(w);
    let symbols = enumerate_symbols(points, m);
    let y: Vec<Complex64> = symbols
        .iter()
        .flat_map(|s| (0..m).map(|r| (0..m).map(|k| root[(r, k)] * s[k]).sum::<Complex64>()).collect::<Vec<_>>())
        .collect();
    let (nodes, weights, group) = noise_nodes(rule, m)?;
    let n_sym = symbols.len();
    // The noise law is invariant under s -> u s for |u| = 1, so symbols in one
    // orbit of a rotational symmetry of the alphabet share their expectation.
    let (reps, _) = orbit_representatives(points, m);

    // Per noise node: (mean LSE over sent symbols, mean ŝ ŝ^H).
    let per_node: Vec<(f64, Vec<Complex64>)> = nodes
        .par_iter()
        .map(|v| {
            let v_norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let mut lse_sum = 0.0;
            let mut outer = vec![Complex64::new(0.0, 0.0); m * m];
            let mut expo = vec![0.0; n_sym];
            let mut r = vec![Complex64::new(0.0, 0.0); m];
            let mut shat = vec![Complex64::new(0.0, 0.0); m];
            for &i in &reps {
                let yi = &y[i * m..(i + 1) * m];
                for k in 0..m {
                    r[k] = yi[k] + v[k];
                }
                let mut top = f64::NEG_INFINITY;
                for (j, yj) in y.chunks_exact(m).enumerate() {
                    let mut d = 0.0;
                    for k in 0..m {
                        d += (r[k] - yj[k]).norm_sqr();
                    }
                    let e = v_norm - d;
                    expo[j] = e;
                    top = top.max(e);
                }
                let mut z = 0.0;
                shat.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
                for (j, s) in symbols.iter().enumerate() {
                    let p = (expo[j] - top).exp();
                    z += p;
                    for k in 0..m {
                        shat[k] += s[k] * p;
                    }
                }
                lse_sum += top + z.ln();
                let inv = 1.0 / z;
                for a in 0..m {
                    for b in 0..m {
                        outer[a * m + b] += shat[a] * shat[b].conj() * (inv * inv);
                    }
                }
            }
            let scale = 1.0 / reps.len() as f64;
            outer.iter_mut().for_each(|o| *o *= scale);
            (lse_sum * scale, outer)
        })
        .collect();

    let mut mean_lse = 0.0;
    let mut second = CMatrix::zeros(m, m);
    for ((lse, outer), &wt) in per_node.iter().zip(&weights) {
        mean_lse += wt * lse;
        for a in 0..m {
            for b in 0..m {
                second[(a, b)] += outer[a * m + b] * wt;
            }
        }
    }
    let std_error = if group == 2 && per_node.len() >= 4 {
        let groups: Vec<f64> = per_node.chunks(2).map(|p| 0.5 * (p[0].0 + p[1].0)).collect();
        let g = groups.len() as f64;
        let mean = groups.iter().sum::<f64>() / g;
        let var = groups.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g - 1.0);
        (var / g).sqrt()
    } else {
        0.0
    };
    let mi = (m as f64 * (points.len() as f64).ln() - mean_lse).max(0.0);
    let mmse_s = linalg::spectrum_clip(&(linalg::identity(m) - linalg::hermitize(&second)), 0.0, 1.0);
    Ok(GramEvaluation {
        mi,
        mi_std_error: std_error,
        mmse_s,
    })
}

/// Symbol-domain evaluation with the cheapest exact path available: closed
/// form for Gaussian inputs, per-stream kernels when `W` is diagonal,
/// exhaustive enumeration otherwise.
pub fn evaluate_gram(w: &CMatrix, constellation: &Constellation, rule: &NoiseRule) -> Result<GramEvaluation> {
    let m = w.nrows();
    if constellation.is_gaussian() {
        let arg = linalg::hermitize(&(linalg::identity(m) + w));
        return Ok(GramEvaluation {
            mi: linalg::ln_det_hpd(&arg)?,
            mi_std_error: 0.0,
            mmse_s: linalg::inv_hpd(&arg)?,
        });
    }
    if constellation.kind() != ConstellationKind::Custom && linalg::is_diagonal(w, 1e-12) {
        let mut mi = 0.0;
        let mut diag = Vec::with_capacity(m);
        for k in 0..m {
            let (i, e) = unit_kernel(constellation.kind(), w[(k, k)].re.max(0.0))?;
            mi += i;
            diag.push(e);
        }
        return Ok(GramEvaluation {
            mi,
            mi_std_error: 0.0,
            mmse_s: linalg::real_diag(&diag),
        });
    }
    discrete_exhaustive_gram(w, constellation, rule)
}

pub fn gram(a: &CMatrix, g: &CMatrix) -> CMatrix {
    let b = a * g;
    linalg::hermitize(&(b.adjoint() * b))
}

/// Evaluation at `(A, G)`: information `I(z; x | A)` and MMSE matrix of `x = G s`.
pub fn evaluate(a: &CMatrix, g: &CMatrix, constellation: &Constellation, rule: &NoiseRule) -> Result<SuEvaluation> {
    let ge = evaluate_gram(&gram(a, g), constellation, rule)?;
    let p = linalg::hermitize(&(g * g.adjoint()));
    let e = linalg::hermitize(&(g * &ge.mmse_s * g.adjoint()));
    Ok(SuEvaluation {
        mi: ge.mi,
        mi_std_error: ge.mi_std_error,
        mmse: MmseMatrix {
            matrix: e,
            input_covariance: p,
        },
        mmse_s: ge.mmse_s,
    })
}

/// Exhaustive information with seeded Monte Carlo over the noise.
pub fn discrete_mi_exhaustive(
    a: &CMatrix,
    constellation: &Constellation,
    g: &CMatrix,
    noise_samples: usize,
    seed: u64,
) -> Result<GramEvaluation> {
    discrete_exhaustive_gram(
        &gram(a, g),
        constellation,
        &NoiseRule::MonteCarlo {
            samples: noise_samples,
            seed,
        },
    )
}

/// Exhaustive MMSE matrix of `x = G s`, clipped to `[0, G G^H]`.
pub fn discrete_mmse_matrix(
    a: &CMatrix,
    constellation: &Constellation,
    g: &CMatrix,
    z_samples: usize,
    seed: u64,
) -> Result<MmseMatrix> {
    let ge = discrete_mi_exhaustive(a, constellation, g, z_samples, seed)?;
    Ok(MmseMatrix {
        matrix: linalg::hermitize(&(g * &ge.mmse_s * g.adjoint())),
        input_covariance: linalg::hermitize(&(g * g.adjoint())),
    })
}

//! One-dimensional quadrature: Gauss–Hermite rules for Gaussian expectations
//! and globally adaptive Gauss–Kronrod (7/15) for everything else.

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Hermite orders tried by [`normal_expectation`], in order.
pub const HERMITE_ORDERS: [usize; 4] = [64, 128, 256, 512];

/// Relative agreement required between two successive Hermite orders.
pub const HERMITE_REL_TOL: f64 = 1e-10;

/// Nodes and weights of the `n`-point Gauss–Hermite rule for weight `exp(-x^2)`.
///
/// Starting nodes are the eigenvalues of the Jacobi matrix (Golub–Welsch);
/// each is then polished by Newton steps on the orthonormal Hermite
/// recurrence, which also gives the weight `1 / Σ_j p_j(x)^2`. Weights below
/// the double range come out as zero. Nodes are returned in descending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let jacobi = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guess: Vec<f64> = nalgebra::SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guess.sort_by(|a, b| b.total_cmp(a));

    // Orthonormal polynomials p_j(x) for weight e^{-x^2}, scaled by
    // e^{-x^2/2} to stay in range: returns (p_n, p_{n-1}, Σ_{j<n} p_j^2).
    let eval = |x: f64| {
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let mut p_prev = 0.0;
        let mut p = PIM4 * (-0.5 * x * x).exp();
        let mut sum_sq = 0.0;
        for j in 1..=n {
            sum_sq += p * p;
            let jf = j as f64;
            let next = x * (2.0 / jf).sqrt() * p - ((jf - 1.0) / jf).sqrt() * p_prev;
            p_prev = p;
            p = next;
        }
        (p, p_prev, sum_sq)
    };

    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &z0) in guess.iter().enumerate() {
        let mut z = z0;
        for _ in 0..8 {
            let (p, p_prev, _) = eval(z);
            // d/dz of the scaled polynomial: sqrt(2n) p_{n-1} - z p_n
            let dp = (2.0 * nf).sqrt() * p_prev - z * p;
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, _, sum_sq) = eval(z);
        x[i] = z;
        w[i] = if sum_sq > 0.0 { 1.0 / sum_sq * (-z * z).exp() } else { 0.0 };
    }
    // Enforce exact symmetry of the rule.
    for i in 0..n / 2 {
        let z = 0.5 * (x[i] - x[n - 1 - i]);
        let wt = 0.5 * (w[i] + w[n - 1 - i]);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Rule for `E f(S)`, `S ~ N(0, 1)`: nodes scaled by sqrt(2), weights by 1/sqrt(pi).
/// Nodes whose weight underflows are dropped.
#[derive(Clone, Debug)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn build_normal_rule(n: usize) -> NormalRule {
    let (x, w) = gauss_hermite(n);
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let (nodes, weights) = x
        .iter()
        .zip(&w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi * inv_sqrt_pi))
        .unzip();
    NormalRule { nodes, weights }
}

/// Cached standard-normal rule with `HERMITE_ORDERS[idx]` points.
pub fn normal_rule(idx: usize) -> &'static NormalRule {
    static RULES: [OnceLock<NormalRule>; 4] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    RULES[idx].get_or_init(|| build_normal_rule(HERMITE_ORDERS[idx]))
}

impl NormalRule {
    pub fn apply(&self, f: &impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// `E f(S)` for `S ~ N(0,1)`.
///
/// Gauss–Hermite with 64, 128, 256, 512 nodes is tried first and accepted as
/// soon as two successive orders agree to `HERMITE_REL_TOL` (relative to
/// `max(|E f|, 1e-6)`). Integrands with a sharp feature (e.g. a logistic
/// transition of width ~1/sqrt(snr)) can defeat the rule; the fallback is an
/// adaptive Gauss–Kronrod integral of `f(s) φ(s)` over `[-40, 40]`, split at
/// `breakpoints`.
pub fn normal_expectation(f: impl Fn(f64) -> f64, breakpoints: &[f64]) -> Result<f64> {
    let mut prev = normal_rule(0).apply(&f);
    for idx in 1..HERMITE_ORDERS.len() {
        let next = normal_rule(idx).apply(&f);
        if (next - prev).abs() <= HERMITE_REL_TOL * next.abs().max(1e-6) {
            return Ok(next);
        }
        prev = next;
    }
    let inv_sqrt_tau = 1.0 / std::f64::consts::TAU.sqrt();
    let g = |s: f64| f(s) * (-0.5 * s * s).exp() * inv_sqrt_tau;
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|b| b.is_finite() && b.abs() < 40.0)
        .collect();
    cuts.push(-40.0);
    cuts.push(40.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive(&g, pair[0], pair[1], 1e-16, 1e-13, 2000)
            .map_err(|e| match e {
                Error::Integration { context } => Error::Integration {
                    context: format!("normal expectation fallback: {context}"),
                },
                other => other,
            })?
            .value;
    }
    Ok(total)
}

/// `E f(S)` for `S ~ N(0,1)` by adaptive Gauss–Kronrod on `[-40, 40]` split at
/// `breakpoints`, skipping the Hermite rules. Meant for integrands that are
/// small except near a few sharp features, where the target is relative
/// accuracy `rel_tol` on a small expectation.
pub fn normal_expectation_split(f: impl Fn(f64) -> f64, breakpoints: &[f64], rel_tol: f64) -> Result<f64> {
    let inv_sqrt_tau = 1.0 / std::f64::consts::TAU.sqrt();
    let g = |s: f64| f(s) * (-0.5 * s * s).exp() * inv_sqrt_tau;
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|b| b.is_finite() && b.abs() < 40.0)
        .collect();
    cuts.extend([-40.0, 40.0]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive(&g, pair[0], pair[1], 1e-300, rel_tol, 2000)?.value;
    }
    Ok(total)
}

// Kronrod 15-point abscissae/weights and embedded Gauss 7-point weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * half, ((k - g) * half).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol |I|)`;
/// fails with [`Error::Integration`] after `max_intervals` subdivisions.
pub fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (v, e) = kronrod15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut count = 1;
    loop {
        if !total.is_finite() {
            return Err(Error::Integration {
                context: format!("non-finite integrand on [{a}, {b}]"),
            });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if count >= max_intervals {
            // Accept if the remaining error is at rounding level of the terms.
            if err <= 1e3 * f64::EPSILON * heap.iter().map(|p| p.value.abs()).sum::<f64>() {
                break;
            }
            return Err(Error::Integration {
                context: format!(
                    "[{a}, {b}]: error estimate {err:e} after {count} subintervals"
                ),
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; keep it and stop refining.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod15(f, worst.a, mid);
        let (v2, e2) = kronrod15(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        count += 1;
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals: count,
    })
}

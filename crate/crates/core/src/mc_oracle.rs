//! Finite-size Monte-Carlo estimate of the ergodic information `I(y; x_s)`
//! carried by all users jointly, with interference treated as noise.
//!
//! Channels are drawn from the Kronecker model and the discrete symbols of
//! every terminal are marginalized exactly by enumeration. Gaussian terminals
//! are folded into the noise covariance and removed by whitening, so for
//! all-Gaussian scenarios only the channel average is sampled.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelRealization, ChannelSampler, Scenario, TerminalProfile};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::rng::{derive_seed, SimRng};

/// Largest discrete enumeration per group (all users, or all interferers).
pub const GROUP_LIMIT: usize = 1 << 16;
/// Largest joint user-interferer enumeration.
pub const JOINT_LIMIT: usize = 1 << 20;
/// Noise draws per channel realization when the caller has no preference.
pub const DEFAULT_NOISE_SAMPLES: usize = 64;

/// Per-receive-antenna estimate in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub realizations: usize,
    pub seed: u64,
    /// `h(y|H) / N`.
    pub entropy_y: f64,
    /// `h(y|x_s, H) / N`.
    pub entropy_y_given_s: f64,
}

/// Least-squares quadratic `c0 + c1/M + c2/M²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationFit {
    pub coefficients: [f64; 3],
    pub predicted_limit: f64,
    /// Root-mean-square residual of the fit.
    pub fit_residual: f64,
}

/// Discrete symbol vectors of one terminal, `C^M` of them.
fn symbol_vectors(t: &TerminalProfile) -> Vec<Vec<Complex64>> {
    let pts = t.constellation.points();
    let m = t.antennas;
    let n = pts.len().pow(m as u32);
    (0..n)
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let p = pts[idx % pts.len()];
                    idx /= pts.len();
                    p
                })
                .collect()
        })
        .collect()
}

fn group_size(terminals: &[TerminalProfile]) -> f64 {
    terminals
        .iter()
        .filter(|t| !t.constellation.is_gaussian())
        .map(|t| (t.constellation.cardinality() as f64).powi(t.antennas as i32))
        .product()
}

fn check_capacity(scenario: &Scenario) -> Result<(usize, usize)> {
    let users = group_size(&scenario.users);
    let interferers = group_size(&scenario.interferers);
    for (name, size) in [("users", users), ("interferers", interferers)] {
        if size > GROUP_LIMIT as f64 {
            return Err(Error::Capacity {
                group: format!("discrete {name}"),
                size,
                limit: GROUP_LIMIT,
            });
        }
    }
    if users * interferers > JOINT_LIMIT as f64 {
        return Err(Error::Capacity {
            group: "discrete users and interferers jointly".into(),
            size: users * interferers,
            limit: JOINT_LIMIT,
        });
    }
    Ok((users as usize, interferers as usize))
}

/// All noiseless receive points `Σ_t B_t s_t` of the discrete terminals in a
/// group, flattened with stride `N`; a single zero point if there are none.
fn group_points(n: usize, links: &[(&TerminalProfile, CMatrix)]) -> Vec<Complex64> {
    let mut points = vec![Complex64::new(0.0, 0.0); n];
    for (t, b) in links {
        if t.constellation.is_gaussian() {
            continue;
        }
        let images: Vec<Vec<Complex64>> = symbol_vectors(t)
            .iter()
            .map(|s| (0..n).map(|r| (0..t.antennas).map(|k| b[(r, k)] * s[k]).sum()).collect())
            .collect();
        let mut next = Vec::with_capacity(points.len() * images.len());
        for img in &images {
            for p in points.chunks_exact(n) {
                next.extend(p.iter().zip(img).map(|(a, b)| a + b));
            }
        }
        points = next;
    }
    points
}

/// `L^{-1} x` for every stride-`n` point.
fn whiten(l: &CMatrix, points: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(points.len());
    for p in points.chunks_exact(n) {
        let mut v = nalgebra::DVector::from_column_slice(p);
        l.solve_lower_triangular_mut(&mut v);
        out.extend(v.iter());
    }
    out
}

fn lower_cholesky(k: &CMatrix) -> Result<CMatrix> {
    nalgebra::Cholesky::new(linalg::hermitize(k))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("noise covariance is not positive definite".into()))
}

fn sq_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// `ln Σ_{a,b} exp(‖ñ‖² − ‖r − a − b‖²)` with `r = ñ + a_t + b_t`.
fn joint_lse(r: &[Complex64], noise_norm: f64, a_pts: &[Complex64], b_pts: &[Complex64], n: usize, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    let mut top = f64::NEG_INFINITY;
    let mut diff = vec![Complex64::new(0.0, 0.0); n];
    for a in a_pts.chunks_exact(n) {
        for k in 0..n {
            diff[k] = r[k] - a[k];
        }
        for b in b_pts.chunks_exact(n) {
            let e = noise_norm - sq_dist(&diff, b);
            top = top.max(e);
            buf.push(e);
        }
    }
    top + buf.iter().map(|e| (e - top).exp()).sum::<f64>().ln()
}

struct RealizationTerms {
    mi: f64,
    h_y: f64,
    h_y_s: f64,
}

/// One channel realization: log-det of the Gaussian parts plus the
/// noise-averaged enumeration terms.
fn realization(scenario: &Scenario, h: &ChannelRealization, noise_samples: usize, seed: u64) -> Result<RealizationTerms> {
    let n = scenario.rx_antennas;
    let users: Vec<(&TerminalProfile, CMatrix)> = scenario
        .users
        .iter()
        .zip(&h.user_channels)
        .map(|(t, hk)| (t, hk * &t.precoder))
        .collect();
    let interferers: Vec<(&TerminalProfile, CMatrix)> = scenario
        .interferers
        .iter()
        .zip(&h.interferer_channels)
        .map(|(t, hl)| (t, hl * &t.precoder))
        .collect();

    let gaussian_cov = |links: &[(&TerminalProfile, CMatrix)]| {
        links
            .iter()
            .filter(|(t, _)| t.constellation.is_gaussian())
            .fold(CMatrix::zeros(n, n), |acc, (_, b)| acc + b * b.adjoint())
    };
    let k2 = linalg::identity(n) + gaussian_cov(&interferers);
    let k1 = &k2 + gaussian_cov(&users);
    let ld1 = linalg::ln_det_hpd(&linalg::hermitize(&k1))?;
    let ld2 = linalg::ln_det_hpd(&linalg::hermitize(&k2))?;
    let constant = n as f64 * (1.0 + PI.ln());

    let any_discrete = scenario.terminals().any(|t| !t.constellation.is_gaussian());
    if !any_discrete || noise_samples == 0 {
        if any_discrete {
            return Err(Error::Domain("noise_samples must be at least 1 for discrete inputs".into()));
        }
        return Ok(RealizationTerms {
            mi: ld1 - ld2,
            h_y: constant + ld1,
            h_y_s: constant + ld2,
        });
    }

    let l1 = lower_cholesky(&k1)?;
    let l2 = lower_cholesky(&k2)?;
    let u = group_points(n, &users);
    let v = group_points(n, &interferers);
    let (nu, nv) = (u.len() / n, v.len() / n);
    let u1 = whiten(&l1, &u, n);
    let v1 = whiten(&l1, &v, n);
    let v2 = whiten(&l2, &v, n);
    let zero = vec![Complex64::new(0.0, 0.0); n];

    let gaussian_terms: Vec<&CMatrix> = users
        .iter()
        .chain(&interferers)
        .filter(|(t, _)| t.constellation.is_gaussian())
        .map(|(_, b)| b)
        .collect();
    let n_user_gaussian = users.iter().filter(|(t, _)| t.constellation.is_gaussian()).count();

    let mut rng = SimRng::with_stream(seed, 0x6D63_6E6F);
    let pairs = noise_samples.div_ceil(2);
    let mut buf = Vec::with_capacity(nu * nv);
    let (mut t1_sum, mut t2_sum) = (0.0, 0.0);
    for _ in 0..pairs {
        let su = rng.index(nu);
        let sv = rng.index(nv);
        // receiver noise plus the Gaussian terminals, split into the part
        // that stays unknown given x_s (interferers) and the users' part
        let w: DVector<Complex64> = DVector::from_fn(n, |_, _| rng.complex_normal());
        let mut n_users = DVector::zeros(n);
        let mut n_int = w;
        for (idx, b) in gaussian_terms.iter().enumerate() {
            let s = DVector::from_fn(b.ncols(), |_, _| rng.complex_normal());
            if idx < n_user_gaussian {
                n_users += *b * s;
            } else {
                n_int += *b * s;
            }
        }
        for sign in [1.0, -1.0] {
            let mut e1 = (&n_int + &n_users) * Complex64::new(sign, 0.0);
            l1.solve_lower_triangular_mut(&mut e1);
            let mut e2 = &n_int * Complex64::new(sign, 0.0);
            l2.solve_lower_triangular_mut(&mut e2);

            let r1: Vec<Complex64> = (0..n).map(|k| e1[k] + u1[su * n + k] + v1[sv * n + k]).collect();
            t1_sum += joint_lse(&r1, e1.norm_squared(), &u1, &v1, n, &mut buf);
            let r2: Vec<Complex64> = (0..n).map(|k| e2[k] + v2[sv * n + k]).collect();
            t2_sum += joint_lse(&r2, e2.norm_squared(), &zero, &v2, n, &mut buf);
        }
    }
    let count = (2 * pairs) as f64;
    let (t1, t2) = (t1_sum / count, t2_sum / count);
    let (ln_u, ln_v) = ((nu as f64).ln(), (nv as f64).ln());
    let h_y = constant + ld1 + ln_u + ln_v - t1;
    let h_y_s = constant + ld2 + ln_v - t2;
    Ok(RealizationTerms {
        mi: ld1 - ld2 + ln_u - t1 + t2,
        h_y,
        h_y_s,
    })
}

/// Ergodic information per receive antenna from `n_realizations` channel
/// draws; realization `r` uses the seed `derive_seed(seed, r)`.
pub fn estimate_mi(scenario: &Scenario, n_realizations: usize, noise_samples: usize, seed: u64) -> Result<McEstimate> {
    scenario.validate()?;
    if n_realizations == 0 {
        return Err(Error::Domain("at least one channel realization is required".into()));
    }
    check_capacity(scenario)?;
    let sampler = ChannelSampler::new(scenario);
    let terms: Vec<RealizationTerms> = (0..n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let rs = derive_seed(seed, r);
            realization(scenario, &sampler.sample(rs), noise_samples, rs)
        })
        .collect::<Result<_>>()?;

    let n = scenario.rx_antennas as f64;
    let count = terms.len() as f64;
    let mean = |f: fn(&RealizationTerms) -> f64| terms.iter().map(f).sum::<f64>() / count;
    let value = mean(|t| t.mi);
    let std_error = if terms.len() > 1 {
        let var = terms.iter().map(|t| (t.mi - value).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        value: value / n,
        std_error: std_error / n,
        realizations: terms.len(),
        seed,
        entropy_y: mean(|t| t.h_y) / n,
        entropy_y_given_s: mean(|t| t.h_y_s) / n,
    })
}

/// Information per receive antenna for one given channel realization, with
/// the noise expectation estimated from `noise_samples` draws.
pub fn realization_mi(scenario: &Scenario, channels: &ChannelRealization, noise_samples: usize, seed: u64) -> Result<f64> {
    scenario.validate()?;
    check_capacity(scenario)?;
    let shapes_match = channels.user_channels.len() == scenario.users.len()
        && channels.interferer_channels.len() == scenario.interferers.len()
        && scenario
            .users
            .iter()
            .zip(&channels.user_channels)
            .chain(scenario.interferers.iter().zip(&channels.interferer_channels))
            .all(|(t, h)| h.shape() == (scenario.rx_antennas, t.antennas));
    if !shapes_match {
        return Err(Error::Domain("channel realization does not match the scenario".into()));
    }
    Ok(realization(scenario, channels, noise_samples, seed)?.mi / scenario.rx_antennas as f64)
}

/// Least-squares quadratic in `1/M` through per-antenna estimates.
pub fn extrapolate(sizes: &[usize], estimates: &[McEstimate]) -> Result<ExtrapolationFit> {
    if sizes.len() != estimates.len() {
        return Err(Error::Domain("sizes and estimates differ in length".into()));
    }
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Domain(format!(
            "extrapolation needs at least 3 distinct sizes, got {}",
            distinct.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Domain("system sizes must be positive".into()));
    }
    let x = DMatrix::from_fn(sizes.len(), 3, |i, j| (1.0 / sizes[i] as f64).powi(j as i32));
    let y = DVector::from_iterator(estimates.len(), estimates.iter().map(|e| e.value));
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(format!("extrapolation fit failed: {e}")))?;
    let resid = &x * &coef - &y;
    Ok(ExtrapolationFit {
        coefficients: [coef[0], coef[1], coef[2]],
        predicted_limit: coef[0],
        fit_residual: (resid.norm_squared() / sizes.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Constellation, Role};
    use std::f64::consts::LN_2;

    fn single(m: usize, n: usize, snr: f64, cst: Constellation) -> Scenario {
        Scenario::new(n, vec![TerminalProfile::new(Role::User, m, n, snr, cst)], vec![]).unwrap()
    }

    fn estimate(value: f64) -> McEstimate {
        McEstimate {
            value,
            std_error: 0.0,
            realizations: 1,
            seed: 0,
            entropy_y: 0.0,
            entropy_y_given_s: 0.0,
        }
    }

    #[test]
    fn zero_snr_carries_no_information() {
        for cst in [Constellation::gaussian(), Constellation::qpsk()] {
            let mut sc = single(2, 2, 0.0, cst.clone());
            sc.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, 0.0, cst));
            let e = estimate_mi(&sc, 20, 8, 1).unwrap();
            assert!(e.value.abs() <= 2.0 * e.std_error + 1e-12, "{e:?}");
        }
    }

    fn fixed(h: f64) -> ChannelRealization {
        ChannelRealization {
            user_channels: vec![CMatrix::from_element(1, 1, Complex64::new(h, 0.0))],
            interferer_channels: vec![],
            seed: 0,
        }
    }

    #[test]
    fn scalar_awgn_with_fixed_gain() {
        let sc = single(1, 1, 1.0, Constellation::gaussian());
        let v = realization_mi(&sc, &fixed(1.0), 0, 0).unwrap();
        assert!((v - LN_2).abs() < 1e-15);
        // Rayleigh average of ln(1 + |h|²), |h|² ~ Exp(1): e·E1(1)
        let e = estimate_mi(&sc, 4000, 0, 3).unwrap();
        let exact = 0.596_347_362_323_194;
        assert!((e.value - exact).abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn fixed_scalar_qpsk_matches_kernel() {
        let sc = single(1, 1, 1.0, Constellation::qpsk());
        let h = 1.3;
        let v = realization_mi(&sc, &fixed(h), 2_000_000, 6).unwrap();
        let want = crate::su_channel::qpsk_kernel(1.0, h).unwrap().mi;
        assert!((v - want).abs() < 1e-3, "{v} vs {want}");
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let mut sc = single(2, 2, 3.0, Constellation::qpsk());
        sc.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, 3.0, Constellation::gaussian()));
        let a = estimate_mi(&sc, 16, 8, 99).unwrap();
        let b = estimate_mi(&sc, 16, 8, 99).unwrap();
        assert_eq!(a, b);
        let c = estimate_mi(&sc, 16, 8, 100).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn entropies_are_ordered() {
        let mut sc = single(2, 2, 4.0, Constellation::qpsk());
        sc.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, 4.0, Constellation::qpsk()));
        let e = estimate_mi(&sc, 32, 8, 5).unwrap();
        assert!(e.entropy_y >= e.entropy_y_given_s);
        assert!((e.entropy_y - e.entropy_y_given_s - e.value).abs() < 1e-12);
    }

    /// Samples `y` and evaluates both Gaussian densities directly.
    fn fully_sampled_gaussian(sc: &Scenario, realizations: usize, draws: usize, seed: u64) -> (f64, f64) {
        let n = sc.rx_antennas;
        let sampler = ChannelSampler::new(sc);
        let mut rng = SimRng::new(seed ^ 0xABCD);
        let mut vals = Vec::new();
        for r in 0..realizations {
            let h = sampler.sample(derive_seed(seed, r as u64 + 1_000_000));
            let hs = &h.user_channels[0];
            let hi = &h.interferer_channels[0];
            let ki = linalg::identity(n) + hi * hi.adjoint();
            let ky = &ki + hs * hs.adjoint();
            let (inv_i, inv_y) = (linalg::inv_hpd(&ki).unwrap(), linalg::inv_hpd(&ky).unwrap());
            let (ld_i, ld_y) = (linalg::ln_det_hpd(&ki).unwrap(), linalg::ln_det_hpd(&ky).unwrap());
            let mut acc = 0.0;
            for _ in 0..draws {
                let draw = |m: usize, rng: &mut SimRng| DVector::from_fn(m, |_, _| rng.complex_normal());
                let xs = draw(hs.ncols(), &mut rng);
                let xi = draw(hi.ncols(), &mut rng);
                let w = draw(n, &mut rng);
                let y = hs * &xs + hi * xi + w;
                let d = &y - hs * &xs;
                let q_cond = (d.adjoint() * &inv_i * &d)[(0, 0)].re;
                let q = (y.adjoint() * &inv_y * &y)[(0, 0)].re;
                // ln p(y|x_s) − ln p(y)
                acc += (q + ld_y) - (q_cond + ld_i);
            }
            vals.push(acc / draws as f64 / n as f64);
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        (m, (var / vals.len() as f64).sqrt())
    }

    #[test]
    fn gaussian_closed_form_agrees_with_full_sampling() {
        let mut sc = single(2, 2, 5.0, Constellation::gaussian());
        sc.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, 5.0, Constellation::gaussian()));
        let e = estimate_mi(&sc, 2000, 0, 11).unwrap();
        let (v, se) = fully_sampled_gaussian(&sc, 2000, 20, 11);
        let tol = 3.0 * (e.std_error.powi(2) + se.powi(2)).sqrt();
        assert!((e.value - v).abs() <= tol, "{} vs {v} (tol {tol})", e.value);
    }

    #[test]
    fn discrete_gaussian_interferer_mix_matches_gaussian_limit_at_low_snr() {
        // at small SNR QPSK and Gaussian inputs carry the same information
        let snr = 0.02;
        let mut q = single(2, 2, snr, Constellation::qpsk());
        q.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, snr, Constellation::gaussian()));
        let mut g = q.clone();
        g.users[0].constellation = Constellation::gaussian();
        let eq = estimate_mi(&q, 200, 16, 2).unwrap();
        let eg = estimate_mi(&g, 200, 0, 2).unwrap();
        assert!((eq.value - eg.value).abs() < 0.05 * eg.value, "{} vs {}", eq.value, eg.value);
    }

    #[test]
    fn std_error_scales_with_inverse_root() {
        let mut sc = single(2, 2, 3.0, Constellation::gaussian());
        sc.interferers.push(TerminalProfile::new(Role::Interferer, 2, 2, 3.0, Constellation::gaussian()));
        let a = estimate_mi(&sc, 400, 0, 7).unwrap();
        let b = estimate_mi(&sc, 1600, 0, 8).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn capacity_guard_names_the_group() {
        let sc = single(9, 9, 1.0, Constellation::qpsk());
        match estimate_mi(&sc, 1, 2, 0) {
            Err(Error::Capacity { group, .. }) => assert!(group.contains("users")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extrapolation_recovers_a_quadratic() {
        let sizes = [4, 5, 6, 7, 8, 9, 10, 11];
        let f = |m: usize| 1.25 - 0.7 / m as f64 + 2.3 / (m * m) as f64;
        let est: Vec<McEstimate> = sizes.iter().map(|&m| estimate(f(m))).collect();
        let fit = extrapolate(&sizes, &est).unwrap();
        for (got, want) in fit.coefficients.iter().zip([1.25, -0.7, 2.3]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(fit.fit_residual < 1e-12);
    }

    #[test]
    fn extrapolation_of_constants() {
        let sizes = [3, 6, 9];
        let est: Vec<McEstimate> = sizes.iter().map(|_| estimate(0.42)).collect();
        let fit = extrapolate(&sizes, &est).unwrap();
        assert!((fit.predicted_limit - 0.42).abs() < 1e-12);
        assert!(extrapolate(&[4, 4, 5], &est).is_err());
    }
}

//! Two-user Gaussian rate region from replica log-det terms.
//!
//! For fixed input covariances the region is the pentagon
//! `R1 ≤ c1, R2 ≤ c2, R1 + R2 ≤ c12`, each bound being the large-system sum
//! rate of the users in the subset (interferers stay as noise). The boundary
//! is sampled through its support function along weights `(cos t, sin t)`.

use anyhow::{bail, Result};
use replica_mac::channel::Scenario;
use replica_mac::precoder::{self, OptimizerParams};
use replica_mac::replica::{self, SolverParams};

use crate::args::Precoding;

/// Pentagon bounds in nats per receive antenna.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionConstraints {
    pub c1: f64,
    pub c2: f64,
    pub c12: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub angle: f64,
    pub w1: f64,
    pub w2: f64,
    /// Maximizing corner.
    pub r1: f64,
    pub r2: f64,
    /// `max w·R` over the region.
    pub support: f64,
}

#[derive(Clone, Debug)]
pub struct RateRegionSpec {
    pub scenario: Scenario,
    pub boundary_samples: usize,
    /// Overrides both users' SNR when set (linear).
    pub snr: Option<f64>,
    pub precoding: Precoding,
}

fn subset(scenario: &Scenario, keep: &[usize]) -> Result<Scenario> {
    let users = keep.iter().map(|&k| scenario.users[k].clone()).collect();
    Ok(Scenario::new(scenario.rx_antennas, users, scenario.interferers.clone())?)
}

pub fn constraints(scenario: &Scenario, solver: &SolverParams) -> Result<RegionConstraints> {
    let rate = |keep: &[usize]| -> Result<f64> { Ok(replica::sum_rate(&subset(scenario, keep)?, solver)?.sum_rate) };
    Ok(RegionConstraints {
        c1: rate(&[0])?,
        c2: rate(&[1])?,
        c12: rate(&[0, 1])?,
    })
}

/// Support points of the pentagon at `samples` angles in `[0, π/2]`.
pub fn boundary(c: &RegionConstraints, samples: usize) -> Vec<BoundaryPoint> {
    // corners clipped so that a dominated single-user bound stays consistent
    let c12 = c.c12.min(c.c1 + c.c2);
    let lower1 = (c12 - c.c2).max(0.0);
    let lower2 = (c12 - c.c1).max(0.0);
    (0..samples)
        .map(|j| {
            let angle = std::f64::consts::FRAC_PI_2 * j as f64 / (samples - 1) as f64;
            let (w2, w1) = angle.sin_cos();
            // user 1 decoded last when it carries the larger weight
            let (r1, r2) = if w1 >= w2 { (c.c1.min(c12), lower2) } else { (lower1, c.c2.min(c12)) };
            BoundaryPoint {
                angle,
                w1,
                w2,
                r1,
                r2,
                support: w1 * r1 + w2 * r2,
            }
        })
        .collect()
}

/// Pentagon bounds and sampled boundary for the requested precoding.
pub fn rate_region(spec: &RateRegionSpec, solver: &SolverParams) -> Result<(RegionConstraints, Vec<BoundaryPoint>)> {
    let mut sc = spec.scenario.clone();
    if sc.users.len() != 2 {
        bail!(replica_mac::Error::config("users", format!("rate region needs exactly 2 users, found {}", sc.users.len())));
    }
    if spec.boundary_samples < 3 {
        bail!(replica_mac::Error::config("samples", "at least 3 boundary samples are required"));
    }
    if sc.terminals().any(|t| !t.constellation.is_gaussian()) {
        bail!(replica_mac::Error::Domain("rate region is defined for Gaussian inputs only".into()));
    }
    if let Some(snr) = spec.snr {
        for u in &mut sc.users {
            u.snr = snr;
        }
    }
    if spec.precoding == Precoding::Waterfill {
        let params = OptimizerParams {
            solver: solver.clone(),
            ..OptimizerParams::default()
        };
        let states = precoder::optimize_users(&sc, &[0, 1], &params)?;
        for (u, st) in states.into_iter().enumerate() {
            sc.users[u].precoder = st.g;
        }
    }
    let c = constraints(&sc, solver)?;
    Ok((c, boundary(&c, spec.boundary_samples)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_hits_the_pentagon_corners() {
        let c = RegionConstraints { c1: 1.0, c2: 0.8, c12: 1.5 };
        let b = boundary(&c, 5);
        assert_eq!((b[0].r1, b[0].r2), (1.0, 0.5));
        assert!((b[4].r1 - 0.7).abs() < 1e-15 && b[4].r2 == 0.8);
        assert!((b[0].support - 1.0).abs() < 1e-15);
        for p in &b {
            // no corner beats the support point
            for (x, y) in [(1.0, 0.5), (0.7, 0.8), (1.0, 0.0), (0.0, 0.8)] {
                assert!(p.w1 * x + p.w2 * y <= p.support + 1e-15);
            }
        }
    }
}

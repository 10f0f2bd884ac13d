//! System description and Kronecker-model channel sampling.
//!
//! A [`Scenario`] is one receiver with `N` antennas, `K` users and `L`
//! interferers. Each terminal's channel is `H = sqrt(ρ/M) R^{1/2} W T^{1/2}`
//! with `W` i.i.d. CN(0, 1). Transmit correlation is typically synthesized from
//! a Gaussian power azimuth spectrum on a uniform linear array.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, HermitianEigen};
use crate::quadrature;
use crate::rng::SimRng;

/// Uniform linear array with a Gaussian power azimuth spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzimuthSpectrumParams {
    /// Nearest-neighbour spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Mean angle of departure, radians.
    pub mean_angle: f64,
    /// RMS angle spread, radians.
    pub angle_spread: f64,
}

impl AzimuthSpectrumParams {
    pub fn new(antenna_spacing: f64, mean_angle: f64, angle_spread: f64) -> Result<Self> {
        if !(antenna_spacing > 0.0 && antenna_spacing.is_finite()) {
            return Err(Error::Domain(format!(
                "antenna spacing must be positive, got {antenna_spacing}"
            )));
        }
        if !(angle_spread > 0.0 && angle_spread.is_finite()) {
            return Err(Error::Domain(format!(
                "angle spread must be positive, got {angle_spread}"
            )));
        }
        if !(-PI..=PI).contains(&mean_angle) {
            return Err(Error::Domain(format!(
                "mean angle must lie in [-pi, pi], got {mean_angle}"
            )));
        }
        Ok(Self {
            antenna_spacing,
            mean_angle,
            angle_spread,
        })
    }

    pub fn from_degrees(antenna_spacing: f64, mean_angle_deg: f64, angle_spread_deg: f64) -> Result<Self> {
        Self::new(
            antenna_spacing,
            mean_angle_deg.to_radians(),
            angle_spread_deg.to_radians(),
        )
    }
}

/// Integral of the azimuth spectrum at antenna lag `lag`, split into real and
/// imaginary parts. The `1/(2πδ²)` prefactor is omitted since the result is
/// normalized afterwards.
fn lag_integral(p: &AzimuthSpectrumParams, lag: usize) -> Result<Complex64> {
    let k = lag as f64;
    let phase = move |phi: f64| TAU * p.antenna_spacing * k * phi.sin();
    let envelope = move |phi: f64| {
        let d = phi - p.mean_angle;
        (-(d * d) / (2.0 * p.angle_spread * p.angle_spread)).exp()
    };
    let re = |phi: f64| envelope(phi) * phase(phi).cos();
    let im = |phi: f64| envelope(phi) * phase(phi).sin();

    // Split at the spectrum peak and a few spreads either side so the
    // adaptive rule sees a resolved bump.
    let mut cuts = vec![-PI, PI];
    for n in [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0] {
        let x = p.mean_angle + n * p.angle_spread;
        if x > -PI && x < PI {
            cuts.push(x);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut acc = Complex64::new(0.0, 0.0);
    for w in cuts.windows(2) {
        let r = quadrature::adaptive(&re, w[0], w[1], 1e-15, 1e-13, 4000)?;
        let i = quadrature::adaptive(&im, w[0], w[1], 1e-15, 1e-13, 4000)?;
        acc += Complex64::new(r.value, i.value);
    }
    Ok(acc)
}

/// Transmit correlation matrix of an `m`-element array under a Gaussian power
/// azimuth spectrum, normalized to trace `m`.
///
/// The matrix is Hermitian Toeplitz with unit diagonal; eigenvalues below zero
/// (rounding only) are clipped and the trace restored.
pub fn synthesize_correlation(params: &AzimuthSpectrumParams, m: usize) -> Result<CMatrix> {
    if m == 0 {
        return Err(Error::Domain("array needs at least one antenna".into()));
    }
    let mut lags = Vec::with_capacity(m);
    for lag in 0..m {
        let v = lag_integral(params, lag).map_err(|e| match e {
            Error::Integration { context } => Error::Integration {
                context: format!("correlation entry ({lag}, 0): {context}"),
            },
            other => other,
        })?;
        lags.push(v);
    }
    let norm = lags[0].re;
    let mut t = CMatrix::from_fn(m, m, |a, b| {
        if a >= b {
            lags[a - b] / norm
        } else {
            lags[b - a].conj() / norm
        }
    });
    for i in 0..m {
        t[(i, i)] = c(1.0);
    }
    let eig = HermitianEigen::new(&t);
    if eig.min_value() < 0.0 {
        t = eig.map(|l| l.max(0.0));
        let scale = m as f64 / linalg::trace_re(&t);
        t *= c(scale);
    }
    Ok(t)
}

/// Transmit/receive correlation of one link, each normalized to its dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationPair {
    pub tx: CMatrix,
    pub rx: CMatrix,
}

impl CorrelationPair {
    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            tx: linalg::identity(m),
            rx: linalg::identity(n),
        }
    }

    /// Hermitian-symmetrizes both matrices, checks PSD and rescales to trace `M`, `N`.
    pub fn normalized(tx: CMatrix, rx: CMatrix) -> Result<Self> {
        Ok(Self {
            tx: normalize_correlation(tx, "tx")?,
            rx: normalize_correlation(rx, "rx")?,
        })
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        linalg::is_identity(&self.tx, tol) && linalg::is_identity(&self.rx, tol)
    }
}

fn normalize_correlation(m: CMatrix, side: &str) -> Result<CMatrix> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Domain(format!("{side} correlation must be square and non-empty")));
    }
    let h = linalg::hermitize(&m);
    let eig = HermitianEigen::new(&h);
    let scale = linalg::trace_re(&h).abs().max(f64::MIN_POSITIVE);
    if eig.min_value() < -1e-10 * scale {
        return Err(Error::Domain(format!(
            "{side} correlation is not positive semidefinite (min eigenvalue {:e})",
            eig.min_value()
        )));
    }
    let h = eig.map(|l| l.max(0.0));
    let tr = linalg::trace_re(&h);
    if tr <= 0.0 {
        return Err(Error::Domain(format!("{side} correlation has zero trace")));
    }
    Ok(h * c(m.nrows() as f64 / tr))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Gaussian,
    Qpsk,
    Qam16,
    /// Any other zero-mean unit-energy point set; only the exhaustive
    /// evaluators support it.
    Custom,
}

/// Per-antenna symbol alphabet. Discrete alphabets have zero mean and unit energy.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn gaussian() -> Self {
        Self {
            kind: ConstellationKind::Gaussian,
            points: Vec::new(),
        }
    }

    /// `(±1 ± j)/sqrt(2)`.
    pub fn qpsk() -> Self {
        let s = FRAC_1_SQRT_2;
        let points = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|&(re, im)| Complex64::new(re * s, im * s))
            .collect();
        Self {
            kind: ConstellationKind::Qpsk,
            points,
        }
    }

    /// `{±1, ±3} + j{±1, ±3}`, scaled by `1/sqrt(10)`.
    pub fn qam16() -> Self {
        let s = 1.0 / 10f64.sqrt();
        let levels = [-3.0, -1.0, 1.0, 3.0];
        let points = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re * s, im * s)))
            .collect();
        Self {
            kind: ConstellationKind::Qam16,
            points,
        }
    }

    pub fn custom(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("custom constellation needs at least one point".into()));
        }
        let n = points.len() as f64;
        let mean: Complex64 = points.iter().sum::<Complex64>() / n;
        let energy: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
        if mean.norm() > 1e-12 || (energy - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "custom constellation must have zero mean and unit energy (mean {mean}, energy {energy})"
            )));
        }
        Ok(Self {
            kind: ConstellationKind::Custom,
            points,
        })
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Some(Self::gaussian()),
            "qpsk" => Some(Self::qpsk()),
            "qam16" | "16qam" | "16-qam" => Some(Self::qam16()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ConstellationKind::Gaussian => "gaussian",
            ConstellationKind::Qpsk => "qpsk",
            ConstellationKind::Qam16 => "qam16",
            ConstellationKind::Custom => "custom",
        }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Number of points; 0 for Gaussian signaling.
    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    pub fn is_gaussian(&self) -> bool {
        self.kind == ConstellationKind::Gaussian
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    User,
    Interferer,
}

/// One transmitter (user or interferer).
#[derive(Clone, Debug)]
pub struct TerminalProfile {
    pub antennas: usize,
    /// Linear SNR ρ.
    pub snr: f64,
    pub correlation: CorrelationPair,
    pub constellation: Constellation,
    /// Precoder `G`; input covariance is `G G^H` with `tr ≤ M`.
    pub precoder: CMatrix,
    pub role: Role,
}

impl TerminalProfile {
    /// Uncorrelated terminal with identity precoder.
    pub fn new(role: Role, antennas: usize, rx_antennas: usize, snr: f64, constellation: Constellation) -> Self {
        Self {
            antennas,
            snr,
            correlation: CorrelationPair::identity(antennas, rx_antennas),
            constellation,
            precoder: linalg::identity(antennas),
            role,
        }
    }

    pub fn with_tx_correlation(mut self, tx: CMatrix) -> Self {
        self.correlation.tx = tx;
        self
    }

    pub fn with_precoder(mut self, g: CMatrix) -> Self {
        self.precoder = g;
        self
    }

    pub fn input_covariance(&self) -> CMatrix {
        &self.precoder * self.precoder.adjoint()
    }

    pub fn validate(&self, rx_antennas: usize, label: &str) -> Result<()> {
        let m = self.antennas;
        if m == 0 {
            return Err(Error::config(format!("{label}.antennas"), "must be positive"));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::config(format!("{label}.snr"), "must be finite and non-negative"));
        }
        if self.correlation.tx.shape() != (m, m) {
            return Err(Error::config(
                format!("{label}.correlation"),
                format!("tx correlation must be {m}x{m}"),
            ));
        }
        if self.correlation.rx.shape() != (rx_antennas, rx_antennas) {
            return Err(Error::config(
                format!("{label}.rx_correlation"),
                format!("rx correlation must be {rx_antennas}x{rx_antennas}"),
            ));
        }
        if self.precoder.shape() != (m, m) {
            return Err(Error::config(format!("{label}.precoder"), format!("precoder must be {m}x{m}")));
        }
        let power = linalg::frobenius(&self.precoder).powi(2);
        if power > m as f64 + 1e-9 {
            return Err(Error::config(
                format!("{label}.precoder"),
                format!("precoder power {power} exceeds the budget {m}"),
            ));
        }
        Ok(())
    }
}

/// Receiver with `rx_antennas` antennas, `users` (K ≥ 1), `interferers` (L ≥ 0).
#[derive(Clone, Debug)]
pub struct Scenario {
    pub rx_antennas: usize,
    pub users: Vec<TerminalProfile>,
    pub interferers: Vec<TerminalProfile>,
}

impl Scenario {
    pub fn new(rx_antennas: usize, users: Vec<TerminalProfile>, interferers: Vec<TerminalProfile>) -> Result<Self> {
        let s = Self {
            rx_antennas,
            users,
            interferers,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx_antennas == 0 {
            return Err(Error::config("rx_antennas", "must be positive"));
        }
        if self.users.is_empty() {
            return Err(Error::config("users", "at least one user is required"));
        }
        for (k, u) in self.users.iter().enumerate() {
            u.validate(self.rx_antennas, &format!("users[{k}]"))?;
        }
        for (l, t) in self.interferers.iter().enumerate() {
            t.validate(self.rx_antennas, &format!("interferers[{l}]"))?;
        }
        Ok(())
    }

    /// `β = N / M` of a terminal.
    pub fn load(&self, t: &TerminalProfile) -> f64 {
        self.rx_antennas as f64 / t.antennas as f64
    }

    pub fn terminals(&self) -> impl Iterator<Item = &TerminalProfile> {
        self.users.iter().chain(self.interferers.iter())
    }

    pub fn is_uncorrelated(&self, tol: f64) -> bool {
        self.terminals().all(|t| t.correlation.is_identity(tol))
    }

    /// Sets every terminal's SNR to `snr` (linear).
    pub fn with_common_snr(mut self, snr: f64) -> Self {
        for t in self.users.iter_mut().chain(self.interferers.iter_mut()) {
            t.snr = snr;
        }
        self
    }
}

/// One draw of every channel in a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub user_channels: Vec<CMatrix>,
    pub interferer_channels: Vec<CMatrix>,
    pub seed: u64,
}

struct LinkFactors {
    rx_sqrt: Option<CMatrix>,
    tx_sqrt: Option<CMatrix>,
    scale: f64,
    antennas: usize,
}

/// Precomputed square roots for repeated sampling of one scenario.
pub struct ChannelSampler {
    rx_antennas: usize,
    users: Vec<LinkFactors>,
    interferers: Vec<LinkFactors>,
}

impl ChannelSampler {
    pub fn new(scenario: &Scenario) -> Self {
        let factors = |t: &TerminalProfile| {
            let sqrt_or_none = |m: &CMatrix| {
                if linalg::is_identity(m, 1e-14) {
                    None
                } else {
                    Some(linalg::psd_sqrt(m))
                }
            };
            LinkFactors {
                rx_sqrt: sqrt_or_none(&t.correlation.rx),
                tx_sqrt: sqrt_or_none(&t.correlation.tx),
                scale: (t.snr / t.antennas as f64).sqrt(),
                antennas: t.antennas,
            }
        };
        Self {
            rx_antennas: scenario.rx_antennas,
            users: scenario.users.iter().map(factors).collect(),
            interferers: scenario.interferers.iter().map(factors).collect(),
        }
    }

    /// Draws `W` entries row by row, users first then interferers, from
    /// `SimRng::new(seed)`.
    pub fn sample(&self, seed: u64) -> ChannelRealization {
        let mut rng = SimRng::new(seed);
        let n = self.rx_antennas;
        let mut draw = |f: &LinkFactors| {
            let mut w = CMatrix::zeros(n, f.antennas);
            for i in 0..n {
                for j in 0..f.antennas {
                    w[(i, j)] = rng.complex_normal();
                }
            }
            let mut h = match &f.rx_sqrt {
                Some(r) => r * w,
                None => w,
            };
            if let Some(t) = &f.tx_sqrt {
                h = h * t;
            }
            h * c(f.scale)
        };
        let user_channels = self.users.iter().map(&mut draw).collect();
        let interferer_channels = self.interferers.iter().map(&mut draw).collect();
        ChannelRealization {
            user_channels,
            interferer_channels,
            seed,
        }
    }
}

/// One Kronecker-model realization of every link in `scenario`.
pub fn sample_realization(scenario: &Scenario, seed: u64) -> ChannelRealization {
    ChannelSampler::new(scenario).sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn azimuth_params() -> AzimuthSpectrumParams {
        AzimuthSpectrumParams::from_degrees(1.0, 0.0, 5.0).unwrap()
    }

    /// Trapezoid rule with 10^6 intervals on the raw azimuth integral.
    fn trapezoid_lag(p: &AzimuthSpectrumParams, lag: f64) -> Complex64 {
        let n = 1_000_000;
        let h = TAU / n as f64;
        let f = |phi: f64| {
            let d = phi - p.mean_angle;
            let env = (-(d * d) / (2.0 * p.angle_spread * p.angle_spread)).exp();
            Complex64::from_polar(env, TAU * p.antenna_spacing * lag * phi.sin())
        };
        let mut acc = (f(-PI) + f(PI)) * 0.5;
        for i in 1..n {
            acc += f(-PI + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn single_antenna_is_one() {
        let t = synthesize_correlation(&azimuth_params(), 1).unwrap();
        assert_eq!(t.shape(), (1, 1));
        assert!((t[(0, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn three_element_array_has_unit_diagonal() {
        let t = synthesize_correlation(&azimuth_params(), 3).unwrap();
        for i in 0..3 {
            assert!((t[(i, i)].re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn off_diagonal_matches_trapezoid_oracle() {
        let p = azimuth_params();
        let t = synthesize_correlation(&p, 3).unwrap();
        let oracle = trapezoid_lag(&p, -1.0) / trapezoid_lag(&p, 0.0);
        assert!((t[(0, 1)] - oracle).norm() < 1e-8, "{} vs {}", t[(0, 1)], oracle);
        // Value from an independent numpy trapezoid evaluation.
        assert!((t[(0, 1)].norm() - 0.861_314_472_285_495).abs() < 1e-8);
        let oracle2 = trapezoid_lag(&p, -2.0) / trapezoid_lag(&p, 0.0);
        assert!((t[(0, 2)] - oracle2).norm() < 1e-8);
    }

    fn bessel_j0(x: f64) -> f64 {
        // (1/π) ∫_0^π cos(x sin t) dt, periodic trapezoid.
        let n = 4096;
        let h = PI / n as f64;
        let mut acc = 1.0;
        for i in 1..n {
            acc += (x * (i as f64 * h).sin()).cos();
        }
        acc * h / PI
    }

    #[test]
    fn very_wide_spread_tends_to_uniform_azimuth_limit() {
        // A flat spectrum on [-π, π] gives [T]_{a,b} = J0(2π d (a-b)).
        let p = AzimuthSpectrumParams::new(1.0, 0.0, 10.0).unwrap();
        let t = synthesize_correlation(&p, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = bessel_j0(TAU * (a as f64 - b as f64));
                assert!((t[(a, b)] - c(expect)).norm() < 1e-2, "({a},{b})");
            }
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(AzimuthSpectrumParams::new(0.0, 0.0, 0.1).is_err());
        assert!(AzimuthSpectrumParams::new(1.0, 0.0, 0.0).is_err());
        assert!(AzimuthSpectrumParams::new(1.0, 4.0, 0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn synthesized_matrix_is_hermitian_toeplitz_psd(
            d in 0.2f64..2.0,
            theta in -1.5f64..1.5,
            delta in 0.02f64..1.0,
            m in 1usize..7,
        ) {
            let p = AzimuthSpectrumParams::new(d, theta, delta).unwrap();
            let t = synthesize_correlation(&p, m).unwrap();
            prop_assert!((linalg::trace_re(&t) - m as f64).abs() < 1e-10 * m as f64);
            for a in 0..m {
                prop_assert!((t[(a, a)].re - 1.0).abs() < 1e-9);
                for b in 0..m {
                    prop_assert!((t[(a, b)] - t[(b, a)].conj()).norm() < 1e-12);
                    if a > 0 && b > 0 {
                        prop_assert!((t[(a, b)] - t[(a - 1, b - 1)]).norm() < 1e-9);
                    }
                }
            }
            prop_assert!(HermitianEigen::new(&t).min_value() >= -1e-10);
        }
    }

    fn small_scenario(m: usize, n: usize, snr: f64) -> Scenario {
        Scenario::new(
            n,
            vec![TerminalProfile::new(Role::User, m, n, snr, Constellation::gaussian())],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn unit_variance_entries() {
        let m = 2;
        let sc = small_scenario(m, 2, m as f64);
        let sampler = ChannelSampler::new(&sc);
        let draws = 25_000; // 4 entries each -> 10^5 samples
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for r in 0..draws {
            let h = &sampler.sample(r).user_channels[0];
            for z in h.iter() {
                let p = z.norm_sqr();
                sum += p;
                sum_sq += p * p;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let se = ((sum_sq / count - mean * mean) / count).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn identical_seeds_give_identical_draws() {
        let sc = small_scenario(3, 4, 2.0);
        assert_eq!(sample_realization(&sc, 99), sample_realization(&sc, 99));
        assert_ne!(sample_realization(&sc, 99), sample_realization(&sc, 100));
    }

    #[test]
    fn rank_one_receiver_correlation_zeroes_other_rows() {
        let n = 3;
        let mut rx = CMatrix::zeros(n, n);
        rx[(0, 0)] = c(n as f64);
        let mut sc = small_scenario(2, n, 1.0);
        sc.users[0].correlation.rx = rx;
        let h = &sample_realization(&sc, 5).user_channels[0];
        for i in 1..n {
            for j in 0..2 {
                assert_eq!(h[(i, j)], c(0.0));
            }
        }
        assert!(h.row(0).iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn average_gain_is_preserved_under_correlation() {
        let p = azimuth_params();
        let t = synthesize_correlation(&p, 3).unwrap();
        let mut sc = small_scenario(3, 3, 4.0);
        sc.users[0].correlation.tx = t;
        let sampler = ChannelSampler::new(&sc);
        let draws = 20_000;
        let vals: Vec<f64> = (0..draws)
            .map(|r| linalg::frobenius(&sampler.sample(r).user_channels[0]).powi(2) / (3.0 * 4.0))
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }
}

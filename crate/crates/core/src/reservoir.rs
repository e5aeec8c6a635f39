//! Reference reservoirs and their simulators.
//!
//! Two driven systems are provided. A stable linear state-space model
//! (instantiated by the series RLC oscillator) is integrated by exact
//! discretization: the state transition is `e^{A dt}`, the input enters
//! through a zero-order hold and the process noise covariance over one step
//! comes from the Van Loan block-exponential construction, so the sampled
//! chain has exactly the continuous-time law at the sample times. A damped
//! Duffing oscillator driven near a carrier is integrated by semi-implicit
//! Euler-Maruyama and read out in baseband I/Q through a demodulate-LPF
//! protocol (windowed-sinc FIR, Hamming window, group delay compensated).
//!
//! Trial ensembles re-run a fixed input waveform under independent noise
//! realizations; their trial average estimates the input-conditional mean
//! that the Doob split in [`crate::capacity`] consumes.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CovarianceSplit;
use crate::spectral::{
    lyapunov_solve, max_eigenvalue_real_part, sym_eig, SymmetricMatrix, DEFAULT_REL_TOL,
};

/// `ẋ = A x + B_s u + B_n η`, `X = C x`, with `A` Hurwitz.
#[derive(Debug, Clone)]
pub struct LinearStateSpace {
    a: DMatrix<f64>,
    b_s: DVector<f64>,
    b_n: DVector<f64>,
    c: DMatrix<f64>,
}

impl LinearStateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b_s: DVector<f64>,
        b_n: DVector<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput("drift matrix must be square".into()));
        }
        if b_s.len() != n || b_n.len() != n || c.ncols() != n {
            return Err(Error::InvalidInput(
                "state-space dimensions are inconsistent".into(),
            ));
        }
        if a.iter()
            .chain(b_s.iter())
            .chain(b_n.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "state-space has non-finite entries".into(),
            ));
        }
        let max_re = max_eigenvalue_real_part(&a)?;
        if max_re >= 0.0 {
            return Err(Error::UnstableSystem(format!(
                "max eigenvalue real part {max_re:.6e}"
            )));
        }
        Ok(Self { a, b_s, b_n, c })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn readout_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn input_gain(&self) -> &DVector<f64> {
        &self.b_s
    }

    pub fn noise_gain(&self) -> &DVector<f64> {
        &self.b_n
    }

    pub fn readout_map(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Slowest decay rate `|Re λ_max(A)|`, the reciprocal system time
    /// constant.
    pub fn decay_rate(&self) -> f64 {
        -max_eigenvalue_real_part(&self.a).unwrap_or(-1.0)
    }
}

/// Series RLC oscillator with a voltage drive and a thermal noise source on
/// the current equation; readout is the capacitor voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlcConfig {
    pub r: f64,
    pub l_ind: f64,
    pub c_cap: f64,
    pub alpha_s: f64,
    pub alpha_n: f64,
    /// Noise intensity per unit temperature.
    pub gamma: f64,
    pub temperature: f64,
}

impl RlcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.l_ind > 0.0 && self.c_cap > 0.0 && self.gamma > 0.0) {
            return Err(Error::InvalidInput(
                "R, L, C and gamma must be positive".into(),
            ));
        }
        if self.alpha_s < 0.0 || self.alpha_n < 0.0 || self.temperature < 0.0 {
            return Err(Error::InvalidInput(
                "drive, noise strength and temperature must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Spectral intensity of the thermal source `η ~ N(0, γT)`.
    pub fn noise_intensity(&self) -> f64 {
        self.gamma * self.temperature
    }
}

/// State `(q, i)` with `q̇ = i`, `L i̇ = −R i − q/C + α_s u + α_n η`;
/// readout `q / C` (capacitor voltage).
pub fn rlc_state_space(cfg: &RlcConfig) -> Result<LinearStateSpace> {
    cfg.validate()?;
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[0.0, 1.0, -1.0 / (cfg.l_ind * cfg.c_cap), -cfg.r / cfg.l_ind],
    );
    let b_s = DVector::from_column_slice(&[0.0, cfg.alpha_s / cfg.l_ind]);
    let b_n = DVector::from_column_slice(&[0.0, cfg.alpha_n / cfg.l_ind]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0 / cfg.c_cap, 0.0]);
    LinearStateSpace::new(a, b_s, b_n, c)
}

/// An `n × d` matrix of readout samples over time.
#[derive(Debug, Clone)]
pub struct ReadoutSeries {
    data: DMatrix<f64>,
    pub dt_sample: f64,
    pub centered: bool,
}

impl ReadoutSeries {
    pub fn new(data: DMatrix<f64>, dt_sample: f64) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("readout has non-finite entries".into()));
        }
        if !(dt_sample > 0.0) {
            return Err(Error::InvalidInput("dt_sample must be positive".into()));
        }
        Ok(Self {
            data,
            dt_sample,
            centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().cloned().collect()
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        (0..self.d())
            .map(|j| self.data.column(j).sum() / self.n().max(1) as f64)
            .collect()
    }

    /// Column-centered copy, with the centering recorded.
    pub fn centered(&self) -> ReadoutSeries {
        let means = self.means();
        let mut data = self.data.clone();
        for j in 0..data.ncols() {
            let mu = means[j];
            for i in 0..data.nrows() {
                data[(i, j)] -= mu;
            }
        }
        ReadoutSeries {
            data,
            dt_sample: self.dt_sample,
            centered: true,
        }
    }

    /// Rows `start .. start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<ReadoutSeries> {
        if start + len > self.n() {
            return Err(Error::InvalidInput(format!(
                "window {start}..{} exceeds {} rows",
                start + len,
                self.n()
            )));
        }
        Ok(ReadoutSeries {
            data: self.data.rows(start, len).into_owned(),
            dt_sample: self.dt_sample,
            centered: self.centered,
        })
    }

    /// Every `step`-th row starting at `offset`.
    pub fn decimate(&self, step: usize, offset: usize) -> Result<ReadoutSeries> {
        if step == 0 {
            return Err(Error::InvalidInput(
                "decimation step must be positive".into(),
            ));
        }
        let rows: Vec<usize> = (offset..self.n()).step_by(step).collect();
        let data = DMatrix::from_fn(rows.len(), self.d(), |i, j| self.data[(rows[i], j)]);
        Ok(ReadoutSeries {
            data,
            dt_sample: self.dt_sample * step as f64,
            centered: self.centered,
        })
    }

    /// Columnar CSV with header `t,x_1,..,x_d`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for j in 1..=self.d() {
            write!(w, ",x_{j}")?;
        }
        writeln!(w)?;
        for i in 0..self.n() {
            write!(w, "{}", i as f64 * self.dt_sample)?;
            for j in 0..self.d() {
                write!(w, ",{}", self.data[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Re-ingests the CSV written by [`ReadoutSeries::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<ReadoutSeries> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(format!("csv read: {e}")))?;
            if idx == 0 {
                if !line.starts_with("t,") {
                    return Err(Error::InvalidInput("missing t,x_1,.. header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("csv field: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(Error::InvalidInput("csv row needs t plus readouts".into()));
            }
            times.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData("empty readout csv".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged csv rows".into()));
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        ReadoutSeries::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]), dt)
    }
}

/// `K` re-runs of one input waveform under independent noise.
#[derive(Debug, Clone)]
pub struct TrialEnsemble {
    pub input: Vec<f64>,
    pub trials: Vec<ReadoutSeries>,
}

impl TrialEnsemble {
    pub fn new(input: Vec<f64>, trials: Vec<ReadoutSeries>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidInput(
                "ensemble needs at least one trial".into(),
            ));
        }
        let (n, d, dt) = (trials[0].n(), trials[0].d(), trials[0].dt_sample);
        if trials
            .iter()
            .any(|t| t.n() != n || t.d() != d || t.dt_sample != dt)
        {
            return Err(Error::InvalidInput(
                "trials must share (n, d, dt_sample)".into(),
            ));
        }
        Ok(Self { input, trials })
    }

    pub fn k(&self) -> usize {
        self.trials.len()
    }

    pub fn n(&self) -> usize {
        self.trials[0].n()
    }

    pub fn d(&self) -> usize {
        self.trials[0].d()
    }

    /// Long-format CSV with header `trial,t,x_1,..,x_d`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "trial,t")?;
        for j in 1..=self.d() {
            write!(w, ",x_{j}")?;
        }
        writeln!(w)?;
        for (k, trial) in self.trials.iter().enumerate() {
            for i in 0..trial.n() {
                write!(w, "{k},{}", i as f64 * trial.dt_sample)?;
                for j in 0..trial.d() {
                    write!(w, ",{}", trial.data[(i, j)])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// One-step exact discretization of a linear state-space system:
/// `x_{k+1} = A_d x_k + b_d u_k + w_k` with `w_k ~ N(0, Q_d)`.
#[derive(Debug, Clone)]
pub struct ExactDiscretization {
    pub a_d: DMatrix<f64>,
    pub b_d: DVector<f64>,
    pub q_d: SymmetricMatrix,
    /// Square-root factor of `Q_d` used for sampling.
    pub noise_factor: DMatrix<f64>,
}

pub fn exact_discretization(
    ss: &LinearStateSpace,
    noise_intensity: f64,
    dt: f64,
) -> Result<ExactDiscretization> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    if noise_intensity < 0.0 {
        return Err(Error::InvalidInput(
            "noise intensity must be nonnegative".into(),
        ));
    }
    let n = ss.state_dim();

    // Zero-order-hold input: exp of [[A, B_s],[0, 0]] dt packs e^{A dt} and
    // the integrated input gain into one block exponential.
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ss.a.clone() * dt));
    for i in 0..n {
        aug[(i, n)] = ss.b_s[i] * dt;
    }
    let e1 = aug.exp();
    let a_d = e1.view((0, 0), (n, n)).into_owned();
    let b_d = DVector::from_fn(n, |i, _| e1[(i, n)]);

    // Van Loan: exp of [[-A, Qc],[0, Aᵀ]] dt gives Q_d = F22ᵀ F12.
    let qc = (&ss.b_n * ss.b_n.transpose()) * noise_intensity;
    let mut vl = DMatrix::zeros(2 * n, 2 * n);
    vl.view_mut((0, 0), (n, n)).copy_from(&(-ss.a.clone() * dt));
    vl.view_mut((0, n), (n, n)).copy_from(&(qc * dt));
    vl.view_mut((n, n), (n, n))
        .copy_from(&(ss.a.transpose() * dt));
    let e2 = vl.exp();
    let f12 = e2.view((0, n), (n, n)).into_owned();
    let f22 = e2.view((n, n), (n, n)).into_owned();
    let q_d = SymmetricMatrix::new(f22.transpose() * f12)?;

    let eig = sym_eig(&q_d)?;
    let noise_factor = DMatrix::from_fn(n, n, |i, j| {
        eig.vectors[(i, j)] * eig.values[j].max(0.0).sqrt()
    });
    Ok(ExactDiscretization {
        a_d,
        b_d,
        q_d,
        noise_factor,
    })
}

/// Simulates the linear system from `x₀ = 0` over the input series `u` with
/// exact discretization; deterministic given the seed. Sample `k` of the
/// output is `C x` after the update driven by `u_k`.
pub fn simulate_linear(
    ss: &LinearStateSpace,
    u: &[f64],
    noise_intensity: f64,
    dt: f64,
    seed: u64,
) -> Result<ReadoutSeries> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "input series has non-finite entries".into(),
        ));
    }
    let disc = exact_discretization(ss, noise_intensity, dt)?;
    let n_s = ss.state_dim();
    let d = ss.readout_dim();
    let n = u.len();

    // Row-major copies keep the hot loop free of matrix temporaries.
    let a_rows: Vec<Vec<f64>> = (0..n_s)
        .map(|i| (0..n_s).map(|j| disc.a_d[(i, j)]).collect())
        .collect();
    let l_rows: Vec<Vec<f64>> = (0..n_s)
        .map(|i| (0..n_s).map(|j| disc.noise_factor[(i, j)]).collect())
        .collect();
    let c_rows: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..n_s).map(|j| ss.c[(i, j)]).collect())
        .collect();
    let b_d: Vec<f64> = disc.b_d.iter().cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = noise_intensity > 0.0;
    let mut x = vec![0.0_f64; n_s];
    let mut x_next = vec![0.0_f64; n_s];
    let mut z = vec![0.0_f64; n_s];
    let mut data = DMatrix::zeros(n, d);
    for k in 0..n {
        if noisy {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
        }
        for i in 0..n_s {
            let mut acc = b_d[i] * u[k];
            for j in 0..n_s {
                acc += a_rows[i][j] * x[j];
            }
            if noisy {
                for j in 0..n_s {
                    acc += l_rows[i][j] * z[j];
                }
            }
            x_next[i] = acc;
        }
        std::mem::swap(&mut x, &mut x_next);
        for (i, c_row) in c_rows.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..n_s {
                acc += c_row[j] * x[j];
            }
            data[(k, i)] = acc;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedTrajectory(
            "non-finite linear readout".into(),
        ));
    }
    ReadoutSeries::new(data, dt)
}

/// Analytic steady-state covariance split for a white-input model:
/// `P_s` and `P_n` solve the continuous Lyapunov equations with
/// `Q = q B Bᵀ`, and `S = C P_s Cᵀ`, `N = C P_n Cᵀ`.
pub fn steady_state_split(
    ss: &LinearStateSpace,
    input_spectral_density: f64,
    noise_intensity: f64,
) -> Result<CovarianceSplit> {
    if input_spectral_density < 0.0 || noise_intensity < 0.0 {
        return Err(Error::InvalidInput(
            "spectral densities must be nonnegative".into(),
        ));
    }
    let q_s = SymmetricMatrix::new((&ss.b_s * ss.b_s.transpose()) * input_spectral_density)?;
    let q_n = SymmetricMatrix::new((&ss.b_n * ss.b_n.transpose()) * noise_intensity)?;
    let p_s = lyapunov_solve(&ss.a, &q_s)?;
    let p_n = lyapunov_solve(&ss.a, &q_n)?;
    let s = SymmetricMatrix::new(&ss.c * p_s.matrix() * ss.c.transpose())?;
    let n = SymmetricMatrix::new(&ss.c * p_n.matrix() * ss.c.transpose())?;
    CovarianceSplit::new(s, n, DEFAULT_REL_TOL)
}

/// Damped Duffing oscillator driven near a carrier, with demodulation
/// parameters for the I/Q readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuffingConfig {
    /// Damping rate.
    pub delta: f64,
    /// Linear stiffness (squared natural frequency).
    pub alpha: f64,
    /// Cubic coefficient.
    pub beta: f64,
    /// Carrier frequency.
    pub omega: f64,
    /// Low-pass cutoff of the demodulator.
    pub omega_lpf: f64,
    pub alpha_s: f64,
    pub alpha_n: f64,
    pub temperature: f64,
    /// Integrator step.
    pub dt: f64,
    /// Raw samples discarded before the readout starts.
    pub burn_in: usize,
    #[serde(default)]
    pub x0: (f64, f64),
}

impl DuffingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.alpha > 0.0 && self.omega > 0.0) {
            return Err(Error::InvalidInput(
                "damping, stiffness and carrier must be positive".into(),
            ));
        }
        if !(self.omega_lpf > 0.0 && self.omega_lpf <= self.omega / 10.0) {
            return Err(Error::InvalidInput(format!(
                "omega_lpf = {} must lie in (0, omega/10 = {}]",
                self.omega_lpf,
                self.omega / 10.0
            )));
        }
        let dt_max = 2.0 * std::f64::consts::PI / (40.0 * self.omega);
        if !(self.dt > 0.0 && self.dt <= dt_max + 1e-15) {
            return Err(Error::InvalidInput(format!(
                "dt = {} must lie in (0, {dt_max:.6e}] to resolve the carrier",
                self.dt
            )));
        }
        if self.alpha_s < 0.0 || self.alpha_n < 0.0 || self.temperature < 0.0 {
            return Err(Error::InvalidInput(
                "drive, noise strength and temperature must be nonnegative".into(),
            ));
        }
        if !self.beta.is_finite() || !self.x0.0.is_finite() || !self.x0.1.is_finite() {
            return Err(Error::InvalidInput("beta and x0 must be finite".into()));
        }
        Ok(())
    }
}

const DUFFING_DIVERGENCE: f64 = 1e6;

fn duffing_integrate(cfg: &DuffingConfig, drive: &[f64], seed: u64) -> Result<Vec<f64>> {
    if drive.len() <= cfg.burn_in {
        return Err(Error::InsufficientData(format!(
            "input length {} does not exceed burn-in {}",
            drive.len(),
            cfg.burn_in
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_scale = cfg.alpha_n * cfg.temperature.sqrt() * cfg.dt.sqrt();
    let noisy = noise_scale > 0.0;
    let (mut x, mut v) = cfg.x0;
    let mut out = Vec::with_capacity(drive.len() - cfg.burn_in);
    for (k, &f) in drive.iter().enumerate() {
        // Semi-implicit update: velocity first, then position with the new
        // velocity. The damping factor per step stays exact and the scheme
        // is stable at carrier-resolving step sizes.
        let mut dv = cfg.dt * (-cfg.delta * v - cfg.alpha * x - cfg.beta * x * x * x + f);
        if noisy {
            let z: f64 = StandardNormal.sample(&mut rng);
            dv += noise_scale * z;
        }
        v += dv;
        x += cfg.dt * v;
        if x.abs() > DUFFING_DIVERGENCE || !x.is_finite() {
            return Err(Error::DivergedTrajectory(format!(
                "|x| exceeded {DUFFING_DIVERGENCE:.0e} at step {k}"
            )));
        }
        if k >= cfg.burn_in {
            out.push(x);
        }
    }
    Ok(out)
}

/// Integrates `ẍ + δẋ + αx + βx³ = α_s u(t) cos(ωt) + α_n √T η(t)` and
/// returns the raw displacement with the burn-in dropped. Deterministic
/// given the seed.
pub fn simulate_duffing(cfg: &DuffingConfig, u: &[f64], seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "input series has non-finite entries".into(),
        ));
    }
    let drive: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(k, &uk)| cfg.alpha_s * uk * (cfg.omega * cfg.dt * k as f64).cos())
        .collect();
    duffing_integrate(cfg, &drive, seed)
}

/// Linear-phase FIR low-pass taps: windowed sinc with a Hamming window,
/// order chosen so the transition band is at most half the cutoff.
pub fn design_lowpass_taps(omega_lpf: f64, dt: f64) -> Result<Vec<f64>> {
    let nyquist = std::f64::consts::PI / dt;
    if !(omega_lpf > 0.0 && omega_lpf < nyquist) {
        return Err(Error::InvalidInput(format!(
            "cutoff {omega_lpf} outside (0, Nyquist = {nyquist:.6})"
        )));
    }
    let f_c = omega_lpf * dt / (2.0 * std::f64::consts::PI); // cycles per sample
    let trans = f_c / 2.0;
    let mut n_taps = (3.3 / trans).ceil() as usize;
    if n_taps % 2 == 0 {
        n_taps += 1;
    }
    n_taps = n_taps.max(5);
    let mid = (n_taps - 1) as f64 / 2.0;
    let omega_c = 2.0 * std::f64::consts::PI * f_c; // rad per sample
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|k| {
            let x = k as f64 - mid;
            let ideal = if x == 0.0 {
                omega_c / std::f64::consts::PI
            } else {
                (omega_c * x).sin() / (std::f64::consts::PI * x)
            };
            let window =
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / (n_taps - 1) as f64).cos();
            ideal * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    Ok(taps)
}

fn baseband_products(y: &[f64], omega: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut zc = Vec::with_capacity(y.len());
    let mut zs = Vec::with_capacity(y.len());
    for (k, &v) in y.iter().enumerate() {
        let phase = omega * dt * k as f64;
        zc.push(v * phase.cos());
        zs.push(-v * phase.sin());
    }
    (zc, zs)
}

/// Complex baseband demodulation: `2 · LPF(y e^{−iωt})` with the group
/// delay compensated by an index shift. Output columns are `(Re A, Im A)`;
/// the first and last half-filter lengths are settling regions (zero-padded
/// convolution).
pub fn demodulate_lpf(y: &[f64], omega: f64, omega_lpf: f64, dt: f64) -> Result<ReadoutSeries> {
    let taps = design_lowpass_taps(omega_lpf, dt)?;
    let mid = taps.len() / 2;
    let (zc, zs) = baseband_products(y, omega, dt);
    let n = y.len();
    let mut data = DMatrix::zeros(n, 2);
    for i in 0..n {
        let mut acc_i = 0.0;
        let mut acc_q = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            let j = i as isize + mid as isize - k as isize;
            if j >= 0 && (j as usize) < n {
                acc_i += h * zc[j as usize];
                acc_q += h * zs[j as usize];
            }
        }
        data[(i, 0)] = 2.0 * acc_i;
        data[(i, 1)] = 2.0 * acc_q;
    }
    ReadoutSeries::new(data, dt)
}

/// Demodulates only at decimated output points where the filter fits
/// entirely inside the series; returns the readout at `dt · step` along with
/// the fine index of its first sample.
pub fn demodulate_lpf_decimated(
    y: &[f64],
    omega: f64,
    omega_lpf: f64,
    dt: f64,
    step: usize,
) -> Result<(ReadoutSeries, usize)> {
    if step == 0 {
        return Err(Error::InvalidInput(
            "decimation step must be positive".into(),
        ));
    }
    let taps = design_lowpass_taps(omega_lpf, dt)?;
    let mid = taps.len() / 2;
    let n = y.len();
    if n < taps.len() {
        return Err(Error::InsufficientData(format!(
            "series length {n} shorter than filter length {}",
            taps.len()
        )));
    }
    let (zc, zs) = baseband_products(y, omega, dt);
    let first = mid;
    let last = n - 1 - mid;
    let indices: Vec<usize> = (first..=last).step_by(step).collect();
    let mut data = DMatrix::zeros(indices.len(), 2);
    let tl = taps.len();
    for (row, &i) in indices.iter().enumerate() {
        let lo = i - mid;
        let mut acc_i = 0.0;
        let mut acc_q = 0.0;
        // Symmetric taps make the reversed kernel identical to the kernel.
        for (k, &h) in taps.iter().enumerate() {
            acc_i += h * zc[lo + tl - 1 - k];
            acc_q += h * zs[lo + tl - 1 - k];
        }
        data[(row, 0)] = 2.0 * acc_i;
        data[(row, 1)] = 2.0 * acc_q;
    }
    Ok((ReadoutSeries::new(data, dt * step as f64)?, first))
}

/// Parameters of the slow-envelope equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub detuning: f64,
    pub mu: f64,
    pub kappa: f64,
}

/// `Δ = drive detuning`, `μ = 3β/(8ω)`, `κ = α_s/(2ω)`.
pub fn duffing_envelope_params(cfg: &DuffingConfig, drive_detuning: f64) -> EnvelopeParams {
    EnvelopeParams {
        detuning: drive_detuning,
        mu: 3.0 * cfg.beta / (8.0 * cfg.omega),
        kappa: cfg.alpha_s / (2.0 * cfg.omega),
    }
}

/// A simulatable reservoir: either the linear state-space system or the
/// Duffing oscillator with its demodulated, decimated I/Q readout.
#[derive(Debug, Clone)]
pub enum ReservoirSystem {
    Linear {
        ss: LinearStateSpace,
        noise_intensity: f64,
        dt: f64,
    },
    Duffing {
        cfg: DuffingConfig,
        decimate: usize,
    },
}

struct DuffingPipeline<'a> {
    cfg: &'a DuffingConfig,
    drive: Vec<f64>,
    taps: Vec<f64>,
    decimate: usize,
}

impl<'a> DuffingPipeline<'a> {
    fn new(cfg: &'a DuffingConfig, u: &[f64], decimate: usize) -> Result<Self> {
        cfg.validate()?;
        if decimate == 0 {
            return Err(Error::InvalidInput(
                "decimation step must be positive".into(),
            ));
        }
        let drive: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(k, &uk)| cfg.alpha_s * uk * (cfg.omega * cfg.dt * k as f64).cos())
            .collect();
        let taps = design_lowpass_taps(cfg.omega_lpf, cfg.dt)?;
        Ok(Self {
            cfg,
            drive,
            taps,
            decimate,
        })
    }

    fn run_trial(&self, seed: u64) -> Result<ReadoutSeries> {
        let y = duffing_integrate(self.cfg, &self.drive, seed)?;
        let mid = self.taps.len() / 2;
        if y.len() < self.taps.len() {
            return Err(Error::InsufficientData(
                "post-burn-in series shorter than demodulation filter".into(),
            ));
        }
        let (zc, zs) = baseband_products(&y, self.cfg.omega, self.cfg.dt);
        let last = y.len() - 1 - mid;
        let indices: Vec<usize> = (mid..=last).step_by(self.decimate).collect();
        let mut data = DMatrix::zeros(indices.len(), 2);
        let tl = self.taps.len();
        for (row, &i) in indices.iter().enumerate() {
            let lo = i - mid;
            let mut acc_i = 0.0;
            let mut acc_q = 0.0;
            for (k, &h) in self.taps.iter().enumerate() {
                acc_i += h * zc[lo + tl - 1 - k];
                acc_q += h * zs[lo + tl - 1 - k];
            }
            data[(row, 0)] = 2.0 * acc_i;
            data[(row, 1)] = 2.0 * acc_q;
        }
        ReadoutSeries::new(data, self.cfg.dt * self.decimate as f64)
    }
}

impl ReservoirSystem {
    fn simulate_trial(&self, u: &[f64], seed: u64) -> Result<ReadoutSeries> {
        match self {
            ReservoirSystem::Linear {
                ss,
                noise_intensity,
                dt,
            } => simulate_linear(ss, u, *noise_intensity, *dt, seed),
            ReservoirSystem::Duffing { cfg, decimate } => {
                DuffingPipeline::new(cfg, u, *decimate)?.run_trial(seed)
            }
        }
    }
}

/// Runs `K ≥ 2` trials over a shared input waveform with per-trial seeds
/// `seed+1 .. seed+K`; trials are independent conditionally on the input.
pub fn run_trial_ensemble(
    system: &ReservoirSystem,
    u: &[f64],
    k: usize,
    seed: u64,
) -> Result<TrialEnsemble> {
    if k < 2 {
        return Err(Error::InvalidInput("ensemble needs K >= 2 trials".into()));
    }
    let trials: Vec<ReadoutSeries> = match system {
        ReservoirSystem::Duffing { cfg, decimate } => {
            let pipeline = DuffingPipeline::new(cfg, u, *decimate)?;
            (0..k)
                .map(|i| pipeline.run_trial(seed + 1 + i as u64))
                .collect::<Result<_>>()?
        }
        _ => (0..k)
            .map(|i| system.simulate_trial(u, seed + 1 + i as u64))
            .collect::<Result<_>>()?,
    };
    TrialEnsemble::new(u.to_vec(), trials)
}

/// Streaming variant of the trial ensemble for large runs: accumulates the
/// trial mean and keeps only the designated trial in memory.
pub fn trial_mean_and_designated(
    system: &ReservoirSystem,
    u: &[f64],
    k: usize,
    seed: u64,
    designated: usize,
) -> Result<(ReadoutSeries, ReadoutSeries)> {
    if k < 2 {
        return Err(Error::InvalidInput("ensemble needs K >= 2 trials".into()));
    }
    if designated >= k {
        return Err(Error::InvalidInput(format!(
            "designated trial {designated} out of range for K = {k}"
        )));
    }
    let mut sum: Option<DMatrix<f64>> = None;
    let mut kept: Option<ReadoutSeries> = None;
    for i in 0..k {
        let trial = system.simulate_trial(u, seed + 1 + i as u64)?;
        match &mut sum {
            None => sum = Some(trial.data().clone()),
            Some(s) => {
                if trial.n() != s.nrows() || trial.d() != s.ncols() {
                    return Err(Error::InvalidInput("ragged ensemble".into()));
                }
                *s += trial.data();
            }
        }
        if i == designated {
            kept = Some(trial);
        }
    }
    let kept = kept.expect("designated trial recorded");
    let mean = ReadoutSeries::new(sum.expect("at least one trial") / k as f64, kept.dt_sample)?;
    Ok((mean, kept))
}

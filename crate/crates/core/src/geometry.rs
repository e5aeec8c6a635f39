//! Covariance-level capacity geometry.
//!
//! The readout covariance of a noisy driven system splits as `Σ = S + N`,
//! where `S` is the covariance of the input-conditional mean and `N` the mean
//! conditional covariance. The predictable and innovation capacities are the
//! complementary traces
//!
//! ```text
//!   C_ip = Tr(S Σ⁺),   C_i = Tr(N Σ⁺),   C_ip + C_i = rank Σ.
//! ```
//!
//! Under thermal scaling `Σ(T) = S + T N₀` the split collapses to shrinkage
//! factors `1/(1 + T λ_k)` driven by the generalized eigenvalues `λ_k` of the
//! symmetric pencil `(N₀, S)`. In whitened coordinates `Z = Σ^{+/2} X` the
//! predictable fraction is the operator `Γ = Σ^{+/2} S Σ^{+/2}`, whose
//! eigenvalues `γ_k ∈ [0, 1]` describe complementary predictable/innovation
//! ellipsoids with semiaxes `√γ_k` and `√(1−γ_k)`.
//!
//! A threshold `τ` selects the innovation-dominated eigendirections; the
//! resulting subspace carries a variance floor and its dimension `L_τ` is
//! pinched between explicit functions of `C_i`. Block-Toeplitz covariance
//! floors, strong-mixing covariance decay, isotropic-constant entropy bounds
//! and ball-volume covering bounds turn that one-step floor into statements
//! about length-`b` innovation histories. Scalar calculators for layered
//! noisy circuits (contraction sensitivity and the entropy floor it implies)
//! round out the module.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{
    self, log_pseudo_det, nnls, operator_norm, pinv, psd_clamp, rank_info, sym_eig, RankInfo,
    SymmetricMatrix, DEFAULT_REL_TOL,
};

/// The triple `(Σ, S, N)` with `Σ = S + N` and rank metadata.
#[derive(Debug, Clone)]
pub struct CovarianceSplit {
    sigma: SymmetricMatrix,
    s: SymmetricMatrix,
    n: SymmetricMatrix,
    rank: RankInfo,
}

impl CovarianceSplit {
    /// Builds the split from its parts; `Σ` is formed as `S + N` so the sum
    /// identity holds exactly. Both parts must be PSD to tolerance.
    pub fn new(s: SymmetricMatrix, n: SymmetricMatrix, rel_tol: f64) -> Result<Self> {
        if s.dim() != n.dim() {
            return Err(Error::InvalidInput(format!(
                "S dimension {} does not match N dimension {}",
                s.dim(),
                n.dim()
            )));
        }
        // PSD validation happens through the eigendecompositions used below.
        let s = psd_checked(s, rel_tol, "S")?;
        let n = psd_checked(n, rel_tol, "N")?;
        let sigma = s.add(&n)?;
        let eig = sym_eig(&sigma)?;
        let rank = rank_info(&eig, rel_tol);
        Ok(Self { sigma, s, n, rank })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &SymmetricMatrix {
        &self.sigma
    }

    pub fn predictable(&self) -> &SymmetricMatrix {
        &self.s
    }

    pub fn innovation(&self) -> &SymmetricMatrix {
        &self.n
    }

    pub fn rank(&self) -> &RankInfo {
        &self.rank
    }

    pub fn rel_tol(&self) -> f64 {
        self.rank.threshold
    }
}

fn psd_checked(m: SymmetricMatrix, rel_tol: f64, what: &str) -> Result<SymmetricMatrix> {
    let eig = sym_eig(&m)?;
    let scale = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -rel_tol.max(DEFAULT_REL_TOL).max(1e-8) * scale {
        return Err(Error::NotPsd(format!(
            "{what}: eigenvalue {min:.3e} of scale {scale:.3e}"
        )));
    }
    // Clamp roundoff negatives so downstream spectral maps stay clean.
    if min < 0.0 {
        psd_clamp(&m)
    } else {
        Ok(m)
    }
}

/// Finite generalized eigenvalues of the pencil `(N₀, S)` plus the ranks that
/// control the shrinkage formula.
#[derive(Debug, Clone, Serialize)]
pub struct PencilSpectrum {
    pub lambdas: Vec<f64>,
    pub r: usize,
    pub r_s: usize,
}

impl PencilSpectrum {
    /// Computes the spectrum for `Σ(T) = S + T N₀`; `r` is taken at `T = 1`
    /// (rank is assumed constant over the sweep interval).
    pub fn from_pair(n0: &SymmetricMatrix, s: &SymmetricMatrix, rel_tol: f64) -> Result<Self> {
        let lambdas = spectral::pencil_eig(n0, s, rel_tol)?;
        let r_s = lambdas.len();
        let sigma = s.add(n0)?;
        let r = rank_info(&sym_eig(&sigma)?, rel_tol).rank;
        Ok(Self { lambdas, r, r_s })
    }
}

/// `C_ip = Tr(S Σ⁺)` and `C_i = Tr(N Σ⁺)`; the two always sum to `rank Σ`.
pub fn capacity_traces(split: &CovarianceSplit) -> Result<(f64, f64)> {
    let sig_pinv = pinv(&split.sigma, split.rel_tol())?;
    let c_ip = (split.s.matrix() * sig_pinv.matrix()).trace();
    let c_i = (split.n.matrix() * sig_pinv.matrix()).trace();
    Ok((c_ip, c_i))
}

/// Shrinkage form of the capacity split at temperature `T`:
/// `C_ip = Σ 1/(1+Tλ_k)` and `C_i = (r − r_S) + Σ Tλ_k/(1+Tλ_k)`.
pub fn shrinkage_capacities(spec: &PencilSpectrum, temperature: f64) -> Result<(f64, f64)> {
    if temperature < 0.0 {
        return Err(Error::InvalidInput(format!(
            "temperature must be nonnegative, got {temperature}"
        )));
    }
    let c_ip: f64 = spec
        .lambdas
        .iter()
        .map(|&l| 1.0 / (1.0 + temperature * l))
        .sum();
    let c_i: f64 = (spec.r - spec.r_s) as f64
        + spec
            .lambdas
            .iter()
            .map(|&l| temperature * l / (1.0 + temperature * l))
            .sum::<f64>();
    Ok((c_ip, c_i))
}

/// Whitened predictable-fraction geometry on the active subspace.
#[derive(Debug, Clone)]
pub struct WhitenedGeometry {
    /// `Γ` restricted to the active subspace (r×r).
    pub gamma: SymmetricMatrix,
    /// Orthonormal basis of the active subspace (d×r columns).
    pub basis: DMatrix<f64>,
    /// Eigenvalues of `Γ`, descending, clipped to `[0, 1]`.
    pub gammas: Vec<f64>,
    pub c_ip: f64,
    pub c_i: f64,
    /// Intrinsic volume and dimension of the predictable ellipsoid.
    pub pred_volume: (f64, usize),
    /// Intrinsic volume and dimension of the innovation ellipsoid.
    pub innov_volume: (f64, usize),
}

/// Whitens the split: `Γ = Σ^{+/2} S Σ^{+/2}` on range(Σ), with eigenvalue
/// fractions, trace capacities and intrinsic ellipsoid volumes.
pub fn whitened_geometry(split: &CovarianceSplit) -> Result<WhitenedGeometry> {
    let rel_tol = split.rel_tol();
    let eig = sym_eig(&split.sigma)?;
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    let r = eig.values.iter().filter(|&&v| v > cut).count();
    let d = split.dim();
    let basis = DMatrix::from_fn(d, r, |i, j| eig.vectors[(i, j)]);
    let w = DMatrix::from_fn(d, r, |i, j| eig.vectors[(i, j)] / eig.values[j].sqrt());
    let gamma = SymmetricMatrix::new(w.transpose() * split.s.matrix() * &w)?;
    let geig = sym_eig(&gamma)?;
    // Whitening noise can push eigenvalues marginally outside [0, 1].
    let gammas: Vec<f64> = geig.values.iter().map(|&g| g.clamp(0.0, 1.0)).collect();
    let c_ip: f64 = gammas.iter().sum();
    let c_i = r as f64 - c_ip;

    // Eigenvalues of Γ and Π − Γ are fractions in [0, 1], so the rank
    // threshold is taken relative to unit scale.
    let pred_volume = fraction_volume(gammas.iter().cloned(), rel_tol);
    let innov_volume = fraction_volume(gammas.iter().map(|&g| 1.0 - g), rel_tol);

    Ok(WhitenedGeometry {
        gamma,
        basis,
        gammas,
        c_ip,
        c_i,
        pred_volume,
        innov_volume,
    })
}

impl WhitenedGeometry {
    pub fn rank(&self) -> usize {
        self.gammas.len()
    }

    /// Complementary innovation-fraction operator `Γ^C = Π − Γ` on the
    /// active subspace.
    pub fn gamma_complement(&self) -> Result<SymmetricMatrix> {
        let r = self.rank();
        SymmetricMatrix::new(DMatrix::identity(r, r) - self.gamma.matrix())
    }
}

fn fraction_volume(fracs: impl Iterator<Item = f64>, rel_tol: f64) -> (f64, usize) {
    let kept: Vec<f64> = fracs.filter(|&v| v > rel_tol).collect();
    let dim = kept.len();
    let log_vol = ln_ball_volume(dim) + 0.5 * kept.iter().map(|v| v.ln()).sum::<f64>();
    (log_vol.exp(), dim)
}

/// The τ-innovation subspace: eigendirections of `Γ` with innovation
/// fraction `1 − γ_k ≥ τ`.
#[derive(Debug, Clone)]
pub struct TauSubspace {
    pub tau: f64,
    pub indices: Vec<usize>,
    pub l_tau: usize,
    /// `L_τ × d` projector rows, orthonormal, composed with the whitening
    /// basis of the active subspace.
    pub p_tau: DMatrix<f64>,
    /// Two-sided dimension bounds `(max{0, (C_i − τr)/(1−τ)}, C_i/τ)`.
    pub bounds: (f64, f64),
    /// Smallest eigenvalue of `P_τ (Π − Γ) P_τᵀ`; at least `τ` up to 1e-10.
    pub floor_lambda_min: f64,
}

pub fn tau_subspace(geom: &WhitenedGeometry, tau: f64) -> Result<TauSubspace> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    let r = geom.rank();
    let geig = sym_eig(&geom.gamma)?;
    let clipped: Vec<f64> = geig.values.iter().map(|&g| g.clamp(0.0, 1.0)).collect();
    let indices: Vec<usize> = (0..r).filter(|&k| 1.0 - clipped[k] >= tau).collect();
    let l_tau = indices.len();

    // Rows: selected eigenvectors of Γ mapped back through the active basis.
    let d = geom.basis.nrows();
    let mut p_tau = DMatrix::zeros(l_tau, d);
    for (row, &k) in indices.iter().enumerate() {
        let qk = geig.vectors.column(k);
        let v = &geom.basis * qk;
        for i in 0..d {
            p_tau[(row, i)] = v[i];
        }
    }

    let lower = ((geom.c_i - tau * r as f64) / (1.0 - tau)).max(0.0);
    let upper = geom.c_i / tau;

    let floor_lambda_min = if l_tau == 0 {
        f64::INFINITY
    } else {
        let q_sel = DMatrix::from_fn(r, l_tau, |i, j| geig.vectors[(i, indices[j])]);
        let f = SymmetricMatrix::new(
            q_sel.transpose() * (DMatrix::identity(r, r) - geom.gamma.matrix()) * &q_sel,
        )?;
        sym_eig(&f)?
            .values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };

    Ok(TauSubspace {
        tau,
        indices,
        l_tau,
        p_tau,
        bounds: (lower, upper),
        floor_lambda_min,
    })
}

/// Assembles the `Lb × Lb` block-Toeplitz covariance of a stacked block
/// `[Y_{t−b+1}, …, Y_t]` from lagged autocovariances `K_0, K_1, …`.
/// Lags beyond the supplied list are treated as zero.
pub fn block_covariance(autocovs: &[DMatrix<f64>], b: usize) -> Result<SymmetricMatrix> {
    if autocovs.is_empty() {
        return Err(Error::InvalidInput("need at least K_0".into()));
    }
    if b == 0 {
        return Err(Error::InvalidInput("block length must be positive".into()));
    }
    let l = autocovs[0].nrows();
    for (k, m) in autocovs.iter().enumerate() {
        if m.nrows() != l || m.ncols() != l {
            return Err(Error::InvalidInput(format!(
                "lag {k} has shape {}x{}, expected {l}x{l}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let k0 = &autocovs[0];
    if (k0 - k0.transpose()).norm() > 1e-9 * k0.norm().max(1.0) {
        return Err(Error::InvalidInput("K_0 must be symmetric".into()));
    }
    let mut big = DMatrix::zeros(l * b, l * b);
    for bi in 0..b {
        for bj in bi..b {
            let lag = bj - bi;
            if lag >= autocovs.len() {
                continue;
            }
            let blk = &autocovs[lag];
            for i in 0..l {
                for j in 0..l {
                    big[(bi * l + i, bj * l + j)] = blk[(i, j)];
                    big[(bj * l + j, bi * l + i)] = blk[(i, j)];
                }
            }
        }
    }
    SymmetricMatrix::new(big)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockFloorCheck {
    pub epsilon: f64,
    pub floor: f64,
    pub lambda_min: f64,
    pub holds: bool,
    /// Set when `floor ≤ 0`, i.e. the bound is vacuously true.
    pub vacuous: bool,
}

/// Checks the block covariance floor `λ_min ≥ τ − 2ε` with
/// `ε = Σ_{k≥1} ‖K_k‖_op`. Requires `K_0 ⪰ τ I`.
pub fn block_floor_check(autocovs: &[DMatrix<f64>], b: usize, tau: f64) -> Result<BlockFloorCheck> {
    let block = block_covariance(autocovs, b)?;
    let k0 = SymmetricMatrix::new(autocovs[0].clone())?;
    let k0_min = sym_eig(&k0)?
        .values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if k0_min < tau - 1e-12 {
        return Err(Error::PreconditionFailed(format!(
            "K_0 floor violated: lambda_min(K_0) = {k0_min:.6e} < tau = {tau}"
        )));
    }
    let epsilon: f64 = autocovs[1..].iter().map(operator_norm).sum();
    let floor = tau - 2.0 * epsilon;
    let lambda_min = sym_eig(&block)?
        .values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(BlockFloorCheck {
        epsilon,
        floor,
        lambda_min,
        holds: lambda_min >= floor - 1e-10,
        vacuous: floor <= 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingCovBound {
    pub per_lag_bounds: Vec<f64>,
    pub sum_bound: f64,
    /// Whether `Σ_k α(k)^{δ/(2+δ)} ≤ τ/(32 M²)` holds.
    pub floor_condition: bool,
    /// Set when some coefficient exceeds 1/4, outside the defining range of
    /// strong-mixing coefficients.
    pub alpha_range_warning: bool,
}

/// Operator-norm covariance decay implied by strong mixing:
/// `‖K_k‖_op ≤ 8 M² α(k)^{δ/(2+δ)}`, plus the summed version and the
/// sufficient condition for a uniform `τ/2` block floor.
pub fn mixing_cov_bound(
    alpha_coeffs: &[f64],
    m_2delta: f64,
    delta: f64,
    tau: f64,
) -> Result<MixingCovBound> {
    if delta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(m_2delta > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidInput(
            "moment bound and tau must be positive".into(),
        ));
    }
    if alpha_coeffs.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::InvalidInput(
            "mixing coefficients must lie in [0, 1]".into(),
        ));
    }
    let alpha_range_warning = alpha_coeffs.iter().any(|&a| a > 0.25);
    let expo = delta / (2.0 + delta);
    let m2 = m_2delta * m_2delta;
    let per_lag_bounds: Vec<f64> = alpha_coeffs
        .iter()
        .map(|&a| 8.0 * m2 * a.powf(expo))
        .collect();
    let alpha_sum: f64 = alpha_coeffs.iter().map(|&a| a.powf(expo)).sum();
    Ok(MixingCovBound {
        sum_bound: per_lag_bounds.iter().sum(),
        per_lag_bounds,
        floor_condition: alpha_sum <= tau / (32.0 * m2),
        alpha_range_warning,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyBound {
    /// `½ log det₊(K) − m log L⋆`, in nats.
    pub bound_general: f64,
    /// `(m/2) log(σ²/L⋆²)` with `σ² = λ_min(K)`, in nats.
    pub bound_sigma: f64,
}

/// Differential-entropy lower bounds from a bounded isotropic constant.
pub fn isotropic_entropy_bound(cov: &SymmetricMatrix, l_star: f64) -> Result<EntropyBound> {
    if !(l_star > 0.0) {
        return Err(Error::InvalidInput(format!(
            "L_star must be positive, got {l_star}"
        )));
    }
    let m = cov.dim() as f64;
    let log_det = log_pseudo_det(cov, DEFAULT_REL_TOL)?;
    let sigma_sq = sym_eig(cov)?
        .values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    Ok(EntropyBound {
        bound_general: 0.5 * log_det - m * l_star.ln(),
        bound_sigma: 0.5 * m * (sigma_sq / (l_star * l_star)).ln(),
    })
}

/// Log-volume of the unit Euclidean ball in `R^m`:
/// `(m/2) ln π − ln Γ(m/2 + 1)`.
pub fn ln_ball_volume(m: usize) -> f64 {
    0.5 * m as f64 * std::f64::consts::PI.ln() - ln_gamma_half_integer(m + 2)
}

/// `ln Γ(n/2)` for positive integer `n`, by upward recursion from
/// `Γ(1/2) = √π` or `Γ(1) = 1`.
fn ln_gamma_half_integer(n: usize) -> f64 {
    assert!(n >= 1);
    let mut acc;
    let mut x;
    if n % 2 == 0 {
        acc = 0.0; // ln Γ(1)
        x = 1.0;
    } else {
        acc = 0.5 * std::f64::consts::PI.ln(); // ln Γ(1/2)
        x = 0.5;
    }
    while x < n as f64 / 2.0 - 0.25 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// Covering-number lower bound at resolution `ρ`:
/// `entropy_lb + m log(1/ρ) − log Vol(B₁^m)` (nats).
pub fn covering_bound(entropy_lb: f64, m: usize, rho: f64) -> Result<f64> {
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::InvalidInput(format!(
            "rho must lie in (0,1), got {rho}"
        )));
    }
    Ok(entropy_lb + m as f64 * (1.0 / rho).ln() - ln_ball_volume(m))
}

/// Parameters of a depth-`L` layered noisy circuit: per-edge total-variation
/// contraction `θ`, fan-in `B`, input size `n`, a polynomial width bound,
/// output alphabet size `k` and attractor entropy `H(π)` in bits.
#[derive(Debug, Clone, Serialize)]
pub struct CascadeParams {
    pub theta: f64,
    pub fan_in: u32,
    pub depth: u32,
    pub n_input: u64,
    /// Coefficients of the width polynomial, ascending powers of `n`.
    pub poly_coeffs: Vec<f64>,
    pub k_alphabet: u32,
    pub h_pi_bits: f64,
    pub m_runs: u64,
}

impl CascadeParams {
    pub fn new(
        theta: f64,
        fan_in: u32,
        depth: u32,
        n_input: u64,
        poly_coeffs: Vec<f64>,
        k_alphabet: u32,
        h_pi_bits: f64,
        m_runs: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in [0,1), got {theta}"
            )));
        }
        if fan_in < 1 {
            return Err(Error::InvalidInput("fan-in must be at least 1".into()));
        }
        if k_alphabet < 2 {
            return Err(Error::InvalidInput(
                "alphabet size must be at least 2".into(),
            ));
        }
        let h_max = (k_alphabet as f64).log2();
        if !(0.0..=h_max + 1e-12).contains(&h_pi_bits) {
            return Err(Error::InvalidInput(format!(
                "H(pi) = {h_pi_bits} outside [0, log2 k = {h_max}]"
            )));
        }
        if poly_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "polynomial coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            theta,
            fan_in,
            depth,
            n_input,
            poly_coeffs,
            k_alphabet,
            h_pi_bits,
            m_runs,
        })
    }

    fn poly_value(&self) -> f64 {
        let n = self.n_input as f64;
        self.poly_coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * n.powi(i as i32))
            .sum()
    }
}

/// Worst-case output sensitivity bound `min{1, poly(n) (Bθ)^L}`.
/// A value of exactly 1 means the bound is vacuous.
pub fn cascade_sensitivity(p: &CascadeParams) -> f64 {
    let b_theta = p.fan_in as f64 * p.theta;
    (p.poly_value() * b_theta.powi(p.depth as i32)).min(1.0)
}

/// Binary entropy in bits, with `h₂(0) = h₂(1) = 0` by continuity.
pub fn h2_bits(delta: f64) -> f64 {
    if delta <= 0.0 || delta >= 1.0 {
        return 0.0;
    }
    -delta * delta.log2() - (1.0 - delta) * (1.0 - delta).log2()
}

/// Entropy floor `H(π) − f_k(min{1, δ_L})` in bits, with
/// `f_k(δ) = δ log₂(k−1) + h₂(δ)`.
pub fn cascade_entropy_floor(p: &CascadeParams, delta_l: f64) -> f64 {
    let d = delta_l.clamp(0.0, 1.0);
    let f = d * ((p.k_alphabet - 1) as f64).log2() + h2_bits(d);
    p.h_pi_bits - f
}

/// One covariance split observed at a grid point of the Duffing sweep.
#[derive(Debug, Clone)]
pub struct CovfitSample {
    pub beta: f64,
    pub temperature: f64,
    pub split: CovarianceSplit,
}

/// Fitted covariance closure at one nonlinearity value: baseline `S(β)`,
/// unit-temperature innovation `N₁(β)` and the nonnegative polynomial
/// coefficients of the isotropic inflation term.
#[derive(Debug, Clone)]
pub struct BetaFit {
    pub beta: f64,
    pub s: SymmetricMatrix,
    pub n1: SymmetricMatrix,
    pub nbar: f64,
    /// `a_k ≥ 0`, powers `T^1 … T^deg`.
    pub a: Vec<f64>,
    pub r_squared: f64,
}

#[derive(Debug, Clone)]
pub struct CovFitModel {
    pub fits: Vec<BetaFit>,
    pub max_degree: usize,
    rel_tol: f64,
}

impl CovFitModel {
    pub fn fit_for(&self, beta: f64) -> Option<&BetaFit> {
        self.fits
            .iter()
            .find(|f| (f.beta - beta).abs() <= 1e-9 * beta.abs().max(1.0))
    }

    /// Model covariance `Σ̂(T, β) = S + T N₁ + |β|³ g(T) N̄ I`.
    pub fn predict_sigma(&self, beta: f64, temperature: f64) -> Option<SymmetricMatrix> {
        let fit = self.fit_for(beta)?;
        let d = fit.s.dim();
        let g: f64 = fit
            .a
            .iter()
            .enumerate()
            .map(|(i, &a)| a * temperature.powi(i as i32 + 1))
            .sum();
        let inflation = beta.abs().powi(3) * g * fit.nbar;
        let m =
            fit.s.matrix() + fit.n1.matrix() * temperature + DMatrix::identity(d, d) * inflation;
        SymmetricMatrix::new(m).ok()
    }

    /// Deterministic-sector capacity predicted by the closure:
    /// `Tr(Ŝ Σ̂(T,β)⁺)`.
    pub fn predicted_c_ip(&self, beta: f64, temperature: f64) -> Option<f64> {
        let fit = self.fit_for(beta)?;
        let sigma = self.predict_sigma(beta, temperature)?;
        let p = pinv(&sigma, self.rel_tol).ok()?;
        Some((fit.s.matrix() * p.matrix()).trace())
    }
}

/// Fits the additive-plus-isotropic covariance closure per `β`:
/// `S(β)` and `N₁(β)` from the two smallest temperatures by linear
/// extrapolation, then the inflation coefficients `a_k ≥ 0` from the trace
/// residuals by nonnegative least squares.
pub fn duffing_covfit(samples: &[CovfitSample], max_poly_degree: usize) -> Result<CovFitModel> {
    if max_poly_degree == 0 {
        return Err(Error::InvalidInput("polynomial degree must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData("no covariance samples".into()));
    }
    let rel_tol = samples[0].split.rel_tol();

    let mut betas: Vec<f64> = Vec::new();
    for s in samples {
        if !betas
            .iter()
            .any(|&b| (b - s.beta).abs() <= 1e-9 * s.beta.abs().max(1.0))
        {
            betas.push(s.beta);
        }
    }
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut fits = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let mut group: Vec<&CovfitSample> = samples
            .iter()
            .filter(|s| (s.beta - beta).abs() <= 1e-9 * beta.abs().max(1.0))
            .collect();
        group.sort_by(|a, b| a.temperature.partial_cmp(&b.temperature).unwrap());
        if group.len() < max_poly_degree + 2 {
            return Err(Error::InsufficientData(format!(
                "beta = {beta}: {} temperatures, need at least {}",
                group.len(),
                max_poly_degree + 2
            )));
        }
        let (t_a, t_b) = (group[0].temperature, group[1].temperature);
        if !(t_b > t_a) {
            return Err(Error::InvalidInput(format!(
                "beta = {beta}: two smallest temperatures must be distinct"
            )));
        }
        let (s_a, s_b) = (group[0].split.predictable(), group[1].split.predictable());
        let (n_a, n_b) = (group[0].split.innovation(), group[1].split.innovation());
        let span = t_b - t_a;
        // Intercept at T = 0 for S, slope in T for N.
        let s0 = SymmetricMatrix::new((s_a.matrix() * t_b - s_b.matrix() * t_a) / span)?;
        let s0 = psd_clamp(&s0)?;
        let n1 = SymmetricMatrix::new((n_b.matrix() - n_a.matrix()) / span)?;
        let n1 = psd_clamp(&n1)?;
        let nbar = 0.5 * n1.trace();
        let d = s0.dim() as f64;

        let m_rows = group.len();
        let scale = beta.abs().powi(3) * nbar * d;
        let design = DMatrix::from_fn(m_rows, max_poly_degree, |i, k| {
            scale * group[i].temperature.powi(k as i32 + 1)
        });
        let y = DVector::from_fn(m_rows, |i, _| {
            group[i].split.sigma().trace() - s0.trace() - group[i].temperature * n1.trace()
        });
        let a = if scale.abs() < 1e-300 {
            DVector::zeros(max_poly_degree)
        } else {
            nnls(&design, &y)?
        };
        let resid = (&y - &design * &a).norm_squared();
        let mean_y = y.iter().sum::<f64>() / m_rows as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
        let r_squared = if ss_tot > 1e-24 {
            1.0 - resid / ss_tot
        } else if resid <= 1e-24 {
            1.0
        } else {
            0.0
        };
        fits.push(BetaFit {
            beta,
            s: s0,
            n1,
            nbar,
            a: a.iter().cloned().collect(),
            r_squared,
        });
    }
    Ok(CovFitModel {
        fits,
        max_degree: max_poly_degree,
        rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> SymmetricMatrix {
        let g = DMatrix::from_fn(dim, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        SymmetricMatrix::new(&g * g.transpose()).unwrap()
    }

    fn random_split(rng: &mut ChaCha8Rng, dim: usize) -> CovarianceSplit {
        let s = random_psd(rng, dim, dim);
        let n = random_psd(rng, dim, dim);
        CovarianceSplit::new(s, n, DEFAULT_REL_TOL).unwrap()
    }

    #[test]
    fn traces_noise_free() {
        let s = SymmetricMatrix::from_diagonal(&[1.0, 2.0, 0.0]);
        let split = CovarianceSplit::new(s, SymmetricMatrix::zeros(3), 1e-10).unwrap();
        let (c_ip, c_i) = capacity_traces(&split).unwrap();
        assert_abs_diff_eq!(c_ip, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c_i, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn traces_diagonal_example() {
        let split = CovarianceSplit::new(
            SymmetricMatrix::from_diagonal(&[1.0, 1.0]),
            SymmetricMatrix::from_diagonal(&[1.0, 4.0]),
            1e-10,
        )
        .unwrap();
        let (c_ip, c_i) = capacity_traces(&split).unwrap();
        assert_abs_diff_eq!(c_ip, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(c_i, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn conservation_random_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let dim = rng.random_range(2..8);
            let split = random_split(&mut rng, dim);
            let (c_ip, c_i) = capacity_traces(&split).unwrap();
            assert_abs_diff_eq!(c_ip + c_i, split.rank().rank as f64, epsilon = 1e-8);
        }
    }

    #[test]
    fn shrinkage_limits() {
        let spec = PencilSpectrum {
            lambdas: vec![2.0, 0.5],
            r: 3,
            r_s: 2,
        };
        let (c_ip, c_i) = shrinkage_capacities(&spec, 0.0).unwrap();
        assert_abs_diff_eq!(c_ip, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c_i, 1.0, epsilon = 1e-12);
        let (c_ip_hot, _) = shrinkage_capacities(&spec, 1e12).unwrap();
        assert!(c_ip_hot < 1e-10);
        assert!(shrinkage_capacities(&spec, -1.0).is_err());
    }

    #[test]
    fn shrinkage_cross_oracle_diagonal() {
        // lambda = (1,4) matches capacity_traces on S = I, N0 = diag(1,4) at T = 1.
        let s = SymmetricMatrix::identity(2);
        let n0 = SymmetricMatrix::from_diagonal(&[1.0, 4.0]);
        let spec = PencilSpectrum::from_pair(&n0, &s, 1e-10).unwrap();
        let (c_ip, c_i) = shrinkage_capacities(&spec, 1.0).unwrap();
        assert_abs_diff_eq!(c_ip, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(c_i, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn shrinkage_matches_traces_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..30 {
            let dim = rng.random_range(2..6);
            let s = random_psd(&mut rng, dim, dim);
            let n0 = random_psd(&mut rng, dim, dim);
            let spec = PencilSpectrum::from_pair(&n0, &s, 1e-10).unwrap();
            for t in [0.0, 0.1, 1.0, 10.0] {
                let split = CovarianceSplit::new(s.clone(), n0.scale(t), DEFAULT_REL_TOL).unwrap();
                let (tr_ip, tr_i) = capacity_traces(&split).unwrap();
                let (sh_ip, sh_i) = shrinkage_capacities(&spec, t).unwrap();
                assert_abs_diff_eq!(tr_ip, sh_ip, epsilon = 1e-8);
                assert_abs_diff_eq!(tr_i, sh_i, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn whitened_noiseless_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let s = random_psd(&mut rng, 4, 2);
        let split = CovarianceSplit::new(s, SymmetricMatrix::zeros(4), 1e-10).unwrap();
        let geom = whitened_geometry(&split).unwrap();
        assert_eq!(geom.rank(), 2);
        for g in &geom.gammas {
            assert_abs_diff_eq!(*g, 1.0, epsilon = 1e-8);
        }
        assert_eq!(geom.innov_volume.1, 0);
    }

    #[test]
    fn whitened_half_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let s = random_psd(&mut rng, 3, 3);
        let split = CovarianceSplit::new(s.clone(), s, 1e-10).unwrap();
        let geom = whitened_geometry(&split).unwrap();
        for g in &geom.gammas {
            assert_abs_diff_eq!(*g, 0.5, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(geom.pred_volume.0, geom.innov_volume.0, epsilon = 1e-10);
    }

    #[test]
    fn whitened_matches_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..20 {
            let split = random_split(&mut rng, 5);
            let geom = whitened_geometry(&split).unwrap();
            let (c_ip, c_i) = capacity_traces(&split).unwrap();
            assert_abs_diff_eq!(geom.c_ip, c_ip, epsilon = 1e-8);
            assert_abs_diff_eq!(geom.c_i, c_i, epsilon = 1e-8);
            assert_abs_diff_eq!(geom.c_ip + geom.c_i, geom.rank() as f64, epsilon = 1e-8);
        }
    }

    #[test]
    fn gamma_complement_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let split = random_split(&mut rng, 4);
        let geom = whitened_geometry(&split).unwrap();
        let comp = geom.gamma_complement().unwrap();
        let mut comp_eigs: Vec<f64> = sym_eig(&comp).unwrap().values.iter().cloned().collect();
        comp_eigs.reverse(); // ascending -> pair with descending gammas
        for (g, c) in geom.gammas.iter().zip(comp_eigs.iter()) {
            assert_abs_diff_eq!(g + c, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn tau_subspace_hand_example() {
        // gamma = (0.9, 0.5, 0.1), tau = 0.3: innovation fractions (0.1, 0.5, 0.9).
        let gamma = SymmetricMatrix::from_diagonal(&[0.9, 0.5, 0.1]);
        let split = CovarianceSplit::new(
            gamma.clone(),
            SymmetricMatrix::from_diagonal(&[0.1, 0.5, 0.9]),
            1e-10,
        )
        .unwrap();
        let geom = whitened_geometry(&split).unwrap();
        let ts = tau_subspace(&geom, 0.3).unwrap();
        assert_eq!(ts.l_tau, 2);
        let (lo, hi) = ts.bounds;
        assert_abs_diff_eq!(lo, (1.5 - 0.9) / 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 1.5 / 0.3, epsilon = 1e-10);
        assert!(ts.floor_lambda_min >= 0.3 - 1e-10);
    }

    #[test]
    fn tau_subspace_pure_innovation() {
        let split = CovarianceSplit::new(
            SymmetricMatrix::zeros(3),
            SymmetricMatrix::identity(3),
            1e-10,
        )
        .unwrap();
        let geom = whitened_geometry(&split).unwrap();
        for tau in [0.1, 0.5, 0.9] {
            let ts = tau_subspace(&geom, tau).unwrap();
            assert_eq!(ts.l_tau, 3);
        }
    }

    #[test]
    fn tau_subspace_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let s = random_psd(&mut rng, 3, 3);
        let n = random_psd(&mut rng, 3, 3);
        let split = CovarianceSplit::new(s, n, 1e-10).unwrap();
        let geom = whitened_geometry(&split).unwrap();
        if geom.gammas.iter().all(|&g| g > 1e-6) {
            let ts = tau_subspace(&geom, 1.0 - 1e-12).unwrap();
            assert_eq!(ts.l_tau, 0);
        }
        assert!(tau_subspace(&geom, 0.0).is_err());
        assert!(tau_subspace(&geom, 1.0).is_err());
    }

    #[test]
    fn tau_bounds_random_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let dim = rng.random_range(2..8);
            let split = random_split(&mut rng, dim);
            let geom = whitened_geometry(&split).unwrap();
            for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let ts = tau_subspace(&geom, tau).unwrap();
                let (lo, hi) = ts.bounds;
                assert!(
                    lo - 1e-9 <= ts.l_tau as f64 && (ts.l_tau as f64) <= hi + 1e-9,
                    "bounds violated: {lo} <= {} <= {hi}",
                    ts.l_tau
                );
            }
        }
    }

    #[test]
    fn block_covariance_base_cases() {
        let k0 = DMatrix::identity(2, 2) * 3.0;
        let blk = block_covariance(&[k0.clone()], 1).unwrap();
        assert!((blk.matrix() - &k0).norm() < 1e-14);

        let blk3 = block_covariance(&[k0.clone(), DMatrix::zeros(2, 2)], 3).unwrap();
        assert_eq!(blk3.dim(), 6);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i / 2 == j / 2 {
                    k0[(i % 2, j % 2)]
                } else {
                    0.0
                };
                assert_abs_diff_eq!(blk3.matrix()[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn block_covariance_ar1_monte_carlo() {
        // Scalar AR(1): K_k = rho^k; block covariance vs a long simulated path.
        let rho = 0.6_f64;
        let b = 4;
        let lags: Vec<DMatrix<f64>> = (0..b)
            .map(|k| DMatrix::from_element(1, 1, rho.powi(k as i32)))
            .collect();
        let blk = block_covariance(&lags, b).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let n = 1_000_000;
        let innov_sd = (1.0 - rho * rho).sqrt();
        let mut y = 0.0;
        let mut hist = vec![0.0_f64; n];
        for slot in hist.iter_mut() {
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            y = rho * y + innov_sd * z;
            *slot = y;
        }
        let mut emp = DMatrix::zeros(b, b);
        for t in b..n {
            for i in 0..b {
                for j in 0..b {
                    emp[(i, j)] += hist[t - b + 1 + i] * hist[t - b + 1 + j];
                }
            }
        }
        emp /= (n - b) as f64;
        let rel = (&emp - blk.matrix()).norm() / blk.matrix().norm();
        assert!(rel < 0.05, "Monte-Carlo mismatch {rel}");
    }

    #[test]
    fn block_covariance_dimension_mismatch() {
        let res = block_covariance(&[DMatrix::identity(2, 2), DMatrix::zeros(3, 3)], 2);
        assert!(matches!(res, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn block_floor_independent_process() {
        let k0 = DMatrix::identity(2, 2) * 1.5;
        let chk = block_floor_check(&[k0], 8, 1.0).unwrap();
        assert_abs_diff_eq!(chk.epsilon, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chk.floor, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chk.lambda_min, 1.5, epsilon = 1e-10);
        assert!(chk.holds && !chk.vacuous);
    }

    #[test]
    fn block_floor_ar1() {
        let rho = 0.1_f64;
        for b in [2usize, 8, 64] {
            let lags: Vec<DMatrix<f64>> = (0..b)
                .map(|k| DMatrix::from_element(1, 1, rho.powi(k as i32)))
                .collect();
            let chk = block_floor_check(&lags, b, 1.0).unwrap();
            let eps_expect: f64 = (1..b).map(|k| rho.powi(k as i32)).sum();
            assert_abs_diff_eq!(chk.epsilon, eps_expect, epsilon = 1e-12);
            assert!(chk.holds, "floor fails at b = {b}");
        }
    }

    #[test]
    fn block_floor_degenerate_regime() {
        let rho = 0.45_f64; // epsilon = 0.45/0.55 > tau/2
        let b = 6;
        let lags: Vec<DMatrix<f64>> = (0..b)
            .map(|k| DMatrix::from_element(1, 1, rho.powi(k as i32)))
            .collect();
        let chk = block_floor_check(&lags, b, 1.0).unwrap();
        assert!(chk.vacuous);
        assert!(chk.holds);
    }

    #[test]
    fn block_floor_precondition() {
        let k0 = DMatrix::identity(1, 1) * 0.5;
        assert!(matches!(
            block_floor_check(&[k0], 2, 1.0),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn mixing_bound_zero() {
        let b = mixing_cov_bound(&[0.0, 0.0], 1.0, 2.0, 1.0).unwrap();
        assert!(b.per_lag_bounds.iter().all(|&v| v == 0.0));
        assert!(b.floor_condition);
    }

    #[test]
    fn mixing_bound_geometric_closed_form() {
        // alpha(k) = 2^{-k}, delta = 2, M = 1: per-lag 8 * 2^{-k/2}.
        let alphas: Vec<f64> = (1..=40).map(|k| 0.5_f64.powi(k)).collect();
        let b = mixing_cov_bound(&alphas, 1.0, 2.0, 1.0).unwrap();
        for (k, v) in b.per_lag_bounds.iter().enumerate() {
            let expect = 8.0 * 0.5_f64.powf((k as f64 + 1.0) / 2.0);
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
        // Truncated geometric series with ratio q = 2^{-1/2}.
        let q = 0.5_f64.sqrt();
        let expect_sum = 8.0 * q * (1.0 - q.powi(40)) / (1.0 - q);
        assert_abs_diff_eq!(b.sum_bound, expect_sum, epsilon = 1e-9);
    }

    #[test]
    fn mixing_bound_threshold_inclusive() {
        // One lag with alpha^{delta/(2+delta)} exactly tau/(32 M^2).
        let tau = 0.8;
        let target = tau / 32.0;
        let alpha = target * target; // delta = 2 -> exponent 1/2
        let b = mixing_cov_bound(&[alpha], 1.0, 2.0, tau).unwrap();
        assert!(b.floor_condition);
        assert!(mixing_cov_bound(&[alpha], 1.0, -1.0, tau).is_err());
    }

    #[test]
    fn entropy_bound_gaussian_gap() {
        // K = I_m, L* = (2*pi)^{-1/2}: bound = (m/2) log 2pi, truth (m/2) log 2pi e.
        let l_star = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for m in [1usize, 3, 8] {
            let bound = isotropic_entropy_bound(&SymmetricMatrix::identity(m), l_star).unwrap();
            let h_true = 0.5 * m as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
            assert_abs_diff_eq!(h_true - bound.bound_general, m as f64 / 2.0, epsilon = 1e-8);
            assert_abs_diff_eq!(bound.bound_general, bound.bound_sigma, epsilon = 1e-10);
        }
    }

    #[test]
    fn entropy_bound_vacuous_limit() {
        let b1 = isotropic_entropy_bound(&SymmetricMatrix::identity(2), 10.0).unwrap();
        let b2 = isotropic_entropy_bound(&SymmetricMatrix::identity(2), 1e8).unwrap();
        assert!(b2.bound_general < b1.bound_general);
    }

    #[test]
    fn covering_bound_one_dim() {
        // m = 1, rho = 1/2, entropy 0: log 2 - log Vol(B_1^1) = log 2 - log 2 = 0.
        let v = covering_bound(0.0, 1, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn covering_bound_rho_halving() {
        for m in [1usize, 4, 16, 64] {
            let a = covering_bound(1.3, m, 0.4).unwrap();
            let b = covering_bound(1.3, m, 0.2).unwrap();
            assert_abs_diff_eq!(b - a, m as f64 * 2.0_f64.ln(), epsilon = 1e-9);
        }
        assert!(covering_bound(0.0, 2, 1.5).is_err());
    }

    #[test]
    fn ball_volumes_known_values() {
        assert_abs_diff_eq!(ln_ball_volume(1), 2.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_ball_volume(2),
            std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ln_ball_volume(3),
            (4.0 / 3.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cascade_sensitivity_cases() {
        let p = CascadeParams::new(0.0, 2, 5, 10, vec![0.0, 1.0], 2, 1.0, 4).unwrap();
        assert_eq!(cascade_sensitivity(&p), 0.0);

        let vacuous = CascadeParams::new(0.6, 2, 5, 10, vec![0.0, 1.0], 2, 1.0, 4).unwrap();
        assert_eq!(cascade_sensitivity(&vacuous), 1.0);

        let worked = CascadeParams::new(0.25, 2, 10, 10, vec![0.0, 1.0], 2, 1.0, 4).unwrap();
        let v = cascade_sensitivity(&worked);
        assert_abs_diff_eq!(v, 10.0 * 0.5_f64.powi(10), epsilon = 1e-15);
    }

    #[test]
    fn cascade_entropy_floor_cases() {
        let p2 = CascadeParams::new(0.2, 2, 4, 8, vec![1.0], 2, 1.0, 4).unwrap();
        assert_abs_diff_eq!(cascade_entropy_floor(&p2, 0.0), 1.0, epsilon = 1e-15);
        // k = 2, delta = 1/2: f = h2(1/2) = 1 bit.
        assert_abs_diff_eq!(cascade_entropy_floor(&p2, 0.5), 0.0, epsilon = 1e-12);

        let p4 = CascadeParams::new(0.2, 2, 4, 8, vec![1.0], 4, 2.0, 4).unwrap();
        let expect = 2.0 - (0.1 * 3.0_f64.log2() + h2_bits(0.1));
        assert_abs_diff_eq!(cascade_entropy_floor(&p4, 0.1), expect, epsilon = 1e-12);
    }

    #[test]
    fn covfit_planted_recovery() {
        // Synthetic grid from the closure with a = (0, 0.3, 0).
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let beta = 1.3_f64;
        let s = random_psd(&mut rng, 2, 2);
        let n1 = random_psd(&mut rng, 2, 2)
            .add(&SymmetricMatrix::identity(2))
            .unwrap();
        let nbar = 0.5 * n1.trace();
        let a_true = [0.0, 0.3, 0.0];
        let temps: [f64; 6] = [1e-7, 2e-7, 0.25, 0.5, 0.75, 1.0];
        let samples: Vec<CovfitSample> = temps
            .iter()
            .map(|&t| {
                let g: f64 = a_true
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| a * t.powi(i as i32 + 1))
                    .sum();
                let infl = SymmetricMatrix::identity(2).scale(beta.powi(3) * g * nbar);
                let n_tot = n1.scale(t).add(&infl).unwrap();
                CovfitSample {
                    beta,
                    temperature: t,
                    split: CovarianceSplit::new(s.clone(), n_tot, DEFAULT_REL_TOL).unwrap(),
                }
            })
            .collect();
        let model = duffing_covfit(&samples, 3).unwrap();
        let fit = model.fit_for(beta).unwrap();
        for (k, &a) in fit.a.iter().enumerate() {
            assert!(
                (a - a_true[k]).abs() < 1e-6,
                "a_{} = {a}, expected {}",
                k + 1,
                a_true[k]
            );
        }
        assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn covfit_linear_system_all_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let s = random_psd(&mut rng, 2, 2);
        let n1 = random_psd(&mut rng, 2, 2);
        let samples: Vec<CovfitSample> = [0.01, 0.02, 0.5, 1.0, 2.0]
            .iter()
            .map(|&t| CovfitSample {
                beta: 0.0,
                temperature: t,
                split: CovarianceSplit::new(s.clone(), n1.scale(t), DEFAULT_REL_TOL).unwrap(),
            })
            .collect();
        let model = duffing_covfit(&samples, 3).unwrap();
        let fit = model.fit_for(0.0).unwrap();
        assert!(fit.a.iter().all(|&a| a.abs() < 1e-10));
        // Model reproduces the planted capacities exactly at beta = 0.
        for &t in &[0.5, 1.0, 2.0] {
            let split = CovarianceSplit::new(s.clone(), n1.scale(t), DEFAULT_REL_TOL).unwrap();
            let (c_ip, _) = capacity_traces(&split).unwrap();
            let pred = model.predicted_c_ip(0.0, t).unwrap();
            assert_abs_diff_eq!(c_ip, pred, epsilon = 1e-6);
        }
    }

    #[test]
    fn covfit_requires_enough_temperatures() {
        let s = SymmetricMatrix::identity(2);
        let samples: Vec<CovfitSample> = [0.1, 0.2]
            .iter()
            .map(|&t| CovfitSample {
                beta: 1.0,
                temperature: t,
                split: CovarianceSplit::new(
                    s.clone(),
                    SymmetricMatrix::identity(2).scale(t),
                    DEFAULT_REL_TOL,
                )
                .unwrap(),
            })
            .collect();
        assert!(matches!(
            duffing_covfit(&samples, 3),
            Err(Error::InsufficientData(_))
        ));
    }
}

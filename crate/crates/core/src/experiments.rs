//! Configuration-driven experiment runners.
//!
//! Each runner takes a typed config plus a master seed, computes its results
//! in memory and leaves file emission to [`emit`]. Grid cells execute in
//! parallel but results are collected in deterministic grid order, and every
//! random draw descends from the master seed, so a given (config, seed) pair
//! reproduces its outputs byte for byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    build_innovation_basis, build_mixed_basis, build_predictable_basis, doob_split,
    empirical_split, sector_capacities, BasisParams, CapacityReport, DoobSplit, Sector, TaskBlock,
};
use crate::error::{Error, Result};
use crate::geometry::{
    block_floor_check, capacity_traces, cascade_entropy_floor, cascade_sensitivity, covering_bound,
    duffing_covfit, h2_bits, isotropic_entropy_bound, mixing_cov_bound, shrinkage_capacities,
    tau_subspace, whitened_geometry, CascadeParams, CovarianceSplit, CovfitSample, PencilSpectrum,
};
use crate::hardness::{
    build_family, equal_mass_partition, family_summary, fano_bound, gaussian_typical_set,
    monte_carlo_tv, pairwise_tv_kl, sample_complexity, vg_code, FamilySummary,
};
use crate::reservoir::{
    design_lowpass_taps, rlc_state_space, run_trial_ensemble, steady_state_split,
    trial_mean_and_designated, DuffingConfig, ReadoutSeries, ReservoirSystem, RlcConfig,
    TrialEnsemble,
};
use crate::spectral::{
    lyapunov_solve, nnls, operator_norm, pinv, rank_info, sym_eig, SymmetricMatrix, DEFAULT_REL_TOL,
};

/// One predictable task sub-family: delayed-input polynomials up to a
/// degree and delay, capped in count. Later blocks are projected against
/// earlier ones, so a long linear block can coexist with a short
/// higher-degree block without double counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredBlockSpec {
    pub max_delay: usize,
    pub max_degree: usize,
    pub n_tasks: usize,
    /// Interaction range for multi-factor tasks; see [`BasisParams::band`].
    #[serde(default)]
    pub band: Option<usize>,
}

/// Task-family truncation settings shared by the sweep and grid runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub pred_blocks: Vec<PredBlockSpec>,
    pub innov_max_delay: usize,
    pub innov_max_degree: usize,
    pub innov_n_tasks: usize,
    pub mixed_n_tasks: usize,
    pub rel_tol: f64,
    pub drop_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pred_blocks: vec![PredBlockSpec {
                max_delay: 10,
                max_degree: 3,
                n_tasks: 40,
                band: None,
            }],
            innov_max_delay: 10,
            innov_max_degree: 2,
            innov_n_tasks: 16,
            mixed_n_tasks: 12,
            rel_tol: DEFAULT_REL_TOL,
            drop_tol: 1e-6,
        }
    }
}

impl EstimatorConfig {
    fn offset(&self) -> usize {
        self.pred_blocks
            .iter()
            .map(|b| b.max_delay)
            .chain(std::iter::once(self.innov_max_delay))
            .max()
            .unwrap_or(0)
    }

    fn pred_params(&self, block: &PredBlockSpec) -> BasisParams {
        BasisParams {
            max_delay: block.max_delay,
            max_degree: block.max_degree,
            n_tasks: block.n_tasks,
            drop_tol: self.drop_tol,
            offset: self.offset(),
            band: block.band,
        }
    }

    fn innov_params(&self) -> BasisParams {
        BasisParams {
            max_delay: self.innov_max_delay,
            max_degree: self.innov_max_degree,
            n_tasks: self.innov_n_tasks,
            drop_tol: self.drop_tol,
            offset: self.offset(),
            band: None,
        }
    }
}

/// Temperature sweep of the linear (RLC) reservoir: data-driven capacities
/// against the analytic shrinkage curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlcSweepConfig {
    pub rlc: RlcConfig,
    pub temperatures: Vec<f64>,
    pub n: usize,
    pub k_trials: usize,
    pub dt: f64,
    pub sigma_u: f64,
    /// Samples dropped before estimation; defaults to ten system time
    /// constants when absent.
    pub burn_in: Option<usize>,
    pub estimator: EstimatorConfig,
}

impl Default for RlcSweepConfig {
    fn default() -> Self {
        Self {
            rlc: RlcConfig {
                r: 1.0,
                l_ind: 1.0,
                c_cap: 1.0,
                alpha_s: 1.0,
                alpha_n: 1.0,
                gamma: 1.0,
                temperature: 1.0,
            },
            temperatures: vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            n: 200_000,
            k_trials: 200,
            dt: 0.1,
            sigma_u: 1.0,
            burn_in: None,
            estimator: EstimatorConfig {
                pred_blocks: vec![
                    PredBlockSpec {
                        max_delay: 60,
                        max_degree: 1,
                        n_tasks: 61,
                        band: None,
                    },
                    PredBlockSpec {
                        max_delay: 8,
                        max_degree: 3,
                        n_tasks: 24,
                        band: None,
                    },
                ],
                innov_max_delay: 8,
                innov_max_degree: 2,
                innov_n_tasks: 12,
                mixed_n_tasks: 10,
                ..EstimatorConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RlcSweepRow {
    pub temperature: f64,
    pub c_ip_sim: f64,
    pub c_i_sim: f64,
    pub c_ip_analytic: f64,
    pub c_i_analytic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RlcSweepResult {
    pub rows: Vec<RlcSweepRow>,
    pub max_dev_ip: f64,
    pub max_dev_i: f64,
}

fn gaussian_series(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

fn cell_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add((index as u64 + 1).wrapping_mul(1_000_003))
}

/// Estimates sector capacities of one designated trial against task bases
/// built from the shared input and the Doob residual stream.
fn estimate_capacities(
    u: &[f64],
    doob: &DoobSplit,
    designated: usize,
    est: &EstimatorConfig,
) -> Result<CapacityReport> {
    let offset = est.offset();
    let mut preds: Vec<TaskBlock> = Vec::with_capacity(est.pred_blocks.len());
    for spec in &est.pred_blocks {
        let prior: Vec<&TaskBlock> = preds.iter().collect();
        preds.push(build_predictable_basis(u, &est.pred_params(spec), &prior)?);
    }
    let pred_refs: Vec<&TaskBlock> = preds.iter().collect();
    let innov = build_innovation_basis(doob, designated, &est.innov_params(), &pred_refs)?;
    let mixed = build_mixed_basis(&pred_refs, &innov, est.mixed_n_tasks, est.drop_tol)?;
    let trial = ReadoutSeries::new(
        doob.mean.data() + doob.residuals[designated].data(),
        doob.mean.dt_sample,
    )?;
    let x = trial.window(offset, trial.n() - offset)?;
    let mut blocks: Vec<&TaskBlock> = pred_refs;
    blocks.push(&innov);
    blocks.push(&mixed);
    sector_capacities(&x, &blocks, Some(doob.k), est.rel_tol)
}

pub fn run_rlc_sweep(cfg: &RlcSweepConfig, seed: u64) -> Result<RlcSweepResult> {
    cfg.rlc.validate()?;
    let ss = rlc_state_space(&cfg.rlc)?;
    let burn = cfg
        .burn_in
        .unwrap_or(((10.0 / ss.decay_rate()) / cfg.dt).ceil() as usize);
    let q_s = cfg.sigma_u * cfg.sigma_u * cfg.dt;

    // Analytic split at unit temperature fixes the pencil once.
    let unit = steady_state_split(&ss, q_s, cfg.rlc.gamma)?;
    let spectrum =
        PencilSpectrum::from_pair(unit.innovation(), unit.predictable(), cfg.estimator.rel_tol)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_full = gaussian_series(&mut rng, cfg.n + burn, cfg.sigma_u);

    let rows: Vec<RlcSweepRow> = cfg
        .temperatures
        .par_iter()
        .enumerate()
        .map(|(ti, &temperature)| -> Result<RlcSweepRow> {
            if temperature < 0.0 {
                return Err(Error::InvalidInput("temperature must be >= 0".into()));
            }
            let (c_ip_analytic, c_i_analytic) = shrinkage_capacities(&spectrum, temperature)?;
            let system = ReservoirSystem::Linear {
                ss: ss.clone(),
                noise_intensity: cfg.rlc.gamma * temperature,
                dt: cfg.dt,
            };
            let (mean, trial) =
                trial_mean_and_designated(&system, &u_full, cfg.k_trials, cell_seed(seed, ti), 0)?;
            let mean_w = mean.window(burn, cfg.n)?;
            let trial_w = trial.window(burn, cfg.n)?;
            let residual = ReadoutSeries::new(trial_w.data() - mean_w.data(), trial_w.dt_sample)?;
            let doob = DoobSplit::from_designated(mean_w, residual, cfg.k_trials)?;
            let report = estimate_capacities(&u_full[burn..], &doob, 0, &cfg.estimator)?;
            Ok(RlcSweepRow {
                temperature,
                c_ip_sim: report.c_ip,
                c_i_sim: report.c_i,
                c_ip_analytic,
                c_i_analytic,
            })
        })
        .collect::<Result<_>>()?;

    let max_dev_ip = rows
        .iter()
        .map(|r| (r.c_ip_sim - r.c_ip_analytic).abs())
        .fold(0.0, f64::max);
    let max_dev_i = rows
        .iter()
        .map(|r| (r.c_i_sim - r.c_i_analytic).abs())
        .fold(0.0, f64::max);
    Ok(RlcSweepResult {
        rows,
        max_dev_ip,
        max_dev_i,
    })
}

/// Duffing grid over `(β, T)` with sector and sub-sector capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuffingGridConfig {
    pub duffing: DuffingConfig,
    pub betas: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// Readout samples per cell, at the decimated rate.
    pub n_coarse: usize,
    pub k_trials: usize,
    pub decimate: usize,
    pub sigma_u: f64,
    pub estimator: EstimatorConfig,
}

impl Default for DuffingGridConfig {
    fn default() -> Self {
        let omega = 2.0 * std::f64::consts::PI;
        Self {
            duffing: DuffingConfig {
                delta: 0.3,
                alpha: omega * omega,
                beta: 0.0,
                omega,
                omega_lpf: omega / 10.0,
                alpha_s: 5.0,
                alpha_n: 5.0,
                temperature: 0.0,
                dt: 0.025,
                burn_in: 1400,
                x0: (0.0, 0.0),
            },
            betas: vec![0.0, 0.7],
            temperatures: vec![0.0, 0.1, 0.3, 1.0, 3.0],
            n_coarse: 10_000,
            k_trials: 64,
            decimate: 160,
            sigma_u: 1.0,
            estimator: EstimatorConfig {
                pred_blocks: vec![
                    PredBlockSpec {
                        max_delay: 22,
                        max_degree: 1,
                        n_tasks: 23,
                        band: None,
                    },
                    PredBlockSpec {
                        max_delay: 22,
                        max_degree: 3,
                        n_tasks: 260,
                        band: Some(2),
                    },
                ],
                innov_max_delay: 2,
                innov_max_degree: 2,
                innov_n_tasks: 20,
                mixed_n_tasks: 20,
                ..EstimatorConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DuffingCell {
    pub beta: f64,
    pub temperature: f64,
    pub c_ip_total: f64,
    pub c_i_total: f64,
    pub c_ip_linear: f64,
    pub c_ip_cubic: f64,
    pub c_i_noise: f64,
    pub c_i_mixed: f64,
    pub rank: f64,
    pub diverged: bool,
}

impl DuffingCell {
    fn diverged(beta: f64, temperature: f64) -> Self {
        Self {
            beta,
            temperature,
            c_ip_total: f64::NAN,
            c_i_total: f64::NAN,
            c_ip_linear: f64::NAN,
            c_ip_cubic: f64::NAN,
            c_i_noise: f64::NAN,
            c_i_mixed: f64::NAN,
            rank: f64::NAN,
            diverged: true,
        }
    }
}

/// Shared input layout for one Duffing cell: zero-order-hold fine input
/// whose readout samples land exactly on a shifted copy of the coarse grid.
struct DuffingDrive {
    u_fine: Vec<f64>,
    /// Coarse input sample aligned with readout sample `j` is
    /// `u_coarse[coarse_shift + j]`.
    u_coarse: Vec<f64>,
    coarse_shift: usize,
}

fn duffing_drive(
    base: &DuffingConfig,
    n_coarse: usize,
    decimate: usize,
    sigma_u: f64,
    seed: u64,
) -> Result<DuffingDrive> {
    let taps = design_lowpass_taps(base.omega_lpf, base.dt)?.len();
    // Post-burn-in fine length so that n_coarse decimated outputs fit.
    let y_len = (n_coarse - 1) * decimate + taps + decimate;
    let fine_len = base.burn_in + y_len;
    let n_u_coarse = fine_len / decimate + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_coarse = gaussian_series(&mut rng, n_u_coarse, sigma_u);
    let u_fine: Vec<f64> = (0..fine_len).map(|k| u_coarse[k / decimate]).collect();
    // Causal task alignment: readout sample j (group-delay compensated to
    // fine index burn + taps/2 + j·decimate) depends on inputs up to the
    // trailing filter edge at burn + (taps−1) + j·decimate, so that is the
    // input sample paired with it.
    let causal_fine = base.burn_in + taps - 1;
    Ok(DuffingDrive {
        u_fine,
        u_coarse,
        coarse_shift: causal_fine / decimate,
    })
}

fn duffing_cell(
    cfg: &DuffingGridConfig,
    beta: f64,
    temperature: f64,
    drive: &DuffingDrive,
    seed: u64,
) -> Result<DuffingCell> {
    let mut d_cfg = cfg.duffing.clone();
    d_cfg.beta = beta;
    d_cfg.temperature = temperature;
    let system = ReservoirSystem::Duffing {
        cfg: d_cfg,
        decimate: cfg.decimate,
    };
    let ens = match run_trial_ensemble(&system, &drive.u_fine, cfg.k_trials, seed) {
        Ok(e) => e,
        Err(Error::DivergedTrajectory(_)) => return Ok(DuffingCell::diverged(beta, temperature)),
        Err(e) => return Err(e),
    };
    if ens.n() < cfg.n_coarse {
        return Err(Error::InsufficientData(format!(
            "cell produced {} coarse samples, wanted {}",
            ens.n(),
            cfg.n_coarse
        )));
    }
    let trials: Vec<ReadoutSeries> = ens
        .trials
        .iter()
        .map(|t| t.window(0, cfg.n_coarse))
        .collect::<Result<_>>()?;
    let ens = TrialEnsemble::new(ens.input, trials)?;
    let doob = doob_split(&ens)?;
    let u_task: Vec<f64> =
        drive.u_coarse[drive.coarse_shift..drive.coarse_shift + cfg.n_coarse].to_vec();
    let report = estimate_capacities(&u_task, &doob, 0, &cfg.estimator)?;
    let c_i_noise: f64 = report
        .per_sector
        .iter()
        .filter(|s| s.sector == Sector::Innovation)
        .map(|s| s.total)
        .sum();
    let c_i_mixed: f64 = report
        .per_sector
        .iter()
        .filter(|s| s.sector == Sector::Mixed)
        .map(|s| s.total)
        .sum();
    Ok(DuffingCell {
        beta,
        temperature,
        c_ip_total: report.c_ip,
        c_i_total: report.c_i,
        c_ip_linear: report.degree_total(Sector::Predictable, 1),
        c_ip_cubic: report.degree_total(Sector::Predictable, 3),
        c_i_noise,
        c_i_mixed,
        rank: report.rank_sigma as f64,
        diverged: false,
    })
}

pub fn run_duffing_grid(cfg: &DuffingGridConfig, seed: u64) -> Result<Vec<DuffingCell>> {
    cfg.duffing.validate()?;
    let drive = duffing_drive(&cfg.duffing, cfg.n_coarse, cfg.decimate, cfg.sigma_u, seed)?;
    let cells: Vec<(f64, f64)> = cfg
        .betas
        .iter()
        .flat_map(|&b| cfg.temperatures.iter().map(move |&t| (b, t)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(beta, temperature))| {
            duffing_cell(cfg, beta, temperature, &drive, cell_seed(seed, idx))
        })
        .collect()
}

/// Covariance-fit experiment: either a planted synthetic recovery or a
/// simulated Duffing grid fitted with the additive-plus-isotropic closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovfitConfig {
    pub duffing: DuffingConfig,
    pub betas: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub n_coarse: usize,
    pub k_trials: usize,
    pub decimate: usize,
    pub sigma_u: f64,
    pub max_poly_degree: usize,
    pub rel_tol: f64,
    /// Planted synthetic mode: skip simulation and verify recovery of these
    /// inflation coefficients.
    pub synthetic: Option<Vec<f64>>,
}

impl Default for CovfitConfig {
    fn default() -> Self {
        let grid = DuffingGridConfig::default();
        Self {
            duffing: grid.duffing,
            betas: vec![0.0, 0.5],
            temperatures: vec![0.02, 0.05, 0.15, 0.3, 0.6, 1.0],
            n_coarse: 8_000,
            k_trials: 48,
            decimate: 160,
            sigma_u: 1.0,
            max_poly_degree: 3,
            rel_tol: DEFAULT_REL_TOL,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovfitCurveRow {
    pub beta: f64,
    pub temperature: f64,
    pub c_ip_sim: f64,
    pub c_ip_model: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovfitBetaFit {
    pub beta: f64,
    pub a: Vec<f64>,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovfitResult {
    pub curves: Vec<CovfitCurveRow>,
    pub fits: Vec<CovfitBetaFit>,
    pub max_capacity_dev: f64,
    /// Present in planted mode: worst coefficient recovery error.
    pub synthetic_recovery_error: Option<f64>,
}

fn planted_covfit(cfg: &CovfitConfig, a_true: &[f64], seed: u64) -> Result<CovfitResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2;
    let g1 = nalgebra::DMatrix::from_fn(d, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let s = SymmetricMatrix::new(&g1 * g1.transpose())?;
    let g2 = nalgebra::DMatrix::from_fn(d, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let n1 = SymmetricMatrix::new(&g2 * g2.transpose() + nalgebra::DMatrix::identity(d, d))?;
    let nbar = 0.5 * n1.trace();

    let mut samples = Vec::new();
    // Two extra tiny temperatures anchor the linear extrapolation.
    let mut temps = vec![1e-7, 2e-7];
    temps.extend(cfg.temperatures.iter().cloned().filter(|&t| t > 2e-7));
    for &beta in &cfg.betas {
        for &t in &temps {
            let g: f64 = a_true
                .iter()
                .enumerate()
                .map(|(i, &a)| a * t.powi(i as i32 + 1))
                .sum();
            let infl = SymmetricMatrix::identity(d).scale(beta.abs().powi(3) * g * nbar);
            let n_tot = n1.scale(t).add(&infl)?;
            samples.push(CovfitSample {
                beta,
                temperature: t,
                split: CovarianceSplit::new(s.clone(), n_tot, cfg.rel_tol)?,
            });
        }
    }
    let model = duffing_covfit(&samples, cfg.max_poly_degree)?;
    let mut recovery: f64 = 0.0;
    let mut fits = Vec::new();
    for fit in &model.fits {
        for (k, &a) in fit.a.iter().enumerate() {
            let truth = a_true.get(k).cloned().unwrap_or(0.0);
            // The inflation term vanishes identically at beta = 0, so the
            // coefficients are unidentifiable there; skip recovery scoring.
            if fit.beta.abs() > 1e-12 {
                recovery = recovery.max((a - truth).abs());
            }
        }
        fits.push(CovfitBetaFit {
            beta: fit.beta,
            a: fit.a.clone(),
            r_squared: fit.r_squared,
        });
    }
    let mut curves = Vec::new();
    let mut max_dev: f64 = 0.0;
    for sample in &samples {
        let (c_ip_sim, _) = capacity_traces(&sample.split)?;
        let c_ip_model = model
            .predicted_c_ip(sample.beta, sample.temperature)
            .ok_or_else(|| Error::InvalidInput("missing fit for beta".into()))?;
        max_dev = max_dev.max((c_ip_sim - c_ip_model).abs());
        curves.push(CovfitCurveRow {
            beta: sample.beta,
            temperature: sample.temperature,
            c_ip_sim,
            c_ip_model,
        });
    }
    Ok(CovfitResult {
        curves,
        fits,
        max_capacity_dev: max_dev,
        synthetic_recovery_error: Some(recovery),
    })
}

pub fn run_covfit(cfg: &CovfitConfig, seed: u64) -> Result<CovfitResult> {
    if let Some(a_true) = &cfg.synthetic {
        return planted_covfit(cfg, a_true, seed);
    }
    cfg.duffing.validate()?;
    let drive = duffing_drive(&cfg.duffing, cfg.n_coarse, cfg.decimate, cfg.sigma_u, seed)?;
    let cells: Vec<(f64, f64)> = cfg
        .betas
        .iter()
        .flat_map(|&b| cfg.temperatures.iter().map(move |&t| (b, t)))
        .collect();
    let samples: Vec<CovfitSample> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(beta, temperature))| -> Result<CovfitSample> {
            let mut d_cfg = cfg.duffing.clone();
            d_cfg.beta = beta;
            d_cfg.temperature = temperature;
            let system = ReservoirSystem::Duffing {
                cfg: d_cfg,
                decimate: cfg.decimate,
            };
            let ens =
                run_trial_ensemble(&system, &drive.u_fine, cfg.k_trials, cell_seed(seed, idx))?;
            let trials: Vec<ReadoutSeries> = ens
                .trials
                .iter()
                .map(|t| t.window(0, cfg.n_coarse.min(ens.n())))
                .collect::<Result<_>>()?;
            let ens = TrialEnsemble::new(ens.input, trials)?;
            let doob = doob_split(&ens)?;
            Ok(CovfitSample {
                beta,
                temperature,
                split: empirical_split(&doob, cfg.rel_tol)?,
            })
        })
        .collect::<Result<_>>()?;

    let model = duffing_covfit(&samples, cfg.max_poly_degree)?;
    let fits = model
        .fits
        .iter()
        .map(|f| CovfitBetaFit {
            beta: f.beta,
            a: f.a.clone(),
            r_squared: f.r_squared,
        })
        .collect();
    let mut curves = Vec::new();
    let mut max_dev: f64 = 0.0;
    for sample in &samples {
        let (c_ip_sim, _) = capacity_traces(&sample.split)?;
        let c_ip_model = model
            .predicted_c_ip(sample.beta, sample.temperature)
            .ok_or_else(|| Error::InvalidInput("missing fit for beta".into()))?;
        max_dev = max_dev.max((c_ip_sim - c_ip_model).abs());
        curves.push(CovfitCurveRow {
            beta: sample.beta,
            temperature: sample.temperature,
            c_ip_sim,
            c_ip_model,
        });
    }
    Ok(CovfitResult {
        curves,
        fits,
        max_capacity_dev: max_dev,
        synthetic_recovery_error: None,
    })
}

/// Walkthrough of the whitened-geometry chain on the analytic RLC split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryDemoConfig {
    pub rlc: RlcConfig,
    pub input_spectral_density: f64,
    pub taus: Vec<f64>,
    /// Block length for the entropy/covering chain.
    pub b: usize,
    pub rho: f64,
}

impl Default for GeometryDemoConfig {
    fn default() -> Self {
        Self {
            rlc: RlcConfig {
                r: 1.0,
                l_ind: 1.0,
                c_cap: 1.0,
                alpha_s: 1.0,
                alpha_n: 1.0,
                gamma: 1.0,
                temperature: 1.0,
            },
            input_spectral_density: 0.1,
            taus: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            b: 8,
            rho: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TauCurveRow {
    pub tau: f64,
    pub l_tau: usize,
    pub lower: f64,
    pub upper: f64,
    pub floor_lambda_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryDemoResult {
    pub gammas: Vec<f64>,
    pub c_ip: f64,
    pub c_i: f64,
    pub pred_volume: (f64, usize),
    pub innov_volume: (f64, usize),
    pub tau_curve: Vec<TauCurveRow>,
    /// Entropy and covering bounds for the Gaussian surrogate block at the
    /// median tau.
    pub block_dim: usize,
    pub entropy_lb: f64,
    pub covering_lb: f64,
}

pub fn run_geometry_demo(cfg: &GeometryDemoConfig) -> Result<GeometryDemoResult> {
    cfg.rlc.validate()?;
    let ss = rlc_state_space(&cfg.rlc)?;
    let split = steady_state_split(&ss, cfg.input_spectral_density, cfg.rlc.noise_intensity())?;
    let geom = whitened_geometry(&split)?;
    let mut tau_curve = Vec::new();
    for &tau in &cfg.taus {
        let ts = tau_subspace(&geom, tau)?;
        tau_curve.push(TauCurveRow {
            tau,
            l_tau: ts.l_tau,
            lower: ts.bounds.0,
            upper: ts.bounds.1,
            floor_lambda_min: ts.floor_lambda_min,
        });
    }
    let tau_mid = cfg.taus[cfg.taus.len() / 2];
    let ts = tau_subspace(&geom, tau_mid)?;
    let m = (ts.l_tau * cfg.b).max(1);
    // Gaussian surrogate block at the uniform floor tau/2.
    let block_cov = SymmetricMatrix::identity(m).scale(tau_mid / 2.0);
    let l_star = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let eb = isotropic_entropy_bound(&block_cov, l_star)?;
    let covering_lb = covering_bound(eb.bound_general, m, cfg.rho)?;
    Ok(GeometryDemoResult {
        gammas: geom.gammas.clone(),
        c_ip: geom.c_ip,
        c_i: geom.c_i,
        pred_volume: geom.pred_volume,
        innov_volume: geom.innov_volume,
        tau_curve,
        block_dim: m,
        entropy_lb: eb.bound_general,
        covering_lb,
    })
}

/// End-to-end packing construction on a Gaussian surrogate block law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardnessDemoConfig {
    pub m: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub fano_sample_sizes: Vec<u64>,
    pub mc_pairs: usize,
}

impl Default for HardnessDemoConfig {
    fn default() -> Self {
        Self {
            m: 16,
            alpha: 0.5,
            epsilon: 0.1,
            n_samples: 40_000,
            fano_sample_sizes: vec![0, 1, 2, 5, 10, 20, 50, 100, 200],
            mc_pairs: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HardnessDemoResult {
    pub summary: FamilySummary,
    pub mc_tv_max_dev: f64,
    pub mc_tolerance: f64,
    pub sample_complexity_n: u64,
    pub sample_complexity_scaling: f64,
}

pub fn run_hardness_demo(cfg: &HardnessDemoConfig, seed: u64) -> Result<HardnessDemoResult> {
    let cov = SymmetricMatrix::identity(cfg.m);
    let cloud = gaussian_typical_set(&cov, cfg.epsilon, cfg.n_samples, seed)?;
    let partition = equal_mass_partition(&cloud, cfg.m)?;
    let code = vg_code(cfg.m, seed.wrapping_add(1))?;
    let family = build_family(&cloud, partition, code, cfg.alpha)?;
    let summary = family_summary(&family, &cfg.fano_sample_sizes)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut mc_dev: f64 = 0.0;
    let count = family.code.len();
    for _ in 0..cfg.mc_pairs {
        let i = rng.random_range(0..count);
        let mut j = rng.random_range(0..count);
        if i == j {
            j = (j + 1) % count;
        }
        let v = family.code.codewords[i].to_signs();
        let w = family.code.codewords[j].to_signs();
        let exact = pairwise_tv_kl(&family, &v, &w)?.tv;
        let mc = monte_carlo_tv(&family, &v, &w)?;
        mc_dev = mc_dev.max((mc - exact).abs());
    }
    let sc = sample_complexity(&family, 0.05)?;
    Ok(HardnessDemoResult {
        summary,
        mc_tv_max_dev: mc_dev,
        mc_tolerance: 3.0 / (cfg.n_samples as f64).sqrt(),
        sample_complexity_n: sc.n,
        sample_complexity_scaling: sc.scaling,
    })
}

use rand::Rng;

/// Randomized invariant suites across every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Deliberately mis-thresholds the rank decision in the conservation
    /// suite; the run must then fail, demonstrating sensitivity.
    pub negative_control: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            negative_control: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub all_pass: bool,
    pub elapsed_seconds: f64,
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> SymmetricMatrix {
    let g = nalgebra::DMatrix::from_fn(dim, rank, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    SymmetricMatrix::new(&g * g.transpose()).expect("gram matrix")
}

/// Random PSD with unit-scale retained spectrum (random orthonormal range,
/// eigenvalues in [1/2, 2]); keeps trace-through-pseudo-inverse checks away
/// from the eps x cond(Σ) degradation of extreme Wishart draws.
fn random_psd_unit_scale(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> SymmetricMatrix {
    let g = nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let q = g.qr().q();
    let u = q.columns(0, rank).into_owned();
    let d = nalgebra::DMatrix::from_fn(rank, rank, |i, j| {
        if i == j {
            0.5 + 1.5 * rng.random::<f64>()
        } else {
            0.0
        }
    });
    SymmetricMatrix::new(&u * d * u.transpose()).expect("spectral form")
}

type Suite = (
    &'static str,
    Box<dyn Fn() -> std::result::Result<String, String> + Send>,
);

pub fn run_verify(cfg: &VerifyConfig, seed: u64) -> VerifyReport {
    let start = std::time::Instant::now();
    let rank_tol = if cfg.negative_control {
        0.5
    } else {
        DEFAULT_REL_TOL
    };

    let suites: Vec<Suite> = vec![
        (
            "spectral: Moore-Penrose conditions",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
                for i in 0..50 {
                    let dim = rng.random_range(2..8);
                    let rank = rng.random_range(1..=dim);
                    let a = random_psd(&mut rng, dim, rank);
                    let p = pinv(&a, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
                    let (am, pm) = (a.matrix(), p.matrix());
                    let r1 = (am * pm * am - am).norm() / am.norm().max(1.0);
                    let r2 = (pm * am * pm - pm).norm() / pm.norm().max(1.0);
                    let r3 = ((am * pm) - (am * pm).transpose()).norm();
                    let r4 = ((pm * am) - (pm * am).transpose()).norm();
                    if r1 > 1e-8 || r2 > 1e-8 || r3 > 1e-8 || r4 > 1e-8 {
                        return Err(format!("instance {i}: residuals {r1:.2e} {r2:.2e}"));
                    }
                }
                Ok("50 random PSD instances".into())
            }),
        ),
        (
            "geometry: conservation of observable rank",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
                let mut worst: f64 = 0.0;
                let mut count = 0usize;
                while count < 1000 {
                    let dim = rng.random_range(2..=20);
                    let rank_s = rng.random_range(1..=dim);
                    let rank_n = rng.random_range(1..=dim);
                    let s = random_psd_unit_scale(&mut rng, dim, rank_s);
                    let n = random_psd_unit_scale(&mut rng, dim, rank_n);
                    let split =
                        CovarianceSplit::new(s, n, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
                    // Rank decided independently of the pseudo-inverse path.
                    let eig = sym_eig(split.sigma()).map_err(|e| e.to_string())?;
                    let retained = rank_info(&eig, DEFAULT_REL_TOL);
                    let cond = retained.retained_eigenvalues[0]
                        / retained.retained_eigenvalues[retained.rank - 1];
                    if cond > 1e5 {
                        continue;
                    }
                    let rank = rank_info(&eig, rank_tol).rank;
                    let (c_ip, c_i) = capacity_traces(&split).map_err(|e| e.to_string())?;
                    worst = worst.max((c_ip + c_i - rank as f64).abs());
                    count += 1;
                }
                if worst > 1e-8 {
                    return Err(format!("worst |C_ip + C_i - rank| = {worst:.3e}"));
                }
                Ok(format!("1000 splits, worst dev {worst:.2e}"))
            }),
        ),
        (
            "geometry: shrinkage matches traces and is monotone",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
                for _ in 0..100 {
                    let dim = rng.random_range(2..6);
                    let s = random_psd(&mut rng, dim, dim);
                    let n0 = random_psd(&mut rng, dim, dim);
                    let spec = PencilSpectrum::from_pair(&n0, &s, DEFAULT_REL_TOL)
                        .map_err(|e| e.to_string())?;
                    for t in [0.0, 0.1, 1.0, 10.0] {
                        let split = CovarianceSplit::new(s.clone(), n0.scale(t), DEFAULT_REL_TOL)
                            .map_err(|e| e.to_string())?;
                        let (a, b) = capacity_traces(&split).map_err(|e| e.to_string())?;
                        let (c, d) = shrinkage_capacities(&spec, t).map_err(|e| e.to_string())?;
                        if (a - c).abs() > 1e-8 || (b - d).abs() > 1e-8 {
                            return Err(format!("trace/shrinkage gap {:.2e}", (a - c).abs()));
                        }
                    }
                    let mut prev = f64::INFINITY;
                    for i in 0..50 {
                        let t = i as f64 * 0.2;
                        let (c_ip, _) =
                            shrinkage_capacities(&spec, t).map_err(|e| e.to_string())?;
                        if c_ip > prev + 1e-12 {
                            return Err(format!("C_ip increased at T = {t}"));
                        }
                        prev = c_ip;
                    }
                }
                Ok("100 pairs x 4 temperatures + monotone grid".into())
            }),
        ),
        (
            "spectral: Lyapunov residuals",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x04);
                for _ in 0..100 {
                    let dim = rng.random_range(2..6);
                    let g = nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    });
                    let a = &g - nalgebra::DMatrix::identity(dim, dim) * (operator_norm(&g) + 0.5);
                    let q = random_psd(&mut rng, dim, dim);
                    let p = lyapunov_solve(&a, &q).map_err(|e| e.to_string())?;
                    let resid = (&a * p.matrix() + p.matrix() * a.transpose() + q.matrix()).norm();
                    if resid > 1e-9 * q.matrix().norm().max(1.0) {
                        return Err(format!("residual {resid:.3e}"));
                    }
                }
                Ok("100 random stable systems".into())
            }),
        ),
        (
            "spectral: nonnegative least squares KKT",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05);
                for _ in 0..50 {
                    let (m, n) = (rng.random_range(4..10), rng.random_range(2..5));
                    let a = nalgebra::DMatrix::from_fn(m, n, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    });
                    let b = nalgebra::DVector::from_fn(m, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    });
                    let x = nnls(&a, &b).map_err(|e| e.to_string())?;
                    let w = a.transpose() * (&b - &a * &x);
                    for j in 0..n {
                        if x[j] < 0.0 || w[j] > 1e-8 || x[j] * w[j].abs() > 1e-8 {
                            return Err(format!("KKT violated at coordinate {j}"));
                        }
                    }
                }
                Ok("50 random problems".into())
            }),
        ),
        (
            "geometry: tau-subspace bounds and floor",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x06);
                for _ in 0..1000 {
                    let dim = rng.random_range(2..10);
                    let s = random_psd(&mut rng, dim, dim);
                    let n = random_psd(&mut rng, dim, dim);
                    let split =
                        CovarianceSplit::new(s, n, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
                    let geom = whitened_geometry(&split).map_err(|e| e.to_string())?;
                    for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
                        let ts = tau_subspace(&geom, tau).map_err(|e| e.to_string())?;
                        let l = ts.l_tau as f64;
                        if l < ts.bounds.0 - 1e-9 || l > ts.bounds.1 + 1e-9 {
                            return Err(format!(
                                "bounds {:.3} <= {l} <= {:.3} violated",
                                ts.bounds.0, ts.bounds.1
                            ));
                        }
                        if ts.l_tau > 0 && ts.floor_lambda_min < tau - 1e-10 {
                            return Err(format!(
                                "variance floor {:.12} below tau {tau}",
                                ts.floor_lambda_min
                            ));
                        }
                    }
                }
                Ok("1000 random spectra x 5 taus".into())
            }),
        ),
        (
            "geometry: ellipsoid complementarity",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x07);
                for _ in 0..200 {
                    let dim = rng.random_range(2..8);
                    let s = random_psd(&mut rng, dim, dim);
                    let n = random_psd(&mut rng, dim, dim);
                    let split =
                        CovarianceSplit::new(s, n, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
                    let geom = whitened_geometry(&split).map_err(|e| e.to_string())?;
                    let comp = geom.gamma_complement().map_err(|e| e.to_string())?;
                    let mut comp_eigs: Vec<f64> = sym_eig(&comp)
                        .map_err(|e| e.to_string())?
                        .values
                        .iter()
                        .cloned()
                        .collect();
                    comp_eigs.reverse();
                    for (g, c) in geom.gammas.iter().zip(comp_eigs.iter()) {
                        if (g + c - 1.0).abs() > 1e-8 {
                            return Err(format!("gamma pair sums to {}", g + c));
                        }
                    }
                }
                Ok("200 random splits".into())
            }),
        ),
        (
            "geometry: block covariance floor (AR(1))",
            Box::new(move || {
                for rho in [0.05_f64, 0.1, 0.2] {
                    for b in [2usize, 8, 32, 64] {
                        let lags: Vec<nalgebra::DMatrix<f64>> = (0..b)
                            .map(|k| nalgebra::DMatrix::from_element(1, 1, rho.powi(k as i32)))
                            .collect();
                        let chk = block_floor_check(&lags, b, 1.0).map_err(|e| e.to_string())?;
                        if !chk.holds {
                            return Err(format!(
                                "floor fails at rho {rho}, b {b}: {:.6} < {:.6}",
                                chk.lambda_min, chk.floor
                            ));
                        }
                    }
                }
                Ok("rho in {0.05, 0.1, 0.2}, b up to 64".into())
            }),
        ),
        (
            "geometry: mixing covariance bound",
            Box::new(move || {
                let alphas: Vec<f64> = (1..=30).map(|k| 0.25 * 0.5_f64.powi(k)).collect();
                let b = mixing_cov_bound(&alphas, 1.0, 2.0, 1.0).map_err(|e| e.to_string())?;
                for (k, v) in b.per_lag_bounds.iter().enumerate() {
                    let expect = 8.0 * (0.25 * 0.5_f64.powi(k as i32 + 1)).sqrt();
                    if (v - expect).abs() > 1e-12 {
                        return Err(format!("lag {k} bound {v} vs {expect}"));
                    }
                }
                Ok("geometric mixing coefficients".into())
            }),
        ),
        (
            "geometry: Gaussian entropy gap m/2",
            Box::new(move || {
                let l_star = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                for m in 1..=64 {
                    let eb = isotropic_entropy_bound(&SymmetricMatrix::identity(m), l_star)
                        .map_err(|e| e.to_string())?;
                    let h_true =
                        0.5 * m as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
                    if (h_true - eb.bound_general - m as f64 / 2.0).abs() > 1e-8 {
                        return Err(format!("gap off at m = {m}"));
                    }
                }
                Ok("m = 1..64".into())
            }),
        ),
        (
            "geometry: covering bound rho-halving",
            Box::new(move || {
                for m in [1usize, 8, 32, 64] {
                    let a = covering_bound(0.7, m, 0.4).map_err(|e| e.to_string())?;
                    let b = covering_bound(0.7, m, 0.2).map_err(|e| e.to_string())?;
                    if (b - a - m as f64 * std::f64::consts::LN_2).abs() > 1e-9 {
                        return Err(format!("shift wrong at m = {m}"));
                    }
                }
                Ok("m in {1, 8, 32, 64}".into())
            }),
        ),
        (
            "geometry: cascade worked values",
            Box::new(move || {
                let p = CascadeParams::new(0.25, 2, 10, 10, vec![0.0, 1.0], 2, 1.0, 4)
                    .map_err(|e| e.to_string())?;
                let v = cascade_sensitivity(&p);
                if (v - 10.0 * 0.5_f64.powi(10)).abs() > 1e-12 {
                    return Err(format!("sensitivity {v}"));
                }
                let p4 = CascadeParams::new(0.25, 2, 10, 10, vec![0.0, 1.0], 4, 2.0, 4)
                    .map_err(|e| e.to_string())?;
                let floor = cascade_entropy_floor(&p4, 0.1);
                let expect = 2.0 - (0.1 * 3.0_f64.log2() + h2_bits(0.1));
                if (floor - expect).abs() > 1e-12 {
                    return Err(format!("entropy floor {floor} vs {expect}"));
                }
                Ok("sensitivity and entropy floor".into())
            }),
        ),
        (
            "hardness: family invariants (m = 16)",
            Box::new(move || {
                let cov = SymmetricMatrix::identity(16);
                let cloud = gaussian_typical_set(&cov, 0.1, 20_000, seed ^ 0x08)
                    .map_err(|e| e.to_string())?;
                let part = equal_mass_partition(&cloud, 16).map_err(|e| e.to_string())?;
                let code = vg_code(16, seed ^ 0x09).map_err(|e| e.to_string())?;
                let fam = build_family(&cloud, part, code, 0.5).map_err(|e| e.to_string())?;
                let (p, alpha, m) = (fam.p, fam.alpha, fam.m() as f64);
                let min_tv = alpha / m * fam.min_hamming as f64 * p;
                if min_tv < p * alpha / 4.0 - 1e-12 {
                    return Err(format!("TV separation {min_tv} too small"));
                }
                let max_kl =
                    fam.max_hamming as f64 / m * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
                if max_kl > 4.0 * p * alpha * alpha + 1e-12 {
                    return Err(format!("KL {max_kl} above 4 p alpha^2"));
                }
                for v in 0..fam.code.len() {
                    if (fam.total_mass(v) - 1.0).abs() > 1e-12 {
                        return Err("family member not a probability law".into());
                    }
                }
                let b = fano_bound(&fam, 0).map_err(|e| e.to_string())?;
                if b.test_error_lb <= 0.0 {
                    return Err("vacuous Fano bound at n = 0".into());
                }
                Ok(format!(
                    "|V| = {}, min d_H = {}",
                    fam.code.len(),
                    fam.min_hamming
                ))
            }),
        ),
        (
            "capacity: recombination invariance and rank bound",
            Box::new(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a);
                let n = 2000;
                let cols: Vec<Vec<f64>> = (0..2)
                    .map(|_| {
                        (0..n)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                z
                            })
                            .collect()
                    })
                    .collect();
                let data = nalgebra::DMatrix::from_fn(n, 2, |i, j| cols[j][i]);
                let x = ReadoutSeries::new(data, 1.0).map_err(|e| e.to_string())?;
                let g = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
                let xg = ReadoutSeries::new(x.data() * &g, 1.0).map_err(|e| e.to_string())?;
                let z_raw: Vec<f64> = (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                    .collect();
                let z =
                    crate::capacity::TaskSeries::normalized(z_raw, Sector::Predictable, "probe", 1)
                        .map_err(|e| e.to_string())?;
                let c1 = crate::capacity::per_task_capacity(&x, &z, DEFAULT_REL_TOL)
                    .map_err(|e| e.to_string())?;
                let c2 = crate::capacity::per_task_capacity(&xg, &z, DEFAULT_REL_TOL)
                    .map_err(|e| e.to_string())?;
                if (c1 - c2).abs() > 1e-10 {
                    return Err(format!(
                        "recombination changed capacity by {:.2e}",
                        (c1 - c2).abs()
                    ));
                }
                if !(0.0..=1.0 + 1e-8).contains(&c1) {
                    return Err(format!("capacity {c1} outside [0, 1]"));
                }
                Ok("invariance and range checks".into())
            }),
        ),
        (
            "reservoir: Doob residual orthogonal to delayed input",
            Box::new(move || {
                let cfg = RlcConfig {
                    r: 1.0,
                    l_ind: 1.0,
                    c_cap: 1.0,
                    alpha_s: 1.0,
                    alpha_n: 1.0,
                    gamma: 1.0,
                    temperature: 1.0,
                };
                let ss = rlc_state_space(&cfg).map_err(|e| e.to_string())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b);
                let n = 10_000;
                let u: Vec<f64> = (0..n + 21)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                    .collect();
                let sys = ReservoirSystem::Linear {
                    ss,
                    noise_intensity: 1.0,
                    dt: 0.2,
                };
                let (mean, trial) = trial_mean_and_designated(&sys, &u, 64, seed ^ 0x0c, 0)
                    .map_err(|e| e.to_string())?;
                let tol = 4.0 / (n as f64).sqrt();
                for j in 0..=20usize {
                    let mut num = 0.0;
                    let mut du = 0.0;
                    let mut dx = 0.0;
                    for t in 21..n + 21 {
                        let r = trial.data()[(t, 0)] - mean.data()[(t, 0)];
                        num += r * u[t - j];
                        du += u[t - j] * u[t - j];
                        dx += r * r;
                    }
                    let corr = num / (du.sqrt() * dx.sqrt()).max(1e-300);
                    if corr.abs() > tol {
                        return Err(format!("corr(dX, u[t-{j}]) = {corr:.4} > {tol:.4}"));
                    }
                }
                Ok("lags 0..20 within 4/sqrt(n)".into())
            }),
        ),
    ];

    let suites_run: Vec<SuiteResult> = suites
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(detail) => SuiteResult {
                name: name.into(),
                pass: true,
                detail,
            },
            Err(detail) => SuiteResult {
                name: name.into(),
                pass: false,
                detail,
            },
        })
        .collect();
    let all_pass = suites_run.iter().all(|s| s.pass);
    VerifyReport {
        suites: suites_run,
        all_pass,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Top-level configuration: one block per experiment, plus the master seed
/// and output directory. Absent blocks fall back to their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub threads: Option<usize>,
    pub rlc_sweep: Option<RlcSweepConfig>,
    pub duffing_grid: Option<DuffingGridConfig>,
    pub covfit: Option<CovfitConfig>,
    pub geometry_demo: Option<GeometryDemoConfig>,
    pub hardness_demo: Option<HardnessDemoConfig>,
    pub verify: Option<VerifyConfig>,
}

pub mod emit {
    //! CSV/JSON emission with config sidecars. Every written file `X` gets a
    //! companion `X.sidecar.json` holding the resolved config and seed, so
    //! runs are reproducible from their outputs alone.

    use super::*;
    use std::fs;
    use std::path::Path;

    fn write_sidecar<C: Serialize>(
        dir: &Path,
        file: &str,
        config: &C,
        seed: u64,
    ) -> std::io::Result<()> {
        let sidecar = serde_json::json!({
            "config": serde_json::to_value(config).expect("config serializes"),
            "seed": seed,
        });
        fs::write(
            dir.join(format!("{file}.sidecar.json")),
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )
    }

    pub fn rlc_sweep(
        dir: &Path,
        cfg: &RlcSweepConfig,
        seed: u64,
        result: &RlcSweepResult,
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("T,C_ip_sim,C_i_sim,C_ip_analytic,C_i_analytic\n");
        for r in &result.rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.temperature, r.c_ip_sim, r.c_i_sim, r.c_ip_analytic, r.c_i_analytic
            ));
        }
        fs::write(dir.join("rlc_sweep.csv"), csv)?;
        write_sidecar(dir, "rlc_sweep.csv", cfg, seed)?;
        let summary = serde_json::json!({
            "max_dev_c_ip": result.max_dev_ip,
            "max_dev_c_i": result.max_dev_i,
            "rows": result.rows,
        });
        fs::write(
            dir.join("rlc_sweep_summary.json"),
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        )?;
        write_sidecar(dir, "rlc_sweep_summary.json", cfg, seed)
    }

    pub fn duffing_grid(
        dir: &Path,
        cfg: &DuffingGridConfig,
        seed: u64,
        cells: &[DuffingCell],
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = String::from(
            "beta,T,C_ip_total,C_i_total,C_ip_linear,C_ip_cubic,C_i_noise,C_i_mixed,rank\n",
        );
        for c in cells {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.beta,
                c.temperature,
                c.c_ip_total,
                c.c_i_total,
                c.c_ip_linear,
                c.c_ip_cubic,
                c.c_i_noise,
                c.c_i_mixed,
                c.rank
            ));
        }
        fs::write(dir.join("duffing_grid.csv"), csv)?;
        write_sidecar(dir, "duffing_grid.csv", cfg, seed)
    }

    pub fn covfit(
        dir: &Path,
        cfg: &CovfitConfig,
        seed: u64,
        result: &CovfitResult,
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("beta,T,C_ip_sim,C_ip_model\n");
        for r in &result.curves {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.beta, r.temperature, r.c_ip_sim, r.c_ip_model
            ));
        }
        fs::write(dir.join("covfit_curves.csv"), csv)?;
        write_sidecar(dir, "covfit_curves.csv", cfg, seed)?;
        fs::write(
            dir.join("covfit_fits.json"),
            serde_json::to_string_pretty(result).expect("result serializes"),
        )?;
        write_sidecar(dir, "covfit_fits.json", cfg, seed)
    }

    pub fn geometry_demo(
        dir: &Path,
        cfg: &GeometryDemoConfig,
        seed: u64,
        result: &GeometryDemoResult,
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("tau,L_tau,lower,upper,floor_lambda_min\n");
        for r in &result.tau_curve {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.tau, r.l_tau, r.lower, r.upper, r.floor_lambda_min
            ));
        }
        fs::write(dir.join("tau_curve.csv"), csv)?;
        write_sidecar(dir, "tau_curve.csv", cfg, seed)?;
        fs::write(
            dir.join("geometry_demo.json"),
            serde_json::to_string_pretty(result).expect("result serializes"),
        )?;
        write_sidecar(dir, "geometry_demo.json", cfg, seed)
    }

    pub fn hardness_demo(
        dir: &Path,
        cfg: &HardnessDemoConfig,
        seed: u64,
        result: &HardnessDemoResult,
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("hardness_family.json"),
            serde_json::to_string_pretty(result).expect("result serializes"),
        )?;
        write_sidecar(dir, "hardness_family.json", cfg, seed)
    }

    pub fn verify(
        dir: &Path,
        cfg: &VerifyConfig,
        seed: u64,
        report: &VerifyReport,
    ) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("verify_report.json"),
            serde_json::to_string_pretty(report).expect("report serializes"),
        )?;
        write_sidecar(dir, "verify_report.json", cfg, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml_shaped_json() {
        let cfg = ExperimentConfig {
            experiment: Some("rlc-sweep".into()),
            seed: Some(7),
            out_dir: Some("out".into()),
            threads: Some(2),
            rlc_sweep: Some(RlcSweepConfig::default()),
            duffing_grid: Some(DuffingGridConfig::default()),
            covfit: Some(CovfitConfig::default()),
            geometry_demo: Some(GeometryDemoConfig::default()),
            hardness_demo: Some(HardnessDemoConfig::default()),
            verify: Some(VerifyConfig::default()),
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rlc_sweep_zero_noise_single_point() {
        let mut cfg = RlcSweepConfig::default();
        cfg.temperatures = vec![0.0];
        cfg.n = 4000;
        cfg.k_trials = 4;
        cfg.estimator.pred_blocks = vec![PredBlockSpec {
            max_delay: 60,
            max_degree: 1,
            n_tasks: 61,
            band: None,
        }];
        cfg.estimator.innov_n_tasks = 6;
        cfg.estimator.mixed_n_tasks = 4;
        let res = run_rlc_sweep(&cfg, 11).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.rows[0].c_i_analytic.abs() < 1e-12);
        assert!(res.rows[0].c_i_sim < 0.05, "C_i = {}", res.rows[0].c_i_sim);
        // Noiseless rank-1 readout: the predictable sector takes the rank.
        assert!(
            (res.rows[0].c_ip_sim - 1.0).abs() < 0.05,
            "C_ip = {}",
            res.rows[0].c_ip_sim
        );
    }

    #[test]
    fn rlc_sweep_pure_noise_reservoir() {
        let mut cfg = RlcSweepConfig::default();
        cfg.rlc.alpha_s = 0.0;
        cfg.temperatures = vec![1.0];
        cfg.n = 6000;
        cfg.k_trials = 48;
        cfg.estimator.pred_blocks = vec![PredBlockSpec {
            max_delay: 20,
            max_degree: 1,
            n_tasks: 21,
            band: None,
        }];
        cfg.estimator.innov_n_tasks = 6;
        cfg.estimator.mixed_n_tasks = 4;
        let res = run_rlc_sweep(&cfg, 19).unwrap();
        assert!(
            res.rows[0].c_ip_sim < 0.05,
            "C_ip = {}",
            res.rows[0].c_ip_sim
        );
        assert!(
            (res.rows[0].c_i_sim - 1.0).abs() < 0.05,
            "C_i = {}",
            res.rows[0].c_i_sim
        );
    }

    #[test]
    fn conservation_gap_shrinks_with_basis_size() {
        // Truncated predictable coverage under-counts C_ip; growing the
        // delay range must shrink the conservation gap.
        let mut small = RlcSweepConfig::default();
        small.temperatures = vec![0.1];
        small.n = 30_000;
        small.k_trials = 24;
        small.estimator.innov_n_tasks = 8;
        small.estimator.mixed_n_tasks = 4;
        small.estimator.pred_blocks = vec![PredBlockSpec {
            max_delay: 6,
            max_degree: 1,
            n_tasks: 7,
            band: None,
        }];
        let mut large = small.clone();
        large.estimator.pred_blocks = vec![PredBlockSpec {
            max_delay: 40,
            max_degree: 1,
            n_tasks: 41,
            band: None,
        }];
        let res_small = run_rlc_sweep(&small, 29).unwrap();
        let res_large = run_rlc_sweep(&large, 29).unwrap();
        let gap = |r: &RlcSweepResult| (r.rows[0].c_ip_sim + r.rows[0].c_i_sim - 1.0).abs();
        let (g_small, g_large) = (gap(&res_small), gap(&res_large));
        assert!(
            g_large < g_small,
            "gap did not shrink: {g_small} -> {g_large}"
        );
        assert!(res_large.rows[0].c_ip_sim + res_large.rows[0].c_i_sim <= 1.0 + 0.05);
    }

    #[test]
    fn rlc_sweep_deterministic() {
        let mut cfg = RlcSweepConfig::default();
        cfg.temperatures = vec![0.5];
        cfg.n = 3000;
        cfg.k_trials = 4;
        cfg.estimator.pred_blocks = vec![PredBlockSpec {
            max_delay: 15,
            max_degree: 1,
            n_tasks: 16,
            band: None,
        }];
        cfg.estimator.innov_n_tasks = 4;
        cfg.estimator.mixed_n_tasks = 4;
        let a = run_rlc_sweep(&cfg, 5).unwrap();
        let b = run_rlc_sweep(&cfg, 5).unwrap();
        assert_eq!(a.rows[0].c_ip_sim.to_bits(), b.rows[0].c_ip_sim.to_bits());
        assert_eq!(a.rows[0].c_i_sim.to_bits(), b.rows[0].c_i_sim.to_bits());
    }

    #[test]
    fn covfit_synthetic_recovery() {
        let mut cfg = CovfitConfig::default();
        cfg.betas = vec![0.0, 1.2];
        cfg.temperatures = vec![0.25, 0.5, 0.75, 1.0];
        cfg.synthetic = Some(vec![0.0, 0.3]);
        let res = run_covfit(&cfg, 13).unwrap();
        let err = res.synthetic_recovery_error.unwrap();
        assert!(err < 1e-6, "recovery error {err}");
        for f in &res.fits {
            assert!(f.a.iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn geometry_demo_runs() {
        let cfg = GeometryDemoConfig::default();
        let res = run_geometry_demo(&cfg).unwrap();
        assert_eq!(res.gammas.len(), 1); // scalar capacitor-voltage readout
        assert!(res.c_ip > 0.0 && res.c_i > 0.0);
        for row in &res.tau_curve {
            assert!(row.lower - 1e-9 <= row.l_tau as f64);
            assert!((row.l_tau as f64) <= row.upper + 1e-9);
        }
    }

    #[test]
    fn hardness_demo_runs() {
        let mut cfg = HardnessDemoConfig::default();
        cfg.n_samples = 10_000;
        cfg.mc_pairs = 5;
        let res = run_hardness_demo(&cfg, 17).unwrap();
        assert!(res.summary.n_codewords >= 8);
        assert!(res.mc_tv_max_dev <= res.mc_tolerance);
        assert!(res.summary.fano_curve[0].test_error_lb > 0.0);
    }

    #[test]
    fn verify_passes_and_negative_control_fails() {
        let report = run_verify(&VerifyConfig::default(), 23);
        assert!(
            report.all_pass,
            "failing suites: {:?}",
            report
                .suites
                .iter()
                .filter(|s| !s.pass)
                .map(|s| &s.name)
                .collect::<Vec<_>>()
        );
        let bad = run_verify(
            &VerifyConfig {
                negative_control: true,
            },
            23,
        );
        assert!(!bad.all_pass);
    }
}

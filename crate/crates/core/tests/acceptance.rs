//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its runtime (visible under `--nocapture`). Run with the
//! optimized test profile (the workspace default) so the runtime budgets
//! are meaningful; budgets are only enforced in optimized builds.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use icap_core::experiments::{
    run_covfit, run_duffing_grid, run_rlc_sweep, CovfitConfig, DuffingGridConfig, RlcSweepConfig,
};
use icap_core::geometry::block_floor_check;
use icap_core::geometry::{
    capacity_traces, cascade_entropy_floor, cascade_sensitivity, covering_bound, h2_bits,
    isotropic_entropy_bound, shrinkage_capacities, tau_subspace, whitened_geometry, CascadeParams,
    CovarianceSplit, PencilSpectrum,
};
use icap_core::hardness::{
    build_family, equal_mass_partition, fano_bound, gaussian_typical_set, monte_carlo_tv,
    pairwise_tv_kl, sample_complexity, vg_code, PackingFamily,
};
use icap_core::spectral::{rank_info, sym_eig, SymmetricMatrix, DEFAULT_REL_TOL};

fn finish(name: &str, started: Instant, budget_secs: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("acceptance {name}: PASS ({elapsed:.1}s, budget {budget_secs:.0}s)");
    if !cfg!(debug_assertions) {
        assert!(
            elapsed < budget_secs,
            "{name} took {elapsed:.1}s, budget {budget_secs}s"
        );
    }
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> SymmetricMatrix {
    let g = DMatrix::from_fn(dim, rank, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    SymmetricMatrix::new(&g * g.transpose()).unwrap()
}

/// Random PSD matrix with the given rank and retained eigenvalues of unit
/// scale (random orthonormal range, spectrum in [1/2, 2]).
fn random_psd_unit_scale(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> SymmetricMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let q = g.qr().q();
    let u = q.columns(0, rank).into_owned();
    let d = DMatrix::from_fn(rank, rank, |i, j| {
        if i == j {
            0.5 + 1.5 * rng.random::<f64>()
        } else {
            0.0
        }
    });
    SymmetricMatrix::new(&u * d * u.transpose()).unwrap()
}

#[test]
fn criterion_1_conservation_of_observable_rank() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    while count < 1000 {
        let dim = 2 + count % 19; // d in 2..=20
        let rank_s = rng.random_range(1..=dim);
        let rank_n = rng.random_range(1..=dim);
        let s = random_psd_unit_scale(&mut rng, dim, rank_s);
        let n = random_psd_unit_scale(&mut rng, dim, rank_n);
        let split = CovarianceSplit::new(s, n, DEFAULT_REL_TOL).unwrap();
        // Keep the retained spectrum numerically meaningful: a 1e-8 check
        // on a trace through Σ⁺ degrades as eps x cond(Σ).
        let eig = sym_eig(split.sigma()).unwrap();
        let retained = rank_info(&eig, DEFAULT_REL_TOL);
        let cond =
            retained.retained_eigenvalues[0] / retained.retained_eigenvalues[retained.rank - 1];
        if cond > 1e5 {
            continue;
        }
        let (c_ip, c_i) = capacity_traces(&split).unwrap();
        worst = worst.max((c_ip + c_i - retained.rank as f64).abs());
        count += 1;
    }
    assert!(worst <= 1e-8, "worst |C_ip + C_i - rank| = {worst:.3e}");
    finish("criterion 1 (conservation law)", started, 10.0);
}

#[test]
fn criterion_2_shrinkage_law() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..100 {
        let dim = rng.random_range(2..6);
        let s = random_psd(&mut rng, dim, dim);
        let n0 = random_psd(&mut rng, dim, dim);
        let spec = PencilSpectrum::from_pair(&n0, &s, DEFAULT_REL_TOL).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0] {
            let split = CovarianceSplit::new(s.clone(), n0.scale(t), DEFAULT_REL_TOL).unwrap();
            let (tr_ip, tr_i) = capacity_traces(&split).unwrap();
            let (sh_ip, sh_i) = shrinkage_capacities(&spec, t).unwrap();
            assert!(
                (tr_ip - sh_ip).abs() <= 1e-8 && (tr_i - sh_i).abs() <= 1e-8,
                "trace/shrinkage mismatch: {tr_ip} vs {sh_ip}"
            );
        }
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let (c_ip, _) = shrinkage_capacities(&spec, k as f64 * 0.25).unwrap();
            assert!(c_ip <= prev + 1e-12, "C_ip not nonincreasing");
            prev = c_ip;
        }
    }
    finish("criterion 2 (shrinkage law)", started, 10.0);
}

#[test]
fn criterion_3_rlc_figure_reproduction() {
    let started = Instant::now();
    let cfg = RlcSweepConfig::default();
    assert_eq!(cfg.n, 200_000);
    assert_eq!(cfg.k_trials, 200);
    assert_eq!(cfg.temperatures.len(), 8);
    let result = run_rlc_sweep(&cfg, 42).unwrap();
    assert!(
        result.max_dev_ip <= 0.05,
        "C_ip deviation {} > 0.05",
        result.max_dev_ip
    );
    assert!(
        result.max_dev_i <= 0.05,
        "C_i deviation {} > 0.05",
        result.max_dev_i
    );
    finish("criterion 3 (RLC figure reproduction)", started, 300.0);
}

#[test]
fn criterion_4_duffing_qualitative_trends() {
    let started = Instant::now();
    let cfg = DuffingGridConfig::default();
    assert!(cfg.temperatures.len() >= 5);
    let cells = run_duffing_grid(&cfg, 42).unwrap();
    assert!(cells.iter().all(|c| !c.diverged));

    for &beta in &cfg.betas {
        let mut row: Vec<_> = cells.iter().filter(|c| c.beta == beta).collect();
        row.sort_by(|a, b| a.temperature.partial_cmp(&b.temperature).unwrap());
        // C_i nondecreasing in T, allowing one inversion within noise 0.05.
        if beta > 0.0 {
            let mut inversions = 0;
            for w in row.windows(2) {
                if w[1].c_i_total < w[0].c_i_total - 1e-12 {
                    inversions += 1;
                    assert!(
                        w[0].c_i_total - w[1].c_i_total <= 0.05,
                        "C_i inversion beyond noise at beta {beta}"
                    );
                }
            }
            assert!(inversions <= 1, "{inversions} inversions at beta {beta}");
        }
        for cell in &row {
            if cell.temperature == 0.0 {
                assert!(
                    cell.c_i_total <= 0.05,
                    "C_i = {} at T = 0, beta {beta}",
                    cell.c_i_total
                );
            }
            if beta == 0.0 {
                assert!(
                    cell.c_ip_cubic <= 0.05,
                    "cubic sector {} at beta 0, T {}",
                    cell.c_ip_cubic,
                    cell.temperature
                );
            }
            // Conservation with the d = 2 I/Q readout.
            let sum = cell.c_ip_total + cell.c_i_total;
            assert!(
                sum >= cell.rank - 0.2 && sum <= cell.rank + 0.05,
                "conservation {sum:.3} outside [{:.1}, {:.2}] at beta {beta} T {}",
                cell.rank - 0.2,
                cell.rank + 0.05,
                cell.temperature
            );
        }
    }
    finish("criterion 4 (Duffing qualitative trends)", started, 900.0);
}

#[test]
fn criterion_5_covariance_fit() {
    let started = Instant::now();
    // Plant-and-recover on the synthetic closure.
    let mut planted = CovfitConfig::default();
    planted.synthetic = Some(vec![0.0, 0.3]);
    planted.betas = vec![0.0, 1.2];
    planted.temperatures = vec![0.25, 0.5, 0.75, 1.0];
    let res = run_covfit(&planted, 42).unwrap();
    let recovery = res.synthetic_recovery_error.unwrap();
    assert!(recovery <= 1e-6, "planted recovery error {recovery:.3e}");
    for fit in &res.fits {
        assert!(fit.a.iter().all(|&a| a >= 0.0));
    }

    // Simulated grid: nonnegative coefficients, capacity deviation <= 0.1.
    let sim = CovfitConfig::default();
    let res = run_covfit(&sim, 42).unwrap();
    for fit in &res.fits {
        assert!(fit.a.iter().all(|&a| a >= 0.0));
    }
    assert!(
        res.max_capacity_dev <= 0.1,
        "model vs simulation deviation {}",
        res.max_capacity_dev
    );
    finish("criterion 5 (covariance fit)", started, 600.0);
}

#[test]
fn criterion_6_tau_subspace_bounds() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..1000 {
        let dim = rng.random_range(2..10);
        let s = random_psd(&mut rng, dim, dim);
        let n = random_psd(&mut rng, dim, dim);
        let split = CovarianceSplit::new(s, n, DEFAULT_REL_TOL).unwrap();
        let geom = whitened_geometry(&split).unwrap();
        for k in 1..=9 {
            let tau = k as f64 / 10.0;
            let ts = tau_subspace(&geom, tau).unwrap();
            let l = ts.l_tau as f64;
            let lower = (geom.c_i - tau * geom.rank() as f64) / (1.0 - tau);
            assert!(
                l >= lower.max(0.0) - 1e-9 && l <= geom.c_i / tau + 1e-9,
                "bounds violated: {} <= {l} <= {}",
                lower.max(0.0),
                geom.c_i / tau
            );
            if ts.l_tau > 0 {
                assert!(
                    ts.floor_lambda_min >= tau - 1e-10,
                    "variance floor {} below tau {tau}",
                    ts.floor_lambda_min
                );
            }
        }
    }
    finish("criterion 6 (tau-subspace bounds)", started, 10.0);
}

#[test]
fn criterion_7_block_covariance_floor() {
    let started = Instant::now();
    for rho in [0.05_f64, 0.1, 0.2] {
        for b in [2usize, 4, 8, 16, 32, 64] {
            let lags: Vec<DMatrix<f64>> = (0..b)
                .map(|k| DMatrix::from_element(1, 1, rho.powi(k as i32)))
                .collect();
            let chk = block_floor_check(&lags, b, 1.0).unwrap();
            assert!(
                chk.lambda_min >= chk.floor - 1e-10,
                "floor violated at rho {rho}, b {b}: {} < {}",
                chk.lambda_min,
                chk.floor
            );
        }
    }
    finish("criterion 7 (block covariance floor)", started, 30.0);
}

#[test]
fn criterion_8_entropy_and_covering_bounds() {
    let started = Instant::now();
    let l_star = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    for m in 1..=64usize {
        let bound = isotropic_entropy_bound(&SymmetricMatrix::identity(m), l_star).unwrap();
        let h_true = 0.5 * m as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        let gap = h_true - bound.bound_general;
        assert!(
            (gap - m as f64 / 2.0).abs() <= 1e-8,
            "Gaussian gap {gap} at m = {m}"
        );
        for rho in [0.5, 0.25, 0.125] {
            let a = covering_bound(bound.bound_general, m, rho).unwrap();
            let b = covering_bound(bound.bound_general, m, rho / 2.0).unwrap();
            assert!(
                (b - a - m as f64 * std::f64::consts::LN_2).abs() <= 1e-9,
                "rho-halving shift wrong at m = {m}"
            );
        }
    }
    finish("criterion 8 (entropy/covering bounds)", started, 5.0);
}

fn familia(m: usize, alpha: f64, cloud_seed: u64, code_seed: u64) -> PackingFamily {
    let cov = SymmetricMatrix::identity(m);
    let n_samples = (50 * 2 * m).max(20_000);
    let cloud = gaussian_typical_set(&cov, 0.1, n_samples, cloud_seed).unwrap();
    let part = equal_mass_partition(&cloud, m).unwrap();
    let code = vg_code(m, code_seed).unwrap();
    build_family(&cloud, part, code, alpha).unwrap()
}

#[test]
fn criterion_9_hardness_family() {
    let started = Instant::now();

    // Invariants and Monte-Carlo agreement on an m = 16 family.
    let m = 16;
    let n_samples = 40_000;
    let cloud = gaussian_typical_set(&SymmetricMatrix::identity(m), 0.1, n_samples, 7).unwrap();
    let part = equal_mass_partition(&cloud, m).unwrap();
    let code = vg_code(m, 11).unwrap();
    let fam = build_family(&cloud, part, code, 0.5).unwrap();
    let (p, alpha) = (fam.p, fam.alpha);
    let min_tv = alpha / m as f64 * fam.min_hamming as f64 * p;
    assert!(min_tv >= p * alpha / 4.0 - 1e-12, "TV separation {min_tv}");
    let max_kl =
        fam.max_hamming as f64 / m as f64 * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
    assert!(
        max_kl <= 4.0 * p * alpha * alpha + 1e-12,
        "KL bound {max_kl}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tol = 3.0 / (n_samples as f64).sqrt();
    for _ in 0..20 {
        let i = rng.random_range(0..fam.code.len());
        let mut j = rng.random_range(0..fam.code.len());
        if i == j {
            j = (j + 1) % fam.code.len();
        }
        let v = fam.code.codewords[i].to_signs();
        let w = fam.code.codewords[j].to_signs();
        let exact = pairwise_tv_kl(&fam, &v, &w).unwrap();
        let mc = monte_carlo_tv(&fam, &v, &w).unwrap();
        assert!(
            (mc - exact.tv).abs() <= tol,
            "Monte-Carlo TV {mc} vs exact {} (tol {tol})",
            exact.tv
        );
        assert!(exact.kl <= exact.kl_bound + 1e-12);
    }

    // Fano at n = 0 with exactly 16 hypotheses.
    let cloud32 = gaussian_typical_set(&SymmetricMatrix::identity(32), 0.1, 20_000, 7).unwrap();
    let part32 = equal_mass_partition(&cloud32, 32).unwrap();
    let code16 = vg_code(32, 11).unwrap().truncated(16).unwrap();
    let fam16 = build_family(&cloud32, part32, code16, 0.5).unwrap();
    let fano = fano_bound(&fam16, 0).unwrap();
    assert!(
        (fano.test_error_lb - 0.75).abs() < 1e-15,
        "Fano(0) with 16 hypotheses = {}",
        fano.test_error_lb
    );

    // Sample-complexity scaling n ∝ m / alpha^2 within 25%.
    let mut n_of = std::collections::BTreeMap::new();
    for &m in &[16usize, 32, 64] {
        for &alpha in &[0.5_f64, 0.25] {
            let fam = familia(m, alpha, 7, 11);
            let sc = sample_complexity(&fam, 0.1).unwrap();
            n_of.insert((m, (alpha * 100.0) as u32), sc.n as f64);
        }
    }
    for &alpha_key in &[50u32, 25] {
        for &(m_lo, m_hi) in &[(16usize, 32usize), (32, 64)] {
            let ratio = n_of[&(m_hi, alpha_key)] / n_of[&(m_lo, alpha_key)];
            assert!(
                (1.5..=2.5).contains(&ratio),
                "m-doubling ratio {ratio:.3} at alpha 0.{alpha_key} ({m_lo} -> {m_hi})"
            );
        }
    }
    for &m in &[16usize, 32, 64] {
        let ratio = n_of[&(m, 25)] / n_of[&(m, 50)];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "alpha-halving ratio {ratio:.3} at m = {m}"
        );
    }
    finish("criterion 9 (hardness family)", started, 120.0);
}

#[test]
fn criterion_10_cascade_calculators() {
    let started = Instant::now();
    // Independent arithmetic for poly(n) = n, B = 2, theta = 0.25, L = 10.
    let p = CascadeParams::new(0.25, 2, 10, 10, vec![0.0, 1.0], 2, 1.0, 4).unwrap();
    let expect = 10.0 * (2.0_f64 * 0.25).powi(10);
    assert!((cascade_sensitivity(&p) - expect).abs() <= 1e-12);
    assert!((expect - 9.765625e-3).abs() < 1e-12);

    // f_4(0.1) = 0.1 log2(3) + h2(0.1), via the entropy floor at H(pi) = 2.
    let p4 = CascadeParams::new(0.25, 2, 10, 10, vec![0.0, 1.0], 4, 2.0, 4).unwrap();
    let f4 = 2.0 - cascade_entropy_floor(&p4, 0.1);
    let independent = 0.1 * 3.0_f64.log2() + (-0.1 * 0.1_f64.log2() - 0.9 * 0.9_f64.log2());
    assert!(
        (f4 - independent).abs() <= 1e-12,
        "f4 {f4} vs {independent}"
    );
    assert!((independent - h2_bits(0.1) - 0.1 * 3.0_f64.log2()).abs() <= 1e-15);
    finish("criterion 10 (cascade calculators)", started, 1.0);
}

#[test]
fn rank_is_sensitive_to_threshold_choice() {
    // Guard for the verify negative control: an absurd rank threshold must
    // break the conservation comparison.
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let s = random_psd(&mut rng, 8, 8);
    let n = random_psd(&mut rng, 8, 8);
    let split = CovarianceSplit::new(s, n, DEFAULT_REL_TOL).unwrap();
    let (c_ip, c_i) = capacity_traces(&split).unwrap();
    let broken = rank_info(&sym_eig(split.sigma()).unwrap(), 0.5).rank;
    assert!((c_ip + c_i - broken as f64).abs() > 1e-8);
}

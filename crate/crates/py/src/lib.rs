//! Python bindings for the capacity toolkit: covariance-level splits, the
//! shrinkage law, whitened geometry, block floors, entropy/covering bounds,
//! cascade calculators and the typical-set packing family.
//!
//! Matrices cross the boundary as row-major nested lists; all functions
//! raise `ValueError` on contract violations.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use icap_core::geometry;
use icap_core::hardness;
use icap_core::reservoir;
use icap_core::spectral::{self, SymmetricMatrix, DEFAULT_REL_TOL};
use icap_core::Error;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sym(rows: Vec<Vec<f64>>) -> PyResult<SymmetricMatrix> {
    SymmetricMatrix::from_rows(&rows).map_err(err)
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Eigenvalues of a symmetric matrix, descending.
#[pyfunction]
fn sym_eigenvalues(a: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let eig = spectral::sym_eig(&sym(a)?).map_err(err)?;
    Ok(eig.values.iter().cloned().collect())
}

/// `(C_ip, C_i) = (Tr(S Σ⁺), Tr(N Σ⁺))` for the split `Σ = S + N`.
#[pyfunction]
#[pyo3(signature = (s, n, rel_tol = None))]
fn capacity_traces(
    s: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    rel_tol: Option<f64>,
) -> PyResult<(f64, f64)> {
    let split =
        geometry::CovarianceSplit::new(sym(s)?, sym(n)?, rel_tol.unwrap_or(DEFAULT_REL_TOL))
            .map_err(err)?;
    geometry::capacity_traces(&split).map_err(err)
}

/// Finite generalized eigenvalues of the symmetric pencil `(N0, S)`.
#[pyfunction]
#[pyo3(signature = (n0, s, rel_tol = None))]
fn pencil_eigenvalues(
    n0: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    rel_tol: Option<f64>,
) -> PyResult<Vec<f64>> {
    spectral::pencil_eig(&sym(n0)?, &sym(s)?, rel_tol.unwrap_or(DEFAULT_REL_TOL)).map_err(err)
}

/// Shrinkage capacities at temperature `t` from pencil eigenvalues.
#[pyfunction]
fn shrinkage_capacities(lambdas: Vec<f64>, r: usize, r_s: usize, t: f64) -> PyResult<(f64, f64)> {
    let spec = geometry::PencilSpectrum { lambdas, r, r_s };
    geometry::shrinkage_capacities(&spec, t).map_err(err)
}

/// Solves `A P + P Aᵀ + Q = 0` for Hurwitz `A` and PSD `Q`.
#[pyfunction]
fn lyapunov_solve(a: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("drift matrix must be square"));
    }
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let p = spectral::lyapunov_solve(&a, &sym(q)?).map_err(err)?;
    Ok(matrix_rows(p.matrix()))
}

/// Nonnegative least squares `min ‖Ax − b‖` s.t. `x ≥ 0`.
#[pyfunction]
fn nnls(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    let rows = a.len();
    let cols = a.first().map(|r| r.len()).unwrap_or(0);
    if a.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged design matrix"));
    }
    let a = nalgebra::DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
    let b = nalgebra::DVector::from_column_slice(&b);
    let x = spectral::nnls(&a, &b).map_err(err)?;
    Ok(x.iter().cloned().collect())
}

/// Eigenvalues `γ_k ∈ [0,1]` of the whitened predictable-fraction operator.
#[pyfunction]
#[pyo3(signature = (s, n, rel_tol = None))]
fn whitened_gammas(s: Vec<Vec<f64>>, n: Vec<Vec<f64>>, rel_tol: Option<f64>) -> PyResult<Vec<f64>> {
    let split =
        geometry::CovarianceSplit::new(sym(s)?, sym(n)?, rel_tol.unwrap_or(DEFAULT_REL_TOL))
            .map_err(err)?;
    Ok(geometry::whitened_geometry(&split).map_err(err)?.gammas)
}

/// `(L_tau, lower, upper, floor_lambda_min)` of the τ-innovation subspace.
#[pyfunction]
#[pyo3(signature = (s, n, tau, rel_tol = None))]
fn tau_subspace_bounds(
    s: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    tau: f64,
    rel_tol: Option<f64>,
) -> PyResult<(usize, f64, f64, f64)> {
    let split =
        geometry::CovarianceSplit::new(sym(s)?, sym(n)?, rel_tol.unwrap_or(DEFAULT_REL_TOL))
            .map_err(err)?;
    let geom = geometry::whitened_geometry(&split).map_err(err)?;
    let ts = geometry::tau_subspace(&geom, tau).map_err(err)?;
    Ok((ts.l_tau, ts.bounds.0, ts.bounds.1, ts.floor_lambda_min))
}

/// `(epsilon, floor, lambda_min, holds)` of the block-Toeplitz covariance
/// floor for lagged autocovariances.
#[pyfunction]
fn block_floor(
    autocovs: Vec<Vec<Vec<f64>>>,
    b: usize,
    tau: f64,
) -> PyResult<(f64, f64, f64, bool)> {
    let lags: Vec<nalgebra::DMatrix<f64>> = autocovs
        .into_iter()
        .map(|m| {
            let r = m.len();
            let c = m.first().map(|row| row.len()).unwrap_or(0);
            if m.iter().any(|row| row.len() != c) || r != c {
                return Err(PyValueError::new_err("autocovariances must be square"));
            }
            Ok(nalgebra::DMatrix::from_fn(r, c, |i, j| m[i][j]))
        })
        .collect::<PyResult<_>>()?;
    let chk = geometry::block_floor_check(&lags, b, tau).map_err(err)?;
    Ok((chk.epsilon, chk.floor, chk.lambda_min, chk.holds))
}

/// `(bound_general, bound_sigma)` entropy lower bounds in nats.
#[pyfunction]
fn isotropic_entropy_bounds(cov: Vec<Vec<f64>>, l_star: f64) -> PyResult<(f64, f64)> {
    let eb = geometry::isotropic_entropy_bound(&sym(cov)?, l_star).map_err(err)?;
    Ok((eb.bound_general, eb.bound_sigma))
}

/// Covering-number lower bound at resolution `rho` (nats).
#[pyfunction]
fn covering_bound(entropy_lb: f64, m: usize, rho: f64) -> PyResult<f64> {
    geometry::covering_bound(entropy_lb, m, rho).map_err(err)
}

/// `min{1, poly(n) (B θ)^L}` for a layered noisy circuit.
#[pyfunction]
fn cascade_sensitivity(
    theta: f64,
    fan_in: u32,
    depth: u32,
    n_input: u64,
    poly_coeffs: Vec<f64>,
) -> PyResult<f64> {
    let p = geometry::CascadeParams::new(theta, fan_in, depth, n_input, poly_coeffs, 2, 1.0, 1)
        .map_err(err)?;
    Ok(geometry::cascade_sensitivity(&p))
}

/// `H(π) − f_k(min{1, δ})` in bits.
#[pyfunction]
fn cascade_entropy_floor(k_alphabet: u32, h_pi_bits: f64, delta_l: f64) -> PyResult<f64> {
    let p = geometry::CascadeParams::new(0.0, 1, 1, 1, vec![1.0], k_alphabet, h_pi_bits, 1)
        .map_err(err)?;
    Ok(geometry::cascade_entropy_floor(&p, delta_l))
}

/// Analytic RLC sweep rows `(T, C_ip, C_i)` from the white-input model.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn rlc_analytic_sweep(
    r: f64,
    l_ind: f64,
    c_cap: f64,
    alpha_s: f64,
    alpha_n: f64,
    gamma: f64,
    input_spectral_density: f64,
    temperatures: Vec<f64>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let cfg = reservoir::RlcConfig {
        r,
        l_ind,
        c_cap,
        alpha_s,
        alpha_n,
        gamma,
        temperature: 1.0,
    };
    let ss = reservoir::rlc_state_space(&cfg).map_err(err)?;
    let unit = reservoir::steady_state_split(&ss, input_spectral_density, gamma).map_err(err)?;
    let spec =
        geometry::PencilSpectrum::from_pair(unit.innovation(), unit.predictable(), DEFAULT_REL_TOL)
            .map_err(err)?;
    temperatures
        .into_iter()
        .map(|t| {
            geometry::shrinkage_capacities(&spec, t)
                .map(|(c_ip, c_i)| (t, c_ip, c_i))
                .map_err(err)
        })
        .collect()
}

/// Greedy Gilbert-Varshamov sign code as lists of ±1.
#[pyfunction]
fn vg_code_signs(m: usize, seed: u64) -> PyResult<Vec<Vec<i8>>> {
    let code = hardness::vg_code(m, seed).map_err(err)?;
    Ok(code.codewords.iter().map(|w| w.to_signs()).collect())
}

/// Builds the typical-set packing family on a standard Gaussian block law
/// and returns `(p, n_codewords, min_tv, max_kl, fano_curve)` with the
/// curve as `(n, test_error_lb, tv_risk_lb)` triples.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn hardness_family(
    m: usize,
    alpha: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    sample_sizes: Vec<u64>,
) -> PyResult<(f64, usize, f64, f64, Vec<(u64, f64, f64)>)> {
    let cov = SymmetricMatrix::identity(m);
    let cloud = hardness::gaussian_typical_set(&cov, epsilon, n_samples, seed).map_err(err)?;
    let part = hardness::equal_mass_partition(&cloud, m).map_err(err)?;
    let code = hardness::vg_code(m, seed.wrapping_add(1)).map_err(err)?;
    let family = hardness::build_family(&cloud, part, code, alpha).map_err(err)?;
    let summary = hardness::family_summary(&family, &sample_sizes).map_err(err)?;
    Ok((
        summary.p,
        summary.n_codewords,
        summary.min_tv,
        summary.max_kl,
        summary
            .fano_curve
            .iter()
            .map(|p| (p.n, p.test_error_lb, p.tv_risk_lb))
            .collect(),
    ))
}

#[pymodule]
fn icap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sym_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_traces, m)?)?;
    m.add_function(wrap_pyfunction!(pencil_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(shrinkage_capacities, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_solve, m)?)?;
    m.add_function(wrap_pyfunction!(nnls, m)?)?;
    m.add_function(wrap_pyfunction!(whitened_gammas, m)?)?;
    m.add_function(wrap_pyfunction!(tau_subspace_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(block_floor, m)?)?;
    m.add_function(wrap_pyfunction!(isotropic_entropy_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(covering_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cascade_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(cascade_entropy_floor, m)?)?;
    m.add_function(wrap_pyfunction!(rlc_analytic_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(vg_code_signs, m)?)?;
    m.add_function(wrap_pyfunction!(hardness_family, m)?)?;
    Ok(())
}

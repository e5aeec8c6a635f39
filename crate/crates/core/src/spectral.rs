//! Dense symmetric linear-algebra kernels the rest of the crate builds on:
//! eigendecomposition, pseudo-inverse and pseudo-inverse square root,
//! symmetric-pencil generalized eigenvalues, continuous-time Lyapunov solves,
//! pseudo-determinants and nonnegative least squares.
//!
//! All routines target small dense matrices (d up to a few tens). Rank
//! decisions are controlled by a relative eigenvalue cutoff; the default is
//! [`DEFAULT_REL_TOL`] and every rank-sensitive caller can override it.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff used wherever rank matters.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// A real symmetric matrix. Inputs are symmetrized as `(A + Aᵀ)/2` at
/// construction, which guards against accumulation asymmetry from covariance
/// estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    m: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// Builds from row-major nested data; rejects ragged or non-square input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("rows must form a square matrix".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(SymmetricMatrix {
            m: &self.m + &other.m,
        })
    }

    pub fn scale(&self, s: f64) -> SymmetricMatrix {
        SymmetricMatrix { m: &self.m * s }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending and
/// eigenvectors stored as orthonormal columns in matching order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// `‖A − VΛVᵀ‖_F / max(1, ‖A‖_F)`, the reconstruction residual.
    pub fn reconstruction_residual(&self, a: &SymmetricMatrix) -> f64 {
        let rebuilt =
            &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose();
        (a.matrix() - rebuilt).norm() / a.matrix().norm().max(1.0)
    }
}

/// Rank decision derived from an eigenvalue spectrum: the retained
/// eigenvalues are those exceeding `threshold × λ_max`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RankInfo {
    pub rank: usize,
    pub threshold: f64,
    pub retained_eigenvalues: Vec<f64>,
}

pub fn rank_info(eig: &EigenDecomposition, rel_tol: f64) -> RankInfo {
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    let retained: Vec<f64> = eig.values.iter().cloned().filter(|&v| v > cut).collect();
    RankInfo {
        rank: retained.len(),
        threshold: rel_tol,
        retained_eigenvalues: retained,
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let dim = a.dim();
    if dim == 0 {
        return Ok(EigenDecomposition {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let se = a.m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].partial_cmp(&se.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(dim, order.iter().map(|&i| se.eigenvalues[i]));
    let vectors = DMatrix::from_fn(dim, dim, |r, c| se.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Eigendecomposition plus a PSD check: eigenvalues below `−rel_tol × scale`
/// (scale = largest eigenvalue magnitude) mean the input is significantly
/// indefinite.
fn psd_eig(a: &SymmetricMatrix, rel_tol: f64, what: &str) -> Result<EigenDecomposition> {
    let eig = sym_eig(a)?;
    let scale = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if let Some(min) = eig.values.iter().cloned().reduce(f64::min) {
        if min < -rel_tol.max(DEFAULT_REL_TOL) * scale {
            return Err(Error::NotPsd(format!(
                "{what}: eigenvalue {min:.3e} below -{:.1e} x {scale:.3e}",
                rel_tol.max(DEFAULT_REL_TOL)
            )));
        }
    }
    Ok(eig)
}

fn spectral_map(
    a: &SymmetricMatrix,
    rel_tol: f64,
    what: &str,
    f: impl Fn(f64) -> f64,
) -> Result<SymmetricMatrix> {
    let eig = psd_eig(a, rel_tol, what)?;
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    let mapped = DVector::from_iterator(
        a.dim(),
        eig.values.iter().map(|&v| if v > cut { f(v) } else { 0.0 }),
    );
    let m = &eig.vectors * DMatrix::from_diagonal(&mapped) * eig.vectors.transpose();
    SymmetricMatrix::new(m)
}

/// Moore-Penrose inverse of a PSD matrix; eigenvalues below
/// `rel_tol × λ_max` are treated as zero.
pub fn pinv(a: &SymmetricMatrix, rel_tol: f64) -> Result<SymmetricMatrix> {
    spectral_map(a, rel_tol, "pinv", |v| 1.0 / v)
}

/// Pseudo-inverse square root `A^{+/2}`: whitening `A^{+/2} A A^{+/2}` gives
/// the orthogonal projector onto range(A).
pub fn pinv_sqrt(a: &SymmetricMatrix, rel_tol: f64) -> Result<SymmetricMatrix> {
    spectral_map(a, rel_tol, "pinv_sqrt", |v| 1.0 / v.sqrt())
}

/// PSD square root `A^{1/2}`.
pub fn psd_sqrt(a: &SymmetricMatrix, rel_tol: f64) -> Result<SymmetricMatrix> {
    spectral_map(a, rel_tol, "psd_sqrt", f64::sqrt)
}

/// Projects a nearly-PSD matrix onto the PSD cone by clamping negative
/// eigenvalues to zero.
pub fn psd_clamp(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(a)?;
    let clamped = DVector::from_iterator(a.dim(), eig.values.iter().map(|&v| v.max(0.0)));
    SymmetricMatrix::new(&eig.vectors * DMatrix::from_diagonal(&clamped) * eig.vectors.transpose())
}

/// Finite generalized eigenvalues of the symmetric pencil `(N0, S)`,
/// i.e. the eigenvalues of `S^{+/2} N0 S^{+/2}` restricted to range(S),
/// descending. Exactly `rank(S)` values are returned; tiny negatives are
/// clamped to zero.
pub fn pencil_eig(n0: &SymmetricMatrix, s: &SymmetricMatrix, rel_tol: f64) -> Result<Vec<f64>> {
    if n0.dim() != s.dim() {
        return Err(Error::InvalidInput(format!(
            "pencil dimension mismatch: {} vs {}",
            n0.dim(),
            s.dim()
        )));
    }
    psd_eig(n0, rel_tol, "pencil_eig N0")?;
    let eig_s = psd_eig(s, rel_tol, "pencil_eig S")?;
    let lambda_max = eig_s.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    let r_s = eig_s.values.iter().filter(|&&v| v > cut).count();
    if r_s == 0 {
        return Ok(Vec::new());
    }
    // Whitening restricted to range(S): columns V_r scaled by 1/sqrt(λ).
    let w_r = DMatrix::from_fn(s.dim(), r_s, |i, j| {
        eig_s.vectors[(i, j)] / eig_s.values[j].sqrt()
    });
    let m_r = w_r.transpose() * n0.matrix() * &w_r;
    let m_r = SymmetricMatrix::new(m_r)?;
    let eig_m = sym_eig(&m_r)?;
    Ok(eig_m.values.iter().map(|&v| v.max(0.0)).collect())
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Largest real part among the eigenvalues of a general square matrix.
pub fn max_eigenvalue_real_part(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let eigs: DVector<Complex<f64>> = a.clone().complex_eigenvalues();
    Ok(eigs.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Solves the continuous-time Lyapunov equation `AP + PAᵀ + Q = 0` for a
/// Hurwitz drift `A` and PSD `Q`, by Kronecker vectorization. Suited to the
/// small state dimensions used here (d ≤ ~50).
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("drift matrix must be square".into()));
    }
    if q.dim() != n {
        return Err(Error::InvalidInput(format!(
            "Q dimension {} does not match A dimension {n}",
            q.dim()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "drift matrix has non-finite entries".into(),
        ));
    }
    let max_re = max_eigenvalue_real_part(a)?;
    if max_re >= 0.0 {
        return Err(Error::UnstableSystem(format!(
            "max eigenvalue real part {max_re:.6e} >= 0"
        )));
    }
    psd_eig(q, DEFAULT_REL_TOL, "lyapunov Q")?;

    let eye = DMatrix::<f64>::identity(n, n);
    let big = kron(&eye, a) + kron(a, &eye);
    let rhs = DVector::from_column_slice((-q.matrix()).as_slice());
    let sol = big.lu().solve(&rhs).ok_or_else(|| {
        Error::NoConvergence("singular Kronecker system in Lyapunov solve".into())
    })?;
    SymmetricMatrix::new(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Pseudo-determinant: product of eigenvalues above `rel_tol × λ_max`.
/// The zero matrix yields 1 (empty product).
pub fn pseudo_det(a: &SymmetricMatrix, rel_tol: f64) -> Result<f64> {
    let eig = psd_eig(a, rel_tol, "pseudo_det")?;
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    Ok(eig.values.iter().filter(|&&v| v > cut).product::<f64>())
}

/// Log pseudo-determinant, summing logs to avoid overflow in high dimension.
pub fn log_pseudo_det(a: &SymmetricMatrix, rel_tol: f64) -> Result<f64> {
    let eig = psd_eig(a, rel_tol, "log_pseudo_det")?;
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * lambda_max;
    Ok(eig
        .values
        .iter()
        .filter(|&&v| v > cut)
        .map(|v| v.ln())
        .sum())
}

/// Operator (spectral) norm of a general rectangular matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Nonnegative least squares, Lawson-Hanson active set:
/// returns `x ≥ 0` minimizing `‖Ax − b‖₂` with KKT residual ≤ 1e-8.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidInput(format!(
            "rhs length {} does not match {} rows",
            b.len(),
            m
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite entries in nnls input".into(),
        ));
    }
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let grad_scale = (a.transpose() * b).amax().max(1.0);
    let tol = 1e-12 * grad_scale;

    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(m, cols.len(), |i, j| a[(i, cols[j])]);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| Error::NoConvergence(format!("nnls least-squares subproblem: {e}")))?;
        let mut z = DVector::zeros(n);
        for (j, &c) in cols.iter().enumerate() {
            z[c] = sol[j];
        }
        Ok(z)
    };

    let max_outer = 10 * n.max(3);
    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let j_star = match candidate {
            Some(j) if w[j] > tol => j,
            _ => return Ok(x),
        };
        passive[j_star] = true;

        let mut guard = 0;
        loop {
            guard += 1;
            if guard > 10 * n.max(3) {
                return Err(Error::NoConvergence("nnls inner loop cap".into()));
            }
            let z = solve_passive(&passive)?;
            let feasible = (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0);
            if feasible {
                x = z;
                break;
            }
            // Step back along x -> z to the first coordinate hitting zero.
            let mut alpha = f64::INFINITY;
            for j in (0..n).filter(|&j| passive[j]) {
                if z[j] <= 0.0 {
                    let t = x[j] / (x[j] - z[j]);
                    alpha = alpha.min(t);
                }
            }
            if !alpha.is_finite() {
                return Err(Error::NoConvergence("nnls step length not finite".into()));
            }
            x = &x + (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= 1e-14 * grad_scale.max(1.0) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if passive[j_star] && x[j_star] == 0.0 {
                // Entering variable got pruned; restart the outer scan.
                break;
            }
        }
    }
    Err(Error::NoConvergence("nnls outer loop cap".into()))
}

//! Empirical capacity estimation over orthonormal task families.
//!
//! The per-task capacity of a readout `X ∈ R^{n×d}` for a centered task `z`
//! is the regression score
//!
//! ```text
//!   C(X, z) = zᵀ X (XᵀX)⁺ Xᵀ z / zᵀz ∈ [0, 1],
//! ```
//!
//! and summing it over an orthonormal family spanning a task sector gives
//! that sector's capacity. Three sectors are built here: a predictable
//! family of Hermite polynomials in delayed inputs (Hermite because the
//! experiment inputs are Gaussian), an innovation family built the same way
//! from the Doob residual stream `ΔX = X − ⟨X⟩`, and a mixed family of
//! products of one predictable and one innovation task. Later families are
//! projected against the earlier ones, so the combined system stays
//! orthonormal and sector sums are additive.
//!
//! Trial averaging supplies the conditional mean: `⟨X_t⟩` across re-runs of
//! the same input waveform estimates `E[X_t | input history]`, and the
//! residuals define the innovation stream.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CovarianceSplit;
use crate::reservoir::{ReadoutSeries, TrialEnsemble};
use crate::spectral::{pinv, psd_clamp, rank_info, sym_eig, SymmetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Sector {
    Predictable,
    Innovation,
    Mixed,
}

impl Sector {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sector::Predictable => "predictable",
            Sector::Innovation => "innovation",
            Sector::Mixed => "mixed",
        }
    }
}

/// A centered, unit-variance scalar task series (inner product `(1/n)Σa b`).
#[derive(Debug, Clone)]
pub struct TaskSeries {
    pub values: Vec<f64>,
    pub sector: Sector,
    pub description: String,
    /// Total polynomial degree of the construction, for sub-sector splits.
    pub degree: usize,
}

impl TaskSeries {
    /// Centers and normalizes to unit variance; a (numerically) constant
    /// series is not a valid task.
    pub fn normalized(
        mut values: Vec<f64>,
        sector: Sector,
        description: impl Into<String>,
        degree: usize,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidTask("empty task series".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        for v in values.iter_mut() {
            *v -= mean;
        }
        let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if rms < 1e-300 {
            return Err(Error::InvalidTask("task has zero variance".into()));
        }
        for v in values.iter_mut() {
            *v /= rms;
        }
        Ok(Self {
            values,
            sector,
            description: description.into(),
            degree,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Mutually orthonormal tasks in the empirical inner product.
#[derive(Debug, Clone, Default)]
pub struct TaskBlock {
    pub tasks: Vec<TaskSeries>,
    /// Candidates rejected by the post-projection drop rule.
    pub dropped: usize,
}

impl TaskBlock {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Empirical Gram matrix, identity for a valid block.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.tasks.len();
        let n = self.tasks.first().map(|t| t.n()).unwrap_or(0) as f64;
        DMatrix::from_fn(m, m, |i, j| {
            dot(&self.tasks[i].values, &self.tasks[j].values) / n
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trial average and per-trial residuals of an ensemble.
#[derive(Debug, Clone)]
pub struct DoobSplit {
    pub mean: ReadoutSeries,
    pub residuals: Vec<ReadoutSeries>,
    pub k: usize,
}

impl DoobSplit {
    /// Builds a split that carries only one designated trial's residual,
    /// for streaming runs where the full ensemble never materializes.
    /// `k` records how many trials the mean averaged over.
    pub fn from_designated(mean: ReadoutSeries, residual: ReadoutSeries, k: usize) -> Result<Self> {
        if mean.n() != residual.n() || mean.d() != residual.d() {
            return Err(Error::InvalidInput(
                "mean and residual shapes differ".into(),
            ));
        }
        if k < 2 {
            return Err(Error::InvalidInput("Doob split needs K >= 2 trials".into()));
        }
        Ok(Self {
            mean,
            residuals: vec![residual],
            k,
        })
    }
}

/// Splits an ensemble into its trial mean (the conditional-mean estimate)
/// and per-trial residuals. Residuals average to zero across trials at
/// every `(t, coordinate)` by construction.
pub fn doob_split(ens: &TrialEnsemble) -> Result<DoobSplit> {
    if ens.k() < 2 {
        return Err(Error::InvalidInput("Doob split needs K >= 2 trials".into()));
    }
    let (n, d) = (ens.n(), ens.d());
    let mut mean = DMatrix::zeros(n, d);
    for t in &ens.trials {
        mean += t.data();
    }
    mean /= ens.k() as f64;
    let residuals: Vec<ReadoutSeries> = ens
        .trials
        .iter()
        .map(|t| ReadoutSeries::new(t.data() - &mean, t.dt_sample))
        .collect::<Result<_>>()?;
    Ok(DoobSplit {
        mean: ReadoutSeries::new(mean, ens.trials[0].dt_sample)?,
        residuals,
        k: ens.k(),
    })
}

/// Empirical covariance split by the law of total covariance:
/// `N` from the within-trial residual second moment and `S` from the
/// covariance of the trial mean. The trial mean carries `N/K` of residual
/// noise and the residual moment carries a `(K−1)/K` factor; both are
/// removed before assembling the split.
pub fn empirical_split(split: &DoobSplit, rel_tol: f64) -> Result<CovarianceSplit> {
    let (n, d, k) = (split.mean.n(), split.mean.d(), split.k);
    if n == 0 {
        return Err(Error::InsufficientData("empty Doob split".into()));
    }
    let mut n_raw = DMatrix::zeros(d, d);
    for r in &split.residuals {
        let data = r.data();
        n_raw += data.transpose() * data;
    }
    n_raw /= (n * k) as f64;
    let n_hat = n_raw * k as f64 / (k as f64 - 1.0);

    let mean_c = split.mean.centered();
    let s_raw = mean_c.data().transpose() * mean_c.data() / n as f64;
    let s_hat = psd_clamp(&SymmetricMatrix::new(s_raw - &n_hat / k as f64)?)?;
    CovarianceSplit::new(s_hat, SymmetricMatrix::new(n_hat)?, rel_tol)
}

/// Truncation parameters of a polynomial task family.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct BasisParams {
    pub max_delay: usize,
    pub max_degree: usize,
    pub n_tasks: usize,
    /// Relative post-projection norm below which a candidate is dropped.
    pub drop_tol: f64,
    /// Time alignment: tasks are evaluated for `t = offset .. n`, so every
    /// delayed value up to `offset` exists. Must be at least `max_delay`.
    pub offset: usize,
    /// Interaction range: multi-factor candidates keep only delays within
    /// this many steps of each other. `None` enumerates all combinations.
    #[serde(default)]
    pub band: Option<usize>,
}

impl BasisParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_degree == 0 {
            return Err(Error::InvalidInput("max_degree must be at least 1".into()));
        }
        if self.n_tasks == 0 {
            return Err(Error::InvalidInput("n_tasks must be at least 1".into()));
        }
        if self.offset < self.max_delay {
            return Err(Error::InvalidInput(format!(
                "offset {} smaller than max_delay {}",
                self.offset, self.max_delay
            )));
        }
        if !(self.drop_tol > 0.0 && self.drop_tol < 1.0) {
            return Err(Error::InvalidInput("drop_tol must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Normalized probabilists' Hermite value `He_k(x)/√(k!)`.
fn hermite_normalized(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0; // he_0
            let mut cur = x; // he_1
            for j in 1..k {
                let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

fn variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn standardize(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-300 {
        return Err(Error::InvalidTask(
            "constant series cannot seed tasks".into(),
        ));
    }
    let sd = var.sqrt();
    Ok(series.iter().map(|v| (v - mean) / sd).collect())
}

/// Multisets of variable indices (non-decreasing) of a given size,
/// lexicographic order.
fn multisets(n_vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; degree];
    loop {
        out.push(cur.clone());
        // Advance the rightmost position that can grow.
        let mut i = degree;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < n_vars {
                cur[i] += 1;
                let v = cur[i];
                for slot in cur.iter_mut().skip(i + 1) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

fn count_candidates(n_vars: usize, max_degree: usize) -> usize {
    // Multisets of sizes 1..=max_degree: sum of C(n_vars + deg - 1, deg).
    let mut total = 0usize;
    for deg in 1..=max_degree {
        let mut c = 1usize;
        for i in 0..deg {
            c = c.saturating_mul(n_vars + i) / (i + 1);
        }
        total = total.saturating_add(c);
    }
    total
}

/// Incremental modified Gram-Schmidt with re-orthogonalization against
/// prior blocks and previously accepted tasks.
struct Orthonormalizer<'a> {
    n: usize,
    prior: Vec<&'a TaskSeries>,
    accepted: Vec<TaskSeries>,
    drop_tol: f64,
    dropped: usize,
}

impl<'a> Orthonormalizer<'a> {
    fn new(n: usize, prior_blocks: &[&'a TaskBlock], drop_tol: f64) -> Self {
        let prior: Vec<&TaskSeries> = prior_blocks.iter().flat_map(|b| b.tasks.iter()).collect();
        Self {
            n,
            prior,
            accepted: Vec::new(),
            drop_tol,
            dropped: 0,
        }
    }

    fn try_add(
        &mut self,
        raw: Vec<f64>,
        sector: Sector,
        description: String,
        degree: usize,
    ) -> Result<bool> {
        let nf = self.n as f64;
        let mut v = raw;
        let mean = v.iter().sum::<f64>() / nf;
        for x in v.iter_mut() {
            *x -= mean;
        }
        let norm0 = (v.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
        if norm0 < 1e-300 {
            self.dropped += 1;
            return Ok(false);
        }
        for x in v.iter_mut() {
            *x /= norm0;
        }
        // Two MGS passes keep the combined Gram at identity to roundoff.
        for _ in 0..2 {
            for t in self
                .prior
                .iter()
                .map(|t| &t.values)
                .chain(self.accepted.iter().map(|t| &t.values))
            {
                let coef = dot(&v, t) / nf;
                for (x, y) in v.iter_mut().zip(t) {
                    *x -= coef * y;
                }
            }
        }
        let norm1 = (v.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
        if norm1 < self.drop_tol {
            self.dropped += 1;
            return Ok(false);
        }
        for x in v.iter_mut() {
            *x /= norm1;
        }
        self.accepted.push(TaskSeries {
            values: v,
            sector,
            description,
            degree,
        });
        Ok(true)
    }

    fn finish(self) -> TaskBlock {
        TaskBlock {
            tasks: self.accepted,
            dropped: self.dropped,
        }
    }
}

struct VarSource<'a> {
    /// Standardized base series, one per variable coordinate.
    series: Vec<Vec<f64>>,
    /// (delay, label) per variable.
    vars: Vec<(usize, String)>,
    /// Which series a variable reads.
    var_series: Vec<usize>,
    offset: usize,
    n_eff: usize,
    label: &'a str,
}

impl<'a> VarSource<'a> {
    fn candidate(&self, multiset: &[usize]) -> (Vec<f64>, String, usize) {
        // Group repeated variables into Hermite orders.
        let mut orders: Vec<(usize, usize)> = Vec::new(); // (var, multiplicity)
        for &v in multiset {
            match orders.last_mut() {
                Some((var, m)) if *var == v => *m += 1,
                _ => orders.push((v, 1)),
            }
        }
        let mut values = vec![1.0_f64; self.n_eff];
        let mut desc_parts: Vec<String> = Vec::new();
        for &(var, mult) in &orders {
            let (delay, ref label) = self.vars[var];
            let s = &self.series[self.var_series[var]];
            for (i, slot) in values.iter_mut().enumerate() {
                let t = self.offset + i;
                *slot *= hermite_normalized(mult, s[t - delay]);
            }
            if mult == 1 {
                desc_parts.push(format!("{label}[t-{delay}]"));
            } else {
                desc_parts.push(format!("He{mult}({label}[t-{delay}])"));
            }
        }
        let degree = multiset.len();
        let desc = format!("{} deg{} {}", self.label, degree, desc_parts.join("*"));
        (values, desc, degree)
    }
}

fn build_polynomial_block(
    source: &VarSource,
    params: &BasisParams,
    sector: Sector,
    prior: &[&TaskBlock],
) -> Result<TaskBlock> {
    params.validate()?;
    let n_vars = source.vars.len();
    let available = count_candidates(n_vars, params.max_degree);
    if available < params.n_tasks {
        return Err(Error::InvalidInput(format!(
            "only {available} candidate tasks available, requested {}",
            params.n_tasks
        )));
    }
    if source.n_eff < 10 * params.n_tasks {
        return Err(Error::InsufficientData(format!(
            "{} effective samples for {} tasks (need 10x)",
            source.n_eff, params.n_tasks
        )));
    }
    let in_band = |multiset: &[usize]| -> bool {
        match params.band {
            None => true,
            Some(b) => {
                let delays: Vec<usize> = multiset.iter().map(|&v| source.vars[v].0).collect();
                let lo = delays.iter().min().unwrap();
                let hi = delays.iter().max().unwrap();
                hi - lo <= b
            }
        }
    };
    let mut ortho = Orthonormalizer::new(source.n_eff, prior, params.drop_tol);
    'outer: for degree in 1..=params.max_degree {
        for multiset in multisets(n_vars, degree) {
            if ortho.accepted.len() >= params.n_tasks {
                break 'outer;
            }
            if !in_band(&multiset) {
                continue;
            }
            let (values, desc, deg) = source.candidate(&multiset);
            ortho.try_add(values, sector, desc, deg)?;
        }
    }
    Ok(ortho.finish())
}

/// Orthonormal predictable-sector tasks: Hermite polynomials of the
/// standardized delayed input, enumerated in (degree, delay) lexicographic
/// order. `prior` blocks (earlier predictable sub-families) are projected
/// out first.
pub fn build_predictable_basis(
    u: &[f64],
    params: &BasisParams,
    prior: &[&TaskBlock],
) -> Result<TaskBlock> {
    params.validate()?;
    if u.len() <= params.offset {
        return Err(Error::InsufficientData(
            "input shorter than alignment offset".into(),
        ));
    }
    let std_u = standardize(u)?;
    let n_eff = u.len() - params.offset;
    let vars: Vec<(usize, String)> = (0..=params.max_delay)
        .map(|j| (j, "u".to_string()))
        .collect();
    let var_series = vec![0usize; vars.len()];
    let source = VarSource {
        series: vec![std_u],
        vars,
        var_series,
        offset: params.offset,
        n_eff,
        label: "pred",
    };
    build_polynomial_block(&source, params, Sector::Predictable, prior)
}

/// Orthonormal innovation-sector tasks built from one designated trial's
/// residual stream, projected against the predictable block.
pub fn build_innovation_basis(
    split: &DoobSplit,
    designated: usize,
    params: &BasisParams,
    prior: &[&TaskBlock],
) -> Result<TaskBlock> {
    params.validate()?;
    if designated >= split.residuals.len() {
        return Err(Error::InvalidInput(format!(
            "designated trial {designated} out of range"
        )));
    }
    let dx = &split.residuals[designated];
    let (n, d) = (dx.n(), dx.d());
    if n <= params.offset {
        return Err(Error::InsufficientData(
            "residual stream shorter than alignment offset".into(),
        ));
    }
    // A noise-free ensemble leaves only roundoff in the residual stream;
    // such columns are dead and the innovation sector is empty. Scale is
    // judged against the trial mean so genuine small noise survives.
    let mut series = Vec::with_capacity(d);
    let mut live = Vec::new();
    for c in 0..d {
        let col = dx.column(c);
        let var_dx = variance(&col);
        let var_mean = variance(&split.mean.column(c));
        if var_dx.sqrt() <= 1e-12 * var_mean.sqrt() {
            continue;
        }
        match standardize(&col) {
            Ok(s) => {
                series.push(s);
                live.push(c);
            }
            Err(_) => {}
        }
    }
    if series.is_empty() {
        return Ok(TaskBlock::default());
    }
    let mut vars = Vec::new();
    let mut var_series = Vec::new();
    for delay in 0..=params.max_delay {
        for (si, &c) in live.iter().enumerate() {
            vars.push((delay, format!("dx{}", c + 1)));
            var_series.push(si);
        }
    }
    let source = VarSource {
        series,
        vars,
        var_series,
        offset: params.offset,
        n_eff: n - params.offset,
        label: "innov",
    };
    build_polynomial_block(&source, params, Sector::Innovation, prior)
}

/// Mixed-sector tasks: products of one predictable and one innovation task,
/// projected against every parent block.
pub fn build_mixed_basis(
    preds: &[&TaskBlock],
    innov: &TaskBlock,
    n_tasks: usize,
    drop_tol: f64,
) -> Result<TaskBlock> {
    let pred_tasks: Vec<&TaskSeries> = preds.iter().flat_map(|b| b.tasks.iter()).collect();
    if pred_tasks.is_empty() || innov.is_empty() {
        return Ok(TaskBlock::default());
    }
    let n = pred_tasks[0].n();
    if innov.tasks[0].n() != n {
        return Err(Error::InvalidInput(
            "predictable and innovation blocks are misaligned".into(),
        ));
    }
    let mut prior: Vec<&TaskBlock> = preds.to_vec();
    prior.push(innov);
    let mut ortho = Orthonormalizer::new(n, &prior, drop_tol);
    // Diagonal sweep: products ordered by combined index, then parent index.
    'outer: for total in 0..pred_tasks.len() + innov.len() {
        for i in 0..=total.min(pred_tasks.len() - 1) {
            let j = total - i;
            if j >= innov.len() {
                continue;
            }
            if ortho.accepted.len() >= n_tasks {
                break 'outer;
            }
            let p = pred_tasks[i];
            let q = &innov.tasks[j];
            let values: Vec<f64> = p.values.iter().zip(&q.values).map(|(a, b)| a * b).collect();
            let desc = format!("mixed p{i}*n{j}");
            ortho.try_add(values, Sector::Mixed, desc, p.degree + q.degree)?;
        }
    }
    Ok(ortho.finish())
}

/// `zᵀ X (XᵀX)⁺ Xᵀ z / zᵀz` for one task.
pub fn per_task_capacity(x: &ReadoutSeries, z: &TaskSeries, rel_tol: f64) -> Result<f64> {
    if z.n() != x.n() {
        return Err(Error::InvalidInput(format!(
            "task length {} vs readout length {}",
            z.n(),
            x.n()
        )));
    }
    if x.n() < x.d() {
        return Err(Error::InsufficientData("need n >= d samples".into()));
    }
    if z.values.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidTask("task is identically zero".into()));
    }
    let xc;
    let xm = if x.centered {
        x.data()
    } else {
        xc = x.centered();
        xc.data()
    };
    let n = x.n() as f64;
    let sigma = SymmetricMatrix::new(xm.transpose() * xm / n)?;
    let sig_pinv = pinv(&sigma, rel_tol)?;
    let zv = DVector::from_column_slice(&z.values);
    let v = xm.transpose() * &zv / n;
    let num = (v.transpose() * sig_pinv.matrix() * &v)[(0, 0)];
    let den = zv.norm_squared() / n;
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskCapacity {
    pub description: String,
    pub degree: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorCapacities {
    pub sector: Sector,
    pub total: f64,
    pub tasks: Vec<TaskCapacity>,
    pub dropped_candidates: usize,
}

/// Sector capacities of a readout over jointly orthonormal task blocks.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    pub c_ip: f64,
    pub c_i: f64,
    pub rank_sigma: usize,
    pub per_sector: Vec<SectorCapacities>,
    pub n: usize,
    pub d: usize,
    pub k_trials: Option<usize>,
    pub rel_tol: f64,
    /// `C_ip + C_i − rank`, the truncation diagnostic.
    pub conservation_gap: f64,
}

impl CapacityReport {
    /// Sum over tasks of one sector restricted to a polynomial degree.
    pub fn degree_total(&self, sector: Sector, degree: usize) -> f64 {
        self.per_sector
            .iter()
            .filter(|s| s.sector == sector)
            .flat_map(|s| s.tasks.iter())
            .filter(|t| t.degree == degree)
            .map(|t| t.capacity)
            .sum()
    }

    /// Flat CSV rows `(sector, task_description, capacity)`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sector,task_description,capacity")?;
        for s in &self.per_sector {
            for t in &s.tasks {
                writeln!(w, "{},{},{}", s.sector.as_str(), t.description, t.capacity)?;
            }
        }
        Ok(())
    }
}

/// Evaluates every task of every block against the readout and sums by
/// sector: `C_ip` over predictable tasks, `C_i` over innovation plus mixed.
pub fn sector_capacities(
    x: &ReadoutSeries,
    blocks: &[&TaskBlock],
    k_trials: Option<usize>,
    rel_tol: f64,
) -> Result<CapacityReport> {
    let xc = if x.centered { x.clone() } else { x.centered() };
    let (n, d) = (xc.n(), xc.d());
    if n < d {
        return Err(Error::InsufficientData("need n >= d samples".into()));
    }
    for b in blocks {
        if let Some(t) = b.tasks.first() {
            if t.n() != n {
                return Err(Error::InvalidInput(
                    "task blocks are misaligned with the readout".into(),
                ));
            }
        }
    }
    let nf = n as f64;
    let sigma = SymmetricMatrix::new(xc.data().transpose() * xc.data() / nf)?;
    let rank = rank_info(&sym_eig(&sigma)?, rel_tol);
    let sig_pinv = pinv(&sigma, rel_tol)?;

    let mut per_sector: Vec<SectorCapacities> = Vec::new();
    for block in blocks {
        let sector = block.tasks.first().map(|t| t.sector);
        let mut tasks = Vec::with_capacity(block.len());
        for t in &block.tasks {
            let zv = DVector::from_column_slice(&t.values);
            let v = xc.data().transpose() * &zv / nf;
            let num = (v.transpose() * sig_pinv.matrix() * &v)[(0, 0)];
            let den = zv.norm_squared() / nf;
            tasks.push(TaskCapacity {
                description: t.description.clone(),
                degree: t.degree,
                capacity: num / den,
            });
        }
        per_sector.push(SectorCapacities {
            sector: sector.unwrap_or(Sector::Predictable),
            total: tasks.iter().map(|t| t.capacity).sum(),
            tasks,
            dropped_candidates: block.dropped,
        });
    }
    let c_ip: f64 = per_sector
        .iter()
        .filter(|s| s.sector == Sector::Predictable)
        .map(|s| s.total)
        .sum();
    let c_i: f64 = per_sector
        .iter()
        .filter(|s| s.sector != Sector::Predictable)
        .map(|s| s.total)
        .sum();
    Ok(CapacityReport {
        c_ip,
        c_i,
        rank_sigma: rank.rank,
        conservation_gap: c_ip + c_i - rank.rank as f64,
        per_sector,
        n,
        d,
        k_trials,
        rel_tol,
    })
}

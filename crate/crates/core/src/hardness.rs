//! Typical-set-localized packing families and the sample-complexity lower
//! bounds they imply.
//!
//! The construction: draw a sample cloud from a base law `P₀` on `R^m`,
//! mark a `(1−ε)`-typical set `T` with mass `p`, split `T` into `2m`
//! equal-mass cells `A₁⁺, A₁⁻, …, A_m⁺, A_m⁻`, and pick sign codewords
//! `v ∈ {±1}^m` at pairwise Hamming distance at least `⌈m/4⌉` (greedy
//! Gilbert-Varshamov packing). Each codeword defines a perturbed law
//!
//! ```text
//!   dP_v/dP₀ = 1 on T^c,  1 ± α v_i on A_i^±,
//! ```
//!
//! which stays within `[1−α, 1+α]` of the base law on `T` and untouched off
//! it. Pairwise total variation and Kullback-Leibler divergence have exact
//! closed forms in the Hamming distance,
//!
//! ```text
//!   TV = (α/m) d_H p,   KL = (d_H/m) p α log((1+α)/(1−α)) ≤ 4pα² d_H/m,
//! ```
//!
//! so Fano's inequality gives an average-case testing error bound and a
//! total-variation estimation risk bound, with sample complexity growing as
//! `m/α²`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{sym_eig, SymmetricMatrix, DEFAULT_REL_TOL};

/// Samples from the block law with a typicality mask.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    points: DMatrix<f64>,
    pub typical: Vec<bool>,
    /// Empirical mass of the typical set.
    pub p: f64,
    /// `−log f` per sample when the density is known (Gaussian clouds).
    pub neg_log_density: Option<Vec<f64>>,
    /// Differential entropy of the base law, when known.
    pub entropy: Option<f64>,
    /// Half-width of the log-density band defining the typical set.
    pub eta: Option<f64>,
}

impl SampleCloud {
    /// Wraps externally produced samples with a user-supplied typicality
    /// mask; only empirical masses are available downstream.
    pub fn from_points(points: DMatrix<f64>, typical: Vec<bool>) -> Result<Self> {
        if typical.len() != points.nrows() {
            return Err(Error::InvalidInput(
                "mask length must match sample count".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("samples must be finite".into()));
        }
        let p = typical.iter().filter(|&&b| b).count() as f64 / typical.len().max(1) as f64;
        if !(p > 0.0) {
            return Err(Error::InvalidInput("typical set has zero mass".into()));
        }
        Ok(Self {
            points,
            typical,
            p,
            neg_log_density: None,
            entropy: None,
            eta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn typical_count(&self) -> usize {
        self.typical.iter().filter(|&&b| b).count()
    }
}

/// Draws `n` samples from the centered Gaussian with the given covariance
/// and marks the band `{y : |−log f(y) − h| ≤ η}` as typical, with `η` the
/// empirical quantile making the mass at least `1 − ε`.
pub fn gaussian_typical_set(
    cov: &SymmetricMatrix,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SampleCloud> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidInput("epsilon must lie in (0,1)".into()));
    }
    if n_samples == 0 {
        return Err(Error::InsufficientData("need at least one sample".into()));
    }
    let m = cov.dim();
    let eig = sym_eig(cov)?;
    let lambda_max = eig.values.iter().cloned().fold(0.0_f64, f64::max);
    if eig
        .values
        .iter()
        .any(|&v| v <= DEFAULT_REL_TOL * lambda_max)
    {
        return Err(Error::NotPsd(
            "typical-set construction needs a full-rank covariance".into(),
        ));
    }
    let sqrt = DMatrix::from_fn(m, m, |i, j| eig.vectors[(i, j)] * eig.values[j].sqrt());
    let log_det: f64 = eig.values.iter().map(|v| v.ln()).sum();
    let two_pi = 2.0 * std::f64::consts::PI;
    let h = 0.5 * (m as f64) * (two_pi * std::f64::consts::E).ln() + 0.5 * log_det;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n_samples, m);
    let mut scores = Vec::with_capacity(n_samples);
    let mut neg_log_density = Vec::with_capacity(n_samples);
    let mut z = vec![0.0_f64; m];
    for i in 0..n_samples {
        let mut q = 0.0;
        for zj in z.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            *zj = v;
            q += v * v;
        }
        for j in 0..m {
            let mut acc = 0.0;
            for (k, &zk) in z.iter().enumerate() {
                acc += sqrt[(j, k)] * zk;
            }
            points[(i, j)] = acc;
        }
        // For y = Σ^{1/2} z the quadratic form is exactly zᵀz.
        let nld = 0.5 * (m as f64 * two_pi.ln() + log_det + q);
        neg_log_density.push(nld);
        scores.push((nld - h).abs());
    }
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((1.0 - epsilon) * n_samples as f64).ceil() as usize;
    let eta = sorted[idx.clamp(1, n_samples) - 1];
    let typical: Vec<bool> = scores.iter().map(|&s| s <= eta).collect();
    let p = typical.iter().filter(|&&b| b).count() as f64 / n_samples as f64;
    Ok(SampleCloud {
        points,
        typical,
        p,
        neg_log_density: Some(neg_log_density),
        entropy: Some(h),
        eta: Some(eta),
    })
}

/// A half-open box recorded at a partition leaf. Bounds are diagnostic; the
/// authoritative cell membership is the per-sample assignment produced with
/// the partition.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub bounds: Vec<(f64, f64)>,
    pub count: usize,
}

/// `2m` disjoint cells inside the typical set with equal empirical counts
/// (within one sample).
#[derive(Debug, Clone)]
pub struct CellPartition {
    pub cells: Vec<Cell>,
    /// Cell index per cloud sample; `None` for atypical samples.
    pub assignment: Vec<Option<usize>>,
    pub target_mass: f64,
}

/// Equal-count partition of the typical samples into `2m` cells by
/// recursive quantile splits, cycling through the coordinate axes.
pub fn equal_mass_partition(cloud: &SampleCloud, m: usize) -> Result<CellPartition> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one cell pair".into()));
    }
    let n_cells = 2 * m;
    let typ_idx: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.typical[i]).collect();
    let n_typ = typ_idx.len();
    if n_typ < 50 * n_cells {
        return Err(Error::InsufficientData(format!(
            "{n_typ} typical samples for {n_cells} cells (need 50x)"
        )));
    }
    let dim = cloud.dim();
    // Leaf j receives items [floor(j N / cells), floor((j+1) N / cells)).
    let boundary = |j: usize| -> usize { j * n_typ / n_cells };

    struct Frame {
        j0: usize,
        j1: usize,
        items: Vec<usize>,
        bounds: Vec<(f64, f64)>,
        depth: usize,
    }
    let mut cells: Vec<Option<Cell>> = (0..n_cells).map(|_| None).collect();
    let mut assignment: Vec<Option<usize>> = vec![None; cloud.len()];
    let mut stack = vec![Frame {
        j0: 0,
        j1: n_cells,
        items: typ_idx,
        bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
        depth: 0,
    }];
    while let Some(frame) = stack.pop() {
        if frame.j1 - frame.j0 == 1 {
            for &i in &frame.items {
                assignment[i] = Some(frame.j0);
            }
            cells[frame.j0] = Some(Cell {
                bounds: frame.bounds,
                count: frame.items.len(),
            });
            continue;
        }
        let jm = (frame.j0 + frame.j1) / 2;
        let left_count = boundary(jm) - boundary(frame.j0);
        let axis = frame.depth % dim;
        let mut items = frame.items;
        items.sort_by(|&a, &b| {
            cloud.points[(a, axis)]
                .partial_cmp(&cloud.points[(b, axis)])
                .unwrap()
        });
        let right_items = items.split_off(left_count);
        let cut = if right_items.is_empty() || items.is_empty() {
            0.0
        } else {
            0.5 * (cloud.points[(*items.last().unwrap(), axis)]
                + cloud.points[(right_items[0], axis)])
        };
        let mut left_bounds = frame.bounds.clone();
        left_bounds[axis].1 = left_bounds[axis].1.min(cut);
        let mut right_bounds = frame.bounds;
        right_bounds[axis].0 = right_bounds[axis].0.max(cut);
        stack.push(Frame {
            j0: frame.j0,
            j1: jm,
            items,
            bounds: left_bounds,
            depth: frame.depth + 1,
        });
        stack.push(Frame {
            j0: jm,
            j1: frame.j1,
            items: right_items,
            bounds: right_bounds,
            depth: frame.depth + 1,
        });
    }
    let cells: Vec<Cell> = cells.into_iter().map(|c| c.expect("leaf filled")).collect();
    Ok(CellPartition {
        cells,
        assignment,
        target_mass: cloud.p / n_cells as f64,
    })
}

/// A `±1` codeword packed into 64-bit words (set bit = +1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignWord {
    words: Vec<u64>,
    m: usize,
}

impl SignWord {
    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput("codeword entries must be ±1".into()));
        }
        let m = signs.len();
        let mut words = vec![0u64; m.div_ceil(64)];
        for (i, &s) in signs.iter().enumerate() {
            if s == 1 {
                words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Ok(Self { words, m })
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.m)
            .map(|i| if self.bit(i) { 1 } else { -1 })
            .collect()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn hamming(&self, other: &SignWord) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Flips every sign.
    pub fn negated(&self) -> SignWord {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.m % 64;
        if tail != 0 {
            let last = words.len() - 1;
            words[last] &= (1u64 << tail) - 1;
        }
        SignWord { words, m: self.m }
    }

    fn random(m: usize, rng: &mut ChaCha8Rng) -> SignWord {
        let mut words = vec![0u64; m.div_ceil(64)];
        for w in words.iter_mut() {
            *w = rng.random();
        }
        let tail = m % 64;
        if tail != 0 {
            let last = words.len() - 1;
            words[last] &= (1u64 << tail) - 1;
        }
        SignWord { words, m }
    }
}

/// Binary entropy in bits (continuity convention at the endpoints).
fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Sign codewords at pairwise Hamming distance at least `⌈m/4⌉`.
#[derive(Debug, Clone)]
pub struct SignCode {
    pub m: usize,
    pub codewords: Vec<SignWord>,
    pub min_distance: usize,
    /// Packing exponent `ln 2 · (1 − h₂(1/4))` of the target count.
    pub c0: f64,
    /// Whether the greedy search reached the Gilbert-Varshamov count.
    pub reached_target: bool,
}

impl SignCode {
    /// Validates an explicit codeword list.
    pub fn from_codewords(m: usize, signs: &[Vec<i8>]) -> Result<Self> {
        if signs.len() < 2 {
            return Err(Error::InvalidInput("need at least two codewords".into()));
        }
        let words: Vec<SignWord> = signs
            .iter()
            .map(|s| {
                if s.len() != m {
                    return Err(Error::InvalidInput("codeword length mismatch".into()));
                }
                SignWord::from_signs(s)
            })
            .collect::<Result<_>>()?;
        let d_req = m.div_ceil(4);
        let mut min_d = usize::MAX;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                min_d = min_d.min(words[i].hamming(&words[j]));
            }
        }
        if min_d < d_req {
            return Err(Error::InvalidInput(format!(
                "pairwise distance {min_d} below required {d_req}"
            )));
        }
        Ok(Self {
            m,
            codewords: words,
            min_distance: min_d,
            c0: std::f64::consts::LN_2 * (1.0 - h2(0.25)),
            reached_target: true,
        })
    }

    /// Keeps only the first `k` codewords.
    pub fn truncated(&self, k: usize) -> Result<SignCode> {
        if k < 2 || k > self.codewords.len() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate {} codewords to {k}",
                self.codewords.len()
            )));
        }
        let codewords: Vec<SignWord> = self.codewords[..k].to_vec();
        let mut min_d = usize::MAX;
        for i in 0..k {
            for j in i + 1..k {
                min_d = min_d.min(codewords[i].hamming(&codewords[j]));
            }
        }
        Ok(SignCode {
            m: self.m,
            codewords,
            min_distance: min_d,
            c0: self.c0,
            reached_target: self.reached_target,
        })
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    fn index_of(&self, w: &SignWord) -> Option<usize> {
        self.codewords.iter().position(|c| c == w)
    }
}

/// Greedy Gilbert-Varshamov packing: random candidates are kept when they
/// sit at Hamming distance at least `⌈m/4⌉` from everything kept so far,
/// until the count `⌈2^{m(1−h₂(1/4))}⌉` is reached or the candidate budget
/// runs out (the shortfall is flagged on the result).
pub fn vg_code(m: usize, seed: u64) -> Result<SignCode> {
    if m < 8 {
        return Err(Error::InvalidInput(format!("need m >= 8, got {m}")));
    }
    let rate = 1.0 - h2(0.25);
    let target_f = (2.0_f64).powf(m as f64 * rate);
    let target = if target_f > 5e6 {
        5_000_000
    } else {
        target_f.ceil() as usize
    };
    let d_min = m.div_ceil(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<SignWord> = Vec::with_capacity(target.min(1 << 20));
    let budget = 200usize.saturating_mul(target).clamp(10_000, 4_000_000);
    let mut attempts = 0usize;
    while kept.len() < target && attempts < budget {
        attempts += 1;
        let cand = SignWord::random(m, &mut rng);
        if kept.iter().all(|c| c.hamming(&cand) >= d_min) {
            kept.push(cand);
        }
    }
    if kept.len() < 2 {
        return Err(Error::NoConvergence(
            "greedy packing found fewer than two codewords".into(),
        ));
    }
    let mut min_d = usize::MAX;
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            min_d = min_d.min(kept[i].hamming(&kept[j]));
        }
    }
    Ok(SignCode {
        m,
        reached_target: kept.len() >= target,
        codewords: kept,
        min_distance: min_d,
        c0: std::f64::consts::LN_2 * rate,
    })
}

/// The full packing family: partition, code and perturbation level, with
/// pairwise distance extremes cached.
#[derive(Debug, Clone)]
pub struct PackingFamily {
    pub partition: CellPartition,
    pub code: SignCode,
    pub alpha: f64,
    pub p: f64,
    pub typical: Vec<bool>,
    pub min_hamming: usize,
    pub max_hamming: usize,
}

/// Assembles the perturbed-law family from its parts.
pub fn build_family(
    cloud: &SampleCloud,
    partition: CellPartition,
    code: SignCode,
    alpha: f64,
) -> Result<PackingFamily> {
    if !(0.0 < alpha && alpha <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1/2], got {alpha}"
        )));
    }
    if partition.cells.len() != 2 * code.m {
        return Err(Error::InvalidInput(format!(
            "{} cells do not pair up with codeword length {}",
            partition.cells.len(),
            code.m
        )));
    }
    if partition.assignment.len() != cloud.len() {
        return Err(Error::InvalidInput(
            "partition does not describe this cloud".into(),
        ));
    }
    let mut min_h = usize::MAX;
    let mut max_h = 0usize;
    for i in 0..code.len() {
        for j in i + 1..code.len() {
            let d = code.codewords[i].hamming(&code.codewords[j]);
            min_h = min_h.min(d);
            max_h = max_h.max(d);
        }
    }
    Ok(PackingFamily {
        partition,
        alpha,
        p: cloud.p,
        typical: cloud.typical.clone(),
        code,
        min_hamming: min_h,
        max_hamming: max_h,
    })
}

impl PackingFamily {
    pub fn m(&self) -> usize {
        self.code.m
    }

    /// `dP_v/dP₀` at a stored sample.
    pub fn density_ratio(&self, codeword: usize, sample: usize) -> f64 {
        match self.partition.assignment[sample] {
            None => 1.0,
            Some(cell) => {
                let pair = cell / 2;
                let cell_sign = if cell % 2 == 0 { 1.0 } else { -1.0 };
                let v = if self.code.codewords[codeword].bit(pair) {
                    1.0
                } else {
                    -1.0
                };
                1.0 + self.alpha * v * cell_sign
            }
        }
    }

    /// Total mass of `P_v` using the exact cell masses `p/2m`:
    /// `Σ (p/2m)(1 ± α v_i) + (1 − p) = 1`.
    pub fn total_mass(&self, codeword: usize) -> f64 {
        let mut acc = 1.0 - self.p;
        for cell in 0..self.partition.cells.len() {
            let pair = cell / 2;
            let cell_sign = if cell % 2 == 0 { 1.0 } else { -1.0 };
            let v = if self.code.codewords[codeword].bit(pair) {
                1.0
            } else {
                -1.0
            };
            acc += self.partition.target_mass * (1.0 + self.alpha * v * cell_sign);
        }
        acc
    }

    /// Empirical mass of the typical set under `P_v` (reweighted count).
    pub fn empirical_typical_mass(&self, codeword: usize) -> f64 {
        let n = self.typical.len();
        let mut acc = 0.0;
        for i in 0..n {
            if self.typical[i] {
                acc += self.density_ratio(codeword, i);
            }
        }
        acc / n as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDivergence {
    pub tv: f64,
    pub kl: f64,
    /// `4 p α² d_H / m`, the quadratic upper bound on the divergence.
    pub kl_bound: f64,
    pub hamming: usize,
}

/// Exact pairwise total variation and Kullback-Leibler divergence between
/// two members: `TV = (α/m) d_H p` and
/// `KL = (d_H/m) p α log((1+α)/(1−α))`.
pub fn pairwise_tv_kl(family: &PackingFamily, v: &[i8], v_prime: &[i8]) -> Result<PairDivergence> {
    let w = SignWord::from_signs(v)?;
    let w2 = SignWord::from_signs(v_prime)?;
    let i = family
        .code
        .index_of(&w)
        .ok_or_else(|| Error::InvalidInput("first codeword not in family".into()))?;
    let j = family
        .code
        .index_of(&w2)
        .ok_or_else(|| Error::InvalidInput("second codeword not in family".into()))?;
    let d_h = family.code.codewords[i].hamming(&family.code.codewords[j]);
    let m = family.m() as f64;
    let (alpha, p) = (family.alpha, family.p);
    let tv = alpha / m * d_h as f64 * p;
    let kl = d_h as f64 / m * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
    let kl_bound = 4.0 * p * alpha * alpha * d_h as f64 / m;
    if kl > kl_bound + 1e-12 {
        return Err(Error::PreconditionFailed(format!(
            "kl {kl} exceeds quadratic bound {kl_bound}"
        )));
    }
    Ok(PairDivergence {
        tv,
        kl,
        kl_bound,
        hamming: d_h,
    })
}

/// Monte-Carlo total variation `½ E|dP_v/dP₀ − dP_{v'}/dP₀|` over the
/// stored sample cloud.
pub fn monte_carlo_tv(family: &PackingFamily, v: &[i8], v_prime: &[i8]) -> Result<f64> {
    let w = SignWord::from_signs(v)?;
    let w2 = SignWord::from_signs(v_prime)?;
    let i = family
        .code
        .index_of(&w)
        .ok_or_else(|| Error::InvalidInput("first codeword not in family".into()))?;
    let j = family
        .code
        .index_of(&w2)
        .ok_or_else(|| Error::InvalidInput("second codeword not in family".into()))?;
    let n = family.typical.len();
    let mut acc = 0.0;
    for s in 0..n {
        acc += (family.density_ratio(i, s) - family.density_ratio(j, s)).abs();
    }
    Ok(0.5 * acc / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct FanoBound {
    pub test_error_lb: f64,
    pub tv_risk_lb: f64,
    /// Set when the unclamped bound went negative (enough samples to
    /// defeat the packing).
    pub sample_rich: bool,
}

/// Fano lower bounds from the built family's exact quantities: `log |V|`
/// in place of the packing exponent, the maximal pairwise KL as the
/// information rate and the minimal pairwise TV as the separation.
pub fn fano_bound(family: &PackingFamily, n: u64) -> Result<FanoBound> {
    let v_count = family.code.len();
    if v_count < 2 {
        return Err(Error::InvalidInput(
            "Fano needs at least two hypotheses".into(),
        ));
    }
    let log_v = (v_count as f64).ln();
    let m = family.m() as f64;
    let (alpha, p) = (family.alpha, family.p);
    let kl_max = family.max_hamming as f64 / m * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
    let tv_min = alpha / m * family.min_hamming as f64 * p;
    let raw = 1.0 - (n as f64 * kl_max + std::f64::consts::LN_2) / log_v;
    let test_error_lb = raw.max(0.0);
    Ok(FanoBound {
        test_error_lb,
        tv_risk_lb: 0.5 * tv_min * test_error_lb,
        sample_rich: raw < 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleComplexity {
    pub n: u64,
    /// `n α² / m`, the scaling diagnostic.
    pub scaling: f64,
}

const MAX_SAMPLE_BUDGET: u64 = 1_000_000_000_000;

/// Smallest `n` at which the Fano risk bound drops below
/// `target_risk_fraction × Δ/2`.
pub fn sample_complexity(
    family: &PackingFamily,
    target_risk_fraction: f64,
) -> Result<SampleComplexity> {
    if !(0.0 < target_risk_fraction && target_risk_fraction < 1.0) {
        return Err(Error::InvalidInput(
            "target risk fraction must lie in (0,1)".into(),
        ));
    }
    let v_count = family.code.len();
    if v_count < 2 {
        return Err(Error::InvalidInput(
            "Fano needs at least two hypotheses".into(),
        ));
    }
    let log_v = (v_count as f64).ln();
    let m = family.m() as f64;
    let (alpha, p) = (family.alpha, family.p);
    let kl_max = family.max_hamming as f64 / m * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
    if kl_max <= 0.0 {
        return Err(Error::MaxSamplesExceeded(
            "packing has zero information rate; no sample size suffices".into(),
        ));
    }
    // risk(n) < frac · Δ/2 ⟺ err(n) < frac ⟺ n > ((1−frac) log|V| − log 2)/KL.
    let threshold = ((1.0 - target_risk_fraction) * log_v - std::f64::consts::LN_2) / kl_max;
    let n = if threshold < 0.0 {
        0
    } else {
        threshold.floor() as u64 + 1
    };
    if n > MAX_SAMPLE_BUDGET {
        return Err(Error::MaxSamplesExceeded(format!(
            "required n = {n} exceeds budget {MAX_SAMPLE_BUDGET}"
        )));
    }
    Ok(SampleComplexity {
        n,
        scaling: n as f64 * alpha * alpha / m,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FanoPoint {
    pub n: u64,
    pub test_error_lb: f64,
    pub tv_risk_lb: f64,
}

/// Plot-ready summary of a built family.
#[derive(Debug, Clone, Serialize)]
pub struct FamilySummary {
    pub m: usize,
    pub alpha: f64,
    pub p: f64,
    pub n_codewords: usize,
    pub min_hamming: usize,
    pub max_hamming: usize,
    pub c0: f64,
    pub reached_gv_target: bool,
    pub min_tv: f64,
    pub max_kl: f64,
    pub fano_curve: Vec<FanoPoint>,
}

pub fn family_summary(family: &PackingFamily, sample_sizes: &[u64]) -> Result<FamilySummary> {
    let m = family.m() as f64;
    let (alpha, p) = (family.alpha, family.p);
    let min_tv = alpha / m * family.min_hamming as f64 * p;
    let max_kl = family.max_hamming as f64 / m * p * alpha * ((1.0 + alpha) / (1.0 - alpha)).ln();
    let fano_curve = sample_sizes
        .iter()
        .map(|&n| {
            fano_bound(family, n).map(|b| FanoPoint {
                n,
                test_error_lb: b.test_error_lb,
                tv_risk_lb: b.tv_risk_lb,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FamilySummary {
        m: family.m(),
        alpha,
        p,
        n_codewords: family.code.len(),
        min_hamming: family.min_hamming,
        max_hamming: family.max_hamming,
        c0: family.code.c0,
        reached_gv_target: family.code.reached_target,
        min_tv,
        max_kl,
        fano_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_cloud(n: usize, dim: usize, seed: u64) -> SampleCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = DMatrix::from_fn(n, dim, |_, _| rng.random::<f64>());
        SampleCloud::from_points(points, vec![true; n]).unwrap()
    }

    #[test]
    fn typical_set_small_epsilon_takes_everything() {
        let cov = SymmetricMatrix::identity(2);
        let cloud = gaussian_typical_set(&cov, 1e-9, 2000, 1).unwrap();
        assert_abs_diff_eq!(cloud.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn typical_set_mass_tracks_epsilon() {
        let cov = SymmetricMatrix::identity(1);
        let n = 20000;
        let cloud = gaussian_typical_set(&cov, 0.1, n, 2).unwrap();
        assert!(cloud.p >= 0.9);
        assert!(cloud.p <= 0.9 + 2.0 / (n as f64).sqrt() + 1e-9);
    }

    #[test]
    fn typical_set_rejects_rank_deficient() {
        let cov = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            gaussian_typical_set(&cov, 0.1, 100, 3),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn typical_set_log_volume_near_entropy() {
        // Importance-sampling the volume: Vol(T) = E[1_T e^{-log f}].
        let cov = SymmetricMatrix::identity(2);
        let n = 200_000;
        let cloud = gaussian_typical_set(&cov, 0.2, n, 5).unwrap();
        let nld = cloud.neg_log_density.as_ref().unwrap();
        let mut acc = 0.0;
        for i in 0..n {
            if cloud.typical[i] {
                acc += nld[i].exp();
            }
        }
        let log_vol = (acc / n as f64).ln();
        let h = cloud.entropy.unwrap();
        let eta = cloud.eta.unwrap();
        assert!(
            (log_vol - h).abs() <= eta + 1.0,
            "log vol {log_vol} vs entropy {h} (eta {eta})"
        );
    }

    #[test]
    fn partition_two_cells_for_m1() {
        let cloud = uniform_cloud(400, 1, 7);
        let part = equal_mass_partition(&cloud, 1).unwrap();
        assert_eq!(part.cells.len(), 2);
        assert_eq!(part.cells[0].count, 200);
        assert_eq!(part.cells[1].count, 200);
        assert_abs_diff_eq!(part.target_mass, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn partition_counts_within_one() {
        let cloud = uniform_cloud(803, 2, 11);
        let part = equal_mass_partition(&cloud, 2).unwrap();
        assert_eq!(part.cells.len(), 4);
        let counts: Vec<usize> = part.cells.iter().map(|c| c.count).collect();
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "counts {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 803);
    }

    #[test]
    fn partition_cells_disjoint_via_assignment() {
        let cloud = uniform_cloud(1600, 3, 13);
        let part = equal_mass_partition(&cloud, 8).unwrap();
        let mut seen = vec![0usize; 16];
        for a in part.assignment.iter().flatten() {
            seen[*a] += 1;
        }
        for (cell, &count) in seen.iter().enumerate() {
            assert_eq!(count, part.cells[cell].count);
        }
    }

    #[test]
    fn partition_needs_typical_samples() {
        let points = DMatrix::from_element(200, 1, 0.5);
        let cloud = SampleCloud {
            points,
            typical: vec![false; 200],
            p: 1.0, // bypass the mass check to exercise the error path
            neg_log_density: None,
            entropy: None,
            eta: None,
        };
        assert!(matches!(
            equal_mass_partition(&cloud, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn vg_code_m8() {
        let code = vg_code(8, 3).unwrap();
        assert!(code.len() >= 2);
        assert!(code.min_distance >= 2);
        // Exhaustive pairwise re-check.
        for i in 0..code.len() {
            for j in i + 1..code.len() {
                assert!(code.codewords[i].hamming(&code.codewords[j]) >= 2);
            }
        }
    }

    #[test]
    fn vg_code_m16_count() {
        let code = vg_code(16, 4).unwrap();
        assert!(code.len() >= 8, "got {}", code.len());
        assert!(code.min_distance >= 4);
        assert!(code.reached_target);
    }

    #[test]
    fn vg_code_rejects_small_m() {
        assert!(matches!(vg_code(4, 1), Err(Error::InvalidInput(_))));
    }

    fn small_family(alpha: f64) -> (SampleCloud, PackingFamily) {
        let cloud = uniform_cloud(4000, 2, 17);
        let part = equal_mass_partition(&cloud, 8).unwrap();
        let code = vg_code(8, 19).unwrap();
        let fam = build_family(&cloud, part, code, alpha).unwrap();
        (cloud, fam)
    }

    #[test]
    fn family_members_are_probability_laws() {
        let (_, fam) = small_family(0.5);
        for v in 0..fam.code.len() {
            assert_abs_diff_eq!(fam.total_mass(v), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn family_localization() {
        let (_, fam) = small_family(0.4);
        for v in 0..fam.code.len() {
            for s in 0..fam.typical.len() {
                let r = fam.density_ratio(v, s);
                if fam.typical[s] {
                    assert!((0.6..=1.4).contains(&r));
                } else {
                    assert_eq!(r, 1.0);
                }
            }
        }
    }

    #[test]
    fn family_sign_flip_swaps_cells() {
        let (_, fam) = small_family(0.3);
        let v = fam.code.codewords[0].clone();
        let neg = v.negated();
        for s in 0..fam.typical.len() {
            if let Some(cell) = fam.partition.assignment[s] {
                let pair = cell / 2;
                let sig = if cell % 2 == 0 { 1.0 } else { -1.0 };
                let vi = if v.bit(pair) { 1.0 } else { -1.0 };
                let r_v = 1.0 + fam.alpha * vi * sig;
                let ni = if neg.bit(pair) { 1.0 } else { -1.0 };
                let r_n = 1.0 + fam.alpha * ni * sig;
                // Flipped sign mirrors the ratio across 1.
                assert_abs_diff_eq!(r_v + r_n, 2.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn family_typical_mass_preserved() {
        let (cloud, fam) = small_family(0.5);
        for v in [0, fam.code.len() - 1] {
            let mass = fam.empirical_typical_mass(v);
            let tol =
                fam.alpha * fam.m() as f64 / cloud.len() as f64 + 3.0 / (cloud.len() as f64).sqrt();
            assert!((mass - fam.p).abs() <= tol, "mass {mass} vs p {}", fam.p);
        }
    }

    #[test]
    fn pairwise_formulas() {
        // Hand-built m = 4 code with antipodal codewords: d_H = 4.
        let cloud = uniform_cloud(4000, 2, 23);
        let part = equal_mass_partition(&cloud, 4).unwrap();
        let code = SignCode::from_codewords(4, &[vec![1, 1, 1, 1], vec![-1, -1, -1, -1]]).unwrap();
        let fam = build_family(&cloud, part, code, 0.5).unwrap();
        let d = pairwise_tv_kl(&fam, &[1, 1, 1, 1], &[-1, -1, -1, -1]).unwrap();
        assert_eq!(d.hamming, 4);
        assert_abs_diff_eq!(d.tv, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.kl, 0.5 * 3.0_f64.ln(), epsilon = 1e-12);
        assert!(d.kl <= d.kl_bound);
        let same = pairwise_tv_kl(&fam, &[1, 1, 1, 1], &[1, 1, 1, 1]).unwrap();
        assert_eq!(same.tv, 0.0);
        assert_eq!(same.kl, 0.0);
    }

    #[test]
    fn pairwise_rejects_unknown_codeword() {
        let (_, fam) = small_family(0.25);
        let bogus = vec![1i8; 8];
        let known = fam.code.codewords[0].to_signs();
        if fam
            .code
            .index_of(&SignWord::from_signs(&bogus).unwrap())
            .is_none()
        {
            assert!(pairwise_tv_kl(&fam, &bogus, &known).is_err());
        }
    }

    #[test]
    fn monte_carlo_tv_matches_closed_form() {
        let (cloud, fam) = small_family(0.5);
        let n = cloud.len() as f64;
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if j >= fam.code.len() {
                continue;
            }
            let v = fam.code.codewords[i].to_signs();
            let w = fam.code.codewords[j].to_signs();
            let exact = pairwise_tv_kl(&fam, &v, &w).unwrap().tv;
            let mc = monte_carlo_tv(&fam, &v, &w).unwrap();
            assert!(
                (mc - exact).abs() <= 3.0 / n.sqrt(),
                "mc {mc} vs exact {exact}"
            );
        }
    }

    #[test]
    fn fano_binary_no_data() {
        let cloud = uniform_cloud(4000, 2, 29);
        let part = equal_mass_partition(&cloud, 8).unwrap();
        let code = vg_code(8, 31).unwrap().truncated(2).unwrap();
        let fam = build_family(&cloud, part, code, 0.5).unwrap();
        let b = fano_bound(&fam, 0).unwrap();
        assert_abs_diff_eq!(b.test_error_lb, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fano_sixteen_hypotheses_no_data() {
        let cloud = uniform_cloud(8000, 2, 37).clone();
        let part = equal_mass_partition(&cloud, 32).unwrap();
        let code = vg_code(32, 41).unwrap().truncated(16).unwrap();
        let fam = build_family(&cloud, part, code, 0.5).unwrap();
        let b = fano_bound(&fam, 0).unwrap();
        assert!((b.test_error_lb - 0.75).abs() < 1e-15);
    }

    #[test]
    fn fano_sample_rich_clamps() {
        let (_, fam) = small_family(0.5);
        let b = fano_bound(&fam, 1_000_000).unwrap();
        assert_eq!(b.test_error_lb, 0.0);
        assert!(b.sample_rich);
        assert_eq!(b.tv_risk_lb, 0.0);
    }

    #[test]
    fn sample_complexity_threshold() {
        let (_, fam) = small_family(0.5);
        let sc = sample_complexity(&fam, 0.1).unwrap();
        // Just below the returned n the risk is still at or above target.
        let target = 0.1 * 0.5 * fam.alpha / fam.m() as f64 * fam.min_hamming as f64 * fam.p;
        if sc.n > 0 {
            let before = fano_bound(&fam, sc.n - 1).unwrap();
            assert!(before.tv_risk_lb >= target);
        }
        let after = fano_bound(&fam, sc.n).unwrap();
        assert!(after.tv_risk_lb < target);
    }

    #[test]
    fn sample_complexity_budget_guard() {
        // A vanishing perturbation pushes the required n past any budget.
        let (_, fam) = small_family(1e-7);
        assert!(matches!(
            sample_complexity(&fam, 0.1),
            Err(Error::MaxSamplesExceeded(_))
        ));
    }

    #[test]
    fn summary_serializes() {
        let (_, fam) = small_family(0.25);
        let s = family_summary(&fam, &[0, 10, 100]).unwrap();
        assert_eq!(s.fano_curve.len(), 3);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("min_tv"));
    }
}

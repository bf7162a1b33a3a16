//! Multiple-pairs GLRAM.
//!
//! Fits `A_i ≈ Σ_{j=1..k} L_j D_i R_jᵀ` with unconstrained pairs and one core
//! per sample, by coordinate descent over the blocks
//! `{D_i}, L_1, R_1, …, L_k, R_k`. Every block update is an exact minimizer:
//!
//! * cores: least squares against `B = Σ_j R_j ⊗ L_j`, solved through the
//!   structured Gram `BᵀB = Σ_{j,j'} (R_jᵀR_j') ⊗ (L_jᵀL_j')`;
//! * `R_j'`: `R = N_R B_R⁺` with `M_i = L D_i`, `N_R = Σ Āᵢᵀ M_i`,
//!   `B_R = Σ M_iᵀ M_i`;
//! * `L_j'`: `L = N_L B_L⁺` with `M_i = R D_iᵀ`, `N_L = Σ Ā_i M_i`,
//!   `B_L = Σ M_iᵀ M_i`;
//!
//! where `Ā_i` is the residual with pair `j'` left out. The objective is thus
//! non-increasing across every recorded block update.
//!
//! Per-sample terms are computed in parallel and summed in sample order, so
//! results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::MatrixDataset;
use crate::error::{Error, Result};
use crate::glram::{glram_fit, GlramConfig, GlramModel};
use crate::kronecker::{apply_pairs, kron, vec, KronPair, KronPairList};
use crate::linalg::{gaussian_matrix, psd_inverse};

pub use crate::linalg::PsdSolver;

/// Which factor of a pair is refreshed first within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    #[default]
    LeftFirst,
    RightFirst,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum MpglramInit {
    /// Pair 1 from a GLRAM fit with the same `(k1, k2)`; remaining pairs padded.
    #[default]
    GlramWarm,
    /// Every pair seeded Gaussian.
    Random,
    /// Start from the given pairs (typically a converged `(k−1)`-pair model or
    /// a fitted GLRAM pair); missing pairs are padded, extra pairs rejected.
    Warm(KronPairList),
}

/// Solver options shared by the block updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub solver: PsdSolver,
    /// Relative Tikhonov floor, applied only to numerically singular systems.
    pub ridge_rel: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            solver: PsdSolver::PseudoInverse,
            ridge_rel: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpglramConfig {
    pub k: usize,
    pub k1: usize,
    pub k2: usize,
    /// Maximum number of full sweeps.
    pub outer_iters: usize,
    /// Stop once a sweep lowers the objective by less than `tol · max(obj_0, ε)`.
    /// Zero runs all sweeps.
    pub tol: f64,
    pub seed: u64,
    pub init: MpglramInit,
    pub solve: SolveOptions,
    pub order: UpdateOrder,
    /// Settings for the GLRAM fit behind [`MpglramInit::GlramWarm`].
    pub glram_max_iter: usize,
    pub glram_tol: f64,
}

impl MpglramConfig {
    pub fn new(k: usize, k1: usize, k2: usize) -> Self {
        Self {
            k,
            k1,
            k2,
            outer_iters: 100,
            tol: 1e-6,
            seed: 0,
            init: MpglramInit::GlramWarm,
            solve: SolveOptions::default(),
            order: UpdateOrder::LeftFirst,
            glram_max_iter: 100,
            glram_tol: 1e-6,
        }
    }

    fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("pair count k must be at least 1".into()));
        }
        if self.k1 == 0 || self.k1 > n1 || self.k2 == 0 || self.k2 > n2 {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k1 <= {n1} and 1 <= k2 <= {n2}, got ({}, {})",
                self.k1, self.k2
            )));
        }
        if !(self.solve.ridge_rel >= 0.0) {
            return Err(Error::InvalidArgument("ridge_rel must be non-negative".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpglramModel {
    pub pairs: KronPairList,
    pub cores: Vec<DMatrix<f64>>,
    /// Objective after initialization and after every block update.
    pub objective_history: Vec<f64>,
    /// Completed sweeps.
    pub sweeps: usize,
    pub config: MpglramConfig,
}

impl MpglramModel {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }

    /// `k·(n1 k1 + n2 k2)`.
    pub fn parameter_count(&self) -> usize {
        self.pairs.parameter_count()
    }
}

fn check_pairs_fit(dataset: &MatrixDataset, pairs: &KronPairList) -> Result<()> {
    let (n1, n2, _, _) = pairs.dims();
    if (n1, n2) != (dataset.n1(), dataset.n2()) {
        return Err(Error::Shape(format!(
            "pairs act on {n1}x{n2} samples, dataset has {}x{}",
            dataset.n1(),
            dataset.n2()
        )));
    }
    Ok(())
}

fn check_cores(pairs: &KronPairList, cores: &[DMatrix<f64>], n: usize) -> Result<()> {
    let (_, _, k1, k2) = pairs.dims();
    if cores.len() != n {
        return Err(Error::Shape(format!("{} cores for {n} samples", cores.len())));
    }
    if let Some(bad) = cores.iter().position(|d| d.shape() != (k1, k2)) {
        return Err(Error::Shape(format!(
            "core {bad} is {:?}, pairs expect {k1}x{k2}",
            cores[bad].shape()
        )));
    }
    Ok(())
}

/// `BᵀB` for `B = Σ_j R_j ⊗ L_j`, without forming `B`.
pub fn gram_of_pairs(pairs: &KronPairList) -> DMatrix<f64> {
    let (_, _, k1, k2) = pairs.dims();
    let mut g = DMatrix::zeros(k1 * k2, k1 * k2);
    for a in pairs.pairs() {
        for b in pairs.pairs() {
            g += kron(&a.right.tr_mul(&b.right), &a.left.tr_mul(&b.left));
        }
    }
    g
}

/// Least-squares cores: `vec(D_i) = (BᵀB)⁺ Bᵀ vec(A_i)`, with
/// `Bᵀ vec(A_i) = Σ_j vec(L_jᵀ A_i R_j)`.
pub fn update_cores(dataset: &MatrixDataset, pairs: &KronPairList, opts: SolveOptions) -> Result<Vec<DMatrix<f64>>> {
    check_pairs_fit(dataset, pairs)?;
    let (_, _, k1, k2) = pairs.dims();
    let gram_inv = psd_inverse(&gram_of_pairs(pairs), opts.solver, opts.ridge_rel)?;
    let cores = dataset
        .samples()
        .par_iter()
        .map(|a| {
            let mut rhs = DMatrix::zeros(k1, k2);
            for p in pairs.pairs() {
                rhs += p.left.tr_mul(a) * &p.right;
            }
            let d: DVector<f64> = &gram_inv * vec(&rhs);
            DMatrix::from_column_slice(k1, k2, d.as_slice())
        })
        .collect();
    Ok(cores)
}

/// `Ā_i = A_i − Σ_{j≠excluded} L_j D_i R_jᵀ`.
pub fn residual_excluding(
    dataset: &MatrixDataset,
    pairs: &KronPairList,
    cores: &[DMatrix<f64>],
    excluded: usize,
) -> Result<Vec<DMatrix<f64>>> {
    check_pairs_fit(dataset, pairs)?;
    check_cores(pairs, cores, dataset.len())?;
    if excluded >= pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "pair index {excluded} out of range for {} pairs",
            pairs.len()
        )));
    }
    Ok(dataset
        .samples()
        .par_iter()
        .zip(cores.par_iter())
        .map(|(a, d)| {
            let mut r = a.clone();
            for (j, p) in pairs.pairs().iter().enumerate() {
                if j != excluded {
                    let ld = &p.left * d;
                    r.gemm(-1.0, &ld, &p.right.transpose(), 1.0);
                }
            }
            r
        })
        .collect())
}

fn check_residual_shapes(residuals: &[DMatrix<f64>], cores: &[DMatrix<f64>]) -> Result<(usize, usize)> {
    let first = residuals
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    if residuals.len() != cores.len() {
        return Err(Error::Shape(format!("{} residuals for {} cores", residuals.len(), cores.len())));
    }
    let shape = first.shape();
    if residuals.iter().any(|r| r.shape() != shape) {
        return Err(Error::Shape("residuals differ in shape".into()));
    }
    Ok(shape)
}

/// Normal-equation pieces `(N, B)` for `min Σ‖Ā_i − M_i Xᵀ‖²`, where the
/// data side is `Ā_i` itself (`transpose = true`, giving `N = Σ Āᵢᵀ M_i`) or
/// `Ā_iᵀ` (`N = Σ Ā_i M_i`).
fn normal_equations(
    residuals: &[DMatrix<f64>],
    ms: &[DMatrix<f64>],
    transpose_residual: bool,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = residuals
        .par_iter()
        .zip(ms.par_iter())
        .map(|(a, m)| {
            let n = if transpose_residual { a.tr_mul(m) } else { a * m };
            (n, m.tr_mul(m))
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut n_sum, mut b_sum) = iter.next().expect("at least one sample");
    for (n, b) in iter {
        n_sum += n;
        b_sum += b;
    }
    (n_sum, b_sum)
}

/// Exact minimizer over `R_{j'}` of `Σ‖Ā_i − L D_i Rᵀ‖²`: `R = N_R B_R⁺`.
pub fn update_right_factor(
    residuals: &[DMatrix<f64>],
    left: &DMatrix<f64>,
    cores: &[DMatrix<f64>],
    opts: SolveOptions,
) -> Result<DMatrix<f64>> {
    let (n1, _) = check_residual_shapes(residuals, cores)?;
    if left.nrows() != n1 || cores.iter().any(|d| d.nrows() != left.ncols()) {
        return Err(Error::Shape("L, cores and residuals do not conform".into()));
    }
    let ms: Vec<DMatrix<f64>> = cores.par_iter().map(|d| left * d).collect();
    let (n_r, b_r) = normal_equations(residuals, &ms, true);
    Ok(n_r * psd_inverse(&b_r, opts.solver, opts.ridge_rel)?)
}

/// Exact minimizer over `L_{j'}` of `Σ‖Ā_i − L D_i Rᵀ‖²`: `L = N_L B_L⁺`.
pub fn update_left_factor(
    residuals: &[DMatrix<f64>],
    right: &DMatrix<f64>,
    cores: &[DMatrix<f64>],
    opts: SolveOptions,
) -> Result<DMatrix<f64>> {
    let (_, n2) = check_residual_shapes(residuals, cores)?;
    if right.nrows() != n2 || cores.iter().any(|d| d.ncols() != right.ncols()) {
        return Err(Error::Shape("R, cores and residuals do not conform".into()));
    }
    let ms: Vec<DMatrix<f64>> = cores.par_iter().map(|d| right * d.transpose()).collect();
    let (n_l, b_l) = normal_equations(residuals, &ms, false);
    Ok(n_l * psd_inverse(&b_l, opts.solver, opts.ridge_rel)?)
}

/// `Σ_i ‖Ā_i − L D_i Rᵀ‖²`.
pub fn pair_objective(residuals: &[DMatrix<f64>], pair: &KronPair, cores: &[DMatrix<f64>]) -> f64 {
    let terms: Vec<f64> = residuals
        .par_iter()
        .zip(cores.par_iter())
        .map(|(a, d)| {
            let mut r = a.clone();
            let ld = &pair.left * d;
            r.gemm(-1.0, &ld, &pair.right.transpose(), 1.0);
            r.norm_squared()
        })
        .collect();
    terms.iter().sum()
}

/// `Σ_i ‖A_i − Σ_j L_j D_i R_jᵀ‖²`.
pub fn mpglram_objective(dataset: &MatrixDataset, pairs: &KronPairList, cores: &[DMatrix<f64>]) -> Result<f64> {
    check_pairs_fit(dataset, pairs)?;
    check_cores(pairs, cores, dataset.len())?;
    let terms: Vec<f64> = dataset
        .samples()
        .par_iter()
        .zip(cores.par_iter())
        .map(|(a, d)| apply_pairs(pairs, d).map(|rec| (a - rec).norm_squared()))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Reconstructions `Σ_j L_j D_i R_jᵀ`.
pub fn mpglram_reconstruct(pairs: &KronPairList, cores: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    cores.iter().map(|d| apply_pairs(pairs, d)).collect()
}

/// Extend `pairs` to `k` pairs. New pairs get a zero factor on the side that
/// is updated first and a seeded Gaussian on the other, so the projector (and
/// the objective) is unchanged while the first update can still move them.
fn pad_pairs(pairs: KronPairList, k: usize, order: UpdateOrder, rng: &mut ChaCha8Rng) -> Result<KronPairList> {
    if pairs.len() > k {
        return Err(Error::InvalidArgument(format!(
            "warm start has {} pairs, model asks for {k}",
            pairs.len()
        )));
    }
    let (n1, n2, k1, k2) = pairs.dims();
    let mut list = pairs.into_pairs();
    while list.len() < k {
        let pair = match order {
            UpdateOrder::LeftFirst => KronPair::new(
                DMatrix::zeros(n1, k1),
                gaussian_matrix(rng, n2, k2, 1.0 / (n2 as f64).sqrt()),
            ),
            UpdateOrder::RightFirst => KronPair::new(
                gaussian_matrix(rng, n1, k1, 1.0 / (n1 as f64).sqrt()),
                DMatrix::zeros(n2, k2),
            ),
        };
        list.push(pair);
    }
    KronPairList::new(list)
}

fn initial_pairs(dataset: &MatrixDataset, config: &MpglramConfig, rng: &mut ChaCha8Rng) -> Result<KronPairList> {
    match &config.init {
        MpglramInit::GlramWarm => {
            let glram = glram_fit(
                dataset,
                &GlramConfig {
                    max_iter: config.glram_max_iter,
                    tol: config.glram_tol,
                    seed: config.seed,
                    ..GlramConfig::new(config.k1, config.k2)
                },
            )?;
            pad_pairs(glram_pairs(&glram)?, config.k, config.order, rng)
        }
        MpglramInit::Random => {
            let (n1, n2) = (dataset.n1(), dataset.n2());
            let pairs = (0..config.k)
                .map(|_| {
                    let l = gaussian_matrix(rng, n1, config.k1, 1.0 / (n1 as f64).sqrt());
                    let r = gaussian_matrix(rng, n2, config.k2, 1.0 / (n2 as f64).sqrt());
                    KronPair::new(l, r)
                })
                .collect();
            KronPairList::new(pairs)
        }
        MpglramInit::Warm(pairs) => {
            let (_, _, k1, k2) = pairs.dims();
            if (k1, k2) != (config.k1, config.k2) {
                return Err(Error::Shape(format!(
                    "warm-start pairs reduce to {k1}x{k2}, config asks for {}x{}",
                    config.k1, config.k2
                )));
            }
            check_pairs_fit(dataset, pairs)?;
            pad_pairs(pairs.clone(), config.k, config.order, rng)
        }
    }
}

/// The single pair of a GLRAM model.
pub fn glram_pairs(model: &GlramModel) -> Result<KronPairList> {
    KronPairList::new(vec![KronPair::new(model.left.clone(), model.right.clone())])
}

/// Coordinate descent: cores once, then per sweep every pair (both factors,
/// in `config.order`) followed by the cores.
pub fn mpglram_fit(dataset: &MatrixDataset, config: &MpglramConfig) -> Result<MpglramModel> {
    config.validate(dataset.n1(), dataset.n2())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs = initial_pairs(dataset, config, &mut rng)?;
    let opts = config.solve;

    let mut cores = update_cores(dataset, &pairs, opts)?;
    let mut history = vec![finite(mpglram_objective(dataset, &pairs, &cores)?)?];
    let base = history[0].max(f64::MIN_POSITIVE);
    let mut sweeps = 0;

    for _ in 0..config.outer_iters {
        let start = *history.last().expect("history is non-empty");
        if start == 0.0 {
            break;
        }
        for j in 0..pairs.len() {
            let residuals = residual_excluding(dataset, &pairs, &cores, j)?;
            let sides = match config.order {
                UpdateOrder::LeftFirst => [true, false],
                UpdateOrder::RightFirst => [false, true],
            };
            for update_left in sides {
                let pair = &pairs.pairs()[j];
                let fresh = if update_left {
                    update_left_factor(&residuals, &pair.right, &cores, opts)?
                } else {
                    update_right_factor(&residuals, &pair.left, &cores, opts)?
                };
                let pair = &mut pairs.pairs_mut()[j];
                if update_left {
                    pair.left = fresh;
                } else {
                    pair.right = fresh;
                }
                history.push(finite(pair_objective(&residuals, pair, &cores))?);
            }
        }
        cores = update_cores(dataset, &pairs, opts)?;
        let end = finite(mpglram_objective(dataset, &pairs, &cores)?)?;
        history.push(end);
        sweeps += 1;
        if (start - end) / base < config.tol {
            break;
        }
    }

    Ok(MpglramModel {
        pairs,
        cores,
        objective_history: history,
        sweeps,
        config: config.clone(),
    })
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite("MPGLRAM objective"))
    }
}

//! Single-pair generalized low-rank approximation.
//!
//! Minimizes `Σ_i ‖A_i − L D_i Rᵀ‖_F²` over orthonormal `L`, `R` by
//! alternating top-eigenvector updates of
//! `M_R = Σ A_iᵀ L Lᵀ A_i` and `M_L = Σ A_i R Rᵀ A_iᵀ`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::MatrixDataset;
use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal, sym_eigen_desc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlramInit {
    /// First `k1` columns of the `n1 × n1` identity.
    #[default]
    IdentityBlock,
    /// Seeded Gaussian, orthonormalized.
    RandomOrthonormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlramConfig {
    pub k1: usize,
    pub k2: usize,
    pub max_iter: usize,
    /// Stop once `(obj_{t-1} − obj_t) / max(obj_0, ε) < tol`.
    pub tol: f64,
    pub seed: u64,
    pub init: GlramInit,
}

impl GlramConfig {
    pub fn new(k1: usize, k2: usize) -> Self {
        Self {
            k1,
            k2,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            init: GlramInit::IdentityBlock,
        }
    }

    fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        if self.k1 == 0 || self.k1 > n1 || self.k2 == 0 || self.k2 > n2 {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k1 <= {n1} and 1 <= k2 <= {n2}, got ({}, {})",
                self.k1, self.k2
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlramModel {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub cores: Vec<DMatrix<f64>>,
    /// Reconstruction objective after each outer iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl GlramModel {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }
}

fn check_rows(dataset: &MatrixDataset, m: &DMatrix<f64>, rows: usize, what: &str) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::Shape(format!(
            "{what} has {} rows, samples need {rows} ({}x{} samples)",
            m.nrows(),
            dataset.n1(),
            dataset.n2()
        )));
    }
    Ok(())
}

/// `M_R = Σ_i A_iᵀ L Lᵀ A_i`, accumulated in sample order.
pub fn form_mr(dataset: &MatrixDataset, left: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(dataset, left, dataset.n1(), "L")?;
    let n2 = dataset.n2();
    let mut m = DMatrix::zeros(n2, n2);
    for a in dataset.samples() {
        let t = left.tr_mul(a);
        m.gemm_tr(1.0, &t, &t, 1.0);
    }
    Ok(m)
}

/// `M_L = Σ_i A_i R Rᵀ A_iᵀ`, accumulated in sample order.
pub fn form_ml(dataset: &MatrixDataset, right: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(dataset, right, dataset.n2(), "R")?;
    let n1 = dataset.n1();
    let mut m = DMatrix::zeros(n1, n1);
    for a in dataset.samples() {
        let t = a * right;
        m.gemm(1.0, &t, &t.transpose(), 1.0);
    }
    Ok(m)
}

/// Leading `t` eigenvectors of a symmetric matrix, by descending eigenvalue,
/// largest-magnitude entry of each made positive.
pub fn top_eigvecs(s: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if t == 0 || t > s.nrows() {
        return Err(Error::InvalidArgument(format!(
            "cannot take {t} eigenvectors of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let (_, vectors) = sym_eigen_desc(s)?;
    Ok(vectors.columns(0, t).into_owned())
}

/// `D_i = Lᵀ A_i R` for every sample.
pub fn project_cores(dataset: &MatrixDataset, left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    check_rows(dataset, left, dataset.n1(), "L")?;
    check_rows(dataset, right, dataset.n2(), "R")?;
    Ok(dataset.samples().iter().map(|a| left.tr_mul(a) * right).collect())
}

fn min_form(dataset: &MatrixDataset, left: &DMatrix<f64>, right: &DMatrix<f64>) -> f64 {
    dataset
        .samples()
        .iter()
        .map(|a| {
            let d = left.tr_mul(a) * right;
            (a - left * d * right.transpose()).norm_squared()
        })
        .sum()
}

pub fn glram_fit(dataset: &MatrixDataset, config: &GlramConfig) -> Result<GlramModel> {
    config.validate(dataset.n1(), dataset.n2())?;
    let mut left = match config.init {
        GlramInit::IdentityBlock => DMatrix::identity(dataset.n1(), config.k1),
        GlramInit::RandomOrthonormal => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            random_orthonormal(&mut rng, dataset.n1(), config.k1)
        }
    };
    let mut right = DMatrix::zeros(dataset.n2(), config.k2);
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        right = top_eigvecs(&form_mr(dataset, &left)?, config.k2)?;
        left = top_eigvecs(&form_ml(dataset, &right)?, config.k1)?;
        let obj = min_form(dataset, &left, &right);
        if !obj.is_finite() {
            return Err(Error::NonFinite("GLRAM objective"));
        }
        iterations += 1;
        let prev = history.last().copied();
        history.push(obj);
        if obj == 0.0 {
            break;
        }
        if let Some(prev) = prev {
            let base = history[0].max(f64::MIN_POSITIVE);
            if (prev - obj) / base < config.tol {
                break;
            }
        }
    }
    let cores = project_cores(dataset, &left, &right)?;
    Ok(GlramModel {
        left,
        right,
        cores,
        objective_history: history,
        iterations,
    })
}

/// `(Σ‖A_i − L D_i Rᵀ‖², Σ‖Lᵀ A_i R‖²)` with `D_i = Lᵀ A_i R`.
pub fn glram_objective(dataset: &MatrixDataset, left: &DMatrix<f64>, right: &DMatrix<f64>) -> Result<(f64, f64)> {
    let cores = project_cores(dataset, left, right)?;
    let mut min_form = 0.0;
    let mut max_form = 0.0;
    for (a, d) in dataset.samples().iter().zip(&cores) {
        max_form += d.norm_squared();
        min_form += (a - left * d * right.transpose()).norm_squared();
    }
    Ok((min_form, max_form))
}

pub fn glram_project(model: &GlramModel, dataset: &MatrixDataset) -> Result<Vec<DMatrix<f64>>> {
    project_cores(dataset, &model.left, &model.right)
}

pub fn glram_reconstruct(model: &GlramModel, cores: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let (k1, k2) = (model.left.ncols(), model.right.ncols());
    cores
        .iter()
        .map(|d| {
            if d.shape() != (k1, k2) {
                return Err(Error::Shape(format!(
                    "core is {}x{}, model expects {k1}x{k2}",
                    d.nrows(),
                    d.ncols()
                )));
            }
            Ok(&model.left * d * model.right.transpose())
        })
        .collect()
}

//! Truncated SVD of vectorized samples (PCA when centered).

use nalgebra::{DMatrix, DVector};

use crate::dataset::MatrixDataset;
use crate::error::{Error, Result};
use crate::kronecker::vec;
use crate::linalg::apply_sign_gauge;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    pub n1: usize,
    pub n2: usize,
    /// `n × d` with orthonormal columns, `n = n1·n2`.
    pub w: DMatrix<f64>,
    /// Mean vectorized sample; present iff the fit was centered.
    pub mean: Option<DVector<f64>>,
    /// Leading `d` singular values, descending.
    pub singular_values: Vec<f64>,
    /// Every singular value of the data matrix, descending.
    pub spectrum: Vec<f64>,
}

impl SvdModel {
    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    /// Eckart–Young error of the fit: `Σ_{i>d} σ_i²`.
    pub fn tail_energy(&self) -> f64 {
        self.spectrum.iter().skip(self.d()).map(|s| s * s).sum()
    }

    /// Keep the leading `d` directions.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.d() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a rank-{} model to {d}",
                self.d()
            )));
        }
        Ok(Self {
            w: self.w.columns(0, d).into_owned(),
            singular_values: self.singular_values[..d].to_vec(),
            ..self.clone()
        })
    }
}

/// Columns are the (optionally centered) vectorized samples.
fn data_matrix(dataset: &MatrixDataset, mean: Option<&DVector<f64>>) -> DMatrix<f64> {
    let n = dataset.n1() * dataset.n2();
    let mut x = DMatrix::zeros(n, dataset.len());
    for (i, a) in dataset.samples().iter().enumerate() {
        let mut col = vec(a);
        if let Some(mu) = mean {
            col -= mu;
        }
        x.set_column(i, &col);
    }
    x
}

fn mean_vector(dataset: &MatrixDataset) -> DVector<f64> {
    let n = dataset.n1() * dataset.n2();
    let mut mu = DVector::zeros(n);
    for a in dataset.samples() {
        mu += vec(a);
    }
    mu / dataset.len() as f64
}

/// Top-`d` left singular vectors of the `n × N` data matrix.
pub fn svd_fit(dataset: &MatrixDataset, d: usize, centered: bool) -> Result<SvdModel> {
    let n = dataset.n1() * dataset.n2();
    let limit = n.min(dataset.len());
    if d == 0 || d > limit {
        return Err(Error::InvalidArgument(format!(
            "d must lie in 1..={limit} (min of {n} features and {} samples), got {d}",
            dataset.len()
        )));
    }
    let mean = centered.then(|| mean_vector(dataset));
    let x = data_matrix(dataset, mean.as_ref());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVD input"));
    }
    let svd = x.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut w = DMatrix::zeros(n, d);
    for (dst, &src) in order.iter().take(d).enumerate() {
        w.set_column(dst, &u.column(src));
        apply_sign_gauge(w.column_mut(dst));
    }
    Ok(SvdModel {
        n1: dataset.n1(),
        n2: dataset.n2(),
        w,
        mean,
        singular_values: spectrum[..d].to_vec(),
        spectrum,
    })
}

fn check_shape(model: &SvdModel, dataset: &MatrixDataset) -> Result<()> {
    if (dataset.n1(), dataset.n2()) != (model.n1, model.n2) {
        return Err(Error::Shape(format!(
            "model expects {}x{} samples, got {}x{}",
            model.n1,
            model.n2,
            dataset.n1(),
            dataset.n2()
        )));
    }
    Ok(())
}

/// `y_i = Wᵀ (vec(A_i) − μ)`.
pub fn svd_project(model: &SvdModel, dataset: &MatrixDataset) -> Result<Vec<DVector<f64>>> {
    check_shape(model, dataset)?;
    Ok(dataset
        .samples()
        .iter()
        .map(|a| {
            let mut x = vec(a);
            if let Some(mu) = &model.mean {
                x -= mu;
            }
            model.w.tr_mul(&x)
        })
        .collect())
}

/// `Â_i = unvec(W y_i + μ)`.
pub fn svd_reconstruct(model: &SvdModel, projected: &[DVector<f64>]) -> Result<Vec<DMatrix<f64>>> {
    projected
        .iter()
        .map(|y| {
            if y.len() != model.d() {
                return Err(Error::Shape(format!(
                    "projection has length {}, model has d = {}",
                    y.len(),
                    model.d()
                )));
            }
            let mut x = &model.w * y;
            if let Some(mu) = &model.mean {
                x += mu;
            }
            Ok(DMatrix::from_column_slice(model.n1, model.n2, x.as_slice()))
        })
        .collect()
}

/// `Σ_i ‖A_i − Â_i‖_F²`, recomputed from the data.
pub fn svd_reconstruction_error(model: &SvdModel, dataset: &MatrixDataset) -> Result<f64> {
    let rec = svd_reconstruct(model, &svd_project(model, dataset)?)?;
    Ok(dataset
        .samples()
        .iter()
        .zip(&rec)
        .map(|(a, b)| (a - b).norm_squared())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, orthonormality_defect, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, n: usize, n1: usize, n2: usize) -> MatrixDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixDataset::new((0..n).map(|_| gaussian_matrix(&mut rng, n1, n2, 1.0)).collect()).unwrap()
    }

    #[test]
    fn two_axis_samples() {
        let a = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 0.0]);
        let ds = MatrixDataset::new(vec![a, b]).unwrap();
        let m = svd_fit(&ds, 1, false).unwrap();
        assert_eq!(m.w.column(0).as_slice(), &[1.0, 0.0, 0.0]);
        assert!((m.tail_energy() - 4.0).abs() < 1e-12);
        assert!((svd_reconstruction_error(&m, &ds).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_is_exact_and_range_checked() {
        let ds = random_dataset(1, 5, 3, 4);
        let m = svd_fit(&ds, 5, false).unwrap();
        assert!(svd_reconstruction_error(&m, &ds).unwrap() < 1e-20);
        assert!(svd_fit(&ds, 6, false).is_err());
        assert!(svd_fit(&ds, 0, false).is_err());
    }

    #[test]
    fn error_matches_tail_energy() {
        let ds = random_dataset(2, 30, 4, 5);
        let x = data_matrix(&ds, None);
        let mut sv: Vec<f64> = x.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for d in [1, 4, 9] {
            let m = svd_fit(&ds, d, false).unwrap();
            let tail: f64 = sv[d..].iter().map(|s| s * s).sum();
            let err = svd_reconstruction_error(&m, &ds).unwrap();
            assert!((err - tail).abs() <= 1e-8 * tail);
            assert!(orthonormality_defect(&m.w) <= 1e-10);
            assert!(m.singular_values.windows(2).all(|p| p[0] >= p[1] && p[1] >= 0.0));
        }
    }

    #[test]
    fn centered_fixed_point_and_span() {
        let ds = random_dataset(3, 10, 3, 3);
        let m = svd_fit(&ds, 3, true).unwrap();
        let mu = m.mean.clone().unwrap();
        let mean_sample = MatrixDataset::new(vec![DMatrix::from_column_slice(3, 3, mu.as_slice())]).unwrap();
        let y = svd_project(&m, &mean_sample).unwrap();
        assert!(y[0].norm() < 1e-12);

        let inside = &m.w * DVector::from_vec(vec![1.0, -2.0, 0.5]) + &mu;
        let inside = MatrixDataset::new(vec![DMatrix::from_column_slice(3, 3, inside.as_slice())]).unwrap();
        assert!(svd_reconstruction_error(&m, &inside).unwrap() < 1e-20);
    }

    #[test]
    fn projection_contracts_and_is_idempotent() {
        let ds = random_dataset(4, 12, 4, 4);
        let m = svd_fit(&ds, 5, false).unwrap();
        let y = svd_project(&m, &ds).unwrap();
        for (a, yi) in ds.samples().iter().zip(&y) {
            assert!((&m.w * yi).norm() <= vec(a).norm() + 1e-12);
        }
        let rec = ds.with_samples(svd_reconstruct(&m, &y).unwrap()).unwrap();
        let y2 = svd_project(&m, &rec).unwrap();
        for (p, q) in y.iter().zip(&y2) {
            assert!((p - q).norm() < 1e-12);
        }
        let zero = svd_reconstruct(&m, &[DVector::zeros(5)]).unwrap();
        assert_eq!(zero[0], DMatrix::zeros(4, 4));
    }

    #[test]
    fn beats_random_competitors() {
        let ds = random_dataset(5, 20, 3, 4);
        let m = svd_fit(&ds, 4, false).unwrap();
        let fitted = m.tail_energy();
        let x = data_matrix(&ds, None);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..100 {
            let w = random_orthonormal(&mut rng, 12, 4);
            let err = (&x - &w * w.tr_mul(&x)).norm_squared();
            assert!(err >= fitted - 1e-9);
        }
    }

    #[test]
    fn truncation_agrees_with_direct_fit() {
        let ds = random_dataset(6, 15, 3, 4);
        let big = svd_fit(&ds, 8, false).unwrap();
        let small = svd_fit(&ds, 3, false).unwrap();
        let t = big.truncated(3).unwrap();
        assert!((&t.w - &small.w).norm() < 1e-10);
        assert!((t.tail_energy() - small.tail_energy()).abs() < 1e-10);
    }
}

//! Self-describing JSON persistence for fitted reducers.
//!
//! Factor matrices are stored as row-major number lists; floats are written
//! in shortest round-trip form, so a save/load cycle is bit exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MethodKind, Reducer};
use crate::glram::GlramModel;
use crate::kronecker::{KronPair, KronPairList};
use crate::mpglram::{MpglramConfig, MpglramModel};
use crate::svd_baseline::SvdModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
    pub k_pairs: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPair {
    /// `n1 × k1`, row-major.
    pub l: Vec<f64>,
    /// `n2 × k2`, row-major.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub method: String,
    pub dims: ModelDims,
    pub centered: bool,
    /// `(n1 n2) × d`, row-major; SVD only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<StoredPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// Fingerprint of the training dataset, 16 hex digits.
    pub fingerprint: String,
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::ModelFile(format!(
            "{what} has {} entries, dims require {rows}x{cols}",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn store_pairs(pairs: &KronPairList) -> Vec<StoredPair> {
    pairs
        .pairs()
        .iter()
        .map(|p| StoredPair {
            l: to_row_major(&p.left),
            r: to_row_major(&p.right),
        })
        .collect()
}

impl ModelFile {
    fn blank(method: MethodKind, dims: ModelDims, seed: u64, fingerprint: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method: method.name().into(),
            dims,
            centered: false,
            w: None,
            mean: None,
            singular_values: None,
            spectrum: None,
            pairs: Vec::new(),
            objective_history: Vec::new(),
            iterations: 0,
            seed,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn from_svd(model: &SvdModel, seed: u64, fingerprint: &str) -> Self {
        let dims = ModelDims {
            n1: model.n1,
            n2: model.n2,
            k1: 0,
            k2: 0,
            k_pairs: 0,
            d: model.d(),
        };
        Self {
            centered: model.mean.is_some(),
            w: Some(to_row_major(&model.w)),
            mean: model.mean.as_ref().map(|m| m.as_slice().to_vec()),
            singular_values: Some(model.singular_values.clone()),
            spectrum: Some(model.spectrum.clone()),
            ..Self::blank(MethodKind::Svd, dims, seed, fingerprint)
        }
    }

    pub fn from_glram(model: &GlramModel, seed: u64, fingerprint: &str) -> Self {
        let dims = ModelDims {
            n1: model.left.nrows(),
            n2: model.right.nrows(),
            k1: model.left.ncols(),
            k2: model.right.ncols(),
            k_pairs: 1,
            d: 0,
        };
        Self {
            pairs: vec![StoredPair {
                l: to_row_major(&model.left),
                r: to_row_major(&model.right),
            }],
            objective_history: model.objective_history.clone(),
            iterations: model.iterations,
            ..Self::blank(MethodKind::Glram, dims, seed, fingerprint)
        }
    }

    /// A pair list on its own, stored under the `mpglram` tag.
    pub fn from_pairs(pairs: &KronPairList, objective_history: Vec<f64>, iterations: usize, seed: u64, fingerprint: &str) -> Self {
        let (n1, n2, k1, k2) = pairs.dims();
        let dims = ModelDims {
            n1,
            n2,
            k1,
            k2,
            k_pairs: pairs.len(),
            d: 0,
        };
        Self {
            pairs: store_pairs(pairs),
            objective_history,
            iterations,
            ..Self::blank(MethodKind::Mpglram, dims, seed, fingerprint)
        }
    }

    pub fn from_mpglram(model: &MpglramModel, fingerprint: &str) -> Self {
        Self::from_pairs(
            &model.pairs,
            model.objective_history.clone(),
            model.sweeps,
            model.config.seed,
            fingerprint,
        )
    }

    pub fn method_kind(&self) -> Result<MethodKind> {
        self.method
            .parse()
            .map_err(|_| Error::ModelFile(format!("unknown method tag {:?}", self.method)))
    }

    /// Check that every array matches the declared dims.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.fingerprint.len() != 16 || !self.fingerprint.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::ModelFile("fingerprint must be 16 hex digits".into()));
        }
        let ModelDims { n1, n2, k1, k2, k_pairs, d } = self.dims;
        if n1 == 0 || n2 == 0 {
            return Err(Error::ModelFile("n1 and n2 must be positive".into()));
        }
        match self.method_kind()? {
            MethodKind::Svd => {
                let n = n1 * n2;
                if d == 0 || d > n {
                    return Err(Error::ModelFile(format!("svd d = {d} outside 1..={n}")));
                }
                let w = self.w.as_ref().ok_or_else(|| Error::ModelFile("svd model without w".into()))?;
                from_row_major(n, d, w, "w")?;
                if self.centered != self.mean.is_some() {
                    return Err(Error::ModelFile("centered flag and mean disagree".into()));
                }
                if let Some(mu) = &self.mean {
                    if mu.len() != n {
                        return Err(Error::ModelFile(format!("mean has {} entries, expected {n}", mu.len())));
                    }
                }
                let sv = self.singular_values.as_deref().unwrap_or(&[]);
                if sv.len() != d {
                    return Err(Error::ModelFile(format!("{} singular values for d = {d}", sv.len())));
                }
                if self.spectrum.as_ref().is_some_and(|s| s.len() < d) {
                    return Err(Error::ModelFile("spectrum shorter than d".into()));
                }
            }
            MethodKind::Glram | MethodKind::Mpglram => {
                if k1 == 0 || k2 == 0 || k1 > n1 || k2 > n2 {
                    return Err(Error::ModelFile(format!("core dims {k1}x{k2} invalid for {n1}x{n2}")));
                }
                if k_pairs == 0 || self.pairs.len() != k_pairs {
                    return Err(Error::ModelFile(format!(
                        "{} stored pairs, k_pairs = {k_pairs}",
                        self.pairs.len()
                    )));
                }
                if self.method_kind()? == MethodKind::Glram && k_pairs != 1 {
                    return Err(Error::ModelFile("a glram model has exactly one pair".into()));
                }
                for (j, p) in self.pairs.iter().enumerate() {
                    from_row_major(n1, k1, &p.l, &format!("pair {j} l"))?;
                    from_row_major(n2, k2, &p.r, &format!("pair {j} r"))?;
                }
            }
        }
        Ok(())
    }

    pub fn pair_list(&self) -> Result<KronPairList> {
        let ModelDims { n1, n2, k1, k2, .. } = self.dims;
        if self.pairs.is_empty() {
            return Err(Error::ModelFile(format!("{} model stores no pairs", self.method)));
        }
        let pairs = self
            .pairs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                Ok(KronPair::new(
                    from_row_major(n1, k1, &p.l, &format!("pair {j} l"))?,
                    from_row_major(n2, k2, &p.r, &format!("pair {j} r"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        KronPairList::new(pairs)
    }

    pub fn svd_model(&self) -> Result<SvdModel> {
        if self.method_kind()? != MethodKind::Svd {
            return Err(Error::ModelFile(format!("expected an svd model, found {}", self.method)));
        }
        let ModelDims { n1, n2, d, .. } = self.dims;
        let w = from_row_major(n1 * n2, d, self.w.as_deref().unwrap_or(&[]), "w")?;
        let singular_values = self.singular_values.clone().unwrap_or_default();
        Ok(SvdModel {
            n1,
            n2,
            w,
            mean: self.mean.as_ref().map(|m| DVector::from_column_slice(m)),
            spectrum: self.spectrum.clone().unwrap_or_else(|| singular_values.clone()),
            singular_values,
        })
    }

    /// Rebuild a reducer; cores are recomputed from data when needed.
    pub fn reducer(&self) -> Result<Reducer> {
        self.validate()?;
        Ok(match self.method_kind()? {
            MethodKind::Svd => Reducer::Svd(self.svd_model()?),
            MethodKind::Glram => {
                let pair = self.pair_list()?.into_pairs().remove(0);
                Reducer::Glram(GlramModel {
                    left: pair.left,
                    right: pair.right,
                    cores: Vec::new(),
                    objective_history: self.objective_history.clone(),
                    iterations: self.iterations,
                })
            }
            MethodKind::Mpglram => {
                let pairs = self.pair_list()?;
                let mut config = MpglramConfig::new(pairs.len(), self.dims.k1, self.dims.k2);
                config.seed = self.seed;
                Reducer::Mpglram(MpglramModel {
                    pairs,
                    cores: Vec::new(),
                    objective_history: self.objective_history.clone(),
                    sweeps: self.iterations,
                    config,
                })
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MatrixDataset;
    use crate::glram::{glram_fit, GlramConfig};
    use crate::linalg::gaussian_matrix;
    use crate::svd_baseline::svd_fit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data() -> MatrixDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        MatrixDataset::new((0..6).map(|_| gaussian_matrix(&mut rng, 4, 3, 1.0)).collect()).unwrap()
    }

    #[test]
    fn row_major_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(to_row_major(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_row_major(2, 3, &to_row_major(&m), "m").unwrap(), m);
        assert!(from_row_major(2, 2, &[1.0], "m").is_err());
    }

    #[test]
    fn svd_round_trip_is_exact() {
        let ds = data();
        let m = svd_fit(&ds, 3, true).unwrap();
        let file = ModelFile::from_svd(&m, 5, "00112233aabbccdd");
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.svd_model().unwrap(), m);
    }

    #[test]
    fn glram_round_trip_and_reducer() {
        let ds = data();
        let m = glram_fit(&ds, &GlramConfig::new(2, 2)).unwrap();
        let file = ModelFile::from_glram(&m, 0, "0000000000000001");
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        match back.reducer().unwrap() {
            Reducer::Glram(g) => {
                assert_eq!(g.left, m.left);
                assert_eq!(g.right, m.right);
            }
            other => panic!("unexpected reducer {other:?}"),
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let ds = data();
        let m = glram_fit(&ds, &GlramConfig::new(2, 2)).unwrap();
        let mut file = ModelFile::from_glram(&m, 0, "0000000000000001");
        file.pairs[0].l.pop();
        assert!(matches!(ModelFile::from_json(&file.to_json().unwrap()), Err(Error::ModelFile(_))));
        let mut file = ModelFile::from_glram(&m, 0, "0000000000000001");
        file.fingerprint.clear();
        assert!(file.validate().is_err());
        assert!(ModelFile::from_json("{\"schema_version\": 1}").is_err());
    }
}

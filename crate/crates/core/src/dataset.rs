//! Labeled collections of equally sized matrices: construction, MDS1 and PGM
//! I/O, centering, stratified folds and a seeded synthetic generator.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kronecker::{apply_pairs, KronPair, KronPairList};
use crate::linalg::{gaussian_matrix, random_orthonormal};

pub const MDS1_MAGIC: &[u8; 4] = b"MDS1";

/// `N` real `n1 × n2` matrices with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDataset {
    n1: usize,
    n2: usize,
    samples: Vec<DMatrix<f64>>,
    labels: Option<Vec<u32>>,
    class_count: Option<u32>,
}

impl MatrixDataset {
    /// Unlabeled dataset. All samples must share one non-empty shape.
    pub fn new(samples: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::build(samples, None, None)
    }

    pub fn with_labels(samples: Vec<DMatrix<f64>>, labels: Vec<u32>, class_count: u32) -> Result<Self> {
        Self::build(samples, Some(labels), Some(class_count))
    }

    fn build(samples: Vec<DMatrix<f64>>, labels: Option<Vec<u32>>, class_count: Option<u32>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("a dataset needs at least one sample".into()))?;
        let (n1, n2) = first.shape();
        if n1 == 0 || n2 == 0 {
            return Err(Error::Shape("samples must have at least one row and column".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::Shape(format!(
                    "sample {i} is {}x{}, expected {n1}x{n2}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        if let Some(labels) = &labels {
            let cc = class_count.unwrap_or(0);
            if labels.len() != samples.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    samples.len()
                )));
            }
            if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= cc) {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    class_count: cc,
                });
            }
        }
        Ok(Self {
            n1,
            n2,
            samples,
            labels,
            class_count,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; datasets hold at least one sample.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> Option<u32> {
        self.class_count
    }

    pub fn total_energy(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_squared()).sum()
    }

    /// Same labels and class count, new samples of the same shape.
    pub fn with_samples(&self, samples: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::build(samples, self.labels.clone(), self.class_count)
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("sample index {bad} out of range")));
        }
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::build(samples, labels, self.class_count)
    }

    /// The samples transposed (`n2 × n1`), labels kept.
    pub fn transposed(&self) -> Self {
        Self {
            n1: self.n2,
            n2: self.n1,
            samples: self.samples.iter().map(|s| s.transpose()).collect(),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }

    /// Bit-exact MDS1 encoding.
    pub fn to_mds1_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(17 + 4 * n + 8 * n * self.n1 * self.n2);
        out.extend_from_slice(MDS1_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.n1 as u32).to_le_bytes());
        out.extend_from_slice(&(self.n2 as u32).to_le_bytes());
        match &self.labels {
            Some(labels) => {
                out.push(1);
                out.extend_from_slice(&self.class_count.unwrap_or(0).to_le_bytes());
                for l in labels {
                    out.extend_from_slice(&l.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        for s in &self.samples {
            for r in 0..self.n1 {
                for c in 0..self.n2 {
                    out.extend_from_slice(&s[(r, c)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_mds1_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MDS1_MAGIC {
            return Err(Error::BadMagic { found: magic.to_vec() });
        }
        let n = cur.u32()? as usize;
        let n1 = cur.u32()? as usize;
        let n2 = cur.u32()? as usize;
        if n == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::Malformed(format!("zero dimension in header ({n}, {n1}, {n2})")));
        }
        let flag = cur.take(1)?[0];
        let (labels, class_count) = match flag {
            0 => (None, None),
            1 => {
                let cc = cur.u32()?;
                let mut labels = Vec::with_capacity(n.min(bytes.len() / 4));
                for index in 0..n {
                    let label = cur.u32()?;
                    if label >= cc {
                        return Err(Error::LabelOutOfRange {
                            index,
                            label,
                            class_count: cc,
                        });
                    }
                    labels.push(label);
                }
                (Some(labels), Some(cc))
            }
            other => return Err(Error::Malformed(format!("label flag must be 0 or 1, found {other}"))),
        };
        let per_sample = n1
            .checked_mul(n2)
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::Malformed("sample size overflows".into()))?;
        let mut samples = Vec::with_capacity(n.min(bytes.len() / per_sample.max(1)));
        for _ in 0..n {
            let raw = cur.take(per_sample)?;
            let mut m = DMatrix::zeros(n1, n2);
            for (k, chunk) in raw.chunks_exact(8).enumerate() {
                m[(k / n2, k % n2)] = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
            samples.push(m);
        }
        if cur.pos != bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after payload",
                bytes.len() - cur.pos
            )));
        }
        Self::build(samples, labels, class_count)
    }

    /// 64-bit fingerprint of the MDS1 encoding (leading bytes of its SHA-256).
    pub fn fingerprint(&self) -> u64 {
        fingerprint_bytes(&self.to_mds1_bytes())
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, needed: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(needed).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Truncated {
                offset: self.pos,
                needed,
                len: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn load_mds(path: impl AsRef<Path>) -> Result<MatrixDataset> {
    MatrixDataset::from_mds1_bytes(&fs::read(path)?)
}

pub fn save_mds(dataset: &MatrixDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&dataset.to_mds1_bytes())?;
    f.flush()?;
    Ok(())
}

/// How labels are derived from PGM file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelRule {
    /// Integer prefix before the first `_`, e.g. `12_left.pgm` → 12.
    #[default]
    PrefixBeforeUnderscore,
    Unlabeled,
}

/// Parse a binary (P5) or ASCII (P2) PGM into a matrix scaled to `[0, 1]`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    let err = |reason: String| Error::Pgm {
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos).ok_or_else(|| err("empty file".into()))?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(err(format!("unsupported magic {other:?}"))),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(&mut pos).ok_or_else(|| err(format!("missing {name}")))?;
        *slot = tok.parse().map_err(|_| err(format!("bad {name} {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(err("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| err(format!("raster truncated: need {need} bytes")))?;
        if wide {
            values.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize));
        } else {
            values.extend(raster.iter().map(|&b| b as usize));
        }
    } else {
        for k in 0..count {
            let tok = next_token(&mut pos).ok_or_else(|| err(format!("raster truncated at pixel {k}")))?;
            values.push(tok.parse().map_err(|_| err(format!("bad pixel {tok:?}")))?);
        }
    }
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(err(format!("pixel {v} exceeds maxval {maxval}")));
    }
    let scale = maxval as f64;
    Ok(DMatrix::from_fn(height, width, |r, c| values[r * width + c] as f64 / scale))
}

/// Write `m` (entries in `[0, 1]`) as a binary PGM with the given maxval.
pub fn save_pgm(m: &DMatrix<f64>, maxval: u16, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n{}\n", m.ncols(), m.nrows(), maxval).into_bytes();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = (m[(r, c)].clamp(0.0, 1.0) * maxval as f64).round() as u16;
            if maxval > 255 {
                out.extend_from_slice(&v.to_be_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load every `*.pgm` in `dir`, ordered by file name.
pub fn load_pgm_dir(dir: impl AsRef<Path>, rule: LabelRule) -> Result<MatrixDataset> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .pgm files in {}", dir.display())));
    }
    let mut samples = Vec::with_capacity(paths.len());
    let mut labels = Vec::with_capacity(paths.len());
    for path in &paths {
        let m = parse_pgm(&fs::read(path)?, path)?;
        if let Some(first) = samples.first() {
            let first: &DMatrix<f64> = first;
            if first.shape() != m.shape() {
                return Err(Error::Pgm {
                    path: path.clone(),
                    reason: format!(
                        "image is {}x{}, earlier images are {}x{}",
                        m.nrows(),
                        m.ncols(),
                        first.nrows(),
                        first.ncols()
                    ),
                });
            }
        }
        samples.push(m);
        if rule == LabelRule::PrefixBeforeUnderscore {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let prefix = name.split('_').next().unwrap_or_default();
            let label: u32 = match name.contains('_') {
                true => prefix.parse().ok(),
                false => None,
            }
            .ok_or_else(|| Error::Pgm {
                path: path.clone(),
                reason: format!("cannot parse a class label from {name:?}"),
            })?;
            labels.push(label);
        }
    }
    match rule {
        LabelRule::PrefixBeforeUnderscore => {
            let cc = labels.iter().max().copied().unwrap_or(0) + 1;
            MatrixDataset::with_labels(samples, labels, cc)
        }
        LabelRule::Unlabeled => MatrixDataset::new(samples),
    }
}

/// Subtract the elementwise mean sample. Returns the centered dataset and the mean.
pub fn center(dataset: &MatrixDataset) -> (MatrixDataset, DMatrix<f64>) {
    let n = dataset.len() as f64;
    let mut mean = DMatrix::zeros(dataset.n1, dataset.n2);
    for s in &dataset.samples {
        mean += s;
    }
    mean /= n;
    let samples = dataset.samples.iter().map(|s| s - &mean).collect();
    let centered = MatrixDataset {
        samples,
        ..dataset.clone()
    };
    (centered, mean)
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("fold count must be at least 2, got {k}")));
        }
        if let Some(bad) = assignment.iter().find(|&&f| f >= k) {
            return Err(Error::InvalidArgument(format!("fold index {bad} not below {k}")));
        }
        Ok(Self { k, assignment })
    }

    pub fn fold_count(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `(train, test)` sample indices for `fold`, each ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold split: each class is shuffled with the seeded RNG and
/// dealt round-robin, continuing from the fold where the previous class
/// stopped. Fold sizes differ by at most one, and so do per-class counts.
pub fn kfold_split(dataset: &MatrixDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::InvalidArgument("k-fold split needs labels".into()))?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} exceeds sample count {}",
            labels.len()
        )));
    }
    let classes = dataset.class_count().unwrap_or(0) as usize;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0usize;
    for mut group in members {
        group.shuffle(&mut rng);
        for i in group {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    FoldPlan::new(k, assignment)
}

/// Parameters of the seeded sum-of-pairs generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n1: usize,
    pub n2: usize,
    pub n: usize,
    /// Number of generating pairs `r`.
    pub kron_rank: usize,
    pub k1: usize,
    pub k2: usize,
    pub noise_sigma: f64,
    pub class_count: u32,
    /// Standard deviation of the per-class mean core entries (default 1).
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n1: 16,
            n2: 12,
            n: 50,
            kron_rank: 2,
            k1: 4,
            k2: 4,
            noise_sigma: 0.0,
            class_count: 5,
            class_separation: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n1 == 0 || self.n2 == 0 || self.n == 0 {
            return bad("n1, n2 and n must be positive");
        }
        if self.kron_rank == 0 {
            return bad("kron_rank must be at least 1");
        }
        if self.k1 == 0 || self.k2 == 0 || self.k1 > self.n1 || self.k2 > self.n2 {
            return bad("core dims must satisfy 1 <= k1 <= n1 and 1 <= k2 <= n2");
        }
        if self.class_count == 0 {
            return bad("class_count must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation must be finite and non-negative");
        }
        Ok(())
    }
}

/// Output of [`synth_kron`]: the dataset plus its generating factors.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: MatrixDataset,
    pub pairs: KronPairList,
    pub cores: Vec<DMatrix<f64>>,
}

/// `A_i = Σ_j L_j D_i R_jᵀ + noise`, with per-pair orthonormal factors and
/// `D_i = class mean + unit Gaussian`. Labels are dealt `i mod class_count`.
pub fn synth_kron(spec: &SyntheticSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pairs = (0..spec.kron_rank)
        .map(|_| {
            let l = random_orthonormal(&mut rng, spec.n1, spec.k1);
            let r = random_orthonormal(&mut rng, spec.n2, spec.k2);
            KronPair::new(l, r)
        })
        .collect();
    let pairs = KronPairList::new(pairs)?;
    let means: Vec<DMatrix<f64>> = (0..spec.class_count)
        .map(|_| gaussian_matrix(&mut rng, spec.k1, spec.k2, spec.class_separation))
        .collect();
    let labels: Vec<u32> = (0..spec.n).map(|i| (i % spec.class_count as usize) as u32).collect();
    let cores: Vec<DMatrix<f64>> = labels
        .iter()
        .map(|&l| &means[l as usize] + gaussian_matrix(&mut rng, spec.k1, spec.k2, 1.0))
        .collect();
    let mut samples = compose_samples(&pairs, &cores)?;
    if spec.noise_sigma > 0.0 {
        for s in &mut samples {
            *s += gaussian_matrix(&mut rng, spec.n1, spec.n2, spec.noise_sigma);
        }
    }
    let dataset = MatrixDataset::with_labels(samples, labels, spec.class_count)?;
    Ok(SynthOutput { dataset, pairs, cores })
}

/// Noise-free samples `Σ_j L_j D_i R_jᵀ` for the given cores.
pub fn compose_samples(pairs: &KronPairList, cores: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    cores.iter().map(|d| apply_pairs(pairs, d)).collect()
}

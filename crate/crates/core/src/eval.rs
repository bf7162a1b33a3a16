//! Reconstruction error, k-NN classification on reduced features, and the
//! k-fold experiment harness.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{fingerprint_bytes, kfold_split, FoldPlan, MatrixDataset};
use crate::error::{Error, Result};
use crate::glram::{glram_fit, glram_project, glram_reconstruct, GlramConfig, GlramModel};
use crate::kronecker::vec;
use crate::mpglram::{glram_pairs, mpglram_fit, mpglram_reconstruct, update_cores, MpglramConfig, MpglramInit, MpglramModel};
use crate::svd_baseline::{svd_fit, svd_project, svd_reconstruct, SvdModel};

/// Exact CSV header of emitted reports.
pub const CSV_HEADER: &str = "method,d,k_pairs,fold_count,fold_index,metric,value,seed,wall_time_ms";

/// `√((1/N) Σ_i ‖A_i − Â_i‖_F²)`.
pub fn rmsre(dataset: &MatrixDataset, reconstructed: &[DMatrix<f64>]) -> Result<f64> {
    if reconstructed.len() != dataset.len() {
        return Err(Error::Shape(format!(
            "{} reconstructions for {} samples",
            reconstructed.len(),
            dataset.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in dataset.samples().iter().zip(reconstructed) {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!("reconstruction is {:?}, sample is {:?}", b.shape(), a.shape())));
        }
        total += (a - b).norm_squared();
    }
    Ok((total / dataset.len() as f64).sqrt())
}

/// Majority vote among the `k` nearest training points (Euclidean).
///
/// Distance ties go to the lower training index; vote ties to the smaller
/// summed distance, then to the smaller label.
pub fn knn_classify(train: &[Vec<f64>], train_labels: &[u32], test: &[Vec<f64>], k: usize) -> Result<Vec<u32>> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("k-NN needs a non-empty training set".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k-NN needs k >= 1".into()));
    }
    if train.len() != train_labels.len() {
        return Err(Error::Shape(format!("{} training points, {} labels", train.len(), train_labels.len())));
    }
    let dim = train[0].len();
    if train.iter().chain(test).any(|x| x.len() != dim) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    let predict = |x: &Vec<f64>| {
        let mut dist: Vec<(f64, usize)> = train
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let d2: f64 = t.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
        for &(d, i) in dist.iter().take(k) {
            let e = votes.entry(train_labels[i]).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        votes
            .into_iter()
            .min_by(|(la, (ca, sa)), (lb, (cb, sb))| cb.cmp(ca).then(sa.total_cmp(sb)).then(la.cmp(lb)))
            .map(|(label, _)| label)
            .expect("k >= 1 and training set non-empty")
    };
    Ok(test.iter().map(predict).collect())
}

fn accuracy_percent(predicted: &[u32], truth: &[u32]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    100.0 * hits as f64 / truth.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    Svd,
    Glram,
    Mpglram,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Svd => "svd",
            MethodKind::Glram => "glram",
            MethodKind::Mpglram => "mpglram",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svd" => Ok(MethodKind::Svd),
            "glram" => Ok(MethodKind::Glram),
            "mpglram" => Ok(MethodKind::Mpglram),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Fitting settings shared by every cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Center before the SVD baseline.
    pub centered: bool,
    pub glram_max_iter: usize,
    pub glram_tol: f64,
    pub mpglram_sweeps: usize,
    pub mpglram_tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            centered: false,
            glram_max_iter: 100,
            glram_tol: 1e-6,
            mpglram_sweeps: 100,
            mpglram_tol: 1e-6,
            seed: 0,
        }
    }
}

/// A fitted reducer of any kind.
#[derive(Debug, Clone)]
pub enum Reducer {
    Svd(SvdModel),
    Glram(GlramModel),
    Mpglram(MpglramModel),
}

impl Reducer {
    /// Reduced features: `y_i` for SVD, `vec(D_i)` otherwise.
    pub fn features(&self, dataset: &MatrixDataset) -> Result<Vec<Vec<f64>>> {
        Ok(match self {
            Reducer::Svd(m) => svd_project(m, dataset)?.into_iter().map(|y| y.as_slice().to_vec()).collect(),
            Reducer::Glram(m) => glram_project(m, dataset)?.iter().map(|d| vec(d).as_slice().to_vec()).collect(),
            Reducer::Mpglram(m) => update_cores(dataset, &m.pairs, m.config.solve)?
                .iter()
                .map(|d| vec(d).as_slice().to_vec())
                .collect(),
        })
    }

    /// Project then reconstruct every sample.
    pub fn reconstruct(&self, dataset: &MatrixDataset) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Reducer::Svd(m) => svd_reconstruct(m, &svd_project(m, dataset)?),
            Reducer::Glram(m) => glram_reconstruct(m, &glram_project(m, dataset)?),
            Reducer::Mpglram(m) => mpglram_reconstruct(&m.pairs, &update_cores(dataset, &m.pairs, m.config.solve)?),
        }
    }

    /// Hash of the fitted factors, for reproducibility and leakage checks.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        let mut push = |m: &DMatrix<f64>| {
            for v in m.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        };
        match self {
            Reducer::Svd(m) => {
                push(&m.w);
                if let Some(mu) = &m.mean {
                    push(&DMatrix::from_column_slice(mu.len(), 1, mu.as_slice()));
                }
            }
            Reducer::Glram(m) => {
                push(&m.left);
                push(&m.right);
            }
            Reducer::Mpglram(m) => {
                for p in m.pairs.pairs() {
                    push(&p.left);
                    push(&p.right);
                }
            }
        }
        fingerprint_bytes(&bytes)
    }
}

/// One reducer configuration: `d` is the per-mode size, so SVD keeps `d²`
/// directions and the matrix methods reduce to `d × d` cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellKey {
    pub method: MethodKind,
    pub d: usize,
    /// 0 for SVD, 1 for GLRAM, `k` for MPGLRAM.
    pub k_pairs: usize,
}

struct FittedCell {
    key: CellKey,
    reducer: Result<Reducer>,
    elapsed_ms: u64,
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Fit every requested cell for one training set and one `d`. MPGLRAM
/// models are chained over the ascending `k_grid`: the first starts from the
/// GLRAM pair, each later one from its predecessor.
fn fit_cells(
    train: &MatrixDataset,
    d: usize,
    methods: &[MethodKind],
    k_grid: &[usize],
    opts: &FitOptions,
    svd_full: Option<&Result<SvdModel>>,
) -> Vec<FittedCell> {
    let mut out = Vec::new();
    if methods.contains(&MethodKind::Svd) {
        let start = Instant::now();
        let reducer = match svd_full {
            Some(Ok(full)) if d * d <= full.d() => full.truncated(d * d).map(Reducer::Svd),
            _ => svd_fit(train, d * d, opts.centered).map(Reducer::Svd),
        };
        out.push(FittedCell {
            key: CellKey {
                method: MethodKind::Svd,
                d,
                k_pairs: 0,
            },
            reducer,
            elapsed_ms: elapsed_ms(start),
        });
    }
    let want_glram = methods.contains(&MethodKind::Glram);
    let want_mp = methods.contains(&MethodKind::Mpglram);
    if !want_glram && !want_mp {
        return out;
    }
    let start = Instant::now();
    let glram = glram_fit(
        train,
        &GlramConfig {
            max_iter: opts.glram_max_iter,
            tol: opts.glram_tol,
            seed: opts.seed,
            ..GlramConfig::new(d, d)
        },
    );
    let glram_ms = elapsed_ms(start);
    if want_glram {
        out.push(FittedCell {
            key: CellKey {
                method: MethodKind::Glram,
                d,
                k_pairs: 1,
            },
            reducer: match &glram {
                Ok(m) => Ok(Reducer::Glram(m.clone())),
                Err(e) => Err(Error::InvalidArgument(format!("GLRAM fit failed: {e}"))),
            },
            elapsed_ms: glram_ms,
        });
    }
    if want_mp {
        let mut ks = k_grid.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let mut warm = glram.as_ref().ok().map(glram_pairs).transpose().ok().flatten();
        for k in ks {
            let start = Instant::now();
            let reducer = match warm.take() {
                Some(pairs) => mpglram_fit(
                    train,
                    &MpglramConfig {
                        outer_iters: opts.mpglram_sweeps,
                        tol: opts.mpglram_tol,
                        seed: opts.seed,
                        init: MpglramInit::Warm(pairs),
                        ..MpglramConfig::new(k, d, d)
                    },
                ),
                None => Err(Error::InvalidArgument("no warm start available (earlier fit failed)".into())),
            };
            if let Ok(m) = &reducer {
                warm = Some(m.pairs.clone());
            }
            out.push(FittedCell {
                key: CellKey {
                    method: MethodKind::Mpglram,
                    d,
                    k_pairs: k,
                },
                reducer: reducer.map(Reducer::Mpglram),
                elapsed_ms: elapsed_ms(start) + glram_ms,
            });
        }
    }
    // keep cells in the caller's method order
    out.sort_by_key(|c| methods.iter().position(|&m| m == c.key.method).unwrap_or(usize::MAX));
    out
}

/// One emitted row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub method: String,
    pub d: usize,
    pub k_pairs: usize,
    /// 0 for records computed on the whole dataset.
    pub fold_count: usize,
    /// -1 marks an aggregate row.
    pub fold_index: i64,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub wall_time_ms: u64,
}

/// Fingerprint of a fitted reducer, kept for reproducibility checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitTrace {
    pub key: CellKey,
    pub fold_count: usize,
    pub fold_index: usize,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub aggregate: String,
    pub classifier: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub records: Vec<EvalRecord>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub fits: Vec<FitTrace>,
}

/// Metric name for `k`-NN accuracy; plain `accuracy` for 1-NN.
pub fn accuracy_metric(k: usize) -> String {
    if k == 1 {
        "accuracy".to_string()
    } else {
        format!("accuracy_{k}nn")
    }
}

impl EvalReport {
    fn new(seed: u64) -> Self {
        Self {
            metadata: ReportMetadata {
                aggregate: "mean over folds of a single cross-validation run".into(),
                classifier: "k-nearest neighbours, Euclidean".into(),
                seed,
            },
            records: Vec::new(),
            warnings: Vec::new(),
            fits: Vec::new(),
        }
    }

    /// Records as emitted: accuracies rounded to two decimals.
    pub fn emitted_records(&self) -> Vec<EvalRecord> {
        self.records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.metric.starts_with("accuracy") {
                    r.value = (r.value * 100.0).round() / 100.0;
                }
                r
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
        for r in self.emitted_records() {
            w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        if self.records.is_empty() {
            buf.extend_from_slice(CSV_HEADER.as_bytes());
            buf.push(b'\n');
        } else {
            self.write_csv(&mut buf)?;
        }
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let emitted = EvalReport {
            records: self.emitted_records(),
            ..self.clone()
        };
        Ok(serde_json::to_string_pretty(&emitted)?)
    }

    /// Aggregate value of one cell and metric, if present.
    pub fn aggregate(&self, method: MethodKind, d: usize, k_pairs: usize, fold_count: usize, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| {
                r.method == method.name()
                    && r.d == d
                    && r.k_pairs == k_pairs
                    && r.fold_count == fold_count
                    && r.fold_index == -1
                    && r.metric == metric
            })
            .map(|r| r.value)
    }
}

struct FoldOutcome {
    fold: usize,
    // (key, metric, value, elapsed)
    cells: Vec<(CellKey, String, f64, u64)>,
    traces: Vec<FitTrace>,
    warnings: Vec<String>,
}

fn evaluate_fold(
    dataset: &MatrixDataset,
    plan: &FoldPlan,
    fold: usize,
    cells: &CellGrid<'_>,
) -> Result<FoldOutcome> {
    let (train_idx, test_idx) = plan.split(fold);
    let k_count = plan.fold_count();
    let mut outcome = FoldOutcome {
        fold,
        cells: Vec::new(),
        traces: Vec::new(),
        warnings: Vec::new(),
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        outcome
            .warnings
            .push(format!("{k_count}-fold split: fold {fold} has an empty train or test side"));
        return Ok(outcome);
    }
    let train = dataset.subset(&train_idx)?;
    let test = dataset.subset(&test_idx)?;
    let train_labels = train.labels().expect("cross-validation requires labels");
    let test_labels = test.labels().expect("cross-validation requires labels");
    let unseen: Vec<u32> = {
        let mut u: Vec<u32> = test_labels.iter().filter(|l| !train_labels.contains(l)).copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    if !unseen.is_empty() {
        outcome.warnings.push(format!(
            "{k_count}-fold split, fold {fold}: test classes {unseen:?} absent from training"
        ));
    }
    let svd_full = cells.methods.contains(&MethodKind::Svd).then(|| {
        let max_d = cells.d_grid.iter().map(|d| d * d).max().unwrap_or(1);
        let limit = (train.n1() * train.n2()).min(train.len());
        svd_fit(&train, max_d.min(limit), cells.opts.centered)
    });
    for &d in cells.d_grid {
        for cell in fit_cells(&train, d, cells.methods, cells.k_grid, cells.opts, svd_full.as_ref()) {
            let classified = cell.reducer.and_then(|reducer| {
                let start = Instant::now();
                let train_f = reducer.features(&train)?;
                let test_f = reducer.features(&test)?;
                let mut accs = Vec::with_capacity(cells.knn.len());
                for &k in cells.knn {
                    let pred = knn_classify(&train_f, train_labels, &test_f, k)?;
                    accs.push(accuracy_percent(&pred, test_labels));
                }
                Ok((reducer.fingerprint(), accs, elapsed_ms(start)))
            });
            match classified {
                Ok((fp, accs, ms)) => {
                    outcome.traces.push(FitTrace {
                        key: cell.key,
                        fold_count: k_count,
                        fold_index: fold,
                        fingerprint: fp,
                    });
                    for (&k, acc) in cells.knn.iter().zip(accs) {
                        outcome.cells.push((cell.key, accuracy_metric(k), acc, cell.elapsed_ms + ms));
                    }
                }
                Err(e) => {
                    outcome.warnings.push(format!(
                        "{k_count}-fold split, fold {fold}: {} d={} k={} failed: {e}",
                        cell.key.method, cell.key.d, cell.key.k_pairs
                    ));
                    for &k in cells.knn {
                        outcome.cells.push((cell.key, accuracy_metric(k), f64::NAN, cell.elapsed_ms));
                    }
                }
            }
        }
    }
    Ok(outcome)
}

struct CellGrid<'a> {
    methods: &'a [MethodKind],
    d_grid: &'a [usize],
    k_grid: &'a [usize],
    knn: &'a [usize],
    opts: &'a FitOptions,
}

fn cross_validate_grid(
    dataset: &MatrixDataset,
    plan: &FoldPlan,
    grid: &CellGrid<'_>,
    seed: u64,
    record_time: bool,
    report: &mut EvalReport,
) -> Result<()> {
    if dataset.labels().is_none() {
        return Err(Error::InvalidArgument("cross-validation needs labels".into()));
    }
    let outcomes: Vec<FoldOutcome> = (0..plan.fold_count())
        .into_par_iter()
        .map(|fold| evaluate_fold(dataset, plan, fold, grid))
        .collect::<Result<_>>()?;
    let k_count = plan.fold_count();
    // cell order is identical across folds; use the first non-empty fold as template
    let template: Vec<(CellKey, String)> = outcomes
        .iter()
        .find(|o| !o.cells.is_empty())
        .map(|o| o.cells.iter().map(|(k, m, _, _)| (*k, m.clone())).collect())
        .unwrap_or_default();
    for (pos, (key, metric)) in template.iter().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut total_ms = 0;
        for o in &outcomes {
            let Some((_, _, value, ms)) = o.cells.get(pos) else { continue };
            let ms = if record_time { *ms } else { 0 };
            total_ms += ms;
            report.records.push(EvalRecord {
                method: key.method.name().into(),
                d: key.d,
                k_pairs: key.k_pairs,
                fold_count: k_count,
                fold_index: o.fold as i64,
                metric: metric.clone(),
                value: *value,
                seed,
                wall_time_ms: ms,
            });
            sum += value;
            count += 1;
        }
        report.records.push(EvalRecord {
            method: key.method.name().into(),
            d: key.d,
            k_pairs: key.k_pairs,
            fold_count: k_count,
            fold_index: -1,
            metric: metric.clone(),
            value: if count > 0 { sum / count as f64 } else { f64::NAN },
            seed,
            wall_time_ms: total_ms,
        });
    }
    for o in outcomes {
        report.warnings.extend(o.warnings);
        report.fits.extend(o.traces);
    }
    Ok(())
}

/// k-fold evaluation of one method: per fold, fit on the training folds only,
/// reduce both sides and classify the test fold with each `k` in `knn`.
pub fn cross_validate(
    dataset: &MatrixDataset,
    method: CellKey,
    plan: &FoldPlan,
    knn: &[usize],
    opts: &FitOptions,
) -> Result<EvalReport> {
    if knn.is_empty() {
        return Err(Error::InvalidArgument("at least one k-NN size is required".into()));
    }
    let mut report = EvalReport::new(opts.seed);
    let grid = CellGrid {
        methods: &[method.method],
        d_grid: &[method.d],
        k_grid: &[method.k_pairs.max(1)],
        knn,
        opts,
    };
    cross_validate_grid(dataset, plan, &grid, opts.seed, false, &mut report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub methods: Vec<MethodKind>,
    pub d_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub fold_counts: Vec<usize>,
    pub knn: Vec<usize>,
    pub seed: u64,
    pub fit: FitOptions,
    /// Emit RMSRE rows from fits on the whole dataset.
    pub rmsre: bool,
    /// Fill `wall_time_ms`; left at 0 otherwise so reports are reproducible.
    pub record_time: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: vec![MethodKind::Svd, MethodKind::Glram, MethodKind::Mpglram],
            d_grid: vec![5, 6, 7, 8, 9],
            k_grid: vec![2],
            fold_counts: vec![2, 5, 10],
            knn: vec![1],
            seed: 0,
            fit: FitOptions::default(),
            rmsre: true,
            record_time: false,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.d_grid.is_empty() || self.d_grid.contains(&0) {
            return bad("d grid must be non-empty and positive");
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return bad("k grid must be non-empty and positive");
        }
        if self.knn.is_empty() || self.knn.contains(&0) {
            return bad("k-NN sizes must be non-empty and positive");
        }
        if self.fold_counts.iter().any(|&k| k < 2) {
            return bad("fold counts must be at least 2");
        }
        Ok(())
    }
}

/// Cross product of methods × d × k (× fold counts × k-NN sizes).
///
/// RMSRE rows come first (fold_count 0, fold_index -1), then accuracy rows
/// per fold count, each cell followed by its aggregate. Failing cells are
/// reported as NaN with a warning.
pub fn sweep(dataset: &MatrixDataset, config: &SweepConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut report = EvalReport::new(config.seed);
    let mut opts = config.fit.clone();
    opts.seed = config.seed;

    if config.rmsre {
        let svd_full = config.methods.contains(&MethodKind::Svd).then(|| {
            let max_d = config.d_grid.iter().map(|d| d * d).max().unwrap_or(1);
            let limit = (dataset.n1() * dataset.n2()).min(dataset.len());
            svd_fit(dataset, max_d.min(limit), opts.centered)
        });
        let per_d: Vec<Vec<(CellKey, Result<f64>, u64)>> = config
            .d_grid
            .par_iter()
            .map(|&d| {
                fit_cells(dataset, d, &config.methods, &config.k_grid, &opts, svd_full.as_ref())
                    .into_iter()
                    .map(|cell| {
                        let value = cell.reducer.and_then(|r| rmsre(dataset, &r.reconstruct(dataset)?));
                        (cell.key, value, cell.elapsed_ms)
                    })
                    .collect()
            })
            .collect();
        for (key, value, ms) in per_d.into_iter().flatten() {
            let value = value.unwrap_or_else(|e| {
                report
                    .warnings
                    .push(format!("rmsre: {} d={} k={} failed: {e}", key.method, key.d, key.k_pairs));
                f64::NAN
            });
            report.records.push(EvalRecord {
                method: key.method.name().into(),
                d: key.d,
                k_pairs: key.k_pairs,
                fold_count: 0,
                fold_index: -1,
                metric: "rmsre".into(),
                value,
                seed: config.seed,
                wall_time_ms: if config.record_time { ms } else { 0 },
            });
        }
    }

    if !config.fold_counts.is_empty() {
        if dataset.labels().is_none() {
            return Err(Error::InvalidArgument("accuracy evaluation needs a labeled dataset".into()));
        }
        let grid = CellGrid {
            methods: &config.methods,
            d_grid: &config.d_grid,
            k_grid: &config.k_grid,
            knn: &config.knn,
            opts: &opts,
        };
        for &k in &config.fold_counts {
            let plan = kfold_split(dataset, k, config.seed)?;
            cross_validate_grid(dataset, &plan, &grid, config.seed, config.record_time, &mut report)?;
        }
    }
    Ok(report)
}

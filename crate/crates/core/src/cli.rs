//! The `kronfold` command line.
//!
//! Exit codes: 0 success, 2 invalid flags or arguments, 3 data or file
//! errors, 4 numerical failure. Machine-readable results go to standard
//! output as one JSON object per line; `--verbose` tables go to standard
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::dataset::{fingerprint_hex, load_mds, load_pgm_dir, save_mds, synth_kron, LabelRule, MatrixDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{sweep, FitOptions, MethodKind, SweepConfig};
use crate::glram::{glram_fit, GlramConfig, GlramInit};
use crate::kronecker::KronPairList;
use crate::model_file::ModelFile;
use crate::mpglram::{mpglram_fit, MpglramConfig, MpglramInit, PsdSolver, UpdateOrder};
use crate::svd_baseline::svd_fit;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable capping the worker count (0 = automatic).
pub const THREADS_ENV: &str = "KRONFOLD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kronfold", version, about = "Low-rank reduction of matrix collections: SVD, GLRAM and multi-pair GLRAM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one reducer and write a model file.
    Fit(FitArgs),
    /// Cross-validated sweep over methods and sizes.
    Eval(EvalArgs),
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Kronecker-rank decomposition of a stored SVD projector.
    Decompose(DecomposeArgs),
    /// Convert a directory of PGM images into an MDS1 file.
    ConvertPgm(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Svd,
    Glram,
    Mpglram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// GLRAM: first columns of the identity.
    Identity,
    /// GLRAM: random orthonormal; MPGLRAM: random pairs.
    Random,
    /// MPGLRAM: first pair from a GLRAM fit.
    GlramWarm,
    /// MPGLRAM: pairs from --init-model, padded up to --k-pairs.
    PairsWarm,
    /// MPGLRAM: exactly the pairs in --init-model.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Pinv,
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    LeftFirst,
    RightFirst,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    /// SVD rank; for GLRAM/MPGLRAM shorthand for --k1 d --k2 d.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub k_pairs: usize,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Model file supplying pairs for --init pairs-warm/given.
    #[arg(long)]
    pub init_model: Option<PathBuf>,
    /// GLRAM iterations or MPGLRAM sweeps.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subtract the mean before the SVD.
    #[arg(long)]
    pub centered: bool,
    #[arg(long, value_enum, default_value_t = SolverArg::Pinv)]
    pub solver: SolverArg,
    /// Relative ridge for numerically singular systems.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, value_enum, default_value_t = OrderArg::LeftFirst)]
    pub order: OrderArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "svd,glram,mpglram")]
    pub methods: String,
    /// Sizes as a list and/or inclusive ranges, e.g. `5:9` or `3,5,7`.
    #[arg(long, default_value = "5:9")]
    pub d_grid: String,
    #[arg(long, default_value = "2")]
    pub k_grid: String,
    /// Fold counts; `none` skips classification.
    #[arg(long, default_value = "2,5,10")]
    pub folds: String,
    #[arg(long, default_value = "1")]
    pub knn: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub centered: bool,
    #[arg(long)]
    pub no_rmsre: bool,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 100)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Fill wall_time_ms (makes reports non-reproducible).
    #[arg(long)]
    pub record_time: bool,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    pub n1: usize,
    #[arg(long, default_value_t = 12)]
    pub n2: usize,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub kron_rank: usize,
    #[arg(long, default_value_t = 4)]
    pub k1: usize,
    #[arg(long, default_value_t = 4)]
    pub k2: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 5)]
    pub classes: u32,
    #[arg(long, default_value_t = 1.0)]
    pub class_sep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generating pairs as a model file.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `n1 k1 n2 k2`, with `n1·n2` rows and `k1·k2` columns in W.
    #[arg(long, num_args = 4, value_names = ["N1", "K1", "N2", "K2"])]
    pub block_dims: Vec<usize>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Write the pairs as a model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Do not derive labels from file names.
    #[arg(long)]
    pub unlabeled: bool,
}

/// Map a library error onto the exit-code contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Size the global worker pool from `KRONFOLD_THREADS`.
pub fn init_threads() {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, out),
        Command::Eval(a) => cmd_eval(&a, out, err),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Decompose(a) => cmd_decompose(&a, out),
        Command::ConvertPgm(a) => cmd_convert_pgm(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: &mut dyn Write, value: serde_json::Value) -> Result<()> {
    writeln!(out, "{value}")?;
    Ok(())
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// `5:9`, `3,5,7`, `1,4:6` → sorted list without duplicates.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad grid entry {s:?} in {text:?}")))
        };
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(invalid(format!("empty range {part:?}")));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("empty grid {text:?}")));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_methods(text: &str) -> Result<Vec<MethodKind>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: MethodKind = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(invalid("no methods given"));
    }
    Ok(out)
}

fn core_dims(a: &FitArgs) -> Result<(usize, usize)> {
    match (a.k1.or(a.d), a.k2.or(a.d)) {
        (Some(k1), Some(k2)) => Ok((k1, k2)),
        _ => Err(invalid("--k1 and --k2 (or --d) are required for this method")),
    }
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.tol >= 0.0) || !(a.ridge >= 0.0) {
        return Err(invalid("--tol and --ridge must be non-negative"));
    }
    let ds = load_mds(&a.data)?;
    let fp = fingerprint_hex(ds.fingerprint());
    let (file, objective, iterations) = match a.method {
        MethodArg::Svd => {
            let d = a.d.ok_or_else(|| invalid("--d is required for svd"))?;
            if a.init.is_some() {
                return Err(invalid("--init does not apply to svd"));
            }
            let m = svd_fit(&ds, d, a.centered)?;
            let obj = m.tail_energy();
            (ModelFile::from_svd(&m, a.seed, &fp), obj, 0)
        }
        MethodArg::Glram => {
            let (k1, k2) = core_dims(a)?;
            let mut cfg = GlramConfig::new(k1, k2);
            cfg.max_iter = a.max_iter;
            cfg.tol = a.tol;
            cfg.seed = a.seed;
            cfg.init = match a.init {
                None | Some(InitArg::Identity) => GlramInit::IdentityBlock,
                Some(InitArg::Random) => GlramInit::RandomOrthonormal,
                Some(other) => return Err(invalid(format!("--init {other:?} does not apply to glram"))),
            };
            let m = glram_fit(&ds, &cfg)?;
            (ModelFile::from_glram(&m, a.seed, &fp), m.objective(), m.iterations)
        }
        MethodArg::Mpglram => {
            let (k1, k2) = core_dims(a)?;
            let mut cfg = MpglramConfig::new(a.k_pairs, k1, k2);
            cfg.outer_iters = a.max_iter;
            cfg.tol = a.tol;
            cfg.seed = a.seed;
            cfg.solve.solver = match a.solver {
                SolverArg::Pinv => PsdSolver::PseudoInverse,
                SolverArg::Cholesky => PsdSolver::Cholesky,
            };
            cfg.solve.ridge_rel = a.ridge;
            cfg.order = match a.order {
                OrderArg::LeftFirst => UpdateOrder::LeftFirst,
                OrderArg::RightFirst => UpdateOrder::RightFirst,
            };
            cfg.init = match a.init {
                None | Some(InitArg::GlramWarm) => MpglramInit::GlramWarm,
                Some(InitArg::Random) => MpglramInit::Random,
                Some(mode @ (InitArg::PairsWarm | InitArg::Given)) => {
                    let path = a
                        .init_model
                        .as_ref()
                        .ok_or_else(|| invalid("--init pairs-warm/given needs --init-model"))?;
                    let pairs = ModelFile::load(path)?.pair_list()?;
                    if mode == InitArg::Given && pairs.len() != a.k_pairs {
                        return Err(invalid(format!(
                            "--init given: model has {} pairs, --k-pairs is {}",
                            pairs.len(),
                            a.k_pairs
                        )));
                    }
                    MpglramInit::Warm(pairs)
                }
                Some(InitArg::Identity) => return Err(invalid("--init identity does not apply to mpglram")),
            };
            let m = mpglram_fit(&ds, &cfg)?;
            (ModelFile::from_mpglram(&m, &fp), m.objective(), m.sweeps)
        }
    };
    file.save(&a.out)?;
    emit(
        out,
        json!({
            "method": file.method,
            "objective": objective,
            "iterations": iterations,
            "fingerprint": fp,
            "out": a.out.display().to_string(),
        }),
    )
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let fold_counts = if a.folds.trim().eq_ignore_ascii_case("none") {
        Vec::new()
    } else {
        parse_grid(&a.folds)?
    };
    let config = SweepConfig {
        methods: parse_methods(&a.methods)?,
        d_grid: parse_grid(&a.d_grid)?,
        k_grid: parse_grid(&a.k_grid)?,
        fold_counts,
        knn: parse_grid(&a.knn)?,
        seed: a.seed,
        fit: FitOptions {
            centered: a.centered,
            glram_max_iter: a.max_iter,
            glram_tol: a.tol,
            mpglram_sweeps: a.sweeps,
            mpglram_tol: a.tol,
            seed: a.seed,
        },
        rmsre: !a.no_rmsre,
        record_time: a.record_time,
    };
    let ds = load_mds(&a.data)?;
    let report = sweep(&ds, &config)?;
    if let Some(path) = &a.out_csv {
        std::fs::write(path, report.to_csv_string()?)?;
    }
    if let Some(path) = &a.out_json {
        let mut text = report.to_json_string()?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    for w in &report.warnings {
        writeln!(err, "warning: {w}")?;
    }
    if a.verbose {
        writeln!(err, "{:<8} {:>3} {:>3} {:>5} {:<14} {:>12}", "method", "d", "k", "folds", "metric", "value")?;
        for r in report.emitted_records().iter().filter(|r| r.fold_index == -1) {
            writeln!(
                err,
                "{:<8} {:>3} {:>3} {:>5} {:<14} {:>12.6}",
                r.method, r.d, r.k_pairs, r.fold_count, r.metric, r.value
            )?;
        }
    }
    emit(
        out,
        json!({
            "records": report.records.len(),
            "aggregates": report.records.iter().filter(|r| r.fold_index == -1).count(),
            "warnings": report.warnings.len(),
            "fingerprint": fingerprint_hex(ds.fingerprint()),
        }),
    )
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec {
        n1: a.n1,
        n2: a.n2,
        n: a.n,
        kron_rank: a.kron_rank,
        k1: a.k1,
        k2: a.k2,
        noise_sigma: a.noise,
        class_count: a.classes,
        class_separation: a.class_sep,
        seed: a.seed,
    };
    let synth = synth_kron(&spec)?;
    save_mds(&synth.dataset, &a.out)?;
    let fp = fingerprint_hex(synth.dataset.fingerprint());
    if let Some(path) = &a.truth_out {
        ModelFile::from_pairs(&synth.pairs, Vec::new(), 0, a.seed, &fp).save(path)?;
    }
    emit(
        out,
        json!({
            "fingerprint": fp,
            "n": synth.dataset.len(),
            "n1": a.n1,
            "n2": a.n2,
            "out": a.out.display().to_string(),
        }),
    )
}

fn cmd_decompose(a: &DecomposeArgs, out: &mut dyn Write) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let model = file.svd_model()?;
    let [n1, k1, n2, k2] = <[usize; 4]>::try_from(a.block_dims.as_slice())
        .map_err(|_| invalid("--block-dims takes exactly four values: n1 k1 n2 k2"))?;
    if n1 * n2 != model.w.nrows() || k1 * k2 != model.w.ncols() || n1 * n2 * k1 * k2 == 0 {
        return Err(invalid(format!(
            "block dims {n1}x{k1}, {n2}x{k2} do not factor W of shape {}x{}",
            model.w.nrows(),
            model.w.ncols()
        )));
    }
    if a.max_pairs == Some(0) {
        return Err(invalid("--max-pairs must be positive"));
    }
    let (pairs, dec): (KronPairList, _) = KronPairList::from_projector(&model.w, (n1, k1, n2, k2), a.max_pairs)?;
    for (j, sigma) in dec.singular_values.iter().enumerate() {
        let residual = dec.truncation_error(j + 1);
        emit(
            out,
            json!({
                "pair": j + 1,
                "sigma": sigma,
                "residual": residual,
                "tail_energy": residual * residual,
            }),
        )?;
    }
    if let Some(path) = &a.out {
        ModelFile::from_pairs(&pairs, Vec::new(), 0, file.seed, &file.fingerprint).save(path)?;
    }
    Ok(())
}

fn cmd_convert_pgm(a: &ConvertArgs, out: &mut dyn Write) -> Result<()> {
    let rule = if a.unlabeled {
        LabelRule::Unlabeled
    } else {
        LabelRule::PrefixBeforeUnderscore
    };
    let ds: MatrixDataset = load_pgm_dir(&a.dir, rule)?;
    save_mds(&ds, &a.out)?;
    emit(
        out,
        json!({
            "fingerprint": fingerprint_hex(ds.fingerprint()),
            "n": ds.len(),
            "n1": ds.n1(),
            "n2": ds.n2(),
            "class_count": ds.class_count(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("5:9").unwrap(), vec![5, 6, 7, 8, 9]);
        assert_eq!(parse_grid("3").unwrap(), vec![3]);
        assert_eq!(parse_grid("7, 1,4:5,4").unwrap(), vec![1, 4, 5, 7]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("9:5").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn methods() {
        assert_eq!(
            parse_methods("svd, MPGLRAM,svd").unwrap(),
            vec![MethodKind::Svd, MethodKind::Mpglram]
        );
        assert!(parse_methods("pca").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Malformed("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Singular("x".into())), EXIT_NUMERICAL);
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["kronfold", "fit", "--method", "svd"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["kronfold", "--help"], &mut out, &mut err), EXIT_OK);
    }
}

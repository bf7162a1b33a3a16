//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.
//!
//! Criterion 9 reads a labeled 32x32 MDS1 file from `KRONFOLD_FACE_DATA`
//! when set and falls back to a seeded synthetic stand-in otherwise.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kronfold::dataset::{save_mds, synth_kron, MatrixDataset, SyntheticSpec};
use kronfold::eval::{knn_classify, rmsre};
use kronfold::glram::{glram_fit, glram_reconstruct, GlramConfig, GlramInit};
use kronfold::kronecker::{kron, vec, KronPair, KronPairList};
use kronfold::linalg::{gaussian_matrix, random_orthonormal};
use kronfold::mpglram::{
    glram_pairs, mpglram_fit, mpglram_reconstruct, residual_excluding, update_cores,
    update_left_factor, update_right_factor, MpglramConfig, MpglramInit, SolveOptions,
};
use kronfold::svd_baseline::{svd_fit, svd_project, svd_reconstruct};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn synth(n1: usize, n2: usize, n: usize, r: usize, k: usize, noise: f64, seed: u64) -> MatrixDataset {
    let spec = SyntheticSpec {
        n1,
        n2,
        n,
        kron_rank: r,
        k1: k,
        k2: k,
        noise_sigma: noise,
        seed,
        ..SyntheticSpec::default()
    };
    synth_kron(&spec).expect("valid spec").dataset
}

fn descending_ok(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
}

fn criterion_1() -> Outcome {
    let (n1, k1, n2, k2) = (3, 2, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut max_pairs = 0;
    for _ in 0..50 {
        let w = random_orthonormal(&mut rng, n1 * n2, k1 * k2);
        let (pairs, _) = KronPairList::from_projector(&w, (n1, k1, n2, k2), None).map_err(|e| e.to_string())?;
        let rel = (pairs.dense_projector() - &w).norm() / w.norm();
        worst = worst.max(rel);
        max_pairs = max_pairs.max(pairs.len());
    }
    check(worst <= 1e-10, || format!("worst relative error {worst:.3e}"))?;
    check(max_pairs <= 6, || format!("{max_pairs} pairs"))?;
    Ok(format!("worst relative error {worst:.2e}, at most {max_pairs} pairs"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = gaussian_matrix(&mut rng, 8, 8, 1.0);
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let oracle: f64 = sv[3..].iter().map(|s| s * s).sum();
    let ds = MatrixDataset::new(vec![a]).map_err(|e| e.to_string())?;
    let config = GlramConfig {
        max_iter: 1000,
        tol: 1e-14,
        ..GlramConfig::new(3, 3)
    };
    let model = glram_fit(&ds, &config).map_err(|e| e.to_string())?;
    let rel = (model.objective() - oracle).abs() / oracle;
    check(rel <= 1e-6, || format!("objective {} vs oracle {oracle}, rel {rel:.3e}", model.objective()))?;
    Ok(format!("relative gap {rel:.2e} after {} iterations", model.iterations))
}

fn criterion_3() -> Outcome {
    let ks = [1, 2, 3, 5];
    let mut checked = 0;
    for run in 0..20u64 {
        let ds = synth(16, 12, 50, 2, 4, 0.1, 300 + run);
        let mut gcfg = GlramConfig::new(4, 4);
        gcfg.seed = run;
        gcfg.init = if run % 2 == 0 {
            GlramInit::IdentityBlock
        } else {
            GlramInit::RandomOrthonormal
        };
        let g = glram_fit(&ds, &gcfg).map_err(|e| e.to_string())?;
        check(descending_ok(&g.objective_history), || format!("glram run {run} increased"))?;
        checked += g.objective_history.len();

        let k = ks[run as usize % ks.len()];
        let mut cfg = MpglramConfig::new(k, 4, 4);
        cfg.seed = run;
        cfg.outer_iters = 30;
        cfg.init = match run % 3 {
            0 => MpglramInit::GlramWarm,
            1 => MpglramInit::Random,
            _ => MpglramInit::Warm(glram_pairs(&g).map_err(|e| e.to_string())?),
        };
        let m = mpglram_fit(&ds, &cfg).map_err(|e| e.to_string())?;
        check(descending_ok(&m.objective_history), || {
            format!("mpglram run {run} (k = {k}, init {:?}) increased", cfg.init)
        })?;
        checked += m.objective_history.len();
    }
    Ok(format!("{checked} history entries non-increasing over 40 runs"))
}

fn criterion_4() -> Outcome {
    let ds = synth(16, 12, 50, 2, 4, 0.1, 4);
    let svd = svd_fit(&ds, 16, false).map_err(|e| e.to_string())?;
    let svd_err = rmsre(&ds, &svd_reconstruct(&svd, &svd_project(&svd, &ds).map_err(|e| e.to_string())?).unwrap())
        .map_err(|e| e.to_string())?;
    let g = glram_fit(&ds, &GlramConfig::new(4, 4)).map_err(|e| e.to_string())?;
    let glram_err = rmsre(&ds, &glram_reconstruct(&g, &g.cores).unwrap()).unwrap();

    let mut warm_errs = Vec::new();
    for k in 1..=5 {
        let m = mpglram_fit(&ds, &MpglramConfig::new(k, 4, 4)).map_err(|e| e.to_string())?;
        let e = rmsre(&ds, &mpglram_reconstruct(&m.pairs, &m.cores).unwrap()).unwrap();
        check(svd_err <= e + 1e-9 && e <= glram_err + 1e-9, || {
            format!("k = {k}: svd {svd_err}, mpglram {e}, glram {glram_err}")
        })?;
        warm_errs.push(e);
    }

    let mut chained = Vec::new();
    let mut pairs = glram_pairs(&g).map_err(|e| e.to_string())?;
    for k in 1..=5 {
        let mut cfg = MpglramConfig::new(k, 4, 4);
        cfg.init = MpglramInit::Warm(pairs.clone());
        let m = mpglram_fit(&ds, &cfg).map_err(|e| e.to_string())?;
        chained.push(rmsre(&ds, &mpglram_reconstruct(&m.pairs, &m.cores).unwrap()).unwrap());
        pairs = m.pairs;
    }
    check(chained.windows(2).all(|w| w[1] <= w[0] + 1e-9), || {
        format!("pairs-warm RMSRE not monotone: {chained:?}")
    })?;
    Ok(format!(
        "svd {svd_err:.4} <= mpglram {:.4}..{:.4} <= glram {glram_err:.4}; chain {:.4} -> {:.4}",
        warm_errs.iter().cloned().fold(f64::INFINITY, f64::min),
        warm_errs.iter().cloned().fold(0.0, f64::max),
        chained[0],
        chained[4]
    ))
}

fn criterion_5() -> Outcome {
    let spec = SyntheticSpec {
        kron_rank: 2,
        noise_sigma: 0.0,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let out = synth_kron(&spec).map_err(|e| e.to_string())?;
    let energy = out.dataset.total_energy();
    let mut cfg = MpglramConfig::new(2, spec.k1, spec.k2);
    cfg.init = MpglramInit::Warm(out.pairs.clone());
    let m = mpglram_fit(&out.dataset, &cfg).map_err(|e| e.to_string())?;
    let worst = m.objective_history.iter().cloned().fold(0.0, f64::max);
    check(worst <= 1e-12 * energy, || format!("truth init objective {worst:e}, bound {:e}", 1e-12 * energy))?;

    let mut recovered = 0;
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let spec = SyntheticSpec {
            kron_rank: 2,
            noise_sigma: 0.0,
            seed: 500 + seed,
            ..SyntheticSpec::default()
        };
        let ds = synth_kron(&spec).map_err(|e| e.to_string())?.dataset;
        let mean_norm = ds.samples().iter().map(|a| a.norm()).sum::<f64>() / ds.len() as f64;
        let mut cfg = MpglramConfig::new(2, spec.k1, spec.k2);
        cfg.outer_iters = 200;
        cfg.tol = 0.0;
        cfg.seed = seed;
        let m = mpglram_fit(&ds, &cfg).map_err(|e| e.to_string())?;
        let err = rmsre(&ds, &mpglram_reconstruct(&m.pairs, &m.cores).unwrap()).unwrap();
        ratios.push(err / mean_norm);
        if err <= 1e-5 * mean_norm {
            recovered += 1;
        }
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1e}")).collect();
    check(recovered >= 8, || {
        format!("glram-warm recovered {recovered}/10 seeds; RMSRE / mean norm = [{}]", shown.join(", "))
    })?;
    Ok(format!(
        "truth fixed point {:.1e} of energy; glram-warm recovered {recovered}/10",
        worst / energy
    ))
}

fn restricted_objective(residuals: &[DMatrix<f64>], left: &DMatrix<f64>, right: &DMatrix<f64>, cores: &[DMatrix<f64>]) -> f64 {
    residuals
        .iter()
        .zip(cores)
        .map(|(a, d)| (a - left * d * right.transpose()).norm_squared())
        .sum()
}

fn fd_gradient_norm(x: &DMatrix<f64>, f: impl Fn(&DMatrix<f64>) -> f64) -> f64 {
    let mut sq = 0.0;
    for idx in 0..x.len() {
        let h = 1e-5 * x[idx].abs().max(1.0);
        let mut plus = x.clone();
        plus[idx] += h;
        let mut minus = x.clone();
        minus[idx] -= h;
        let g = (f(&plus) - f(&minus)) / (2.0 * h);
        sq += g * g;
    }
    sq.sqrt()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = SolveOptions::default();
    let mut worst_grad = 0.0_f64;
    let mut worst_core = 0.0_f64;
    for _ in 0..10 {
        let n1 = rng.random_range(2..=6);
        let n2 = rng.random_range(2..=6);
        let k1 = rng.random_range(1..=n1.min(3));
        let k2 = rng.random_range(1..=n2.min(3));
        let k = rng.random_range(1..=2);
        let n = rng.random_range(6..=10);
        let ds = MatrixDataset::new((0..n).map(|_| gaussian_matrix(&mut rng, n1, n2, 1.0)).collect()).unwrap();
        let pairs = KronPairList::new(
            (0..k)
                .map(|_| KronPair::new(gaussian_matrix(&mut rng, n1, k1, 1.0), gaussian_matrix(&mut rng, n2, k2, 1.0)))
                .collect(),
        )
        .unwrap();

        let cores = update_cores(&ds, &pairs, opts).map_err(|e| e.to_string())?;
        let b: DMatrix<f64> = pairs
            .pairs()
            .iter()
            .fold(DMatrix::zeros(n1 * n2, k1 * k2), |acc, p| acc + kron(&p.right, &p.left));
        let qr = b.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        for (a, d) in ds.samples().iter().zip(&cores) {
            let rhs: DVector<f64> = q.tr_mul(&vec(a));
            let x = r.solve_upper_triangular(&rhs).ok_or("rank-deficient oracle")?;
            worst_core = worst_core.max((x - vec(d)).norm());
        }

        let j = rng.random_range(0..k);
        let residuals = residual_excluding(&ds, &pairs, &cores, j).map_err(|e| e.to_string())?;
        let scale: f64 = residuals.iter().map(|r| r.norm_squared()).sum::<f64>().max(1.0);
        let pair = &pairs.pairs()[j];
        let right = update_right_factor(&residuals, &pair.left, &cores, opts).map_err(|e| e.to_string())?;
        let g = fd_gradient_norm(&right, |x| restricted_objective(&residuals, &pair.left, x, &cores));
        worst_grad = worst_grad.max(g / scale);
        let left = update_left_factor(&residuals, &pair.right, &cores, opts).map_err(|e| e.to_string())?;
        let g = fd_gradient_norm(&left, |x| restricted_objective(&residuals, x, &pair.right, &cores));
        worst_grad = worst_grad.max(g / scale);
    }
    check(worst_grad <= 1e-6, || format!("gradient / scale = {worst_grad:.3e}"))?;
    check(worst_core <= 1e-8, || format!("core mismatch {worst_core:.3e}"))?;
    Ok(format!("gradient / scale {worst_grad:.1e}, core mismatch {worst_core:.1e}"))
}

fn brute_force_knn(train: &[Vec<f64>], labels: &[u32], x: &[f64], k: usize) -> u32 {
    let dist: Vec<f64> = train
        .iter()
        .map(|t| t.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let mut taken = vec![false; train.len()];
    let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for _ in 0..k.min(train.len()) {
        let mut best: Option<usize> = None;
        for i in 0..train.len() {
            if !taken[i] && best.is_none_or(|b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("unused point remains");
        taken[i] = true;
        let e = votes.entry(labels[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += dist[i];
    }
    let mut winner: Option<(u32, usize, f64)> = None;
    for (&label, &(count, total)) in &votes {
        let better = match winner {
            None => true,
            Some((_, c, t)) => count > c || (count == c && total < t),
        };
        if better {
            winner = Some((label, count, total));
        }
    }
    winner.expect("at least one vote").0
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut predictions = 0;
    for _ in 0..100 {
        let n_train = rng.random_range(1..=80);
        let n_test = rng.random_range(1..=20);
        let dim = rng.random_range(1..=4);
        let classes = rng.random_range(1..=4u32);
        let mut point = || (0..dim).map(|_| rng.random_range(-3..=3) as f64).collect::<Vec<f64>>();
        let train: Vec<Vec<f64>> = (0..n_train).map(|_| point()).collect();
        let test: Vec<Vec<f64>> = (0..n_test).map(|_| point()).collect();
        let labels: Vec<u32> = (0..n_train).map(|_| rng.random_range(0..classes)).collect();
        for k in 1..=3 {
            let got = knn_classify(&train, &labels, &test, k).map_err(|e| e.to_string())?;
            for (t, g) in test.iter().zip(&got) {
                let want = brute_force_knn(&train, &labels, t, k);
                check(*g == want, || format!("k = {k}: predicted {g}, brute force {want}"))?;
                predictions += 1;
            }
        }
    }
    Ok(format!("{predictions} predictions match brute force"))
}

fn kronfold(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kronfold"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "kronfold {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut stdout = Vec::new();
    stdout.push(kronfold(&["synth", "--n1", "16", "--n2", "12", "--n", "50", "--noise", "0.05", "--seed", "8", "--out", &p("data.mds")])?);
    stdout.push(kronfold(&[
        "fit", "--method", "mpglram", "--data", &p("data.mds"), "--k1", "4", "--k2", "4", "--k-pairs", "2", "--seed", "8",
        "--out", &p("model.json"),
    ])?);
    stdout.push(kronfold(&[
        "eval", "--data", &p("data.mds"), "--d-grid", "3:5", "--k-grid", "2,3", "--folds", "2,5,10", "--seed", "8", "--out-csv", &p("report.csv"),
        "--out-json", &p("report.json"),
    ])?);
    let mut artifacts = stdout;
    for f in ["data.mds", "model.json", "report.csv", "report.json"] {
        artifacts.push(std::fs::read(dir.join(f)).map_err(|e| e.to_string())?);
    }
    Ok(artifacts)
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    // stdout lines echo the output paths, which differ between the two runs
    let strip = |bytes: &[u8], dir: &Path| String::from_utf8_lossy(bytes).replace(&*dir.to_string_lossy(), "DIR");
    for (i, (x, y)) in first.iter().zip(&second).enumerate() {
        check(strip(x, a.path()) == strip(y, b.path()), || format!("artifact {i} differs between runs"))?;
    }
    let csv_lines = String::from_utf8_lossy(&first[5]).lines().count();
    Ok(format!("{} artifacts identical, report has {} CSV lines", first.len(), csv_lines))
}

fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            Ok(headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (data, source) = match std::env::var("KRONFOLD_FACE_DATA") {
        Ok(path) => (path.clone(), format!("data from {path}")),
        Err(_) => {
            let spec = SyntheticSpec {
                n1: 32,
                n2: 32,
                n: 200,
                kron_rank: 3,
                k1: 8,
                k2: 8,
                noise_sigma: 0.3,
                class_count: 20,
                seed: 9,
                ..SyntheticSpec::default()
            };
            let path = dir.path().join("faces.mds");
            save_mds(&synth_kron(&spec).map_err(|e| e.to_string())?.dataset, &path).map_err(|e| e.to_string())?;
            (path.to_string_lossy().into_owned(), "synthetic 32x32 stand-in".to_string())
        }
    };
    let table = dir.path().join("table.csv");
    kronfold(&[
        "eval", "--data", &data, "--d-grid", "5:9", "--folds", "2,5,10", "--out-csv", &table.to_string_lossy(),
    ])?;
    let rows = read_csv(&table)?;
    let aggregates: Vec<&BTreeMap<String, String>> = rows
        .iter()
        .filter(|r| r["fold_index"] == "-1" && r["metric"] == "accuracy")
        .collect();
    let non_finite = rows.iter().filter(|r| r["value"].parse::<f64>().map_or(true, |v| !v.is_finite())).count();
    check(non_finite == 0, || format!("{non_finite} rows without a finite value"))?;
    let mut cells = std::collections::BTreeSet::new();
    for r in &aggregates {
        cells.insert((r["method"].clone(), r["d"].clone(), r["fold_count"].clone()));
    }
    check(aggregates.len() == 45 && cells.len() == 45, || {
        format!("{} aggregate accuracy rows, {} distinct cells", aggregates.len(), cells.len())
    })?;
    for method in ["svd", "glram", "mpglram"] {
        for d in 5..=9 {
            for folds in [2, 5, 10] {
                let key = (method.to_string(), d.to_string(), folds.to_string());
                check(cells.contains(&key), || format!("missing cell {key:?}"))?;
            }
        }
    }

    let ordering = dir.path().join("rmsre.csv");
    kronfold(&[
        "eval", "--data", &data, "--d-grid", "5:9", "--k-grid", "2:4", "--folds", "none", "--out-csv",
        &ordering.to_string_lossy(),
    ])?;
    let rows = read_csv(&ordering)?;
    let value = |method: &str, d: usize, k: usize| -> Result<f64, String> {
        rows.iter()
            .find(|r| r["method"] == method && r["d"] == d.to_string() && r["k_pairs"] == k.to_string() && r["metric"] == "rmsre")
            .ok_or_else(|| format!("no rmsre row for {method} d={d} k={k}"))?["value"]
            .parse::<f64>()
            .map_err(|e| e.to_string())
    };
    for d in 5..=9 {
        let svd = value("svd", d, 0)?;
        let glram = value("glram", d, 1)?;
        let mp: Vec<f64> = (2..=4).map(|k| value("mpglram", d, k)).collect::<Result<_, _>>()?;
        check(svd < mp[0] && mp[0] < glram, || {
            format!("d = {d}: svd {svd}, mpglram(2) {}, glram {glram}", mp[0])
        })?;
        check(mp.windows(2).all(|w| w[1] < w[0]), || format!("d = {d}: mpglram not improving with k: {mp:?}"))?;
    }
    Ok(format!("45-cell accuracy table and RMSRE ordering hold on {source}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 Kronecker decomposition round trip", criterion_1, Duration::from_secs(1)),
        ("2 GLRAM single-sample oracle", criterion_2, Duration::from_secs(1)),
        ("3 monotone descent", criterion_3, Duration::from_secs(30)),
        ("4 nesting and ordering", criterion_4, Duration::from_secs(60)),
        ("5 exact recovery", criterion_5, Duration::from_secs(60)),
        ("6 closed-form updates", criterion_6, Duration::from_secs(5)),
        ("7 k-NN oracle", criterion_7, Duration::from_secs(5)),
        ("8 end-to-end determinism", criterion_8, Duration::from_secs(60)),
        ("9 protocol table and RMSRE ordering", criterion_9, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:.0?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({elapsed:.2?}): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}

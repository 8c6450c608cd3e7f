//! Experiment drivers: turn a validated config into artifacts on disk.
//!
//! Every run directory receives the experiment's CSV artifacts, a
//! `summary.txt` with the human-readable digest (also printed to stdout),
//! and a `manifest.json` audit record. On a runtime failure the manifest is
//! still written, with `status = "partial"` and the error message, so
//! interrupted runs are never silently half-complete.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};

use rflnn_core::dataio::{gen_sine_mix, split_dataset, DatasetSource, SourceKind};
use rflnn_core::freqgen::{compare_methods, MetricKind, Quartiles};
use rflnn_core::networks::Dataset;
use rflnn_core::poisson::{
    analytic_u_1d, analytic_u_2d, benchmark, default_boundary_2d, default_f_2d, default_g_1d,
    discretize_1d, discretize_2d, write_bench_csv, BenchOptions, BenchRow, PoissonSystem,
};
use rflnn_core::spectrum::{run_fp_experiment, FamilySpec, FrequencyGrid, DELTA_D_THRESHOLD};
use rflnn_core::{Error, Result};

use crate::config::{
    ExperimentConfig, FpDatasetConfig, FpSincConfig, FreqGuidedCompareConfig, LoadedConfig,
    PoissonBenchConfig,
};
use crate::manifest::{config_hash, write_manifest, RunManifest};

/// Artifact names plus the human-readable summary produced by a driver.
struct RunOutcome {
    artifacts: Vec<String>,
    summary: Vec<String>,
}

/// Resolves the run directory: `--out-dir` flag, then the config's
/// `output_dir`, then `$RFLNN_OUT_DIR`, then `./runs`. Artifacts always land
/// in `<base>/<experiment>-<confighash8>/`, so identical configs rerun into
/// the same directory and different configs never collide.
pub fn resolve_out_dir(flag: Option<&Path>, loaded: &LoadedConfig) -> PathBuf {
    let base = flag
        .map(Path::to_path_buf)
        .or_else(|| loaded.output_dir.clone())
        .or_else(|| std::env::var_os("RFLNN_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let hash = config_hash(&loaded.text);
    base.join(format!("{}-{}", loaded.experiment.name(), &hash[..8]))
}

/// Runs the experiment and writes artifacts + manifest into `dir`. Returns
/// the summary lines on success; on failure the manifest records the partial
/// state before the error is propagated.
pub fn execute_and_record(loaded: &LoadedConfig, dir: &Path, jobs: usize) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let created = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
    let result = execute(&loaded.experiment, dir, jobs);

    let mut manifest = RunManifest {
        experiment: loaded.experiment.name().to_string(),
        config_sha256: config_hash(&loaded.text),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        created,
        jobs,
        seeds: loaded.experiment.seeds(),
        artifacts: Vec::new(),
        status: "complete".to_string(),
        error: None,
    };

    match result {
        Ok(out) => {
            let summary_path = dir.join("summary.txt");
            std::fs::write(&summary_path, out.summary.join("\n") + "\n")?;
            manifest.artifacts = out.artifacts;
            manifest.artifacts.push("summary.txt".to_string());
            manifest.artifacts.push("manifest.json".to_string());
            write_manifest(dir, &manifest)?;
            Ok(out.summary)
        }
        Err(e) => {
            manifest.status = "partial".to_string();
            manifest.error = Some(e.to_string());
            manifest.artifacts = existing_files(dir);
            manifest.artifacts.push("manifest.json".to_string());
            write_manifest(dir, &manifest)?;
            Err(e)
        }
    }
}

fn existing_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    names
}

fn execute(exp: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<RunOutcome> {
    match exp {
        ExperimentConfig::FpSinc(c) => run_fp_sinc(c, dir, jobs),
        ExperimentConfig::FpDataset(c) => run_fp_dataset(c, dir, jobs),
        ExperimentConfig::FreqGuidedCompare(c) => run_compare(c, dir),
        ExperimentConfig::PoissonBench(c) => run_poisson(c, dir),
    }
}

// ---------------------------------------------------------------------------
// fp-sinc / fp-dataset
// ---------------------------------------------------------------------------

fn run_fp_sinc(cfg: &FpSincConfig, dir: &Path, jobs: usize) -> Result<RunOutcome> {
    let (lo, hi) = cfg.domain;
    let source = DatasetSource {
        kind: SourceKind::SyntheticSinc {
            n_samples: cfg.samples,
            lo,
            hi,
        },
        split: 1.0,
        normalization: Default::default(),
    };
    let data = source.load()?;
    let head = vec![
        "experiment: fp-sinc".to_string(),
        format!("data: sinc, {} samples on [{lo:.6}, {hi:.6}]", cfg.samples),
    ];
    run_fp(
        &data,
        &cfg.families(),
        &cfg.grid()?,
        cfg.max_peaks,
        &cfg.seeds,
        jobs,
        dir,
        head,
    )
}

fn run_fp_dataset(cfg: &FpDatasetConfig, dir: &Path, jobs: usize) -> Result<RunOutcome> {
    let mut data = cfg.source.load()?;
    if let Some(limit) = cfg.limit {
        data = truncate_dataset(&data, limit)?;
    }
    let head = vec![
        "experiment: fp-dataset".to_string(),
        format!(
            "data: {} rows, {} inputs, {} targets",
            data.n(),
            data.d(),
            data.k()
        ),
    ];
    run_fp(
        &data,
        &cfg.families(),
        &cfg.grid()?,
        cfg.max_peaks,
        &cfg.seeds,
        jobs,
        dir,
        head,
    )
}

fn truncate_dataset(data: &Dataset, limit: usize) -> Result<Dataset> {
    if limit >= data.n() {
        return Ok(data.clone());
    }
    let x = data.x.rows(0, limit).into_owned();
    let y = data.y.rows(0, limit).into_owned();
    Dataset::new(x, y)
}

#[allow(clippy::too_many_arguments)]
fn run_fp(
    data: &Dataset,
    families: &[FamilySpec],
    grid: &FrequencyGrid,
    max_peaks: usize,
    seeds: &[u64],
    jobs: usize,
    dir: &Path,
    mut summary: Vec<String>,
) -> Result<RunOutcome> {
    let mut tasks = Vec::new();
    for fi in 0..families.len() {
        for &seed in seeds {
            tasks.push((fi, seed));
        }
    }
    let results = parallel_map(&tasks, jobs, |&(fi, seed)| {
        run_fp_experiment(data, &families[fi], grid, max_peaks, seed)
    });
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        traces.push(r?);
    }

    // Peaks are a property of the target spectrum alone, so every trace must
    // agree on them.
    let alphas = traces[0].peak_alphas.clone();
    if traces.iter().any(|t| t.peak_alphas != alphas) {
        return Err(Error::Numeric("tracked peaks differ between runs".into()));
    }

    let csv_name = "fp_trace.csv";
    let peak_cols: Vec<String> = alphas
        .iter()
        .map(|a| format!("delta_d_alpha_{a}"))
        .collect();
    let mut csv = format!("family,seed,step,{}\n", peak_cols.join(","));
    for (t, &(fi, seed)) in traces.iter().zip(&tasks) {
        for (r, step) in t.steps.iter().enumerate() {
            write!(csv, "{},{seed},{step}", families[fi].name()).expect("write to string");
            for c in 0..alphas.len() {
                write!(csv, ",{}", t.errors[(r, c)]).expect("write to string");
            }
            csv.push('\n');
        }
    }
    std::fs::write(dir.join(csv_name), csv)?;

    let alpha_list: Vec<String> = alphas.iter().map(|a| a.to_string()).collect();
    summary.push(format!("peaks tracked (alpha): {}", alpha_list.join(", ")));
    summary.push(format!(
        "crossing = first step with relative spectral error below {DELTA_D_THRESHOLD}"
    ));
    for (fi, fam) in families.iter().enumerate() {
        let mut ordered = 0usize;
        let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); alphas.len()];
        for si in 0..seeds.len() {
            let t = &traces[fi * seeds.len() + si];
            let steps: Vec<Option<usize>> = (0..alphas.len())
                .map(|c| t.first_step_below(c, DELTA_D_THRESHOLD))
                .collect();
            for (c, s) in steps.iter().enumerate() {
                if let Some(v) = s {
                    crossings[c].push(*v as f64);
                }
            }
            let keys: Vec<f64> = steps
                .iter()
                .map(|s| s.map_or(f64::INFINITY, |v| v as f64))
                .collect();
            let low_first =
                steps.first().is_some_and(Option::is_some) && keys.windows(2).all(|p| p[0] <= p[1]);
            if low_first {
                ordered += 1;
            }
        }
        let medians: Vec<String> = crossings
            .iter()
            .map(|c| {
                if c.is_empty() {
                    "never".to_string()
                } else {
                    format!("{}", median_of(c.clone()))
                }
            })
            .collect();
        summary.push(format!(
            "family {}: low-before-high crossing order in {}/{} seeds; median crossing step per peak: {}",
            fam.name(),
            ordered,
            seeds.len(),
            medians.join(", ")
        ));
    }

    Ok(RunOutcome {
        artifacts: vec![csv_name.to_string()],
        summary,
    })
}

// ---------------------------------------------------------------------------
// freq-guided-compare
// ---------------------------------------------------------------------------

fn run_compare(cfg: &FreqGuidedCompareConfig, dir: &Path) -> Result<RunOutcome> {
    let (lo, hi) = cfg.domain;
    let data = gen_sine_mix(cfg.n_samples, lo, hi)?;
    let (train, test) = split_dataset(&data, cfg.split, cfg.permutation_seed)?;
    let report = compare_methods(&train, &test, &cfg.network, &cfg.schedule, cfg.runs)?;

    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    std::fs::write(dir.join("comparison.csv"), csv)?;
    std::fs::write(
        dir.join("comparison_summary.json"),
        report.to_json()? + "\n",
    )?;

    let metric = match report.metric {
        MetricKind::Accuracy => "accuracy (higher is better)",
        MetricKind::NegRmse => "negative RMSE (higher is better)",
    };
    let fmt_q = |q: &Quartiles| format!("median {:.6}, q1 {:.6}, q3 {:.6}", q.median, q.q1, q.q3);
    let summary = vec![
        "experiment: freq-guided-compare".to_string(),
        format!(
            "data: sin(x) + sin(8x), {} samples on [{lo:.6}, {hi:.6}], split {} train / {} test",
            cfg.n_samples,
            train.n(),
            test.n()
        ),
        format!("paired runs: {}; metric: {metric}", cfg.runs),
        format!("fixed-interval arm: {}", fmt_q(&report.summary.fixed)),
        format!("guided-interval arm: {}", fmt_q(&report.summary.guided)),
        format!(
            "guided median better than fixed: {}",
            report.summary.guided.median > report.summary.fixed.median
        ),
    ];
    Ok(RunOutcome {
        artifacts: vec![
            "comparison.csv".to_string(),
            "comparison_summary.json".to_string(),
        ],
        summary,
    })
}

// ---------------------------------------------------------------------------
// poisson-bench
// ---------------------------------------------------------------------------

fn run_poisson(cfg: &PoissonBenchConfig, dir: &Path) -> Result<RunOutcome> {
    let n = cfg.n();
    let (sys, label): (PoissonSystem, &str) = match cfg.dim {
        1 => (discretize_1d(n, default_g_1d)?, "poisson-1d"),
        _ => (
            discretize_2d(n, default_f_2d, default_boundary_2d)?,
            "poisson-2d",
        ),
    };
    let truth: Vec<f64> = (0..sys.unknowns())
        .map(|i| match cfg.dim {
            1 => analytic_u_1d(sys.interior_coords[(i, 0)]),
            _ => analytic_u_2d(sys.interior_coords[(i, 0)], sys.interior_coords[(i, 1)]),
        })
        .collect();
    let opts = BenchOptions {
        reps: cfg.reps,
        max_iters: cfg.max_iters,
        bls: cfg.bls(),
        growth_cap: cfg.growth_cap(),
    };
    // Solves run sequentially on purpose: concurrent workers would contend
    // for cores and corrupt the wall-clock medians.
    let rows = benchmark(
        &sys,
        label,
        &cfg.methods,
        &cfg.tols,
        &cfg.seeds,
        &opts,
        Some(&truth),
    )?;

    let mut csv = Vec::new();
    write_bench_csv(&rows, &mut csv)?;
    std::fs::write(dir.join("poisson_bench.csv"), csv)?;

    let mut summary = vec![
        "experiment: poisson-bench".to_string(),
        format!(
            "problem: {label}, n = {n}, {} unknowns; medians over {} seeds x {} reps",
            sys.unknowns(),
            cfg.seeds.len(),
            cfg.reps
        ),
        format!(
            "{:<12} {:>9} {:>14} {:>12} {:>12} {:>14}",
            "method", "tol", "median_secs", "iterations", "residual", "max_err"
        ),
    ];
    for r in &rows {
        summary.push(format!(
            "{:<12} {:>9.0e} {:>14.6} {:>12.1} {:>12.3e} {:>14.3e}",
            r.method, r.tol, r.median_seconds, r.iterations, r.residual, r.error_vs_truth
        ));
    }
    summary.extend(dominance_lines(&rows));
    Ok(RunOutcome {
        artifacts: vec!["poisson_bench.csv".to_string()],
        summary,
    })
}

/// When both methods were benchmarked, reports per-tolerance whether the
/// warm-started solver beat plain Jacobi on sweeps and on wall time.
fn dominance_lines(rows: &[BenchRow]) -> Vec<String> {
    let mut lines = Vec::new();
    let find = |method: &str, tol: f64| rows.iter().find(|r| r.method == method && r.tol == tol);
    let tols: Vec<f64> = {
        let mut seen = Vec::new();
        for r in rows {
            if !seen.contains(&r.tol) {
                seen.push(r.tol);
            }
        }
        seen
    };
    for tol in tols {
        if let (Some(j), Some(b)) = (find("jacobi", tol), find("bls_jacobi", tol)) {
            lines.push(format!(
                "tol {:>9.0e}: bls_jacobi {} jacobi on iterations ({:.0} vs {:.0}), {} on wall time ({:.6}s vs {:.6}s)",
                tol,
                if b.iterations < j.iterations { "beats" } else { "does not beat" },
                b.iterations,
                j.iterations,
                if b.median_seconds < j.median_seconds { "beats" } else { "does not beat" },
                b.median_seconds,
                j.median_seconds,
            ));
        }
    }
    lines
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Applies `f` to every item on up to `jobs` scoped worker threads and
/// returns results in item order, so artifact content never depends on
/// scheduling.
fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs <= 1 {
        return items.iter().map(|t| f(t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("slot filled")
        })
        .collect()
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

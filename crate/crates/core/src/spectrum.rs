//! Fourier-domain instrumentation: input projection, nonuniform DFT, peak
//! tracking, and per-peak relative-error traces over a model's growth steps.
//!
//! The traces make the frequency principle observable: random-feature models
//! drive down the error at low-frequency spectrum peaks before high ones.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::networks::{
    add_enhancement_group_with_rng, extend_stacked_with_rng, ridge_solve, train_bls_with_rng,
    Activation, Dataset, Model, RandomGroup, StackedBlockConfig, StackedBlsModel,
};
use crate::schedule::IntervalSchedule;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default number of spectrum peaks tracked by the experiment drivers.
pub const DEFAULT_MAX_PEAKS: usize = 3;
/// Relative-error threshold used by "step of convergence" statistics.
pub const DELTA_D_THRESHOLD: f64 = 0.05;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Result of projecting a multivariate input onto its principal direction and
/// rescaling to the unit interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectedInput {
    /// Rescaled projections, one per observation, spanning [0, 1].
    pub x_prime: Vec<f64>,
    /// Unit principal direction (sign fixed: first non-negligible component
    /// is positive).
    pub principal: Vec<f64>,
    /// Column means subtracted before projecting.
    pub mean: Vec<f64>,
}

/// Frequency grid for the nonuniform DFT: scale `rho` and strictly
/// increasing integer indices `alphas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub rho: f64,
    pub alphas: Vec<i64>,
}

impl FrequencyGrid {
    pub fn new(rho: f64, alphas: Vec<i64>) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!(
                "frequency scale rho must be positive, got {rho}"
            )));
        }
        if alphas.is_empty() {
            return Err(Error::Config(
                "frequency grid needs at least one index".into(),
            ));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "frequency indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { rho, alphas })
    }

    /// Default grid: `rho = 2 pi`, indices 0..=40.
    pub fn default_sinc() -> Self {
        Self {
            rho: 2.0 * std::f64::consts::PI,
            alphas: (0..=40).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Per-peak relative-error trace across a model's training/growth steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumTrace {
    /// Indices of the tracked peaks into the frequency grid.
    pub peaks: Vec<usize>,
    /// Frequency indices (alpha values) of the tracked peaks.
    pub peak_alphas: Vec<i64>,
    /// Relative error, one row per step, one column per peak.
    #[serde(with = "crate::networks::mat_rows")]
    pub errors: Mat,
    /// Step labels (1-based).
    pub steps: Vec<usize>,
}

impl SpectrumTrace {
    /// Writes `step,peak_alpha,delta_d` rows, step-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,peak_alpha,delta_d")?;
        for (r, step) in self.steps.iter().enumerate() {
            for (c, alpha) in self.peak_alphas.iter().enumerate() {
                writeln!(out, "{step},{alpha},{}", self.errors[(r, c)])?;
            }
        }
        Ok(())
    }

    /// First step label at which the error at peak column `c` drops below
    /// `threshold`, if it ever does.
    pub fn first_step_below(&self, c: usize, threshold: f64) -> Option<usize> {
        (0..self.steps.len())
            .find(|&r| self.errors[(r, c)] < threshold)
            .map(|r| self.steps[r])
    }
}

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// Centers the rows of `x`, projects them onto the dominant eigenvector of
/// the D x D scatter matrix, and min-max rescales the projections to [0, 1].
pub fn pca_project(x: &Mat) -> Result<ProjectedInput> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::Usage(
            "projection needs at least two observations".into(),
        ));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = Mat::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    if centered.amax() == 0.0 {
        return Err(Error::Degenerate("all observations are identical".into()));
    }
    let scatter = linalg::gram(&centered);
    let eig = scatter.symmetric_eigen();
    let (top, _) =
        eig.eigenvalues
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
    let mut p: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut p {
        *v /= norm;
    }
    // Fix the sign so identical data always yields the identical direction.
    if let Some(first) = p.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            for v in &mut p {
                *v = -*v;
            }
        }
    }
    let proj: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|j| centered[(i, j)] * p[j]).sum::<f64>())
        .collect();
    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "projections are all identical; inputs carry no spread along the principal direction"
                .into(),
        ));
    }
    let x_prime = proj.iter().map(|v| (v - lo) / (hi - lo)).collect();
    Ok(ProjectedInput {
        x_prime,
        principal: p,
        mean,
    })
}

/// Nonuniform DFT: `F(alpha) = (1/N) sum_k y_k exp(-i rho x'_k alpha)`,
/// evaluated directly at every grid index.
pub fn nudft(y: &[f64], x_prime: &[f64], grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    if y.is_empty() {
        return Err(Error::Usage("nudft needs at least one sample".into()));
    }
    if y.len() != x_prime.len() {
        return Err(Error::Usage(format!(
            "nudft length mismatch: {} samples vs {} locations",
            y.len(),
            x_prime.len()
        )));
    }
    let n = y.len() as f64;
    Ok(grid
        .alphas
        .iter()
        .map(|&alpha| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (yk, xk) in y.iter().zip(x_prime) {
                let phase = -grid.rho * xk * alpha as f64;
                acc += Complex64::new(yk * phase.cos(), yk * phase.sin());
            }
            acc / n
        })
        .collect())
}

/// Indices of the strict local maxima of `magnitudes`, ranked by magnitude,
/// truncated to `max_peaks`, returned in ascending frequency order. Index 0
/// counts as a peak when it dominates its right neighbor. Maxima more than
/// twelve orders of magnitude below the global maximum are rounding noise,
/// not spectral content, and are ignored.
pub fn detect_peaks(magnitudes: &[f64], max_peaks: usize) -> Vec<usize> {
    let m = magnitudes;
    let floor = 1e-12 * m.iter().cloned().fold(0.0f64, f64::max);
    let mut candidates: Vec<usize> = Vec::new();
    if m.len() == 1 && m[0] > floor {
        candidates.push(0);
    }
    if m.len() >= 2 && m[0] > m[1] && m[0] > floor {
        candidates.push(0);
    }
    for i in 1..m.len().saturating_sub(1) {
        if m[i] > m[i - 1] && m[i] > m[i + 1] && m[i] > floor {
            candidates.push(i);
        }
    }
    candidates.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap_or(std::cmp::Ordering::Equal));
    candidates.truncate(max_peaks);
    candidates.sort_unstable();
    candidates
}

/// Relative magnitude discrepancy at each peak:
/// `| |F_model| - |F_target| | / |F_target|`. Peaks where the target
/// magnitude vanishes cannot be normalized and are excluded by reporting
/// `NaN` in their slot.
pub fn relative_error(
    f_model: &[Complex64],
    f_target: &[Complex64],
    peaks: &[usize],
) -> Result<Vec<f64>> {
    if f_model.len() != f_target.len() {
        return Err(Error::Usage(format!(
            "spectrum length mismatch: {} vs {}",
            f_model.len(),
            f_target.len()
        )));
    }
    peaks
        .iter()
        .map(|&p| {
            if p >= f_target.len() {
                return Err(Error::Usage(format!(
                    "peak index {p} outside spectrum of length {}",
                    f_target.len()
                )));
            }
            let t = f_target[p].norm();
            Ok(if t > 0.0 {
                (f_model[p].norm() - t).abs() / t
            } else {
                f64::NAN
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

/// A model family together with its growth schedule: the sequence of
/// training steps whose outputs are spectrally compared against the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// ELM sweep over hidden widths. One group of `max(l_values)` nodes is
    /// drawn per seed; step `L` uses its first `L` columns, so growth is
    /// strictly nested.
    Elm {
        l_values: Vec<usize>,
        interval: f64,
        lambda: f64,
    },
    /// BLS trained once, then widened by `additions` incremental
    /// enhancement-group steps.
    Bls {
        n_feature_groups: usize,
        nodes_per_feature_group: usize,
        init_enh_groups: usize,
        nodes_per_enh_group: usize,
        additions: usize,
        nodes_per_addition: usize,
        interval: f64,
        lambda: f64,
    },
    /// Stacked BLS deepened one block at a time.
    Stacked {
        blocks: usize,
        n_feature_groups: usize,
        nodes_per_feature_group: usize,
        m_enh_groups: usize,
        nodes_per_enh_group: usize,
        interval: f64,
        lambda: f64,
    },
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Elm { .. } => "elm",
            FamilySpec::Bls { .. } => "bls",
            FamilySpec::Stacked { .. } => "stacked",
        }
    }

    /// Default ELM sweep for the sinc experiment: L = 5, 10, ..., 200.
    pub fn fp_elm_default() -> Self {
        FamilySpec::Elm {
            l_values: (1..=40).map(|k| 5 * k).collect(),
            interval: 1.0,
            lambda: 1e-8,
        }
    }

    /// Default BLS growth for the sinc experiment: 6+6 nodes, then 24
    /// six-node additions (25 steps).
    pub fn fp_bls_default() -> Self {
        FamilySpec::Bls {
            n_feature_groups: 1,
            nodes_per_feature_group: 6,
            init_enh_groups: 1,
            nodes_per_enh_group: 6,
            additions: 24,
            nodes_per_addition: 6,
            interval: 1.0,
            lambda: 1e-8,
        }
    }

    /// Default stacked-BLS depth sweep for the sinc experiment: 14 blocks.
    pub fn fp_stacked_default() -> Self {
        FamilySpec::Stacked {
            blocks: 14,
            n_feature_groups: 1,
            nodes_per_feature_group: 6,
            m_enh_groups: 1,
            nodes_per_enh_group: 8,
            interval: 1.0,
            lambda: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::Elm { l_values, .. } => {
                if l_values.is_empty() || l_values.iter().any(|&l| l == 0) {
                    return Err(Error::Config("ELM sweep needs positive widths".into()));
                }
                if l_values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "ELM widths must be strictly increasing".into(),
                    ));
                }
            }
            FamilySpec::Bls {
                n_feature_groups,
                nodes_per_feature_group,
                ..
            } => {
                if *n_feature_groups == 0 || *nodes_per_feature_group == 0 {
                    return Err(Error::Config("BLS needs at least one feature node".into()));
                }
            }
            FamilySpec::Stacked { blocks, .. } => {
                if *blocks == 0 {
                    return Err(Error::Config(
                        "stacked sweep needs at least one block".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Runs one seeded frequency-principle experiment: projects the input,
/// detects the target-spectrum peaks once, then records the per-peak
/// relative error of the model's first output column after every growth step.
pub fn run_fp_experiment(
    data: &Dataset,
    family: &FamilySpec,
    grid: &FrequencyGrid,
    max_peaks: usize,
    seed: u64,
) -> Result<SpectrumTrace> {
    family.validate()?;
    let projected = pca_project(&data.x)?;
    let y0: Vec<f64> = data.y.column(0).iter().copied().collect();
    let f_target = nudft(&y0, &projected.x_prime, grid)?;
    let mags: Vec<f64> = f_target.iter().map(|v| v.norm()).collect();
    let peaks = detect_peaks(&mags, max_peaks);
    if peaks.is_empty() {
        return Err(Error::Degenerate(
            "target spectrum has no detectable peaks".into(),
        ));
    }
    let peak_alphas: Vec<i64> = peaks.iter().map(|&p| grid.alphas[p]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let record = |t_col: &Mat, rows: &mut Vec<Vec<f64>>| -> Result<()> {
        let t: Vec<f64> = t_col.column(0).iter().copied().collect();
        let f_model = nudft(&t, &projected.x_prime, grid)?;
        rows.push(relative_error(&f_model, &f_target, &peaks)?);
        Ok(())
    };

    match family {
        FamilySpec::Elm {
            l_values,
            interval,
            lambda,
        } => {
            let l_max = *l_values.last().unwrap();
            let group =
                RandomGroup::draw(&mut rng, data.d(), l_max, *interval, Activation::Sigmoid);
            let h_full = group.transform(&data.x)?;
            for &l in l_values {
                let h = h_full.columns(0, l).into_owned();
                let w = ridge_solve(&h, &data.y, *lambda)?;
                let t = linalg::mul(&h, false, &w, false);
                record(&t, &mut rows)?;
            }
        }
        FamilySpec::Bls {
            n_feature_groups,
            nodes_per_feature_group,
            init_enh_groups,
            nodes_per_enh_group,
            additions,
            nodes_per_addition,
            interval,
            lambda,
        } => {
            let schedule = IntervalSchedule::constant(*interval)?;
            let mut model = train_bls_with_rng(
                data,
                *n_feature_groups,
                *nodes_per_feature_group,
                *init_enh_groups,
                *nodes_per_enh_group,
                *lambda,
                &schedule,
                &mut rng,
            )?;
            record(&model.predict(&data.x)?, &mut rows)?;
            for _ in 0..*additions {
                add_enhancement_group_with_rng(
                    &mut model,
                    data,
                    *nodes_per_addition,
                    *interval,
                    &mut rng,
                )?;
                record(&model.predict(&data.x)?, &mut rows)?;
            }
        }
        FamilySpec::Stacked {
            blocks,
            n_feature_groups,
            nodes_per_feature_group,
            m_enh_groups,
            nodes_per_enh_group,
            interval,
            lambda,
        } => {
            let cfg = StackedBlockConfig {
                n_feature_groups: *n_feature_groups,
                nodes_per_feature_group: *nodes_per_feature_group,
                m_enh_groups: *m_enh_groups,
                nodes_per_enh_group: *nodes_per_enh_group,
                lambda: *lambda,
                interval_bound: *interval,
            };
            let mut model = StackedBlsModel {
                blocks: Vec::new(),
                training_residuals: Vec::new(),
                seed: None,
            };
            let mut residual = data.y.clone();
            for _ in 0..*blocks {
                extend_stacked_with_rng(&mut model, data, &mut residual, &cfg, &mut rng)?;
                record(&model.predict(&data.x)?, &mut rows)?;
            }
        }
    }

    let errors = Mat::from_fn(rows.len(), peaks.len(), |i, j| rows[i][j]);
    let steps = (1..=rows.len()).collect();
    Ok(SpectrumTrace {
        peaks,
        peak_alphas,
        errors,
        steps,
    })
}

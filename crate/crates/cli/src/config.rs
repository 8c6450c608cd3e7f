//! Experiment configuration: TOML schema, strict parsing and validation.
//!
//! Parsing is two-stage so error messages stay precise:
//!
//! 1. a permissive pass reads only the `experiment` tag;
//! 2. the whole file is then re-parsed into that experiment's config struct
//!    with `deny_unknown_fields`, so the `toml` crate reports unknown or
//!    ill-typed keys with line/column context.
//!
//! Tagged tables nested inside a config (`families` entries, `source`,
//! `bls.growth`) are internally-tagged serde enums, on which serde silently
//! ignores `deny_unknown_fields`; [`parse_config`] closes that hole by
//! checking those tables' key sets against per-variant allow-lists before
//! deserializing.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use rflnn_core::dataio::{DatasetSource, SourceKind, SINC_DOMAIN};
use rflnn_core::freqgen::FreqGuidedConfig;
use rflnn_core::poisson::{BenchMethod, PoissonBlsConfig};
use rflnn_core::schedule::IntervalSchedule;
use rflnn_core::spectrum::{FamilySpec, FrequencyGrid, DEFAULT_MAX_PEAKS};
use rflnn_core::{Error, Result};

/// A parsed config file: the experiment it describes, the optional output
/// directory override, and the raw text (hashed into the run manifest).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
    pub text: String,
}

/// One of the four experiments the CLI can run.
#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    FpSinc(FpSincConfig),
    FpDataset(FpDatasetConfig),
    FreqGuidedCompare(FreqGuidedCompareConfig),
    PoissonBench(PoissonBenchConfig),
}

pub const EXPERIMENT_NAMES: [&str; 4] = [
    "fp-sinc",
    "fp-dataset",
    "freq-guided-compare",
    "poisson-bench",
];

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::FpSinc(_) => "fp-sinc",
            ExperimentConfig::FpDataset(_) => "fp-dataset",
            ExperimentConfig::FreqGuidedCompare(_) => "freq-guided-compare",
            ExperimentConfig::PoissonBench(_) => "poisson-bench",
        }
    }

    /// Every seed the experiment will consume (recorded in the manifest).
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            ExperimentConfig::FpSinc(c) => c.seeds.clone(),
            ExperimentConfig::FpDataset(c) => c.seeds.clone(),
            ExperimentConfig::FreqGuidedCompare(c) => (1..=c.runs as u64).collect(),
            ExperimentConfig::PoissonBench(c) => c.seeds.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::FpSinc(c) => c.validate(),
            ExperimentConfig::FpDataset(c) => c.validate(),
            ExperimentConfig::FreqGuidedCompare(c) => c.validate(),
            ExperimentConfig::PoissonBench(c) => c.validate(),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

/// Frequency grid parameters (`rho` scale, harmonics `0..=alpha_max`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_alpha_max")]
    pub alpha_max: i64,
}

impl GridSpec {
    fn to_grid(&self) -> Result<FrequencyGrid> {
        if self.alpha_max < 0 {
            return Err(Error::Config(format!(
                "grid.alpha_max must be >= 0, got {}",
                self.alpha_max
            )));
        }
        FrequencyGrid::new(self.rho, (0..=self.alpha_max).collect())
    }
}

fn d_rho() -> f64 {
    2.0 * PI
}
fn d_alpha_max() -> i64 {
    40
}

fn check_family(i: usize, fam: &FamilySpec) -> Result<()> {
    let ctx = format!("families[{i}] ({})", fam.name());
    let bad = |field: &str| Error::Config(format!("{ctx}: `{field}` must be >= 1"));
    match fam {
        FamilySpec::Elm {
            l_values,
            interval,
            lambda,
        } => {
            if l_values.is_empty() || l_values.contains(&0) {
                return Err(bad("l_values (each entry)"));
            }
            if l_values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "{ctx}: `l_values` must be strictly increasing"
                )));
            }
            check_interval_lambda(&ctx, *interval, *lambda)
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
            if *n_feature_groups == 0 {
                return Err(bad("n_feature_groups"));
            }
            if *nodes_per_feature_group == 0 {
                return Err(bad("nodes_per_feature_group"));
            }
            if *init_enh_groups > 0 && *nodes_per_enh_group == 0 {
                return Err(bad("nodes_per_enh_group"));
            }
            if *additions > 0 && *nodes_per_addition == 0 {
                return Err(bad("nodes_per_addition"));
            }
            check_interval_lambda(&ctx, *interval, *lambda)
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
            if *blocks == 0 {
                return Err(bad("blocks"));
            }
            if *n_feature_groups == 0 {
                return Err(bad("n_feature_groups"));
            }
            if *nodes_per_feature_group == 0 {
                return Err(bad("nodes_per_feature_group"));
            }
            if *m_enh_groups > 0 && *nodes_per_enh_group == 0 {
                return Err(bad("nodes_per_enh_group"));
            }
            check_interval_lambda(&ctx, *interval, *lambda)
        }
    }
}

fn check_interval_lambda(ctx: &str, interval: f64, lambda: f64) -> Result<()> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(Error::Config(format!(
            "{ctx}: `interval` must be finite and > 0, got {interval}"
        )));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!(
            "{ctx}: `lambda` must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("`seeds` must list at least one seed".into()));
    }
    Ok(())
}

fn default_families() -> Vec<FamilySpec> {
    vec![
        FamilySpec::fp_elm_default(),
        FamilySpec::fp_bls_default(),
        FamilySpec::fp_stacked_default(),
    ]
}

fn fp_validate_common(
    seeds: &[u64],
    families: &Option<Vec<FamilySpec>>,
    max_peaks: usize,
    grid: &Option<GridSpec>,
) -> Result<()> {
    check_seeds(seeds)?;
    if let Some(fams) = families {
        if fams.is_empty() {
            return Err(Error::Config(
                "`families` must list at least one family".into(),
            ));
        }
        for (i, f) in fams.iter().enumerate() {
            check_family(i, f)?;
        }
    }
    if max_peaks == 0 {
        return Err(Error::Config("`max_peaks` must be >= 1".into()));
    }
    if let Some(g) = grid {
        g.to_grid()?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fp-sinc
// ---------------------------------------------------------------------------

/// Frequency-principle trace on synthetic sinc data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSincConfig {
    #[allow(dead_code)]
    experiment: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_sinc_domain")]
    pub domain: (f64, f64),
    #[serde(default = "d_fp_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub families: Option<Vec<FamilySpec>>,
    #[serde(default = "d_max_peaks")]
    pub max_peaks: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn d_samples() -> usize {
    201
}
fn d_sinc_domain() -> (f64, f64) {
    SINC_DOMAIN
}
fn d_fp_seeds() -> Vec<u64> {
    (1..=20).collect()
}
fn d_max_peaks() -> usize {
    DEFAULT_MAX_PEAKS
}

impl FpSincConfig {
    pub fn families(&self) -> Vec<FamilySpec> {
        self.families.clone().unwrap_or_else(default_families)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        match &self.grid {
            None => Ok(FrequencyGrid::default_sinc()),
            Some(g) => g.to_grid(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 3 {
            return Err(Error::Config(format!(
                "`samples` must be >= 3, got {}",
                self.samples
            )));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "`domain` must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        fp_validate_common(&self.seeds, &self.families, self.max_peaks, &self.grid)
    }
}

// ---------------------------------------------------------------------------
// fp-dataset
// ---------------------------------------------------------------------------

/// Frequency-principle trace on a loaded dataset (IDX pair, CSV or synthetic).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpDatasetConfig {
    #[allow(dead_code)]
    experiment: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub source: DatasetSource,
    /// Keep only the first `limit` rows after loading (spectral tracing on a
    /// full-size dataset is rarely what you want).
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default = "d_fp_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub families: Option<Vec<FamilySpec>>,
    #[serde(default = "d_max_peaks")]
    pub max_peaks: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl FpDatasetConfig {
    pub fn families(&self) -> Vec<FamilySpec> {
        self.families.clone().unwrap_or_else(default_families)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        match &self.grid {
            None => Ok(FrequencyGrid::default_sinc()),
            Some(g) => g.to_grid(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.source.split > 0.0 && self.source.split <= 1.0) {
            return Err(Error::Config(format!(
                "source: `split` must lie in (0, 1], got {}",
                self.source.split
            )));
        }
        if let SourceKind::SyntheticSinc { n_samples, lo, hi }
        | SourceKind::SyntheticSineMix { n_samples, lo, hi } = &self.source.kind
        {
            if *n_samples < 3 {
                return Err(Error::Config(format!(
                    "source: `n_samples` must be >= 3, got {n_samples}"
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "source: lo < hi required, got [{lo}, {hi}]"
                )));
            }
        }
        if self.limit == Some(0) {
            return Err(Error::Config("`limit` must be >= 1 when given".into()));
        }
        fp_validate_common(&self.seeds, &self.families, self.max_peaks, &self.grid)
    }
}

// ---------------------------------------------------------------------------
// freq-guided-compare
// ---------------------------------------------------------------------------

/// Paired comparison of fixed-interval vs frequency-guided BLS growth.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqGuidedCompareConfig {
    #[allow(dead_code)]
    experiment: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "d_fg_samples")]
    pub n_samples: usize,
    #[serde(default = "d_fg_domain")]
    pub domain: (f64, f64),
    /// Train fraction; the train/test split is drawn once (from
    /// `permutation_seed`) and shared by every run of both arms.
    #[serde(default = "d_fg_split")]
    pub split: f64,
    #[serde(default)]
    pub permutation_seed: u64,
    #[serde(default = "d_fg_runs")]
    pub runs: usize,
    /// Expanding-interval schedule for the guided arm; the fixed arm uses a
    /// constant schedule at this schedule's base.
    #[serde(default = "d_fg_schedule")]
    pub schedule: IntervalSchedule,
    #[serde(default)]
    pub network: FreqGuidedConfig,
}

fn d_fg_samples() -> usize {
    400
}
fn d_fg_domain() -> (f64, f64) {
    (-PI, PI)
}
fn d_fg_split() -> f64 {
    0.8
}
fn d_fg_runs() -> usize {
    30
}
fn d_fg_schedule() -> IntervalSchedule {
    IntervalSchedule::geometric(1.0, 1.4, 16.0).expect("default schedule is valid")
}

impl FreqGuidedCompareConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::Config(format!(
                "`n_samples` must be >= 10, got {}",
                self.n_samples
            )));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "`domain` must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!(
                "`split` must lie strictly in (0, 1), got {}",
                self.split
            )));
        }
        if self.runs < 2 {
            return Err(Error::Config(format!(
                "`runs` must be >= 2, got {}",
                self.runs
            )));
        }
        let n = &self.network;
        if n.n_feature_groups == 0 || n.nodes_per_feature_group == 0 {
            return Err(Error::Config(
                "network: `n_feature_groups` and `nodes_per_feature_group` must be >= 1".into(),
            ));
        }
        if n.init_enh_groups > 0 && n.nodes_per_enh_group == 0 {
            return Err(Error::Config(
                "network: `nodes_per_enh_group` must be >= 1".into(),
            ));
        }
        if n.growth_steps > 0 && n.nodes_per_addition == 0 {
            return Err(Error::Config(
                "network: `nodes_per_addition` must be >= 1".into(),
            ));
        }
        if !(n.lambda.is_finite() && n.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "network: `lambda` must be finite and >= 0, got {}",
                n.lambda
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// poisson-bench
// ---------------------------------------------------------------------------

/// Jacobi vs BLS-warm-started Jacobi benchmark on a Poisson model problem.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonBenchConfig {
    #[allow(dead_code)]
    experiment: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Problem dimension: 1 or 2.
    pub dim: usize,
    /// Grid parameter; defaults to 256 (1-D) or 64 (2-D).
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "d_tols")]
    pub tols: Vec<f64>,
    #[serde(default = "d_bench_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_reps")]
    pub reps: usize,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_methods")]
    pub methods: Vec<BenchMethod>,
    /// Cap on BLS growth steps; defaults to 8 (1-D) or 4 (2-D).
    #[serde(default)]
    pub growth_cap: Option<usize>,
    /// BLS fit configuration; defaults to the per-dimension preset.
    #[serde(default)]
    pub bls: Option<PoissonBlsConfig>,
}

fn d_tols() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}
fn d_bench_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn d_reps() -> usize {
    5
}
fn d_max_iters() -> usize {
    200_000
}
fn d_methods() -> Vec<BenchMethod> {
    vec![BenchMethod::Jacobi, BenchMethod::BlsJacobi]
}

impl PoissonBenchConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(match self.dim {
            1 => 256,
            _ => 64,
        })
    }

    /// Growth-step cap for the warm-start fit. In 2-D the growth stages cost
    /// more than the Jacobi sweeps they save, so the default disables them.
    pub fn growth_cap(&self) -> usize {
        self.growth_cap.unwrap_or(match self.dim {
            1 => 8,
            _ => 0,
        })
    }

    pub fn bls(&self) -> PoissonBlsConfig {
        self.bls.clone().unwrap_or(match self.dim {
            1 => PoissonBlsConfig::default_1d(),
            _ => PoissonBlsConfig::default_2d(),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!(
                "`dim` must be 1 or 2, got {}",
                self.dim
            )));
        }
        if self.n() < 2 {
            return Err(Error::Config(format!("`n` must be >= 2, got {}", self.n())));
        }
        if self.tols.is_empty() || self.tols.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::Config(
                "`tols` must be a non-empty list of positive values".into(),
            ));
        }
        check_seeds(&self.seeds)?;
        if self.reps == 0 {
            return Err(Error::Config("`reps` must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("`max_iters` must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config(
                "`methods` must list at least one method".into(),
            ));
        }
        self.bls().validate()
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Reads and parses a config file; any failure is a configuration error.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses config text: experiment dispatch, strict field checks, semantic
/// validation.
pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    #[derive(Deserialize)]
    struct Tag {
        experiment: Option<String>,
    }
    let tag: Tag = toml::from_str(text)
        .map_err(|e| Error::Config(format!("config is not valid TOML:\n{e}")))?;
    let name = tag.experiment.ok_or_else(|| {
        Error::Config(format!(
            "missing required key `experiment` (one of: {})",
            EXPERIMENT_NAMES.join(", ")
        ))
    })?;

    check_tagged_tables(&name, text)?;

    let experiment = match name.as_str() {
        "fp-sinc" => ExperimentConfig::FpSinc(strict(text)?),
        "fp-dataset" => ExperimentConfig::FpDataset(strict(text)?),
        "freq-guided-compare" => ExperimentConfig::FreqGuidedCompare(strict(text)?),
        "poisson-bench" => ExperimentConfig::PoissonBench(strict(text)?),
        other => {
            return Err(Error::Config(format!(
                "unknown experiment `{other}`; expected one of: {}",
                EXPERIMENT_NAMES.join(", ")
            )))
        }
    };
    experiment.validate()?;

    let output_dir = match &experiment {
        ExperimentConfig::FpSinc(c) => c.output_dir.clone(),
        ExperimentConfig::FpDataset(c) => c.output_dir.clone(),
        ExperimentConfig::FreqGuidedCompare(c) => c.output_dir.clone(),
        ExperimentConfig::PoissonBench(c) => c.output_dir.clone(),
    };
    Ok(LoadedConfig {
        experiment,
        output_dir,
        text: text.to_string(),
    })
}

fn strict<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("invalid config:\n{e}")))
}

/// Rejects unknown keys inside internally-tagged tables, which serde's
/// `deny_unknown_fields` does not reach.
fn check_tagged_tables(experiment: &str, text: &str) -> Result<()> {
    let table: toml::Table = toml::from_str(text)
        .map_err(|e| Error::Config(format!("config is not valid TOML:\n{e}")))?;

    if matches!(experiment, "fp-sinc" | "fp-dataset") {
        if let Some(toml::Value::Array(fams)) = table.get("families") {
            for (i, f) in fams.iter().enumerate() {
                let ctx = format!("families[{i}]");
                let ft = f
                    .as_table()
                    .ok_or_else(|| Error::Config(format!("{ctx} must be a table")))?;
                let kind = ft
                    .get("family")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::Config(format!("{ctx} needs a string `family` key")))?;
                let allowed: &[&str] = match kind {
                    "elm" => &["family", "l_values", "interval", "lambda"],
                    "bls" => &[
                        "family",
                        "n_feature_groups",
                        "nodes_per_feature_group",
                        "init_enh_groups",
                        "nodes_per_enh_group",
                        "additions",
                        "nodes_per_addition",
                        "interval",
                        "lambda",
                    ],
                    "stacked" => &[
                        "family",
                        "blocks",
                        "n_feature_groups",
                        "nodes_per_feature_group",
                        "m_enh_groups",
                        "nodes_per_enh_group",
                        "interval",
                        "lambda",
                    ],
                    other => {
                        return Err(Error::Config(format!(
                            "{ctx}: unknown family `{other}`; expected elm, bls or stacked"
                        )))
                    }
                };
                check_keys(ft, allowed, &ctx)?;
                check_count_fields(
                    ft,
                    &[
                        "l_values",
                        "blocks",
                        "n_feature_groups",
                        "nodes_per_feature_group",
                        "init_enh_groups",
                        "nodes_per_enh_group",
                        "m_enh_groups",
                        "additions",
                        "nodes_per_addition",
                    ],
                    &ctx,
                )?;
            }
        }
    }

    if experiment == "fp-dataset" {
        if let Some(toml::Value::Table(src)) = table.get("source") {
            let kind = src
                .get("kind")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Config("source needs a string `kind` key".into()))?;
            let allowed: &[&str] = match kind {
                "idx_pair" => &["kind", "images", "labels", "split", "normalization"],
                "csv" => &["kind", "path", "label_column", "split", "normalization"],
                "synthetic_sinc" | "synthetic_sine_mix" => {
                    &["kind", "n_samples", "lo", "hi", "split", "normalization"]
                }
                other => {
                    return Err(Error::Config(format!(
                        "source: unknown kind `{other}`; expected idx_pair, csv, \
                         synthetic_sinc or synthetic_sine_mix"
                    )))
                }
            };
            check_keys(src, allowed, "source")?;
            check_count_fields(src, &["n_samples"], "source")?;
        }
    }

    if experiment == "poisson-bench" {
        if let Some(toml::Value::Table(bls)) = table.get("bls") {
            if let Some(toml::Value::Table(growth)) = bls.get("growth") {
                let plan = growth
                    .get("plan")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::Config("bls.growth needs a string `plan` key".into()))?;
                let allowed: &[&str] = match plan {
                    "fixed" => &["plan", "nodes_per_step", "bound_schedule"],
                    "ladder" => &["plan", "rungs"],
                    other => {
                        return Err(Error::Config(format!(
                            "bls.growth: unknown plan `{other}`; expected fixed or ladder"
                        )))
                    }
                };
                check_keys(growth, allowed, "bls.growth")?;
                check_count_fields(growth, &["nodes_per_step"], "bls.growth")?;
            }
        }
    }

    Ok(())
}

fn check_keys(t: &toml::Table, allowed: &[&str], ctx: &str) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!(
                "unknown key `{k}` in {ctx}; allowed keys: {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// Rejects negative integers in count-valued keys of a tagged table. serde
/// reports such values against the table header (the tag consumes the field
/// spans), so this pre-check exists to name the exact field.
fn check_count_fields(t: &toml::Table, fields: &[&str], ctx: &str) -> Result<()> {
    for &f in fields {
        match t.get(f) {
            Some(v) => {
                if let Some(i) = v.as_integer() {
                    if i < 0 {
                        return Err(Error::Config(format!(
                            "{ctx}: `{f}` must be a non-negative integer, got {i}"
                        )));
                    }
                }
                if let Some(arr) = v.as_array() {
                    for e in arr {
                        if let Some(i) = e.as_integer() {
                            if i < 0 {
                                return Err(Error::Config(format!(
                                    "{ctx}: `{f}` entries must be non-negative integers, got {i}"
                                )));
                            }
                        }
                    }
                }
            }
            None => continue,
        }
    }
    Ok(())
}

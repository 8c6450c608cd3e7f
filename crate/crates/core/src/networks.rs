//! Random functional-linked network family: ELM, BLS and stacked BLS.
//!
//! All models share the same recipe: hidden parameters are drawn once from a
//! bounded uniform distribution and frozen; only the linear output layer is
//! trained, in closed form, by ridge regression. BLS models additionally
//! support incremental widening — a new group of enhancement nodes is
//! absorbed through a pseudoinverse block update instead of a retrain.

use crate::error::{Error, Result};
use crate::linalg::{self, hcat, vcat, Mat};
use crate::schedule::IntervalSchedule;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Default pseudoinverse truncation: singular values below
/// `DEFAULT_PINV_RTOL * sigma_max` are treated as zero.
pub const DEFAULT_PINV_RTOL: f64 = 1e-12;
/// Default ridge strength for function-fitting tasks.
pub const DEFAULT_LAMBDA_REGRESSION: f64 = 1e-8;
/// Default ridge strength for classification tasks.
pub const DEFAULT_LAMBDA_CLASSIFICATION: f64 = 1e-3;
/// Upper bound on the total node count accepted by the trainers.
pub const MAX_TOTAL_NODES: usize = 200_000;

/// Relative Frobenius threshold below which the incremental update treats the
/// projected residual block `C` as zero (an exact-zero test is meaningless in
/// floating point).
const C_ZERO_REL_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Element-wise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn eval(&self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Identity => v,
        }
    }

    /// Apply in place to every entry.
    pub fn apply_in_place(&self, m: &mut Mat) {
        if *self == Activation::Identity {
            return;
        }
        for v in m.iter_mut() {
            *v = self.eval(*v);
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation kind: {other:?}"))),
        }
    }
}

/// Element-wise application of an activation; output shape equals input shape.
pub fn activation(z: &Mat, kind: Activation) -> Mat {
    let mut out = z.clone();
    kind.apply_in_place(&mut out);
    out
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// A supervised dataset: observations are rows of `x` (N x D) with targets in
/// `y` (N x K, one-hot rows for classification).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Mat,
}

impl Dataset {
    /// Validates the type invariants: at least one row/column on each side,
    /// matching row counts, and finite entries throughout.
    pub fn new(x: Mat, y: Mat) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Usage(
                "dataset must have N >= 1, D >= 1, K >= 1".into(),
            ));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::Usage(format!(
                "dataset row mismatch: X has {} rows, Y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if !linalg::all_finite(&x) || !linalg::all_finite(&y) {
            return Err(Error::Numeric("dataset contains non-finite entries".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }
}

// ---------------------------------------------------------------------------
// Random groups
// ---------------------------------------------------------------------------

/// A group of randomly parameterized nodes: an affine map followed by an
/// element-wise activation. Weights and biases are drawn uniformly from
/// `[-interval_bound, interval_bound]` and never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGroup {
    #[serde(with = "mat_rows")]
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub interval_bound: f64,
}

impl RandomGroup {
    /// Draws a fresh group. The fill order (weights column-major, then the
    /// bias vector) is part of the determinism contract.
    pub fn draw(
        rng: &mut ChaCha8Rng,
        in_dim: usize,
        nodes: usize,
        interval_bound: f64,
        activation: Activation,
    ) -> Self {
        let dist = Uniform::new_inclusive(-interval_bound, interval_bound);
        let weights = Mat::from_fn(in_dim, nodes, |_, _| 0.0);
        let mut weights = weights;
        for v in weights.iter_mut() {
            *v = dist.sample(rng);
        }
        let bias = (0..nodes).map(|_| dist.sample(rng)).collect();
        Self {
            weights,
            bias,
            activation,
            interval_bound,
        }
    }

    pub fn nodes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// `activation(input * weights + bias)`, bias broadcast across rows.
    pub fn transform(&self, input: &Mat) -> Result<Mat> {
        if input.ncols() != self.in_dim() {
            return Err(Error::Usage(format!(
                "group expects {} input columns, got {}",
                self.in_dim(),
                input.ncols()
            )));
        }
        let mut z = linalg::mul(input, false, &self.weights, false);
        for (j, b) in self.bias.iter().enumerate() {
            z.column_mut(j).add_scalar_mut(*b);
        }
        self.activation.apply_in_place(&mut z);
        Ok(z)
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Forward evaluation shared by every model in the family.
pub trait Model {
    /// Deterministic forward pass; rows of the output correspond to rows of
    /// `x`. For classification, the argmax over the K columns is the label.
    fn predict(&self, x: &Mat) -> Result<Mat>;
}

/// Extreme learning machine: one random hidden group, linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel {
    pub hidden: RandomGroup,
    #[serde(with = "mat_rows")]
    pub output_weights: Mat,
    pub ridge_lambda: f64,
    pub seed: Option<u64>,
}

impl Model for ElmModel {
    fn predict(&self, x: &Mat) -> Result<Mat> {
        let h = self.hidden.transform(x)?;
        Ok(linalg::mul(&h, false, &self.output_weights, false))
    }
}

/// Broad learning system: feature groups map the input, enhancement groups
/// map the concatenated feature output, and the readout spans both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlsModel {
    pub feature_groups: Vec<RandomGroup>,
    pub enhancement_groups: Vec<RandomGroup>,
    #[serde(with = "mat_rows")]
    pub output_weights: Mat,
    pub ridge_lambda: f64,
    pub seed: Option<u64>,
    /// Pseudoinverse of the state matrix on the training data, maintained
    /// across incremental growth steps. Not serialized; call
    /// [`BlsModel::refresh_pinv`] after deserializing if growth is needed.
    #[serde(skip)]
    pub cached_pinv: Option<Mat>,
}

impl BlsModel {
    /// Concatenated feature-group output `Z` for the given input.
    pub fn feature_map(&self, x: &Mat) -> Result<Mat> {
        let blocks = self
            .feature_groups
            .iter()
            .map(|g| g.transform(x))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Mat> = blocks.iter().collect();
        Ok(hcat(&refs))
    }

    fn design_from_features(&self, z: &Mat) -> Result<Mat> {
        let mut blocks: Vec<Mat> = Vec::with_capacity(1 + self.enhancement_groups.len());
        blocks.push(z.clone());
        for g in &self.enhancement_groups {
            blocks.push(g.transform(z)?);
        }
        let refs: Vec<&Mat> = blocks.iter().collect();
        Ok(hcat(&refs))
    }

    /// State matrix `A = [Z | H]` for the given input.
    pub fn design(&self, x: &Mat) -> Result<Mat> {
        let z = self.feature_map(x)?;
        self.design_from_features(&z)
    }

    pub fn total_nodes(&self) -> usize {
        self.feature_groups
            .iter()
            .map(RandomGroup::nodes)
            .sum::<usize>()
            + self
                .enhancement_groups
                .iter()
                .map(RandomGroup::nodes)
                .sum::<usize>()
    }

    /// Builds a model from explicitly constructed groups and fits the readout
    /// by ridge regression, caching the design pseudoinverse for growth.
    pub fn fit_from_groups(
        data: &Dataset,
        feature_groups: Vec<RandomGroup>,
        enhancement_groups: Vec<RandomGroup>,
        lambda: f64,
    ) -> Result<Self> {
        if feature_groups.is_empty() {
            return Err(Error::Config(
                "at least one feature group is required".into(),
            ));
        }
        let mut model = Self {
            feature_groups,
            enhancement_groups,
            output_weights: Mat::zeros(0, 0),
            ridge_lambda: lambda,
            seed: None,
            cached_pinv: None,
        };
        let a = model.design(&data.x)?;
        model.output_weights = ridge_solve(&a, &data.y, lambda)?;
        model.cached_pinv = Some(pinv(&a)?);
        Ok(model)
    }

    /// Recomputes the cached pseudoinverse on the given training data (needed
    /// before growing a deserialized model).
    pub fn refresh_pinv(&mut self, data: &Dataset) -> Result<()> {
        let a = self.design(&data.x)?;
        self.cached_pinv = Some(pinv(&a)?);
        Ok(())
    }
}

impl Model for BlsModel {
    fn predict(&self, x: &Mat) -> Result<Mat> {
        let a = self.design(x)?;
        Ok(linalg::mul(&a, false, &self.output_weights, false))
    }
}

/// Stacked BLS: blocks trained sequentially, each on the residual left by the
/// sum of its predecessors; prediction is the sum of block outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedBlsModel {
    pub blocks: Vec<BlsModel>,
    /// Training-residual Frobenius norm recorded after each block was added.
    pub training_residuals: Vec<f64>,
    pub seed: Option<u64>,
}

impl StackedBlsModel {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }
}

impl Model for StackedBlsModel {
    fn predict(&self, x: &Mat) -> Result<Mat> {
        let mut acc: Option<Mat> = None;
        for block in &self.blocks {
            let p = block.predict(x)?;
            acc = Some(match acc {
                None => p,
                Some(mut a) => {
                    a += p;
                    a
                }
            });
        }
        acc.ok_or_else(|| Error::State("stacked model has no blocks".into()))
    }
}

// ---------------------------------------------------------------------------
// Closed-form solvers
// ---------------------------------------------------------------------------

/// Ridge regression readout: `(lambda I + A^T A)^{-1} A^T Y` for positive
/// `lambda`; the minimum-norm least-squares solution (via pseudoinverse) when
/// `lambda = 0`, which also covers rank-deficient designs without error.
pub fn ridge_solve(a: &Mat, y: &Mat, lambda: f64) -> Result<Mat> {
    if a.nrows() != y.nrows() {
        return Err(Error::Usage(format!(
            "ridge_solve row mismatch: A has {} rows, Y has {}",
            a.nrows(),
            y.nrows()
        )));
    }
    if !linalg::all_finite(a) || !linalg::all_finite(y) {
        return Err(Error::Numeric(
            "ridge_solve inputs contain non-finite entries".into(),
        ));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        let ai = pinv(a)?;
        return Ok(linalg::mul(&ai, false, y, false));
    }
    let mut g = linalg::gram(a);
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    let aty = linalg::mul(a, true, y, false);
    match g.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&aty)),
        // lambda > 0 makes G positive definite in exact arithmetic; if extreme
        // conditioning defeats the factorization, fall back to the SVD route.
        None => {
            let gi = linalg::pinv(&g, DEFAULT_PINV_RTOL)?;
            Ok(linalg::mul(&gi, false, &aty, false))
        }
    }
}

/// Moore-Penrose pseudoinverse with the default truncation threshold.
pub fn pinv(a: &Mat) -> Result<Mat> {
    linalg::pinv(a, DEFAULT_PINV_RTOL)
}

/// Moore-Penrose pseudoinverse with an explicit relative truncation.
pub fn pinv_with_rtol(a: &Mat, rtol: f64) -> Result<Mat> {
    linalg::pinv(a, rtol)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Trains an ELM with `l` hidden nodes drawn uniformly from
/// `[-interval, interval]`. Deterministic given the seed.
pub fn train_elm(
    data: &Dataset,
    l: usize,
    interval: f64,
    lambda: f64,
    seed: u64,
) -> Result<ElmModel> {
    if l == 0 {
        return Err(Error::Config("ELM needs at least one hidden node".into()));
    }
    if l > MAX_TOTAL_NODES {
        return Err(Error::Config(format!(
            "ELM hidden node count {l} exceeds the configured maximum {MAX_TOTAL_NODES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = RandomGroup::draw(&mut rng, data.d(), l, interval, Activation::Sigmoid);
    let h = hidden.transform(&data.x)?;
    let output_weights = ridge_solve(&h, &data.y, lambda)?;
    Ok(ElmModel {
        hidden,
        output_weights,
        ridge_lambda: lambda,
        seed: Some(seed),
    })
}

/// Trains a BLS: `n_feature_groups` groups of `nodes_per_feature_group`
/// tanh feature nodes mapping the input, `m_enh_groups` groups of
/// `nodes_per_enh_group` tanh enhancement nodes mapping the concatenated
/// features, readout by ridge regression. All initial groups draw their
/// bounds from `schedule.interval_at(0)`; growth steps advance the schedule.
#[allow(clippy::too_many_arguments)]
pub fn train_bls(
    data: &Dataset,
    n_feature_groups: usize,
    nodes_per_feature_group: usize,
    m_enh_groups: usize,
    nodes_per_enh_group: usize,
    lambda: f64,
    schedule: &IntervalSchedule,
    seed: u64,
) -> Result<BlsModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = train_bls_with_rng(
        data,
        n_feature_groups,
        nodes_per_feature_group,
        m_enh_groups,
        nodes_per_enh_group,
        lambda,
        schedule,
        &mut rng,
    )?;
    model.seed = Some(seed);
    Ok(model)
}

/// RNG-stream variant used by the incremental experiment drivers so that a
/// single seeded stream covers an initial model plus its growth steps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_bls_with_rng(
    data: &Dataset,
    n_feature_groups: usize,
    nodes_per_feature_group: usize,
    m_enh_groups: usize,
    nodes_per_enh_group: usize,
    lambda: f64,
    schedule: &IntervalSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<BlsModel> {
    if n_feature_groups == 0 || nodes_per_feature_group == 0 {
        return Err(Error::Config(
            "BLS needs at least one feature group with >= 1 nodes".into(),
        ));
    }
    if m_enh_groups > 0 && nodes_per_enh_group == 0 {
        return Err(Error::Config("enhancement groups need >= 1 nodes".into()));
    }
    let total = n_feature_groups * nodes_per_feature_group + m_enh_groups * nodes_per_enh_group;
    if total > MAX_TOTAL_NODES {
        return Err(Error::Config(format!(
            "total node count {total} exceeds the configured maximum {MAX_TOTAL_NODES}"
        )));
    }
    let bound = schedule.interval_at(0);
    let feature_groups: Vec<RandomGroup> = (0..n_feature_groups)
        .map(|_| {
            RandomGroup::draw(
                rng,
                data.d(),
                nodes_per_feature_group,
                bound,
                Activation::Tanh,
            )
        })
        .collect();
    let feat_nodes = n_feature_groups * nodes_per_feature_group;
    let enhancement_groups: Vec<RandomGroup> = (0..m_enh_groups)
        .map(|_| {
            RandomGroup::draw(
                rng,
                feat_nodes,
                nodes_per_enh_group,
                bound,
                Activation::Tanh,
            )
        })
        .collect();
    BlsModel::fit_from_groups(data, feature_groups, enhancement_groups, lambda)
}

/// Which branch the incremental update took for the projected block `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GrowthBranch {
    /// `C` carried new directions: `B^T = pinv(C)`.
    NewDirections,
    /// `C ~ 0` (new columns lie in the span of the old design):
    /// `B^T = (I + D^T D)^{-1} D^T A^+`.
    InSpan,
}

/// Core of the incremental update, operating on an already evaluated block.
///
/// With `A` the previous design and `H` the new columns:
/// `D = A^+ H`, `C = H - A D`, and the extended pseudoinverse/readout are
/// `[A^+ - D B^T; B^T]` and `[W - D B^T Y; B^T Y]`.
pub(crate) fn grow_with_columns(
    model: &mut BlsModel,
    data: &Dataset,
    group: RandomGroup,
    h_new: Mat,
) -> Result<GrowthBranch> {
    let pinv_a = model
        .cached_pinv
        .as_ref()
        .ok_or_else(|| {
            Error::State(
                "cached pseudoinverse missing; retrain (or refresh_pinv) before growing".into(),
            )
        })?
        .clone();
    let a = model.design(&data.x)?;
    if pinv_a.nrows() != a.ncols() || pinv_a.ncols() != a.nrows() {
        return Err(Error::State(
            "cached pseudoinverse shape is inconsistent with the training data".into(),
        ));
    }
    let d = linalg::mul(&pinv_a, false, &h_new, false);
    let mut c = h_new.clone();
    linalg::dgemm(-1.0, &a, false, &d, false, 1.0, &mut c);

    let branch;
    let bt = if c.norm() <= C_ZERO_REL_TOL * a.norm() {
        branch = GrowthBranch::InSpan;
        // (I + D^T D)^{-1} D^T A^+
        let mut dtd = linalg::gram(&d);
        for i in 0..dtd.nrows() {
            dtd[(i, i)] += 1.0;
        }
        let dt_pinv = linalg::mul(&d, true, &pinv_a, false);
        match dtd.clone().cholesky() {
            Some(chol) => chol.solve(&dt_pinv),
            None => linalg::mul(
                &linalg::pinv(&dtd, DEFAULT_PINV_RTOL)?,
                false,
                &dt_pinv,
                false,
            ),
        }
    } else {
        branch = GrowthBranch::NewDirections;
        pinv(&c)?
    };

    let bty = linalg::mul(&bt, false, &data.y, false);
    let mut w_top = model.output_weights.clone();
    linalg::dgemm(-1.0, &d, false, &bty, false, 1.0, &mut w_top);
    let mut pinv_top = pinv_a;
    linalg::dgemm(-1.0, &d, false, &bt, false, 1.0, &mut pinv_top);

    model.output_weights = vcat(&w_top, &bty);
    model.cached_pinv = Some(vcat(&pinv_top, &bt));
    model.enhancement_groups.push(group);
    Ok(branch)
}

pub(crate) fn add_enhancement_group_with_rng(
    model: &mut BlsModel,
    data: &Dataset,
    nodes: usize,
    interval_bound: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GrowthBranch> {
    if nodes == 0 {
        return Err(Error::Config("enhancement group needs >= 1 nodes".into()));
    }
    let z = model.feature_map(&data.x)?;
    let act = model
        .enhancement_groups
        .last()
        .map(|g| g.activation)
        .unwrap_or(Activation::Tanh);
    let group = RandomGroup::draw(rng, z.ncols(), nodes, interval_bound, act);
    let h_new = group.transform(&z)?;
    grow_with_columns(model, data, group, h_new)
}

/// Adds one group of enhancement nodes to a trained BLS without retraining:
/// the readout and cached pseudoinverse are extended by the block update.
/// Requires the cached pseudoinverse produced by training on the same data.
pub fn add_enhancement_group(
    model: &BlsModel,
    data: &Dataset,
    nodes: usize,
    interval_bound: f64,
    seed: u64,
) -> Result<BlsModel> {
    let mut grown = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_enhancement_group_with_rng(&mut grown, data, nodes, interval_bound, &mut rng)?;
    Ok(grown)
}

/// Per-block architecture for stacked BLS training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedBlockConfig {
    pub n_feature_groups: usize,
    pub nodes_per_feature_group: usize,
    pub m_enh_groups: usize,
    pub nodes_per_enh_group: usize,
    pub lambda: f64,
    pub interval_bound: f64,
}

/// Appends one residual-trained block, updating the running residual target
/// and the recorded residual norms. `residual` holds `Y - sum(predictions)`.
pub(crate) fn extend_stacked_with_rng(
    model: &mut StackedBlsModel,
    data: &Dataset,
    residual: &mut Mat,
    cfg: &StackedBlockConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let target = Dataset::new(data.x.clone(), residual.clone())?;
    let schedule = IntervalSchedule::constant(cfg.interval_bound)?;
    let block = train_bls_with_rng(
        &target,
        cfg.n_feature_groups,
        cfg.nodes_per_feature_group,
        cfg.m_enh_groups,
        cfg.nodes_per_enh_group,
        cfg.lambda,
        &schedule,
        rng,
    )?;
    let pred = block.predict(&data.x)?;
    *residual -= pred;
    model.blocks.push(block);
    model.training_residuals.push(residual.norm());
    Ok(())
}

/// Trains a stacked BLS of `block_count` blocks; block 1 targets `Y`, every
/// later block targets the residual left by the sum of its predecessors.
pub fn train_stacked_bls(
    data: &Dataset,
    block_count: usize,
    cfg: &StackedBlockConfig,
    seed: u64,
) -> Result<StackedBlsModel> {
    if block_count == 0 {
        return Err(Error::Config("stacked BLS needs at least one block".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = StackedBlsModel {
        blocks: Vec::new(),
        training_residuals: Vec::new(),
        seed: Some(seed),
    };
    let mut residual = data.y.clone();
    for _ in 0..block_count {
        extend_stacked_with_rng(&mut model, data, &mut residual, cfg, &mut rng)?;
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

/// Serializes matrices as row-major nested arrays so model JSON stays
/// readable and toolable.
pub(crate) mod mat_rows {
    use super::Mat;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        serde::Serialize::serialize(&rows, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

macro_rules! impl_json_roundtrip {
    ($ty:ty) => {
        impl $ty {
            /// Serializes the model to a JSON document (weights as nested
            /// arrays, activation tags as strings, lambda and seed included).
            pub fn to_json(&self) -> Result<String> {
                serde_json::to_string_pretty(self)
                    .map_err(|e| Error::Usage(format!("model serialization failed: {e}")))
            }

            /// Parses a model from its JSON document.
            pub fn from_json(s: &str) -> Result<Self> {
                serde_json::from_str(s).map_err(|e| Error::ParseLine {
                    line: e.line(),
                    msg: e.to_string(),
                })
            }
        }
    };
}

impl_json_roundtrip!(ElmModel);
impl_json_roundtrip!(BlsModel);
impl_json_roundtrip!(StackedBlsModel);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_mat(r: &mut ChaCha8Rng, n: usize, m: usize) -> Mat {
        Mat::from_fn(n, m, |_, _| r.gen_range(-1.0..1.0))
    }

    fn sinc_dataset(n: usize) -> Dataset {
        let lo = -5.0 * std::f64::consts::PI;
        let hi = 5.0 * std::f64::consts::PI;
        let x = Mat::from_fn(n, 1, |i, _| lo + (hi - lo) * i as f64 / (n - 1) as f64);
        let y = Mat::from_fn(n, 1, |i, _| {
            let v: f64 = x[(i, 0)];
            if v == 0.0 {
                1.0
            } else {
                v.sin() / v
            }
        });
        Dataset::new(x, y).unwrap()
    }

    // -- activation ---------------------------------------------------------

    #[test]
    fn tanh_of_zero_matrix_is_zero() {
        let z = Mat::zeros(3, 4);
        assert_eq!(activation(&z, Activation::Tanh), Mat::zeros(3, 4));
    }

    #[test]
    fn identity_returns_input() {
        let m = Mat::from_fn(2, 3, |i, j| (i + 2 * j) as f64);
        assert_eq!(activation(&m, Activation::Identity), m);
    }

    #[test]
    fn tanh_saturates_at_large_arguments() {
        let m = Mat::from_element(1, 1, 1e6);
        assert!((activation(&m, Activation::Tanh)[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_activation_kind_is_a_config_error() {
        assert!(matches!(
            "relu".parse::<Activation>(),
            Err(Error::Config(_))
        ));
        assert_eq!(
            "Sigmoid".parse::<Activation>().unwrap(),
            Activation::Sigmoid
        );
    }

    // -- ridge_solve / pinv --------------------------------------------------

    #[test]
    fn ridge_on_identity_design_shrinks_by_half() {
        let a = Mat::identity(2, 2);
        let y = Mat::from_column_slice(2, 1, &[1.0, 2.0]);
        let w = ridge_solve(&a, &y, 1.0).unwrap();
        assert!((w[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((w[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_zero_with_orthonormal_columns_collapses_to_at_y() {
        // Orthonormal 3-column frame in R^4.
        let mut a = Mat::zeros(4, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let s = 1.0 / 2.0f64.sqrt();
        a[(2, 2)] = s;
        a[(3, 2)] = s;
        let y = random_mat(&mut rng(3), 4, 2);
        let w = ridge_solve(&a, &y, 0.0).unwrap();
        let want = linalg::mul(&a, true, &y, false);
        assert!((w - want).norm() < 1e-10);
    }

    #[test]
    fn ridge_matches_direct_normal_equation_inverse() {
        let mut r = rng(7);
        let a = random_mat(&mut r, 6, 3);
        let y = random_mat(&mut r, 6, 2);
        let lambda = 0.1;
        let w = ridge_solve(&a, &y, lambda).unwrap();
        // Independent oracle: explicit dense inverse of the 3x3 normal matrix.
        let normal = linalg::gram(&a) + lambda * Mat::identity(3, 3);
        let oracle = normal.try_inverse().unwrap() * linalg::mul(&a, true, &y, false);
        assert!((w - oracle).norm() < 1e-10);
    }

    #[test]
    fn ridge_rejects_bad_inputs() {
        let a = Mat::identity(2, 2);
        let y = Mat::from_element(2, 1, 1.0);
        assert!(matches!(ridge_solve(&a, &y, -1.0), Err(Error::Config(_))));
        let bad = Mat::from_element(2, 1, f64::NAN);
        assert!(matches!(ridge_solve(&a, &bad, 1.0), Err(Error::Numeric(_))));
        let y3 = Mat::from_element(3, 1, 1.0);
        assert!(matches!(ridge_solve(&a, &y3, 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn ridge_solution_is_a_minimum_of_the_objective() {
        // Perturbing W never decreases ||AW - Y||^2 + lambda ||W||^2.
        let mut r = rng(11);
        let a = random_mat(&mut r, 12, 5);
        let y = random_mat(&mut r, 12, 2);
        let lambda = 0.05;
        let w = ridge_solve(&a, &y, lambda).unwrap();
        let objective = |w: &Mat| {
            let resid = linalg::mul(&a, false, w, false) - &y;
            resid.norm_squared() + lambda * w.norm_squared()
        };
        let base = objective(&w);
        for _ in 0..20 {
            let mut delta = random_mat(&mut r, 5, 2);
            delta *= 1e-3 / delta.norm();
            assert!(objective(&(w.clone() + delta)) >= base);
        }
    }

    #[test]
    fn pinv_satisfies_the_penrose_identities() {
        let mut r = rng(13);
        let a = random_mat(&mut r, 5, 3);
        let ai = pinv(&a).unwrap();
        let aia = linalg::mul(&ai, false, &a, false);
        assert!(
            (aia - Mat::identity(3, 3)).norm() < 1e-10,
            "A+A = I for full column rank"
        );
        // The four Penrose identities, checked numerically.
        let a_ai = linalg::mul(&a, false, &ai, false);
        assert!((linalg::mul(&a_ai, false, &a, false) - &a).norm() < 1e-10);
        let ai_a = linalg::mul(&ai, false, &a, false);
        assert!((linalg::mul(&ai_a, false, &ai, false) - &ai).norm() < 1e-10);
        assert!((a_ai.transpose() - &a_ai).norm() < 1e-10);
        assert!((ai_a.transpose() - &ai_a).norm() < 1e-10);
    }

    // -- train_elm ------------------------------------------------------------

    #[test]
    fn elm_training_is_deterministic_given_the_seed() {
        let data = sinc_dataset(40);
        let m1 = train_elm(&data, 25, 1.0, 1e-8, 42).unwrap();
        let m2 = train_elm(&data, 25, 1.0, 1e-8, 42).unwrap();
        assert_eq!(m1, m2, "equal seeds must give bit-identical models");
        let m3 = train_elm(&data, 25, 1.0, 1e-8, 43).unwrap();
        assert_ne!(m1.hidden.weights, m3.hidden.weights);
    }

    #[test]
    fn elm_with_zero_targets_learns_zero_weights() {
        let x = random_mat(&mut rng(5), 20, 3);
        let data = Dataset::new(x, Mat::zeros(20, 2)).unwrap();
        let m = train_elm(&data, 10, 1.0, 1e-6, 1).unwrap();
        assert!(m.output_weights.norm() < 1e-12);
    }

    #[test]
    fn elm_fits_sinc_to_small_training_error() {
        // The wide sampling interval gives the sigmoid features enough
        // sharpness to resolve the sinc oscillations on [-5pi, 5pi].
        let data = sinc_dataset(50);
        let m = train_elm(&data, 100, 4.0, 1e-8, 3).unwrap();
        let pred = m.predict(&data.x).unwrap();
        let rmse = ((pred - &data.y).norm_squared() / 50.0).sqrt();
        // Oracle: the direct least-squares residual on the same hidden layer
        // is tiny; ridge with lambda=1e-8 must stay close to it.
        let h = m.hidden.transform(&data.x).unwrap();
        let w_ls = ridge_solve(&h, &data.y, 0.0).unwrap();
        let rmse_ls =
            ((linalg::mul(&h, false, &w_ls, false) - &data.y).norm_squared() / 50.0).sqrt();
        assert!(rmse < 1e-2, "ELM training RMSE {rmse} above 1e-2");
        assert!(rmse_ls <= rmse + 1e-12);
    }

    #[test]
    fn elm_node_count_guard() {
        let data = sinc_dataset(10);
        assert!(matches!(
            train_elm(&data, 0, 1.0, 1e-8, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_elm(&data, MAX_TOTAL_NODES + 1, 1.0, 1e-8, 1),
            Err(Error::Config(_))
        ));
    }

    // -- train_bls -------------------------------------------------------------

    #[test]
    fn bls_with_identity_groups_reduces_to_ridge_on_x() {
        // One feature group, identity activation, weights = I, bias = 0,
        // no enhancement groups: the design equals X itself.
        let mut r = rng(17);
        let x = random_mat(&mut r, 15, 4);
        let y = random_mat(&mut r, 15, 2);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let group = RandomGroup {
            weights: Mat::identity(4, 4),
            bias: vec![0.0; 4],
            activation: Activation::Identity,
            interval_bound: 1.0,
        };
        let model = BlsModel::fit_from_groups(&data, vec![group], vec![], 0.3).unwrap();
        let want = ridge_solve(&x, &y, 0.3).unwrap();
        assert!((model.output_weights.clone() - want).norm() < 1e-12);
    }

    #[test]
    fn bls_training_is_deterministic_given_the_seed() {
        let data = sinc_dataset(30);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let m1 = train_bls(&data, 2, 4, 1, 6, 1e-8, &sched, 9).unwrap();
        let m2 = train_bls(&data, 2, 4, 1, 6, 1e-8, &sched, 9).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn bls_rejects_zero_feature_groups() {
        let data = sinc_dataset(10);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        assert!(matches!(
            train_bls(&data, 0, 4, 1, 6, 1e-8, &sched, 1),
            Err(Error::Config(_))
        ));
    }

    // -- add_enhancement_group ---------------------------------------------------

    #[test]
    fn orthogonal_new_column_takes_the_new_directions_branch() {
        // Design = [e1 | e2] in R^4; a new column orthogonal to its span must
        // pass through C = column, B^T = C+.
        let x = Mat::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let y = Mat::from_fn(4, 1, |i, _| i as f64);
        let data = Dataset::new(x, y).unwrap();
        let group = RandomGroup {
            weights: Mat::identity(2, 2),
            bias: vec![0.0; 2],
            activation: Activation::Identity,
            interval_bound: 1.0,
        };
        let mut model = BlsModel::fit_from_groups(&data, vec![group], vec![], 0.0).unwrap();

        let new_group = RandomGroup {
            weights: Mat::zeros(2, 1),
            bias: vec![0.0],
            activation: Activation::Identity,
            interval_bound: 1.0,
        };
        let h_new = Mat::from_fn(4, 1, |i, _| if i == 2 { 2.0 } else { 0.0 });
        // Replay the update math to observe C directly.
        let a = model.design(&data.x).unwrap();
        let d = linalg::mul(model.cached_pinv.as_ref().unwrap(), false, &h_new, false);
        let c = h_new.clone() - linalg::mul(&a, false, &d, false);
        assert!(
            (c.clone() - h_new.clone()).norm() < 1e-12,
            "C equals the orthogonal column"
        );

        let branch = grow_with_columns(&mut model, &data, new_group, h_new.clone()).unwrap();
        assert_eq!(branch, GrowthBranch::NewDirections);
        // B^T occupies the last row of the extended pseudoinverse.
        let pinv_new = model.cached_pinv.as_ref().unwrap();
        let bt = pinv_new.row(pinv_new.nrows() - 1).clone_owned();
        let ct = pinv(&c).unwrap();
        assert!(
            (bt - ct).norm() < 1e-12,
            "B^T = C+ when C carries the new column"
        );
    }

    #[test]
    fn incremental_growth_matches_batch_training() {
        // Grow by one group and compare against a batch solve on the
        // concatenated design (lambda = 0 so both sides are the
        // minimum-norm least-squares solution).
        let data = sinc_dataset(40);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let mut rng_all = rng(21);
        let grown = {
            let mut m = train_bls_with_rng(&data, 1, 5, 1, 4, 0.0, &sched, &mut rng_all).unwrap();
            add_enhancement_group_with_rng(&mut m, &data, 4, 1.0, &mut rng_all).unwrap();
            m
        };
        let a_full = grown.design(&data.x).unwrap();
        let w_batch = ridge_solve(&a_full, &data.y, 0.0).unwrap();
        let rel = (grown.output_weights.clone() - &w_batch).norm() / w_batch.norm();
        assert!(rel < 1e-6, "incremental vs batch relative gap {rel}");
    }

    #[test]
    fn duplicated_columns_take_the_in_span_branch_and_keep_predictions() {
        let data = sinc_dataset(35);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let mut r = rng(23);
        let mut model = train_bls_with_rng(&data, 1, 5, 1, 6, 1e-10, &sched, &mut r).unwrap();
        let before = model.predict(&data.x).unwrap();
        // Duplicate the existing enhancement group exactly.
        let dup_group = model.enhancement_groups[0].clone();
        let z = model.feature_map(&data.x).unwrap();
        let h_dup = dup_group.transform(&z).unwrap();
        let branch = grow_with_columns(&mut model, &data, dup_group, h_dup).unwrap();
        assert_eq!(
            branch,
            GrowthBranch::InSpan,
            "exact duplicates must hit the C = 0 branch"
        );
        let after = model.predict(&data.x).unwrap();
        assert!(
            (after - before).norm() < 1e-8,
            "training-data output must be unchanged"
        );
    }

    #[test]
    fn growth_without_cached_pinv_is_a_state_error() {
        let data = sinc_dataset(20);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let mut model = train_bls(&data, 1, 4, 1, 4, 1e-8, &sched, 2).unwrap();
        model.cached_pinv = None;
        let out = add_enhancement_group(&model, &data, 3, 1.0, 5);
        assert!(matches!(out, Err(Error::State(_))));
    }

    #[test]
    fn penrose_identities_hold_after_every_growth_step() {
        // Inputs on [-1, 1] keep the tanh features away from saturation, so
        // the design matrix stays well conditioned and the incrementally
        // updated pseudoinverse must track the true one closely.
        let mut r = rng(29);
        let x = random_mat(&mut r, 30, 2);
        let y = random_mat(&mut r, 30, 1);
        let data = Dataset::new(x, y).unwrap();
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let mut model = train_bls_with_rng(&data, 1, 4, 1, 4, 1e-8, &sched, &mut r).unwrap();
        for _ in 0..3 {
            add_enhancement_group_with_rng(&mut model, &data, 3, 1.0, &mut r).unwrap();
            let a = model.design(&data.x).unwrap();
            let ai = model.cached_pinv.as_ref().unwrap();
            let ai_a_ai = linalg::mul(&linalg::mul(ai, false, &a, false), false, ai, false);
            let rel = (ai_a_ai - ai).norm() / ai.norm();
            assert!(rel < 1e-8, "A+ A A+ = A+ violated: {rel}");
        }
    }

    // -- stacked ----------------------------------------------------------------

    fn block_cfg() -> StackedBlockConfig {
        StackedBlockConfig {
            n_feature_groups: 1,
            nodes_per_feature_group: 6,
            m_enh_groups: 1,
            nodes_per_enh_group: 8,
            lambda: 1e-8,
            interval_bound: 1.0,
        }
    }

    #[test]
    fn one_block_stack_equals_plain_bls() {
        let data = sinc_dataset(40);
        let stacked = train_stacked_bls(&data, 1, &block_cfg(), 31).unwrap();
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let plain = train_bls(&data, 1, 6, 1, 8, 1e-8, &sched, 31).unwrap();
        assert_eq!(stacked.blocks[0].output_weights, plain.output_weights);
        assert_eq!(stacked.blocks[0].feature_groups, plain.feature_groups);
    }

    #[test]
    fn block_after_exact_fit_contributes_nothing() {
        let x = random_mat(&mut rng(37), 25, 2);
        let data = Dataset::new(x, Mat::zeros(25, 1)).unwrap();
        let stacked = train_stacked_bls(&data, 2, &block_cfg(), 1).unwrap();
        // Zero targets are fitted exactly by block 1 (W = 0), so block 2 sees a
        // zero residual and its readout must vanish as well.
        assert!(stacked.blocks[1].output_weights.norm() < 1e-12);
    }

    #[test]
    fn stacked_training_residuals_are_non_increasing() {
        let data = sinc_dataset(60);
        let stacked = train_stacked_bls(&data, 3, &block_cfg(), 5).unwrap();
        let r = &stacked.training_residuals;
        assert_eq!(r.len(), 3);
        for w in r.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "residuals must be non-increasing: {r:?}"
            );
        }
    }

    // -- predict ------------------------------------------------------------------

    #[test]
    fn interpolating_model_reproduces_training_targets() {
        // Identity design (feature group = identity on a square X) with
        // lambda = 0 interpolates exactly.
        let x = Mat::identity(5, 5);
        let y = random_mat(&mut rng(41), 5, 2);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let group = RandomGroup {
            weights: Mat::identity(5, 5),
            bias: vec![0.0; 5],
            activation: Activation::Identity,
            interval_bound: 1.0,
        };
        let model = BlsModel::fit_from_groups(&data, vec![group], vec![], 0.0).unwrap();
        assert!((model.predict(&x).unwrap() - y).norm() < 1e-10);
    }

    #[test]
    fn zero_output_weights_predict_zero() {
        let data = sinc_dataset(20);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let mut model = train_bls(&data, 1, 4, 1, 4, 1e-8, &sched, 2).unwrap();
        model.output_weights.fill(0.0);
        assert_eq!(model.predict(&data.x).unwrap(), Mat::zeros(20, 1));
    }

    #[test]
    fn stacked_prediction_is_the_sum_of_block_predictions() {
        let data = sinc_dataset(30);
        let stacked = train_stacked_bls(&data, 3, &block_cfg(), 7).unwrap();
        let mut sum = Mat::zeros(30, 1);
        for b in &stacked.blocks {
            sum += b.predict(&data.x).unwrap();
        }
        assert!((stacked.predict(&data.x).unwrap() - sum).norm() < 1e-12);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let data = sinc_dataset(20);
        let m = train_elm(&data, 5, 1.0, 1e-8, 1).unwrap();
        let bad = Mat::zeros(4, 3);
        assert!(matches!(m.predict(&bad), Err(Error::Usage(_))));
    }

    // -- serialization ---------------------------------------------------------------

    #[test]
    fn bls_json_roundtrip_is_exact() {
        let data = sinc_dataset(25);
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let model = train_bls(&data, 1, 4, 1, 5, 1e-8, &sched, 77).unwrap();
        let text = model.to_json().unwrap();
        let back = BlsModel::from_json(&text).unwrap();
        assert_eq!(back.output_weights, model.output_weights);
        assert_eq!(back.feature_groups, model.feature_groups);
        assert_eq!(back.seed, Some(77));
        assert!(
            back.cached_pinv.is_none(),
            "pseudoinverse cache is not serialized"
        );
        // A refreshed cache permits further growth.
        let mut back = back;
        back.refresh_pinv(&data).unwrap();
        assert!(add_enhancement_group(&back, &data, 3, 1.0, 9).is_ok());
    }
}

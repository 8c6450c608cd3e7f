//! Frequency-guided BLS generation: spectral analysis of the tanh unit, the
//! expanding weight-interval schedule, and the paired comparison harness that
//! pits the guided schedule against the fixed-interval baseline.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::networks::{
    add_enhancement_group_with_rng, train_bls_with_rng, BlsModel, Dataset, Model,
};
pub use crate::schedule::{IntervalSchedule, ScheduleKind};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Above this value of `|pi zeta / 2w|` the closed-form spectrum switches to
/// its asymptotic branches (the exact denominator would overflow around 710).
pub const ASYMPTOTIC_SWITCH: f64 = 30.0;

// ---------------------------------------------------------------------------
// tanh spectrum
// ---------------------------------------------------------------------------

/// Fourier transform of `tanh(wx + b)` at frequency `zeta` (principal-value
/// sense, convention `F(zeta) = integral f(x) exp(-i zeta x) dx`):
///
/// `sigma(zeta) = (2 pi i / |w|) exp(i b zeta / w) / (exp(-pi zeta / 2w) - exp(pi zeta / 2w))`
///
/// For `|pi zeta / 2w| > 30` the dominant exponential is factored out to
/// avoid overflow: the result is `-(2 pi i/|w|) exp(i b zeta/w) exp(-s)` for
/// `s = pi zeta/2w > 0` and `+(2 pi i/|w|) exp(i b zeta/w) exp(s)` for `s < 0`.
pub fn tanh_spectrum(w: f64, b: f64, zeta: f64) -> Result<Complex64> {
    if w == 0.0 || !w.is_finite() {
        return Err(Error::Usage(format!(
            "tanh_spectrum needs a nonzero finite w, got {w}"
        )));
    }
    if zeta == 0.0 {
        return Err(Error::Usage(
            "tanh_spectrum is singular at zeta = 0 (the transform has a pole there)".into(),
        ));
    }
    let s = std::f64::consts::FRAC_PI_2 * zeta / w;
    let phase = Complex64::from_polar(1.0, b * zeta / w);
    let front = Complex64::new(0.0, 2.0 * std::f64::consts::PI / w.abs());
    if s.abs() <= ASYMPTOTIC_SWITCH {
        let denom = (-s).exp() - s.exp();
        Ok(front * phase / denom)
    } else if s > 0.0 {
        Ok(-front * phase * (-s).exp())
    } else {
        Ok(front * phase * s.exp())
    }
}

// ---------------------------------------------------------------------------
// Frequency-guided training
// ---------------------------------------------------------------------------

/// Architecture shared by both arms of the guided-vs-fixed comparison; only
/// the interval schedule differs between arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqGuidedConfig {
    pub n_feature_groups: usize,
    pub nodes_per_feature_group: usize,
    pub init_enh_groups: usize,
    pub nodes_per_enh_group: usize,
    /// Enhancement nodes appended per growth step.
    pub nodes_per_addition: usize,
    /// Number of incremental growth steps (M).
    pub growth_steps: usize,
    pub lambda: f64,
}

impl Default for FreqGuidedConfig {
    fn default() -> Self {
        Self {
            n_feature_groups: 1,
            nodes_per_feature_group: 16,
            init_enh_groups: 1,
            nodes_per_enh_group: 8,
            nodes_per_addition: 8,
            growth_steps: 8,
            lambda: 1e-8,
        }
    }
}

/// Trains a BLS whose growth steps draw their random parameters from an
/// expanding interval: the initial model uses `schedule.interval_at(0)` and
/// growth step `k` uses `schedule.interval_at(k)`. With a constant schedule
/// this is exactly the plain incremental BLS.
pub fn train_bls_freq_guided(
    data: &Dataset,
    config: &FreqGuidedConfig,
    schedule: &IntervalSchedule,
    growth_steps: usize,
    seed: u64,
) -> Result<BlsModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = train_bls_with_rng(
        data,
        config.n_feature_groups,
        config.nodes_per_feature_group,
        config.init_enh_groups,
        config.nodes_per_enh_group,
        config.lambda,
        schedule,
        &mut rng,
    )?;
    for k in 1..=growth_steps {
        add_enhancement_group_with_rng(
            &mut model,
            data,
            config.nodes_per_addition,
            schedule.interval_at(k),
            &mut rng,
        )?;
    }
    model.seed = Some(seed);
    Ok(model)
}

// ---------------------------------------------------------------------------
// Comparison harness
// ---------------------------------------------------------------------------

/// Which held-out score the comparison records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Fraction of rows whose argmax matches (classification; in [0, 1]).
    Accuracy,
    /// Negative root-mean-square error (regression; higher is better).
    NegRmse,
}

impl MetricKind {
    /// Classification when the targets are one-hot over K >= 2 columns,
    /// regression otherwise.
    pub fn for_targets(k: usize) -> Self {
        if k >= 2 {
            MetricKind::Accuracy
        } else {
            MetricKind::NegRmse
        }
    }
}

/// Linearly interpolated quartiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + (sorted[lo + 1] - sorted[lo]) * frac
    } else {
        sorted[lo]
    }
}

/// Quartiles with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::Usage("quartiles of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Quartiles {
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

/// Per-arm summaries of a paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub fixed: Quartiles,
    pub guided: Quartiles,
}

/// Paired scores of the fixed-interval and guided arms over seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: MetricKind,
    pub accuracies_fixed: Vec<f64>,
    pub accuracies_guided: Vec<f64>,
    pub summary: ComparisonSummary,
}

impl ComparisonReport {
    /// Builds a report, computing quartiles and enforcing the score range
    /// for the accuracy metric.
    pub fn new(metric: MetricKind, fixed: Vec<f64>, guided: Vec<f64>) -> Result<Self> {
        if fixed.len() != guided.len() {
            return Err(Error::Usage(format!(
                "paired report needs equal run counts, got {} vs {}",
                fixed.len(),
                guided.len()
            )));
        }
        if metric == MetricKind::Accuracy {
            let in_range = |v: &f64| (0.0..=1.0).contains(v);
            if !fixed.iter().all(in_range) || !guided.iter().all(in_range) {
                return Err(Error::Numeric("accuracy scores must lie in [0, 1]".into()));
            }
        }
        let summary = ComparisonSummary {
            fixed: quartiles(&fixed)?,
            guided: quartiles(&guided)?,
        };
        Ok(Self {
            metric,
            accuracies_fixed: fixed,
            accuracies_guided: guided,
            summary,
        })
    }

    pub fn runs(&self) -> usize {
        self.accuracies_fixed.len()
    }

    /// Writes `run,arm,accuracy` rows, run-major (fixed before guided).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "run,arm,accuracy")?;
        for i in 0..self.runs() {
            writeln!(out, "{},fixed,{}", i + 1, self.accuracies_fixed[i])?;
            writeln!(out, "{},guided,{}", i + 1, self.accuracies_guided[i])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Usage(format!("report serialization failed: {e}")))
    }
}

/// Fraction of rows where the prediction's argmax matches the target's.
pub fn accuracy(pred: &Mat, y: &Mat) -> f64 {
    let argmax = |m: &Mat, i: usize| {
        (0..m.ncols()).fold(
            0usize,
            |best, j| if m[(i, j)] > m[(i, best)] { j } else { best },
        )
    };
    let hits = (0..y.nrows())
        .filter(|&i| argmax(pred, i) == argmax(y, i))
        .count();
    hits as f64 / y.nrows() as f64
}

/// Root-mean-square error over all entries, per row.
pub fn rmse(pred: &Mat, y: &Mat) -> f64 {
    ((pred - y).norm_squared() / y.nrows() as f64).sqrt()
}

/// Runs the paired comparison: for each seed 1..=runs, trains the
/// fixed-interval arm (constant schedule at the guided schedule's base) and
/// the guided arm on `train`, scoring both on the held-out `test` set. The
/// two arms share architecture, data, and seed; only the schedule differs.
pub fn compare_methods(
    train: &Dataset,
    test: &Dataset,
    config: &FreqGuidedConfig,
    schedule: &IntervalSchedule,
    runs: usize,
) -> Result<ComparisonReport> {
    if runs < 2 {
        return Err(Error::Config(format!(
            "comparison needs at least 2 runs, got {runs}"
        )));
    }
    if train.d() != test.d() || train.k() != test.k() {
        return Err(Error::Usage("train/test shape mismatch".into()));
    }
    let metric = MetricKind::for_targets(train.k());
    let fixed_schedule = IntervalSchedule::constant(schedule.base())?;
    let mut fixed_scores = Vec::with_capacity(runs);
    let mut guided_scores = Vec::with_capacity(runs);
    for seed in 1..=runs as u64 {
        let score = |model: &BlsModel| -> Result<f64> {
            let pred = model.predict(&test.x)?;
            Ok(match metric {
                MetricKind::Accuracy => accuracy(&pred, &test.y),
                MetricKind::NegRmse => -rmse(&pred, &test.y),
            })
        };
        let fixed_model =
            train_bls_freq_guided(train, config, &fixed_schedule, config.growth_steps, seed)?;
        let guided_model =
            train_bls_freq_guided(train, config, schedule, config.growth_steps, seed)?;
        fixed_scores.push(score(&fixed_model)?);
        guided_scores.push(score(&guided_model)?);
    }
    ComparisonReport::new(metric, fixed_scores, guided_scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::gen_sine_mix;
    use crate::networks::train_bls;

    // -- tanh_spectrum -------------------------------------------------------

    #[test]
    fn magnitude_is_independent_of_the_bias() {
        for &w in &[0.7, 3.0] {
            for &zeta in &[2.0, -5.0] {
                let base = tanh_spectrum(w, 0.0, zeta).unwrap().norm();
                for &b in &[1.3, -2.0, 10.0] {
                    let m = tanh_spectrum(w, b, zeta).unwrap().norm();
                    assert!((m - base).abs() < 1e-12 * base.max(1.0));
                }
            }
        }
    }

    #[test]
    fn larger_w_carries_more_high_frequency_content() {
        let zeta = 10.0;
        let m1 = tanh_spectrum(1.0, 0.0, zeta).unwrap().norm();
        let m4 = tanh_spectrum(4.0, 0.0, zeta).unwrap().norm();
        assert!(
            m4 > m1,
            "|sigma| at w=4 ({m4}) must exceed w=1 ({m1}) at zeta=10"
        );
    }

    #[test]
    fn magnitude_is_monotone_in_w_at_fixed_zeta() {
        let zeta = 10.0;
        let mut prev = 0.0;
        for i in 1..=16 {
            let w = 0.5 * i as f64;
            let m = tanh_spectrum(w, 0.0, zeta).unwrap().norm();
            assert!(
                m > prev,
                "|sigma| must increase with w: w={w}, {m} vs {prev}"
            );
            prev = m;
        }
    }

    #[test]
    fn rejects_w_zero_and_zeta_zero() {
        assert!(matches!(tanh_spectrum(0.0, 1.0, 2.0), Err(Error::Usage(_))));
        assert!(matches!(tanh_spectrum(1.0, 1.0, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn asymptotic_branch_matches_the_exact_form_where_both_are_finite() {
        // s = pi zeta / 2w = 35: the dispatcher takes the asymptotic branch;
        // the exact denominator is still representable, so evaluate it
        // directly as the oracle. Both signs of s.
        for &(w, b) in &[(1.0, 0.0), (2.0, 0.7), (-1.5, -0.3)] {
            for &sign in &[1.0, -1.0] {
                let s = 35.0 * sign;
                let zeta = s * 2.0 * w / std::f64::consts::PI;
                let got = tanh_spectrum(w, b, zeta).unwrap();
                let phase = Complex64::from_polar(1.0, b * zeta / w);
                let front = Complex64::new(0.0, 2.0 * std::f64::consts::PI / w.abs());
                let exact = front * phase / ((-s).exp() - s.exp());
                assert!(
                    (got - exact).norm() <= 1e-6 * exact.norm(),
                    "asymptotic/exact mismatch at w={w}, s={s}"
                );
            }
        }
    }

    #[test]
    fn huge_arguments_do_not_overflow() {
        let v = tanh_spectrum(0.5, 1.0, 500.0).unwrap();
        assert!(v.norm().is_finite());
        assert!(v.norm() < 1e-200);
    }

    /// Numeric Fourier oracle: integrate `tanh(wx+b) e^{-i zeta x}` after
    /// subtracting the step `sgn(x - c)` at the transition point `c = -b/w`,
    /// whose transform is known in closed form. The difference decays
    /// exponentially, so a windowed trapezoid rule converges.
    fn quadrature_oracle(w: f64, b: f64, zeta: f64) -> Complex64 {
        assert!(w > 0.0);
        let c = -b / w;
        let l = 40.0 / w;
        let steps = 60_000usize;
        let mut total = Complex64::new(0.0, 0.0);
        // Left half [c - l, c]: tanh -> -1, integrand tanh(wx+b) + 1.
        // Right half [c, c + l]: integrand tanh(wx+b) - 1.
        for half in 0..2 {
            let (a0, a1, shift) = if half == 0 {
                (c - l, c, 1.0)
            } else {
                (c, c + l, -1.0)
            };
            let h = (a1 - a0) / steps as f64;
            let f = |x: f64| Complex64::from_polar(1.0, -zeta * x) * ((w * x + b).tanh() + shift);
            let mut acc = (f(a0) + f(a1)) * 0.5;
            for k in 1..steps {
                acc += f(a0 + h * k as f64);
            }
            total += acc * h;
        }
        // Plus the transform of sgn(x - c): exp(-i zeta c) * (-2i / zeta).
        total + Complex64::from_polar(1.0, -zeta * c) * Complex64::new(0.0, -2.0 / zeta)
    }

    #[test]
    fn quadrature_oracle_confirms_the_closed_form_in_the_mid_band() {
        for &(w, b, zeta) in &[
            (1.0, 0.4, 1.5),
            (1.0, 0.4, 2.5),
            (1.0, 0.0, 4.0),
            (2.0, -0.6, 5.0),
        ] {
            let closed = tanh_spectrum(w, b, zeta).unwrap().norm();
            let numeric = quadrature_oracle(w, b, zeta).norm();
            let rel = (closed - numeric).abs() / numeric;
            assert!(
                rel < 0.05,
                "w={w} b={b} zeta={zeta}: closed {closed} vs numeric {numeric}"
            );
        }
    }

    // -- guided training ------------------------------------------------------

    #[test]
    fn zero_growth_steps_equals_plain_bls() {
        let data = gen_sine_mix(80, 0.0, std::f64::consts::TAU).unwrap();
        let cfg = FreqGuidedConfig {
            growth_steps: 0,
            ..FreqGuidedConfig::default()
        };
        let sched = IntervalSchedule::geometric(1.0, 1.4, 16.0).unwrap();
        let guided = train_bls_freq_guided(&data, &cfg, &sched, 0, 3).unwrap();
        let plain = train_bls(&data, 1, 16, 1, 8, 1e-8, &sched, 3).unwrap();
        assert_eq!(guided.output_weights, plain.output_weights);
        assert_eq!(guided.feature_groups, plain.feature_groups);
    }

    #[test]
    fn growth_groups_carry_the_scheduled_bounds() {
        let data = gen_sine_mix(80, 0.0, std::f64::consts::TAU).unwrap();
        let cfg = FreqGuidedConfig::default();
        let sched = IntervalSchedule::geometric(1.0, 2.0, 6.0).unwrap();
        let model = train_bls_freq_guided(&data, &cfg, &sched, 3, 1).unwrap();
        // Initial group at bound 1, then 2, 4, 6 (capped).
        let bounds: Vec<f64> = model
            .enhancement_groups
            .iter()
            .map(|g| g.interval_bound)
            .collect();
        assert_eq!(bounds, vec![1.0, 2.0, 4.0, 6.0]);
        for g in &model.enhancement_groups {
            let max_abs = g
                .weights
                .iter()
                .chain(g.bias.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_abs <= g.interval_bound);
        }
    }

    #[test]
    fn constant_schedule_arms_are_identical() {
        let data = gen_sine_mix(120, 0.0, std::f64::consts::TAU).unwrap();
        let (train, test) = crate::dataio::split_dataset(&data, 0.8, 0).unwrap();
        let cfg = FreqGuidedConfig {
            nodes_per_feature_group: 8,
            nodes_per_enh_group: 4,
            nodes_per_addition: 4,
            growth_steps: 2,
            ..FreqGuidedConfig::default()
        };
        let sched = IntervalSchedule::constant(1.0).unwrap();
        let report = compare_methods(&train, &test, &cfg, &sched, 2).unwrap();
        assert_eq!(report.accuracies_fixed, report.accuracies_guided);
        assert_eq!(report.metric, MetricKind::NegRmse);
    }

    #[test]
    fn guided_median_beats_fixed_on_the_two_sine_target() {
        let data = gen_sine_mix(400, -std::f64::consts::PI, std::f64::consts::PI).unwrap();
        let (train, test) = crate::dataio::split_dataset(&data, 0.8, 0).unwrap();
        let sched = IntervalSchedule::geometric(1.0, 1.4, 16.0).unwrap();
        let report =
            compare_methods(&train, &test, &FreqGuidedConfig::default(), &sched, 6).unwrap();
        assert!(
            report.summary.guided.median > report.summary.fixed.median,
            "guided median {} must beat fixed {} (neg-RMSE, higher is better)",
            report.summary.guided.median,
            report.summary.fixed.median
        );
    }

    // -- report ---------------------------------------------------------------

    #[test]
    fn quartiles_use_linear_interpolation() {
        let q = quartiles(&[0.4, 0.2, 0.1, 0.3]).unwrap();
        assert!((q.median - 0.25).abs() < 1e-15);
        assert!((q.q1 - 0.175).abs() < 1e-15);
        assert!((q.q3 - 0.325).abs() < 1e-15);
    }

    #[test]
    fn report_csv_is_run_major() {
        let report =
            ComparisonReport::new(MetricKind::Accuracy, vec![0.5, 0.6], vec![0.7, 0.8]).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "run,arm,accuracy\n1,fixed,0.5\n1,guided,0.7\n2,fixed,0.6\n2,guided,0.8\n"
        );
    }

    #[test]
    fn accuracy_metric_rejects_out_of_range_scores() {
        let out = ComparisonReport::new(MetricKind::Accuracy, vec![1.2], vec![0.5]);
        assert!(matches!(out, Err(Error::Numeric(_))));
        // Regression scores (negative RMSE) may be negative.
        assert!(ComparisonReport::new(MetricKind::NegRmse, vec![-0.3], vec![-0.1]).is_ok());
    }

    #[test]
    fn accuracy_counts_argmax_matches() {
        let y = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let pred = Mat::from_row_slice(3, 2, &[0.9, 0.2, 0.1, 0.3, 0.2, 0.7]);
        assert!((accuracy(&pred, &y) - 2.0 / 3.0).abs() < 1e-15);
    }
}

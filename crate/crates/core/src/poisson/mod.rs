//! Discretized Poisson solvers: central-difference operators for the 1-D and
//! 2-D problems, Jacobi iteration with per-iteration residual traces, a
//! banded direct solver, and the BLS-warm-started Jacobi hybrid.
//!
//! Convention: the discrete systems represent `-laplacian(u) = g`, i.e.
//! `A = tridiag(-1, 2, -1)` in 1-D and the 5-point `[4, -1, -1, -1, -1]`
//! stencil in 2-D, with the right-hand side scaled by the squared spacing.

pub mod bls;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

pub use bls::{
    bls_fit_poisson, bls_fit_poisson_detailed, bls_jacobi_solve, GrowthPlan, PoissonBlsConfig,
    PoissonBlsFit,
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Uniform grid metadata for a discretized problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Spatial dimension (1 or 2).
    pub dim: usize,
    /// Intervals per axis.
    pub n: usize,
    /// Mesh spacing.
    pub spacing: f64,
    /// Domain bounds per axis (the same on every axis).
    pub lo: f64,
    pub hi: f64,
    /// Human-readable description of the boundary condition.
    pub boundary: String,
}

/// Compressed sparse row matrix (square).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[idx] * x[self.indices[idx]];
            }
            out[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[idx] == i {
                    d[i] = self.values[idx];
                }
            }
        }
        d
    }

    /// Dense copy, for small examples and oracles.
    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[idx])] = self.values[idx];
            }
        }
        m
    }
}

/// A discretized Poisson problem `A u = g` with its grid geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonSystem {
    pub a: Csr,
    pub g: Vec<f64>,
    pub grid: Grid,
    /// Interior grid coordinates, one row per unknown (P x dim).
    #[serde(with = "crate::networks::mat_rows")]
    pub interior_coords: Mat,
}

impl PoissonSystem {
    pub fn unknowns(&self) -> usize {
        self.a.n
    }

    /// `||A u - g||_2 / ||g||_2` (absolute norm when `g = 0`).
    pub fn relative_residual(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; self.a.n];
        self.a.matvec(u, &mut au);
        let num: f64 = au
            .iter()
            .zip(&self.g)
            .map(|(a, g)| (a - g) * (a - g))
            .sum::<f64>()
            .sqrt();
        let den: f64 = self.g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }
}

/// Where an iterative solve started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStart {
    Zero,
    Bls,
}

/// Record of one iterative solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    /// Relative residual before iterating, then after every sweep.
    pub residual_history: Vec<f64>,
    /// Seconds on the monotonic clock (includes the warm-start fit when the
    /// source is `Bls`).
    pub wall_time: f64,
    pub warm_start_source: WarmStart,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

/// 1-D problem `-u'' = g` on `(-1, 1)`, `u(-1) = u(1) = 0`:
/// `A = tridiag(-1, 2, -1)` over `P = n - 1` interior points,
/// `g_i = (dx)^2 g(x_i)`.
pub fn discretize_1d(n: usize, g_fn: impl Fn(f64) -> f64) -> Result<PoissonSystem> {
    if n < 2 {
        return Err(Error::Config(format!(
            "1-D grid needs n >= 2 intervals, got {n}"
        )));
    }
    let p = n - 1;
    let dx = 2.0 / n as f64;
    let mut indptr = Vec::with_capacity(p + 1);
    let mut indices = Vec::with_capacity(3 * p);
    let mut values = Vec::with_capacity(3 * p);
    indptr.push(0);
    for i in 0..p {
        if i > 0 {
            indices.push(i - 1);
            values.push(-1.0);
        }
        indices.push(i);
        values.push(2.0);
        if i + 1 < p {
            indices.push(i + 1);
            values.push(-1.0);
        }
        indptr.push(indices.len());
    }
    let coords = Mat::from_fn(p, 1, |i, _| -1.0 + dx * (i + 1) as f64);
    let g = (0..p).map(|i| dx * dx * g_fn(coords[(i, 0)])).collect();
    Ok(PoissonSystem {
        a: Csr {
            n: p,
            indptr,
            indices,
            values,
        },
        g,
        grid: Grid {
            dim: 1,
            n,
            spacing: dx,
            lo: -1.0,
            hi: 1.0,
            boundary: "u(-1) = u(1) = 0".into(),
        },
        interior_coords: coords,
    })
}

/// 2-D problem `-laplacian(u) = f` on `(0, 1)^2` with Dirichlet data from
/// `boundary_fn`, folded into the right-hand side. Interior points are
/// flattened row-major over (x-index, y-index): `row = i * (n-1) + j`.
pub fn discretize_2d(
    n: usize,
    f_fn: impl Fn(f64, f64) -> f64,
    boundary_fn: impl Fn(f64, f64) -> f64,
) -> Result<PoissonSystem> {
    if n < 2 {
        return Err(Error::Config(format!(
            "2-D grid needs n >= 2 intervals per axis, got {n}"
        )));
    }
    let m = n - 1;
    let p = m * m;
    let h = 1.0 / n as f64;
    let coord = |k: usize| (k + 1) as f64 * h;
    let mut indptr = Vec::with_capacity(p + 1);
    let mut indices = Vec::with_capacity(5 * p);
    let mut values = Vec::with_capacity(5 * p);
    let mut g = vec![0.0; p];
    indptr.push(0);
    for i in 0..m {
        for j in 0..m {
            let row = i * m + j;
            let (x, y) = (coord(i), coord(j));
            g[row] = h * h * f_fn(x, y);
            // Neighbors in index order (i-1,j), (i,j-1), (i,j), (i,j+1),
            // (i+1,j); off-grid neighbors contribute boundary data instead.
            if i > 0 {
                indices.push(row - m);
                values.push(-1.0);
            } else {
                g[row] += boundary_fn(0.0, y);
            }
            if j > 0 {
                indices.push(row - 1);
                values.push(-1.0);
            } else {
                g[row] += boundary_fn(x, 0.0);
            }
            indices.push(row);
            values.push(4.0);
            if j + 1 < m {
                indices.push(row + 1);
                values.push(-1.0);
            } else {
                g[row] += boundary_fn(x, 1.0);
            }
            if i + 1 < m {
                indices.push(row + m);
                values.push(-1.0);
            } else {
                g[row] += boundary_fn(1.0, y);
            }
            indptr.push(indices.len());
        }
    }
    let coords = Mat::from_fn(
        p,
        2,
        |r, c| if c == 0 { coord(r / m) } else { coord(r % m) },
    );
    Ok(PoissonSystem {
        a: Csr {
            n: p,
            indptr,
            indices,
            values,
        },
        g,
        grid: Grid {
            dim: 2,
            n,
            spacing: h,
            lo: 0.0,
            hi: 1.0,
            boundary: "u = y^2 on x=1, x^2 on y=1, 0 on the axes".into(),
        },
        interior_coords: coords,
    })
}

// ---------------------------------------------------------------------------
// Reference problems
// ---------------------------------------------------------------------------

/// Right-hand side of the 1-D reference problem.
pub fn default_g_1d(x: f64) -> f64 {
    x.sin() + 4.0 * (4.0 * x).sin() - 8.0 * (8.0 * x).sin() + 16.0 * (24.0 * x).sin()
}

/// Analytic solution of `-u'' = default_g_1d` with `u(-1) = u(1) = 0`.
pub fn analytic_u_1d(x: f64) -> f64 {
    let c1 = -(1.0f64.sin() + 4.0f64.sin() / 4.0 - 8.0f64.sin() / 8.0 + 24.0f64.sin() / 36.0);
    x.sin() + (4.0 * x).sin() / 4.0 - (8.0 * x).sin() / 8.0 + (24.0 * x).sin() / 36.0 + c1 * x
}

/// Right-hand side of the 2-D reference problem (`-laplacian(x^2 y^2)`).
pub fn default_f_2d(x: f64, y: f64) -> f64 {
    -2.0 * (x * x + y * y)
}

/// Dirichlet data of the 2-D reference problem: `y^2` on `x = 1`, `x^2` on
/// `y = 1`, zero on the coordinate axes (the trace of `x^2 y^2`).
pub fn default_boundary_2d(x: f64, y: f64) -> f64 {
    x * x * y * y
}

/// Exact solution of the 2-D reference problem.
pub fn analytic_u_2d(x: f64, y: f64) -> f64 {
    x * x * y * y
}

/// The k-th discrete sine mode `sin(k pi i / n)`, `i = 1..P`, `n = P + 1`.
pub fn sine_mode(p: usize, k: usize) -> Vec<f64> {
    let n = (p + 1) as f64;
    (1..=p)
        .map(|i| (std::f64::consts::PI * k as f64 * i as f64 / n).sin())
        .collect()
}

/// Coefficient of the k-th orthonormal discrete sine mode in `v`.
pub fn sine_mode_coeff(v: &[f64], k: usize) -> f64 {
    let n = (v.len() + 1) as f64;
    let scale = (2.0 / n).sqrt();
    v.iter()
        .enumerate()
        .map(|(i, &vi)| vi * scale * (std::f64::consts::PI * k as f64 * (i + 1) as f64 / n).sin())
        .sum()
}

// ---------------------------------------------------------------------------
// Jacobi
// ---------------------------------------------------------------------------

/// One Jacobi sweep: `out_i = (g_i - sum_{j != i} A_ij u_j) / A_ii`.
pub fn jacobi_sweep(sys: &PoissonSystem, u: &[f64], out: &mut [f64]) {
    let a = &sys.a;
    for i in 0..a.n {
        let mut sum = 0.0;
        let mut diag = 0.0;
        for idx in a.indptr[i]..a.indptr[i + 1] {
            let j = a.indices[idx];
            let v = a.values[idx];
            if j == i {
                diag = v;
            } else {
                sum += v * u[j];
            }
        }
        out[i] = (sys.g[i] - sum) / diag;
    }
}

/// Jacobi iteration from `u0` until the relative residual reaches `tol` or
/// `max_iters` sweeps have run (then the best iterate is returned flagged
/// `converged = false`). Each iteration is one update sweep plus one
/// residual evaluation; the trace records the residual before iterating and
/// after every sweep.
pub fn jacobi_solve(
    sys: &PoissonSystem,
    u0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, SolveTrace)> {
    jacobi_solve_from(sys, u0, tol, max_iters, WarmStart::Zero)
}

/// As [`jacobi_solve`], recording where the starting iterate came from.
pub fn jacobi_solve_from(
    sys: &PoissonSystem,
    u0: &[f64],
    tol: f64,
    max_iters: usize,
    source: WarmStart,
) -> Result<(Vec<f64>, SolveTrace)> {
    let p = sys.a.n;
    if u0.len() != p {
        return Err(Error::Usage(format!(
            "u0 has length {}, system has {p} unknowns",
            u0.len()
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Config(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    if sys.a.diag().iter().any(|&d| d == 0.0) {
        return Err(Error::Numeric("Jacobi needs a nonzero diagonal".into()));
    }
    let start = Instant::now();
    let mut u = u0.to_vec();
    let mut next = vec![0.0; p];
    let mut res = sys.relative_residual(&u);
    let mut history = vec![res];
    let mut iterations = 0;
    while res > tol && iterations < max_iters {
        jacobi_sweep(sys, &u, &mut next);
        std::mem::swap(&mut u, &mut next);
        res = sys.relative_residual(&u);
        history.push(res);
        iterations += 1;
    }
    let trace = SolveTrace {
        iterations,
        residual_history: history,
        wall_time: start.elapsed().as_secs_f64(),
        warm_start_source: source,
        converged: res <= tol,
    };
    Ok((u, trace))
}

// ---------------------------------------------------------------------------
// Banded direct solve
// ---------------------------------------------------------------------------

/// Direct solve of `A u = g` via banded Cholesky (the operators here are
/// symmetric positive definite with bandwidth 1 in 1-D and n-1 in 2-D).
pub fn direct_solve(sys: &PoissonSystem) -> Result<Vec<f64>> {
    let p = sys.a.n;
    let mut bw = 0usize;
    for i in 0..p {
        for idx in sys.a.indptr[i]..sys.a.indptr[i + 1] {
            bw = bw.max(i.abs_diff(sys.a.indices[idx]));
        }
    }
    // Lower-band storage: band[k][c] = A[c + k, c], k = 0..=bw, flattened as
    // band[k * p + c].
    let mut band = vec![0.0; (bw + 1) * p];
    for i in 0..p {
        for idx in sys.a.indptr[i]..sys.a.indptr[i + 1] {
            let j = sys.a.indices[idx];
            if i >= j {
                band[(i - j) * p + j] = sys.a.values[idx];
            }
        }
    }
    // In-place banded Cholesky, column by column.
    for c in 0..p {
        for r in c..=(c + bw).min(p - 1) {
            let k = r - c;
            let mut sum = 0.0;
            for t in r.saturating_sub(bw)..c {
                sum += band[(r - t) * p + t] * band[(c - t) * p + t];
            }
            let v = band[k * p + c] - sum;
            if k == 0 {
                if v <= 0.0 {
                    return Err(Error::Numeric(
                        "banded Cholesky failed: matrix is not positive definite".into(),
                    ));
                }
                band[c] = v.sqrt();
            } else {
                band[k * p + c] = v / band[c];
            }
        }
    }
    // Forward substitution L y = g.
    let mut y = vec![0.0; p];
    for r in 0..p {
        let mut sum = 0.0;
        for t in r.saturating_sub(bw)..r {
            sum += band[(r - t) * p + t] * y[t];
        }
        y[r] = (sys.g[r] - sum) / band[r];
    }
    // Back substitution L^T u = y.
    let mut u = vec![0.0; p];
    for c in (0..p).rev() {
        let mut sum = 0.0;
        for r in (c + 1)..=(c + bw).min(p - 1) {
            sum += band[(r - c) * p + c] * u[r];
        }
        u[c] = (y[c] - sum) / band[c];
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// Solver arms the benchmark can time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Jacobi,
    BlsJacobi,
}

impl BenchMethod {
    pub fn label(&self) -> &'static str {
        match self {
            BenchMethod::Jacobi => "jacobi",
            BenchMethod::BlsJacobi => "bls_jacobi",
        }
    }
}

/// Benchmark controls shared across rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Timing repetitions per (seed, tol); the wall time reported is their
    /// median.
    pub reps: usize,
    pub max_iters: usize,
    pub bls: PoissonBlsConfig,
    /// Growth-step cap for the BLS phase.
    pub growth_cap: usize,
}

impl BenchOptions {
    pub fn for_1d() -> Self {
        Self {
            reps: 5,
            max_iters: 200_000,
            bls: PoissonBlsConfig::default_1d(),
            growth_cap: 8,
        }
    }

    /// In 2-D, growth stages cost more than the Jacobi sweeps they save, so
    /// the warm start is the initial fixed-size fit alone.
    pub fn for_2d() -> Self {
        Self {
            reps: 5,
            max_iters: 200_000,
            bls: PoissonBlsConfig::default_2d(),
            growth_cap: 0,
        }
    }
}

/// One benchmark table row: medians over seeds of the per-seed results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub problem: String,
    pub method: String,
    pub tol: f64,
    pub median_seconds: f64,
    pub iterations: f64,
    pub residual: f64,
    /// Median max-norm error against the supplied truth (NaN when unknown).
    pub error_vs_truth: f64,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times each (method, tol) cell: per seed, the solve is repeated `reps`
/// times and the median wall time kept; the row reports medians over seeds.
/// Solves run strictly sequentially for timing fidelity.
pub fn benchmark(
    sys: &PoissonSystem,
    problem_label: &str,
    methods: &[BenchMethod],
    tol_list: &[f64],
    seeds: &[u64],
    opts: &BenchOptions,
    truth: Option<&[f64]>,
) -> Result<Vec<BenchRow>> {
    if methods.is_empty() || tol_list.is_empty() || seeds.is_empty() || opts.reps == 0 {
        return Err(Error::Config(
            "benchmark needs methods, tolerances, seeds and reps".into(),
        ));
    }
    if let Some(t) = truth {
        if t.len() != sys.unknowns() {
            return Err(Error::Usage("truth vector length mismatch".into()));
        }
    }
    let max_err = |u: &[f64]| -> f64 {
        truth.map_or(f64::NAN, |t| {
            u.iter()
                .zip(t)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
    };
    let mut rows = Vec::new();
    for method in methods {
        for &tol in tol_list {
            let mut walls = Vec::with_capacity(seeds.len());
            let mut iters = Vec::with_capacity(seeds.len());
            let mut resids = Vec::with_capacity(seeds.len());
            let mut errs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let mut rep_walls = Vec::with_capacity(opts.reps);
                let mut last: Option<(Vec<f64>, SolveTrace)> = None;
                for _ in 0..opts.reps {
                    let out = match method {
                        BenchMethod::Jacobi => {
                            let u0 = vec![0.0; sys.unknowns()];
                            jacobi_solve(sys, &u0, tol, opts.max_iters)?
                        }
                        BenchMethod::BlsJacobi => {
                            // There is no point growing the surrogate past
                            // the accuracy the cell asks for, so the fit's
                            // early-stop target is the cell tolerance.
                            let mut bls = opts.bls.clone();
                            bls.stop_tol = Some(bls.stop_tol.map_or(tol, |s| s.min(tol)));
                            bls_jacobi_solve(sys, &bls, opts.growth_cap, tol, opts.max_iters, seed)?
                        }
                    };
                    rep_walls.push(out.1.wall_time);
                    last = Some(out);
                }
                let (u, trace) = last.expect("reps >= 1");
                walls.push(median(&mut rep_walls));
                iters.push(trace.iterations as f64);
                resids.push(*trace.residual_history.last().expect("non-empty history"));
                errs.push(max_err(&u));
            }
            rows.push(BenchRow {
                problem: problem_label.to_string(),
                method: method.label().to_string(),
                tol,
                median_seconds: median(&mut walls),
                iterations: median(&mut iters),
                residual: median(&mut resids),
                error_vs_truth: median(&mut errs),
            });
        }
    }
    Ok(rows)
}

/// Writes the benchmark table as CSV (`error_vs_truth` empty when unknown).
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "problem,method,tol,median_seconds,iterations,residual,error_vs_truth"
    )?;
    for r in rows {
        let err = if r.error_vs_truth.is_nan() {
            String::new()
        } else {
            format!("{}", r.error_vs_truth)
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.problem, r.method, r.tol, r.median_seconds, r.iterations, r.residual, err
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    // -- discretization ------------------------------------------------------

    #[test]
    fn one_d_n4_matrix_is_the_displayed_tridiagonal() {
        let sys = discretize_1d(4, |_| 0.0).unwrap();
        let want = Mat::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert_eq!(sys.a.to_dense(), want);
        assert_eq!(sys.grid.spacing, 0.5);
        assert_eq!(sys.interior_coords[(0, 0)], -0.5);
        assert_eq!(sys.interior_coords[(2, 0)], 0.5);
    }

    #[test]
    fn one_d_zero_rhs_solves_to_zero() {
        let sys = discretize_1d(16, |_| 0.0).unwrap();
        let u = direct_solve(&sys).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn one_d_direct_solve_converges_at_second_order() {
        let err_at = |n: usize| {
            let sys = discretize_1d(n, default_g_1d).unwrap();
            let u = direct_solve(&sys).unwrap();
            let truth: Vec<f64> = (0..sys.unknowns())
                .map(|i| analytic_u_1d(sys.interior_coords[(i, 0)]))
                .collect();
            max_abs_diff(&u, &truth)
        };
        let (e1, e2) = (err_at(64), err_at(128));
        let ratio = e1 / e2;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "halving ratio {ratio} outside [3.5, 4.5]"
        );
    }

    #[test]
    fn two_d_n3_matrix_is_the_four_by_four_stencil() {
        let sys = discretize_2d(3, |_, _| 0.0, |_, _| 0.0).unwrap();
        let want = Mat::from_row_slice(
            4,
            4,
            &[
                4.0, -1.0, -1.0, 0.0, //
                -1.0, 4.0, 0.0, -1.0, //
                -1.0, 0.0, 4.0, -1.0, //
                0.0, -1.0, -1.0, 4.0,
            ],
        );
        assert_eq!(sys.a.to_dense(), want);
    }

    #[test]
    fn two_d_zero_data_solves_to_zero() {
        let sys = discretize_2d(8, |_, _| 0.0, |_, _| 0.0).unwrap();
        let u = direct_solve(&sys).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn two_d_reference_solution_is_discretely_exact() {
        // x^2 y^2 has vanishing fourth derivatives along each axis, so the
        // 5-point stencil reproduces it to rounding.
        let sys = discretize_2d(8, default_f_2d, default_boundary_2d).unwrap();
        let u = direct_solve(&sys).unwrap();
        let truth: Vec<f64> = (0..sys.unknowns())
            .map(|r| analytic_u_2d(sys.interior_coords[(r, 0)], sys.interior_coords[(r, 1)]))
            .collect();
        assert!(max_abs_diff(&u, &truth) < 1e-13);
    }

    #[test]
    fn two_d_manufactured_solution_converges_at_second_order() {
        // -laplacian(sin(pi x) sin(pi y)) = 2 pi^2 sin(pi x) sin(pi y),
        // zero boundary.
        let pi = std::f64::consts::PI;
        let err_at = |n: usize| {
            let sys = discretize_2d(
                n,
                |x, y| 2.0 * pi * pi * (pi * x).sin() * (pi * y).sin(),
                |_, _| 0.0,
            )
            .unwrap();
            let u = direct_solve(&sys).unwrap();
            let truth: Vec<f64> = (0..sys.unknowns())
                .map(|r| {
                    (pi * sys.interior_coords[(r, 0)]).sin()
                        * (pi * sys.interior_coords[(r, 1)]).sin()
                })
                .collect();
            max_abs_diff(&u, &truth)
        };
        let ratio = err_at(16) / err_at(32);
        assert!(
            (3.5..=4.5).contains(&ratio),
            "halving ratio {ratio} outside [3.5, 4.5]"
        );
    }

    #[test]
    fn banded_solve_matches_a_dense_oracle() {
        let sys = discretize_2d(6, default_f_2d, default_boundary_2d).unwrap();
        let u = direct_solve(&sys).unwrap();
        let dense = sys.a.to_dense();
        let g = Mat::from_column_slice(sys.unknowns(), 1, &sys.g);
        let oracle = dense.cholesky().unwrap().solve(&g);
        let got = Mat::from_column_slice(sys.unknowns(), 1, &u);
        assert!((got - oracle).amax() < 1e-12);
    }

    // -- Jacobi ----------------------------------------------------------------

    #[test]
    fn exact_start_terminates_at_iteration_zero() {
        let sys = discretize_1d(32, default_g_1d).unwrap();
        let u = direct_solve(&sys).unwrap();
        let (out, trace) = jacobi_solve(&sys, &u, 1e-8, 100).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(trace.converged);
        assert_eq!(out, u);
        assert_eq!(trace.residual_history.len(), 1);
    }

    #[test]
    fn hand_checked_first_sweep() {
        // n = 3 gives A = [[2,-1],[-1,2]]; choosing g(x) = 1/dx^2 makes the
        // scaled right-hand side exactly [1, 1]. One sweep from zero yields
        // [0.5, 0.5]; a second yields [0.75, 0.75].
        let sys = discretize_1d(3, |_| (1.5f64) * 1.5).unwrap();
        assert!((sys.g[0] - 1.0).abs() < 1e-15);
        assert!((sys.g[1] - 1.0).abs() < 1e-15);
        let (u1, t1) = jacobi_solve(&sys, &[0.0, 0.0], 1e-15, 1).unwrap();
        assert_eq!(u1, vec![0.5, 0.5]);
        assert_eq!(t1.iterations, 1);
        assert!(!t1.converged);
        let (u2, _) = jacobi_solve(&sys, &[0.0, 0.0], 1e-15, 2).unwrap();
        assert_eq!(u2, vec![0.75, 0.75]);
    }

    #[test]
    fn mode_damping_factor_is_cos_k_pi_over_n() {
        // On the homogeneous problem, a sine-mode start is an eigenvector of
        // the Jacobi iteration matrix with eigenvalue cos(k pi / n).
        let n = 256;
        let sys = discretize_1d(n, |_| 0.0).unwrap();
        let p = sys.unknowns();
        let mut prev_factor = 1.0;
        for &k in &[1usize, 4, 8, 24] {
            let u0 = sine_mode(p, k);
            let mut u1 = vec![0.0; p];
            jacobi_sweep(&sys, &u0, &mut u1);
            let num: f64 = u1.iter().map(|v| v * v).sum::<f64>().sqrt();
            let den: f64 = u0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let damping = num / den;
            let expected = (std::f64::consts::PI * k as f64 / n as f64).cos().abs();
            assert!(
                (damping - expected).abs() < 1e-12,
                "mode {k}: measured {damping} vs |cos(k pi/n)| {expected}"
            );
            assert!(
                damping < prev_factor,
                "higher modes must damp strictly faster"
            );
            prev_factor = damping;
        }
    }

    #[test]
    fn residual_history_is_monotone_decreasing() {
        let sys = discretize_1d(64, default_g_1d).unwrap();
        let u0 = vec![0.0; sys.unknowns()];
        let (_, trace) = jacobi_solve(&sys, &u0, 1e-3, 50_000).unwrap();
        assert!(trace.converged);
        for w in trace.residual_history.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "residuals must not increase: {w:?}"
            );
        }
        assert_eq!(trace.residual_history.len(), trace.iterations + 1);
    }

    #[test]
    fn non_convergence_is_flagged_not_an_error() {
        let sys = discretize_1d(64, default_g_1d).unwrap();
        let u0 = vec![0.0; sys.unknowns()];
        let (_, trace) = jacobi_solve(&sys, &u0, 1e-12, 3).unwrap();
        assert_eq!(trace.iterations, 3);
        assert!(!trace.converged);
    }

    #[test]
    fn sine_mode_coefficients_recover_planted_modes() {
        let p = 127;
        let v: Vec<f64> = sine_mode(p, 5);
        let scale = (2.0 / (p as f64 + 1.0)).sqrt();
        let c5 = sine_mode_coeff(&v, 5);
        // v = sine_mode/1, basis is scale*sine_mode, so c5 = 1/scale.
        assert!((c5 - 1.0 / scale).abs() < 1e-10);
        assert!(sine_mode_coeff(&v, 4).abs() < 1e-10);
        assert!(sine_mode_coeff(&v, 24).abs() < 1e-10);
    }

    // -- benchmark ----------------------------------------------------------------

    #[test]
    fn single_method_single_tol_yields_one_row() {
        let sys = discretize_1d(32, default_g_1d).unwrap();
        let opts = BenchOptions {
            reps: 2,
            ..BenchOptions::for_1d()
        };
        let rows = benchmark(
            &sys,
            "p1",
            &[BenchMethod::Jacobi],
            &[1e-2],
            &[1],
            &opts,
            None,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].method, "jacobi");
        assert!(rows[0].error_vs_truth.is_nan());
    }

    #[test]
    fn jacobi_rows_are_monotone_in_tolerance() {
        let sys = discretize_1d(32, default_g_1d).unwrap();
        let opts = BenchOptions {
            reps: 1,
            ..BenchOptions::for_1d()
        };
        let rows = benchmark(
            &sys,
            "p1",
            &[BenchMethod::Jacobi],
            &[1e-1, 1e-2, 1e-3],
            &[1],
            &opts,
            None,
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].iterations >= w[0].iterations);
        }
    }

    #[test]
    fn bench_csv_has_the_contracted_header() {
        let rows = vec![BenchRow {
            problem: "p".into(),
            method: "jacobi".into(),
            tol: 0.1,
            median_seconds: 0.5,
            iterations: 10.0,
            residual: 0.05,
            error_vs_truth: f64::NAN,
        }];
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "problem,method,tol,median_seconds,iterations,residual,error_vs_truth\np,jacobi,0.1,0.5,10,0.05,\n"
        );
    }

    #[test]
    fn median_of_even_and_odd_samples() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

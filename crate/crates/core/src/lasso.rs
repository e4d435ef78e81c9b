//! Lasso over lag-expanded design matrices.
//!
//! The objective is the unnormalized
//!
//! ```text
//! ‖X w − s‖₂² + γ ‖w‖₁
//! ```
//!
//! (no `1/2n`), so `γ` values are comparable across problems of the same size
//! only. It is solved by cyclic coordinate descent with soft-thresholding:
//!
//! ```text
//! ρ_j = x_jᵀ (r + x_j w_j),   w_j ← S(ρ_j, γ/2) / ‖x_j‖²
//! ```
//!
//! At the optimum every coordinate satisfies `|2 x_jᵀ(Xw − s)| ≤ γ`, with
//! equality and opposite sign on the active coordinates. The smallest `γ`
//! whose solution is all-zero is `γ_max = 2 max_j |x_jᵀ s|`.
//!
//! Every lag of every feature is an independent column; nothing stops two
//! lags of the same feature from both entering the active set.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesTable;
use crate::error::{Error, Result};
use crate::numerics::{dot, mean, variance, Matrix};

/// Largest lag accepted by [`build_lag_matrix`].
pub const DEFAULT_MAX_LAGS: usize = 6;

/// Features at lags `0..=k`, columns ordered feature-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDesignMatrix {
    pub x: Matrix,
    pub column_names: Vec<String>,
    /// `(feature, lag)` of each column.
    pub terms: Vec<(String, usize)>,
    pub k: usize,
    /// Source-table row of each design row (row `r` uses values at rows `<= source_rows[r]`).
    pub source_rows: Vec<usize>,
    pub timestamps: Vec<NaiveDate>,
}

impl LagDesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.cols()
    }

    /// Keep only the design rows whose source row satisfies `keep`.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> LagDesignMatrix {
        let idx: Vec<usize> = (0..self.n_rows())
            .filter(|&r| keep(self.source_rows[r]))
            .collect();
        let x = Matrix::from_fn(idx.len(), self.n_cols(), |i, j| self.x.get(idx[i], j));
        LagDesignMatrix {
            x,
            column_names: self.column_names.clone(),
            terms: self.terms.clone(),
            k: self.k,
            source_rows: idx.iter().map(|&r| self.source_rows[r]).collect(),
            timestamps: idx.iter().map(|&r| self.timestamps[r]).collect(),
        }
    }
}

pub fn term_name(feature: &str, lag: usize) -> String {
    format!("{feature}@{lag}")
}

/// Every column of `table` at lags `0..=k`; the first `k` rows are dropped.
/// `k` is limited to `1..=6`; use [`build_lag_matrix_with_limit`] to go
/// further.
pub fn build_lag_matrix(table: &TimeSeriesTable, k: usize) -> Result<LagDesignMatrix> {
    build_lag_matrix_with_limit(table, k, DEFAULT_MAX_LAGS)
}

pub fn build_lag_matrix_with_limit(
    table: &TimeSeriesTable,
    k: usize,
    max_k: usize,
) -> Result<LagDesignMatrix> {
    if k == 0 || k > max_k {
        return Err(Error::invalid(format!("lag count {k} outside 1..={max_k}")));
    }
    if table.n_columns() == 0 {
        return Err(Error::invalid("no feature columns"));
    }
    if k >= table.len() {
        return Err(Error::invalid(format!(
            "lag count {k} must be smaller than table length {}",
            table.len()
        )));
    }
    let rows = table.len() - k;
    let mut terms = Vec::with_capacity(table.n_columns() * (k + 1));
    for name in table.names() {
        for lag in 0..=k {
            terms.push((name.clone(), lag));
        }
    }
    let cols = terms.len();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let src = r + k;
        for col in table.columns() {
            for lag in 0..=k {
                data.push(col[src - lag]);
            }
        }
    }
    Ok(LagDesignMatrix {
        x: Matrix::new(rows, cols, data)?,
        column_names: terms.iter().map(|(f, l)| term_name(f, *l)).collect(),
        terms,
        k,
        source_rows: (k..table.len()).collect(),
        timestamps: table.timestamps()[k..].to_vec(),
    })
}

/// Standardized design and target, with enough bookkeeping to map weights
/// back to the original columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub x: Matrix,
    pub s: Vec<f64>,
    /// Original indices of the columns kept in `x`.
    pub kept: Vec<usize>,
    pub column_names: Vec<String>,
    pub x_means: Vec<f64>,
    pub x_stds: Vec<f64>,
    pub s_mean: f64,
    pub s_std: f64,
    /// Constant columns removed before fitting.
    pub dropped: Vec<String>,
    /// The target was constant; it is centered but not scaled.
    pub target_degenerate: bool,
}

fn is_degenerate(m: f64, sd: f64) -> bool {
    !(sd > 1e-12 * m.abs().max(1.0))
}

/// Zero mean and unit population standard deviation for every column and
/// for `s`. Constant columns are dropped and listed in `dropped`.
pub fn standardize(x: &Matrix, column_names: &[String], s: &[f64]) -> Result<Standardized> {
    if s.len() != x.rows() {
        return Err(Error::shape("standardize", x.rows(), s.len()));
    }
    if column_names.len() != x.cols() {
        return Err(Error::shape("standardize names", x.cols(), column_names.len()));
    }
    if x.rows() < 2 {
        return Err(Error::invalid("need at least two rows to standardize"));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut x_means = Vec::new();
    let mut x_stds = Vec::new();
    for j in 0..x.cols() {
        let col = x.column_vec(j);
        let m = mean(&col);
        let sd = variance(&col).sqrt();
        if is_degenerate(m, sd) {
            dropped.push(column_names[j].clone());
        } else {
            kept.push(j);
            x_means.push(m);
            x_stds.push(sd);
        }
    }
    let out = Matrix::from_fn(x.rows(), kept.len(), |i, jj| {
        (x.get(i, kept[jj]) - x_means[jj]) / x_stds[jj]
    });
    let s_mean = mean(s);
    let s_sd = variance(s).sqrt();
    let target_degenerate = is_degenerate(s_mean, s_sd);
    let s_std = if target_degenerate { 1.0 } else { s_sd };
    Ok(Standardized {
        x: out,
        s: s.iter().map(|v| (v - s_mean) / s_std).collect(),
        column_names: kept.iter().map(|&j| column_names[j].clone()).collect(),
        kept,
        x_means,
        x_stds,
        s_mean,
        s_std,
        dropped,
        target_degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Converged once no coordinate moves by more than this in a sweep...
    pub tol: f64,
    /// ...and the optimality conditions hold to this absolute slack.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            kkt_tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub w: Vec<f64>,
    pub gamma: f64,
    /// Indices of the nonzero entries of `w`, ascending.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub sweeps: usize,
}

/// Design and target prepared for repeated coordinate-descent fits.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    columns: Vec<Vec<f64>>,
    col_sq: Vec<f64>,
    s: Vec<f64>,
}

impl LassoProblem {
    pub fn new(x: &Matrix, s: &[f64]) -> Result<Self> {
        if s.len() != x.rows() {
            return Err(Error::shape("lasso", x.rows(), s.len()));
        }
        let columns: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column_vec(j)).collect();
        let col_sq = columns.iter().map(|c| dot(c, c)).collect();
        Ok(LassoProblem {
            columns,
            col_sq,
            s: s.to_vec(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_samples(&self) -> usize {
        self.s.len()
    }

    pub fn gamma_max(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| 2.0 * dot(c, &self.s).abs())
            .fold(0.0, f64::max)
    }

    /// `s − X w`
    pub fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.s.clone();
        for (c, wj) in self.columns.iter().zip(w) {
            if *wj != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= wj * ci;
                }
            }
        }
        r
    }

    pub fn objective(&self, w: &[f64], gamma: f64) -> f64 {
        let r = self.residual(w);
        dot(&r, &r) + gamma * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `2 x_jᵀ (X w − s)` for every `j`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.residual(w);
        self.columns.iter().map(|c| -2.0 * dot(c, &r)).collect()
    }

    /// Largest violation of the optimality conditions at `w`.
    pub fn kkt_violation(&self, w: &[f64], gamma: f64) -> f64 {
        self.gradient(w)
            .iter()
            .zip(w)
            .zip(&self.col_sq)
            .map(|((g, wj), sq)| {
                if *sq == 0.0 {
                    0.0
                } else if *wj == 0.0 {
                    (g.abs() - gamma).max(0.0)
                } else {
                    (g + gamma * wj.signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn fit(&self, gamma: f64, opts: &SolverOptions) -> Result<LassoSolution> {
        self.fit_from(gamma, None, opts, None)
    }

    /// Coordinate descent from `warm` (or zero). When `history` is given the
    /// objective after every sweep is appended to it.
    pub fn fit_from(
        &self,
        gamma: f64,
        warm: Option<&[f64]>,
        opts: &SolverOptions,
        mut history: Option<&mut Vec<f64>>,
    ) -> Result<LassoSolution> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
        }
        let p = self.n_features();
        let mut w = match warm {
            Some(w0) if w0.len() == p => w0.to_vec(),
            Some(w0) => return Err(Error::shape("lasso warm start", p, w0.len())),
            None => vec![0.0; p],
        };
        let half = gamma / 2.0;
        let mut r = self.residual(&w);
        let mut sweeps = 0;
        loop {
            if sweeps >= opts.max_sweeps {
                return Err(Error::NotConverged {
                    sweeps,
                    objective: self.objective(&w, gamma),
                });
            }
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..p {
                let sq = self.col_sq[j];
                if sq == 0.0 {
                    w[j] = 0.0;
                    continue;
                }
                let col = &self.columns[j];
                let old = w[j];
                let rho = dot(col, &r) + sq * old;
                let new = soft_threshold(rho, half) / sq;
                if new != old {
                    let d = new - old;
                    for (ri, ci) in r.iter_mut().zip(col) {
                        *ri -= d * ci;
                    }
                    w[j] = new;
                    max_delta = max_delta.max(d.abs());
                }
            }
            if let Some(h) = history.as_deref_mut() {
                h.push(self.objective(&w, gamma));
            }
            if max_delta < opts.tol {
                // refresh the running residual before certifying
                r = self.residual(&w);
                if self.kkt_violation(&w, gamma) <= opts.kkt_tol {
                    break;
                }
            }
        }
        let active_set = w
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        Ok(LassoSolution {
            objective: self.objective(&w, gamma),
            w,
            gamma,
            active_set,
            sweeps,
        })
    }
}

/// `sign(z) · max(|z| − t, 0)`
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn lasso_fit(x: &Matrix, s: &[f64], gamma: f64) -> Result<LassoSolution> {
    LassoProblem::new(x, s)?.fit(gamma, &SolverOptions::default())
}

/// `points` values from `gamma_max` down to `gamma_max * ratio`, geometric.
pub fn default_grid(gamma_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if !(gamma_max > 0.0) || points == 0 {
        return Vec::new();
    }
    if points == 1 {
        return vec![gamma_max];
    }
    let step = ratio.ln() / (points - 1) as f64;
    (0..points)
        .map(|i| gamma_max * (step * i as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub gammas: Vec<f64>,
    pub n_active: Vec<usize>,
    pub objectives: Vec<f64>,
    /// `‖X w − s‖² / n` at each `γ`.
    pub mse: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl LassoPath {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,n_active,objective,mse\n");
        for i in 0..self.gammas.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.gammas[i], self.n_active[i], self.objectives[i], self.mse[i]
            ));
        }
        out
    }
}

/// Warm-started fits along a descending, positive grid.
pub fn lasso_path(problem: &LassoProblem, grid: &[f64], opts: &SolverOptions) -> Result<LassoPath> {
    if grid.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::invalid("gamma grid must be positive"));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("gamma grid must be descending"));
    }
    let mut path = LassoPath {
        gammas: grid.to_vec(),
        n_active: Vec::with_capacity(grid.len()),
        objectives: Vec::with_capacity(grid.len()),
        mse: Vec::with_capacity(grid.len()),
        weights: Vec::with_capacity(grid.len()),
    };
    let mut warm: Option<Vec<f64>> = None;
    let n = problem.n_samples() as f64;
    for &g in grid {
        let sol = problem.fit_from(g, warm.as_deref(), opts, None)?;
        let r = problem.residual(&sol.w);
        path.n_active.push(sol.active_set.len());
        path.objectives.push(sol.objective);
        path.mse.push(dot(&r, &r) / n);
        path.weights.push(sol.w.clone());
        warm = Some(sol.w);
    }
    Ok(path)
}

/// How the final `γ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    /// An absolute value in the units of the unnormalized objective.
    Fixed(f64),
    /// A fraction of the problem's `γ_max`.
    FractionOfMax(f64),
}

impl GammaChoice {
    pub fn resolve(self, gamma_max: f64) -> f64 {
        match self {
            GammaChoice::Fixed(g) => g,
            GammaChoice::FractionOfMax(f) => f * gamma_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub k: usize,
    pub gamma: GammaChoice,
    pub grid_points: usize,
    pub grid_ratio: f64,
    pub solver: SolverOptions,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            k: 6,
            gamma: GammaChoice::Fixed(1.0),
            grid_points: 50,
            grid_ratio: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

/// One nonzero weight of a lag-expanded fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTerm {
    pub feature: String,
    pub lag: usize,
    pub weight: f64,
}

/// Lasso fit of one target over a standardized lag matrix, with its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagLassoFit {
    pub gamma: f64,
    pub gamma_max: f64,
    /// Sorted by decreasing `|weight|`.
    pub active: Vec<ActiveTerm>,
    pub objective: f64,
    /// In-sample MSE on the standardized target.
    pub mse: f64,
    pub path: LassoPath,
    pub dropped_columns: Vec<String>,
    pub target_degenerate: bool,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl LagLassoFit {
    pub fn features(&self) -> std::collections::BTreeSet<String> {
        self.active.iter().map(|t| t.feature.clone()).collect()
    }

    pub fn terms(&self) -> std::collections::BTreeSet<(String, usize)> {
        self.active
            .iter()
            .map(|t| (t.feature.clone(), t.lag))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Standardize, run the path, and fit at the configured `γ`.
pub fn fit_lag_lasso(
    design: &LagDesignMatrix,
    target: &[f64],
    cfg: &LassoConfig,
) -> Result<LagLassoFit> {
    let st = standardize(&design.x, &design.column_names, target)?;
    let problem = LassoProblem::new(&st.x, &st.s)?;
    let gamma_max = problem.gamma_max();
    let grid = default_grid(gamma_max, cfg.grid_points, cfg.grid_ratio);
    let path = lasso_path(&problem, &grid, &cfg.solver)?;
    let gamma = cfg.gamma.resolve(gamma_max);
    // warm start from the closest larger grid point
    let warm = path
        .gammas
        .iter()
        .position(|g| *g < gamma)
        .and_then(|i| i.checked_sub(1))
        .map(|i| path.weights[i].clone());
    let sol = problem.fit_from(gamma, warm.as_deref(), &cfg.solver, None)?;
    let r = problem.residual(&sol.w);
    let predicted: Vec<f64> = st.s.iter().zip(&r).map(|(s, r)| s - r).collect();
    let mut active: Vec<ActiveTerm> = sol
        .active_set
        .iter()
        .map(|&j| {
            let (feature, lag) = design.terms[st.kept[j]].clone();
            ActiveTerm {
                feature,
                lag,
                weight: sol.w[j],
            }
        })
        .collect();
    active.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
    Ok(LagLassoFit {
        gamma,
        gamma_max,
        active,
        objective: sol.objective,
        mse: dot(&r, &r) / r.len() as f64,
        path,
        dropped_columns: st.dropped,
        target_degenerate: st.target_degenerate,
        actual: st.s,
        predicted,
    })
}

/// Relevant lagged features for forecasting `target` at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevantFeatures {
    pub horizon: usize,
    pub fit: LagLassoFit,
}

impl RelevantFeatures {
    /// The `(feature, lag)` pairs to feed a model, strongest first, capped at
    /// `max_terms` when given.
    pub fn selected(&self, max_terms: Option<usize>) -> Vec<(String, usize)> {
        let n = max_terms.unwrap_or(usize::MAX);
        self.fit
            .active
            .iter()
            .take(n)
            .map(|t| (t.feature.clone(), t.lag))
            .collect()
    }
}

/// Lasso of the target at `t + 1 + horizon` on `features` at lags `0..=k`
/// relative to `t`.
pub fn select_relevant_features(
    table: &TimeSeriesTable,
    features: &[&str],
    horizon: usize,
    cfg: &LassoConfig,
) -> Result<RelevantFeatures> {
    if features.is_empty() {
        return Err(Error::invalid("feature list is empty"));
    }
    let sub = table.select_columns(features, features[0])?;
    let design = build_lag_matrix(&sub, cfg.k)?;
    let n = table.len();
    let offset = 1 + horizon;
    let design = design.filter_rows(|src| src + offset < n);
    if design.n_rows() < 2 {
        return Err(Error::invalid(format!(
            "not enough rows for horizon {horizon} with {} lags",
            cfg.k
        )));
    }
    let y = table.target();
    let target: Vec<f64> = design.source_rows.iter().map(|&r| y[r + offset]).collect();
    Ok(RelevantFeatures {
        horizon,
        fit: fit_lag_lasso(&design, &target, cfg)?,
    })
}

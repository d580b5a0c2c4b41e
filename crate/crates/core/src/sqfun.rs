//! Vertical, conical and weighted square functions of `Q_t`, with `dt/t`
//! realized as the midpoint rule of the scale grid, and the boundedness
//! experiments built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::norms::{blo_rho_norm, bmo_rho_norm, BallFamily};
use crate::numeric::pairwise_sum;
use crate::space::DiscreteSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareKind {
    G,
    S,
    GLambdaStar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareFunctionResult {
    pub values: Vec<f64>,
    pub kind: SquareKind,
    pub lambda: Option<f64>,
    pub truncation: (f64, f64),
}

/// `Q_t f` at every scale plus the ball volumes `V_t(y)`, shared by the
/// three square functions.
pub struct ScaleData<'a> {
    space: &'a DiscreteSpace,
    family: &'a KernelFamily,
    /// `qf[k][y] = Q_{t_k} f(y)`.
    pub qf: Vec<Vec<f64>>,
    /// `vt[k][y] = mu(B(y, t_k))`.
    pub vt: Vec<Vec<f64>>,
}

/// `V_t(y)` for every scale and point.
pub fn scale_volumes(space: &DiscreteSpace, family: &KernelFamily) -> Vec<Vec<f64>> {
    let per_point: Vec<Vec<f64>> = (0..space.len())
        .into_par_iter()
        .map(|y| {
            let p = space.profile(y);
            family.grid.t_values.iter().map(|&t| p.measure(t, false)).collect()
        })
        .collect();
    (0..family.grid.len()).map(|k| per_point.iter().map(|row| row[k]).collect()).collect()
}

impl<'a> ScaleData<'a> {
    pub fn new(space: &'a DiscreteSpace, family: &'a KernelFamily, f: &[f64]) -> Result<Self> {
        Self::with_volumes(space, family, f, scale_volumes(space, family))
    }

    pub fn with_volumes(
        space: &'a DiscreteSpace,
        family: &'a KernelFamily,
        f: &[f64],
        vt: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if family.len() != space.len() || f.len() != space.len() {
            return Err(Error::invalid("space, family and function sizes differ"));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("function values must be finite"));
        }
        Ok(ScaleData { space, family, qf: family.apply(f), vt })
    }

    fn truncation(&self) -> (f64, f64) {
        (self.family.grid.t_min, self.family.grid.t_max)
    }

    pub fn g(&self) -> SquareFunctionResult {
        let w = &self.family.grid.log_weights;
        let values = (0..self.space.len())
            .map(|x| {
                let terms: Vec<f64> = (0..w.len()).map(|k| w[k] * self.qf[k][x] * self.qf[k][x]).collect();
                pairwise_sum(&terms).sqrt()
            })
            .collect();
        SquareFunctionResult { values, kind: SquareKind::G, lambda: None, truncation: self.truncation() }
    }

    /// `a[k][y] = |Q_t f(y)|^2 mu_y / V_t(y)`.
    fn densities(&self) -> Vec<Vec<f64>> {
        (0..self.family.grid.len())
            .map(|k| {
                (0..self.space.len())
                    .map(|y| self.qf[k][y] * self.qf[k][y] * self.space.mass(y) / self.vt[k][y])
                    .collect()
            })
            .collect()
    }

    /// Weighted double sum `sum_k w_k sum_y weight(t_k, d(x, y)) a[k][y]`.
    fn double_sum<W>(&self, weight: W) -> Vec<f64>
    where
        W: Fn(f64, f64) -> f64 + Sync,
    {
        let a = self.densities();
        let grid = &self.family.grid;
        (0..self.space.len())
            .into_par_iter()
            .map(|x| {
                let d: Vec<f64> = (0..self.space.len()).map(|y| self.space.dist(x, y)).collect();
                let per_scale: Vec<f64> = (0..grid.len())
                    .map(|k| {
                        let t = grid.t_values[k];
                        let terms: Vec<f64> =
                            (0..self.space.len()).map(|y| weight(t, d[y]) * a[k][y]).collect();
                        grid.log_weights[k] * pairwise_sum(&terms)
                    })
                    .collect();
                pairwise_sum(&per_scale).sqrt()
            })
            .collect()
    }

    pub fn lusin_area(&self) -> SquareFunctionResult {
        let values = self.double_sum(|t, d| if d < t { 1.0 } else { 0.0 });
        SquareFunctionResult { values, kind: SquareKind::S, lambda: None, truncation: self.truncation() }
    }

    pub fn g_lambda_star(&self, lambda: f64) -> Result<SquareFunctionResult> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let values = self.double_sum(|t, d| (t / (t + d)).powf(lambda));
        Ok(SquareFunctionResult {
            values,
            kind: SquareKind::GLambdaStar,
            lambda: Some(lambda),
            truncation: self.truncation(),
        })
    }
}

pub fn g_function(space: &DiscreteSpace, family: &KernelFamily, f: &[f64]) -> Result<SquareFunctionResult> {
    Ok(ScaleData::new(space, family, f)?.g())
}

pub fn lusin_area(space: &DiscreteSpace, family: &KernelFamily, f: &[f64]) -> Result<SquareFunctionResult> {
    Ok(ScaleData::new(space, family, f)?.lusin_area())
}

pub fn g_lambda_star(
    space: &DiscreteSpace,
    family: &KernelFamily,
    f: &[f64],
    lambda: f64,
) -> Result<SquareFunctionResult> {
    ScaleData::new(space, family, f)?.g_lambda_star(lambda)
}

pub fn l2_norm(space: &DiscreteSpace, f: &[f64]) -> f64 {
    let terms: Vec<f64> = f.iter().enumerate().map(|(i, v)| v * v * space.mass(i)).collect();
    pairwise_sum(&terms).sqrt()
}

/// `sup_{t, y} sum_x (t/(t + d(x, y)))^lambda mu_x / V_t(y)`; the square of the
/// constant in `||g_lambda^* f|| <= C ||g f||`, an exact identity bound on the grid.
pub fn lambda_kernel_bound(space: &DiscreteSpace, family: &KernelFamily, lambda: f64, vt: &[Vec<f64>]) -> f64 {
    let grid = &family.grid;
    (0..space.len())
        .into_par_iter()
        .map(|y| {
            let d: Vec<f64> = (0..space.len()).map(|x| space.dist(x, y)).collect();
            (0..grid.len())
                .map(|k| {
                    let t = grid.t_values[k];
                    let terms: Vec<f64> =
                        (0..space.len()).map(|x| (t / (t + d[x])).powf(lambda) * space.mass(x)).collect();
                    pairwise_sum(&terms) / vt[k][y]
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Geometric-series constant `1 + sum_{k>=0} 2^{-k(lambda - n)}`, finite for `lambda > n`.
pub fn geometric_series_constant(lambda: f64, n: f64) -> f64 {
    if lambda <= n {
        f64::INFINITY
    } else {
        1.0 + 1.0 / (1.0 - 2f64.powf(-(lambda - n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationReport {
    /// `max_x (S f(x) - g_lambda^* f(x))`; non-positive when domination holds.
    pub max_excess: f64,
    /// `max_x S f(x) / g_lambda^* f(x)` over points with `g_lambda^* f(x) > 0`.
    pub max_ratio: f64,
    pub violations: usize,
    pub worst_point: usize,
}

pub fn domination(s: &SquareFunctionResult, gl: &SquareFunctionResult) -> DominationReport {
    let mut rep = DominationReport { max_excess: f64::NEG_INFINITY, max_ratio: 0.0, violations: 0, worst_point: 0 };
    for (x, (&a, &b)) in s.values.iter().zip(&gl.values).enumerate() {
        if a - b > rep.max_excess {
            rep.max_excess = a - b;
            rep.worst_point = x;
        }
        if b > 0.0 {
            rep.max_ratio = rep.max_ratio.max(a / b);
        }
        if a > b {
            rep.violations += 1;
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub function_id: String,
    pub lambda: Option<f64>,
    /// `s_squared_blo`, `s_blo`, `glambda_squared_blo`, `glambda_blo`.
    pub norm_kind: &'static str,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// Set for lambda values at or below `3n`.
    pub outside_hypothesis: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    /// Functions with zero BMO norm.
    pub skipped: Vec<String>,
}

impl ExperimentTable {
    pub fn max_ratio(&self, norm_kind: &str, lambda: Option<f64>) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.norm_kind == norm_kind && r.lambda == lambda)
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    }
}

/// Per function: `||(Sf)^2||_BLO / ||f||_BMO^2`, `||Sf||_BLO / ||f||_BMO`, and
/// the same two ratios for `g_lambda^*` at every lambda (norms with q = 1).
pub fn boundedness_experiment(
    space: &DiscreteSpace,
    family: &KernelFamily,
    balls: &BallFamily,
    suite: &[(String, Vec<f64>)],
    lambdas: &[f64],
    dimension: f64,
) -> Result<ExperimentTable> {
    let vt = scale_volumes(space, family);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, f) in suite {
        let bmo = bmo_rho_norm(space, f, 1.0, balls)?.total;
        if bmo == 0.0 {
            skipped.push(id.clone());
            continue;
        }
        let data = ScaleData::with_volumes(space, family, f, vt.clone())?;
        let mut push = |lambda: Option<f64>, values: &[f64]| -> Result<()> {
            let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
            let n_sq = blo_rho_norm(space, &sq, 1.0, balls)?.total;
            let n_1 = blo_rho_norm(space, values, 1.0, balls)?.total;
            let outside = lambda.is_some_and(|l| l <= 3.0 * dimension);
            let (k_sq, k_1) = if lambda.is_some() {
                ("glambda_squared_blo", "glambda_blo")
            } else {
                ("s_squared_blo", "s_blo")
            };
            rows.push(ExperimentRow {
                function_id: id.clone(),
                lambda,
                norm_kind: k_sq,
                numerator: n_sq,
                denominator: bmo * bmo,
                ratio: n_sq / (bmo * bmo),
                outside_hypothesis: outside,
            });
            rows.push(ExperimentRow {
                function_id: id.clone(),
                lambda,
                norm_kind: k_1,
                numerator: n_1,
                denominator: bmo,
                ratio: n_1 / bmo,
                outside_hypothesis: outside,
            });
            Ok(())
        };
        push(None, &data.lusin_area().values)?;
        for &l in lambdas {
            push(Some(l), &data.g_lambda_star(l)?.values)?;
        }
    }
    Ok(ExperimentTable { rows, skipped })
}

/// The lambda sweep `{n + 1, 2n, 3n + 1, 4n}`.
pub fn lambda_sweep(n: f64) -> Vec<f64> {
    let mut v = vec![n + 1.0, 2.0 * n, 3.0 * n + 1.0, 4.0 * n];
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

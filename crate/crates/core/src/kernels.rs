//! Schrodinger semigroup derivative kernels `Q_t = -t^2 L e^{-t^2 L}` on 1D
//! grids, built from one dense symmetric eigendecomposition, and the fitted
//! decay certificates for the size and mass conditions.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible::{AdmissibleFn, Potential};
use crate::error::{Error, Result};
use crate::space::DiscreteSpace;

pub const GAMMA_GRID: [f64; 3] = [0.5, 1.0, 2.0];
pub const DELTA1_GRID: [f64; 2] = [0.5, 1.0];
pub const DELTA2_GRID: [f64; 3] = [0.25, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleGridSpec {
    /// Defaults to the spacing.
    pub t_min: Option<f64>,
    /// Defaults to four times the diameter.
    pub t_max: Option<f64>,
    pub count: usize,
}

impl Default for ScaleGridSpec {
    fn default() -> Self {
        ScaleGridSpec { t_min: None, t_max: None, count: 40 }
    }
}

/// Midpoint rule for `int dt/t` on `[t_min, t_max]`: `count` equal cells in
/// `log t`, nodes at the cell midpoints, every weight equal to the cell width.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    pub t_values: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
}

impl ScaleGrid {
    pub fn new(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0) || !(t_max > t_min) || !t_max.is_finite() || count == 0 {
            return Err(Error::invalid("scale grid needs 0 < t_min < t_max and count >= 1"));
        }
        let (a, b) = (t_min.ln(), t_max.ln());
        let w = (b - a) / count as f64;
        let t_values = (0..count).map(|i| (a + (i as f64 + 0.5) * w).exp()).collect();
        Ok(ScaleGrid { t_values, log_weights: vec![w; count], t_min, t_max })
    }

    pub fn from_spec(space: &DiscreteSpace, spec: &ScaleGridSpec) -> Result<Self> {
        Self::new(
            spec.t_min.unwrap_or(space.spacing()),
            spec.t_max.unwrap_or(4.0 * space.diam()),
            spec.count,
        )
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }
}

/// `L = -Delta_h + diag(V)` with Dirichlet truncation at the window edge.
pub fn schrodinger_generator(space: &DiscreteSpace, v: &Potential) -> Result<Mat<f64>> {
    if !space.is_uniform_line_grid() {
        return Err(Error::invalid("generator requires a uniform 1D euclidean grid"));
    }
    if v.values.len() != space.len() {
        return Err(Error::invalid("potential length differs from space size"));
    }
    let n = space.len();
    let h2 = space.spacing() * space.spacing();
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            2.0 / h2 + v.values[i]
        } else if i.abs_diff(j) == 1 {
            -1.0 / h2
        } else {
            0.0
        }
    }))
}

/// Spectral multiplier of `Q_t` at eigenvalue `lambda`.
pub fn qt_multiplier(t: f64, lambda: f64) -> f64 {
    let u = t * t * lambda;
    -u * (-u).exp()
}

/// The family `Q_t` over a scale grid, stored as the eigendecomposition of
/// `L`. Kernel matrices are assembled on demand in the convention
/// `Q_t f(x) = sum_y Q_t(x, y) f(y) mu_y`.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    pub grid: ScaleGrid,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of `L` as columns.
    pub eigenvectors: Mat<f64>,
    /// Common point mass.
    pub mass: f64,
}

pub fn build_qt_family(l: &Mat<f64>, mass: f64, grid: ScaleGrid) -> Result<KernelFamily> {
    if l.nrows() != l.ncols() || l.nrows() == 0 {
        return Err(Error::invalid("generator must be a non-empty square matrix"));
    }
    if !(mass > 0.0) {
        return Err(Error::invalid("point mass must be positive"));
    }
    let evd = l.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues: Vec<f64> = (0..l.nrows()).map(|j| s[j]).collect();
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(KernelFamily { grid, eigenvalues, eigenvectors: evd.U().to_owned(), mass })
}

impl KernelFamily {
    /// Generator, eigendecomposition and scale grid in one step.
    pub fn for_space(space: &DiscreteSpace, v: &Potential, spec: &ScaleGridSpec) -> Result<Self> {
        let l = schrodinger_generator(space, v)?;
        build_qt_family(&l, space.mass(0), ScaleGrid::from_spec(space, spec)?)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn multipliers(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| qt_multiplier(t, l)).collect()
    }

    /// `sup_{t, j} |t^2 lambda_j e^{-t^2 lambda_j}|`; at most `1/e`.
    pub fn max_multiplier(&self) -> f64 {
        self.grid
            .t_values
            .iter()
            .flat_map(|&t| self.eigenvalues.iter().map(move |&l| qt_multiplier(t, l).abs()))
            .fold(0.0, f64::max)
    }

    /// Rows `rows` of the kernel `Q_t(x, y)` at the given scale.
    pub fn kernel_rows(&self, scale: usize, rows: &[usize]) -> Mat<f64> {
        let t = self.grid.t_values[scale];
        let n = self.len();
        let phi = &self.eigenvectors;
        let m = self.multipliers(t);
        let left = Mat::from_fn(rows.len(), n, |r, j| phi[(rows[r], j)] * m[j] / self.mass);
        &left * phi.transpose()
    }

    /// Full kernel matrix at one scale.
    pub fn kernel_matrix(&self, scale: usize) -> Mat<f64> {
        let rows: Vec<usize> = (0..self.len()).collect();
        self.kernel_rows(scale, &rows)
    }

    /// `Q_t f` for every scale; `result[k][x]`.
    pub fn apply(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let n = self.len();
        assert_eq!(f.len(), n, "function length differs from family size");
        let phi = &self.eigenvectors;
        let fcol = Mat::from_fn(n, 1, |i, _| f[i]);
        let c = phi.transpose() * &fcol;
        let k = self.grid.len();
        let coeff = Mat::from_fn(n, k, |j, s| qt_multiplier(self.grid.t_values[s], self.eigenvalues[j]) * c[(j, 0)]);
        let u = phi * &coeff;
        (0..k).map(|s| (0..n).map(|x| u[(x, s)]).collect()).collect()
    }

    /// `sum_z Q_t(x, z) mu_z` for every scale and point.
    pub fn mass_sums(&self) -> Vec<Vec<f64>> {
        self.apply(&vec![1.0; self.len()])
    }

    /// `e^{-sL}` as a matrix on coefficient vectors.
    pub fn heat_matrix(&self, s: f64) -> Mat<f64> {
        let n = self.len();
        let phi = &self.eigenvectors;
        let left = Mat::from_fn(n, n, |i, j| phi[(i, j)] * (-s * self.eigenvalues[j]).exp());
        &left * phi.transpose()
    }

    /// Relative Frobenius error of `e^{-sL} e^{-s'L}` against `e^{-(s+s')L}`.
    pub fn semigroup_error(&self, s: f64, s2: f64) -> f64 {
        let prod = &self.heat_matrix(s) * &self.heat_matrix(s2);
        let direct = self.heat_matrix(s + s2);
        (&prod - &direct).norm_l2() / direct.norm_l2()
    }
}

/// Which decay inequality a certificate row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayCondition {
    Size,
    Mass,
}

/// Worst sample for one exponent tuple at one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub condition: DecayCondition,
    pub gamma: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeConstant {
    pub gamma: f64,
    pub delta1: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassConstant {
    pub delta2: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecayCertificate {
    pub c_i: f64,
    pub gamma: f64,
    pub delta1: f64,
    pub c_ii: f64,
    pub delta2: f64,
    /// Every candidate tuple with its sup constant.
    pub size_table: Vec<SizeConstant>,
    pub mass_table: Vec<MassConstant>,
    pub rows: Vec<RatioRow>,
    /// Sampled rows `x`.
    pub sample: Vec<usize>,
}

impl KernelDecayCertificate {
    pub fn size_constant(&self, gamma: f64, delta1: f64) -> Option<f64> {
        self.size_table.iter().find(|s| s.gamma == gamma && s.delta1 == delta1).map(|s| s.c)
    }

    pub fn mass_constant(&self, delta2: f64) -> Option<f64> {
        self.mass_table.iter().find(|s| s.delta2 == delta2).map(|s| s.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySampling {
    /// Rows closer than this to the window edge are skipped.
    pub window_margin: f64,
    /// Maximum number of sampled rows.
    pub row_budget: usize,
    pub gammas: Vec<f64>,
    pub delta1s: Vec<f64>,
    pub delta2s: Vec<f64>,
}

impl Default for DecaySampling {
    fn default() -> Self {
        DecaySampling {
            window_margin: 1.0,
            row_budget: 64,
            gammas: GAMMA_GRID.to_vec(),
            delta1s: DELTA1_GRID.to_vec(),
            delta2s: DELTA2_GRID.to_vec(),
        }
    }
}

/// Interior rows, evenly strided, at most `budget` of them.
pub fn interior_rows(space: &DiscreteSpace, margin: f64, budget: usize) -> Vec<usize> {
    let inner: Vec<usize> = (0..space.len()).filter(|&i| space.window_margin(i) >= margin).collect();
    if budget == 0 || inner.len() <= budget {
        return inner;
    }
    let stride = inner.len().div_ceil(budget);
    let offset = (inner.len() - 1) / 2 % stride;
    inner.into_iter().skip(offset).step_by(stride).collect()
}

fn size_bound(vt: f64, vxy: f64, t: f64, d: f64, rho: f64, gamma: f64, delta1: f64) -> f64 {
    (t / (t + d)).powf(gamma) * (rho / (t + rho)).powf(delta1) / (vt + vxy)
}

fn mass_bound(t: f64, rho: f64, delta2: f64) -> f64 {
    (t / (t + rho)).powf(delta2)
}

/// Sup-ratio constants for every exponent tuple over the sampled rows,
/// every column and every scale.
pub fn decay_certificate(
    space: &DiscreteSpace,
    family: &KernelFamily,
    rho: &AdmissibleFn,
    sampling: &DecaySampling,
) -> Result<KernelDecayCertificate> {
    if family.len() != space.len() || rho.values.len() != space.len() {
        return Err(Error::invalid("family, rho and space sizes differ"));
    }
    let sample = interior_rows(space, sampling.window_margin, sampling.row_budget);
    if sample.is_empty() {
        return Err(Error::invalid("no interior rows to sample"));
    }
    let tuples: Vec<(f64, f64)> = sampling
        .gammas
        .iter()
        .flat_map(|&g| sampling.delta1s.iter().map(move |&d| (g, d)))
        .collect();
    let profiles: Vec<_> = sample.iter().map(|&x| space.profile(x)).collect();
    // V(x, y) for sampled x, every y
    let vxy: Vec<Vec<f64>> = profiles
        .par_iter()
        .map(|p| (0..space.len()).map(|y| p.measure(space.dist(p.center, y), false)).collect())
        .collect();
    let mass_sums = family.mass_sums();

    let per_scale: Vec<(Vec<RatioRow>, Vec<RatioRow>)> = (0..family.grid.len())
        .into_par_iter()
        .map(|k| {
            let t = family.grid.t_values[k];
            let q = family.kernel_rows(k, &sample);
            let mut size_best: Vec<Option<RatioRow>> = vec![None; tuples.len()];
            for (r, &x) in sample.iter().enumerate() {
                let vt = profiles[r].measure(t, false);
                let rx = rho.at(x);
                for y in 0..space.len() {
                    let lhs = q[(r, y)].abs();
                    let d = space.dist(x, y);
                    for (ti, &(gamma, delta1)) in tuples.iter().enumerate() {
                        let rhs = size_bound(vt, vxy[r][y], t, d, rx, gamma, delta1);
                        let ratio = lhs / rhs;
                        if size_best[ti].is_none_or(|b| ratio > b.ratio) {
                            size_best[ti] = Some(RatioRow {
                                condition: DecayCondition::Size,
                                gamma,
                                delta1,
                                delta2: f64::NAN,
                                t,
                                x,
                                y,
                                lhs,
                                rhs,
                                ratio,
                            });
                        }
                    }
                }
            }
            let mass_rows = sampling
                .delta2s
                .iter()
                .map(|&delta2| {
                    let mut best: Option<RatioRow> = None;
                    for &x in &sample {
                        let lhs = mass_sums[k][x].abs();
                        let rhs = mass_bound(t, rho.at(x), delta2);
                        let ratio = lhs / rhs;
                        if best.is_none_or(|b| ratio > b.ratio) {
                            best = Some(RatioRow {
                                condition: DecayCondition::Mass,
                                gamma: f64::NAN,
                                delta1: f64::NAN,
                                delta2,
                                t,
                                x,
                                y: x,
                                lhs,
                                rhs,
                                ratio,
                            });
                        }
                    }
                    best.expect("sample is non-empty")
                })
                .collect();
            (size_best.into_iter().map(|r| r.expect("space is non-empty")).collect(), mass_rows)
        })
        .collect();

    let size_table: Vec<SizeConstant> = tuples
        .iter()
        .enumerate()
        .map(|(ti, &(gamma, delta1))| SizeConstant {
            gamma,
            delta1,
            c: per_scale.iter().map(|(s, _)| s[ti].ratio).fold(0.0, f64::max),
        })
        .collect();
    let mass_table: Vec<MassConstant> = sampling
        .delta2s
        .iter()
        .enumerate()
        .map(|(di, &delta2)| MassConstant {
            delta2,
            c: per_scale.iter().map(|(_, m)| m[di].ratio).fold(0.0, f64::max),
        })
        .collect();
    let best_size = size_table
        .iter()
        .fold(None::<SizeConstant>, |acc, s| match acc {
            Some(a) if a.c <= s.c => Some(a),
            _ => Some(*s),
        })
        .ok_or_else(|| Error::invalid("empty exponent grid"))?;
    let best_mass = mass_table
        .iter()
        .fold(None::<MassConstant>, |acc, s| match acc {
            Some(a) if a.c <= s.c => Some(a),
            _ => Some(*s),
        })
        .ok_or_else(|| Error::invalid("empty exponent grid"))?;
    let rows = per_scale.into_iter().flat_map(|(s, m)| s.into_iter().chain(m)).collect();
    Ok(KernelDecayCertificate {
        c_i: best_size.c,
        gamma: best_size.gamma,
        delta1: best_size.delta1,
        c_ii: best_mass.c,
        delta2: best_mass.delta2,
        size_table,
        mass_table,
        rows,
        sample,
    })
}

/// Independent re-check of every tabulated constant against every sampled
/// triple, from freshly assembled full rows. Returns the number of violations.
pub fn verify_decay_certificate(
    space: &DiscreteSpace,
    family: &KernelFamily,
    rho: &AdmissibleFn,
    cert: &KernelDecayCertificate,
) -> usize {
    let masses = space.masses();
    (0..family.grid.len())
        .into_par_iter()
        .map(|k| {
            let t = family.grid.t_values[k];
            let q = family.kernel_rows(k, &cert.sample);
            let mut bad = 0;
            for (r, &x) in cert.sample.iter().enumerate() {
                let vt = space.ball_measure(x, t, false).expect("t > 0");
                let prof = space.profile(x);
                let mut total = 0.0;
                for y in 0..space.len() {
                    total += q[(r, y)] * masses[y];
                    let v = prof.measure(space.dist(x, y), false);
                    let d = space.dist(x, y);
                    for s in &cert.size_table {
                        let rhs = s.c * size_bound(vt, v, t, d, rho.at(x), s.gamma, s.delta1);
                        if q[(r, y)].abs() > rhs * (1.0 + 1e-9) {
                            bad += 1;
                        }
                    }
                }
                for m in &cert.mass_table {
                    if total.abs() > m.c * mass_bound(t, rho.at(x), m.delta2) * (1.0 + 1e-9) {
                        bad += 1;
                    }
                }
            }
            bad
        })
        .sum()
}

//! Test functions sampled on a space, specified in JSON configs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counterexample::abs_fg;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::space::DiscreteSpace;

/// Functions of the first coordinate unless noted. Singular members are
/// clamped at the origin to their value at half a spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    Linear { slope: f64 },
    /// `log(2/|x|)` on `|x| < 2`, zero outside.
    LogSpike,
    /// `log|x|` on `|x| <= 1`, zero outside.
    LogAbs,
    /// `|f g|` from the bmo-not-blo construction.
    AbsFg,
    Indicator { a: f64, b: f64 },
    /// Dirichlet sine mode `j >= 1` of the window, with unit L2 norm.
    SineMode { mode: usize },
    /// Column `index` of the eigenbasis of `L` (ascending eigenvalues),
    /// scaled to unit L2 norm. Needs a kernel family.
    Eigenvector { index: usize },
    /// Piecewise constant with i.i.d. uniform values in [-1, 1] on cells of
    /// the given physical width, so the function does not depend on the
    /// resolution.
    Random { seed: u64, cell_width: f64 },
}

impl FunctionSpec {
    /// Short identifier used in tables.
    pub fn id(&self) -> String {
        match self {
            FunctionSpec::Constant { value } => format!("constant({value})"),
            FunctionSpec::Linear { slope } => format!("linear({slope})"),
            FunctionSpec::LogSpike => "log_spike".into(),
            FunctionSpec::LogAbs => "log_abs".into(),
            FunctionSpec::AbsFg => "abs_fg".into(),
            FunctionSpec::Indicator { a, b } => format!("indicator[{a},{b}]"),
            FunctionSpec::SineMode { mode } => format!("sine_mode({mode})"),
            FunctionSpec::Eigenvector { index } => format!("eigenvector({index})"),
            FunctionSpec::Random { seed, cell_width } => format!("random({seed},{cell_width})"),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, FunctionSpec::Random { .. })
    }

    /// Replaces the seed of a random member; other members are unchanged.
    pub fn with_seed(&self, seed: u64) -> FunctionSpec {
        match self {
            FunctionSpec::Random { cell_width, .. } => {
                FunctionSpec::Random { seed, cell_width: *cell_width }
            }
            other => other.clone(),
        }
    }

    pub fn evaluate(&self, space: &DiscreteSpace, family: Option<&KernelFamily>) -> Result<Vec<f64>> {
        let h = space.spacing();
        let xs = space.abscissae();
        let clamp = 0.5 * h;
        let map = |f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).collect::<Vec<f64>>();
        Ok(match *self {
            FunctionSpec::Constant { value } => vec![value; space.len()],
            FunctionSpec::Linear { slope } => map(&|x| slope * x),
            FunctionSpec::LogSpike => map(&|x| {
                let a = if x == 0.0 { clamp } else { x.abs() };
                if a < 2.0 { (2.0 / a).ln() } else { 0.0 }
            }),
            FunctionSpec::LogAbs => map(&|x| {
                let a = if x == 0.0 { clamp } else { x.abs() };
                if a <= 1.0 { a.ln() } else { 0.0 }
            }),
            FunctionSpec::AbsFg => map(&|x| abs_fg(x, clamp)),
            FunctionSpec::Indicator { a, b } => {
                if !(a < b) {
                    return Err(Error::invalid("indicator needs a < b"));
                }
                map(&|x| if x >= a && x <= b { 1.0 } else { 0.0 })
            }
            FunctionSpec::SineMode { mode } => {
                if mode == 0 {
                    return Err(Error::invalid("sine modes start at 1"));
                }
                let spec = space
                    .spec()
                    .filter(|s| s.dim == 1)
                    .ok_or_else(|| Error::invalid("sine modes need a 1D grid space"))?;
                // Dirichlet nodes sit one spacing outside the window
                let len = 2.0 * (spec.extent + h);
                let scale = (2.0 / len).sqrt();
                let k = mode as f64 * std::f64::consts::PI / len;
                map(&|x| scale * (k * (x + spec.extent + h)).sin())
            }
            FunctionSpec::Eigenvector { index } => {
                let fam = family
                    .ok_or_else(|| Error::invalid("eigenvector functions need a kernel family"))?;
                if fam.len() != space.len() {
                    return Err(Error::invalid("kernel family does not match the space"));
                }
                if index >= fam.len() {
                    return Err(Error::invalid(format!("eigenvector index {index} out of range")));
                }
                let scale = 1.0 / fam.mass.sqrt();
                (0..space.len()).map(|i| scale * fam.eigenvectors[(i, index)]).collect()
            }
            FunctionSpec::Random { seed, cell_width } => {
                if !(cell_width > 0.0) {
                    return Err(Error::invalid("cell_width must be positive"));
                }
                random_cells(space, seed, cell_width)
            }
        })
    }
}

fn random_cells(space: &DiscreteSpace, seed: u64, width: f64) -> Vec<f64> {
    let extent = space.spec().map(|s| s.extent).unwrap_or_else(|| {
        (0..space.len()).flat_map(|i| space.point(i).to_vec()).fold(0.0, |m: f64, c| m.max(c.abs()))
    });
    let per_axis = ((2.0 * extent) / width).floor() as usize + 1;
    let cells = per_axis.pow(space.dim() as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..cells).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    (0..space.len())
        .map(|i| {
            let idx = space.point(i).iter().fold(0usize, |acc, &c| {
                let k = (((c + extent) / width).floor() as usize).min(per_axis - 1);
                acc * per_axis + k
            });
            values[idx]
        })
        .collect()
}

/// The fixed experiment suite (version 1).
pub fn default_suite() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec::Constant { value: 1.0 },
        FunctionSpec::LogSpike,
        FunctionSpec::AbsFg,
        FunctionSpec::Indicator { a: 0.0, b: 1.0 },
        FunctionSpec::SineMode { mode: 1 },
        FunctionSpec::SineMode { mode: 2 },
        FunctionSpec::SineMode { mode: 3 },
        FunctionSpec::Random { seed: 7, cell_width: 0.25 },
    ]
}

pub const SUITE_VERSION: u32 = 1;

/// `count` random members with consecutive seeds.
pub fn random_suite(first_seed: u64, count: usize, cell_width: f64) -> Vec<FunctionSpec> {
    (0..count as u64)
        .map(|k| FunctionSpec::Random { seed: first_seed + k, cell_width })
        .collect()
}

/// Evaluates a suite into `(id, values)` pairs.
pub fn evaluate_suite(
    space: &DiscreteSpace,
    suite: &[FunctionSpec],
    family: Option<&KernelFamily>,
) -> Result<Vec<(String, Vec<f64>)>> {
    suite.iter().map(|f| Ok((f.id(), f.evaluate(space, family)?))).collect()
}

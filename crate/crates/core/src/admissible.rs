//! Admissible functions `rho`: construction from a Schrodinger potential,
//! admissibility certificates `(C0, k0)`, and reverse Holder constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::BallFamily;
use crate::space::DiscreteSpace;

pub const DEFAULT_K0_GRID: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];

/// Potential description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V = value`.
    Constant { value: f64 },
    /// `V(x) = scale * |x|^exponent`.
    Power { scale: f64, exponent: f64 },
    /// `V = value` on the half-window `x_0 >= threshold`, zero elsewhere.
    Indicator { value: f64, threshold: f64 },
    /// Explicit per-point values.
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub values: Vec<f64>,
}

impl Potential {
    pub fn from_spec(space: &DiscreteSpace, spec: &PotentialSpec) -> Result<Self> {
        let values: Vec<f64> = match spec {
            PotentialSpec::Constant { value } => vec![*value; space.len()],
            PotentialSpec::Power { scale, exponent } => (0..space.len())
                .map(|i| {
                    let p = space.point(i);
                    let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                    scale * norm.powf(*exponent)
                })
                .collect(),
            PotentialSpec::Indicator { value, threshold } => (0..space.len())
                .map(|i| if space.point(i)[0] >= *threshold { *value } else { 0.0 })
                .collect(),
            PotentialSpec::Table { values } => {
                if values.len() != space.len() {
                    return Err(Error::invalid("potential table length differs from space size"));
                }
                values.clone()
            }
        };
        Self::new(values)
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("potential values must be finite and non-negative"));
        }
        Ok(Potential { values })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityCertificate {
    pub c0: f64,
    pub k0: f64,
}

#[derive(Debug, Clone)]
pub struct AdmissibleFn {
    pub values: Vec<f64>,
    /// Points where the defining sup reached the largest radius and the value
    /// was capped at twice the diameter.
    pub capped: Vec<bool>,
    pub certificate: Option<AdmissibilityCertificate>,
}

impl AdmissibleFn {
    pub fn constant(space: &DiscreteSpace, value: f64) -> Result<Self> {
        Self::from_values(vec![value; space.len()])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("rho must be strictly positive and finite"));
        }
        let n = values.len();
        Ok(AdmissibleFn { values, capped: vec![false; n], certificate: None })
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }
}

/// `rho(x) = sup { r : r^2 / mu(B(x,r)) * int_{B(x,r)} V dmu <= 1 }` evaluated
/// over `radii` with a full sweep (the condition need not be monotone in `r`).
///
/// Below the spacing every open ball is `{x}`, so when even the smallest grid
/// radius fails the sup is `min(radii[0], V(x)^{-1/2})` exactly.
pub fn schrodinger_rho(space: &DiscreteSpace, v: &Potential, radii: &[f64]) -> Result<AdmissibleFn> {
    if v.values.len() != space.len() {
        return Err(Error::invalid("potential length differs from space size"));
    }
    if v.is_zero() {
        return Err(Error::RhoInfinite);
    }
    if radii.is_empty() {
        return Err(Error::invalid("empty radius grid"));
    }
    let cap = 2.0 * space.diam();
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let results: Vec<(f64, bool)> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let prof = space.profile(x);
            let mut best: Option<f64> = None;
            // running weighted sums along the sorted profile
            let mut k = 0;
            let mut vm = 0.0;
            let mut radii_sorted = radii.to_vec();
            radii_sorted.sort_by(f64::total_cmp);
            for &r in &radii_sorted {
                let target = prof.count(r, false);
                while k < target {
                    let y = prof.order[k];
                    vm += v.values[y] * space.mass(y);
                    k += 1;
                }
                let mu = prof.cum_mass[target - 1];
                if r * r * vm / mu <= 1.0 {
                    best = Some(r);
                }
            }
            match best {
                Some(r) if r == r_max => (cap, true),
                Some(r) => (r, false),
                None => {
                    let vx = v.values[x];
                    (radii_sorted[0].min(1.0 / vx.sqrt()), false)
                }
            }
        })
        .collect();
    let (values, capped) = results.into_iter().unzip();
    Ok(AdmissibleFn { values, capped, certificate: None })
}

/// `c0(k0) = sup_{x,y} [rho(y)/rho(x)] (1 + d(x,y)/rho(y))^{-k0}` for every
/// candidate `k0`.
pub fn admissibility_curve(space: &DiscreteSpace, rho: &[f64], k0_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if rho.len() != space.len() {
        return Err(Error::invalid("rho length differs from space size"));
    }
    if rho.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("rho must be strictly positive"));
    }
    let per_x: Vec<Vec<f64>> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut best = vec![0.0f64; k0_grid.len()];
            for y in 0..space.len() {
                let base = rho[y] / rho[x];
                let growth = (1.0 + space.dist(x, y) / rho[y]).ln();
                for (b, &k0) in best.iter_mut().zip(k0_grid) {
                    *b = b.max(base * (-k0 * growth).exp());
                }
            }
            best
        })
        .collect();
    Ok(k0_grid
        .iter()
        .enumerate()
        .map(|(k, &k0)| (k0, per_x.iter().map(|row| row[k]).fold(0.0, f64::max)))
        .collect())
}

/// The `(c0, k0)` pair with the smallest `c0` (smaller `k0` on ties), plus the
/// full trade-off curve.
pub fn admissibility_certificate(
    space: &DiscreteSpace,
    rho: &[f64],
    k0_grid: &[f64],
) -> Result<(AdmissibilityCertificate, Vec<(f64, f64)>)> {
    let curve = admissibility_curve(space, rho, k0_grid)?;
    let mut best: Option<(f64, f64)> = None;
    for &(k0, c0) in &curve {
        let c0 = c0.max(1.0);
        match best {
            Some((_, b)) if c0 >= b * (1.0 - 1e-12) => {}
            _ => best = Some((k0, c0)),
        }
    }
    let (k0, c0) = best.ok_or_else(|| Error::invalid("empty k0 grid"))?;
    Ok((AdmissibilityCertificate { c0, k0 }, curve))
}

/// Exhaustive check of `1/rho(x) <= c0 (1/rho(y)) (1 + d/rho(y))^k0`.
pub fn certificate_holds(space: &DiscreteSpace, rho: &[f64], cert: AdmissibilityCertificate) -> bool {
    (0..space.len()).into_par_iter().all(|x| {
        (0..space.len()).all(|y| {
            let rhs = cert.c0 / rho[y] * (1.0 + space.dist(x, y) / rho[y]).powf(cert.k0);
            1.0 / rho[x] <= rhs * (1.0 + 1e-12)
        })
    })
}

/// Comparability constant: `rho(y)/C <= rho(x) <= C rho(y)` whenever
/// `d(x, y) <= a rho(x)`, derived from `(c0, k0)`.
pub fn comparability_constant(cert: AdmissibilityCertificate, a: f64) -> f64 {
    let upper = cert.c0 * (1.0 + a).powf(cert.k0);
    cert.c0 * (1.0 + a * upper).powf(cert.k0)
}

/// Largest observed two-sided ratio `max(rho(x)/rho(y), rho(y)/rho(x))` over
/// pairs with `d(x, y) <= a rho(x)`.
pub fn observed_comparability(space: &DiscreteSpace, rho: &[f64], a: f64) -> f64 {
    (0..space.len())
        .into_par_iter()
        .map(|x| {
            (0..space.len())
                .filter(|&y| space.dist(x, y) <= a * rho[x])
                .map(|y| (rho[x] / rho[y]).max(rho[y] / rho[x]))
                .fold(1.0, f64::max)
        })
        .reduce(|| 1.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseHolder {
    pub constant: f64,
    /// Balls skipped because the potential averages to zero on them.
    pub skipped: usize,
    pub worst_ball: Option<crate::space::Ball>,
}

/// sup over the family of `(avg_B V^q)^{1/q} / avg_B V`.
pub fn reverse_holder_constant(
    space: &DiscreteSpace,
    v: &Potential,
    q: f64,
    family: &BallFamily,
) -> Result<ReverseHolder> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::invalid("reverse Holder order must lie in (1, inf)"));
    }
    let vq: Vec<f64> = v.values.iter().map(|x| x.powf(q)).collect();
    let stats = family.map_balls(space, |_, members| {
        let (mut mu, mut a1, mut aq) = (0.0, 0.0, 0.0);
        for &y in members {
            let m = space.mass(y);
            mu += m;
            a1 += v.values[y] * m;
            aq += vq[y] * m;
        }
        (a1 / mu, aq / mu)
    });
    let mut best: Option<(f64, usize)> = None;
    let mut skipped = 0;
    for (i, &(avg1, avgq)) in stats.iter().enumerate() {
        if avg1 <= 0.0 {
            skipped += 1;
            continue;
        }
        let ratio = avgq.powf(1.0 / q) / avg1;
        match best {
            Some((b, _)) if ratio <= b => {}
            _ => best = Some((ratio, i)),
        }
    }
    let (constant, idx) = best.ok_or(Error::PotentialVanishes)?;
    Ok(ReverseHolder { constant, skipped, worst_ball: Some(family.balls[idx]) })
}

/// Ratio scan `V(B(x,2r)) / V(B(x,r))` for the measure `V dmu`; reported as a
/// flag only (no doubling certificate for the weighted measure is fitted).
pub fn potential_doubling_ratio(space: &DiscreteSpace, v: &Potential, radii: &[f64]) -> f64 {
    (0..space.len())
        .into_par_iter()
        .map(|x| {
            let prof = space.profile(x);
            let vm = |r: f64| -> f64 {
                prof.members(r, false).iter().map(|&y| v.values[y] * space.mass(y)).sum()
            };
            radii
                .iter()
                .map(|&r| {
                    let (a, b) = (vm(r), vm(2.0 * r));
                    if a > 0.0 {
                        b / a
                    } else if b > 0.0 {
                        f64::INFINITY
                    } else {
                        1.0
                    }
                })
                .fold(1.0, f64::max)
        })
        .reduce(|| 1.0, f64::max)
}

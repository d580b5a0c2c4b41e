//! The bmo-but-not-blo example on the real line: the scale functions `psi`,
//! `Phi^*`, `Phi_*`, `Psi_*`, the multiplier `g = sin Psi_*(|x|)`, the product
//! `f g` with `f = log(2/|x|)` near the origin, and its critical radii.
//!
//! The radii `r_k` underflow for moderate `k`, so everything past the grid
//! scan works in the coordinate `u = ln(2/r)`.

use std::f64::consts::{FRAC_PI_4, LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::admissible::AdmissibleFn;
use crate::error::{Error, Result};
use crate::norms::{blo_rho_norm, bmo_rho_norm, oscillations, BallFamily, FamilySpec};
use crate::quadrature::integrate;
use crate::space::{DiscreteSpace, SpaceSpec};

/// Exponent bound for `exp`: beyond this `u_k` overflows.
const EXP_MAX: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFnKind {
    /// `psi(r) = [int_{min(1,r)}^2 dt/t]^{-1}`.
    Psi,
    /// `Phi^*` built from `phi = psi`.
    PhiStar,
    /// `Phi_*` built from `phi = psi`.
    PhiLowerStar,
    /// `Psi_*(r) = int_r^2 psi(t)/t dt` for `r <= 1`, and 1 beyond.
    PsiLowerStar,
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("scale function argument must be positive, got {r}")));
    }
    Ok(())
}

pub fn psi(r: f64) -> f64 {
    1.0 / (2.0 / r.min(1.0)).ln()
}

/// `Psi_*` as a function of `u = ln(2/r)`, valid for `u >= ln 2`.
pub fn psi_lower_star_u(u: f64) -> f64 {
    1.0 + (u / LN_2).ln()
}

pub fn psi_lower_star(r: f64) -> f64 {
    if r > 1.0 {
        1.0
    } else {
        psi_lower_star_u((2.0 / r).ln())
    }
}

pub fn phi_star(r: f64) -> f64 {
    if r >= 2.0 {
        r.ln() / LN_2
    } else {
        1.0
    }
}

/// Closed-form evaluation.
pub fn eval_scale_fn(kind: ScaleFnKind, r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(match kind {
        ScaleFnKind::Psi => psi(r),
        ScaleFnKind::PhiStar => phi_star(r),
        ScaleFnKind::PhiLowerStar | ScaleFnKind::PsiLowerStar => psi_lower_star(r),
    })
}

/// `int_a^b phi(t)/t dt` by adaptive quadrature in `s = ln t`, split at the
/// kink `t = 1` of `psi`.
fn log_integral<P: Fn(f64) -> f64>(phi: P, a: f64, b: f64) -> f64 {
    let piece = |lo: f64, hi: f64| integrate(|s: f64| phi(s.exp()), lo.ln(), hi.ln(), 1e-15, 1e-14).value;
    if a < 1.0 && b > 1.0 {
        piece(a, 1.0) + piece(1.0, b)
    } else {
        piece(a, b)
    }
}

/// Quadrature evaluation of the defining integrals; the oracle for the
/// closed forms.
pub fn eval_scale_fn_quadrature(kind: ScaleFnKind, r: f64) -> Result<f64> {
    check_r(r)?;
    let raw_psi = |t: f64| 1.0 / log_integral(|_| 1.0, t.min(1.0), 2.0);
    Ok(match kind {
        ScaleFnKind::Psi => raw_psi(r),
        ScaleFnKind::PhiStar => {
            if r >= 2.0 {
                log_integral(psi, 1.0, r)
            } else {
                log_integral(psi, 1.0, 2.0)
            }
        }
        ScaleFnKind::PhiLowerStar => {
            if r <= 1.0 {
                log_integral(psi, r, 2.0)
            } else {
                log_integral(psi, 1.0, 2.0)
            }
        }
        ScaleFnKind::PsiLowerStar => {
            if r <= 1.0 {
                // 1 + int_r^1 dt / (t ln(2/t)), with t = e^s
                1.0 + integrate(|s: f64| 1.0 / (LN_2 - s), r.ln(), 0.0, 1e-15, 1e-14).value
            } else {
                1.0
            }
        }
    })
}

/// `g(x) = sin Psi_*(|x|)`; at `x = 0` the value is undefined and taken as 0.
pub fn multiplier_g(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        psi_lower_star(x.abs()).sin()
    }
}

/// `log(2/|x|)` on `|x| <= 2`, zero outside; at `x = 0` the value at `|x| = clamp`.
pub fn f_log(x: f64, clamp: f64) -> f64 {
    let a = if x == 0.0 { clamp } else { x.abs() };
    if a > 2.0 {
        0.0
    } else {
        (2.0 / a).ln()
    }
}

/// `|f g|` at `x`, with the origin evaluated at `|x| = clamp`.
pub fn abs_fg(x: f64, clamp: f64) -> f64 {
    let a = if x == 0.0 { clamp } else { x.abs() };
    (f_log(a, clamp) * multiplier_g(a)).abs()
}

/// `f g` as a function of `u = ln(2/x)` for `0 < x <= 1`.
pub fn fg_u(u: f64) -> f64 {
    u * psi_lower_star_u(u).sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRadius {
    pub k: u32,
    /// `ln(2/r_k)`.
    pub u: f64,
    /// `log2(r_k)`, exact even when `r_k` underflows.
    pub log2_r: f64,
    /// `r_k` itself; zero once it underflows.
    pub r: f64,
}

/// `u_k = ln(2/r_k) = ln 2 * exp(pi k / 4 - 1)`.
pub fn critical_u(k: u32) -> f64 {
    LN_2 * (FRAC_PI_4 * k as f64 - 1.0).exp()
}

pub fn solve_rk(k: u32) -> Result<CriticalRadius> {
    if k < 2 {
        return Err(Error::invalid(format!("critical radii start at k = 2, got {k}")));
    }
    let e = FRAC_PI_4 * k as f64 - 1.0;
    if e > EXP_MAX {
        return Err(Error::invalid(format!("ln(2/r_k) overflows for k = {k}")));
    }
    let u = critical_u(k);
    Ok(CriticalRadius { k, u, log2_r: 1.0 - e.exp(), r: 2.0 * (-u).exp() })
}

/// Bisection on the quadrature form of `Psi_*` in the variable `u`:
/// `1 + int_{ln 2}^{u} dv / v = pi k / 4`.
pub fn solve_rk_bisection(k: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid(format!("critical radii start at k = 2, got {k}")));
    }
    let target = FRAC_PI_4 * k as f64;
    let value = |u: f64| 1.0 + integrate(|v: f64| 1.0 / v, LN_2, u, 1e-15, 1e-15).value;
    let (mut lo, mut hi) = (LN_2, LN_2 * 2.0);
    while value(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if value(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest `m` whose interval `[r_{8m+4}, r_{8m+3}]` is representable in `u`.
pub fn max_feasible_m() -> u32 {
    let mut m = 1;
    while FRAC_PI_4 * (8 * (m + 1) + 4) as f64 - 1.0 <= EXP_MAX {
        m += 1;
    }
    m
}

fn check_m(m: u32) -> Result<()> {
    let max = max_feasible_m();
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if m > max {
        return Err(Error::ScaleUnresolvable { m, max_feasible: max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeReport {
    pub m: u32,
    pub samples: usize,
    pub min_fg: f64,
    /// Minimum of `x (fg)'(x)`; same sign as `(fg)'`.
    pub min_first_derivative: f64,
    /// Maximum of `x^2 (fg)''(x)`; same sign as `(fg)''`.
    pub max_second_derivative: f64,
    /// `fg(r_{8m+3})` from the direct formula.
    pub endpoint_value: f64,
    /// `(sqrt 2 / 2) log(2 / r_{8m+3})`.
    pub endpoint_expected: f64,
    pub endpoint_rel_error: f64,
    /// `fg(r_{8m+4}) / log(2 / r_{8m+4})`, which should vanish.
    pub left_endpoint_scaled: f64,
}

impl ShapeReport {
    pub fn holds(&self, endpoint_tol: f64) -> bool {
        self.min_fg >= 0.0
            && self.min_first_derivative > 0.0
            && self.max_second_derivative < 0.0
            && self.endpoint_rel_error <= endpoint_tol
    }
}

/// Samples the open interval `(r_{8m+4}, r_{8m+3})` at `samples` points,
/// equally spaced in `theta = ln(u / u_{8m+3}) in (0, pi/4)`.
///
/// With `s = sin Psi_*`, `c = cos Psi_*`: `x (fg)' = -(s + c)` and
/// `x^2 (fg)'' = (s + c) + (c - s) / u`.
pub fn verify_shape(m: u32, samples: usize) -> Result<ShapeReport> {
    check_m(m)?;
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let r3 = solve_rk(8 * m + 3)?;
    let r4 = solve_rk(8 * m + 4)?;
    let mut min_fg = f64::INFINITY;
    let mut min_d1 = f64::INFINITY;
    let mut max_d2 = f64::NEG_INFINITY;
    for i in 0..samples {
        let theta = FRAC_PI_4 * (i as f64 + 1.0) / (samples as f64 + 1.0);
        let u = r3.u * theta.exp();
        // reduced angle: Psi_* = 2 m pi + 3 pi / 4 + theta
        let angle = 3.0 * FRAC_PI_4 + theta;
        let (s, c) = angle.sin_cos();
        min_fg = min_fg.min(u * s);
        min_d1 = min_d1.min(-(s + c));
        max_d2 = max_d2.max((s + c) + (c - s) / u);
    }
    let endpoint_value = fg_u(r3.u);
    let endpoint_expected = SQRT_2 / 2.0 * r3.u;
    Ok(ShapeReport {
        m,
        samples,
        min_fg,
        min_first_derivative: min_d1,
        max_second_derivative: max_d2,
        endpoint_value,
        endpoint_expected,
        endpoint_rel_error: (endpoint_value - endpoint_expected).abs() / endpoint_expected,
        left_endpoint_scaled: fg_u(r4.u) / r4.u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRow {
    pub m: u32,
    pub log2_r_8m3: f64,
    pub interval_average: f64,
    pub lower_bound: f64,
    pub ratio: f64,
    pub quadrature_error: f64,
}

/// Mean of `f g` over `[r_{8m+4}, r_{8m+3}]`.
///
/// With `x = 2 e^{-u}` and `v = u - u_3` the mean is
/// `int_0^V (u_3 + v) sin(3 pi/4 + ln(1 + v/u_3)) e^{-v} dv / (1 - e^{-V})`
/// where `V = u_4 - u_3`. The integrand is non-negative, and the range is cut
/// at `v = 200`, which can only lower the value.
pub fn interval_average(m: u32) -> Result<(f64, f64)> {
    check_m(m)?;
    let u3 = solve_rk(8 * m + 3)?.u;
    let u4 = solve_rk(8 * m + 4)?.u;
    let big_v = u4 - u3;
    let upper = big_v.min(200.0);
    let q = integrate(
        |v: f64| (u3 + v) * (3.0 * FRAC_PI_4 + (v / u3).ln_1p()).sin() * (-v).exp(),
        0.0,
        upper,
        0.0,
        1e-13,
    );
    let norm = -(-big_v).exp_m1();
    Ok((q.value / norm, q.error / norm))
}

pub fn blo_divergence(m_list: &[u32]) -> (Vec<DivergenceRow>, Vec<(u32, String)>) {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &m in m_list {
        match (interval_average(m), solve_rk(8 * m + 3)) {
            (Ok((avg, err)), Ok(r3)) => {
                let bound = SQRT_2 / 4.0 * r3.u;
                rows.push(DivergenceRow {
                    m,
                    log2_r_8m3: r3.log2_r,
                    interval_average: avg,
                    lower_bound: bound,
                    ratio: avg / bound,
                    quadrature_error: err,
                });
            }
            (Err(e), _) | (_, Err(e)) => skipped.push((m, e.to_string())),
        }
    }
    (rows, skipped)
}

/// Whether each row's average exceeds its bound and the bounds strictly increase.
pub fn divergence_holds(rows: &[DivergenceRow]) -> bool {
    rows.iter().all(|r| r.interval_average >= r.lower_bound)
        && rows.windows(2).all(|w| w[1].lower_bound > w[0].lower_bound)
}

/// `|f g|` sampled on a grid space (origin clamped at half the spacing).
pub fn abs_fg_on(space: &DiscreteSpace) -> Vec<f64> {
    let clamp = 0.5 * space.spacing();
    space.abscissae().iter().map(|&x| abs_fg(x, clamp)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub window: f64,
    pub spacing: f64,
    pub levels: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub radius_count: usize,
    pub center_step: f64,
    /// Smallest radius of the extended family used for the blo comparison,
    /// in units of the finest spacing.
    pub extended_r_min_spacings: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            window: 4.0,
            spacing: 0.01,
            levels: 3,
            r_min: 0.02,
            r_max: 8.0,
            radius_count: 30,
            center_step: 0.05,
            extended_r_min_spacings: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanLevel {
    pub spacing: f64,
    pub bmo: f64,
    pub blo: f64,
    /// blo functional on the family extended down to small balls near 0.
    pub blo_extended: f64,
    /// Balls where `MO(|fg|, B) > 2 MO(fg, B)`.
    pub composition_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub levels: Vec<ScanLevel>,
    /// `bmo[i+1] / bmo[i]`.
    pub bmo_ratios: Vec<f64>,
    pub max_bmo_change: f64,
}

/// bmo and blo functionals (rho = 1, q = 1) of `|f g|` at spacings `h, h/2, ...`.
pub fn bmo_boundedness_scan(spec: &ScanSpec) -> Result<ScanReport> {
    if spec.levels == 0 {
        return Err(Error::invalid("scan needs at least one level"));
    }
    let mut levels = Vec::new();
    for level in 0..spec.levels {
        let h = spec.spacing / (1u32 << level) as f64;
        let space = SpaceSpec::lebesgue(1, spec.window, h).build()?;
        let rho = AdmissibleFn::constant(&space, 1.0)?;
        let fam_spec = FamilySpec {
            center_budget: 0,
            radius_count: spec.radius_count,
            r_min: Some(spec.r_min),
            r_max: Some(spec.r_max),
            center_step: Some(spec.center_step),
        };
        let family = BallFamily::enumerate(&space, &rho, &fam_spec);
        let v = abs_fg_on(&space);
        let bmo = bmo_rho_norm(&space, &v, 1.0, &family)?.total;
        let blo = blo_rho_norm(&space, &v, 1.0, &family)?.total;

        let finest = spec.spacing / (1u32 << (spec.levels - 1)) as f64;
        let r_small = spec.extended_r_min_spacings * finest;
        let near_zero: Vec<usize> =
            (0..space.len()).filter(|&i| space.point(i)[0].abs() <= spec.r_min + 1e-12).collect();
        let small_radii = crate::numeric::log_grid(r_small, spec.r_min, 12);
        let extended = BallFamily::from_parts(&near_zero, &small_radii, &rho);
        let blo_small = blo_rho_norm(&space, &v, 1.0, &extended)?.total;

        let signed: Vec<f64> = {
            let clamp = 0.5 * h;
            space
                .abscissae()
                .iter()
                .map(|&x| {
                    let a = if x == 0.0 { clamp } else { x.abs() };
                    f_log(a, clamp) * multiplier_g(a)
                })
                .collect()
        };
        let mo_abs = oscillations(&space, &v, &family);
        let mo_signed = oscillations(&space, &signed, &family);
        let composition_violations =
            mo_abs.iter().zip(&mo_signed).filter(|(a, b)| **a > 2.0 * **b * (1.0 + 1e-12) + 1e-15).count();
        levels.push(ScanLevel { spacing: h, bmo, blo, blo_extended: blo.max(blo_small), composition_violations });
    }
    let bmo_ratios: Vec<f64> = levels.windows(2).map(|w| w[1].bmo / w[0].bmo).collect();
    let max_bmo_change = bmo_ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    Ok(ScanReport { levels, bmo_ratios, max_bmo_change })
}

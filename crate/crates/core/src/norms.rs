//! Ball averages, mean oscillations and the localized norms BMO_rho^q,
//! BLO_rho^q and BMO^phi over enumerated ball families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible::AdmissibleFn;
use crate::error::{Error, Result};
use crate::numeric::log_grid;
use crate::space::{Ball, DiscreteSpace, DEFAULT_RADIUS_COUNT};

/// How test balls are enumerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySpec {
    /// Maximum number of centers; 0 keeps every point.
    pub center_budget: usize,
    pub radius_count: usize,
    /// Smallest radius; defaults to the spacing.
    pub r_min: Option<f64>,
    /// Largest radius; defaults to the diameter.
    pub r_max: Option<f64>,
    /// When set, centers are the points whose coordinates are all multiples
    /// of this step, so the family is the same set of physical balls at
    /// every resolution. Overrides `center_budget`.
    pub center_step: Option<f64>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            center_budget: 0,
            radius_count: DEFAULT_RADIUS_COUNT,
            r_min: None,
            r_max: None,
            center_step: None,
        }
    }
}

/// Test balls grouped by center, with the class-D mask `r >= rho(center)`.
#[derive(Debug, Clone)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
    pub class_d: Vec<bool>,
    /// Start offsets of each center's run inside `balls`.
    groups: Vec<(usize, usize)>,
}

impl BallFamily {
    pub fn enumerate(space: &DiscreteSpace, rho: &AdmissibleFn, spec: &FamilySpec) -> Self {
        let r_min = spec.r_min.unwrap_or(space.spacing());
        let r_max = spec.r_max.unwrap_or(space.diam()).max(r_min);
        let radii = log_grid(r_min, r_max, spec.radius_count.max(1));
        let centers = match spec.center_step {
            Some(step) => centers_on_step(space, step),
            None => space.center_sample(spec.center_budget),
        };
        Self::from_parts(&centers, &radii, rho)
    }

    /// Every (center, radius) combination; every ball contains its center so
    /// none is empty.
    pub fn from_parts(centers: &[usize], radii: &[f64], rho: &AdmissibleFn) -> Self {
        let mut balls = Vec::with_capacity(centers.len() * radii.len());
        let mut class_d = Vec::with_capacity(balls.capacity());
        let mut groups = Vec::with_capacity(centers.len());
        for &c in centers {
            let start = balls.len();
            for &r in radii {
                balls.push(Ball::new(c, r));
                class_d.push(r >= rho.at(c));
            }
            groups.push((start, balls.len()));
        }
        BallFamily { balls, class_d, groups }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Applies `f(ball_index, members)` to every ball, computing one sorted
    /// profile per center. Output order matches `balls`.
    pub fn map_balls<T, F>(&self, space: &DiscreteSpace, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[usize]) -> T + Sync,
    {
        self.groups
            .par_iter()
            .flat_map_iter(|&(start, end)| {
                let prof = space.profile(self.balls[start].center);
                (start..end)
                    .map(|i| f(i, prof.members(self.balls[i].radius, false)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Points whose coordinates are all within round-off of a multiple of `step`.
pub fn centers_on_step(space: &DiscreteSpace, step: f64) -> Vec<usize> {
    let tol = 1e-9 * space.spacing();
    (0..space.len())
        .filter(|&i| space.point(i).iter().all(|&c| (c - (c / step).round() * step).abs() <= tol))
        .collect()
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::invalid(format!("q must lie in [1, inf), got {q}")));
    }
    Ok(())
}

fn nonempty<'a>(space: &DiscreteSpace, b: &Ball, members: &'a [usize]) -> Result<&'a [usize]> {
    if !(b.radius > 0.0) || members.is_empty() || b.center >= space.len() {
        return Err(Error::EmptyBall { center: b.center, radius: b.radius });
    }
    Ok(members)
}

fn avg_over(space: &DiscreteSpace, f: &[f64], members: &[usize]) -> f64 {
    // offset by the first value so constants average exactly
    let base = f[members[0]];
    let (mut s, mut m) = (0.0, 0.0);
    for &y in members {
        s += (f[y] - base) * space.mass(y);
        m += space.mass(y);
    }
    base + s / m
}

/// `(mean over members of |f - c|^q)^{1/q}`.
fn power_mean_dev(space: &DiscreteSpace, f: &[f64], members: &[usize], c: f64, q: f64) -> f64 {
    let (mut s, mut m) = (0.0, 0.0);
    for &y in members {
        let d = (f[y] - c).abs();
        s += if q == 1.0 { d } else { d.powf(q) } * space.mass(y);
        m += space.mass(y);
    }
    let mean = s / m;
    if q == 1.0 {
        mean
    } else {
        mean.powf(1.0 / q)
    }
}

fn min_over(f: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&y| f[y]).fold(f64::INFINITY, f64::min)
}

pub fn ball_average(space: &DiscreteSpace, f: &[f64], b: &Ball) -> Result<f64> {
    let members = space.members(b, false);
    Ok(avg_over(space, f, nonempty(space, b, &members)?))
}

pub fn mean_oscillation(space: &DiscreteSpace, f: &[f64], b: &Ball, q: f64) -> Result<f64> {
    check_q(q)?;
    let members = space.members(b, false);
    let members = nonempty(space, b, &members)?;
    let avg = avg_over(space, f, members);
    Ok(power_mean_dev(space, f, members, avg, q))
}

/// Discrete essential infimum: the minimum over members.
pub fn essinf_ball(space: &DiscreteSpace, f: &[f64], b: &Ball) -> Result<f64> {
    let members = space.members(b, false);
    Ok(min_over(f, nonempty(space, b, &members)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// sup over balls outside class D of the oscillation functional.
    pub oscillation_part: f64,
    /// sup over class-D balls of `(mean |f|^q)^{1/q}`.
    pub local_part: f64,
    /// `oscillation_part + local_part`.
    pub total: f64,
    pub oscillation_argmax: Option<Ball>,
    pub local_argmax: Option<Ball>,
}

impl NormReport {
    /// `max(oscillation_part, local_part)`, equivalent to `total` within a factor 2.
    pub fn max_part(&self) -> f64 {
        self.oscillation_part.max(self.local_part)
    }

    /// The ball attaining the larger of the two parts, with its class flag.
    pub fn argmax(&self) -> Option<(Ball, bool)> {
        if self.local_part > self.oscillation_part {
            self.local_argmax.map(|b| (b, true))
        } else {
            self.oscillation_argmax.map(|b| (b, false)).or(self.local_argmax.map(|b| (b, true)))
        }
    }
}

#[derive(Clone, Copy)]
enum Oscillation {
    Mean,
    Lower,
}

fn localized_norm(
    space: &DiscreteSpace,
    f: &[f64],
    q: f64,
    family: &BallFamily,
    kind: Oscillation,
) -> Result<NormReport> {
    check_q(q)?;
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if f.len() != space.len() {
        return Err(Error::invalid("function length differs from space size"));
    }
    let values = family.map_balls(space, |i, members| {
        if family.class_d[i] {
            power_mean_dev(space, f, members, 0.0, q)
        } else {
            let c = match kind {
                Oscillation::Mean => avg_over(space, f, members),
                Oscillation::Lower => min_over(f, members),
            };
            power_mean_dev(space, f, members, c, q)
        }
    });
    let mut osc: Option<(f64, usize)> = None;
    let mut loc: Option<(f64, usize)> = None;
    for (i, &v) in values.iter().enumerate() {
        let slot = if family.class_d[i] { &mut loc } else { &mut osc };
        match slot {
            Some((b, _)) if v <= *b => {}
            _ => *slot = Some((v, i)),
        }
    }
    let oscillation_part = osc.map_or(0.0, |p| p.0);
    let local_part = loc.map_or(0.0, |p| p.0);
    Ok(NormReport {
        oscillation_part,
        local_part,
        total: oscillation_part + local_part,
        oscillation_argmax: osc.map(|p| family.balls[p.1]),
        local_argmax: loc.map(|p| family.balls[p.1]),
    })
}

pub fn bmo_rho_norm(space: &DiscreteSpace, f: &[f64], q: f64, family: &BallFamily) -> Result<NormReport> {
    localized_norm(space, f, q, family, Oscillation::Mean)
}

pub fn blo_rho_norm(space: &DiscreteSpace, f: &[f64], q: f64, family: &BallFamily) -> Result<NormReport> {
    localized_norm(space, f, q, family, Oscillation::Lower)
}

/// `sup_B MO(f, B) / phi(r_B)`; with `tilde` set, `|f_{B(0,1)}|` is added,
/// the unit ball being centered at the point nearest the origin.
pub fn bmo_phi_norm<P>(space: &DiscreteSpace, f: &[f64], phi: P, family: &BallFamily, tilde: bool) -> Result<f64>
where
    P: Fn(f64) -> f64 + Sync,
{
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let ratios = family.map_balls(space, |i, members| {
        let avg = avg_over(space, f, members);
        power_mean_dev(space, f, members, avg, 1.0) / phi(family.balls[i].radius)
    });
    let mut sup = ratios.into_iter().fold(0.0, f64::max);
    if tilde {
        let origin = space.nearest(&vec![0.0; space.dim()]);
        sup += ball_average(space, f, &Ball::new(origin, 1.0))?.abs();
    }
    Ok(sup)
}

/// Per-ball mean oscillations (q = 1) in family order.
pub fn oscillations(space: &DiscreteSpace, f: &[f64], family: &BallFamily) -> Vec<f64> {
    family.map_balls(space, |_, members| {
        let avg = avg_over(space, f, members);
        power_mean_dev(space, f, members, avg, 1.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEquivalence {
    pub q1: f64,
    pub q2: f64,
    /// `q2 / q1`, or 1 when both vanish.
    pub constant: f64,
}

/// Empirical equivalence constant between the q = 1 and q = 2 BMO_rho norms.
pub fn q_equivalence(space: &DiscreteSpace, f: &[f64], family: &BallFamily) -> Result<QEquivalence> {
    let q1 = bmo_rho_norm(space, f, 1.0, family)?.total;
    let q2 = bmo_rho_norm(space, f, 2.0, family)?.total;
    let constant = if q1 == 0.0 && q2 == 0.0 { 1.0 } else { q2 / q1 };
    Ok(QEquivalence { q1, q2, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpaceSpec;
    use proptest::prelude::*;

    fn line(extent: f64, h: f64) -> DiscreteSpace {
        SpaceSpec::lebesgue(1, extent, h).build().unwrap()
    }

    fn family(s: &DiscreteSpace, rho: f64, budget: usize, radii: usize) -> BallFamily {
        let rho = AdmissibleFn::constant(s, rho).unwrap();
        BallFamily::enumerate(s, &rho, &FamilySpec { center_budget: budget, radius_count: radii, ..Default::default() })
    }

    #[test]
    fn averages_and_oscillations() {
        let s = line(2.0, 0.01);
        let o = s.nearest(&[0.0]);
        let b = Ball::new(o, 1.0);
        let x = s.abscissae();
        assert!((ball_average(&s, &vec![3.0; s.len()], &b).unwrap() - 3.0).abs() < 1e-12);
        assert!(ball_average(&s, &x, &b).unwrap().abs() < 0.01);
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        assert!((ball_average(&s, &ax, &b).unwrap() - 0.5).abs() < 0.01);
        assert!((mean_oscillation(&s, &x, &b, 1.0).unwrap() - 0.5).abs() < 0.01);
        assert_eq!(mean_oscillation(&s, &vec![2.0; s.len()], &b, 2.0).unwrap(), 0.0);
        let sign: Vec<f64> = x.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        // 49 points at -1 and 50 at +1: the mean is 1/99
        let mo = mean_oscillation(&s, &sign, &Ball::new(o, 0.5), 1.0).unwrap();
        assert!((mo - (1.0 - 1.0 / 99.0f64.powi(2))).abs() < 1e-12, "{mo}");
        assert!((essinf_ball(&s, &x, &b).unwrap() + 0.99).abs() < 1e-9);
        assert!(ball_average(&s, &x, &Ball::new(o, 0.0)).is_err());
        assert!(mean_oscillation(&s, &x, &b, 0.5).is_err());
    }

    #[test]
    fn indicator_min_is_zero_on_mixed_ball() {
        let s = line(2.0, 0.1);
        let ind: Vec<f64> = s.abscissae().iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(essinf_ball(&s, &ind, &Ball::new(s.nearest(&[0.0]), 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn constant_functions() {
        let s = line(4.0, 0.05);
        let fam = family(&s, 1.0, 0, 20);
        let zero = vec![0.0; s.len()];
        assert_eq!(bmo_rho_norm(&s, &zero, 1.0, &fam).unwrap().total, 0.0);
        let one = vec![1.0; s.len()];
        let r = bmo_rho_norm(&s, &one, 1.0, &fam).unwrap();
        assert_eq!(r.oscillation_part, 0.0);
        assert!((r.local_part - 1.0).abs() < 1e-12);
        assert!((r.total - 1.0).abs() < 1e-12);
        let c = vec![2.5; s.len()];
        let b = blo_rho_norm(&s, &c, 1.0, &fam).unwrap();
        assert!((b.total - 2.5).abs() < 1e-12);
        assert!(b.local_argmax.is_some());
    }

    #[test]
    fn empty_family_rejected() {
        let s = line(1.0, 0.1);
        let rho = AdmissibleFn::constant(&s, 1.0).unwrap();
        let fam = BallFamily::from_parts(&[], &[0.5], &rho);
        assert!(matches!(bmo_rho_norm(&s, &vec![0.0; s.len()], 1.0, &fam), Err(Error::EmptyFamily)));
    }

    #[test]
    fn phi_norm_examples() {
        let s = line(4.0, 0.02);
        let fam = family(&s, 1.0, 200, 30);
        let c = vec![-1.5; s.len()];
        assert_eq!(bmo_phi_norm(&s, &c, |_| 1.0, &fam, false).unwrap(), 0.0);
        assert!((bmo_phi_norm(&s, &c, |_| 1.0, &fam, true).unwrap() - 1.5).abs() < 1e-12);
        // MO(x, B(c, r)) is about r/2 for interior balls and never above r
        let x = s.abscissae();
        let v = bmo_phi_norm(&s, &x, |r| r, &fam, false).unwrap();
        assert!(v > 0.45 && v <= 1.0, "{v}");
    }

    #[test]
    fn map_balls_matches_direct_membership() {
        let s = SpaceSpec::lebesgue(2, 1.0, 0.25).build().unwrap();
        let fam = family(&s, 0.5, 7, 5);
        let counts = fam.map_balls(&s, |_, m| m.len());
        for (b, c) in fam.balls.iter().zip(counts) {
            assert_eq!(s.members(b, false).len(), c);
        }
    }

    fn suite_space() -> (DiscreteSpace, BallFamily) {
        let s = line(2.0, 0.05);
        let fam = family(&s, 0.5, 0, 12);
        (s, fam)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn blo_dominates_half_bmo(vals in prop::collection::vec(-5.0f64..5.0, 81), q in 1.0f64..3.0) {
            let (s, fam) = suite_space();
            let bmo = bmo_rho_norm(&s, &vals, q, &fam).unwrap();
            let blo = blo_rho_norm(&s, &vals, q, &fam).unwrap();
            prop_assert!(bmo.total <= 2.0 * blo.total * (1.0 + 1e-12));
        }

        #[test]
        fn lipschitz_composition(vals in prop::collection::vec(-3.0f64..3.0, 81)) {
            let (s, fam) = suite_space();
            let base = oscillations(&s, &vals, &fam);
            let sin: Vec<f64> = vals.iter().map(|v| v.sin()).collect();
            let abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
            for (g, c) in [(sin, 1.0), (abs, 1.0)] {
                let comp = oscillations(&s, &g, &fam);
                for (a, b) in comp.iter().zip(&base) {
                    prop_assert!(*a <= 2.0 * c * b + 1e-12);
                }
            }
        }

        #[test]
        fn q_monotone(vals in prop::collection::vec(-5.0f64..5.0, 81)) {
            let (s, fam) = suite_space();
            let e = q_equivalence(&s, &vals, &fam).unwrap();
            prop_assert!(e.q1 <= e.q2 * (1.0 + 1e-12));
            prop_assert!(e.constant.is_finite());
        }

        #[test]
        fn constant_shift(vals in prop::collection::vec(-5.0f64..5.0, 81), c in -3.0f64..3.0) {
            let (s, fam) = suite_space();
            let shifted: Vec<f64> = vals.iter().map(|v| v + c).collect();
            let a = bmo_rho_norm(&s, &vals, 1.0, &fam).unwrap();
            let b = bmo_rho_norm(&s, &shifted, 1.0, &fam).unwrap();
            prop_assert!((a.oscillation_part - b.oscillation_part).abs() <= 1e-9 * (1.0 + a.oscillation_part));
            prop_assert!((a.local_part - b.local_part).abs() <= c.abs() + 1e-9);
        }

        #[test]
        fn homogeneity(vals in prop::collection::vec(-5.0f64..5.0, 81), c in -4.0f64..4.0) {
            let (s, fam) = suite_space();
            let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
            let a = bmo_rho_norm(&s, &vals, 2.0, &fam).unwrap().total;
            let b = bmo_rho_norm(&s, &scaled, 2.0, &fam).unwrap().total;
            prop_assert!((b - c.abs() * a).abs() <= 1e-9 * (1.0 + b));
        }
    }
}

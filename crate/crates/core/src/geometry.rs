//! Annular decay, the weak and monotone geodesic properties, and the
//! chain-ball construction built from monotone chains.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_grid;
use crate::space::{Ball, DiscreteSpace};

pub const DELTA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Above this many points the exhaustive chain search is skipped.
pub const EXHAUSTIVE_LIMIT: usize = 4096;

// ---------------------------------------------------------------------------
// annular decay

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnularSampling {
    /// 0 keeps every point.
    pub center_budget: usize,
    pub radius_count: usize,
    pub s_count: usize,
    /// Smallest s as a multiple of the spacing.
    pub s_floor_factor: f64,
    /// Only triples with `r > tau * s` are sampled.
    pub tau: f64,
    /// Largest admissible K when choosing delta.
    pub k_max: f64,
}

impl Default for AnnularSampling {
    fn default() -> Self {
        AnnularSampling {
            center_budget: 32,
            radius_count: 30,
            s_count: 20,
            s_floor_factor: 10.0,
            tau: 1.0,
            k_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub x: usize,
    pub r: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnularDecayCertificate {
    pub delta: f64,
    pub k_const: f64,
    pub worst_triple: Option<Triple>,
    /// `(delta, K(delta))` for every delta on the grid.
    pub per_delta: Vec<(f64, f64)>,
    pub tau: f64,
    pub samples: usize,
}

impl AnnularDecayCertificate {
    pub fn k_at(&self, delta: f64) -> Option<f64> {
        self.per_delta
            .iter()
            .find(|(d, _)| (d - delta).abs() < 1e-12)
            .map(|&(_, k)| k)
    }
}

/// Fits `mu(B(x,r+s)) - mu(B(x,r)) <= K (s/r)^delta mu(B(x,r))` over sampled
/// triples. K(delta) is the sup ratio (at least 1); the chosen delta is the
/// largest one with K(delta) <= k_max, or the one with the smallest K when
/// none qualifies.
pub fn annular_decay_certificate(
    space: &DiscreteSpace,
    sampling: &AnnularSampling,
) -> Result<AnnularDecayCertificate> {
    if space.len() < 2 {
        return Err(Error::invalid("annular decay needs at least two points"));
    }
    if !(sampling.tau >= 1.0) {
        return Err(Error::invalid("tau must be at least 1"));
    }
    if !(sampling.s_floor_factor > 0.0) {
        return Err(Error::invalid("s_floor_factor must be positive"));
    }
    let diam = space.diam();
    let s_floor = sampling.s_floor_factor * space.spacing();
    if s_floor * sampling.tau >= diam {
        return Err(Error::invalid("s floor leaves no room below the diameter"));
    }
    let s_grid = log_grid(s_floor, diam / sampling.tau, sampling.s_count.max(1));
    let r_grid = log_grid(s_floor * sampling.tau, diam, sampling.radius_count.max(1));
    let centers = space.center_sample(sampling.center_budget);
    let tau = sampling.tau;

    type Best = Vec<(f64, Option<Triple>)>;
    let per_center: Vec<(Best, usize)> = centers
        .par_iter()
        .map(|&x| {
            let prof = space.profile(x);
            let mut best: Best = vec![(0.0, None); DELTA_GRID.len()];
            let mut n = 0;
            for &r in &r_grid {
                let base = prof.measure(r, false);
                if base <= 0.0 {
                    continue;
                }
                for &s in &s_grid {
                    if !(r > tau * s) {
                        continue;
                    }
                    n += 1;
                    let ann = (prof.measure(r + s, false) - base) / base;
                    for (k, &d) in DELTA_GRID.iter().enumerate() {
                        let ratio = ann * (r / s).powf(d);
                        if ratio > best[k].0 {
                            best[k] = (ratio, Some(Triple { x, r, s }));
                        }
                    }
                }
            }
            (best, n)
        })
        .collect();

    let mut sup: Best = vec![(0.0, None); DELTA_GRID.len()];
    let mut samples = 0;
    for (best, n) in per_center {
        samples += n;
        for (acc, b) in sup.iter_mut().zip(best) {
            if b.0 > acc.0 {
                *acc = b;
            }
        }
    }
    let per_delta: Vec<(f64, f64)> =
        DELTA_GRID.iter().zip(&sup).map(|(&d, b)| (d, b.0.max(1.0))).collect();

    let pick = (0..DELTA_GRID.len())
        .rev()
        .find(|&k| per_delta[k].1 <= sampling.k_max)
        .unwrap_or_else(|| {
            // smallest K, larger delta on ties
            let mut k_best = DELTA_GRID.len() - 1;
            for k in (0..DELTA_GRID.len()).rev() {
                if per_delta[k].1 < per_delta[k_best].1 {
                    k_best = k;
                }
            }
            k_best
        });
    Ok(AnnularDecayCertificate {
        delta: per_delta[pick].0,
        k_const: per_delta[pick].1,
        worst_triple: sup[pick].1,
        per_delta,
        tau,
        samples,
    })
}

/// Constant for Property (P) obtained from a Property (P)_tau constant:
/// `ceil(tau)^(1 - delta) * c_p_tau * c1`.
pub fn p_tau_convert(tau: f64, c_p_tau: f64, delta: f64, c1: f64) -> Result<f64> {
    if !(tau > 1.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must exceed 1, got {tau}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(c1 >= 1.0) {
        return Err(Error::invalid(format!("c1 must be at least 1, got {c1}")));
    }
    if !(c_p_tau > 0.0) {
        return Err(Error::invalid("c_p_tau must be positive"));
    }
    Ok(tau.ceil().powf(1.0 - delta) * c_p_tau * c1)
}

/// The other direction needs no change of constant.
pub fn p_to_p_tau(c_p: f64) -> f64 {
    c_p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PTauCrossCheck {
    pub direct: AnnularDecayCertificate,
    pub tau: f64,
    /// K of the (P)_tau fit at the delta chosen by the direct fit.
    pub c_p_tau: f64,
    pub c1: f64,
    pub converted: f64,
    pub dominates: bool,
}

/// Fits (P) directly and (P)_tau separately, converts the latter and checks
/// that the converted constant bounds the direct one.
pub fn p_tau_cross_check(
    space: &DiscreteSpace,
    sampling: &AnnularSampling,
    tau: f64,
    c1: f64,
) -> Result<PTauCrossCheck> {
    let direct = annular_decay_certificate(space, &AnnularSampling { tau: 1.0, ..sampling.clone() })?;
    let fitted = annular_decay_certificate(space, &AnnularSampling { tau, ..sampling.clone() })?;
    let c_p_tau = fitted.k_at(direct.delta).expect("delta comes from the shared grid");
    let converted = p_tau_convert(tau, c_p_tau, direct.delta, c1)?;
    Ok(PTauCrossCheck {
        dominates: converted >= direct.k_const,
        direct,
        tau,
        c_p_tau,
        c1,
        converted,
    })
}

// ---------------------------------------------------------------------------
// weak and monotone geodesic properties

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeodesicKind {
    Weak,
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeodesicWitness {
    /// `d(y, closed B(x, r)) = distance` although `y` lies in the closed ball
    /// of radius `r + s`.
    Weak { x: usize, r: f64, s: f64, y: usize, distance: f64 },
    /// The greedy and exhaustive searches found no chain from `y` to `x`.
    Monotone { x: usize, y: usize, s: f64, stuck: usize, distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GeodesicStatus {
    Holds,
    Fails { witness: GeodesicWitness },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicCertificate {
    pub kind: GeodesicKind,
    /// C3 for the weak property, C4 for the monotone one.
    pub constant: f64,
    pub status: GeodesicStatus,
    /// Set when no sample had a nonempty outer annulus.
    pub trivial: bool,
    /// Sup ratio per s, smallest s first (weak only).
    pub scale_profile: Vec<(f64, f64)>,
    pub samples: usize,
}

impl GeodesicCertificate {
    pub fn holds(&self) -> bool {
        matches!(self.status, GeodesicStatus::Holds)
    }

    pub fn witness(&self) -> Option<&GeodesicWitness> {
        match &self.status {
            GeodesicStatus::Holds => None,
            GeodesicStatus::Fails { witness } => Some(witness),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakGeodesicSampling {
    pub center_budget: usize,
    pub radius_count: usize,
    pub s_count: usize,
    /// Smallest s as a fraction of the spacing.
    pub s_min_fraction: f64,
    /// Largest s as a fraction of the diameter.
    pub s_max_fraction: f64,
    /// Number of distance shells per center that also get the radius
    /// `D - s`, the radius that puts a whole shell just outside the ball.
    pub shell_radii: usize,
    pub fail_factor: f64,
}

impl Default for WeakGeodesicSampling {
    fn default() -> Self {
        WeakGeodesicSampling {
            center_budget: 16,
            radius_count: 12,
            s_count: 10,
            s_min_fraction: 1.0,
            s_max_fraction: 0.25,
            shell_radii: 6,
            fail_factor: 10.0,
        }
    }
}

/// Distance from `y` to the point set `set`.
fn dist_to_set(space: &DiscreteSpace, y: usize, set: &[usize]) -> f64 {
    set.iter().map(|&z| space.dist(y, z)).fold(f64::INFINITY, f64::min)
}

/// Sup of `d(y, closed B(x,r)) / s` over sampled `(x, r, s)` and every `y`
/// in the closed outer annulus. Centers are visited by distance to the
/// origin, so ties resolve to the most central witness.
pub fn weak_geodesic_certificate(
    space: &DiscreteSpace,
    sampling: &WeakGeodesicSampling,
) -> Result<GeodesicCertificate> {
    if space.len() < 2 {
        return Err(Error::invalid("weak geodesic check needs at least two points"));
    }
    if !(sampling.s_min_fraction > 0.0) || !(sampling.s_max_fraction > 0.0) {
        return Err(Error::invalid("s fractions must be positive"));
    }
    let diam = space.diam();
    let s_min = sampling.s_min_fraction * space.spacing();
    let s_max = (sampling.s_max_fraction * diam).max(s_min);
    let s_grid = log_grid(s_min, s_max, sampling.s_count.max(1));
    let r_grid = space.radius_grid(sampling.radius_count.max(1));

    let origin = space.nearest(&vec![0.0; space.dim()]);
    let mut centers = space.center_sample(sampling.center_budget);
    if !centers.contains(&origin) {
        centers.push(origin);
    }
    centers.sort_by(|&a, &b| space.dist(origin, a).total_cmp(&space.dist(origin, b)).then(a.cmp(&b)));

    type Slot = (f64, Option<GeodesicWitness>);
    let per_center: Vec<(Vec<Slot>, usize)> = centers
        .par_iter()
        .map(|&x| {
            let prof = space.profile(x);
            let mut shells: Vec<f64> = Vec::new();
            for &d in &prof.dists {
                if d > 0.0 && shells.last().is_none_or(|&l| d > l) {
                    shells.push(d);
                    if shells.len() == sampling.shell_radii {
                        break;
                    }
                }
            }
            let mut slots: Vec<Slot> = vec![(0.0, None); s_grid.len()];
            let mut n = 0;
            for (k, &s) in s_grid.iter().enumerate() {
                let mut radii: Vec<f64> =
                    shells.iter().map(|&d| d - s).filter(|&r| r > 0.0).collect();
                radii.extend(r_grid.iter().copied());
                radii.sort_by(f64::total_cmp);
                radii.dedup();
                for r in radii {
                    let inner = prof.members(r, true);
                    let outer = prof.count(r + s, true);
                    if outer <= inner.len() {
                        continue;
                    }
                    n += 1;
                    for &y in &prof.order[inner.len()..outer] {
                        let d = dist_to_set(space, y, inner);
                        if d / s > slots[k].0 {
                            slots[k] = (
                                d / s,
                                Some(GeodesicWitness::Weak { x, r, s, y, distance: d }),
                            );
                        }
                    }
                }
            }
            (slots, n)
        })
        .collect();

    let mut sup: Vec<Slot> = vec![(0.0, None); s_grid.len()];
    let mut samples = 0;
    for (slots, n) in per_center {
        samples += n;
        for (acc, sl) in sup.iter_mut().zip(slots) {
            if sl.0 > acc.0 {
                *acc = sl;
            }
        }
    }
    let constant = sup.iter().map(|s| s.0).fold(0.0, f64::max);
    let trivial = samples == 0;
    let scale_profile: Vec<(f64, f64)> = s_grid.iter().zip(&sup).map(|(&s, sl)| (s, sl.0)).collect();

    // compare the smallest s against the largest s that saw a nonempty annulus
    let small = sup.first().map(|s| s.0).unwrap_or(0.0);
    let large = sup.iter().rev().map(|s| s.0).find(|&v| v > 0.0).unwrap_or(0.0);
    let status = if large > 0.0 && small > sampling.fail_factor * large {
        GeodesicStatus::Fails { witness: sup[0].1.clone().expect("positive ratio has a witness") }
    } else {
        GeodesicStatus::Holds
    };
    Ok(GeodesicCertificate {
        kind: GeodesicKind::Weak,
        constant,
        status,
        trivial,
        scale_profile,
        samples,
    })
}

/// A chain `y = x_0, ..., x_m = x` with `d(x_i, x_{i+1}) <= c4 s` and
/// `d(x_{i+1}, x) <= d(x_i, x) - s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneChain {
    pub points: Vec<usize>,
    /// Set when greedy got stuck and the exhaustive search found the chain.
    pub exhaustive: bool,
}

/// Slack for comparing distances that are exact multiples of the spacing.
fn slack(space: &DiscreteSpace) -> f64 {
    1e-9 * space.spacing()
}

fn admissible_step(space: &DiscreteSpace, p: usize, q: usize, x: usize, s: f64, c4: f64) -> bool {
    let eps = slack(space);
    space.dist(p, q) <= c4 * s + eps && space.dist(q, x) <= space.dist(p, x) - s + eps
}

/// Greedy nearest-progress chain from `y` to `x`. When greedy gets stuck on a
/// small space, a breadth-first search over admissible steps decides whether
/// any chain exists.
pub fn monotone_geodesic_chain(
    space: &DiscreteSpace,
    x: usize,
    y: usize,
    s: f64,
    c4: f64,
) -> Result<MonotoneChain> {
    if !(s > 0.0) {
        return Err(Error::invalid("s must be positive"));
    }
    if !(c4 >= 1.0) {
        return Err(Error::invalid(format!("c4 must be at least 1, got {c4}")));
    }
    if space.dist(x, y) < s {
        return Err(Error::invalid("monotone chain needs d(x, y) >= s"));
    }
    let mut points = vec![y];
    let mut p = y;
    while p != x {
        let next = (0..space.len())
            .filter(|&q| admissible_step(space, p, q, x, s, c4))
            .min_by(|&a, &b| space.dist(a, x).total_cmp(&space.dist(b, x)).then(a.cmp(&b)));
        match next {
            Some(q) => {
                points.push(q);
                p = q;
            }
            None => {
                if space.len() <= EXHAUSTIVE_LIMIT {
                    if let Some(points) = exhaustive_chain(space, x, y, s, c4) {
                        return Ok(MonotoneChain { points, exhaustive: true });
                    }
                }
                return Err(Error::ChainStuck { point: p, distance: space.dist(p, x) });
            }
        }
    }
    Ok(MonotoneChain { points, exhaustive: false })
}

fn exhaustive_chain(space: &DiscreteSpace, x: usize, y: usize, s: f64, c4: f64) -> Option<Vec<usize>> {
    let n = space.len();
    let mut prev = vec![usize::MAX; n];
    prev[y] = y;
    let mut queue = VecDeque::from([y]);
    while let Some(p) = queue.pop_front() {
        if p == x {
            let mut path = vec![x];
            let mut q = x;
            while q != y {
                q = prev[q];
                path.push(q);
            }
            path.reverse();
            return Some(path);
        }
        for q in 0..n {
            if prev[q] == usize::MAX && admissible_step(space, p, q, x, s, c4) {
                prev[q] = p;
                queue.push_back(q);
            }
        }
    }
    None
}

/// Checks that every sampled `(x, y, s)` with `d(x, y) >= s` admits a chain.
pub fn monotone_geodesic_certificate(
    space: &DiscreteSpace,
    c4: f64,
    s_values: &[f64],
    center_budget: usize,
) -> Result<GeodesicCertificate> {
    if space.len() < 2 {
        return Err(Error::invalid("monotone geodesic check needs at least two points"));
    }
    let targets = space.center_sample(center_budget);
    let queries: Vec<(usize, usize, f64)> = s_values
        .iter()
        .flat_map(|&s| {
            targets.iter().flat_map(move |&x| (0..space.len()).map(move |y| (x, y, s)))
        })
        .filter(|&(x, y, s)| space.dist(x, y) >= s)
        .collect();
    let outcomes: Vec<Result<MonotoneChain>> = queries
        .par_iter()
        .map(|&(x, y, s)| monotone_geodesic_chain(space, x, y, s, c4))
        .collect();
    let mut status = GeodesicStatus::Holds;
    for (&(x, y, s), out) in queries.iter().zip(outcomes) {
        match out {
            Ok(_) => {}
            Err(Error::ChainStuck { point, distance }) => {
                status = GeodesicStatus::Fails {
                    witness: GeodesicWitness::Monotone { x, y, s, stuck: point, distance },
                };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(GeodesicCertificate {
        kind: GeodesicKind::Monotone,
        constant: c4,
        status,
        trivial: queries.is_empty(),
        scale_profile: Vec::new(),
        samples: queries.len(),
    })
}

// ---------------------------------------------------------------------------
// chain balls

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainBallWitness {
    pub base_ball: Ball,
    pub central: Ball,
    pub target: usize,
    /// `chain[0]` is the central ball, the last ball contains the target.
    pub chain: Vec<Ball>,
    pub alpha: f64,
    pub beta: f64,
    /// `t_0, t_1, ...` in construction order.
    pub t_values: Vec<f64>,
}

impl ChainBallWitness {
    /// The chain length `k(x)`.
    pub fn k(&self) -> usize {
        self.chain.len() - 1
    }
}

/// Resolver built on [`monotone_geodesic_chain`]. A query with step
/// parameter `t` asks for steps of at most `t` and decrements of at least
/// `t / c4`; below `floor` the request is raised to `floor`, since a lattice
/// has no nontrivial steps shorter than its spacing.
pub fn lattice_resolver(
    space: &DiscreteSpace,
    c4: f64,
    floor: f64,
) -> impl FnMut(usize, usize, f64) -> Result<Vec<usize>> + '_ {
    move |from, z, t| {
        let s = t.max(floor) / c4;
        monotone_geodesic_chain(space, z, from, s, c4).map(|c| c.points)
    }
}

/// Builds the chain of balls joining `B(z, 3r/4)` to `x` inside `B(z, r)`.
/// `resolver(from, z, t)` returns a monotone chain from `from` to `z` with
/// step parameter `t`; only its first step is used.
pub fn chain_ball_construct<R>(
    space: &DiscreteSpace,
    base: Ball,
    x: usize,
    c4: f64,
    mut resolver: R,
) -> Result<ChainBallWitness>
where
    R: FnMut(usize, usize, f64) -> Result<Vec<usize>>,
{
    if !(c4 >= 1.0) {
        return Err(Error::invalid(format!("c4 must be at least 1, got {c4}")));
    }
    if !space.contains(&base, x, false) {
        return Err(Error::invalid("target point is not in the base ball"));
    }
    let z = base.center;
    let r = base.radius;
    let central = Ball::new(z, 0.75 * r);
    let mut t_values = vec![(r - space.dist(x, z)) / 2.0];
    let mut balls = Vec::new();
    let mut current = x;
    while !space.contains(&central, current, false) {
        let t = *t_values.last().expect("nonempty");
        let chain = resolver(current, z, t)?;
        let next = *chain.get(1).ok_or_else(|| {
            Error::Verification(format!("resolver returned no step from point {current}"))
        })?;
        balls.push(Ball::new(current, 1.5 * t));
        current = next;
        if !space.contains(&central, current, false) {
            t_values.push((r - space.dist(current, z)) / 2.0);
        }
    }
    let mut chain = vec![central];
    chain.extend(balls.into_iter().rev());
    let witness = ChainBallWitness {
        base_ball: base,
        central,
        target: x,
        chain,
        alpha: 4.0 * c4 / 3.0,
        beta: 4.0 / 3.0,
        t_values,
    };
    verify_chain_ball(space, &witness)?;
    Ok(witness)
}

/// Independent check of the chain-ball clauses and of `B_i ⊂ B`.
pub fn verify_chain_ball(space: &DiscreteSpace, w: &ChainBallWitness) -> Result<()> {
    let fail = |clause: &str| Err(Error::Verification(clause.to_string()));
    let z = w.base_ball.center;
    let r = w.base_ball.radius;
    let eps = 1e-12 * r;
    if w.chain.first() != Some(&w.central) {
        return fail("(i) chain does not start at the central ball");
    }
    let last = w.chain.last().expect("nonempty");
    if !space.contains(last, w.target, false) {
        return fail("(i) target is not in the last ball");
    }
    for (i, pair) in w.chain.windows(2).enumerate() {
        let meet = (0..space.len())
            .any(|y| space.contains(&pair[0], y, false) && space.contains(&pair[1], y, false));
        if !meet {
            return fail(&format!("(ii) balls {i} and {} do not intersect", i + 1));
        }
    }
    for (i, b) in w.chain.iter().enumerate() {
        if !(space.dist(w.target, b.center) < w.alpha * b.radius) {
            return fail(&format!("(iii) target outside alpha * ball {i}"));
        }
        if w.beta * b.radius > r - space.dist(b.center, z) + eps {
            return fail(&format!("(iv) ball {i} too deep: beta r_i exceeds r - d(z_i, z)"));
        }
        let inside = (0..space.len())
            .filter(|&y| space.contains(b, y, false))
            .all(|y| space.contains(&w.base_ball, y, false));
        if !inside {
            return fail(&format!("ball {i} is not contained in the base ball"));
        }
    }
    Ok(())
}

/// Whether every consecutive pair of the trace satisfies
/// `t_{j+1} - t_j >= t_j / (2 c4)`.
pub fn trace_growth_holds(t_values: &[f64], c4: f64) -> bool {
    t_values.windows(2).all(|p| p[1] - p[0] >= p[0] / (2.0 * c4) * (1.0 - 1e-12))
}

/// Upper bound on the chain length from the geometric growth of `t_j`.
pub fn chain_length_bound(r: f64, t0: f64, c4: f64) -> f64 {
    (r / (4.0 * t0)).ln() / (1.0 + 1.0 / (2.0 * c4)).ln() + 1.0
}

//! Discrete curves, finitely supported plans on curves, and the test-plan
//! functionals: metric speed, kinetic energy, Lipschitz constant and
//! compression. Also the plan algebra used by the interpolation builders.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambient::{FiniteSpace, GeodesicTemplate, Point, TemplateKind};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a plan.
pub const MASS_TOL: f64 = 1e-10;
/// Tolerance on the agreement of consecutive leg marginals in [`glue`].
pub const GLUE_TOL: f64 = 1e-9;
/// Interior samples per leg used by the default compression sampling.
pub const DEFAULT_K_MID: usize = 8;
/// Event times closer than this are treated as simultaneous.
const EVENT_MERGE: f64 = 1e-12;

/// A piecewise-geodesic curve: `nodes[i]` is visited at `grid[i]` and
/// consecutive nodes are joined by template geodesics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    grid: Vec<f64>,
    nodes: Vec<Point>,
}

impl DiscreteCurve {
    pub fn new(grid: Vec<f64>, nodes: Vec<Point>) -> Result<Self> {
        if nodes.is_empty() || grid.len() != nodes.len() {
            return Err(Error::InvalidCurve(format!(
                "{} grid times for {} nodes",
                grid.len(),
                nodes.len()
            )));
        }
        if nodes.len() == 1 {
            return Err(Error::InvalidCurve("a curve needs at least two grid times".into()));
        }
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::InvalidCurve("grid must start at 0 and end at 1".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("grid must be strictly increasing".into()));
        }
        Ok(DiscreteCurve { grid, nodes })
    }

    /// The curve sitting at `p` for all times.
    pub fn constant(p: Point) -> Self {
        DiscreteCurve {
            grid: vec![0.0, 1.0],
            nodes: vec![p, p],
        }
    }

    /// The geodesic from `a` to `b` sampled on `steps` uniform intervals.
    pub fn geodesic(template: &GeodesicTemplate, a: Point, b: Point, steps: usize) -> Self {
        let steps = steps.max(1);
        let grid = uniform_grid(steps);
        let nodes = grid
            .iter()
            .map(|&t| template.geodesic_point_unchecked(a, b, t))
            .collect();
        DiscreteCurve { grid, nodes }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn first(&self) -> Point {
        self.nodes[0]
    }

    pub fn last(&self) -> Point {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn legs(&self) -> usize {
        self.grid.len() - 1
    }

    /// Position at time `t`.
    pub fn eval(&self, template: &GeodesicTemplate, t: f64) -> Point {
        let k = self.grid.partition_point(|&g| g <= t);
        if k == 0 {
            return self.nodes[0];
        }
        if k >= self.grid.len() {
            return self.last();
        }
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        if t == t0 {
            return self.nodes[k - 1];
        }
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        template.geodesic_point_unchecked(self.nodes[k - 1], self.nodes[k], s)
    }

    /// Length of the curve.
    pub fn length(&self, template: &GeodesicTemplate) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| template.dist(w[0], w[1]))
            .sum()
    }
}

/// Grid `0, 1/steps, ..., 1`.
pub fn uniform_grid(steps: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    g[steps] = 1.0;
    g
}

/// Per-interval speeds `((t_i, t_{i+1}), d(node_i, node_{i+1}) / (t_{i+1} - t_i))`.
pub fn metric_speed(template: &GeodesicTemplate, curve: &DiscreteCurve) -> Vec<((f64, f64), f64)> {
    curve
        .grid
        .windows(2)
        .zip(curve.nodes.windows(2))
        .map(|(g, n)| ((g[0], g[1]), template.dist(n[0], n[1]) / (g[1] - g[0])))
        .collect()
}

/// Serializable form of a [`CurvePlan`]; the space is stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub curves: Vec<DiscreteCurve>,
    pub masses: Vec<f64>,
}

/// A finitely supported probability measure on discrete curves.
#[derive(Debug, Clone)]
pub struct CurvePlan {
    space: Arc<FiniteSpace>,
    curves: Vec<DiscreteCurve>,
    masses: Vec<f64>,
}

impl CurvePlan {
    /// Builds a plan; zero-mass curves are dropped and masses must sum to one.
    pub fn new(space: Arc<FiniteSpace>, curves: Vec<DiscreteCurve>, masses: Vec<f64>) -> Result<Self> {
        let plan = Self::assemble(space, curves, masses)?;
        let total: f64 = plan.masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidPlan(format!("masses sum to {total}, not 1")));
        }
        Ok(plan)
    }

    /// Builds a plan from arbitrary positive masses, normalizing them.
    pub fn normalized(space: Arc<FiniteSpace>, curves: Vec<DiscreteCurve>, masses: Vec<f64>) -> Result<Self> {
        let mut plan = Self::assemble(space, curves, masses)?;
        let total: f64 = plan.masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass("plan has no mass".into()));
        }
        plan.masses.iter_mut().for_each(|m| *m /= total);
        Ok(plan)
    }

    fn assemble(space: Arc<FiniteSpace>, curves: Vec<DiscreteCurve>, masses: Vec<f64>) -> Result<Self> {
        if curves.len() != masses.len() {
            return Err(Error::InvalidPlan(format!(
                "{} curves and {} masses",
                curves.len(),
                masses.len()
            )));
        }
        let tpl = space.template();
        let mut cs = Vec::with_capacity(curves.len());
        let mut ms = Vec::with_capacity(masses.len());
        for (c, m) in curves.into_iter().zip(masses) {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidPlan(format!("invalid mass {m}")));
            }
            if m == 0.0 {
                continue;
            }
            for p in &c.nodes {
                tpl.check_point(*p)
                    .map_err(|_| Error::InvalidCurve(format!("node {p} is not on the template")))?;
            }
            cs.push(c);
            ms.push(m);
        }
        if cs.is_empty() {
            return Err(Error::ZeroMass("no curve carries mass".into()));
        }
        Ok(CurvePlan {
            space,
            curves: cs,
            masses: ms,
        })
    }

    /// The plan concentrated on the constant-speed geodesic from point `i` to point `j`.
    pub fn dirac_geodesic(space: Arc<FiniteSpace>, i: usize, j: usize, steps: usize) -> Result<Self> {
        if i >= space.len() || j >= space.len() {
            return Err(Error::IndexOutOfRange(i.max(j)));
        }
        let c = DiscreteCurve::geodesic(space.template(), space.point(i), space.point(j), steps);
        Self::new(space, vec![c], vec![1.0])
    }

    /// The plan of constant curves distributed according to `masses`.
    pub fn stationary(space: Arc<FiniteSpace>, masses: &[f64]) -> Result<Self> {
        let curves = space.points().iter().map(|p| DiscreteCurve::constant(*p)).collect();
        Self::normalized(space, curves, masses.to_vec())
    }

    pub fn record(&self) -> PlanRecord {
        PlanRecord {
            curves: self.curves.clone(),
            masses: self.masses.clone(),
        }
    }

    /// Rebuilds a plan from its record; masses are renormalized.
    pub fn from_record(space: Arc<FiniteSpace>, record: PlanRecord) -> Result<Self> {
        Self::normalized(space, record.curves, record.masses)
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn template(&self) -> &GeodesicTemplate {
        self.space.template()
    }

    pub fn curves(&self) -> &[DiscreteCurve] {
        &self.curves
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn with_space(&self, space: Arc<FiniteSpace>) -> Result<Self> {
        if space.template() != self.template() {
            return Err(Error::InvalidPlan("template mismatch".into()));
        }
        Ok(CurvePlan {
            space,
            curves: self.curves.clone(),
            masses: self.masses.clone(),
        })
    }

    /// Point masses of `(e_t)_# plan`, snapped to the nearest space point,
    /// together with the largest snapping distance.
    pub fn marginal(&self, t: f64) -> (Vec<f64>, f64) {
        let tpl = self.template();
        let mut out = vec![0.0; self.space.len()];
        let mut radius: f64 = 0.0;
        for (c, m) in self.curves.iter().zip(&self.masses) {
            let p = c.eval(tpl, t);
            let i = self.space.nearest(p);
            radius = radius.max(tpl.dist(p, self.space.point(i)));
            out[i] += m;
        }
        (out, radius)
    }

    /// Exact endpoint marginal (`end = false` for time 0). Every endpoint must
    /// be a point of the space.
    pub fn endpoint_marginal(&self, end: bool) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.space.len()];
        for (c, m) in self.curves.iter().zip(&self.masses) {
            let p = if end { c.last() } else { c.first() };
            let i = self
                .space
                .locate(p)
                .ok_or_else(|| Error::OffSpaceEndpoint(p.to_string()))?;
            out[i] += m;
        }
        Ok(out)
    }

    /// Space indices of the endpoints of each curve.
    pub fn endpoint_indices(&self) -> Result<Vec<(usize, usize)>> {
        self.curves
            .iter()
            .map(|c| {
                let a = self
                    .space
                    .locate(c.first())
                    .ok_or_else(|| Error::OffSpaceEndpoint(c.first().to_string()))?;
                let b = self
                    .space
                    .locate(c.last())
                    .ok_or_else(|| Error::OffSpaceEndpoint(c.last().to_string()))?;
                Ok((a, b))
            })
            .collect()
    }

    /// Union of all curve grids.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.curves.iter().flat_map(|c| c.grid.iter().copied()).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::ExponentDomain(q, "q must lie in (1, inf)"));
    }
    Ok(())
}

/// Kinetic energy `sum mass * sum speed^q * interval length`.
pub fn ke_q(plan: &CurvePlan, q: f64) -> Result<f64> {
    check_q(q)?;
    let tpl = plan.template();
    Ok(plan
        .curves
        .iter()
        .zip(&plan.masses)
        .map(|(c, m)| {
            m * metric_speed(tpl, c)
                .iter()
                .map(|((a, b), s)| s.powf(q) * (b - a))
                .sum::<f64>()
        })
        .sum())
}

/// `ke_q(plan, q)^(1/q)`, evaluated after scaling speeds by the Lipschitz
/// constant so that large `q` neither overflows nor underflows.
pub fn ke_q_root(plan: &CurvePlan, q: f64) -> Result<f64> {
    check_q(q)?;
    let lip = lip_const(plan);
    if lip == 0.0 {
        return Ok(0.0);
    }
    let tpl = plan.template();
    let scaled: f64 = plan
        .curves
        .iter()
        .zip(&plan.masses)
        .map(|(c, m)| {
            m * metric_speed(tpl, c)
                .iter()
                .map(|((a, b), s)| (s / lip).powf(q) * (b - a))
                .sum::<f64>()
        })
        .sum();
    Ok(lip * scaled.powf(1.0 / q))
}

/// Largest interval speed over the support.
pub fn lip_const(plan: &CurvePlan) -> f64 {
    let tpl = plan.template();
    plan.curves
        .iter()
        .flat_map(|c| metric_speed(tpl, c).into_iter().map(|(_, s)| s))
        .fold(0.0, f64::max)
}

/// Time sampling used to evaluate the supremum in the compression constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    /// All knots of all curves plus `k_mid` equally spaced interior times
    /// between consecutive knots.
    Knots { k_mid: usize },
    /// On one-dimensional templates: every open time interval on which the
    /// snapped marginal is constant (the supremum over almost every time).
    /// Tori fall back to knot sampling with 32 interior samples.
    Exact,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Knots { k_mid: DEFAULT_K_MID }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMeta {
    pub sampling: Sampling,
    /// Number of distinct marginals inspected.
    pub evaluations: usize,
    /// Largest distance between a curve position and its snapped point.
    pub snap_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    /// `+inf` when a point of zero weight is charged.
    pub comp: f64,
    pub argmax_time: f64,
    pub argmax_point: usize,
    pub meta: SamplingMeta,
}

/// Compression constant with the default knot sampling.
pub fn compression(plan: &CurvePlan) -> f64 {
    compression_with(plan, Sampling::default()).comp
}

pub fn compression_with(plan: &CurvePlan, sampling: Sampling) -> CompressionReport {
    let tpl = plan.template();
    match sampling {
        Sampling::Exact if tpl.is_one_dimensional() => compression_exact(plan),
        Sampling::Exact => {
            let mut r = compression_knots(plan, 32);
            r.meta.sampling = Sampling::Exact;
            r
        }
        Sampling::Knots { k_mid } => compression_knots(plan, k_mid),
    }
}

fn ratio(mass: f64, weight: f64) -> f64 {
    if mass <= 0.0 {
        0.0
    } else if weight <= 0.0 {
        f64::INFINITY
    } else {
        mass / weight
    }
}

fn compression_knots(plan: &CurvePlan, k_mid: usize) -> CompressionReport {
    let knots = plan.knot_times();
    let mut times = Vec::with_capacity(knots.len() * (k_mid + 1));
    for w in knots.windows(2) {
        times.push(w[0]);
        for j in 1..=k_mid {
            times.push(w[0] + (w[1] - w[0]) * j as f64 / (k_mid + 1) as f64);
        }
    }
    times.push(1.0);
    let weights = plan.space.weights();
    let mut best = (0.0, 0.0, 0);
    let mut radius: f64 = 0.0;
    for &t in &times {
        let (m, r) = plan.marginal(t);
        radius = radius.max(r);
        for (i, (mi, wi)) in m.iter().zip(weights).enumerate() {
            let v = ratio(*mi, *wi);
            if v > best.0 {
                best = (v, t, i);
            }
        }
    }
    CompressionReport {
        comp: best.0,
        argmax_time: best.1,
        argmax_point: best.2,
        meta: SamplingMeta {
            sampling: Sampling::Knots { k_mid },
            evaluations: times.len(),
            snap_radius: radius,
        },
    }
}

/// Piecewise-constant snapped trajectory of one curve: `(start_time, point)`
/// pieces in time order, plus the largest snapping distance.
fn snapped_pieces(space: &FiniteSpace, curve: &DiscreteCurve, bounds: &[f64]) -> (Vec<(f64, usize)>, f64) {
    let tpl = space.template();
    let period = match tpl.kind {
        TemplateKind::Circle => Some(tpl.length()),
        _ => None,
    };
    let mut pieces: Vec<(f64, usize)> = Vec::new();
    let mut radius: f64 = 0.0;
    for k in 0..curve.legs() {
        let (t0, t1) = (curve.grid[k], curve.grid[k + 1]);
        let (a, len) = tpl.line_parametrization(curve.nodes[k], curve.nodes[k + 1]);
        let mut cuts = vec![0.0, 1.0];
        if len != 0.0 {
            let (lo, hi) = if len > 0.0 { (a, a + len) } else { (a + len, a) };
            for &b in bounds {
                match period {
                    None => {
                        if b > lo && b < hi {
                            cuts.push((b - a) / len);
                        }
                    }
                    Some(l) => {
                        let kmin = ((lo - b) / l).floor() as i64;
                        let kmax = ((hi - b) / l).ceil() as i64;
                        for j in kmin..=kmax {
                            let bb = b + j as f64 * l;
                            if bb > lo && bb < hi {
                                cuts.push((bb - a) / len);
                            }
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
        }
        for w in cuts.windows(2) {
            if w[1] - w[0] <= 0.0 {
                continue;
            }
            let mid = tpl.normalize(Point::on_line(a + 0.5 * (w[0] + w[1]) * len));
            let i = space.nearest(mid);
            for s in [w[0], w[1]] {
                let p = tpl.normalize(Point::on_line(a + s * len));
                radius = radius.max(tpl.dist(p, space.point(i)));
            }
            let start = t0 + w[0] * (t1 - t0);
            match pieces.last() {
                Some(&(_, j)) if j == i => {}
                _ => pieces.push((start, i)),
            }
        }
    }
    (pieces, radius)
}

fn compression_exact(plan: &CurvePlan) -> CompressionReport {
    let space = &plan.space;
    let bounds = space.snapper().boundaries();
    let weights = space.weights();
    let mut mass = vec![0.0; space.len()];
    // (time, curve index, from, to)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    let mut radius: f64 = 0.0;
    let mut current = Vec::with_capacity(plan.len());
    for (ci, c) in plan.curves.iter().enumerate() {
        let (pieces, r) = snapped_pieces(space, c, &bounds);
        radius = radius.max(r);
        mass[pieces[0].1] += plan.masses[ci];
        current.push(pieces[0].1);
        for &(t, i) in &pieces[1..] {
            events.push((t, ci, i));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (0.0, 0.0, 0);
    for (i, (m, w)) in mass.iter().zip(weights).enumerate() {
        let v = ratio(*m, *w);
        if v > best.0 {
            best = (v, 0.0, i);
        }
    }
    let mut evaluations = 1;
    let mut k = 0;
    while k < events.len() {
        let start = events[k].0;
        let mut touched = Vec::new();
        while k < events.len() && events[k].0 - start <= EVENT_MERGE {
            let (_, ci, to) = events[k];
            let from = current[ci];
            mass[from] -= plan.masses[ci];
            mass[to] += plan.masses[ci];
            current[ci] = to;
            touched.push(to);
            k += 1;
        }
        evaluations += 1;
        for i in touched {
            let v = ratio(mass[i], weights[i]);
            if v > best.0 {
                best = (v, start, i);
            }
        }
    }
    CompressionReport {
        comp: best.0,
        argmax_time: best.1,
        argmax_point: best.2,
        meta: SamplingMeta {
            sampling: Sampling::Exact,
            evaluations,
            snap_radius: radius,
        },
    }
}

/// Flat record of the plan functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFunctionals {
    pub comp: f64,
    pub ke_q: BTreeMap<String, f64>,
    pub lip: f64,
    pub sampling_meta: SamplingMeta,
}

pub fn functionals(plan: &CurvePlan, qs: &[f64], sampling: Sampling) -> Result<PlanFunctionals> {
    let c = compression_with(plan, sampling);
    let mut ke = BTreeMap::new();
    for &q in qs {
        ke.insert(q.to_string(), ke_q(plan, q)?);
    }
    Ok(PlanFunctionals {
        comp: c.comp,
        ke_q: ke,
        lip: lip_const(plan),
        sampling_meta: c.meta,
    })
}

/// Reparametrizes every curve affinely from `[s, t]` onto `[0, 1]`;
/// `s > t` reverses time.
pub fn restrict_time(plan: &CurvePlan, s: f64, t: f64) -> Result<CurvePlan> {
    for v in [s, t] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::TimeOutOfRange(v));
        }
    }
    if s == t {
        return Err(Error::InvalidPlan("restriction interval is empty".into()));
    }
    let tpl = plan.template();
    let curves = plan
        .curves
        .iter()
        .map(|c| restrict_curve(tpl, c, s, t))
        .collect();
    Ok(CurvePlan {
        space: plan.space.clone(),
        curves,
        masses: plan.masses.clone(),
    })
}

fn restrict_curve(tpl: &GeodesicTemplate, c: &DiscreteCurve, s: f64, t: f64) -> DiscreteCurve {
    let (lo, hi) = if s < t { (s, t) } else { (t, s) };
    // original times of the new knots, in the new time order
    let mut times = vec![lo];
    times.extend(c.grid.iter().copied().filter(|&g| g > lo && g < hi));
    times.push(hi);
    if s > t {
        times.reverse();
    }
    let mut orig = Vec::with_capacity(times.len());
    for w in times.windows(2) {
        orig.push(w[0]);
        // A sub-arc whose endpoints became antipodal would be re-selected by
        // the tie-break rule, possibly the wrong way round: split it.
        let (a, b) = (c.eval(tpl, w[0]), c.eval(tpl, w[1]));
        let mid = c.eval(tpl, 0.5 * (w[0] + w[1]));
        let direct = tpl.geodesic_point_unchecked(a, b, 0.5);
        if tpl.dist(direct, mid) > 1e-12 * tpl.length().max(1.0) {
            orig.push(0.5 * (w[0] + w[1]));
        }
    }
    orig.push(*times.last().unwrap());
    let span = t - s;
    let mut grid: Vec<f64> = orig.iter().map(|&u| ((u - s) / span).clamp(0.0, 1.0)).collect();
    grid[0] = 0.0;
    *grid.last_mut().unwrap() = 1.0;
    let nodes = orig.iter().map(|&u| c.eval(tpl, u)).collect();
    DiscreteCurve { grid, nodes }
}

/// Reweights curve masses by `indicator` (values in `[0, 1]`) and renormalizes.
pub fn restrict_event(plan: &CurvePlan, indicator: &[f64]) -> Result<CurvePlan> {
    if indicator.len() != plan.len() {
        return Err(Error::InvalidPlan(format!(
            "indicator has {} entries for {} curves",
            indicator.len(),
            plan.len()
        )));
    }
    if indicator.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidPlan("indicator values must lie in [0, 1]".into()));
    }
    let masses: Vec<f64> = plan.masses.iter().zip(indicator).map(|(m, v)| m * v).collect();
    if masses.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroMass("event restriction retains no mass".into()));
    }
    CurvePlan::normalized(plan.space.clone(), plan.curves.clone(), masses)
}

/// Concatenates legs Markov-style: each leg is disintegrated over its
/// starting point and the conditional plans are composed. `grid` is the
/// partition of `[0, 1]` with one cell per leg.
pub fn glue(legs: &[CurvePlan], grid: &[f64]) -> Result<CurvePlan> {
    if legs.is_empty() {
        return Err(Error::InvalidPlan("nothing to glue".into()));
    }
    if grid.len() != legs.len() + 1
        || grid[0] != 0.0
        || *grid.last().unwrap() != 1.0
        || grid.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidPlan("glue grid must partition [0, 1] with one cell per leg".into()));
    }
    let space = legs[0].space.clone();
    let tpl = space.template().clone();
    for l in &legs[1..] {
        if *l.template() != tpl {
            return Err(Error::InvalidPlan("legs use different templates".into()));
        }
    }
    let ends: Vec<Vec<(usize, usize)>> = legs.iter().map(|l| l.endpoint_indices()).collect::<Result<_>>()?;
    for i in 0..legs.len() - 1 {
        let a = legs[i].endpoint_marginal(true)?;
        let b = legs[i + 1].endpoint_marginal(false)?;
        let disc = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if disc > GLUE_TOL {
            return Err(Error::MarginalMismatch { leg: i, discrepancy: disc });
        }
    }

    // paths: (curve index per leg, mass)
    let mut paths: Vec<(Vec<usize>, f64)> = legs[0]
        .masses
        .iter()
        .enumerate()
        .map(|(c, m)| (vec![c], *m))
        .collect();
    for (li, leg) in legs.iter().enumerate().skip(1) {
        let mut by_start: BTreeMap<usize, (f64, Vec<usize>)> = BTreeMap::new();
        for (c, (&(a, _), m)) in ends[li].iter().zip(&leg.masses).enumerate() {
            let e = by_start.entry(a).or_insert((0.0, Vec::new()));
            e.0 += m;
            e.1.push(c);
        }
        let mut next = Vec::new();
        for (path, w) in paths {
            let last_leg = li - 1;
            let end = ends[last_leg][*path.last().unwrap()].1;
            if let Some((total, cs)) = by_start.get(&end) {
                for &c in cs {
                    let m = w * leg.masses[c] / total;
                    if m > 0.0 {
                        let mut p = path.clone();
                        p.push(c);
                        next.push((p, m));
                    }
                }
            }
        }
        paths = next;
    }

    let mut curves = Vec::with_capacity(paths.len());
    let mut masses = Vec::with_capacity(paths.len());
    for (path, m) in paths {
        let mut g = Vec::new();
        let mut nodes = Vec::new();
        for (li, &c) in path.iter().enumerate() {
            let curve = &legs[li].curves[c];
            let (a, b) = (grid[li], grid[li + 1]);
            let skip = usize::from(li > 0);
            for (k, (&u, &p)) in curve.grid.iter().zip(&curve.nodes).enumerate().skip(skip) {
                g.push(if k + 1 == curve.grid.len() { b } else { a + u * (b - a) });
                nodes.push(p);
            }
            if li > 0 {
                // shared node: use the space point so that coordinates agree
                let junction = space.point(ends[li][c].0);
                let idx = nodes.len() - curve.nodes.len();
                nodes[idx] = junction;
            }
        }
        curves.push(DiscreteCurve { grid: g, nodes });
        masses.push(m);
    }
    CurvePlan::normalized(space, curves, masses)
}

/// `sum mass * (f(last node) - f(first node))` for `f` given on space points.
pub fn pairing(plan: &CurvePlan, f: &[f64]) -> Result<f64> {
    if f.len() != plan.space.len() {
        return Err(Error::InvalidPlan("function has the wrong length".into()));
    }
    let ends = plan.endpoint_indices()?;
    Ok(ends
        .iter()
        .zip(&plan.masses)
        .map(|((a, b), m)| m * (f[*b] - f[*a]))
        .sum())
}

/// Whether every leg of every curve joins two space points that are
/// neighbors in `adjacency` (or stays put at a space point).
pub fn is_edge_path_plan(plan: &CurvePlan, adjacency: &[Vec<usize>]) -> bool {
    let space = &plan.space;
    plan.curves.iter().all(|c| {
        c.nodes.windows(2).all(|w| match (space.locate(w[0]), space.locate(w[1])) {
            (Some(a), Some(b)) => a == b || adjacency[a].binary_search(&b).is_ok(),
            _ => false,
        })
    })
}

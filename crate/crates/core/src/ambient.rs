//! Geodesic templates, finite metric measure spaces embedded in them, and
//! sequences of such spaces converging in the pointed measured sense.
//!
//! A [`GeodesicTemplate`] is the common ambient space in which every finite
//! space of an experiment lives. Keeping all spaces inside one template makes
//! the measured convergence extrinsic: two spaces are compared by integrating
//! the same test functions against both measures, and curves of either space
//! are template geodesics.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the triangle inequality and for coordinate matching.
pub const GEOMETRY_TOL: f64 = 1e-12;
/// Tolerance used to identify a template point with a point of a space.
pub const LOCATE_TOL: f64 = 1e-9;
/// Tolerance for the "probability" flag of a density.
pub const PROBABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Segment,
    Circle,
    TorusGrid,
}

/// Selection rule for the geodesic between two points when it is not unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Antipodal pairs are joined by the arc of increasing coordinate.
    #[default]
    PositiveOrientation,
}

/// A point of a template. One-dimensional templates only use `x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub const fn on_line(x: f64) -> Self {
        Point { x, y: 0.0 }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.y == 0.0 {
            write!(f, "{}", self.x)
        } else {
            write!(f, "({}, {})", self.x, self.y)
        }
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::on_line(x)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.y == 0.0 {
            s.serialize_f64(self.x)
        } else {
            [self.x, self.y].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(f64),
            Pair([f64; 2]),
        }
        match Repr::deserialize(d) {
            Ok(Repr::Scalar(x)) => Ok(Point::on_line(x)),
            Ok(Repr::Pair([x, y])) => Ok(Point::new(x, y)),
            Err(_) => Err(de::Error::custom("a point is a number or a pair of numbers")),
        }
    }
}

/// A continuum model space with an exact geodesic oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicTemplate {
    pub kind: TemplateKind,
    /// Segment length, circle circumference, or the two torus side lengths.
    pub extent: Vec<f64>,
    #[serde(default)]
    pub tiebreak: TieBreak,
}

impl GeodesicTemplate {
    pub fn segment(length: f64) -> Result<Self> {
        Self::new(TemplateKind::Segment, vec![length])
    }

    pub fn circle(circumference: f64) -> Result<Self> {
        Self::new(TemplateKind::Circle, vec![circumference])
    }

    pub fn torus(lx: f64, ly: f64) -> Result<Self> {
        Self::new(TemplateKind::TorusGrid, vec![lx, ly])
    }

    pub fn new(kind: TemplateKind, extent: Vec<f64>) -> Result<Self> {
        let t = GeodesicTemplate {
            kind,
            extent,
            tiebreak: TieBreak::PositiveOrientation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let want = match self.kind {
            TemplateKind::Segment | TemplateKind::Circle => 1,
            TemplateKind::TorusGrid => 2,
        };
        if self.extent.len() != want {
            return Err(Error::InvalidTemplate(format!(
                "{:?} needs {want} extent value(s), got {}",
                self.kind,
                self.extent.len()
            )));
        }
        if self.extent.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidTemplate("extents must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn is_one_dimensional(&self) -> bool {
        !matches!(self.kind, TemplateKind::TorusGrid)
    }

    /// Segment length, circumference, or the first torus side.
    pub fn length(&self) -> f64 {
        self.extent[0]
    }

    /// Lebesgue volume of the template.
    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn diameter(&self) -> f64 {
        match self.kind {
            TemplateKind::Segment => self.extent[0],
            TemplateKind::Circle => self.extent[0] / 2.0,
            TemplateKind::TorusGrid => {
                (self.extent[0] * self.extent[0] + self.extent[1] * self.extent[1]).sqrt() / 2.0
            }
        }
    }

    /// Checks that `p` is a coordinate of the template; periodic coordinates
    /// are accepted anywhere and wrapped by [`GeodesicTemplate::normalize`].
    pub fn check_point(&self, p: Point) -> Result<()> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::InvalidPoint(p.to_string()));
        }
        match self.kind {
            TemplateKind::Segment => {
                let l = self.extent[0];
                if p.y != 0.0 || p.x < -GEOMETRY_TOL * l || p.x > l * (1.0 + GEOMETRY_TOL) {
                    return Err(Error::InvalidPoint(p.to_string()));
                }
            }
            TemplateKind::Circle => {
                if p.y != 0.0 {
                    return Err(Error::InvalidPoint(p.to_string()));
                }
            }
            TemplateKind::TorusGrid => {}
        }
        Ok(())
    }

    pub fn normalize(&self, p: Point) -> Point {
        match self.kind {
            TemplateKind::Segment => Point::on_line(p.x.clamp(0.0, self.extent[0])),
            TemplateKind::Circle => Point::on_line(wrap(p.x, self.extent[0])),
            TemplateKind::TorusGrid => {
                Point::new(wrap(p.x, self.extent[0]), wrap(p.y, self.extent[1]))
            }
        }
    }

    /// Signed displacement of the selected geodesic from `a` to `b`, per axis.
    fn displacement(&self, a: Point, b: Point) -> (f64, f64) {
        match self.kind {
            TemplateKind::Segment => (b.x - a.x, 0.0),
            TemplateKind::Circle => (periodic_delta(a.x, b.x, self.extent[0]), 0.0),
            TemplateKind::TorusGrid => (
                periodic_delta(a.x, b.x, self.extent[0]),
                periodic_delta(a.y, b.y, self.extent[1]),
            ),
        }
    }

    pub fn dist(&self, a: Point, b: Point) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        if dy == 0.0 {
            dx.abs()
        } else {
            dx.hypot(dy)
        }
    }

    /// Constant-speed geodesic from `a` to `b` evaluated at `t`.
    pub fn geodesic_point(&self, a: Point, b: Point, t: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        self.check_point(a)?;
        self.check_point(b)?;
        Ok(self.geodesic_point_unchecked(a, b, t))
    }

    pub(crate) fn geodesic_point_unchecked(&self, a: Point, b: Point, t: f64) -> Point {
        if t == 0.0 {
            return a;
        }
        if t == 1.0 {
            return b;
        }
        let (dx, dy) = self.displacement(a, b);
        self.normalize(Point::new(a.x + t * dx, a.y + t * dy))
    }

    /// Unwrapped first coordinate along the geodesic from `a` to `b`:
    /// returns `(start, signed_length)` so that the position at time `s` is
    /// `start + s * signed_length` before wrapping. One-dimensional only.
    pub(crate) fn line_parametrization(&self, a: Point, b: Point) -> (f64, f64) {
        let (dx, _) = self.displacement(a, b);
        (a.x, dx)
    }
}

fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Shortest signed displacement on a circle of length `l`; antipodes go the
/// positive way.
fn periodic_delta(a: f64, b: f64, l: f64) -> f64 {
    let fwd = (b - a).rem_euclid(l);
    let half = l / 2.0;
    if (fwd - half).abs() <= GEOMETRY_TOL * l {
        half
    } else if fwd < half {
        fwd
    } else {
        fwd - l
    }
}

/// Nearest-point lookup on the points of a space.
#[derive(Debug, Clone)]
pub struct Snapper {
    template: GeodesicTemplate,
    points: Vec<Point>,
    /// For one-dimensional templates: indices sorted by coordinate.
    order: Vec<usize>,
    coords: Vec<f64>,
}

impl Snapper {
    pub fn new(template: &GeodesicTemplate, points: &[Point]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut coords = Vec::new();
        if template.is_one_dimensional() {
            order.sort_by(|&i, &j| points[i].x.total_cmp(&points[j].x).then(i.cmp(&j)));
            coords = order.iter().map(|&i| points[i].x).collect();
        }
        Snapper {
            template: template.clone(),
            points: points.to_vec(),
            order,
            coords,
        }
    }

    /// Index of the nearest point; ties go to the lower index.
    pub fn nearest(&self, p: Point) -> usize {
        if !self.template.is_one_dimensional() || self.points.len() < 8 {
            return self.nearest_scan(p);
        }
        let p = self.template.normalize(p);
        let k = self.coords.partition_point(|&c| c < p.x);
        let n = self.coords.len();
        let mut cands = Vec::with_capacity(4);
        match self.template.kind {
            TemplateKind::Circle => {
                cands.push(self.order[k % n]);
                cands.push(self.order[(k + n - 1) % n]);
                cands.push(self.order[(k + 1) % n]);
            }
            _ => {
                if k < n {
                    cands.push(self.order[k]);
                }
                if k > 0 {
                    cands.push(self.order[k - 1]);
                }
                if k + 1 < n {
                    cands.push(self.order[k + 1]);
                }
            }
        }
        // duplicate coordinates are impossible in a valid space, but keep the
        // lowest index among equal distances
        let mut best = cands[0];
        let mut bd = self.template.dist(p, self.points[best]);
        for &c in &cands[1..] {
            let d = self.template.dist(p, self.points[c]);
            if d < bd || (d == bd && c < best) {
                best = c;
                bd = d;
            }
        }
        best
    }

    fn nearest_scan(&self, p: Point) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = self.template.dist(p, *q);
            if d < bd {
                best = i;
                bd = d;
            }
        }
        best
    }

    /// Coordinates where the nearest point changes (Voronoi boundaries) for
    /// one-dimensional templates, sorted. Empty otherwise.
    pub fn boundaries(&self) -> Vec<f64> {
        if !self.template.is_one_dimensional() || self.coords.len() < 2 {
            return Vec::new();
        }
        let mut b: Vec<f64> = self
            .coords
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        if self.template.kind == TemplateKind::Circle {
            let l = self.template.length();
            let first = self.coords[0];
            let last = self.coords[self.coords.len() - 1];
            let mid = 0.5 * (last + first + l);
            b.push(wrap(mid, l));
            b.sort_by(f64::total_cmp);
        }
        b
    }
}

/// A finite metric measure space `(X, d, m)` with a basepoint.
#[derive(Debug, Clone)]
pub struct FiniteSpace {
    template: GeodesicTemplate,
    points: Vec<Point>,
    weights: Vec<f64>,
    basepoint: usize,
    dist: Vec<f64>,
    explicit_dist: bool,
    snapper: Snapper,
}

impl PartialEq for FiniteSpace {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template
            && self.points == other.points
            && self.weights == other.weights
            && self.basepoint == other.basepoint
            && self.dist == other.dist
    }
}

impl FiniteSpace {
    /// Builds a space whose distances are induced by the template.
    pub fn new(
        template: GeodesicTemplate,
        points: Vec<Point>,
        weights: Vec<f64>,
        basepoint: usize,
    ) -> Result<Self> {
        template.validate()?;
        let points: Vec<Point> = points
            .into_iter()
            .map(|p| template.check_point(p).map(|_| template.normalize(p)))
            .collect::<Result<_>>()?;
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = template.dist(points[i], points[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self::assemble(template, points, weights, basepoint, dist, false)
    }

    /// Builds a space with a user-supplied distance matrix (row-major).
    pub fn with_distances(
        template: GeodesicTemplate,
        points: Vec<Point>,
        weights: Vec<f64>,
        basepoint: usize,
        dist: Vec<f64>,
    ) -> Result<Self> {
        let n = points.len();
        if dist.len() != n * n {
            return Err(Error::InvalidSpace(format!(
                "distance matrix has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        let s = Self::assemble(template, points, weights, basepoint, dist, true)?;
        s.check_triangle()?;
        Ok(s)
    }

    fn assemble(
        template: GeodesicTemplate,
        points: Vec<Point>,
        weights: Vec<f64>,
        basepoint: usize,
        dist: Vec<f64>,
        explicit_dist: bool,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidSpace("no points".into()));
        }
        if weights.len() != n {
            return Err(Error::InvalidSpace(format!(
                "{} weights for {n} points",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidSpace("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidSpace("total mass must be positive".into()));
        }
        if basepoint >= n {
            return Err(Error::InvalidSpace(format!("basepoint {basepoint} out of range")));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::InvalidSpace(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (dist[i * n + j], dist[j * n + i]);
                if a != b {
                    return Err(Error::InvalidSpace(format!("asymmetric distance at ({i},{j})")));
                }
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidSpace(format!(
                        "points {i} and {j} coincide or have invalid distance {a}"
                    )));
                }
            }
        }
        let snapper = Snapper::new(&template, &points);
        Ok(FiniteSpace {
            template,
            points,
            weights,
            basepoint,
            dist,
            explicit_dist,
            snapper,
        })
    }

    fn check_triangle(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.d(i, j) > self.d(i, k) + self.d(k, j) + GEOMETRY_TOL {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails for ({i},{j}) through {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn template(&self) -> &GeodesicTemplate {
        &self.template
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn basepoint(&self) -> usize {
        self.basepoint
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_explicit_distances(&self) -> bool {
        self.explicit_dist
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.points.len() + j]
    }

    pub fn distance_matrix(&self) -> &[f64] {
        &self.dist
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nearest(&self, p: Point) -> usize {
        self.snapper.nearest(p)
    }

    pub fn snapper(&self) -> &Snapper {
        &self.snapper
    }

    /// Index of the space point at `p`, if there is one within [`LOCATE_TOL`].
    pub fn locate(&self, p: Point) -> Option<usize> {
        let i = self.nearest(p);
        (self.template.dist(p, self.points[i]) <= LOCATE_TOL * self.template.length().max(1.0))
            .then_some(i)
    }

    /// Sorted neighbors along the template: consecutive points on a segment,
    /// cyclic neighbors on a circle, and the four grid neighbors on a torus
    /// (points within 1.5 pitches along one axis).
    pub fn template_neighbors(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut adj = vec![Vec::new(); n];
        match self.template.kind {
            TemplateKind::Segment | TemplateKind::Circle => {
                let order = &self.snapper.order;
                for w in order.windows(2) {
                    adj[w[0]].push(w[1]);
                    adj[w[1]].push(w[0]);
                }
                if self.template.kind == TemplateKind::Circle && n > 2 {
                    let (a, b) = (order[0], order[n - 1]);
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
            TemplateKind::TorusGrid => {
                let mut min_d = f64::INFINITY;
                for i in 0..n {
                    for j in (i + 1)..n {
                        min_d = min_d.min(self.d(i, j));
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        if i != j && self.d(i, j) <= min_d * (1.0 + 1e-9) {
                            adj[i].push(j);
                        }
                    }
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Integrates a template function against the reference measure.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| f(*p) * w)
            .sum()
    }
}

/// Density specifications accepted by [`discretize`] from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// The normalized Lebesgue measure: density `1 / volume`.
    Uniform,
    /// A constant density.
    Constant { value: f64 },
    /// Density `2x / L²` on a segment of length `L` (total mass one).
    Ramp,
}

impl MeasureSpec {
    pub fn density(&self, template: &GeodesicTemplate) -> Result<Box<dyn Fn(Point) -> f64>> {
        match *self {
            MeasureSpec::Uniform => {
                let v = 1.0 / template.volume();
                Ok(Box::new(move |_| v))
            }
            MeasureSpec::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::InvalidSpace("constant density must be positive".into()));
                }
                Ok(Box::new(move |_| value))
            }
            MeasureSpec::Ramp => {
                if template.kind != TemplateKind::Segment {
                    return Err(Error::InvalidSpace("ramp density needs a segment".into()));
                }
                let l = template.length();
                Ok(Box::new(move |p: Point| 2.0 * p.x / (l * l)))
            }
        }
    }
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_1,
];
const QUAD_SUBCELLS: usize = 4;

/// Composite Gauss-Legendre rule over `[a, b]`.
fn quad_1d(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let h = (b - a) / QUAD_SUBCELLS as f64;
    let mut total = 0.0;
    for s in 0..QUAD_SUBCELLS {
        let lo = a + s as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * acc;
    }
    total
}

/// `n` equally spaced points with weights given by the mass of
/// `measure` on each point's cell.
///
/// Segments use `n` half-open cells `[kL/n, (k+1)L/n)` (the last one closed)
/// with point `k` at `kL/(n-1)`, so both endpoints are points of the space.
/// Circles use midpoint cells around the points `kL/n`, and tori use the
/// product of circle rules with `n` points per axis.
pub fn discretize(
    template: &GeodesicTemplate,
    n: usize,
    measure: &dyn Fn(Point) -> f64,
) -> Result<FiniteSpace> {
    template.validate()?;
    if n < 2 {
        return Err(Error::InvalidSpace(format!("need at least 2 points, got {n}")));
    }
    let (points, weights) = match template.kind {
        TemplateKind::Segment => {
            let l = template.length();
            let h = l / n as f64;
            let pts: Vec<Point> = (0..n)
                .map(|k| Point::on_line(k as f64 * l / (n - 1) as f64))
                .collect();
            let w = (0..n)
                .map(|k| quad_1d(k as f64 * h, (k + 1) as f64 * h, &|x| measure(Point::on_line(x))))
                .collect();
            (pts, w)
        }
        TemplateKind::Circle => {
            let l = template.length();
            let h = l / n as f64;
            let pts: Vec<Point> = (0..n).map(|k| Point::on_line(k as f64 * h)).collect();
            let w = (0..n)
                .map(|k| {
                    let c = k as f64 * h;
                    quad_1d(c - 0.5 * h, c + 0.5 * h, &|x| {
                        measure(template.normalize(Point::on_line(x)))
                    })
                })
                .collect();
            (pts, w)
        }
        TemplateKind::TorusGrid => {
            let (lx, ly) = (template.extent[0], template.extent[1]);
            let (hx, hy) = (lx / n as f64, ly / n as f64);
            let mut pts = Vec::with_capacity(n * n);
            let mut w = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let (cx, cy) = (i as f64 * hx, j as f64 * hy);
                    pts.push(Point::new(cx, cy));
                    w.push(quad_1d(cx - 0.5 * hx, cx + 0.5 * hx, &|x| {
                        quad_1d(cy - 0.5 * hy, cy + 0.5 * hy, &|y| {
                            measure(template.normalize(Point::new(x, y)))
                        })
                    }));
                }
            }
            (pts, w)
        }
    };
    if weights.iter().any(|w: &f64| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidSpace("measure density must be nonnegative".into()));
    }
    FiniteSpace::new(template.clone(), points, weights, 0)
}

/// A density against the reference measure of a space.
#[derive(Debug, Clone)]
pub struct Density {
    space: Arc<FiniteSpace>,
    values: Vec<f64>,
}

impl Density {
    pub fn new(space: Arc<FiniteSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidDensity(format!(
                "{} values for {} points",
                values.len(),
                space.len()
            )));
        }
        let mut values = values;
        for (v, w) in values.iter_mut().zip(space.weights()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidDensity(format!("invalid value {v}")));
            }
            if *w == 0.0 {
                *v = 0.0;
            }
        }
        Ok(Density { space, values })
    }

    /// Density of the measure with the given point masses. Mass on a point of
    /// zero weight is not absolutely continuous and is rejected.
    pub fn from_masses(space: Arc<FiniteSpace>, masses: &[f64]) -> Result<Self> {
        if masses.len() != space.len() {
            return Err(Error::InvalidDensity("mass vector has the wrong length".into()));
        }
        let mut values = Vec::with_capacity(masses.len());
        for (i, (&m, &w)) in masses.iter().zip(space.weights()).enumerate() {
            if m < 0.0 || !m.is_finite() {
                return Err(Error::InvalidDensity(format!("invalid mass {m} at {i}")));
            }
            if w == 0.0 {
                if m > 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "mass on point {i} of zero weight"
                    )));
                }
                values.push(0.0);
            } else {
                values.push(m / w);
            }
        }
        Ok(Density { space, values })
    }

    pub fn dirac(space: Arc<FiniteSpace>, i: usize) -> Result<Self> {
        if i >= space.len() {
            return Err(Error::IndexOutOfRange(i));
        }
        let mut masses = vec![0.0; space.len()];
        masses[i] = 1.0;
        Self::from_masses(space, &masses)
    }

    /// The normalized reference measure.
    pub fn uniform(space: Arc<FiniteSpace>) -> Self {
        let total = space.total_mass();
        let values = space
            .weights()
            .iter()
            .map(|&w| if w > 0.0 { 1.0 / total } else { 0.0 })
            .collect();
        Density { space, values }
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(v, w)| v * w)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.total_mass();
        if t <= 0.0 {
            return Err(Error::ZeroMass("density has no mass".into()));
        }
        Ok(Density {
            space: self.space.clone(),
            values: self.values.iter().map(|v| v / t).collect(),
        })
    }

    /// Essential supremum: the maximum over points of positive weight.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, _)| *v)
            .fold(0.0, f64::max)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(v, w)| v.abs().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Indices of points carrying mass.
    pub fn support(&self) -> Vec<usize> {
        self.masses()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One function of the weak-convergence test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `x^a y^b` times a plateau cutoff: 1 within `radius` of `center`,
    /// decaying linearly to 0 at `2 * radius`.
    Monomial {
        ax: u32,
        ay: u32,
        center: Point,
        radius: f64,
    },
    /// `cos` or `sin` of `2π k x / L` (axis 0) or `y` (axis 1) on periodic templates.
    Fourier { axis: u8, k: u32, sine: bool },
    /// Hat function of the given radius.
    Hat { center: Point, radius: f64 },
}

impl TestFunction {
    pub fn eval(&self, template: &GeodesicTemplate, p: Point) -> f64 {
        match *self {
            TestFunction::Monomial {
                ax,
                ay,
                center,
                radius,
            } => {
                let d = template.dist(p, center);
                let cut = ((2.0 * radius - d) / radius).clamp(0.0, 1.0);
                p.x.powi(ax as i32) * p.y.powi(ay as i32) * cut
            }
            TestFunction::Fourier { axis, k, sine } => {
                let (c, l) = if axis == 0 {
                    (p.x, template.extent[0])
                } else {
                    (p.y, template.extent[1])
                };
                let arg = 2.0 * PI * k as f64 * c / l;
                if sine {
                    arg.sin()
                } else {
                    arg.cos()
                }
            }
            TestFunction::Hat { center, radius } => {
                (1.0 - template.dist(p, center) / radius).max(0.0)
            }
        }
    }

    /// Radius of a ball around `center` containing the support; periodic
    /// Fourier modes report the template diameter.
    pub fn support_radius(&self, template: &GeodesicTemplate) -> f64 {
        match *self {
            TestFunction::Monomial { radius, .. } => 2.0 * radius,
            TestFunction::Fourier { .. } => template.diameter(),
            TestFunction::Hat { radius, .. } => radius,
        }
    }
}

/// A finite, versioned surrogate for the bounded boundedly supported
/// continuous functions on the template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub version: String,
    pub functions: Vec<TestFunction>,
}

pub const DEFAULT_FAMILY_VERSION: &str = "tf-v1";

impl TestFamily {
    /// Polynomials up to degree 3 under a cutoff covering the template, plus
    /// hats of radius L/4 at the quarter points (segment); Fourier modes up to
    /// frequency 2 plus hats (circle, torus).
    pub fn default_for(template: &GeodesicTemplate) -> Self {
        let mut functions = Vec::new();
        match template.kind {
            TemplateKind::Segment => {
                let l = template.length();
                let center = Point::on_line(l / 2.0);
                for a in 0..=3 {
                    functions.push(TestFunction::Monomial {
                        ax: a,
                        ay: 0,
                        center,
                        radius: l,
                    });
                }
                for k in 0..=4 {
                    functions.push(TestFunction::Hat {
                        center: Point::on_line(k as f64 * l / 4.0),
                        radius: l / 4.0,
                    });
                }
            }
            TemplateKind::Circle | TemplateKind::TorusGrid => {
                let axes = if template.kind == TemplateKind::Circle { 1 } else { 2 };
                functions.push(TestFunction::Monomial {
                    ax: 0,
                    ay: 0,
                    center: Point::default(),
                    radius: template.diameter(),
                });
                for axis in 0..axes {
                    for k in 1..=2 {
                        for sine in [false, true] {
                            functions.push(TestFunction::Fourier { axis, k, sine });
                        }
                    }
                }
                let l = template.length();
                for k in 0..4 {
                    functions.push(TestFunction::Hat {
                        center: Point::on_line(k as f64 * l / 4.0),
                        radius: l / 4.0,
                    });
                }
            }
        }
        TestFamily {
            version: DEFAULT_FAMILY_VERSION.to_string(),
            functions,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }
}

/// Ordered spaces sharing one template plus the designated limit space.
#[derive(Debug, Clone)]
pub struct SpaceSequence {
    template: GeodesicTemplate,
    terms: Vec<Arc<FiniteSpace>>,
    limit: Arc<FiniteSpace>,
    test_family: TestFamily,
}

impl SpaceSequence {
    pub fn new(
        terms: Vec<Arc<FiniteSpace>>,
        limit: Arc<FiniteSpace>,
        test_family: TestFamily,
    ) -> Result<Self> {
        let template = limit.template().clone();
        if terms.iter().any(|t| *t.template() != template) {
            return Err(Error::InvalidSpace("terms and limit use different templates".into()));
        }
        for f in &test_family.functions {
            let r = f.support_radius(&template);
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidSpace("test function without finite support".into()));
            }
        }
        Ok(SpaceSequence {
            template,
            terms,
            limit,
            test_family,
        })
    }

    /// Discretizations of one template at the listed resolutions, with the
    /// limit discretized at `limit_n`.
    pub fn refining(
        template: &GeodesicTemplate,
        ns: &[usize],
        limit_n: usize,
        measure: &MeasureSpec,
    ) -> Result<Self> {
        let density = measure.density(template)?;
        let terms = ns
            .iter()
            .map(|&n| discretize(template, n, &*density).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let limit = Arc::new(discretize(template, limit_n, &*density)?);
        Self::new(terms, limit, TestFamily::default_for(template))
    }

    pub fn template(&self) -> &GeodesicTemplate {
        &self.template
    }

    pub fn terms(&self) -> &[Arc<FiniteSpace>] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> Result<&Arc<FiniteSpace>> {
        self.terms.get(k).ok_or(Error::IndexOutOfRange(k))
    }

    pub fn limit(&self) -> &Arc<FiniteSpace> {
        &self.limit
    }

    pub fn test_family(&self) -> &TestFamily {
        &self.test_family
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Weak-convergence defect of term `k` against the limit: the largest
/// discrepancy of the test-family integrals plus the basepoint distance.
pub fn pmgh_defect(seq: &SpaceSequence, k: usize) -> Result<f64> {
    let term = seq.term(k)?;
    if seq.test_family.is_empty() {
        return Err(Error::EmptyTestFamily);
    }
    let tpl = &seq.template;
    let worst = seq
        .test_family
        .functions
        .iter()
        .map(|phi| {
            let a = term.integrate(|p| phi.eval(tpl, p));
            let b = seq.limit.integrate(|p| phi.eval(tpl, p));
            (a - b).abs()
        })
        .fold(0.0, f64::max);
    let base = tpl.dist(
        term.point(term.basepoint()),
        seq.limit.point(seq.limit.basepoint()),
    );
    Ok(worst + base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seg(l: f64) -> GeodesicTemplate {
        GeodesicTemplate::segment(l).unwrap()
    }

    #[test]
    fn geodesic_point_examples() {
        let s = seg(1.0);
        let p = s.geodesic_point(0.0.into(), 1.0.into(), 0.5).unwrap();
        assert_eq!(p.x, 0.5);

        let c = GeodesicTemplate::circle(2.0).unwrap();
        let p = c.geodesic_point(0.0.into(), 0.6.into(), 0.5).unwrap();
        assert_abs_diff_eq!(p.x, 0.3, epsilon = 1e-15);
        // antipodes take the positive orientation
        let p = c.geodesic_point(0.0.into(), 1.0.into(), 0.5).unwrap();
        assert_abs_diff_eq!(p.x, 0.5, epsilon = 1e-15);
        let p = c.geodesic_point(1.0.into(), 0.0.into(), 0.5).unwrap();
        assert_abs_diff_eq!(p.x, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn geodesic_point_rejects_bad_time() {
        let s = seg(1.0);
        assert_eq!(
            s.geodesic_point(0.0.into(), 1.0.into(), 1.5),
            Err(Error::TimeOutOfRange(1.5))
        );
        assert!(s.geodesic_point(0.0.into(), 1.0.into(), -0.1).is_err());
        assert!(s.geodesic_point(0.0.into(), 2.0.into(), 0.1).is_err());
    }

    #[test]
    fn circle_wraps_short_arc_across_zero() {
        let c = GeodesicTemplate::circle(1.0).unwrap();
        let p = c.geodesic_point(0.9.into(), 0.1.into(), 0.5).unwrap();
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.dist(0.9.into(), 0.1.into()), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn torus_distance_uses_shortest_wrap() {
        let t = GeodesicTemplate::torus(1.0, 2.0).unwrap();
        let d = t.dist(Point::new(0.1, 0.1), Point::new(0.9, 1.9));
        assert_abs_diff_eq!(d, (0.2f64.powi(2) + 0.2f64.powi(2)).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn discretize_examples() {
        let s = seg(1.0);
        let sp = discretize(&s, 3, &|_| 1.0).unwrap();
        let xs: Vec<f64> = sp.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        for w in sp.weights() {
            assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-14);
        }

        let c = GeodesicTemplate::circle(1.0).unwrap();
        let sp = discretize(&c, 4, &|_| 1.0).unwrap();
        assert_eq!(sp.len(), 4);
        for w in sp.weights() {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-14);
        }

        // integrals of 2x over [0, 1/2] and [1/2, 1]
        let sp = discretize(&s, 2, &|p| 2.0 * p.x).unwrap();
        assert_abs_diff_eq!(sp.weight(0), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(sp.weight(1), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn discretize_needs_two_points() {
        assert!(discretize(&seg(1.0), 1, &|_| 1.0).is_err());
    }

    #[test]
    fn discretize_preserves_mass() {
        let s = seg(2.0);
        let f = |p: Point| (p.x * 3.0).sin() + 1.2 + 0.5 * p.x;
        // reference value by a much finer rule
        let exact: f64 = (0..20000)
            .map(|k| {
                let x = (k as f64 + 0.5) * 2.0 / 20000.0;
                f(Point::on_line(x)) * 2.0 / 20000.0
            })
            .sum();
        for n in [2, 7, 64] {
            let sp = discretize(&s, n, &f).unwrap();
            assert!((sp.total_mass() - exact).abs() < 1e-8, "n={n}");
        }
        let c = GeodesicTemplate::circle(1.0).unwrap();
        let sp = discretize(&c, 9, &|p| 1.0 + (2.0 * PI * p.x).cos()).unwrap();
        assert_abs_diff_eq!(sp.total_mass(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn space_validation() {
        let s = seg(1.0);
        assert!(FiniteSpace::new(s.clone(), vec![0.0.into(), 0.0.into()], vec![1.0, 1.0], 0).is_err());
        assert!(FiniteSpace::new(s.clone(), vec![0.0.into()], vec![0.0], 0).is_err());
        assert!(FiniteSpace::new(s.clone(), vec![0.0.into()], vec![-1.0], 0).is_err());
        assert!(FiniteSpace::new(s.clone(), vec![0.0.into()], vec![1.0], 3).is_err());
        let bad = FiniteSpace::with_distances(
            s,
            vec![0.0.into(), 0.5.into(), 1.0.into()],
            vec![1.0; 3],
            0,
            vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0],
        );
        assert!(matches!(bad, Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn snapper_agrees_with_scan() {
        let c = GeodesicTemplate::circle(1.0).unwrap();
        let sp = discretize(&c, 13, &|_| 1.0).unwrap();
        for k in 0..500 {
            let p = Point::on_line(k as f64 / 500.0 * 1.3 - 0.15);
            let i = sp.nearest(p);
            let best = (0..sp.len())
                .map(|j| c.dist(c.normalize(p), sp.point(j)))
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(c.dist(c.normalize(p), sp.point(i)), best, epsilon = 1e-15);
        }
    }

    #[test]
    fn pmgh_defect_examples() {
        let s = seg(1.0);
        let seq = SpaceSequence::refining(&s, &[2, 4], 4, &MeasureSpec::Uniform).unwrap();
        // term equal to the limit
        assert_eq!(pmgh_defect(&seq, 1).unwrap(), 0.0);

        // {1, x}: both discretizations are centered
        let fam = TestFamily {
            version: "t".into(),
            functions: vec![
                TestFunction::Monomial { ax: 0, ay: 0, center: 0.5.into(), radius: 1.0 },
                TestFunction::Monomial { ax: 1, ay: 0, center: 0.5.into(), radius: 1.0 },
            ],
        };
        let seq2 = SpaceSequence::new(seq.terms().to_vec(), seq.limit().clone(), fam).unwrap();
        assert_abs_diff_eq!(pmgh_defect(&seq2, 0).unwrap(), 0.0, epsilon = 1e-15);

        // x²: n=2 gives (0 + 1)/2 = 1/2, n=4 gives (0 + 1/9 + 4/9 + 1)/4 = 7/18
        let fam = TestFamily {
            version: "t".into(),
            functions: vec![TestFunction::Monomial { ax: 2, ay: 0, center: 0.5.into(), radius: 1.0 }],
        };
        let seq3 = SpaceSequence::new(seq.terms().to_vec(), seq.limit().clone(), fam).unwrap();
        assert_abs_diff_eq!(pmgh_defect(&seq3, 0).unwrap(), 0.5 - 7.0 / 18.0, epsilon = 1e-14);

        let empty = TestFamily { version: "t".into(), functions: vec![] };
        let seq4 = SpaceSequence::new(seq.terms().to_vec(), seq.limit().clone(), empty).unwrap();
        assert_eq!(pmgh_defect(&seq4, 0), Err(Error::EmptyTestFamily));
        assert_eq!(pmgh_defect(&seq, 7), Err(Error::IndexOutOfRange(7)));
    }

    #[test]
    fn density_bookkeeping() {
        let s = seg(1.0);
        let sp = Arc::new(discretize(&s, 4, &|_| 1.0).unwrap());
        let d = Density::dirac(sp.clone(), 2).unwrap();
        assert_abs_diff_eq!(d.sup_norm(), 4.0, epsilon = 1e-12);
        assert!(d.is_probability());
        assert_eq!(d.support(), vec![2]);
        let u = Density::uniform(sp);
        assert_abs_diff_eq!(u.lp_norm(2.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn point_json_forms() {
        let p: Point = serde_json::from_str("0.25").unwrap();
        assert_eq!(p, Point::on_line(0.25));
        let q: Point = serde_json::from_str("[0.25, 0.5]").unwrap();
        assert_eq!(q, Point::new(0.25, 0.5));
        assert_eq!(serde_json::to_string(&q).unwrap(), "[0.25,0.5]");
    }
}

//! Transfer of a bounded density from the limit space to a term space.
//!
//! Mass is moved with a Voronoi-overlap kernel: a fine, deterministic sample
//! set of the template (which contains every limit point) is assigned to its
//! nearest limit point and its nearest target point, and the mass of a limit
//! point is split in proportion to the shared samples. The result is cut
//! off outside the doubled ball, clamped at the sup-norm of the input and
//! renormalized.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambient::{Density, FiniteSpace, GeodesicTemplate, Point, TemplateKind, GEOMETRY_TOL};
use crate::error::{Error, Result};
use crate::plans::CurvePlan;

/// Samples per unit cell of a one-dimensional template.
pub const LINE_SAMPLES: usize = 2048;
/// Samples per axis on a torus.
pub const TORUS_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Malformed(format!("ball radius {radius} must be positive")));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, template: &GeodesicTemplate, p: Point) -> bool {
        template.dist(p, self.center) <= self.radius * (1.0 + GEOMETRY_TOL) + GEOMETRY_TOL
    }

    /// `(1 - d(p, B) / r)^+`: equal to one on the ball and supported in the
    /// doubled ball.
    pub fn cutoff(&self, template: &GeodesicTemplate, p: Point) -> f64 {
        let outside = (template.dist(p, self.center) - self.radius).max(0.0);
        (1.0 - outside / self.radius).max(0.0)
    }

    /// A ball containing every node of every curve of `plan`, enlarged by the
    /// largest spacing of the plan's space. On closed templates the ball is
    /// centered at the first point with the diameter as radius.
    pub fn around_plan(plan: &CurvePlan) -> Self {
        let space = plan.space();
        let tpl = space.template();
        let pitch = max_pitch(space);
        if tpl.kind != TemplateKind::Segment {
            return Ball {
                center: space.point(0),
                radius: tpl.diameter() + pitch,
            };
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in plan.curves() {
            for p in c.nodes() {
                lo = lo.min(p.x);
                hi = hi.max(p.x);
            }
        }
        Ball {
            center: Point::on_line(0.5 * (lo + hi)),
            radius: 0.5 * (hi - lo) + pitch.max(GEOMETRY_TOL),
        }
    }
}

fn max_pitch(space: &FiniteSpace) -> f64 {
    let adj = space.template_neighbors();
    let mut p: f64 = 0.0;
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb {
            p = p.max(space.d(i, j));
        }
    }
    p
}

fn samples(template: &GeodesicTemplate, extra: &[Point]) -> Vec<Point> {
    let mut out = Vec::new();
    match template.kind {
        TemplateKind::Segment | TemplateKind::Circle => {
            let l = template.length();
            out.extend((0..LINE_SAMPLES).map(|k| Point::on_line((k as f64 + 0.5) * l / LINE_SAMPLES as f64)));
        }
        TemplateKind::TorusGrid => {
            let (lx, ly) = (template.extent[0], template.extent[1]);
            let s = TORUS_SAMPLES as f64;
            for a in 0..TORUS_SAMPLES {
                for b in 0..TORUS_SAMPLES {
                    out.push(Point::new((a as f64 + 0.5) * lx / s, (b as f64 + 0.5) * ly / s));
                }
            }
        }
    }
    out.extend_from_slice(extra);
    out
}

/// Row-stochastic transfer kernel from the points of `from` to the points
/// of `to`, as `(from, to, fraction)` triples.
pub fn transfer_kernel(from: &FiniteSpace, to: &FiniteSpace) -> Result<Vec<(usize, usize, f64)>> {
    if from.template() != to.template() {
        return Err(Error::InvalidSpace("spaces use different templates".into()));
    }
    let mut counts: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    let mut rows = vec![0usize; from.len()];
    for s in samples(from.template(), from.points()) {
        let (x, y) = (from.nearest(s), to.nearest(s));
        *counts.entry((x, y)).or_default() += 1;
        rows[x] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((x, y), c)| (x, y, c as f64 / rows[x] as f64))
        .collect())
}

/// Approximates `rho` (a density on the limit space) by a probability
/// density on `target` supported in the doubled ball.
pub fn approx_density(rho: &Density, target: &Arc<FiniteSpace>, ball: &Ball) -> Result<Density> {
    let src = rho.space();
    let tpl = src.template();
    for i in rho.support() {
        if !ball.contains(tpl, src.point(i)) {
            return Err(Error::Hypothesis(format!(
                "point {} of the support lies outside the ball",
                src.point(i)
            )));
        }
    }
    let cap = rho.sup_norm();
    let masses = rho.masses();
    let mut moved = vec![0.0; target.len()];
    for (x, y, frac) in transfer_kernel(src, target)? {
        moved[y] += masses[x] * frac;
    }
    let values: Vec<f64> = (0..target.len())
        .map(|y| {
            let w = target.weight(y);
            if w <= 0.0 || moved[y] <= 0.0 {
                return 0.0;
            }
            let g = ball.cutoff(tpl, target.point(y)) * moved[y] / w;
            g.clamp(0.0, cap)
        })
        .collect();
    let retained: f64 = values.iter().zip(target.weights()).map(|(v, w)| v * w).sum();
    if retained <= 0.0 {
        return Err(Error::ZeroMass("the approximating density retains no mass".into()));
    }
    Density::new(target.clone(), values.iter().map(|v| v / retained).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::discretize;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_transfer() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 9, &|p| 1.0 + p.x).unwrap());
        let rho = Density::from_masses(sp.clone(), &[0.0, 0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let ball = Ball::new(Point::on_line(0.25), 0.3).unwrap();
        let out = approx_density(&rho, &sp, &ball).unwrap();
        for (a, b) in out.values().iter().zip(rho.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_half_segment() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let lim = Arc::new(discretize(&t, 65, &|_| 1.0).unwrap());
        let m: Vec<f64> = lim.points().iter().map(|p| f64::from(p.x <= 0.5)).collect();
        let rho = Density::from_masses(lim.clone(), &m).unwrap().normalized().unwrap();
        let ball = Ball::new(Point::on_line(0.25), 0.25 + 1.0 / 64.0).unwrap();
        for n in [8, 16, 32] {
            let sp = Arc::new(discretize(&t, n, &|_| 1.0).unwrap());
            let out = approx_density(&rho, &sp, &ball).unwrap();
            assert!((out.total_mass() - 1.0).abs() < 1e-12);
            let pitch = 1.0 / (n - 1) as f64;
            assert!((out.sup_norm() - 2.0).abs() <= 1.0 / (n as f64 * pitch) + 1e-9);
            for i in out.support() {
                assert!(sp.point(i).x <= 0.25 + 2.0 * ball.radius + 1e-12);
            }
        }
    }

    #[test]
    fn support_outside_ball_is_rejected() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 5, &|_| 1.0).unwrap());
        let rho = Density::dirac(sp.clone(), 4).unwrap();
        let ball = Ball::new(Point::on_line(0.0), 0.3).unwrap();
        assert!(matches!(approx_density(&rho, &sp, &ball), Err(Error::Hypothesis(_))));
    }
}

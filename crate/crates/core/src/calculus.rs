//! First-order calculus on finite spaces: local Lipschitz constants over a
//! neighbor graph, Cheeger energies, total variation and the Lagrangian
//! duality ratios pairing functions with plans.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambient::FiniteSpace;
use crate::error::{Error, Result};
use crate::plans::{self, CurvePlan, Sampling};

/// Slack used when comparing the two sides of a duality inequality.
pub const DUALITY_TOL: f64 = 1e-9;

/// A function on the points of a space together with the neighbor graph
/// used for slopes.
#[derive(Debug, Clone)]
pub struct SpaceFunction {
    space: Arc<FiniteSpace>,
    values: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl SpaceFunction {
    /// Uses the template neighbors of the space.
    pub fn new(space: Arc<FiniteSpace>, values: Vec<f64>) -> Result<Self> {
        let adj = space.template_neighbors();
        Self::with_neighbors(space, values, adj)
    }

    pub fn with_neighbors(space: Arc<FiniteSpace>, values: Vec<f64>, neighbors: Vec<Vec<usize>>) -> Result<Self> {
        if values.len() != space.len() || neighbors.len() != space.len() {
            return Err(Error::InvalidDensity(format!(
                "{} values for {} points",
                values.len(),
                space.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity("function values must be finite".into()));
        }
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb {
                if j >= space.len() || j == i || !neighbors[j].contains(&i) {
                    return Err(Error::InvalidSpace("neighbor graph must be symmetric without loops".into()));
                }
            }
        }
        Ok(SpaceFunction {
            space,
            values,
            neighbors,
        })
    }

    /// The graph joining every point to its `k` nearest points (symmetrized).
    pub fn k_nearest(space: Arc<FiniteSpace>, values: Vec<f64>, k: usize) -> Result<Self> {
        let n = space.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| space.d(i, a).total_cmp(&space.d(i, b)).then(a.cmp(&b)));
            for &j in others.iter().take(k) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        Self::with_neighbors(space, values, adj)
    }

    /// Evaluates `f` at the points of `space`.
    pub fn from_fn(space: Arc<FiniteSpace>, f: impl Fn(crate::ambient::Point) -> f64) -> Result<Self> {
        let values = space.points().iter().map(|p| f(*p)).collect();
        Self::new(space, values)
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Same graph, new values.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        SpaceFunction {
            space: self.space.clone(),
            values: self.values.iter().map(|v| g(*v)).collect(),
            neighbors: self.neighbors.clone(),
        }
    }

    /// Pointwise product on the same space and graph.
    pub fn product(&self, other: &SpaceFunction) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::InvalidSpace("functions live on different spaces".into()));
        }
        Ok(SpaceFunction {
            space: self.space.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            neighbors: self.neighbors.clone(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `(sum |f|^p m)^(1/p)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(v, w)| v.abs().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// `lip f(x) = max over neighbors y of |f(y) - f(x)| / d(x, y)`; zero at
/// isolated points.
pub fn local_lip(f: &SpaceFunction) -> Vec<f64> {
    let s = &f.space;
    f.neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter()
                .map(|&j| (f.values[j] - f.values[i]).abs() / s.d(i, j))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `sum lip^p m`.
pub fn cheeger_p(f: &SpaceFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::ExponentDomain(p, "p must lie in [1, inf)"));
    }
    Ok(local_lip(f)
        .iter()
        .zip(f.space.weights())
        .map(|(l, w)| l.powf(p) * w)
        .sum())
}

/// `sum lip * m`.
pub fn total_variation(f: &SpaceFunction) -> f64 {
    local_lip(f).iter().zip(f.space.weights()).map(|(l, w)| l * w).sum()
}

/// Whether the local slope is an upper gradient along every curve of `plan`
/// in the integrated sense used by the duality bounds. This holds when every
/// curve is a chain of edges of the slope graph, and on one-dimensional
/// templates whenever every curve is a concatenation of geodesics between
/// space points that follow the template order.
pub fn slope_controls_plan(f: &SpaceFunction, plan: &CurvePlan) -> bool {
    if plans::is_edge_path_plan(plan, &f.neighbors) {
        return true;
    }
    let space = plan.space();
    let tpl = space.template();
    if !tpl.is_one_dimensional() || f.neighbors != space.template_neighbors() {
        return false;
    }
    let tol = 1e-9 * tpl.length().max(1.0);
    plan.curves().iter().all(|c| {
        let nodes = c.nodes();
        let mut anchor = match space.locate(nodes[0]) {
            Some(_) => nodes[0],
            None => return false,
        };
        let mut pending: Vec<crate::ambient::Point> = Vec::new();
        for &p in &nodes[1..] {
            if space.locate(p).is_some() {
                // every intermediate node must lie on the geodesic from anchor to p, in order
                let total = tpl.dist(anchor, p);
                let mut prev = 0.0;
                for &x in &pending {
                    let a = tpl.dist(anchor, x);
                    if a + tpl.dist(x, p) > total + tol || a + tol < prev {
                        return false;
                    }
                    prev = a;
                }
                pending.clear();
                anchor = p;
            } else {
                pending.push(p);
            }
        }
        pending.is_empty()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub pairing: f64,
    pub comp: f64,
    /// `Ke_q^(1/q)` for the Sobolev form, `Lip` for the BV form.
    pub motion: f64,
    /// `Ch_p^(1/p)` or `|Df|`.
    pub energy: f64,
    /// Right-hand side of the duality inequality.
    pub bound: f64,
    /// `pairing / (Comp^(1/p) * motion)`, or `pairing / (Comp * Lip)`.
    pub ratio: f64,
    pub guaranteed: bool,
    pub holds: bool,
}

fn check_space(f: &SpaceFunction, plan: &CurvePlan) -> Result<()> {
    if *f.space != **plan.space() {
        return Err(Error::InvalidPlan("the plan and the function live on different spaces".into()));
    }
    Ok(())
}

fn sampling(plan: &CurvePlan) -> Sampling {
    if plan.template().is_one_dimensional() {
        Sampling::Exact
    } else {
        Sampling::default()
    }
}

/// All factors of `pairing <= Comp^(1/p) Ke_q^(1/q) Ch_p^(1/p)`.
pub fn duality_sobolev(f: &SpaceFunction, plan: &CurvePlan, p: f64, q: f64) -> Result<DualityRow> {
    check_space(f, plan)?;
    if !(p > 1.0 && q > 1.0) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::ExponentDomain(p, "p and q must be conjugate exponents above 1"));
    }
    let ke = plans::ke_q_root(plan, q)?;
    if ke <= 0.0 {
        return Err(Error::Degenerate("the plan has zero kinetic energy".into()));
    }
    let pairing = plans::pairing(plan, &f.values)?;
    let comp = plans::compression_with(plan, sampling(plan)).comp;
    let energy = cheeger_p(f, p)?.powf(1.0 / p);
    let bound = comp.powf(1.0 / p) * ke * energy;
    Ok(DualityRow {
        pairing,
        comp,
        motion: ke,
        energy,
        bound,
        ratio: pairing / (comp.powf(1.0 / p) * ke),
        guaranteed: slope_controls_plan(f, plan),
        holds: pairing <= bound + DUALITY_TOL * (1.0 + bound.abs()),
    })
}

/// `pairing / (Comp^(1/p) Ke_q^(1/q))`.
pub fn duality_ratio_sobolev(f: &SpaceFunction, plan: &CurvePlan, p: f64, q: f64) -> Result<f64> {
    duality_sobolev(f, plan, p, q).map(|r| r.ratio)
}

/// All factors of `pairing <= Comp Lip |Df|`.
pub fn duality_bv(f: &SpaceFunction, plan: &CurvePlan) -> Result<DualityRow> {
    check_space(f, plan)?;
    let lip = plans::lip_const(plan);
    if lip <= 0.0 {
        return Err(Error::Degenerate("the plan has zero Lipschitz constant".into()));
    }
    let pairing = plans::pairing(plan, &f.values)?;
    let comp = plans::compression_with(plan, sampling(plan)).comp;
    let energy = total_variation(f);
    let bound = comp * lip * energy;
    Ok(DualityRow {
        pairing,
        comp,
        motion: lip,
        energy,
        bound,
        ratio: pairing / (comp * lip),
        guaranteed: slope_controls_plan(f, plan),
        holds: pairing <= bound + DUALITY_TOL * (1.0 + bound.abs()),
    })
}

/// `pairing / (Comp Lip)`.
pub fn duality_ratio_bv(f: &SpaceFunction, plan: &CurvePlan) -> Result<f64> {
    duality_bv(f, plan).map(|r| r.ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeibnizReport {
    /// `Ch_p^(1/p)(fg)`.
    pub lhs: f64,
    /// `||g||_inf Ch_p^(1/p)(f) + ||lip g||_inf ||f||_p`.
    pub rhs: f64,
    pub holds: bool,
}

pub fn leibniz_check(f: &SpaceFunction, g: &SpaceFunction, p: f64) -> Result<LeibnizReport> {
    let fg = f.product(g)?;
    let lhs = cheeger_p(&fg, p)?.powf(1.0 / p);
    let lip_g = local_lip(g).into_iter().fold(0.0, f64::max);
    let rhs = g.sup_norm() * cheeger_p(f, p)?.powf(1.0 / p) + lip_g * f.lp_norm(p);
    Ok(LeibnizReport {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{discretize, GeodesicTemplate, Point};
    use approx::assert_abs_diff_eq;

    fn path3() -> Arc<FiniteSpace> {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let pts = [0.0, 0.5, 1.0].iter().map(|&x| Point::on_line(x)).collect();
        Arc::new(FiniteSpace::new(t, pts, vec![1.0 / 3.0; 3], 0).unwrap())
    }

    #[test]
    fn lip_examples() {
        let sp = path3();
        let f = SpaceFunction::new(sp.clone(), vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(local_lip(&f), vec![0.5, 1.5, 1.5]);
        assert_abs_diff_eq!(total_variation(&f), 3.5 / 3.0, epsilon = 1e-15);
        let c = SpaceFunction::new(sp.clone(), vec![2.0; 3]).unwrap();
        assert_eq!(local_lip(&c), vec![0.0; 3]);
        assert_eq!(cheeger_p(&c, 2.0).unwrap(), 0.0);
        let d = SpaceFunction::new(sp, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(local_lip(&d), vec![1.0; 3]);
    }

    #[test]
    fn identity_has_unit_energy() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        for n in [4, 16, 64] {
            let sp = Arc::new(discretize(&t, n, &|_| 1.0).unwrap());
            let f = SpaceFunction::from_fn(sp, |p| p.x).unwrap();
            for p in [1.5, 2.0, 3.0] {
                assert_abs_diff_eq!(cheeger_p(&f, p).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn duality_on_a_geodesic() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 9, &|_| 1.0).unwrap());
        let f = SpaceFunction::from_fn(sp.clone(), |p| p.x).unwrap();
        let plan = CurvePlan::dirac_geodesic(sp, 0, 8, 8).unwrap();
        let r = duality_sobolev(&f, &plan, 2.0, 2.0).unwrap();
        assert!(r.guaranteed && r.holds);
        assert!(r.comp >= 1.0);
        assert_abs_diff_eq!(r.ratio, 1.0 / r.comp.sqrt(), epsilon = 1e-12);
        let b = duality_bv(&f, &plan).unwrap();
        assert!(b.holds);
    }

    #[test]
    fn leibniz_examples() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 16, &|_| 1.0).unwrap());
        let f = SpaceFunction::from_fn(sp.clone(), |p| (3.0 * p.x).sin()).unwrap();
        let one = SpaceFunction::new(sp.clone(), vec![1.0; 16]).unwrap();
        let r = leibniz_check(&f, &one, 2.0).unwrap();
        assert_abs_diff_eq!(r.lhs, r.rhs, epsilon = 1e-12);
        let r = leibniz_check(&one, &f, 2.0).unwrap();
        assert!(r.holds);
    }
}

//! Exact optimal transport between densities on finite spaces: `W_q` through
//! the transportation simplex, `W_inf` through threshold bisection with a
//! max-flow feasibility test, lifts of couplings to dynamical plans, and the
//! construction of well-compressed `inf`-plans along an increasing schedule
//! of exponents.

pub mod maxflow;
pub mod simplex;

use std::sync::Arc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::ambient::{Density, FiniteSpace, GeodesicTemplate};
use crate::error::{Error, Result};
use crate::interpolation::curvature::CompressionBound;
use crate::plans::{self, CurvePlan, DiscreteCurve, Sampling};
use maxflow::{FlowNetwork, FLOAT_CAP_TOL};

/// Tolerance on the marginals of a coupling.
pub const COUPLING_TOL: f64 = 1e-9;
/// Tolerance on dual feasibility and complementary slackness.
pub const CERTIFICATE_TOL: f64 = 1e-8;
/// Default number of intervals of a lifted geodesic.
pub const DEFAULT_LIFT_STEPS: usize = 16;

/// Transport exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(q) => s.serialize_f64(*q),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(q) => Ok(Exponent::Finite(q)),
            Repr::Text(s) if s == "inf" => Ok(Exponent::Infinity),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("unknown exponent {s}"))),
        }
    }
}

/// A coupling between two densities, stored as a dense matrix of masses
/// indexed by the points of the source and target spaces.
#[derive(Debug, Clone)]
pub struct Coupling {
    source: Density,
    target: Density,
    matrix: Vec<f64>,
}

impl Coupling {
    pub fn new(source: Density, target: Density, matrix: Vec<f64>) -> Result<Self> {
        let (m, n) = (source.space().len(), target.space().len());
        if matrix.len() != m * n {
            return Err(Error::InvalidPlan("coupling matrix has the wrong size".into()));
        }
        if matrix.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidPlan("coupling entries must be nonnegative".into()));
        }
        let c = Coupling {
            source,
            target,
            matrix,
        };
        let err = c.marginal_error();
        if err > COUPLING_TOL {
            return Err(Error::MarginalMismatch {
                leg: 0,
                discrepancy: err,
            });
        }
        Ok(c)
    }

    pub fn source(&self) -> &Density {
        &self.source
    }

    pub fn target(&self) -> &Density {
        &self.target
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.target.space().len() + j]
    }

    /// Positive entries `(i, j, mass)` in row-major order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let n = self.target.space().len();
        self.matrix
            .iter()
            .enumerate()
            .filter(|(_, x)| **x > 0.0)
            .map(|(k, x)| (k / n, k % n, *x))
            .collect()
    }

    /// Largest deviation of a row or column sum from the prescribed masses.
    pub fn marginal_error(&self) -> f64 {
        let (m, n) = (self.source.space().len(), self.target.space().len());
        let a = self.source.masses();
        let b = self.target.masses();
        let mut err: f64 = 0.0;
        for i in 0..m {
            let r: f64 = self.matrix[i * n..(i + 1) * n].iter().sum();
            err = err.max((r - a[i]).abs());
        }
        for j in 0..n {
            let c: f64 = (0..m).map(|i| self.matrix[i * n + j]).sum();
            err = err.max((c - b[j]).abs());
        }
        err
    }

    /// `sum alpha_ij d_ij^q`.
    pub fn cost(&self, q: f64) -> f64 {
        let d = CrossDistance::new(self.source.space(), self.target.space());
        self.entries()
            .iter()
            .map(|(i, j, x)| x * d.get(*i, *j).powf(q))
            .sum()
    }

    /// Largest distance between coupled points.
    pub fn max_displacement(&self) -> f64 {
        let d = CrossDistance::new(self.source.space(), self.target.space());
        self.entries()
            .iter()
            .map(|(i, j, _)| d.get(*i, *j))
            .fold(0.0, f64::max)
    }
}

/// Distances between the points of two spaces over one template.
pub(crate) struct CrossDistance<'a> {
    a: &'a FiniteSpace,
    b: &'a FiniteSpace,
    same: bool,
}

impl<'a> CrossDistance<'a> {
    pub(crate) fn new(a: &'a FiniteSpace, b: &'a FiniteSpace) -> Self {
        let same = std::ptr::eq(a, b) || a == b;
        CrossDistance { a, b, same }
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        if self.same {
            self.a.d(i, j)
        } else {
            self.a.template().dist(self.a.point(i), self.b.point(j))
        }
    }
}

/// Optimality certificate of a transport solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// Kantorovich potentials for the normalized cost `(d / cost_scale)^q`,
    /// listed as `(point, value)` on the supports.
    Dual {
        cost_scale: f64,
        u: Vec<(usize, f64)>,
        v: Vec<(usize, f64)>,
        dual_infeasibility: f64,
        slackness_violation: f64,
        pivots: usize,
    },
    /// The optimal threshold and the largest smaller pair distance, at which
    /// no coupling exists.
    Bottleneck {
        threshold: f64,
        infeasible_below: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub coupling: Coupling,
    pub value: f64,
    pub exponent: Exponent,
    pub certificate: Certificate,
}

/// Serializable view of a [`TransportResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportRecord {
    pub value: f64,
    pub exponent: Exponent,
    /// Positive coupling entries `[i, j, mass]`.
    pub coupling: Vec<(usize, usize, f64)>,
    pub marginal_error: f64,
    pub certificate: Certificate,
}

impl TransportResult {
    pub fn record(&self) -> TransportRecord {
        TransportRecord {
            value: self.value,
            exponent: self.exponent,
            coupling: self.coupling.entries(),
            marginal_error: self.coupling.marginal_error(),
            certificate: self.certificate.clone(),
        }
    }
}

fn check_pair(mu0: &Density, mu1: &Density) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu0.space().template() != mu1.space().template() {
        return Err(Error::InvalidPlan("densities live on different templates".into()));
    }
    let a = mu0.masses();
    let b = mu1.masses();
    let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (ta - tb).abs() > COUPLING_TOL * ta.max(tb).max(1.0) {
        return Err(Error::MassMismatch(ta, tb));
    }
    if ta <= 0.0 {
        return Err(Error::ZeroMass("empty measures".into()));
    }
    Ok((a, b))
}

fn support(m: &[f64]) -> Vec<usize> {
    (0..m.len()).filter(|&i| m[i] > 0.0).collect()
}

/// Exact `W_q` optimal coupling for `q` in `(1, inf)`.
pub fn optimal_coupling_q(mu0: &Density, mu1: &Density, q: f64) -> Result<TransportResult> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::ExponentDomain(q, "q must lie in (1, inf)"));
    }
    let (a, b) = check_pair(mu0, mu1)?;
    let (sa, sb) = (support(&a), support(&b));
    let dist = CrossDistance::new(mu0.space(), mu1.space());
    let mut dmax: f64 = 0.0;
    for &i in &sa {
        for &j in &sb {
            dmax = dmax.max(dist.get(i, j));
        }
    }
    let scale = if dmax > 0.0 { dmax } else { 1.0 };
    let cost: Vec<f64> = sa
        .iter()
        .flat_map(|&i| sb.iter().map(move |&j| (i, j)))
        .map(|(i, j)| (dist.get(i, j) / scale).powf(q))
        .collect();
    let supply: Vec<f64> = sa.iter().map(|&i| a[i]).collect();
    let mut demand: Vec<f64> = sb.iter().map(|&j| b[j]).collect();
    // absorb the admissible rounding gap in the largest demand entry
    let gap: f64 = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    let big = (0..demand.len()).fold(0, |b, j| if demand[j] > demand[b] { j } else { b });
    demand[big] += gap;
    let sol = simplex::solve(&supply, &demand, &cost)?;
    let (infeas, slack) = simplex::certificate_residuals(&sol, &cost, sb.len());
    if infeas > CERTIFICATE_TOL || slack > CERTIFICATE_TOL {
        return Err(Error::Solver(format!(
            "certificate check failed: infeasibility {infeas:e}, slackness {slack:e}"
        )));
    }
    let (m, n) = (mu0.space().len(), mu1.space().len());
    let mut matrix = vec![0.0; m * n];
    for (k, x) in sol.flow.iter().enumerate() {
        matrix[sa[k / sb.len()] * n + sb[k % sb.len()]] = *x;
    }
    let value = scale * sol.cost.max(0.0).powf(1.0 / q);
    let certificate = Certificate::Dual {
        cost_scale: scale,
        u: sa.iter().copied().zip(sol.u.iter().copied()).collect(),
        v: sb.iter().copied().zip(sol.v.iter().copied()).collect(),
        dual_infeasibility: infeas.max(0.0),
        slackness_violation: slack,
        pivots: sol.pivots,
    };
    Ok(TransportResult {
        coupling: Coupling::new(mu0.clone(), mu1.clone(), matrix)?,
        value,
        exponent: Exponent::Finite(q),
        certificate,
    })
}

/// Exact optimal cost in rational arithmetic for rational masses and costs.
pub fn optimal_cost_exact(
    supply: &[BigRational],
    demand: &[BigRational],
    cost: &[BigRational],
) -> Result<BigRational> {
    Ok(simplex::solve(supply, demand, cost)?.cost)
}

/// Finds `k / d` with `d <= 1000` matching `x` to `1e-12`.
fn as_fraction(x: f64) -> Option<(u64, u64)> {
    for d in 1..=1000u64 {
        let k = (x * d as f64).round();
        if (x - k / d as f64).abs() <= 1e-12 {
            return Some((k as u64, d));
        }
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer capacities with a common denominator, when the masses allow one.
fn integer_capacities(a: &[f64], b: &[f64]) -> Option<(Vec<u64>, Vec<u64>, u64)> {
    let fa: Vec<(u64, u64)> = a.iter().map(|&x| as_fraction(x)).collect::<Option<_>>()?;
    let fb: Vec<(u64, u64)> = b.iter().map(|&x| as_fraction(x)).collect::<Option<_>>()?;
    let mut l: u64 = 1;
    for &(_, d) in fa.iter().chain(&fb) {
        l = l / gcd(l, d) * d;
        if l > 1_000_000_000 {
            return None;
        }
    }
    let ca: Vec<u64> = fa.iter().map(|&(k, d)| k * (l / d)).collect();
    let cb: Vec<u64> = fb.iter().map(|&(k, d)| k * (l / d)).collect();
    (ca.iter().sum::<u64>() == cb.iter().sum::<u64>()).then_some((ca, cb, l))
}

enum Caps {
    Int(Vec<u64>, Vec<u64>, u64),
    Float(Vec<f64>, Vec<f64>),
}

/// Flow matrix (over supports) if a coupling supported on `d <= thr` exists.
fn bottleneck_flow(caps: &Caps, d: &[f64], ns: usize, thr: f64) -> Option<Vec<f64>> {
    let (ma, nb) = match caps {
        Caps::Int(a, b, _) => (a.len(), b.len()),
        Caps::Float(a, b) => (a.len(), b.len()),
    };
    debug_assert_eq!(nb, ns);
    let (s, t) = (ma + nb, ma + nb + 1);
    macro_rules! run {
        ($cap_a:expr, $cap_b:expr, $ty:ty, $inf:expr) => {{
            let mut g = FlowNetwork::<$ty>::new(ma + nb + 2);
            let mut ids = Vec::new();
            for i in 0..ma {
                g.add_edge(s, i, $cap_a[i]);
            }
            for j in 0..nb {
                g.add_edge(ma + j, t, $cap_b[j]);
            }
            for i in 0..ma {
                for j in 0..nb {
                    if d[i * nb + j] <= thr {
                        ids.push((i * nb + j, g.add_edge(i, ma + j, $inf)));
                    }
                }
            }
            let f = g.max_flow(s, t);
            (f, g, ids)
        }};
    }
    match caps {
        Caps::Int(a, b, den) => {
            let total: u64 = a.iter().sum();
            let (f, g, ids) = run!(a, b, u64, <u64 as maxflow::Capacity>::infinite());
            (f == total).then(|| {
                let mut out = vec![0.0; ma * nb];
                for (cell, id) in ids {
                    out[cell] = g.flow(id) as f64 / *den as f64;
                }
                out
            })
        }
        Caps::Float(a, b) => {
            let total: f64 = a.iter().sum();
            let (f, g, ids) = run!(a, b, f64, f64::INFINITY);
            (f >= total - FLOAT_CAP_TOL).then(|| {
                let mut out = vec![0.0; ma * nb];
                for (cell, id) in ids {
                    out[cell] = g.flow(id);
                }
                out
            })
        }
    }
}

/// Exact `W_inf`: the smallest pair distance admitting a coupling supported
/// on pairs at most that far apart.
pub fn winf(mu0: &Density, mu1: &Density) -> Result<TransportResult> {
    let (a, b) = check_pair(mu0, mu1)?;
    let (sa, sb) = (support(&a), support(&b));
    let dist = CrossDistance::new(mu0.space(), mu1.space());
    let nb = sb.len();
    let d: Vec<f64> = sa
        .iter()
        .flat_map(|&i| sb.iter().map(move |&j| (i, j)))
        .map(|(i, j)| dist.get(i, j))
        .collect();
    let mut levels = d.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let ca: Vec<f64> = sa.iter().map(|&i| a[i]).collect();
    let cb: Vec<f64> = sb.iter().map(|&j| b[j]).collect();
    let caps = match integer_capacities(&ca, &cb) {
        Some((x, y, den)) => Caps::Int(x, y, den),
        None => Caps::Float(ca, cb),
    };
    // invariant: levels[hi] feasible, levels[lo - 1] infeasible
    let mut lo = 0usize;
    let mut hi = levels.len() - 1;
    let mut best = bottleneck_flow(&caps, &d, nb, levels[hi])
        .ok_or_else(|| Error::Solver("no coupling at the largest threshold".into()))?;
    while lo < hi {
        let mid = (lo + hi) / 2;
        match bottleneck_flow(&caps, &d, nb, levels[mid]) {
            Some(f) => {
                hi = mid;
                best = f;
            }
            None => lo = mid + 1,
        }
    }
    let (m, n) = (mu0.space().len(), mu1.space().len());
    let mut matrix = vec![0.0; m * n];
    for (k, x) in best.iter().enumerate() {
        matrix[sa[k / nb] * n + sb[k % nb]] = *x;
    }
    let threshold = levels[hi];
    Ok(TransportResult {
        coupling: Coupling::new(mu0.clone(), mu1.clone(), matrix)?,
        value: threshold,
        exponent: Exponent::Infinity,
        certificate: Certificate::Bottleneck {
            threshold,
            infeasible_below: (hi > 0).then(|| levels[hi - 1]),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub rows: Vec<(f64, f64)>,
    pub winf: f64,
    pub nondecreasing: bool,
    /// `|W_{q_last} - W_inf|`.
    pub final_gap: f64,
}

/// `W_q` along an increasing schedule, compared with `W_inf`.
pub fn winf_limit_check(mu0: &Density, mu1: &Density, schedule: &[f64]) -> Result<LimitTable> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Malformed("q schedule must be increasing and nonempty".into()));
    }
    let rows = schedule
        .iter()
        .map(|&q| optimal_coupling_q(mu0, mu1, q).map(|r| (q, r.value)))
        .collect::<Result<Vec<_>>>()?;
    let w = winf(mu0, mu1)?.value;
    Ok(LimitTable {
        nondecreasing: rows.windows(2).all(|p| p[1].1 >= p[0].1),
        final_gap: (rows.last().unwrap().1 - w).abs(),
        rows,
        winf: w,
    })
}

/// One constant-speed geodesic per positive coupling entry, sampled on
/// `steps` uniform intervals. The plan lives on the source space.
pub fn lift_to_dynamical(result: &TransportResult, steps: usize) -> Result<CurvePlan> {
    lift_coupling(&result.coupling, steps)
}

pub fn lift_coupling(coupling: &Coupling, steps: usize) -> Result<CurvePlan> {
    let src = coupling.source().space().clone();
    let dst = coupling.target().space();
    let tpl: &GeodesicTemplate = src.template();
    let mut curves = Vec::new();
    let mut masses = Vec::new();
    for (i, j, x) in coupling.entries() {
        curves.push(DiscreteCurve::geodesic(tpl, src.point(i), dst.point(j), steps));
        masses.push(x);
    }
    CurvePlan::normalized(src, curves, masses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodInftyStep {
    pub q: f64,
    pub eps: f64,
    pub wq: f64,
    /// Curves longer than this were discarded.
    pub threshold: f64,
    pub discarded: f64,
    /// The Chebyshev bound `1 / q`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct GoodInftyPlan {
    pub plan: CurvePlan,
    pub winf: f64,
    pub steps: Vec<GoodInftyStep>,
    pub lip: f64,
    /// `W_inf * q_last^(1 / q_last)`.
    pub lip_bound: f64,
    pub comp: f64,
    /// The supplied certificate and whether the final plan respects it.
    pub certificate: Option<(CompressionBound, bool)>,
}

/// For each `q_k`: the `q_k`-optimal lift restricted to the curves of
/// length at most `W_inf + eps_k`, with `eps_k = W_inf (q_k^(1/q_k) - 1)`.
/// The restricted plan of the last exponent is returned.
pub fn good_infty_plan(
    mu0: &Density,
    mu1: &Density,
    q_schedule: &[f64],
    comp_certificate: Option<&CompressionBound>,
    steps: usize,
) -> Result<GoodInftyPlan> {
    good_infty_parts(mu0, mu1, q_schedule, comp_certificate, steps).map(|p| p.0)
}

/// [`good_infty_plan`] together with the unrestricted lift of the last
/// exponent and its keep flags.
pub(crate) fn good_infty_parts(
    mu0: &Density,
    mu1: &Density,
    q_schedule: &[f64],
    comp_certificate: Option<&CompressionBound>,
    steps: usize,
) -> Result<(GoodInftyPlan, CurvePlan, Vec<bool>)> {
    if q_schedule.len() < 2 || q_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Malformed("q schedule must be increasing with at least 2 entries".into()));
    }
    let w = winf(mu0, mu1)?.value;
    let mut records = Vec::new();
    let mut last = None;
    let mut last_lift = None;
    for &q in q_schedule {
        let res = optimal_coupling_q(mu0, mu1, q)?;
        let eps = w * (q.powf(1.0 / q) - 1.0);
        let threshold = w + eps;
        let lift = lift_to_dynamical(&res, steps)?;
        let keep: Vec<f64> = lift
            .curves()
            .iter()
            .map(|c| f64::from(c.length(lift.template()) <= threshold * (1.0 + 1e-12) + 1e-15))
            .collect();
        let discarded: f64 = lift
            .masses()
            .iter()
            .zip(&keep)
            .map(|(m, k)| m * (1.0 - k))
            .sum();
        if discarded >= 1.0 - 1e-15 {
            return Err(Error::ZeroMass(format!("q = {q} discards every curve")));
        }
        let restricted = plans::restrict_event(&lift, &keep)?;
        last_lift = Some((lift, keep.iter().map(|k| *k > 0.0).collect::<Vec<bool>>()));
        records.push(GoodInftyStep {
            q,
            eps,
            wq: res.value,
            threshold,
            discarded,
            bound: 1.0 / q,
        });
        last = Some(restricted);
    }
    let plan = last.unwrap();
    let lip = plans::lip_const(&plan);
    let q_last = *q_schedule.last().unwrap();
    let comp = plans::compression_with(&plan, Sampling::default()).comp;
    let certificate = comp_certificate.map(|c| (c.clone(), comp <= c.value * (1.0 + 1e-9)));
    let (lift, keep) = last_lift.unwrap();
    let g = GoodInftyPlan {
        plan,
        winf: w,
        steps: records,
        lip,
        lip_bound: w * q_last.powf(1.0 / q_last),
        comp,
        certificate,
    };
    Ok((g, lift, keep))
}

/// Convenience: a density from point masses on a shared space.
pub fn density(space: &Arc<FiniteSpace>, masses: &[f64]) -> Result<Density> {
    Density::from_masses(space.clone(), masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{FiniteSpace, GeodesicTemplate, Point};
    use crate::plans::{ke_q, lip_const};
    use approx::assert_abs_diff_eq;

    fn line(points: &[f64]) -> Arc<FiniteSpace> {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        Arc::new(
            FiniteSpace::new(
                t,
                points.iter().map(|&x| Point::on_line(x)).collect(),
                vec![1.0 / points.len() as f64; points.len()],
                0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn spec_examples() {
        let sp = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let d0 = density(&sp, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let d1 = density(&sp, &[0.0, 0.0, 0.5, 0.0, 0.5]).unwrap();
        let r = optimal_coupling_q(&d0, &d1, 2.0).unwrap();
        assert_abs_diff_eq!(r.value * r.value, 0.625, epsilon = 1e-12);
        assert_eq!(winf(&d0, &d1).unwrap().value, 1.0);
        let lift = lift_to_dynamical(&r, 16).unwrap();
        assert_eq!(lift.len(), 2);
        assert_abs_diff_eq!(ke_q(&lift, 2.0).unwrap(), 0.625, epsilon = 1e-12);

        let u0 = density(&sp, &[0.5, 0.0, 0.0, 0.0, 0.5]).unwrap();
        let u1 = density(&sp, &[0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        let r = optimal_coupling_q(&u0, &u1, 2.0).unwrap();
        assert_abs_diff_eq!(r.value * r.value, 0.0625, epsilon = 1e-12);
        assert_eq!(winf(&u0, &u1).unwrap().value, 0.25);

        let same = optimal_coupling_q(&u0, &u0, 3.0).unwrap();
        assert_eq!(same.value, 0.0);
        assert_eq!(winf(&u0, &u0).unwrap().value, 0.0);
        let lift = lift_to_dynamical(&same, 4).unwrap();
        assert_eq!(lip_const(&lift), 0.0);
    }

    #[test]
    fn errors() {
        let sp = line(&[0.0, 1.0]);
        let a = density(&sp, &[1.0, 0.0]).unwrap();
        let b = density(&sp, &[0.5, 0.0]).unwrap();
        assert!(matches!(optimal_coupling_q(&a, &b, 2.0), Err(Error::MassMismatch(..))));
        assert!(matches!(optimal_coupling_q(&a, &a, 1.0), Err(Error::ExponentDomain(..))));
        assert!(matches!(winf(&a, &b), Err(Error::MassMismatch(..))));
    }

    #[test]
    fn limit_table() {
        let sp = line(&[0.0, 0.25, 0.75, 1.0]);
        let u0 = density(&sp, &[0.5, 0.0, 0.0, 0.5]).unwrap();
        let u1 = density(&sp, &[0.0, 0.5, 0.5, 0.0]).unwrap();
        let t = winf_limit_check(&u0, &u1, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
        assert!(t.nondecreasing);
        assert!(t.final_gap <= 0.05 * t.winf);
        let dd = density(&sp, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let de = density(&sp, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        let t = winf_limit_check(&dd, &de, &[2.0, 4.0, 8.0]).unwrap();
        for (_, v) in t.rows {
            assert_eq!(v, 0.75);
        }
    }

    #[test]
    fn good_infty_dirac() {
        let sp = line(&[0.0, 0.5, 1.0]);
        let a = density(&sp, &[1.0, 0.0, 0.0]).unwrap();
        let b = density(&sp, &[0.0, 0.0, 1.0]).unwrap();
        let g = good_infty_plan(&a, &b, &[2.0, 4.0, 8.0], None, 8).unwrap();
        assert_eq!(g.plan.len(), 1);
        assert_abs_diff_eq!(g.lip, 1.0, epsilon = 1e-12);
        assert!(g.steps.iter().all(|s| s.discarded == 0.0));
    }

    #[test]
    fn float_capacity_fallback() {
        let sp = line(&[0.0, 0.3, 0.6, 1.0]);
        let x = std::f64::consts::PI / 10.0;
        let a = density(&sp, &[x, 1.0 - x, 0.0, 0.0]).unwrap();
        let b = density(&sp, &[0.0, 0.0, 1.0 - x, x]).unwrap();
        let r = winf(&a, &b).unwrap();
        assert!(r.coupling.marginal_error() < 1e-9);
        assert_abs_diff_eq!(r.value, 0.7, epsilon = 1e-12);
    }
}

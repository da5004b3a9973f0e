//! Polygonal geodesic interpolation of a plan on the limit space by plans on
//! a term space: the grid marginals are transferred, consecutive ones are
//! joined by optimal dynamical plans, long curves are gated out, the legs
//! are corrected to stay compatible and finally glued.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::approx::{approx_density, Ball};
use super::curvature::CompressionBound;
use super::submarginal::{chebyshev_gate, submarginal_correction, CorrectionChecks, Gate, LegCurve};
use super::winf_transfer::{winf_marginal_transfer, WinfTransferReport};
use super::Inequality;
use crate::ambient::{Density, FiniteSpace, Point, SpaceSequence, LOCATE_TOL};
use crate::error::{Error, Result};
use crate::plans::{self, CurvePlan, PlanRecord, Sampling, SamplingMeta};
use crate::transport::{good_infty_parts, lift_coupling, optimal_coupling_q, Exponent, GoodInftyStep};

/// Tolerance of the per-build inequalities.
pub const BUILD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Nonnegative curvature: legs are used without gates.
    CdNonneg,
    #[serde(alias = "cd")]
    CdGeneral,
    Mcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonalOptions {
    #[serde(rename = "M")]
    pub m: usize,
    pub regime: Regime,
    /// Curvature lower bound.
    #[serde(rename = "K")]
    pub k: f64,
    /// Dimension upper bound; required by the mcp regime.
    #[serde(rename = "N")]
    pub n: Option<f64>,
    /// Intervals of each lifted geodesic.
    pub steps: usize,
    /// Ball containing the plan; derived from the plan when absent.
    pub ball: Option<Ball>,
}

impl PolygonalOptions {
    pub fn new(m: usize, regime: Regime) -> Self {
        PolygonalOptions {
            m,
            regime,
            k: 0.0,
            n: None,
            steps: 4,
            ball: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Malformed("M must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Malformed("lift steps must be positive".into()));
        }
        if self.regime == Regime::Mcp && self.n.is_none_or(|n| !(n >= 1.0)) {
            return Err(Error::Malformed("the mcp regime needs N >= 1".into()));
        }
        if self.regime == Regime::CdNonneg && self.k < 0.0 {
            return Err(Error::Malformed("cd_nonneg needs K >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegReport {
    /// `W_q` (or `W_inf`) between the transferred marginals.
    pub value: f64,
    pub curves: usize,
    pub gate: Gate,
    /// Steps of the `inf`-plan schedule, for `inf` builds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<GoodInftyStep>,
    pub lip: f64,
}

/// Diagnostics of a polygonal build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub exponent: Exponent,
    pub regime: Regime,
    #[serde(rename = "M")]
    pub m: usize,
    pub term: usize,
    pub points: usize,
    pub legs: Vec<LegReport>,
    /// Total discarded mass over the legs.
    pub discarded: f64,
    pub discarded_bound: Inequality,
    pub correction: CorrectionChecks,
    /// `sum W_q^q` of the unsnapped grid marginals of the input against
    /// `M^(1-q) Ke_q`.
    pub jensen: Option<Inequality>,
    pub ke_bound: Option<Inequality>,
    pub ke_input: Option<f64>,
    pub ke_result: Option<f64>,
    pub lip_input: f64,
    pub lip_result: f64,
    /// `Lip(result)` against `M * max Lip(leg)`; both sides should agree.
    pub lip_identity: Inequality,
    pub comp_input: f64,
    pub comp_result: f64,
    pub comp_meta: SamplingMeta,
    pub certificate: CompressionBound,
    pub comp_vs_certificate: Inequality,
    /// Inflation factor of the regime at scale `Lip(input) / M`.
    pub inflation_factor: Option<f64>,
    /// `L^q` distances between transferred and corrected endpoint densities.
    pub endpoint_distances: [f64; 2],
    pub densities_before: Vec<Vec<f64>>,
    pub densities_after: Vec<Vec<f64>>,
    pub transfer: Option<WinfTransferReport>,
}

#[derive(Debug, Clone)]
pub struct PolygonalBuild {
    pub plan: CurvePlan,
    pub diagnostics: BuildDiagnostics,
}

impl Serialize for PolygonalBuild {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            #[serde(flatten)]
            diagnostics: &'a BuildDiagnostics,
            plan: PlanRecord,
        }
        View {
            diagnostics: &self.diagnostics,
            plan: self.plan.record(),
        }
        .serialize(s)
    }
}

fn grid_marginals(eta: &CurvePlan, limit: &Arc<FiniteSpace>, m: usize) -> Result<Vec<Density>> {
    let eta = eta.with_space(limit.clone())?;
    (0..=m)
        .map(|i| {
            let (masses, _) = eta.marginal(i as f64 / m as f64);
            Density::from_masses(limit.clone(), &masses)
        })
        .collect()
}

/// `sum_i W_q^q` between the exact (unsnapped) positions at consecutive
/// grid times.
fn jensen_lhs(eta: &CurvePlan, m: usize, q: f64) -> Result<f64> {
    let tpl = eta.template().clone();
    let mut pts: Vec<Point> = Vec::new();
    let tol = LOCATE_TOL * tpl.length().max(1.0);
    let index = |p: Point, pts: &mut Vec<Point>| match pts.iter().position(|x| tpl.dist(*x, p) <= tol) {
        Some(i) => i,
        None => {
            pts.push(p);
            pts.len() - 1
        }
    };
    let mut at: Vec<Vec<usize>> = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let t = i as f64 / m as f64;
        at.push(eta.curves().iter().map(|c| index(c.eval(&tpl, t), &mut pts)).collect());
    }
    let k = pts.len();
    let space = Arc::new(FiniteSpace::new(tpl.clone(), pts, vec![1.0; k], 0)?);
    let mut total = 0.0;
    for i in 0..m {
        let mut a = vec![0.0; k];
        let mut b = vec![0.0; k];
        for (c, w) in eta.masses().iter().enumerate() {
            a[at[i][c]] += w;
            b[at[i + 1][c]] += w;
        }
        let r = optimal_coupling_q(
            &Density::from_masses(space.clone(), &a)?,
            &Density::from_masses(space.clone(), &b)?,
            q,
        )?;
        total += r.value.powf(q);
    }
    Ok(total)
}

fn lq_distance(a: &Density, b: &Density, q: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .zip(a.space().weights())
        .map(|((x, y), w)| (x - y).abs().powf(q) * w)
        .sum::<f64>()
        .powf(1.0 / q)
}

struct Corrected {
    legs: Vec<CurvePlan>,
    after: Vec<Density>,
    checks: CorrectionChecks,
}

fn correct(
    target: &Arc<FiniteSpace>,
    before: &[Density],
    lifts: &[CurvePlan],
    gates: &[Vec<bool>],
    ke_power: f64,
) -> Result<Corrected> {
    let tpl = target.template();
    let mut leg_curves = Vec::with_capacity(lifts.len());
    for (lift, keep) in lifts.iter().zip(gates) {
        let ends = lift.endpoint_indices()?;
        leg_curves.push(
            ends.iter()
                .zip(lift.masses())
                .zip(lift.curves())
                .zip(keep)
                .map(|(((&(a, b), &m), c), &k)| LegCurve {
                    start: a,
                    end: b,
                    mass: m,
                    keep: k,
                    ke: c.length(tpl).powf(ke_power),
                })
                .collect::<Vec<_>>(),
        );
    }
    let marg: Vec<Vec<f64>> = before.iter().map(|d| d.masses()).collect();
    let corr = submarginal_correction(target.weights(), &marg, &leg_curves)?;
    let legs = lifts
        .iter()
        .zip(&corr.legs)
        .map(|(l, w)| CurvePlan::normalized(target.clone(), l.curves().to_vec(), w.clone()))
        .collect::<Result<Vec<_>>>()?;
    let after = corr
        .marginals
        .iter()
        .map(|m| Density::from_masses(target.clone(), m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corrected {
        legs,
        after,
        checks: corr.checks,
    })
}

fn comp_sampling(target: &FiniteSpace) -> Sampling {
    if target.template().is_one_dimensional() {
        Sampling::Exact
    } else {
        Sampling::default()
    }
}

/// The `M`-polygonal `q`-interpolation of `eta` (a plan on the limit space)
/// on term `term` of `seq`.
pub fn build_polygonal_q(
    eta: &CurvePlan,
    seq: &SpaceSequence,
    term: usize,
    q: f64,
    opts: &PolygonalOptions,
) -> Result<PolygonalBuild> {
    opts.validate()?;
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::ExponentDomain(q, "q must lie in (1, inf)"));
    }
    let target = seq.term(term)?.clone();
    let limit = seq.limit();
    let m = opts.m;
    let eta = eta.with_space(limit.clone())?;
    let ball = opts.ball.unwrap_or_else(|| Ball::around_plan(&eta));
    let rhos = grid_marginals(&eta, limit, m)?;
    let before = rhos
        .iter()
        .map(|r| approx_density(r, &target, &ball))
        .collect::<Result<Vec<_>>>()?;

    let mut lifts = Vec::with_capacity(m);
    let mut gates = Vec::with_capacity(m);
    let mut reports = Vec::with_capacity(m);
    for i in 0..m {
        let res = optimal_coupling_q(&before[i], &before[i + 1], q)?;
        let lift = lift_coupling(&res.coupling, opts.steps)?;
        let mut gate = chebyshev_gate(&lift, q, res.value)?;
        if opts.regime == Regime::CdNonneg {
            gate.keep.iter_mut().for_each(|k| *k = true);
            gate.discarded = 0.0;
            gate.within_bound = true;
        }
        gates.push(gate.keep.clone());
        reports.push(LegReport {
            value: res.value,
            curves: lift.len(),
            gate,
            schedule: Vec::new(),
            lip: 0.0,
        });
        lifts.push(lift);
    }
    let discarded: f64 = reports.iter().map(|r| r.gate.discarded).sum();
    let cheb_sum: f64 = reports.iter().map(|r| r.gate.bound).sum();
    let corrected = correct(&target, &before, &lifts, &gates, q)?;
    for (r, l) in reports.iter_mut().zip(&corrected.legs) {
        r.lip = plans::lip_const(l);
    }
    let grid = plans::uniform_grid(m);
    let result = plans::glue(&corrected.legs, &grid)?;

    let ke_input = plans::ke_q(&eta, q)?;
    let ke_result = plans::ke_q(&result, q)?;
    let mf = m as f64;
    let wq_sum: f64 = reports.iter().map(|r| r.value.powf(q)).sum();
    let jensen = Inequality::le(jensen_lhs(&eta, m, q)?, mf.powf(1.0 - q) * ke_input, BUILD_TOL);
    let ke_bound = Inequality::le(
        ke_result,
        mf.powf(q - 1.0) / (1.0 - discarded) * wq_sum,
        BUILD_TOL,
    );
    let lip_result = plans::lip_const(&result);
    let max_leg_lip = reports.iter().map(|r| r.lip).fold(0.0, f64::max);
    let comp = plans::compression_with(&result, comp_sampling(&target));
    let base = corrected.after.iter().map(|d| d.sup_norm()).fold(0.0, f64::max);
    let scale = reports
        .iter()
        .map(|r| r.value.powf((q - 1.0) / (2.0 * q)))
        .fold(0.0, f64::max);
    let lip_input = plans::lip_const(&eta);
    let (certificate, inflation) = match opts.regime {
        Regime::CdNonneg | Regime::CdGeneral => (CompressionBound::cd_infty(opts.k, scale, base), None),
        Regime::Mcp => {
            let n = opts.n.unwrap();
            let factor = CompressionBound::mcp(opts.k, n, lip_input / mf, 1.0)?.value;
            (CompressionBound::mcp(opts.k, n, scale, base)?, Some(factor))
        }
    };
    let diagnostics = BuildDiagnostics {
        exponent: Exponent::Finite(q),
        regime: opts.regime,
        m,
        term,
        points: target.len(),
        discarded,
        discarded_bound: Inequality::le(discarded, cheb_sum, BUILD_TOL),
        correction: corrected.checks,
        jensen: Some(jensen),
        ke_bound: Some(ke_bound),
        ke_input: Some(ke_input),
        ke_result: Some(ke_result),
        lip_input,
        lip_result,
        lip_identity: Inequality::le(lip_result, mf * max_leg_lip, BUILD_TOL),
        comp_input: plans::compression_with(&eta, comp_sampling(limit)).comp,
        comp_result: comp.comp,
        comp_meta: comp.meta,
        comp_vs_certificate: Inequality::le(comp.comp, certificate.value, BUILD_TOL),
        certificate,
        inflation_factor: inflation,
        endpoint_distances: [
            lq_distance(&before[0], &corrected.after[0], q),
            lq_distance(&before[m], &corrected.after[m], q),
        ],
        densities_before: before.iter().map(|d| d.values().to_vec()).collect(),
        densities_after: corrected.after.iter().map(|d| d.values().to_vec()).collect(),
        transfer: None,
        legs: reports,
    };
    Ok(PolygonalBuild {
        plan: result,
        diagnostics,
    })
}

/// The `M`-polygonal `inf`-interpolation of `eta` on term `term` of `seq`.
/// Each leg is the `q_last`-optimal lift between the transferred marginals,
/// restricted to curves no longer than `W_inf q_last^(1/q_last)` and
/// corrected for compatibility.
pub fn build_polygonal_inf(
    eta: &CurvePlan,
    seq: &SpaceSequence,
    term: usize,
    q_schedule: &[f64],
    opts: &PolygonalOptions,
) -> Result<PolygonalBuild> {
    opts.validate()?;
    let target = seq.term(term)?.clone();
    let limit = seq.limit();
    let m = opts.m;
    let eta = eta.with_space(limit.clone())?;
    let ball = opts.ball.unwrap_or_else(|| Ball::around_plan(&eta));
    let rhos = grid_marginals(&eta, limit, m)?;
    let transfer = winf_marginal_transfer(&rhos, &target, &ball)?;
    let before = transfer.densities;

    let mut lifts = Vec::with_capacity(m);
    let mut gates = Vec::with_capacity(m);
    let mut reports = Vec::with_capacity(m);
    for i in 0..m {
        let (g, lift, keep) = good_infty_parts(&before[i], &before[i + 1], q_schedule, None, opts.steps)?;
        let discarded: f64 = lift
            .masses()
            .iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(w, _)| w)
            .sum::<f64>()
            + 0.0;
        let last = g.steps.last().unwrap();
        reports.push(LegReport {
            value: g.winf,
            curves: lift.len(),
            gate: Gate {
                keep: keep.clone(),
                threshold: last.threshold,
                discarded,
                bound: last.bound,
                within_bound: discarded <= last.bound + BUILD_TOL,
            },
            schedule: g.steps,
            lip: 0.0,
        });
        gates.push(keep);
        lifts.push(lift);
    }
    let discarded: f64 = reports.iter().map(|r| r.gate.discarded).sum();
    let bound_sum: f64 = reports.iter().map(|r| r.gate.bound).sum();
    let corrected = correct(&target, &before, &lifts, &gates, 1.0)?;
    for (r, l) in reports.iter_mut().zip(&corrected.legs) {
        r.lip = plans::lip_const(l);
    }
    let result = plans::glue(&corrected.legs, &plans::uniform_grid(m))?;

    let mf = m as f64;
    let lip_result = plans::lip_const(&result);
    let max_leg_lip = reports.iter().map(|r| r.lip).fold(0.0, f64::max);
    let lip_input = plans::lip_const(&eta);
    let comp = plans::compression_with(&result, comp_sampling(&target));
    let base = before.iter().map(|d| d.sup_norm()).fold(0.0, f64::max);
    let scale = reports.iter().map(|r| r.value).fold(0.0, f64::max);
    let (certificate, inflation) = match opts.regime {
        Regime::CdNonneg | Regime::CdGeneral => {
            let f = CompressionBound::cd_infty(opts.k, lip_input / mf, 1.0).value;
            (CompressionBound::cd_infty(opts.k, scale, base), f)
        }
        Regime::Mcp => {
            let n = opts.n.unwrap();
            let f = CompressionBound::mcp(opts.k, n, lip_input / mf, 1.0)?.value;
            (CompressionBound::mcp(opts.k, n, scale, base)?, f)
        }
    };
    let diagnostics = BuildDiagnostics {
        exponent: Exponent::Infinity,
        regime: opts.regime,
        m,
        term,
        points: target.len(),
        discarded,
        discarded_bound: Inequality::le(discarded, bound_sum, BUILD_TOL),
        correction: corrected.checks,
        jensen: None,
        ke_bound: None,
        ke_input: None,
        ke_result: None,
        lip_input,
        lip_result,
        lip_identity: Inequality::le(lip_result, mf * max_leg_lip, BUILD_TOL),
        comp_input: plans::compression_with(&eta, comp_sampling(limit)).comp,
        comp_result: comp.comp,
        comp_meta: comp.meta,
        comp_vs_certificate: Inequality::le(comp.comp, certificate.value, BUILD_TOL),
        certificate,
        inflation_factor: Some(inflation),
        endpoint_distances: [
            lq_distance(&before[0], &corrected.after[0], 2.0),
            lq_distance(&before[m], &corrected.after[m], 2.0),
        ],
        densities_before: before.iter().map(|d| d.values().to_vec()).collect(),
        densities_after: corrected.after.iter().map(|d| d.values().to_vec()).collect(),
        transfer: Some(transfer.report),
        legs: reports,
    };
    Ok(PolygonalBuild {
        plan: result,
        diagnostics,
    })
}

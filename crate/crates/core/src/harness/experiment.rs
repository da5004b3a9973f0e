//! The liminf pipelines: every corpus plan on the limit space is rebuilt as
//! a polygonal plan on each scheduled term, paired with the term function,
//! and the discrete duality inequality, the chain towards the limit and the
//! liminf margin are recorded with both sides.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convergence::{lp_strong_check, tail_start, ConvergenceTolerances, FunctionSequence, FunctionSpec, StrongReport};
use super::corpus::{build_corpus, CorpusKind, CorpusPlan, CorpusSpec, CORPUS_VERSION};
use crate::ambient::{GeodesicTemplate, MeasureSpec, SpaceSequence, TemplateKind};
use crate::calculus::{
    cheeger_p, duality_bv, duality_sobolev, slope_controls_plan, total_variation, DualityRow, SpaceFunction, DUALITY_TOL,
};
use crate::error::{Error, Result};
use crate::interpolation::polygonal::BuildDiagnostics;
use crate::interpolation::{build_polygonal_inf, build_polygonal_q, Inequality, PolygonalOptions, Regime};
use crate::plans::{self, CurvePlan};

pub const REPORT_VERSION: &str = "mosco-report-v1";
/// Default `q` schedule of the `inf`-plans.
pub const DEFAULT_Q_SCHEDULE: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest admissible liminf margin.
    pub liminf: f64,
    /// Relative slack of the duality and chain inequalities.
    pub duality: f64,
    pub weak: f64,
    pub norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            liminf: 1e-6,
            duality: 1e-9,
            weak: 0.05,
            norm: 0.05,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        if [self.liminf, self.duality, self.weak, self.norm].iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::Malformed("tolerances must be positive".into()))
        }
    }

    fn convergence(&self) -> ConvergenceTolerances {
        ConvergenceTolerances {
            weak: self.weak,
            norm: self.norm,
        }
    }
}

/// Refining discretizations of one template; the terms are the resolutions
/// named in the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub template: GeodesicTemplate,
    #[serde(default = "uniform")]
    pub measure: MeasureSpec,
    pub limit_n: usize,
}

fn uniform() -> MeasureSpec {
    MeasureSpec::Uniform
}

fn default_steps() -> usize {
    4
}

/// Configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sequence: SequenceSpec,
    pub function_sequence: FunctionSpec,
    pub regime: Regime,
    /// `p > 1` runs the Sobolev pipeline, `p = 1` the total-variation one.
    pub p: f64,
    #[serde(rename = "K", default)]
    pub k: f64,
    #[serde(rename = "N", default)]
    pub n: Option<f64>,
    /// `(M, n)` cells.
    pub schedule: Vec<(usize, usize)>,
    #[serde(default)]
    pub q_schedule: Vec<f64>,
    #[serde(default)]
    pub corpus_seed: u64,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Intervals of each lifted geodesic in the builds.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if self.schedule.is_empty() {
            return Err(Error::Malformed("the schedule is empty".into()));
        }
        if self.schedule.iter().any(|(m, n)| *m == 0 || *n < 2) {
            return Err(Error::Malformed("schedule cells need M >= 1 and n >= 2".into()));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Malformed(format!("p = {} must lie in [1, inf)", self.p)));
        }
        if self.q_schedule.iter().any(|q| !(*q > 1.0 && q.is_finite())) {
            return Err(Error::Malformed("q schedule entries must exceed 1".into()));
        }
        if self.steps == 0 || self.sequence.limit_n < 2 {
            return Err(Error::Malformed("steps and limit resolution must be positive".into()));
        }
        Ok(())
    }

    /// Distinct resolutions of the schedule in increasing order.
    pub fn resolutions(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.schedule.iter().map(|c| c.1).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    pub fn function_sequence(&self) -> Result<FunctionSequence> {
        let seq = SpaceSequence::refining(
            &self.sequence.template,
            &self.resolutions(),
            self.sequence.limit_n,
            &self.sequence.measure,
        )?;
        FunctionSequence::from_spec(seq, &self.function_sequence, self.p)
    }

    pub fn options(&self) -> MoscoOptions {
        MoscoOptions {
            regime: self.regime,
            k: self.k,
            n: self.n,
            schedule: self.schedule.clone(),
            q_schedule: if self.q_schedule.is_empty() {
                DEFAULT_Q_SCHEDULE.to_vec()
            } else {
                self.q_schedule.clone()
            },
            steps: self.steps,
            tolerances: self.tolerances,
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.corpus_seed,
            ..self.corpus.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoscoOptions {
    pub regime: Regime,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub schedule: Vec<(usize, usize)>,
    pub q_schedule: Vec<f64>,
    pub steps: usize,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sobolev,
    TotalVariation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Infeasible,
}

/// One `(plan, M, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoscoRow {
    pub plan: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub status: CellStatus,
    pub error: Option<String>,
    /// Pairing of the corpus plan with the limit function.
    pub pairing_limit: f64,
    /// Pairing of the build with the term function, when feasible.
    pub pairing: Option<f64>,
    pub residual: Option<f64>,
    /// Both sides of the discrete duality inequality for the build.
    pub duality: Option<DualityRow>,
    pub inflation_factor: Option<f64>,
    pub diagnostics: Option<BuildDiagnostics>,
}

/// The chain from the limit pairing to the tail of the bounds, per plan and `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub plan: String,
    #[serde(rename = "M")]
    pub m: usize,
    /// `pairing(eta, f_inf)` against the largest tail bound plus the
    /// largest tail residual.
    pub limsup: Option<Inequality>,
    /// The tail terms entering `limsup`: `(n, bound, residual)`.
    pub tail: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub n: usize,
    pub energy: f64,
}

/// `limit <= factor * min over the tail` with margin `limit - factor * tail_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfMargin {
    pub limit: f64,
    pub tail_min: f64,
    pub factor: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    /// Largest `|pairing(build, f_n) - pairing(eta, f_inf)|` over the feasible cells.
    pub max_residual: f64,
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDualityRow {
    pub plan: String,
    pub kind: CorpusKind,
    pub sobolev: Option<DualityRow>,
    pub bv: Option<DualityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub version: String,
    pub spec: CorpusSpec,
    pub plans: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Violation,
    Infeasible,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violation => 2,
            Status::Infeasible => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: usize,
    pub infeasible: usize,
    pub violations: Vec<String>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoscoReport {
    pub version: String,
    pub kind: ExperimentKind,
    pub p: f64,
    /// Conjugate exponent of the builds; absent for total variation.
    pub q: Option<f64>,
    pub options: MoscoOptions,
    pub test_family: String,
    pub corpus: CorpusInfo,
    /// Hypotheses of the continuum statements that cannot be checked here.
    pub assumptions: Vec<String>,
    pub convergence: StrongReport,
    pub energies: Vec<EnergyRow>,
    pub liminf: LiminfMargin,
    pub corpus_duality: Vec<CorpusDualityRow>,
    pub rows: Vec<MoscoRow>,
    pub chains: Vec<ChainRow>,
    pub residuals: Vec<ResidualRow>,
    pub summary: Summary,
}

fn resolution_of(space: &crate::ambient::FiniteSpace) -> usize {
    if space.template().kind == TemplateKind::TorusGrid {
        (space.len() as f64).sqrt().round() as usize
    } else {
        space.len()
    }
}

fn term_index(seq: &SpaceSequence, n: usize) -> Result<usize> {
    seq.terms()
        .iter()
        .position(|s| resolution_of(s) == n)
        .ok_or_else(|| Error::Malformed(format!("no term of resolution {n}")))
}

fn energy(f: &SpaceFunction, p: f64) -> Result<f64> {
    if p == 1.0 {
        Ok(total_variation(f))
    } else {
        cheeger_p(f, p)
    }
}

fn liminf_factor(opts: &MoscoOptions) -> f64 {
    match opts.regime {
        Regime::Mcp => 2f64.powf(opts.n.unwrap_or(1.0)),
        _ => 1.0,
    }
}

struct Cell<'a> {
    plan: &'a CorpusPlan,
    m: usize,
    n: usize,
    term: usize,
}

fn run_cell(fs: &FunctionSequence, cell: &Cell, opts: &MoscoOptions, q: Option<f64>) -> MoscoRow {
    let p = fs.p();
    let pairing_limit = plans::pairing(&cell.plan.plan, fs.limit_fn().values()).unwrap_or(f64::NAN);
    let mut row = MoscoRow {
        plan: cell.plan.id.clone(),
        m: cell.m,
        n: cell.n,
        status: CellStatus::Infeasible,
        error: None,
        pairing_limit,
        pairing: None,
        residual: None,
        duality: None,
        inflation_factor: None,
        diagnostics: None,
    };
    let mut popts = PolygonalOptions::new(cell.m, opts.regime);
    popts.k = opts.k;
    popts.n = opts.n;
    popts.steps = opts.steps;
    let seq = fs.sequence();
    let f = &fs.terms()[cell.term];
    let outcome = (|| -> Result<(CurvePlan, BuildDiagnostics, DualityRow, f64)> {
        let build = match q {
            Some(q) => build_polygonal_q(&cell.plan.plan, seq, cell.term, q, &popts)?,
            None => build_polygonal_inf(&cell.plan.plan, seq, cell.term, &opts.q_schedule, &popts)?,
        };
        let duality = match q {
            Some(q) => duality_sobolev(f, &build.plan, p, q),
            None => duality_bv(f, &build.plan),
        };
        let duality = match duality {
            Err(Error::Degenerate(_)) => static_row(f, &build.plan, p, build.diagnostics.comp_result)?,
            other => other?,
        };
        let pairing = duality.pairing;
        Ok((build.plan, build.diagnostics, duality, pairing))
    })();
    match outcome {
        Ok((_, diag, mut duality, pairing)) => {
            if !duality.holds {
                // re-evaluate with the experiment slack
                duality.holds = duality.pairing <= duality.bound + opts.tolerances.duality * (1.0 + duality.bound.abs());
            }
            row.status = CellStatus::Ok;
            row.pairing = Some(pairing);
            row.residual = Some((pairing - pairing_limit).abs());
            row.inflation_factor = diag.inflation_factor;
            row.duality = Some(duality);
            row.diagnostics = Some(diag);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// The duality row of a build without motion: both sides vanish.
fn static_row(f: &SpaceFunction, plan: &CurvePlan, p: f64, comp: f64) -> Result<DualityRow> {
    let pairing = plans::pairing(plan, f.values())?;
    let energy = energy(f, p)?;
    Ok(DualityRow {
        pairing,
        comp,
        motion: 0.0,
        energy: if p == 1.0 { energy } else { energy.powf(1.0 / p) },
        bound: 0.0,
        ratio: 0.0,
        guaranteed: slope_controls_plan(f, plan),
        holds: pairing <= DUALITY_TOL,
    })
}

fn build_checks(d: &BuildDiagnostics) -> Vec<(&'static str, bool)> {
    let mut out = vec![
        ("discarded_bound", d.discarded_bound.holds),
        ("correction", d.correction.all_hold()),
    ];
    if let Some(j) = &d.jensen {
        out.push(("jensen", j.holds));
    }
    if let Some(k) = &d.ke_bound {
        out.push(("ke_bound", k.holds));
    }
    out
}

/// Runs the Sobolev (`p > 1`) or total-variation (`p = 1`) pipeline of `fs`
/// over `corpus` along the schedule of `opts`.
pub fn mosco_experiment(fs: &FunctionSequence, corpus: &[CorpusPlan], spec: &CorpusSpec, opts: &MoscoOptions) -> Result<MoscoReport> {
    opts.tolerances.validate()?;
    if opts.schedule.is_empty() {
        return Err(Error::Malformed("the schedule is empty".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Malformed("the plan corpus is empty".into()));
    }
    let p = fs.p();
    let q = (p > 1.0).then(|| p / (p - 1.0));
    let kind = if q.is_some() {
        ExperimentKind::Sobolev
    } else {
        ExperimentKind::TotalVariation
    };
    let seq = fs.sequence();
    let convergence = lp_strong_check(fs, opts.tolerances.convergence())?;

    let mut cells = Vec::new();
    for &(m, n) in &opts.schedule {
        let term = term_index(seq, n)?;
        for plan in corpus {
            cells.push(Cell { plan, m, n, term });
        }
    }
    let rows: Vec<MoscoRow> = cells.par_iter().map(|c| run_cell(fs, c, opts, q)).collect();

    let energies = seq
        .terms()
        .iter()
        .zip(fs.terms())
        .map(|(s, f)| energy(f, p).map(|e| EnergyRow { n: resolution_of(s), energy: e }))
        .collect::<Result<Vec<_>>>()?;
    let limit = energy(fs.limit_fn(), p)?;
    let factor = liminf_factor(opts);
    let tail_min = energies[tail_start(energies.len())..]
        .iter()
        .map(|e| e.energy)
        .fold(f64::INFINITY, f64::min);
    let margin = limit - factor * tail_min;
    let liminf = LiminfMargin {
        limit,
        tail_min,
        factor,
        margin,
        tolerance: opts.tolerances.liminf,
        holds: margin <= opts.tolerances.liminf,
    };

    let tol = opts.tolerances.duality;
    let corpus_duality = corpus
        .par_iter()
        .map(|c| CorpusDualityRow {
            plan: c.id.clone(),
            kind: c.kind,
            sobolev: q.and_then(|q| duality_sobolev(fs.limit_fn(), &c.plan, p, q).ok()),
            bv: duality_bv(fs.limit_fn(), &c.plan).ok(),
        })
        .collect::<Vec<_>>();

    let mut ms: Vec<usize> = opts.schedule.iter().map(|c| c.0).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut chains = Vec::new();
    for plan in corpus {
        for &m in &ms {
            let mut ns: Vec<usize> = opts.schedule.iter().filter(|c| c.0 == m).map(|c| c.1).collect();
            ns.sort_unstable();
            ns.dedup();
            let tail_ns = &ns[tail_start(ns.len())..];
            let tail: Vec<(usize, f64, f64)> = rows
                .iter()
                .filter(|r| r.plan == plan.id && r.m == m && tail_ns.contains(&r.n))
                .filter_map(|r| Some((r.n, r.duality.as_ref()?.bound, r.residual?)))
                .collect();
            let limsup = (!tail.is_empty()).then(|| {
                let lhs = plans::pairing(&plan.plan, fs.limit_fn().values()).unwrap_or(f64::NAN);
                let rhs = tail.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max)
                    + tail.iter().map(|t| t.2).fold(0.0, f64::max);
                Inequality::le(lhs, rhs, tol)
            });
            chains.push(ChainRow {
                plan: plan.id.clone(),
                m,
                limsup,
                tail,
            });
        }
    }

    let mut residuals = Vec::new();
    for &(m, n) in &opts.schedule {
        if residuals.iter().any(|r: &ResidualRow| r.m == m && r.n == n) {
            continue;
        }
        let feasible: Vec<f64> = rows.iter().filter(|r| r.m == m && r.n == n).filter_map(|r| r.residual).collect();
        residuals.push(ResidualRow {
            m,
            n,
            max_residual: feasible.iter().copied().fold(0.0, f64::max),
            feasible: feasible.len(),
        });
    }

    let mut violations = Vec::new();
    for r in &rows {
        if let Some(d) = &r.duality {
            if d.guaranteed && !d.holds {
                violations.push(format!("duality {} M={} n={}", r.plan, r.m, r.n));
            }
        }
        if let Some(d) = &r.diagnostics {
            for (name, ok) in build_checks(d) {
                if !ok {
                    violations.push(format!("{name} {} M={} n={}", r.plan, r.m, r.n));
                }
            }
        }
    }
    for c in &corpus_duality {
        for d in [&c.sobolev, &c.bv].into_iter().flatten() {
            if d.guaranteed && !d.holds {
                violations.push(format!("corpus duality {}", c.plan));
            }
        }
    }
    for c in &chains {
        if c.limsup.is_some_and(|i| !i.holds) {
            violations.push(format!("chain {} M={}", c.plan, c.m));
        }
    }
    if !liminf.holds {
        violations.push("liminf margin".into());
    }
    let infeasible = rows.iter().filter(|r| r.status == CellStatus::Infeasible).count();
    let status = if !violations.is_empty() {
        Status::Violation
    } else if infeasible > 0 {
        Status::Infeasible
    } else {
        Status::Ok
    };

    Ok(MoscoReport {
        version: REPORT_VERSION.to_string(),
        kind,
        p,
        q,
        options: opts.clone(),
        test_family: seq.test_family().version.clone(),
        corpus: CorpusInfo {
            version: CORPUS_VERSION.to_string(),
            spec: spec.clone(),
            plans: corpus.iter().map(|c| c.id.clone()).collect(),
        },
        assumptions: vec![
            "the limit space is essentially non-branching".into(),
            "every reference measure has finite total mass".into(),
        ],
        convergence,
        energies,
        liminf,
        corpus_duality,
        summary: Summary {
            cells: rows.len(),
            infeasible,
            violations,
            status,
        },
        rows,
        chains,
        residuals,
    })
}

/// The total-variation pipeline; `fs` must carry `p = 1`.
pub fn mosco_experiment_bv(fs: &FunctionSequence, corpus: &[CorpusPlan], spec: &CorpusSpec, opts: &MoscoOptions) -> Result<MoscoReport> {
    if fs.p() != 1.0 {
        return Err(Error::ExponentDomain(fs.p(), "the total-variation pipeline needs p = 1"));
    }
    mosco_experiment(fs, corpus, spec, opts)
}

/// Builds the sequence and corpus of `config` and runs its pipeline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MoscoReport> {
    config.validate()?;
    let fs = config.function_sequence()?;
    let spec = config.corpus_spec();
    let corpus = build_corpus(fs.sequence().limit(), &spec)?;
    mosco_experiment(&fs, &corpus, &spec, &config.options())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn segment_config(spec: FunctionSpec, regime: Regime, p: f64, ns: &[usize]) -> ExperimentConfig {
        ExperimentConfig {
            sequence: SequenceSpec {
                template: GeodesicTemplate::segment(1.0).unwrap(),
                measure: MeasureSpec::Uniform,
                limit_n: 129,
            },
            function_sequence: spec,
            regime,
            p,
            k: 0.0,
            n: (regime == Regime::Mcp).then_some(1.0),
            schedule: ns.iter().map(|n| (1, *n)).collect(),
            q_schedule: vec![],
            corpus_seed: 3,
            corpus: CorpusSpec {
                anchors: 3,
                random: 2,
                ..Default::default()
            },
            tolerances: Tolerances::default(),
            steps: 4,
        }
    }

    #[test]
    fn constant_function_has_zero_margin() {
        let cfg = segment_config(FunctionSpec::Constant { value: 2.0 }, Regime::CdNonneg, 2.0, &[8, 16]);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.liminf.margin, 0.0);
        for row in &r.rows {
            assert_eq!(row.pairing, Some(0.0));
        }
        assert_eq!(r.summary.status, Status::Ok, "{:?}", r.summary);
    }

    #[test]
    fn identity_on_the_segment() {
        let cfg = segment_config(FunctionSpec::Polynomial { coeffs: vec![0.0, 1.0] }, Regime::CdNonneg, 2.0, &[8, 16, 32]);
        let r = run_experiment(&cfg).unwrap();
        assert!(r.liminf.margin.abs() <= 1e-12);
        for e in &r.energies {
            assert!((e.energy - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.summary.status, Status::Ok, "{:?}", r.summary);
        assert!(r.rows.iter().all(|row| row.duality.as_ref().unwrap().guaranteed));
    }

    #[test]
    fn mcp_scales_the_liminf() {
        let cfg = segment_config(FunctionSpec::Polynomial { coeffs: vec![0.0, 1.0] }, Regime::Mcp, 2.0, &[8, 16]);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.liminf.factor, 2.0);
        assert!(r.summary.violations.is_empty(), "{:?}", r.summary);
    }

    #[test]
    fn total_variation_pipeline() {
        let cfg = segment_config(FunctionSpec::Ramp { a: 0.25, b: 0.75 }, Regime::CdNonneg, 1.0, &[16, 32]);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.kind, ExperimentKind::TotalVariation);
        assert!(r.summary.violations.is_empty(), "{:?}", r.summary);
        for row in r.rows.iter().filter_map(|x| x.inflation_factor) {
            assert_eq!(row, 1.0);
        }
    }
}

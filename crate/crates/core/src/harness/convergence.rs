//! Functions along a sequence of spaces and their `L^p` convergence checks.

use serde::{Deserialize, Serialize};

use crate::ambient::{GeodesicTemplate, Point, SpaceSequence};
use crate::calculus::SpaceFunction;
use crate::error::{Error, Result};

/// Closed-form functions on a template, used to restrict one function to
/// every space of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// `sum_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `0` below `a`, `1` above `b`, linear in between.
    Ramp { a: f64, b: f64 },
    /// `cos` or `sin` of `2 pi k x / L` along `axis`.
    Fourier { k: u32, sine: bool, #[serde(default)] axis: u8 },
    /// `(-1)^i amplitude` at the `i`-th point of each space; the limit
    /// function is `limit` everywhere.
    Alternating { amplitude: f64, limit: f64 },
}

impl FunctionSpec {
    pub fn eval(&self, template: &GeodesicTemplate, p: Point) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * p.x + c),
            FunctionSpec::Ramp { a, b } => ((p.x - a) / (b - a)).clamp(0.0, 1.0),
            FunctionSpec::Fourier { k, sine, axis } => {
                let (c, l) = if *axis == 0 { (p.x, template.extent[0]) } else { (p.y, template.extent[1]) };
                let arg = 2.0 * std::f64::consts::PI * *k as f64 * c / l;
                if *sine {
                    arg.sin()
                } else {
                    arg.cos()
                }
            }
            FunctionSpec::Alternating { limit, .. } => *limit,
        }
    }

    fn validate(&self, template: &GeodesicTemplate) -> Result<()> {
        let ok = match self {
            FunctionSpec::Ramp { a, b } => a < b,
            FunctionSpec::Fourier { axis, .. } => (*axis as usize) < template.extent.len(),
            FunctionSpec::Polynomial { coeffs } => !coeffs.is_empty(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Malformed(format!("invalid function {self:?}")))
        }
    }

    fn on_space(&self, space: &std::sync::Arc<crate::ambient::FiniteSpace>, limit: bool) -> Result<SpaceFunction> {
        match self {
            FunctionSpec::Alternating { amplitude, .. } if !limit => {
                let v = (0..space.len()).map(|i| if i % 2 == 0 { *amplitude } else { -amplitude }).collect();
                SpaceFunction::new(space.clone(), v)
            }
            _ => {
                let tpl = space.template().clone();
                SpaceFunction::from_fn(space.clone(), |p| self.eval(&tpl, p))
            }
        }
    }
}

/// One function per term space plus the limit function, with an exponent.
#[derive(Debug, Clone)]
pub struct FunctionSequence {
    seq: SpaceSequence,
    terms: Vec<SpaceFunction>,
    limit_fn: SpaceFunction,
    p: f64,
}

impl FunctionSequence {
    pub fn new(seq: SpaceSequence, terms: Vec<SpaceFunction>, limit_fn: SpaceFunction, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::ExponentDomain(p, "p must be at least 1"));
        }
        if terms.len() != seq.len() {
            return Err(Error::Malformed(format!("{} functions for {} terms", terms.len(), seq.len())));
        }
        if terms.iter().zip(seq.terms()).any(|(f, s)| f.space() != s) || limit_fn.space() != seq.limit() {
            return Err(Error::InvalidSpace("functions must live on the spaces of the sequence".into()));
        }
        Ok(FunctionSequence {
            seq,
            terms,
            limit_fn,
            p,
        })
    }

    /// Restricts `spec` to every term and to the limit.
    pub fn from_spec(seq: SpaceSequence, spec: &FunctionSpec, p: f64) -> Result<Self> {
        spec.validate(seq.template())?;
        let terms = seq.terms().iter().map(|s| spec.on_space(s, false)).collect::<Result<Vec<_>>>()?;
        let limit_fn = spec.on_space(seq.limit(), true)?;
        Self::new(seq, terms, limit_fn, p)
    }

    pub fn sequence(&self) -> &SpaceSequence {
        &self.seq
    }

    pub fn terms(&self) -> &[SpaceFunction] {
        &self.terms
    }

    pub fn limit_fn(&self) -> &SpaceFunction {
        &self.limit_fn
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `||f_n||_{L^p(m_n)}` per term.
    pub fn norms(&self) -> Vec<f64> {
        self.terms.iter().map(|f| f.lp_norm(self.p)).collect()
    }

    /// Applies `g` to every function, keeping the exponent.
    pub fn map(&self, g: impl Fn(f64) -> f64 + Copy, p: f64) -> Self {
        FunctionSequence {
            seq: self.seq.clone(),
            terms: self.terms.iter().map(|f| f.map(g)).collect(),
            limit_fn: self.limit_fn.map(g),
            p,
        }
    }
}

/// `max_phi |sum phi f_k m_k - sum phi f_inf m_inf|` over the test family.
pub fn lp_weak_defect(fs: &FunctionSequence, k: usize) -> Result<f64> {
    let seq = &fs.seq;
    let f = fs.terms.get(k).ok_or(Error::IndexOutOfRange(k))?;
    let family = seq.test_family();
    if family.is_empty() {
        return Err(Error::EmptyTestFamily);
    }
    let tpl = seq.template();
    let integral = |g: &SpaceFunction, phi: &crate::ambient::TestFunction| -> f64 {
        let s = g.space();
        (0..s.len()).map(|i| phi.eval(tpl, s.point(i)) * g.values()[i] * s.weight(i)).sum()
    };
    Ok(family
        .functions
        .iter()
        .map(|phi| (integral(f, phi) - integral(&fs.limit_fn, phi)).abs())
        .fold(0.0, f64::max))
}

/// Thresholds of the finite-scale convergence classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTolerances {
    /// Largest weak defect allowed on the final third of the terms.
    pub weak: f64,
    /// Largest excess of the tail norms over the limit norm.
    pub norm: f64,
}

impl Default for ConvergenceTolerances {
    fn default() -> Self {
        ConvergenceTolerances { weak: 0.05, norm: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongReport {
    pub p: f64,
    /// Whether the check ran on `sigma(f) = sgn(f) sqrt|f|` in `L^2`.
    pub sigma_transformed: bool,
    pub weak_defects: Vec<f64>,
    pub norms: Vec<f64>,
    pub limit_norm: f64,
    /// `max over the tail of ||f_n|| - ||f_inf||`.
    pub norm_excess: f64,
    pub tolerances: ConvergenceTolerances,
    pub weak: bool,
    pub strong: bool,
}

/// Index of the first term of the final third of `len` terms.
pub fn tail_start(len: usize) -> usize {
    len - len.div_ceil(3)
}

/// Weak defects and the norm limsup margin. For `p = 1` the check runs on
/// `sigma(f_n)` in `L^2`.
pub fn lp_strong_check(fs: &FunctionSequence, tol: ConvergenceTolerances) -> Result<StrongReport> {
    if fs.p == 1.0 {
        let sigma = fs.map(|z| z.signum() * z.abs().sqrt(), 2.0);
        let mut r = lp_strong_check(&sigma, tol)?;
        r.sigma_transformed = true;
        r.p = 1.0;
        return Ok(r);
    }
    if fs.seq.is_empty() {
        return Err(Error::Malformed("the sequence has no terms".into()));
    }
    let weak_defects = (0..fs.terms.len()).map(|k| lp_weak_defect(fs, k)).collect::<Result<Vec<_>>>()?;
    let norms = fs.norms();
    let limit_norm = fs.limit_fn.lp_norm(fs.p);
    let start = tail_start(norms.len());
    let norm_excess = norms[start..].iter().map(|n| n - limit_norm).fold(f64::NEG_INFINITY, f64::max);
    let weak = weak_defects[start..].iter().all(|d| *d <= tol.weak);
    Ok(StrongReport {
        p: fs.p,
        sigma_transformed: false,
        strong: weak && norm_excess <= tol.norm,
        weak,
        weak_defects,
        norms,
        limit_norm,
        norm_excess,
        tolerances: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub residuals: Vec<f64>,
    /// Least-squares slope of `log residual` against `log n`; absent when
    /// fewer than two residuals are positive.
    pub log_slope: Option<f64>,
    pub nonincreasing: bool,
}

/// `|sum f_k g_k m_k - sum f g m_inf|` per term.
pub fn coupling_limit_check(fs: &FunctionSequence, gs: &FunctionSequence) -> Result<CouplingReport> {
    if (1.0 / fs.p + 1.0 / gs.p - 1.0).abs() > 1e-12 {
        return Err(Error::ExponentDomain(gs.p, "the exponents must be conjugate"));
    }
    if fs.terms.len() != gs.terms.len() {
        return Err(Error::Malformed("sequences of different lengths".into()));
    }
    let inner = |f: &SpaceFunction, g: &SpaceFunction| -> Result<f64> {
        let prod = f.product(g)?;
        Ok(prod.values().iter().zip(prod.space().weights()).map(|(v, w)| v * w).sum())
    };
    let target = inner(&fs.limit_fn, &gs.limit_fn)?;
    let residuals = fs
        .terms
        .iter()
        .zip(&gs.terms)
        .map(|(f, g)| inner(f, g).map(|v| (v - target).abs()))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .zip(fs.seq.terms())
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, s)| ((s.len() as f64).ln(), r.ln()))
        .collect();
    let log_slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    });
    Ok(CouplingReport {
        nonincreasing: residuals.windows(2).all(|w| w[1] <= w[0] + 1e-15),
        residuals,
        log_slope,
    })
}

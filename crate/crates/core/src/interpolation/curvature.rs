//! Distortion coefficients, compression certificates, entropy functionals
//! and checkers for the entropy convexity and measure contraction
//! inequalities along concrete plans.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambient::{Density, FiniteSpace};
use crate::error::{Error, Result};
use crate::plans::{CurvePlan, DiscreteCurve};
use crate::transport::optimal_coupling_q;

/// Default tolerance of the inequality checkers.
pub const CHECK_TOL: f64 = 1e-9;

/// Value of the distortion coefficient together with the branch used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub value: f64,
    /// Set when `N = 1` was evaluated with the flat branch.
    pub flat_convention: bool,
}

/// The distortion coefficient `tau_{K,N}^{(t)}(theta)`; `+inf` on the
/// supercritical positive-curvature branch. For `N = 1` the flat branch
/// `tau = t` is used and flagged.
pub fn tau(k: f64, n: f64, t: f64, theta: f64) -> Result<Tau> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Malformed(format!("distance argument {theta} must be finite and nonnegative")));
    }
    if !(n >= 1.0) {
        return Err(Error::ExponentDomain(n, "N must be at least 1"));
    }
    if n == 1.0 {
        return Ok(Tau { value: t, flat_convention: true });
    }
    let flat = Tau { value: t, flat_convention: false };
    if k == 0.0 || theta == 0.0 || t == 0.0 || t == 1.0 {
        return Ok(flat);
    }
    let value = if k > 0.0 {
        if k * theta * theta > (n - 1.0) * std::f64::consts::PI.powi(2) {
            f64::INFINITY
        } else {
            let c = (k / (n - 1.0)).sqrt();
            let ratio = (t * theta * c).sin() / (theta * c).sin();
            t.powf(1.0 / n) * ratio.powf((n - 1.0) / n)
        }
    } else {
        let c = (-k / (n - 1.0)).sqrt();
        let ratio = (t * theta * c).sinh() / (theta * c).sinh();
        t.powf(1.0 / n) * ratio.powf((n - 1.0) / n)
    };
    Ok(Tau { value, flat_convention: false })
}

/// `C_{K,N}[r]` evaluated at `K^-`.
///
/// For negative curvature `t / tau^{(t)}(theta)` decreases in `t` and
/// increases in `theta`, so the double supremum is the `t -> 0` limit at
/// `theta = r`: `C = (sinh(r c) / (r c))^(N-1)` with `c = sqrt(-K / (N-1))`.
pub fn c_kn(k: f64, n: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Malformed(format!("radius {r} must be positive")));
    }
    if !(n >= 1.0) {
        return Err(Error::ExponentDomain(n, "N must be at least 1"));
    }
    let kminus = (-k).max(0.0);
    if kminus == 0.0 || n == 1.0 {
        return Ok(1.0);
    }
    let x = r * (kminus / (n - 1.0)).sqrt();
    // sinh(x)/x without cancellation for small x
    let shc = if x < 1e-4 { 1.0 + x * x / 6.0 } else { x.sinh() / x };
    Ok(shc.powf(n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    CdInfty,
    Mcp,
}

/// A closed-form compression bound for interpolating plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionBound {
    pub kind: BoundKind,
    #[serde(rename = "K")]
    pub k: f64,
    /// `None` stands for `N = inf`.
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub scale: f64,
    pub base: f64,
    pub value: f64,
}

impl CompressionBound {
    /// `exp(K^- / 12 * scale^2) * base`.
    pub fn cd_infty(k: f64, scale: f64, base: f64) -> Self {
        let kminus = (-k).max(0.0);
        CompressionBound {
            kind: BoundKind::CdInfty,
            k,
            n: None,
            scale,
            base,
            value: (kminus / 12.0 * scale * scale).exp() * base,
        }
    }

    /// `2^N * C_{K^-,N}[scale] * base`.
    pub fn mcp(k: f64, n: f64, scale: f64, base: f64) -> Result<Self> {
        let c = if scale > 0.0 { c_kn(k, n, scale)? } else { 1.0 };
        Ok(CompressionBound {
            kind: BoundKind::Mcp,
            k,
            n: Some(n),
            scale,
            base,
            value: 2f64.powf(n) * c * base,
        })
    }

    /// The multiplicative factor in front of `base`.
    pub fn factor(&self) -> f64 {
        if self.base == 0.0 {
            1.0
        } else {
            self.value / self.base
        }
    }
}

/// `sum rho log rho * m` with `0 log 0 = 0`.
pub fn entropy(mu: &Density) -> f64 {
    mu.values()
        .iter()
        .zip(mu.space().weights())
        .filter(|(r, w)| **r > 0.0 && **w > 0.0)
        .map(|(r, w)| r * r.ln() * w)
        .sum()
}

/// `sum rho^(1 - 1/N) * m` over the support of `rho`.
pub fn renyi(mu: &Density, n: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::ExponentDomain(n, "N must be at least 1"));
    }
    let e = 1.0 - 1.0 / n;
    Ok(mu
        .values()
        .iter()
        .zip(mu.space().weights())
        .filter(|(r, w)| **r > 0.0 && **w > 0.0)
        .map(|(r, w)| r.powf(e) * w)
        .sum())
}

fn snapped_density(plan: &CurvePlan, t: f64) -> Result<(Density, f64)> {
    let (m, r) = plan.marginal(t);
    let d = Density::from_masses(plan.space().clone(), &m)
        .map_err(|_| Error::InvalidDensity(format!("marginal at t = {t} charges a point of zero weight")))?;
    Ok((d, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`; positive values beyond the tolerance are violations.
    pub residual: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdReport {
    #[serde(rename = "K")]
    pub k: f64,
    pub q: f64,
    pub ent0: f64,
    pub ent1: f64,
    pub wq: f64,
    pub rows: Vec<InequalityRow>,
    pub snap_radius: f64,
    pub tolerance: f64,
    pub violations: usize,
}

/// Evaluates `Ent(mu_t) <= (1-t) Ent(mu_0) + t Ent(mu_1) - K/2 t(1-t) W_q^2`
/// on the snapped marginals of `plan`.
pub fn check_cd_convexity(plan: &CurvePlan, k: f64, q: f64, t_samples: &[f64]) -> Result<CdReport> {
    let (d0, _) = snapped_density(plan, 0.0)?;
    let (d1, _) = snapped_density(plan, 1.0)?;
    let wq = optimal_coupling_q(&d0, &d1, q)?.value;
    let (e0, e1) = (entropy(&d0), entropy(&d1));
    let mut rows = Vec::with_capacity(t_samples.len());
    let mut radius: f64 = 0.0;
    for &t in t_samples {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        let (dt, r) = snapped_density(plan, t)?;
        radius = radius.max(r);
        let lhs = entropy(&dt);
        let rhs = (1.0 - t) * e0 + t * e1 - k / 2.0 * t * (1.0 - t) * wq * wq;
        let residual = lhs - rhs;
        rows.push(InequalityRow {
            t,
            lhs,
            rhs,
            residual,
            violated: residual > CHECK_TOL,
        });
    }
    Ok(CdReport {
        k,
        q,
        ent0: e0,
        ent1: e1,
        wq,
        violations: rows.iter().filter(|r| r.violated).count(),
        rows,
        snap_radius: radius,
        tolerance: CHECK_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpReport {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub center: usize,
    /// Set when `mu0` is the Dirac mass at the center.
    pub degenerate: bool,
    pub flat_convention: bool,
    pub rows: Vec<InequalityRow>,
    pub snap_radius: f64,
    pub tolerance: f64,
    pub violations: usize,
}

/// The contraction plan of `mu0` toward the point `o` along geodesics.
pub fn contraction_plan(space: &Arc<FiniteSpace>, mu0: &Density, o: usize, steps: usize) -> Result<CurvePlan> {
    let masses = mu0.masses();
    let tpl = space.template();
    let mut curves = Vec::new();
    let mut ms = Vec::new();
    for (i, m) in masses.iter().enumerate() {
        if *m > 0.0 {
            curves.push(DiscreteCurve::geodesic(tpl, space.point(i), space.point(o), steps));
            ms.push(*m);
        }
    }
    CurvePlan::normalized(space.clone(), curves, ms)
}

/// Evaluates the contraction inequality with the negative Rényi functional
/// `U_N = -sum rho^(1-1/N) m`: the reported residual is
/// `sum tau^{(1-t)}(d(x,o)) rho_0^(1-1/N) m - sum rho_t^(1-1/N) m`.
pub fn check_mcp_inequality(
    space: &Arc<FiniteSpace>,
    mu0: &Density,
    o: usize,
    k: f64,
    n: f64,
    t_samples: &[f64],
) -> Result<McpReport> {
    if o >= space.len() {
        return Err(Error::IndexOutOfRange(o));
    }
    if space.weight(o) <= 0.0 {
        return Err(Error::Hypothesis("the center must carry reference mass".into()));
    }
    let degenerate = mu0.support() == vec![o];
    let mut report = McpReport {
        k,
        n,
        center: o,
        degenerate,
        flat_convention: n == 1.0,
        rows: Vec::new(),
        snap_radius: 0.0,
        tolerance: CHECK_TOL,
        violations: 0,
    };
    if degenerate {
        return Ok(report);
    }
    let plan = contraction_plan(space, mu0, o, 64)?;
    let e = 1.0 - 1.0 / n;
    for &t in t_samples {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        let mut rhs = 0.0;
        for (i, (r, w)) in mu0.values().iter().zip(space.weights()).enumerate() {
            if *r > 0.0 && *w > 0.0 {
                rhs += tau(k, n, 1.0 - t, space.d(i, o))?.value * r.powf(e) * w;
            }
        }
        let (dt, radius) = snapped_density(&plan, t)?;
        report.snap_radius = report.snap_radius.max(radius);
        let lhs = renyi(&dt, n)?;
        let residual = rhs - lhs;
        report.rows.push(InequalityRow {
            t,
            lhs: -lhs,
            rhs: -rhs,
            residual,
            violated: residual > CHECK_TOL,
        });
    }
    report.violations = report.rows.iter().filter(|r| r.violated).count();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{discretize, GeodesicTemplate};
    use approx::assert_abs_diff_eq;

    #[test]
    fn tau_examples() {
        assert_eq!(tau(0.0, 3.0, 0.3, 5.0).unwrap().value, 0.3);
        let v = tau(-1.0, 2.0, 0.5, 1.0).unwrap().value;
        let want = 0.5f64.sqrt() * (0.5f64.sinh() / 1f64.sinh()).sqrt();
        assert_abs_diff_eq!(v, want, epsilon = 1e-15);
        assert!((v - 0.47086).abs() < 1e-5);
        let th = std::f64::consts::PI * 1.01;
        assert_eq!(tau(1.0, 2.0, 0.5, th).unwrap().value, f64::INFINITY);
        let one = tau(-3.0, 1.0, 0.4, 2.0).unwrap();
        assert!(one.flat_convention);
        assert_eq!(one.value, 0.4);
        assert!(tau(0.0, 2.0, 1.5, 1.0).is_err());
        assert!(tau(0.0, 2.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn tau_positive_branch_is_below_t() {
        // positive curvature shrinks, negative curvature expands
        for t in [0.1, 0.5, 0.9] {
            assert!(tau(1.0, 3.0, t, 1.0).unwrap().value > t);
            assert!(tau(-1.0, 3.0, t, 1.0).unwrap().value < t);
        }
    }

    #[test]
    fn c_kn_examples() {
        assert_eq!(c_kn(0.0, 4.0, 10.0).unwrap(), 1.0);
        assert_eq!(c_kn(2.0, 4.0, 10.0).unwrap(), 1.0);
        let v = c_kn(-1.0, 2.0, 0.1).unwrap();
        assert!(v > 1.0 && v < 1.02);
        assert_abs_diff_eq!(v, 0.1f64.sinh() / 0.1, epsilon = 1e-15);
        for k in [-1.0, -4.0] {
            for n in [2.0, 5.0] {
                assert!(c_kn(k, n, 1e-4).unwrap() <= 1.0 + 1e-3);
            }
        }
    }

    #[test]
    fn bounds() {
        let b = CompressionBound::cd_infty(0.0, 3.0, 2.5);
        assert_eq!(b.value, 2.5);
        let b = CompressionBound::mcp(0.0, 1.0, 0.7, 1.5).unwrap();
        assert_eq!(b.value, 3.0);
    }

    #[test]
    fn entropy_examples() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 2, &|_| 1.0).unwrap());
        let u = Density::uniform(sp.clone());
        assert_abs_diff_eq!(entropy(&u), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(renyi(&u, 3.0).unwrap(), 1.0, epsilon = 1e-15);
        let c = Density::new(sp, vec![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(entropy(&c), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn cd_checker_on_constant_plan() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 8, &|_| 1.0).unwrap());
        let plan = CurvePlan::stationary(sp, &[1.0, 2.0, 3.0, 1.0, 1.0, 0.5, 0.5, 1.0]).unwrap();
        let r = check_cd_convexity(&plan, -1.0, 2.0, &[0.25, 0.5, 0.75]).unwrap();
        for row in &r.rows {
            assert_abs_diff_eq!(row.residual, 0.0, epsilon = 1e-12);
        }
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn mcp_checker_endpoint_and_degenerate() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 16, &|_| 1.0).unwrap());
        let mu0 = Density::uniform(sp.clone());
        let r = check_mcp_inequality(&sp, &mu0, 0, 0.0, 2.0, &[0.0]).unwrap();
        assert_abs_diff_eq!(r.rows[0].residual, 0.0, epsilon = 1e-12);
        let dirac = Density::dirac(sp.clone(), 3).unwrap();
        let r = check_mcp_inequality(&sp, &dirac, 3, 0.0, 2.0, &[0.5]).unwrap();
        assert!(r.degenerate && r.rows.is_empty());
    }
}

//! Chebyshev gates on lifted legs and the submarginal correction that removes
//! the gated-out curves while keeping consecutive legs compatible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plans::CurvePlan;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// One flag per curve of the leg: `true` when the curve is kept.
    pub keep: Vec<bool>,
    /// The threshold on `d(gamma_0, gamma_1)^q`.
    pub threshold: f64,
    pub discarded: f64,
    /// The Chebyshev bound `W_q^((q+1)/2)`.
    pub bound: f64,
    pub within_bound: bool,
}

/// Keeps the curves with `d(gamma_0, gamma_1)^q <= W_q^((q-1)/2)`.
pub fn chebyshev_gate(leg: &CurvePlan, q: f64, wq: f64) -> Result<Gate> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::ExponentDomain(q, "q must lie in (1, inf)"));
    }
    if !(wq >= 0.0 && wq.is_finite()) {
        return Err(Error::Malformed(format!("transport value {wq} must be finite and nonnegative")));
    }
    let threshold = wq.powf((q - 1.0) / 2.0);
    let tpl = leg.template();
    let keep: Vec<bool> = leg
        .curves()
        .iter()
        .map(|c| tpl.dist(c.first(), c.last()).powf(q) <= threshold * (1.0 + 1e-12) + 1e-300)
        .collect();
    let discarded: f64 = leg
        .masses()
        .iter()
        .zip(&keep)
        .filter(|(_, k)| !**k)
        .map(|(m, _)| m)
        .sum::<f64>()
        + 0.0;
    let bound = wq.powf((q + 1.0) / 2.0);
    Ok(Gate {
        keep,
        threshold,
        discarded,
        bound,
        within_bound: discarded <= bound + 1e-12,
    })
}

/// A curve of a leg seen through its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct LegCurve<S> {
    pub start: usize,
    pub end: usize,
    pub mass: S,
    pub keep: bool,
    /// Kinetic cost of the curve, used for the energy check.
    pub ke: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionChecks {
    /// Total discarded mass of the input legs.
    pub discarded: f64,
    /// Total mass left before the final renormalization.
    pub retained: f64,
    /// Gated-out curves carry no mass.
    pub gates_respected: bool,
    /// `||rho_i||_inf <= ||rho~_i||_inf / (1 - discarded)` for every `i`.
    pub sup_norm_ok: bool,
    /// `||rho~_i - rho_i||_1 <= 2 discarded` for every `i`.
    pub l1_ok: bool,
    /// `Ke(eta_i) <= Ke(eta~_i) / (1 - discarded)` for every leg.
    pub energy_ok: bool,
    pub sup_norms: Vec<(f64, f64)>,
    pub l1_distances: Vec<f64>,
    pub energies: Vec<(f64, f64)>,
}

impl CorrectionChecks {
    pub fn all_hold(&self) -> bool {
        self.gates_respected && self.sup_norm_ok && self.l1_ok && self.energy_ok
    }
}

#[derive(Debug, Clone)]
pub struct Correction<S> {
    /// Corrected point masses `rho_i m`, `i = 0..=M`.
    pub marginals: Vec<Vec<S>>,
    /// Corrected curve masses per leg.
    pub legs: Vec<Vec<S>>,
    pub checks: CorrectionChecks,
}

fn pushforward<S: Scalar>(n: usize, leg: &[LegCurve<S>], masses: &[S], end: bool) -> Vec<S> {
    let mut out = vec![S::zero(); n];
    for (c, m) in leg.iter().zip(masses) {
        let x = if end { c.end } else { c.start };
        out[x] = out[x].clone() + m.clone();
    }
    out
}

fn max_diff<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).abs_val())
        .fold(S::zero(), |acc, d| if d > acc { d } else { acc })
}

fn sup_norm<S: Scalar>(masses: &[S], weights: &[S]) -> S {
    masses
        .iter()
        .zip(weights)
        .filter(|(m, _)| **m > S::zero())
        .map(|(m, w)| m.clone() / w.clone())
        .fold(S::zero(), |acc, d| if d > acc { d } else { acc })
}

/// Runs the `M`-step mass-cutting induction: step `j` zeroes the gated-out
/// curves of leg `j - 1`, pushes the change forward along legs `j, j+1, ...`
/// by reweighting with the ratio of new to old starting masses, and pulls it
/// backward along legs `j-2, ..., 0` with the ratio of ending masses. The
/// result is renormalized once at the end.
///
/// `weights` are the reference masses of the points, `marginals[i]` the
/// point masses of `rho~_i m` and `legs[i]` the curves of the leg from time
/// `i` to `i + 1`.
pub fn submarginal_correction<S: Scalar>(
    weights: &[S],
    marginals: &[Vec<S>],
    legs: &[Vec<LegCurve<S>>],
) -> Result<Correction<S>> {
    let m = legs.len();
    let n = weights.len();
    if m == 0 || marginals.len() != m + 1 || marginals.iter().any(|v| v.len() != n) {
        return Err(Error::InvalidPlan("need M legs, M + 1 marginals and one weight per point".into()));
    }
    if legs.iter().flatten().any(|c| c.start >= n || c.end >= n) {
        return Err(Error::InvalidPlan("curve endpoint outside the space".into()));
    }
    let tol = S::eps() * S::from_ratio(100_000, 1);
    let input: Vec<Vec<S>> = legs.iter().map(|l| l.iter().map(|c| c.mass.clone()).collect()).collect();
    for (i, leg) in legs.iter().enumerate() {
        let start = pushforward(n, leg, &input[i], false);
        let end = pushforward(n, leg, &input[i], true);
        for (k, side) in [(i, start), (i + 1, end)] {
            let d = max_diff(&side, &marginals[k]);
            if d > tol {
                return Err(Error::MarginalMismatch {
                    leg: i,
                    discrepancy: d.to_f64(),
                });
            }
        }
    }
    let discarded = legs
        .iter()
        .flatten()
        .filter(|c| !c.keep)
        .fold(S::zero(), |acc, c| acc + c.mass.clone());
    let half = S::from_ratio(1, 2);
    if discarded > half {
        return Err(Error::Hypothesis(format!(
            "discarded mass {} exceeds 1/2",
            discarded.to_f64()
        )));
    }

    let mut w = input.clone();
    let mut nu: Vec<Vec<S>> = marginals.to_vec();
    for j in 1..=m {
        let old = nu.clone();
        for (c, x) in legs[j - 1].iter().zip(w[j - 1].iter_mut()) {
            if !c.keep {
                *x = S::zero();
            }
        }
        nu[j - 1] = pushforward(n, &legs[j - 1], &w[j - 1], false);
        nu[j] = pushforward(n, &legs[j - 1], &w[j - 1], true);
        for i in j..m {
            for (c, x) in legs[i].iter().zip(w[i].iter_mut()) {
                let o = &old[i][c.start];
                *x = if *o > S::zero() {
                    x.clone() * nu[i][c.start].clone() / o.clone()
                } else {
                    S::zero()
                };
            }
            nu[i + 1] = pushforward(n, &legs[i], &w[i], true);
        }
        for i in (0..j.saturating_sub(1)).rev() {
            for (c, x) in legs[i].iter().zip(w[i].iter_mut()) {
                let o = &old[i + 1][c.end];
                *x = if *o > S::zero() {
                    x.clone() * nu[i + 1][c.end].clone() / o.clone()
                } else {
                    S::zero()
                };
            }
            nu[i] = pushforward(n, &legs[i], &w[i], false);
        }
    }

    let retained = nu[0].iter().fold(S::zero(), |a, b| a + b.clone());
    if retained <= S::zero() {
        return Err(Error::ZeroMass("the correction removed every curve".into()));
    }
    for v in nu.iter_mut().chain(w.iter_mut()) {
        for x in v.iter_mut() {
            *x = x.clone() / retained.clone();
        }
    }

    let one_minus = S::one() - discarded.clone();
    let gates_respected = legs
        .iter()
        .zip(&w)
        .all(|(l, ws)| l.iter().zip(ws).all(|(c, x)| c.keep || x.is_negligible()));
    let mut sup_norms = Vec::new();
    let mut sup_norm_ok = true;
    let mut l1_distances = Vec::new();
    let mut l1_ok = true;
    let two_disc = discarded.clone() + discarded.clone();
    for (orig, new) in marginals.iter().zip(&nu) {
        let (so, sn) = (sup_norm(orig, weights), sup_norm(new, weights));
        sup_norm_ok &= sn.clone() * one_minus.clone() <= so.clone() + tol.clone();
        sup_norms.push((sn.to_f64(), so.to_f64()));
        let l1 = orig
            .iter()
            .zip(new)
            .fold(S::zero(), |a, (x, y)| a + (x.clone() - y.clone()).abs_val());
        l1_ok &= l1 <= two_disc.clone() + tol.clone();
        l1_distances.push(l1.to_f64());
    }
    let mut energies = Vec::new();
    let mut energy_ok = true;
    for ((leg, orig), new) in legs.iter().zip(&input).zip(&w) {
        let ke = |ms: &[S]| {
            leg.iter()
                .zip(ms)
                .fold(S::zero(), |a, (c, x)| a + c.ke.clone() * x.clone())
        };
        let (eo, en) = (ke(orig), ke(new));
        energy_ok &= en.clone() * one_minus.clone() <= eo.clone() + tol.clone();
        energies.push((en.to_f64(), eo.to_f64()));
    }
    Ok(Correction {
        marginals: nu,
        legs: w,
        checks: CorrectionChecks {
            discarded: discarded.to_f64(),
            retained: retained.to_f64(),
            gates_respected,
            sup_norm_ok,
            l1_ok,
            energy_ok,
            sup_norms,
            l1_distances,
            energies,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;

    fn lc(start: usize, end: usize, mass: BigRational, keep: bool) -> LegCurve<BigRational> {
        LegCurve {
            start,
            end,
            mass,
            keep,
            ke: rat(1, 1),
        }
    }

    #[test]
    fn full_gates_are_identity() {
        let weights = vec![rat(1, 2), rat(1, 2)];
        let marg = vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]];
        let legs = vec![vec![lc(0, 1, rat(1, 2), true), lc(1, 0, rat(1, 2), true)]];
        let c = submarginal_correction(&weights, &marg, &legs).unwrap();
        assert_eq!(c.marginals, marg);
        assert_eq!(c.legs[0], vec![rat(1, 2), rat(1, 2)]);
        assert!(c.checks.all_hold());
    }

    #[test]
    fn single_leg_killed_curve() {
        let weights = vec![rat(1, 2), rat(1, 2)];
        let marg = vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]];
        let legs = vec![vec![lc(0, 1, rat(1, 2), false), lc(1, 0, rat(1, 2), true)]];
        let c = submarginal_correction(&weights, &marg, &legs).unwrap();
        assert_eq!(c.legs[0], vec![rat(0, 1), rat(1, 1)]);
        assert_eq!(c.checks.l1_distances[0], 1.0);
        assert!(c.checks.all_hold());
    }

    #[test]
    fn rejects_too_much_discarded_mass() {
        let weights = vec![rat(1, 1)];
        let marg = vec![vec![rat(1, 1)], vec![rat(1, 1)]];
        let legs = vec![vec![lc(0, 0, rat(1, 4), true), lc(0, 0, rat(3, 4), false)]];
        assert!(matches!(
            submarginal_correction(&weights, &marg, &legs),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn rejects_incompatible_legs() {
        let weights = vec![rat(1, 2), rat(1, 2)];
        let marg = vec![
            vec![rat(1, 1), rat(0, 1)],
            vec![rat(0, 1), rat(1, 1)],
            vec![rat(0, 1), rat(1, 1)],
        ];
        let legs = vec![vec![lc(0, 1, rat(1, 1), true)], vec![lc(0, 1, rat(1, 1), true)]];
        assert!(matches!(
            submarginal_correction(&weights, &marg, &legs),
            Err(Error::MarginalMismatch { leg: 1, .. })
        ));
    }
}

//! Transfer of a chain of densities from the limit space to a term space
//! with control of consecutive `W_inf` distances.
//!
//! Both reference measures are restricted to an enlarged ball and
//! normalized. A `W_2`-optimal coupling `alpha` of the two references then
//! moves the mass of each density along its near-diagonal part
//! `E = {d <= eps_n}`, `eps_n = sqrt(W_2)`. Before that, a mass-cutting
//! induction removes from every density the mass that `alpha` would move
//! farther than `eps_n`, while keeping `W_inf`-optimal couplings between
//! neighbors admissible. The removed mass `c_n` is spread uniformly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::approx::Ball;
use crate::ambient::{Density, FiniteSpace};
use crate::error::{Error, Result};
use crate::transport::{optimal_coupling_q, winf, CrossDistance};

const CHECK_TOL: f64 = 1e-9;

/// Candidate enlargements are `k / ENLARGEMENT_STEPS`.
const ENLARGEMENT_STEPS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinfTransferReport {
    /// Relative enlargement of the ball used for the restriction.
    pub enlargement: f64,
    pub w2_reference: f64,
    pub eps_n: f64,
    /// Mass spread uniformly after the cutting induction.
    pub residual_mass: f64,
    /// `eps_n^2 * sum_i ||rho_i||_inf` in the restricted frame.
    pub residual_bound: f64,
    /// Per density: sup-norm after transfer and `||rho_i||_inf + c_n`, in the
    /// restricted frame.
    pub sup_norms: Vec<(f64, f64)>,
    /// Per leg: `W_inf` after transfer and `W_inf` on the limit plus `2 eps_n`.
    pub winf: Vec<(f64, f64)>,
    pub residual_ok: bool,
    pub sup_ok: bool,
    pub winf_ok: bool,
}

#[derive(Debug, Clone)]
pub struct WinfTransfer {
    pub densities: Vec<Density>,
    pub report: WinfTransferReport,
}

fn restrict(space: &FiniteSpace, ball: &Ball, radius: f64) -> Vec<f64> {
    let tpl = space.template();
    let mut w: Vec<f64> = (0..space.len())
        .map(|i| {
            if tpl.dist(space.point(i), ball.center) <= radius {
                space.weight(i)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn pick_enlargement(a: &FiniteSpace, b: &FiniteSpace, ball: &Ball) -> Result<f64> {
    let tpl = a.template();
    // a prime denominator keeps the radii off grids commensurate with the ball
    for k in 1..ENLARGEMENT_STEPS {
        let eps = k as f64 / ENLARGEMENT_STEPS as f64;
        let r = (1.0 + eps) * ball.radius;
        let on_boundary = [a, b].iter().any(|s| {
            (0..s.len()).any(|i| s.weight(i) > 0.0 && (tpl.dist(s.point(i), ball.center) - r).abs() <= 1e-12 * r.max(1.0))
        });
        if !on_boundary {
            return Ok(eps);
        }
    }
    Err(Error::Degenerate("every enlarged ball boundary carries mass".into()))
}

/// Transfers `rhos` (densities on the limit space, supported in `ball`) to
/// `target`.
pub fn winf_marginal_transfer(rhos: &[Density], target: &Arc<FiniteSpace>, ball: &Ball) -> Result<WinfTransfer> {
    if rhos.len() < 2 {
        return Err(Error::InvalidPlan("need at least two densities".into()));
    }
    let limit = rhos[0].space().clone();
    if rhos.iter().any(|r| r.space() != &limit) {
        return Err(Error::InvalidPlan("densities must share the limit space".into()));
    }
    let tpl = limit.template();
    for r in rhos {
        for i in r.support() {
            if !ball.contains(tpl, limit.point(i)) {
                return Err(Error::Hypothesis("density support leaves the ball".into()));
            }
        }
    }
    let (nl, nt) = (limit.len(), target.len());
    let enlargement = pick_enlargement(&limit, target, ball)?;
    let radius = (1.0 + enlargement) * ball.radius;
    let ml = restrict(&limit, ball, radius);
    let mt = restrict(target, ball, radius);
    if mt.iter().any(|x| !x.is_finite()) {
        return Err(Error::ZeroMass("the target has no mass in the enlarged ball".into()));
    }

    let ref_l = Density::from_masses(limit.clone(), &ml)?;
    let ref_t = Density::from_masses(target.clone(), &mt)?;
    let alpha = optimal_coupling_q(&ref_l, &ref_t, 2.0)?;
    let w2 = alpha.value;
    let eps_n = w2.sqrt();
    let cross = CrossDistance::new(&limit, target);
    let near = |x: usize, y: usize| cross.get(x, y) <= eps_n * (1.0 + 1e-12) + 1e-15;
    let a = alpha.coupling.matrix();
    // alpha restricted to E, and the fraction alpha_x(E) of each row
    let mut a_e = vec![0.0; nl * nt];
    let mut frac = vec![0.0; nl];
    for x in 0..nl {
        let mut s = 0.0;
        for y in 0..nt {
            if a[x * nt + y] > 0.0 && near(x, y) {
                a_e[x * nt + y] = a[x * nt + y];
                s += a[x * nt + y];
            }
        }
        frac[x] = if ml[x] > 0.0 { (s / ml[x]).min(1.0) } else { 0.0 };
    }

    let m = rhos.len() - 1;
    let mut nu: Vec<Vec<f64>> = rhos.iter().map(|r| r.masses()).collect();
    let mut eta: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut winf_limit = Vec::with_capacity(m);
    for i in 0..m {
        let r = winf(&rhos[i], &rhos[i + 1])?;
        winf_limit.push(r.value);
        eta.push(r.coupling.matrix().to_vec());
    }
    let row_sums = |e: &[f64]| (0..nl).map(|x| e[x * nl..(x + 1) * nl].iter().sum()).collect::<Vec<f64>>();
    let col_sums = |e: &[f64]| (0..nl).map(|y| (0..nl).map(|x| e[x * nl + y]).sum()).collect::<Vec<f64>>();
    for k in 1..=m + 1 {
        let old = nu.clone();
        let c = k - 1;
        for x in 0..nl {
            nu[c][x] *= frac[x];
        }
        for i in c..m {
            for x in 0..nl {
                let f = if old[i][x] > 0.0 { nu[i][x] / old[i][x] } else { 0.0 };
                eta[i][x * nl..(x + 1) * nl].iter_mut().for_each(|v| *v *= f);
            }
            nu[i + 1] = col_sums(&eta[i]);
        }
        for i in (0..c).rev() {
            for y in 0..nl {
                let f = if old[i + 1][y] > 0.0 { nu[i + 1][y] / old[i + 1][y] } else { 0.0 };
                for x in 0..nl {
                    eta[i][x * nl + y] *= f;
                }
            }
            nu[i] = row_sums(&eta[i]);
        }
    }
    let kept: f64 = nu[0].iter().sum();
    if kept <= 0.0 {
        return Err(Error::ZeroMass("the near-diagonal set retains no mass; eps_n is below the pitch".into()));
    }
    let c_n = (1.0 - kept).max(0.0);

    let mut densities = Vec::with_capacity(m + 1);
    let mut transferred = Vec::with_capacity(m + 1);
    let mut sup_norms = Vec::with_capacity(m + 1);
    let sup_prime = |masses: &[f64], refm: &[f64]| {
        masses
            .iter()
            .zip(refm)
            .filter(|(v, _)| **v > 0.0)
            .map(|(v, w)| v / w)
            .fold(0.0, f64::max)
    };
    let mut sum_sup = 0.0;
    for (i, r) in rhos.iter().enumerate() {
        let mut out: Vec<f64> = mt.iter().map(|w| c_n * w).collect();
        for x in 0..nl {
            if nu[i][x] <= 0.0 {
                continue;
            }
            let scale = nu[i][x] / (frac[x] * ml[x]);
            for y in 0..nt {
                out[y] += scale * a_e[x * nt + y];
            }
        }
        let s_in = sup_prime(&r.masses(), &ml);
        sum_sup += s_in;
        sup_norms.push((sup_prime(&out, &mt), s_in + c_n));
        densities.push(Density::from_masses(target.clone(), &out)?.normalized()?);
        transferred.push(out);
    }
    let mut winf_rows = Vec::with_capacity(m);
    for i in 0..m {
        let v = winf(&densities[i], &densities[i + 1])?.value;
        winf_rows.push((v, winf_limit[i] + 2.0 * eps_n));
    }
    let residual_bound = eps_n * eps_n * sum_sup;
    let report = WinfTransferReport {
        enlargement,
        w2_reference: w2,
        eps_n,
        residual_mass: c_n,
        residual_bound,
        residual_ok: c_n <= residual_bound + CHECK_TOL,
        sup_ok: sup_norms.iter().all(|(a, b)| *a <= b * (1.0 + CHECK_TOL) + CHECK_TOL),
        winf_ok: winf_rows.iter().all(|(a, b)| *a <= b + CHECK_TOL),
        sup_norms,
        winf: winf_rows,
    };
    Ok(WinfTransfer { densities, report })
}

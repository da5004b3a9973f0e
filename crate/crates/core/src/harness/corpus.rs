//! The versioned plan corpus on the limit space: geodesic Dirac plans
//! between anchor points, product plans between density pairs and seeded
//! random edge-path plans.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{Density, FiniteSpace, Point, TemplateKind};
use crate::error::{Error, Result};
use crate::plans::{uniform_grid, CurvePlan, DiscreteCurve};
use crate::transport::{lift_coupling, Coupling};

pub const CORPUS_VERSION: &str = "corpus-v1";

/// Normalized reference measure on the points within `radius` of `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallDensity {
    pub center: Point,
    pub radius: f64,
}

impl BallDensity {
    pub fn on(&self, space: &Arc<FiniteSpace>) -> Result<Density> {
        let tpl = space.template();
        let masses: Vec<f64> = (0..space.len())
            .map(|i| {
                if tpl.dist(space.point(i), self.center) <= self.radius {
                    space.weight(i)
                } else {
                    0.0
                }
            })
            .collect();
        if masses.iter().all(|m| *m == 0.0) {
            return Err(Error::ZeroMass(format!("no point within {} of {}", self.radius, self.center)));
        }
        Density::from_masses(space.clone(), &masses)?.normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Evenly spread points; every ordered pair gives a Dirac plan.
    pub anchors: usize,
    /// Intervals of each lifted geodesic.
    pub steps: usize,
    /// Density pairs for product plans; a default pair is derived from the
    /// template when `None`.
    pub products: Option<Vec<(BallDensity, BallDensity)>>,
    /// Number of random edge-path plans.
    pub random: usize,
    pub curves_per_plan: usize,
    pub walk_len: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            anchors: 5,
            steps: 4,
            products: None,
            random: 4,
            curves_per_plan: 3,
            walk_len: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Dirac,
    Product,
    EdgePath,
}

#[derive(Debug, Clone)]
pub struct CorpusPlan {
    pub id: String,
    pub kind: CorpusKind,
    pub plan: CurvePlan,
}

fn default_products(space: &FiniteSpace) -> Vec<(BallDensity, BallDensity)> {
    let t = space.template();
    let at = |s: f64| match t.kind {
        TemplateKind::TorusGrid => Point::new(s * t.extent[0], s * t.extent[1]),
        _ => Point::on_line(s * t.extent[0]),
    };
    let l = t.extent[0];
    vec![(
        BallDensity {
            center: at(0.3),
            radius: 0.1 * l,
        },
        BallDensity {
            center: at(0.6),
            radius: 0.15 * l,
        },
    )]
}

fn anchor_indices(space: &FiniteSpace, k: usize) -> Vec<usize> {
    let n = space.len();
    let k = k.min(n);
    let closed = space.template().kind != TemplateKind::Segment;
    let mut idx: Vec<usize> = (0..k)
        .map(|j| {
            if closed {
                j * n / k
            } else if k == 1 {
                0
            } else {
                (j * (n - 1) + (k - 1) / 2) / (k - 1)
            }
        })
        .collect();
    idx.dedup();
    idx
}

/// Builds the corpus on `space` (usually the limit of a sequence).
pub fn build_corpus(space: &Arc<FiniteSpace>, spec: &CorpusSpec) -> Result<Vec<CorpusPlan>> {
    if spec.steps == 0 || spec.walk_len == 0 || spec.curves_per_plan == 0 {
        return Err(Error::Malformed("corpus steps, walk lengths and curve counts must be positive".into()));
    }
    let mut out = Vec::new();
    let anchors = anchor_indices(space, spec.anchors);
    for &i in &anchors {
        for &j in &anchors {
            if i != j {
                out.push(CorpusPlan {
                    id: format!("dirac-{i}-{j}"),
                    kind: CorpusKind::Dirac,
                    plan: CurvePlan::dirac_geodesic(space.clone(), i, j, spec.steps)?,
                });
            }
        }
    }
    let products = spec.products.clone().unwrap_or_else(|| default_products(space));
    for (k, (a, b)) in products.iter().enumerate() {
        let (mu, nu) = (a.on(space)?, b.on(space)?);
        let (ma, mb) = (mu.masses(), nu.masses());
        let matrix = ma.iter().flat_map(|x| mb.iter().map(move |y| x * y)).collect();
        let coupling = Coupling::new(mu, nu, matrix)?;
        out.push(CorpusPlan {
            id: format!("product-{k}"),
            kind: CorpusKind::Product,
            plan: lift_coupling(&coupling, spec.steps)?,
        });
    }
    let adj = space.template_neighbors();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for k in 0..spec.random {
        let mut curves = Vec::with_capacity(spec.curves_per_plan);
        let mut masses = Vec::with_capacity(spec.curves_per_plan);
        for _ in 0..spec.curves_per_plan {
            let mut at = rng.gen_range(0..space.len());
            let mut nodes = vec![space.point(at)];
            for _ in 0..spec.walk_len {
                if !adj[at].is_empty() {
                    at = adj[at][rng.gen_range(0..adj[at].len())];
                }
                nodes.push(space.point(at));
            }
            curves.push(DiscreteCurve::new(uniform_grid(spec.walk_len), nodes)?);
            masses.push(rng.gen_range(0.5..1.5));
        }
        out.push(CorpusPlan {
            id: format!("walk-{k}"),
            kind: CorpusKind::EdgePath,
            plan: CurvePlan::normalized(space.clone(), curves, masses)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{discretize, GeodesicTemplate};
    use crate::plans::is_edge_path_plan;

    #[test]
    fn corpus_is_reproducible() {
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = Arc::new(discretize(&t, 33, &|_| 1.0).unwrap());
        let spec = CorpusSpec {
            seed: 7,
            ..Default::default()
        };
        let a = build_corpus(&sp, &spec).unwrap();
        let b = build_corpus(&sp, &spec).unwrap();
        assert_eq!(a.len(), 20 + 1 + 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.plan.record(), y.plan.record());
        }
        let adj = sp.template_neighbors();
        for c in a.iter().filter(|c| c.kind == CorpusKind::EdgePath) {
            assert!(is_edge_path_plan(&c.plan, &adj));
        }
        assert_eq!(anchor_indices(&sp, 5), vec![0, 8, 16, 24, 32]);
    }
}

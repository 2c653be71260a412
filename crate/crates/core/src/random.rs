//! Seeded random instances for oracle suites and scenario files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hardy::{MassFunction, WeightFunction};
use crate::poset::BiTreeTopology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Mass and weight on every node, general weight.
    General,
    /// Boundary-supported mass, general weight.
    Boundary,
    /// Mass on every node, product weight.
    ProductWeight,
    /// Boundary-supported mass, product weight.
    ProductBoundary,
}

impl Distribution {
    pub fn boundary_only(self) -> bool {
        matches!(self, Self::Boundary | Self::ProductBoundary)
    }

    pub fn product_weight(self) -> bool {
        matches!(self, Self::ProductWeight | Self::ProductBoundary)
    }
}

/// Heavy-tailed nonnegative draw with an atom at zero.
fn draw(rng: &mut ChaCha8Rng, zero_prob: f64) -> f64 {
    if rng.gen_bool(zero_prob) {
        return 0.0;
    }
    let u: f64 = rng.gen_range(1e-9..1.0);
    let v = -u.ln();
    v * v
}

pub fn random_mass(topo: &BiTreeTopology, rng: &mut ChaCha8Rng, boundary_only: bool) -> MassFunction {
    let mut values: Vec<f64> = (0..topo.len())
        .map(|i| {
            if boundary_only && !topo.is_boundary(i) {
                0.0
            } else {
                draw(rng, 0.3)
            }
        })
        .collect();
    if values.iter().all(|&v| v == 0.0) {
        let slots: Vec<usize> = if boundary_only {
            topo.boundary().collect()
        } else {
            (0..topo.len()).collect()
        };
        values[slots[rng.gen_range(0..slots.len())]] = 1.0;
    }
    MassFunction::new(topo, values).expect("nonnegative draws")
}

pub fn random_weight(topo: &BiTreeTopology, rng: &mut ChaCha8Rng, product: bool) -> WeightFunction {
    if product {
        let wx = (0..topo.tree_x.len()).map(|_| draw(rng, 0.15)).collect();
        let wy = (0..topo.tree_y.len()).map(|_| draw(rng, 0.15)).collect();
        WeightFunction::product(topo, wx, wy).expect("nonnegative draws")
    } else {
        let values = (0..topo.len()).map(|_| draw(rng, 0.25)).collect();
        WeightFunction::general(topo, values).expect("nonnegative draws")
    }
}

pub fn sample(topo: &BiTreeTopology, seed: u64, dist: Distribution) -> (MassFunction, WeightFunction) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = random_mass(topo, &mut rng, dist.boundary_only());
    let w = random_weight(topo, &mut rng, dist.product_weight());
    (mu, w)
}

/// General weight; mass on the boundary only when `boundary_only`.
pub fn random_instance(topo: &BiTreeTopology, seed: u64, boundary_only: bool) -> (MassFunction, WeightFunction) {
    let dist = if boundary_only {
        Distribution::Boundary
    } else {
        Distribution::General
    };
    sample(topo, seed, dist)
}

pub fn random_product_instance(
    topo: &BiTreeTopology,
    seed: u64,
    boundary_only: bool,
) -> (MassFunction, WeightFunction) {
    let dist = if boundary_only {
        Distribution::ProductBoundary
    } else {
        Distribution::ProductWeight
    };
    sample(topo, seed, dist)
}

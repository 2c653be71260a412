//! Counterexample families separating the box, Carleson, hereditary Carleson
//! and embedding constants once the weight is not a product, and the
//! translations between rectangle families, paraproduct coefficients and
//! weights on the bi-tree.

mod rect;
mod structured;

pub use rect::{DyadicInterval, DyadicRect};
pub use structured::{
    family_size, structured_potential, ConstructionKind, EmbeddingProbe, Piece, PieceFamily,
    PotentialProfile, PotentialTable, QuadrantMass, RecSurrogate, StructuredConstruction, WeightRule,
    MAX_BOUND_GENERATORS, MAX_STRUCTURED_DEPTH, RANDOM_SAMPLES_PER_PIECE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::{MassFunction, WeightFunction};
use crate::poset::BiTreeTopology;

/// Depth up to which generators also return a dense copy.
pub const MAX_DENSE_EXTREMAL_DEPTH: u32 = 8;

#[derive(Clone, Debug)]
pub struct DenseInstance {
    pub topology: BiTreeTopology,
    pub mu: MassFunction,
    pub w: WeightFunction,
}

#[derive(Clone, Debug)]
pub struct ExtremalInstance {
    pub construction: StructuredConstruction,
    /// Present when `N ≤ MAX_DENSE_EXTREMAL_DEPTH`.
    pub dense: Option<DenseInstance>,
}

impl ExtremalInstance {
    fn new(construction: StructuredConstruction) -> Result<Self> {
        let dense = if construction.n <= MAX_DENSE_EXTREMAL_DEPTH {
            let (topology, mu, w) = construction.materialize()?;
            Some(DenseInstance { topology, mu, w })
        } else {
            None
        };
        Ok(Self { construction, dense })
    }

    pub fn require_dense(&self) -> Result<&DenseInstance> {
        self.dense.as_ref().ok_or_else(|| {
            Error::Size(format!(
                "N = {} has no dense copy (limit {MAX_DENSE_EXTREMAL_DEPTH})",
                self.construction.n
            ))
        })
    }
}

pub fn gen_simple_car_not_rec(n: u32, layout: QuadrantMass) -> Result<ExtremalInstance> {
    ExtremalInstance::new(StructuredConstruction::simple_car_not_rec(n, layout)?)
}

/// Returns `ν = μ + ν|ω₀` and the up-set indicator weight.
pub fn gen_upset_car_not_rec(n: u32) -> Result<ExtremalInstance> {
    ExtremalInstance::new(StructuredConstruction::upset_car_not_rec(n)?)
}

pub fn gen_rec_not_embedding(n: u32) -> Result<ExtremalInstance> {
    ExtremalInstance::new(StructuredConstruction::rec_not_embedding(n)?)
}

pub fn gen_sum_of_products(n: u32) -> Result<ExtremalInstance> {
    ExtremalInstance::new(StructuredConstruction::sum_of_products(n)?)
}

/// Builds a construction by its scenario name.
pub fn construction_by_name(name: &str, n: u32) -> Result<StructuredConstruction> {
    match name {
        "simple_car_not_rec" => StructuredConstruction::simple_car_not_rec(n, QuadrantMass::Atom),
        "simple_car_not_rec_uniform" => StructuredConstruction::simple_car_not_rec(n, QuadrantMass::Uniform),
        "upset_car_not_rec" => StructuredConstruction::upset_car_not_rec(n),
        "rec_not_embedding" => StructuredConstruction::rec_not_embedding(n),
        "sum_of_products" => StructuredConstruction::sum_of_products(n),
        other => Err(Error::Parameter(format!("unknown construction {other:?}"))),
    }
}

pub const CONSTRUCTION_NAMES: [&str; 5] = [
    "simple_car_not_rec",
    "simple_car_not_rec_uniform",
    "upset_car_not_rec",
    "rec_not_embedding",
    "sum_of_products",
];

/// Uniform boundary mass `4^{-N}` per square and `w_R = 1/m₂(R)` on the
/// family, so that the box and Carleson constants become the packing
/// constants `sup Σ_{R ⊆ P} |R| / |P|` and `sup Σ_{R ⊆ Ω} |R| / |Ω|`.
pub fn lift_carleson_family(family: &[DyadicRect], n: u32) -> Result<DenseInstance> {
    let topology = BiTreeTopology::new(n, n)?;
    let mut w = vec![0.0; topology.len()];
    for r in family {
        let i = r
            .index_in(&topology)
            .ok_or_else(|| Error::Parameter(format!("{r} is finer than depth {n}")))?;
        w[i] = 1.0 / r.area();
    }
    Ok(DenseInstance {
        mu: uniform_boundary_mass(&topology)?,
        w: WeightFunction::general(&topology, w)?,
        topology,
    })
}

/// Inverse of [`lift_carleson_family`]: the rectangles carrying weight.
pub fn lifted_family(topo: &BiTreeTopology, w: &WeightFunction) -> Result<Vec<DyadicRect>> {
    let mut out = Vec::new();
    for (i, &v) in w.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let r = DyadicRect::from_index(topo, i);
        if v != 1.0 / r.area() {
            return Err(Error::Precondition(format!("w({r}) = {v} is not 1/|R|")));
        }
        out.push(r);
    }
    Ok(out)
}

/// Lebesgue measure on the boundary: `4^{-N}` on each square.
pub fn uniform_boundary_mass(topo: &BiTreeTopology) -> Result<MassFunction> {
    let each = 1.0 / topo.boundary_len() as f64;
    let values = (0..topo.len())
        .map(|i| if topo.is_boundary(i) { each } else { 0.0 })
        .collect();
    MassFunction::new(topo, values)
}

/// `w_R = β_R² / m₂(R)²`.
pub fn paraproduct_weight(topo: &BiTreeTopology, beta: &[f64]) -> Result<WeightFunction> {
    if beta.len() != topo.len() {
        return Err(Error::Parameter(format!(
            "{} coefficients for {} rectangles",
            beta.len(),
            topo.len()
        )));
    }
    let values = beta
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let m = DyadicRect::from_index(topo, i).area();
            (b / m) * (b / m)
        })
        .collect();
    WeightFunction::general(topo, values)
}

/// `β_R = m₂(R) √w_R`; the sign of the coefficients is not recoverable.
pub fn paraproduct_coefficients(topo: &BiTreeTopology, w: &WeightFunction) -> Vec<f64> {
    w.values()
        .iter()
        .enumerate()
        .map(|(i, v)| DyadicRect::from_index(topo, i).area() * v.sqrt())
        .collect()
}

/// `Σ_{R ⊆ R₀} β_R²` for every `R₀`.
pub fn paraproduct_box_sums(topo: &BiTreeTopology, beta: &[f64]) -> Vec<f64> {
    let sq: Vec<f64> = beta.iter().map(|b| b * b).collect();
    crate::hardy::hardy_adjoint(topo, &sq)
}

/// Description of a construction suitable for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSummary {
    pub kind: ConstructionKind,
    pub n: u32,
    pub m: usize,
    pub k_max: usize,
    pub pieces: usize,
    pub generators: usize,
}

impl From<&StructuredConstruction> for ConstructionSummary {
    fn from(c: &StructuredConstruction) -> Self {
        Self {
            kind: c.kind,
            n: c.n,
            m: c.m,
            k_max: c.k_max,
            pieces: c.pieces.len(),
            generators: c.generators.len(),
        }
    }
}

//! Hardy operator, its adjoint, potentials and energies on the bi-tree.
//!
//! `I` sums over ancestors (`γ' >= γ`), `I*` over descendants (`γ' <= γ`).
//! Both are evaluated by two separable sweeps, x first and then y, so one
//! application costs `O(|T_x| |T_y|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poset::{BiTreeTopology, DownSet, TreeTopology, UpSet};
use crate::scalar::{Rational, Scalar};

/// Nonnegative function on bi-nodes (a measure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassFunction<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> MassFunction<T> {
    pub fn new(topo: &BiTreeTopology, values: Vec<T>) -> Result<Self> {
        check_values(topo, &values, "mass")?;
        Ok(Self { values })
    }

    pub fn zeros(topo: &BiTreeTopology) -> Self {
        Self {
            values: vec![T::zero(); topo.len()],
        }
    }

    pub fn from_atoms(topo: &BiTreeTopology, atoms: &[(usize, T)]) -> Result<Self> {
        let mut values = vec![T::zero(); topo.len()];
        for (i, v) in atoms {
            let slot = values
                .get_mut(*i)
                .ok_or_else(|| Error::Parameter(format!("node {i} outside topology")))?;
            *slot = slot.clone() + v.clone();
        }
        Self::new(topo, values)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize) -> &T {
        &self.values[i]
    }

    pub fn total_mass(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| a + v.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] > T::zero()).collect()
    }

    pub fn is_boundary_supported(&self, topo: &BiTreeTopology) -> bool {
        self.support().into_iter().all(|i| topo.is_boundary(i))
    }

    /// `μ 1_E` for the mask `E`.
    pub fn restrict(&self, mask: &[bool]) -> Self {
        let values = self
            .values
            .iter()
            .zip(mask)
            .map(|(v, &m)| if m { v.clone() } else { T::zero() })
            .collect();
        Self { values }
    }

    pub fn scaled(&self, c: &T) -> Self {
        Self {
            values: self.values.iter().map(|v| v.clone() * c.clone()).collect(),
        }
    }

    pub fn mass_of(&self, mask: &[bool]) -> T {
        self.values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .fold(T::zero(), |a, (v, _)| a + v.clone())
    }
}

impl MassFunction<f64> {
    pub fn to_rational(&self) -> MassFunction<Rational> {
        MassFunction {
            values: self.values.iter().map(|&v| <Rational as Scalar>::lift(v)).collect(),
        }
    }
}

/// How a weight was built; lets solvers check structural hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightStructure<T = f64> {
    General,
    Product { wx: Vec<T>, wy: Vec<T> },
    SumOfProducts { terms: Vec<(Vec<T>, Vec<T>)> },
    Hooked { anchor: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction<T = f64> {
    values: Vec<T>,
    structure: WeightStructure<T>,
}

impl<T: Scalar> WeightFunction<T> {
    pub fn general(topo: &BiTreeTopology, values: Vec<T>) -> Result<Self> {
        check_values(topo, &values, "weight")?;
        Ok(Self {
            values,
            structure: WeightStructure::General,
        })
    }

    pub fn constant(topo: &BiTreeTopology, c: T) -> Result<Self> {
        let wx = vec![c; topo.tree_x.len()];
        let wy = vec![T::one(); topo.tree_y.len()];
        Self::product(topo, wx, wy)
    }

    /// `w(α) = w_x(α_x) w_y(α_y)`.
    pub fn product(topo: &BiTreeTopology, wx: Vec<T>, wy: Vec<T>) -> Result<Self> {
        if wx.len() != topo.tree_x.len() || wy.len() != topo.tree_y.len() {
            return Err(Error::Parameter("product factor length mismatch".into()));
        }
        let values = product_values(topo, &wx, &wy);
        check_values(topo, &values, "weight")?;
        Ok(Self {
            values,
            structure: WeightStructure::Product { wx, wy },
        })
    }

    pub fn sum_of_products(topo: &BiTreeTopology, terms: Vec<(Vec<T>, Vec<T>)>) -> Result<Self> {
        let mut values = vec![T::zero(); topo.len()];
        for (wx, wy) in &terms {
            if wx.len() != topo.tree_x.len() || wy.len() != topo.tree_y.len() {
                return Err(Error::Parameter("product factor length mismatch".into()));
            }
            for (v, t) in values.iter_mut().zip(product_values(topo, wx, wy)) {
                *v = v.clone() + t;
            }
        }
        check_values(topo, &values, "weight")?;
        Ok(Self {
            values,
            structure: WeightStructure::SumOfProducts { terms },
        })
    }

    /// Weight supported on the ancestors of `anchor`.
    pub fn hooked(topo: &BiTreeTopology, values: Vec<T>, anchor: usize) -> Result<Self> {
        check_values(topo, &values, "weight")?;
        if anchor >= topo.len() {
            return Err(Error::Parameter(format!("anchor {anchor} outside topology")));
        }
        if let Some(bad) = (0..topo.len()).find(|&i| !values[i].is_zero() && !topo.le(anchor, i)) {
            return Err(Error::Tag(format!(
                "hooked weight is nonzero at node {bad}, which is not an ancestor of {anchor}"
            )));
        }
        Ok(Self {
            values,
            structure: WeightStructure::Hooked { anchor },
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize) -> &T {
        &self.values[i]
    }

    pub fn structure(&self) -> &WeightStructure<T> {
        &self.structure
    }

    pub fn is_product(&self) -> bool {
        matches!(self.structure, WeightStructure::Product { .. })
    }

    pub fn product_factors(&self) -> Option<(&[T], &[T])> {
        match &self.structure {
            WeightStructure::Product { wx, wy } => Some((wx, wy)),
            _ => None,
        }
    }

    pub fn scaled(&self, c: &T) -> Self {
        let scale = |v: &Vec<T>| v.iter().map(|a| a.clone() * c.clone()).collect::<Vec<_>>();
        let structure = match &self.structure {
            WeightStructure::General => WeightStructure::General,
            WeightStructure::Product { wx, wy } => WeightStructure::Product {
                wx: scale(wx),
                wy: wy.clone(),
            },
            WeightStructure::SumOfProducts { terms } => WeightStructure::SumOfProducts {
                terms: terms.iter().map(|(a, b)| (scale(a), b.clone())).collect(),
            },
            WeightStructure::Hooked { anchor } => WeightStructure::Hooked { anchor: *anchor },
        };
        let values = match &structure {
            WeightStructure::Product { wx, wy } => product_values_len(self.values.len(), wx, wy),
            _ => scale(&self.values),
        };
        Self { values, structure }
    }

    /// Re-derives the values from the structure tag and compares.
    pub fn verify_structure(&self, topo: &BiTreeTopology) -> Result<()> {
        match &self.structure {
            WeightStructure::General => Ok(()),
            WeightStructure::Product { wx, wy } => {
                let expect = product_values(topo, wx, wy);
                match (0..topo.len()).find(|&i| expect[i] != self.values[i]) {
                    None => Ok(()),
                    Some(i) => Err(Error::Tag(format!("product identity fails at node {i}"))),
                }
            }
            WeightStructure::SumOfProducts { terms } => {
                let mut expect = vec![T::zero(); topo.len()];
                for (wx, wy) in terms {
                    for (v, t) in expect.iter_mut().zip(product_values(topo, wx, wy)) {
                        *v = v.clone() + t;
                    }
                }
                match (0..topo.len()).find(|&i| expect[i] != self.values[i]) {
                    None => Ok(()),
                    Some(i) => Err(Error::Tag(format!("sum-of-products identity fails at node {i}"))),
                }
            }
            WeightStructure::Hooked { anchor } => {
                match (0..topo.len()).find(|&i| !self.values[i].is_zero() && !topo.le(*anchor, i)) {
                    None => Ok(()),
                    Some(i) => Err(Error::Tag(format!("hooked weight leaks to node {i}"))),
                }
            }
        }
    }
}

impl WeightFunction<f64> {
    pub fn to_rational(&self) -> WeightFunction<Rational> {
        let conv = |v: &Vec<f64>| v.iter().map(|&a| <Rational as Scalar>::lift(a)).collect::<Vec<_>>();
        let structure = match &self.structure {
            WeightStructure::General => WeightStructure::General,
            WeightStructure::Product { wx, wy } => WeightStructure::Product {
                wx: conv(wx),
                wy: conv(wy),
            },
            WeightStructure::SumOfProducts { terms } => WeightStructure::SumOfProducts {
                terms: terms.iter().map(|(a, b)| (conv(a), conv(b))).collect(),
            },
            WeightStructure::Hooked { anchor } => WeightStructure::Hooked { anchor: *anchor },
        };
        WeightFunction {
            values: conv(&self.values),
            structure,
        }
    }
}

fn product_values<T: Scalar>(topo: &BiTreeTopology, wx: &[T], wy: &[T]) -> Vec<T> {
    product_values_len(topo.len(), wx, wy)
}

fn product_values_len<T: Scalar>(len: usize, wx: &[T], wy: &[T]) -> Vec<T> {
    let mut values = Vec::with_capacity(len);
    for a in wx {
        for b in wy {
            values.push(a.clone() * b.clone());
        }
    }
    values
}

fn check_values<T: Scalar>(topo: &BiTreeTopology, values: &[T], what: &str) -> Result<()> {
    if values.len() != topo.len() {
        return Err(Error::Parameter(format!(
            "{what} has {} entries, topology has {}",
            values.len(),
            topo.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !(*v >= T::zero())) {
        return Err(Error::Parameter(format!("{what} is negative or NaN at node {i}")));
    }
    Ok(())
}

/// Values of a potential together with the truncation level that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField<T = f64> {
    pub values: Vec<T>,
    pub truncation: Option<T>,
}

/// `Iφ(γ) = Σ_{γ' ≥ γ} φ(γ')`.
pub fn hardy_forward<T: Scalar>(topo: &BiTreeTopology, input: &[T]) -> Vec<T> {
    assert_eq!(input.len(), topo.len());
    let (nx, ny) = (topo.tree_x.len(), topo.tree_y.len());
    let mut out = input.to_vec();
    // x sweep: parents have smaller indices, so a forward pass suffices
    for x in 1..nx {
        let px = (x - 1) / 2;
        for y in 0..ny {
            let v = out[px * ny + y].clone();
            let slot = &mut out[x * ny + y];
            *slot = slot.clone() + v;
        }
    }
    for x in 0..nx {
        let row = &mut out[x * ny..(x + 1) * ny];
        for y in 1..ny {
            let v = row[(y - 1) / 2].clone();
            row[y] = row[y].clone() + v;
        }
    }
    out
}

/// `I*ψ(γ) = Σ_{γ' ≤ γ} ψ(γ')`.
pub fn hardy_adjoint<T: Scalar>(topo: &BiTreeTopology, input: &[T]) -> Vec<T> {
    assert_eq!(input.len(), topo.len());
    let (nx, ny) = (topo.tree_x.len(), topo.tree_y.len());
    let mut out = input.to_vec();
    for x in (1..nx).rev() {
        let px = (x - 1) / 2;
        for y in 0..ny {
            let v = out[x * ny + y].clone();
            let slot = &mut out[px * ny + y];
            *slot = slot.clone() + v;
        }
    }
    for x in 0..nx {
        let row = &mut out[x * ny..(x + 1) * ny];
        for y in (1..ny).rev() {
            let v = row[y].clone();
            let p = (y - 1) / 2;
            row[p] = row[p].clone() + v;
        }
    }
    out
}

/// Ancestor sums on a single tree.
pub fn tree_forward<T: Scalar>(tree: &TreeTopology, input: &[T]) -> Vec<T> {
    assert_eq!(input.len(), tree.len());
    let mut out = input.to_vec();
    for i in 1..tree.len() {
        let v = out[(i - 1) / 2].clone();
        out[i] = out[i].clone() + v;
    }
    out
}

/// Descendant sums on a single tree.
pub fn tree_adjoint<T: Scalar>(tree: &TreeTopology, input: &[T]) -> Vec<T> {
    assert_eq!(input.len(), tree.len());
    let mut out = input.to_vec();
    for i in (1..tree.len()).rev() {
        let v = out[i].clone();
        let p = (i - 1) / 2;
        out[p] = out[p].clone() + v;
    }
    out
}

fn mul<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| x.clone() * y.clone()).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + x.clone() * y.clone())
}

/// `V^μ = I(w I*μ)`.
pub fn potential<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
) -> PotentialField<T> {
    let adj = hardy_adjoint(topo, mu.values());
    PotentialField {
        values: hardy_forward(topo, &mul(w.values(), &adj)),
        truncation: None,
    }
}

/// `E_δ = {V^μ ≤ δ}` and `V_δ^μ = I(w 1_{E_δ} I*μ)`.
pub fn truncated_potential<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
    delta: &T,
) -> Result<(UpSet, PotentialField<T>)> {
    let adj = hardy_adjoint(topo, mu.values());
    let full = hardy_forward(topo, &mul(w.values(), &adj));
    let mask: Vec<bool> = full.iter().map(|v| v <= delta).collect();
    // V^μ only shrinks when moving up, so the sublevel set is an up-set
    let level = UpSet::from_mask(topo, mask)?;
    let restricted: Vec<T> = (0..topo.len())
        .map(|i| {
            if level.contains(i) {
                w.get(i).clone() * adj[i].clone()
            } else {
                T::zero()
            }
        })
        .collect();
    let field = PotentialField {
        values: hardy_forward(topo, &restricted),
        truncation: Some(delta.clone()),
    };
    Ok((level, field))
}

/// Per-node energy density `w (I*μ)²`.
pub fn energy_density<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
) -> Vec<T> {
    let adj = hardy_adjoint(topo, mu.values());
    adj.iter()
        .zip(w.values())
        .map(|(a, wv)| wv.clone() * a.clone() * a.clone())
        .collect()
}

/// `ℰ[μ] = Σ_α w(α) (I*μ(α))²`.
pub fn energy<T: Scalar>(topo: &BiTreeTopology, mu: &MassFunction<T>, w: &WeightFunction<T>) -> T {
    energy_density(topo, mu, w)
        .into_iter()
        .fold(T::zero(), |a, b| a + b)
}

/// `∫ V^μ dμ`, the other route to the energy.
pub fn energy_integral<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
) -> T {
    dot(&potential(topo, mu, w).values, mu.values())
}

/// `ℰ_β[μ] = Σ_{α ≤ β} w(α) (I*μ(α))²`.
pub fn energy_box<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
    beta: usize,
) -> T {
    let density = energy_density(topo, mu, w);
    let (bx, by) = (topo.node(beta).x, topo.node(beta).y);
    let mut total = T::zero();
    for (i, d) in density.into_iter().enumerate() {
        let n = topo.node(i);
        if topo.tree_x.le(n.x, bx) && topo.tree_y.le(n.y, by) {
            total = total + d;
        }
    }
    total
}

/// Energy restricted to a down-set.
pub fn energy_downset<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
    set: &DownSet,
) -> T {
    energy_density(topo, mu, w)
        .into_iter()
        .zip(set.mask())
        .filter(|(_, &m)| m)
        .fold(T::zero(), |a, (d, _)| a + d)
}

/// `ℰ_δ[μ] = Σ_{α ∈ E_δ} w(α) (I*μ(α))²`.
pub fn energy_delta<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
    delta: &T,
) -> Result<T> {
    let (level, _) = truncated_potential(topo, mu, w, delta)?;
    Ok(energy_density(topo, mu, w)
        .into_iter()
        .zip(level.mask())
        .filter(|(_, &m)| m)
        .fold(T::zero(), |a, (d, _)| a + d))
}

/// `V_good,ε(ω)`: the part of `V^μ(ω)` coming from ancestors `α` whose
/// path-box sum `Σ_{ω ≤ β ≤ α} w(β) I*μ(β)` exceeds `ε`.
pub fn v_good<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    w: &WeightFunction<T>,
    epsilon: &T,
) -> Vec<T> {
    let adj = hardy_adjoint(topo, mu.values());
    let h = mul(w.values(), &adj);
    let mut out = Vec::with_capacity(topo.len());
    let mut prefix: Vec<T> = Vec::new();
    for node in 0..topo.len() {
        let grid = topo.ancestor_grid(node);
        prefix.clear();
        prefix.resize(grid.rows * grid.cols, T::zero());
        let mut total = T::zero();
        for i in 0..grid.rows {
            for j in 0..grid.cols {
                let mut s = h[grid.at(i, j)].clone();
                if i > 0 {
                    s = s + prefix[(i - 1) * grid.cols + j].clone();
                }
                if j > 0 {
                    s = s + prefix[i * grid.cols + j - 1].clone();
                }
                if i > 0 && j > 0 {
                    s = s - prefix[(i - 1) * grid.cols + j - 1].clone();
                }
                if s > *epsilon {
                    total = total + h[grid.at(i, j)].clone();
                }
                prefix[i * grid.cols + j] = s;
            }
        }
        out.push(total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::{BiNode, RectAddress};
    use crate::random::random_instance;
    use crate::testutil::rel_close;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_forward(topo: &BiTreeTopology, f: &[f64]) -> Vec<f64> {
        (0..topo.len())
            .map(|g| (0..topo.len()).filter(|&a| topo.le(g, a)).map(|a| f[a]).sum())
            .collect()
    }

    fn brute_adjoint(topo: &BiTreeTopology, f: &[f64]) -> Vec<f64> {
        (0..topo.len())
            .map(|g| (0..topo.len()).filter(|&a| topo.le(a, g)).map(|a| f[a]).sum())
            .collect()
    }

    #[test]
    fn single_node_operators_are_identity() {
        let t = BiTreeTopology::new(0, 0).unwrap();
        assert_eq!(hardy_forward(&t, &[2.5]), vec![2.5]);
        assert_eq!(hardy_adjoint(&t, &[2.5]), vec![2.5]);
        let mu = MassFunction::new(&t, vec![3.0]).unwrap();
        let w = WeightFunction::general(&t, vec![2.0]).unwrap();
        assert_eq!(potential(&t, &mu, &w).values, vec![6.0]);
        assert_eq!(energy(&t, &mu, &w), 18.0);
    }

    #[test]
    fn root_indicator_spreads_everywhere() {
        let t = BiTreeTopology::new(2, 3).unwrap();
        let mut f = vec![0.0; t.len()];
        f[t.root()] = 1.0;
        assert!(hardy_forward(&t, &f).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sweeps_match_brute_force() {
        let t = BiTreeTopology::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let f: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            for (a, b) in hardy_forward(&t, &f).iter().zip(brute_forward(&t, &f)) {
                assert!(rel_close(*a, b, 1e-12));
            }
            for (a, b) in hardy_adjoint(&t, &f).iter().zip(brute_adjoint(&t, &f)) {
                assert!(rel_close(*a, b, 1e-12));
            }
        }
    }

    #[test]
    fn adjoint_at_root_is_total_mass() {
        let t = BiTreeTopology::new(3, 2).unwrap();
        let (mu, _) = random_instance(&t, 3, true);
        let adj = hardy_adjoint(&t, mu.values());
        assert!(rel_close(adj[t.root()], mu.total_mass(), 1e-12));
    }

    #[test]
    fn duality() {
        let t = BiTreeTopology::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let f: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&hardy_forward(&t, &f), &g);
            let rhs = dot(&f, &hardy_adjoint(&t, &g));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn potential_matches_quadratic_brute_force() {
        let t = BiTreeTopology::new(2, 2).unwrap();
        for seed in 0..4 {
            let (mu, w) = random_instance(&t, seed, seed % 2 == 0);
            let v = potential(&t, &mu, &w);
            for g in 0..t.len() {
                let mut s = 0.0;
                for a in (0..t.len()).filter(|&a| t.le(g, a)) {
                    let inner: f64 = (0..t.len()).filter(|&b| t.le(b, a)).map(|b| mu.values()[b]).sum();
                    s += w.values()[a] * inner;
                }
                assert!(rel_close(v.values[g], s, 1e-12));
            }
        }
    }

    #[test]
    fn zero_mass_has_zero_potential() {
        let t = BiTreeTopology::new(2, 1).unwrap();
        let mu = MassFunction::<f64>::zeros(&t);
        let (_, w) = random_instance(&t, 1, false);
        assert!(potential(&t, &mu, &w).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_routes_agree_and_scale_quadratically() {
        let t = BiTreeTopology::new(3, 3).unwrap();
        for seed in 0..5 {
            let (mu, w) = random_instance(&t, seed, seed % 2 == 1);
            let e = energy(&t, &mu, &w);
            assert!(rel_close(e, energy_integral(&t, &mu, &w), 1e-12));
            assert!(rel_close(energy_box(&t, &mu, &w, t.root()), e, 1e-12));
            assert!(rel_close(energy(&t, &mu.scaled(&3.0), &w), 9.0 * e, 1e-12));
        }
    }

    #[test]
    fn sweep_order_does_not_matter() {
        // y-then-x via the transposed topology
        let t = BiTreeTopology::new(2, 3).unwrap();
        let tt = BiTreeTopology::new(3, 2).unwrap();
        let (mu, _) = random_instance(&t, 5, false);
        let transpose = |v: &[f64], from: &BiTreeTopology, to: &BiTreeTopology| {
            let mut out = vec![0.0; v.len()];
            for (i, &val) in v.iter().enumerate() {
                let b = from.node(i);
                out[to.index(BiNode::new(b.y, b.x))] = val;
            }
            out
        };
        let direct = hardy_adjoint(&t, mu.values());
        let via = transpose(&hardy_adjoint(&tt, &transpose(mu.values(), &t, &tt)), &tt, &t);
        for (a, b) in direct.iter().zip(&via) {
            assert!(rel_close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn truncation_edges() {
        let t = BiTreeTopology::new(2, 2).unwrap();
        let (mu, w) = random_instance(&t, 3, true);
        let full = potential(&t, &mu, &w);
        let vmax = full.values.iter().cloned().fold(0.0, f64::max);
        let (level, vd) = truncated_potential(&t, &mu, &w, &vmax).unwrap();
        assert_eq!(level.len(), t.len());
        assert_eq!(vd.values, full.values);

        let adj = hardy_adjoint(&t, mu.values());
        let vmin = (0..t.len())
            .filter(|&i| w.values()[i] * adj[i] > 0.0)
            .map(|i| full.values[i])
            .fold(f64::INFINITY, f64::min);
        let (_, vd) = truncated_potential(&t, &mu, &w, &(vmin * 0.5)).unwrap();
        assert!(vd.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_potential_matches_restricted_sum() {
        let t = BiTreeTopology::new(2, 2).unwrap();
        for seed in 0..6 {
            let (mu, w) = random_instance(&t, seed, true);
            let full = potential(&t, &mu, &w);
            let delta = full.values[t.root()] * 1.7;
            let (level, vd) = truncated_potential(&t, &mu, &w, &delta).unwrap();
            let adj = hardy_adjoint(&t, mu.values());
            for g in 0..t.len() {
                let s: f64 = (0..t.len())
                    .filter(|&a| t.le(g, a) && full.values[a] <= delta)
                    .map(|a| w.values()[a] * adj[a])
                    .sum();
                assert!(rel_close(vd.values[g], s, 1e-12));
                assert!(vd.values[g] <= full.values[g] * (1.0 + 1e-12));
                assert_eq!(level.contains(g), full.values[g] <= delta);
            }
        }
    }

    #[test]
    fn single_tree_truncation_is_bounded_by_delta() {
        let t = BiTreeTopology::new(5, 0).unwrap();
        for seed in 0..10 {
            let (mu, w) = random_instance(&t, seed, false);
            let full = potential(&t, &mu, &w);
            let delta = full.values.iter().cloned().fold(0.0, f64::max) * 0.3;
            let (_, vd) = truncated_potential(&t, &mu, &w, &delta).unwrap();
            assert!(vd.values.iter().all(|&v| v <= delta * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn v_good_edges_and_brute_force() {
        let t = BiTreeTopology::new(2, 2).unwrap();
        let (mu, w) = random_instance(&t, 9, false);
        let full = potential(&t, &mu, &w);
        // ε above every potential: nothing qualifies
        let big = full.values.iter().cloned().fold(0.0, f64::max);
        assert!(v_good(&t, &mu, &w, &big).iter().all(|&v| v == 0.0));
        // ε = 0 with strictly positive masses and weights: the whole potential
        let pos_mu = MassFunction::new(&t, mu.values().iter().map(|v| v + 0.1).collect()).unwrap();
        let pos_w = WeightFunction::general(&t, w.values().iter().map(|v| v + 0.1).collect()).unwrap();
        let vg = v_good(&t, &pos_mu, &pos_w, &0.0);
        let vf = potential(&t, &pos_mu, &pos_w);
        for (a, b) in vg.iter().zip(&vf.values) {
            assert!(rel_close(*a, *b, 1e-12));
        }
        let adj = hardy_adjoint(&t, mu.values());
        let eps = full.values[t.root()] * 2.0;
        let vg = v_good(&t, &mu, &w, &eps);
        for g in 0..t.len() {
            let mut s = 0.0;
            for a in (0..t.len()).filter(|&a| t.le(g, a)) {
                let path: f64 = (0..t.len())
                    .filter(|&b| t.le(g, b) && t.le(b, a))
                    .map(|b| w.values()[b] * adj[b])
                    .sum();
                if path > eps {
                    s += w.values()[a] * adj[a];
                }
            }
            assert!(rel_close(vg[g], s, 1e-12));
        }
    }

    #[test]
    fn dichotomy_holds_pointwise() {
        // at every node: V_good,ε > ε or V_{4ε} ≥ V/2
        for seed in 0..40u64 {
            let t = BiTreeTopology::new(1 + (seed % 3) as u32, 1 + (seed % 2) as u32).unwrap();
            let (mu, w) = random_instance(&t, seed, seed % 3 == 0);
            let full = potential(&t, &mu, &w);
            let eps = full.values[t.root()] * (0.1 + (seed % 7) as f64 * 0.3);
            let vg = v_good(&t, &mu, &w, &eps);
            let (_, v4) = truncated_potential(&t, &mu, &w, &(4.0 * eps)).unwrap();
            for g in 0..t.len() {
                assert!(vg[g] > eps || v4.values[g] >= full.values[g] / 2.0);
            }
        }
    }

    #[test]
    fn exact_arithmetic_agrees() {
        let t = BiTreeTopology::new(2, 1).unwrap();
        let (mu, w) = random_instance(&t, 4, true);
        let e = energy(&t, &mu.to_rational(), &w.to_rational());
        let e2 = energy_integral(&t, &mu.to_rational(), &w.to_rational());
        assert_eq!(e, e2);
        assert!(rel_close(Scalar::to_f64(&e), energy(&t, &mu, &w), 1e-12));
    }

    #[test]
    fn weight_structure_checks() {
        let t = BiTreeTopology::new(1, 2).unwrap();
        let wx = vec![1.0, 2.0, 3.0];
        let wy: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let w = WeightFunction::product(&t, wx, wy).unwrap();
        w.verify_structure(&t).unwrap();
        let anchor = t
            .index_of(RectAddress { gen_x: 1, off_x: 0, gen_y: 2, off_y: 0 })
            .unwrap();
        let mut vals = vec![0.0; t.len()];
        vals[t.root()] = 1.0;
        assert!(WeightFunction::hooked(&t, vals.clone(), anchor).is_ok());
        vals[t.len() - 1] = 1.0;
        assert!(matches!(WeightFunction::hooked(&t, vals, anchor), Err(Error::Tag(_))));
        assert!(MassFunction::new(&t, vec![-1.0; t.len()]).is_err());
    }
}

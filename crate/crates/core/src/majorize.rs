//! Superadditivity, small-energy majorants on a tree and on a bi-tree with
//! product weight, the balancing step, and the main-lemma ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::{
    energy, hardy_adjoint, hardy_forward, potential, truncated_potential, tree_forward, MassFunction,
    WeightFunction,
};
use crate::poset::{BiTreeTopology, DownSet, TreeTopology};
use crate::scalar::Scalar;

/// Relative rounding allowance in superadditivity checks.
pub const SUPERADDITIVE_SLACK: f64 = 1e-12;
/// Relative allowance for asserted inequalities between float quantities.
const POST_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorantResult {
    pub phi: Vec<f64>,
    /// `{λ/2 < I(wg) ≤ 2λ}` on a tree, `{λ < I(wm) ≤ 2λ}` on a bi-tree.
    pub band: Vec<bool>,
    pub energy_in: f64,
    pub energy_ref: f64,
    /// Smallest `I(wφ) / I(wf)` over the band, `None` if the band carries
    /// nothing to bound.
    pub lower_bound_const: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Superadditivity {
    pub holds: bool,
    pub violation: Option<usize>,
}

impl Superadditivity {
    fn from_violation(violation: Option<usize>) -> Self {
        Self {
            holds: violation.is_none(),
            violation,
        }
    }
}

fn dominates(parent: f64, children: f64) -> bool {
    parent >= children - SUPERADDITIVE_SLACK * children.abs()
}

/// `g(β) ≥ Σ_{β' ∈ ch β} g(β')` for every `β` of one tree.
pub fn is_superadditive(g: &[f64], tree: &TreeTopology) -> Superadditivity {
    assert_eq!(g.len(), tree.len());
    let violation = (0..tree.len()).find(|&b| match tree.children(b) {
        Some([c0, c1]) => !dominates(g[b], g[c0] + g[c1]),
        None => false,
    });
    Superadditivity::from_violation(violation)
}

/// Superadditivity along each axis separately: for every `β`, the sum over
/// the two x-children and the sum over the two y-children are each at most
/// `g(β)`.
pub fn is_superadditive_bitree(g: &[f64], topo: &BiTreeTopology) -> Superadditivity {
    assert_eq!(g.len(), topo.len());
    let ny = topo.tree_y.len();
    let violation = (0..topo.len()).find(|&b| {
        let (x, y) = (b / ny, b % ny);
        let bad_x = topo
            .tree_x
            .children(x)
            .is_some_and(|[c0, c1]| !dominates(g[b], g[c0 * ny + y] + g[c1 * ny + y]));
        let bad_y = topo
            .tree_y
            .children(y)
            .is_some_and(|[c0, c1]| !dominates(g[b], g[x * ny + c0] + g[x * ny + c1]));
        bad_x || bad_y
    });
    Superadditivity::from_violation(violation)
}

/// Both sides of `Σ_{α ≤ β} g h ≤ g(β) · max_{α ≤ β} Σ_{α ≤ α' ≤ β} h(α')`.
pub fn check_l1linf(g: &[f64], h: &[f64], beta: usize, tree: &TreeTopology) -> Result<(f64, f64)> {
    if g.len() != tree.len() || h.len() != tree.len() || beta >= tree.len() {
        return Err(Error::Parameter("length mismatch or node out of range".into()));
    }
    if let Some(v) = is_superadditive(g, tree).violation {
        return Err(Error::Precondition(format!("g is not superadditive at node {v}")));
    }
    let mut lhs = 0.0;
    let mut best = 0.0f64;
    // path sums from each descendant α up to β, parents before children
    let mut path = vec![0.0; tree.len()];
    let mut stack = vec![beta];
    while let Some(a) = stack.pop() {
        path[a] = h[a] + if a == beta { 0.0 } else { path[(a - 1) / 2] };
        lhs += g[a] * h[a];
        best = best.max(path[a]);
        if let Some([c0, c1]) = tree.children(a) {
            stack.push(c0);
            stack.push(c1);
        }
    }
    Ok((lhs, g[beta] * best))
}

/// Both sides of `Σ (Kf)² g ≤ (max_{supp g} K Kᵀ g) Σ f²` for a nonnegative
/// kernel given by rows.
pub fn check_positive_kernel(kernel: &[Vec<f64>], f: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    let rows = kernel.len();
    if g.len() != rows || kernel.iter().any(|r| r.len() != f.len()) {
        return Err(Error::Parameter("kernel shape does not match f and g".into()));
    }
    if kernel.iter().flatten().chain(f).chain(g).any(|&v| !(v >= 0.0)) {
        return Err(Error::Precondition("kernel and functions must be nonnegative".into()));
    }
    let kf: Vec<f64> = kernel
        .iter()
        .map(|r| r.iter().zip(f).map(|(k, v)| k * v).sum())
        .collect();
    let lhs: f64 = kf.iter().zip(g).map(|(a, b)| a * a * b).sum();
    let ktg: Vec<f64> = (0..f.len())
        .map(|j| (0..rows).map(|i| kernel[i][j] * g[i]).sum())
        .collect();
    let sup = (0..rows)
        .filter(|&i| g[i] > 0.0)
        .map(|i| kernel[i].iter().zip(&ktg).map(|(k, v)| k * v).sum::<f64>())
        .fold(0.0, f64::max);
    Ok((lhs, sup * f.iter().map(|v| v * v).sum::<f64>()))
}

fn check_admissible(lambda: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0) || !(lambda.is_finite()) {
        return Err(Error::Parameter(format!("need δ > 0 and finite λ, got δ = {delta}, λ = {lambda}")));
    }
    if lambda < 4.0 * delta {
        return Err(Error::Precondition(format!("need λ ≥ 4δ, got λ = {lambda}, δ = {delta}")));
    }
    Ok(())
}

fn leq(a: f64, b: f64) -> bool {
    a <= b + POST_SLACK * b.abs().max(a.abs())
}

/// `φ = λ⁻¹ 1_{δ < I(wg) ≤ 2λ} I(wf) g` on one tree, with its lower bound on
/// the band and the energy bound `∫ wφ² ≤ 2(δ/λ) ∫ wf²` checked.
pub fn majorant_tree(
    tree: &TreeTopology,
    g: &[f64],
    f: &[f64],
    w: &[f64],
    lambda: f64,
    delta: f64,
) -> Result<MajorantResult> {
    let n = tree.len();
    if g.len() != n || f.len() != n || w.len() != n {
        return Err(Error::Parameter("g, f and w must have one value per node".into()));
    }
    if g.iter().chain(f).chain(w).any(|&v| !(v >= 0.0)) {
        return Err(Error::Precondition("g, f and w must be nonnegative".into()));
    }
    check_admissible(lambda, delta)?;
    if let Some(v) = is_superadditive(g, tree).violation {
        return Err(Error::Precondition(format!("g is not superadditive at node {v}")));
    }
    let wg: Vec<f64> = w.iter().zip(g).map(|(a, b)| a * b).collect();
    let wf: Vec<f64> = w.iter().zip(f).map(|(a, b)| a * b).collect();
    let iwg = tree_forward(tree, &wg);
    let iwf = tree_forward(tree, &wf);
    // slices of a bi-tree reach I(wg) through a different summation order,
    // so "≤ δ" is read up to rounding everywhere below
    let small = |v: f64| v <= delta * (1.0 + SUPERADDITIVE_SLACK);
    if let Some(bad) = (0..n).find(|&a| f[a] > 0.0 && !small(iwg[a])) {
        return Err(Error::Precondition(format!(
            "I(wg) = {} exceeds δ on supp f at node {bad}",
            iwg[bad]
        )));
    }
    let phi: Vec<f64> = (0..n)
        .map(|a| {
            if !small(iwg[a]) && iwg[a] <= 2.0 * lambda {
                iwf[a] * g[a] / lambda
            } else {
                0.0
            }
        })
        .collect();
    let wphi: Vec<f64> = w.iter().zip(&phi).map(|(a, b)| a * b).collect();
    let iwphi = tree_forward(tree, &wphi);
    let band: Vec<bool> = iwg.iter().map(|&v| lambda / 2.0 < v && v <= 2.0 * lambda).collect();

    let floor = 0.5 - delta / lambda;
    let mut lower: Option<f64> = None;
    for omega in (0..n).filter(|&o| band[o]) {
        let alpha_min = tree.ancestors(omega).find(|&a| small(iwg[a]));
        let drop = alpha_min.map_or(0.0, |a| iwg[a]);
        let expected = iwf[omega] * (iwg[omega] - drop) / lambda;
        let scale = iwf[omega] * iwg[omega] / lambda;
        if (iwphi[omega] - expected).abs() > POST_SLACK * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Postcondition(format!(
                "band identity fails at node {omega}: {} vs {expected}",
                iwphi[omega]
            )));
        }
        if !leq(floor * iwf[omega], iwphi[omega]) {
            return Err(Error::Postcondition(format!("band lower bound fails at node {omega}")));
        }
        if iwf[omega] > 0.0 {
            let r = iwphi[omega] / iwf[omega];
            lower = Some(lower.map_or(r, |l: f64| l.min(r)));
        }
    }
    let energy_in: f64 = w.iter().zip(&phi).map(|(a, b)| a * b * b).sum();
    let energy_ref: f64 = w.iter().zip(f).map(|(a, b)| a * b * b).sum();
    if !leq(energy_in, 2.0 * delta / lambda * energy_ref) {
        return Err(Error::Postcondition(format!(
            "energy {energy_in} exceeds 2(δ/λ)·{energy_ref}"
        )));
    }
    Ok(MajorantResult {
        phi,
        band,
        energy_in,
        energy_ref,
        lower_bound_const: lower,
    })
}

/// Provable band constant of the bi-tree majorant at ratio `δ/λ`.
pub fn bitree_lower_bound_floor(lambda: f64, delta: f64) -> f64 {
    (0.5 - delta / lambda) / 2.0
}

/// Slice-by-slice majorant for a product weight: each y-slice runs the tree
/// construction on `g(β_x) = Σ_{α_y' ≥ α_y} m(β_x × α_y') w_y(α_y')`.
pub fn majorant_bitree(
    topo: &BiTreeTopology,
    m: &[f64],
    w: &WeightFunction,
    lambda: f64,
    delta: f64,
) -> Result<MajorantResult> {
    let (wx, wy) = w
        .product_factors()
        .ok_or_else(|| Error::Tag("the bi-tree majorant needs a product weight".into()))?;
    if m.len() != topo.len() {
        return Err(Error::Parameter("m must have one value per bi-node".into()));
    }
    if m.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Precondition("m must be nonnegative".into()));
    }
    check_admissible(lambda, delta)?;
    if let Some(v) = is_superadditive_bitree(m, topo).violation {
        return Err(Error::Precondition(format!("m is not superadditive at bi-node {v}")));
    }
    let wm: Vec<f64> = w.values().iter().zip(m).map(|(a, b)| a * b).collect();
    let iwm = hardy_forward(topo, &wm);
    if let Some(bad) = (0..topo.len()).find(|&a| m[a] > 0.0 && iwm[a] > delta) {
        return Err(Error::Precondition(format!(
            "I(wm) = {} exceeds δ on supp m at bi-node {bad}",
            iwm[bad]
        )));
    }
    let (nx, ny) = (topo.tree_x.len(), topo.tree_y.len());
    // h(β_x, α_y) = Σ_{α_y' ≥ α_y} m(β_x × α_y') w_y(α_y')
    let mut h = vec![0.0; topo.len()];
    for x in 0..nx {
        let row: Vec<f64> = (0..ny).map(|y| m[x * ny + y] * wy[y]).collect();
        h[x * ny..(x + 1) * ny].copy_from_slice(&tree_forward(&topo.tree_y, &row));
    }
    let slices: Vec<Result<Vec<f64>>> = (0..ny)
        .into_par_iter()
        .map(|y| {
            let g: Vec<f64> = (0..nx).map(|x| h[x * ny + y]).collect();
            let f: Vec<f64> = (0..nx).map(|x| m[x * ny + y]).collect();
            majorant_tree(&topo.tree_x, &g, &f, wx, lambda, delta).map(|r| r.phi)
        })
        .collect();
    let mut phi = vec![0.0; topo.len()];
    for (y, slice) in slices.into_iter().enumerate() {
        for (x, v) in slice?.into_iter().enumerate() {
            phi[x * ny + y] = v;
        }
    }
    let wphi: Vec<f64> = w.values().iter().zip(&phi).map(|(a, b)| a * b).collect();
    let iwphi = hardy_forward(topo, &wphi);
    let band: Vec<bool> = iwm.iter().map(|&v| lambda < v && v <= 2.0 * lambda).collect();
    let floor = bitree_lower_bound_floor(lambda, delta);
    let mut lower: Option<f64> = None;
    for omega in (0..topo.len()).filter(|&o| band[o]) {
        let r = iwphi[omega] / iwm[omega];
        if !leq(floor, r) {
            return Err(Error::Postcondition(format!(
                "band lower bound {r} below {floor} at bi-node {omega}"
            )));
        }
        lower = Some(lower.map_or(r, |l: f64| l.min(r)));
    }
    let energy_in: f64 = w.values().iter().zip(&phi).map(|(a, b)| a * b * b).sum();
    let energy_ref: f64 = w.values().iter().zip(m).map(|(a, b)| a * b * b).sum();
    if !leq(energy_in, 2.0 * delta / lambda * energy_ref) {
        return Err(Error::Postcondition(format!(
            "energy {energy_in} exceeds 2(δ/λ)·{energy_ref}"
        )));
    }
    Ok(MajorantResult {
        phi,
        band,
        energy_in,
        energy_ref,
        lower_bound_const: lower,
    })
}

#[derive(Clone, Debug)]
pub struct Balanced<T = f64> {
    pub set: DownSet,
    pub measure: MassFunction<T>,
    pub iterations: usize,
}

/// Repeatedly discards `{V^{ν_k} ≤ A/3}` from a down-set starting at the
/// whole bi-tree until it stabilizes.
pub fn balance<T: Scalar>(
    topo: &BiTreeTopology,
    nu: &MassFunction<T>,
    w: &WeightFunction<T>,
    a: &T,
) -> Result<Balanced<T>> {
    if !(*a > T::zero()) {
        return Err(Error::Parameter("A must be positive".into()));
    }
    let total = nu.total_mass();
    let e = energy(topo, nu, w);
    // in floating point, A = ℰ/|ν| must count as equality
    let slack = if T::EXACT { T::zero() } else { T::lift(1e-12) * e.clone() };
    if nu.is_zero() || e.clone() + slack.clone() < a.clone() * total {
        return Err(Error::Precondition("need ℰ[ν] ≥ A|ν| with ν nonzero".into()));
    }
    let third = a.clone() / T::from_u8(3).expect("small integer");
    let mut mask = vec![true; topo.len()];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let current = nu.restrict(&mask);
        let field = potential(topo, &current, w);
        let mut changed = false;
        for (i, keep) in mask.iter_mut().enumerate() {
            if *keep && field.values[i] <= third {
                *keep = false;
                changed = true;
            }
        }
        if !changed {
            let set = DownSet::from_mask(topo, mask)?;
            let measure = current;
            let kept = energy(topo, &measure, w);
            let below = field
                .values
                .iter()
                .zip(set.mask())
                .any(|(v, &inside)| inside && *v <= third);
            if below || kept.clone() * T::from_u8(3).expect("small integer") + slack < e {
                return Err(Error::Postcondition("balancing guarantees failed".into()));
            }
            return Ok(Balanced {
                set,
                measure,
                iterations,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainLemmaRatio {
    /// `(∫ V_δ^μ dρ)³`
    pub lhs_cubed: f64,
    /// `δ ℰ_δ[μ] ℰ[ρ] |ρ|`
    pub rhs: f64,
    pub ratio: f64,
    pub pairing: f64,
    pub energy_delta: f64,
    pub energy_rho: f64,
    pub mass_rho: f64,
}

pub fn cece_ratio(
    topo: &BiTreeTopology,
    mu: &MassFunction,
    rho: &MassFunction,
    w: &WeightFunction,
    delta: f64,
) -> Result<MainLemmaRatio> {
    if !w.is_product() {
        return Err(Error::Tag("the main-lemma ratio needs a product weight".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("δ must be positive, got {delta}")));
    }
    let (level, field) = truncated_potential(topo, mu, w, &delta)?;
    let pairing: f64 = field.values.iter().zip(rho.values()).map(|(a, b)| a * b).sum();
    let adj = hardy_adjoint(topo, mu.values());
    let energy_delta: f64 = (0..topo.len())
        .filter(|&i| level.contains(i))
        .map(|i| w.get(i) * adj[i] * adj[i])
        .sum();
    let energy_rho = energy(topo, rho, w);
    let mass_rho = rho.total_mass();
    let lhs_cubed = pairing.powi(3);
    let rhs = delta * energy_delta * energy_rho * mass_rho;
    let ratio = if rhs > 0.0 {
        lhs_cubed / rhs
    } else if lhs_cubed > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(MainLemmaRatio {
        lhs_cubed,
        rhs,
        ratio,
        pairing,
        energy_delta,
        energy_rho,
        mass_rho,
    })
}

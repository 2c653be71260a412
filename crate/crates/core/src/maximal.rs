//! The μ-maximal operator on the bi-tree, the weight that turns a test
//! function into a Carleson-normalized extremizer of the embedding, and the
//! flow-based sparse selection behind the union-Carleson condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{carleson_mincut, embedding_constant, Witness, DEFAULT_EMBEDDING_TOL};
use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::hardy::{hardy_adjoint, MassFunction, WeightFunction};
use crate::poset::BiTreeTopology;
use crate::scalar::Scalar;

/// `⟨ψ⟩(α) = I*(ψμ)(α) / I*μ(α)` with `0/0 = 0`.
pub fn averages<T: Scalar>(topo: &BiTreeTopology, mu: &MassFunction<T>, psi: &[T]) -> (Vec<T>, Vec<T>) {
    let weighted: Vec<T> = psi.iter().zip(mu.values()).map(|(p, m)| p.clone() * m.clone()).collect();
    let num = hardy_adjoint(topo, &weighted);
    let den = hardy_adjoint(topo, mu.values());
    let avg = num
        .iter()
        .zip(&den)
        .map(|(a, d)| if d.is_zero() { T::zero() } else { a.abs() / d.clone() })
        .collect();
    (avg, num)
}

/// `M_μψ(ω) = max_{α ≥ ω} |⟨ψ⟩(α)|`.
pub fn maximal_function<T: Scalar>(topo: &BiTreeTopology, mu: &MassFunction<T>, psi: &[T]) -> Result<Vec<T>> {
    if psi.len() != topo.len() {
        return Err(Error::Parameter(format!(
            "test function has {} entries, topology has {}",
            psi.len(),
            topo.len()
        )));
    }
    let (avg, _) = averages(topo, mu, psi);
    Ok(prefix_max(topo, avg))
}

/// Running maximum over ancestors. Parents precede children in index order.
fn prefix_max<T: Scalar>(topo: &BiTreeTopology, mut values: Vec<T>) -> Vec<T> {
    for i in 0..topo.len() {
        let best = topo
            .parents(i)
            .map(|p| values[p].clone())
            .fold(values[i].clone(), T::max_of);
        values[i] = best;
    }
    values
}

/// `{M_μψ > s}` is a down-set for every `s`, i.e. `M_μψ` never increases going up.
pub fn superlevel_sets_are_down_sets<T: Scalar>(topo: &BiTreeTopology, m: &[T]) -> bool {
    (0..topo.len()).all(|i| topo.parents(i).all(|p| m[p] <= m[i]))
}

fn l2_squared<T: Scalar>(mu: &MassFunction<T>, f: &[T]) -> T {
    f.iter()
        .zip(mu.values())
        .fold(T::zero(), |s, (v, m)| s + v.clone() * v.clone() * m.clone())
}

#[derive(Clone, Debug)]
pub struct ExtremalWeight<T = f64> {
    pub weight: WeightFunction<T>,
    pub maximal: Vec<T>,
    /// For each node, the `α` whose set `A(α)` received it.
    pub owner: Vec<Option<usize>>,
    /// `Σ_β (M_μψ)²(β) μ(β)`.
    pub maximal_norm: T,
    /// `Σ_α w(α) I*(ψμ)(α)²`.
    pub embedding_sum: T,
}

/// The weight from the proof of `sup_{[w,μ]_C ≤ 1} [w,μ]_CE ≥ ‖M_μ‖²`:
/// `A'(α) = {ω ≤ α : M_μψ(ω) = ⟨ψ⟩(α)}`, disjointified along `order`
/// (heap order by default), and `w(α) = I*μ(α)^{-2} μ(A(α))`.
pub fn extremal_weight<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    psi: &[T],
    order: Option<&[usize]>,
) -> Result<ExtremalWeight<T>> {
    if psi.len() != topo.len() {
        return Err(Error::Parameter("test function length mismatch".into()));
    }
    if let Some(i) = psi.iter().position(|p| *p < T::zero()) {
        return Err(Error::Precondition(format!("ψ is negative at node {i}")));
    }
    if !(l2_squared(mu, psi) > T::zero()) {
        return Err(Error::Precondition("‖ψ‖_{L²(μ)} = 0".into()));
    }
    let n = topo.len();
    let rank: Vec<usize> = match order {
        None => (0..n).collect(),
        Some(ord) => {
            let mut rank = vec![usize::MAX; n];
            for (r, &a) in ord.iter().enumerate() {
                if a >= n || rank[a] != usize::MAX {
                    return Err(Error::Parameter("order is not a permutation of the nodes".into()));
                }
                rank[a] = r;
            }
            if ord.len() != n {
                return Err(Error::Parameter("order is not a permutation of the nodes".into()));
            }
            rank
        }
    };
    let (avg, num) = averages(topo, mu, psi);
    let maximal = prefix_max(topo, avg.clone());
    let den = hardy_adjoint(topo, mu.values());
    let mut owner = vec![None; n];
    let mut claimed = vec![T::zero(); n];
    for omega in 0..n {
        let target = &maximal[omega];
        let mut best: Option<usize> = None;
        for alpha in topo.ancestors(omega) {
            if !num[alpha].is_zero() && avg[alpha] == *target && best.map_or(true, |b| rank[alpha] < rank[b]) {
                best = Some(alpha);
            }
        }
        if let Some(a) = best {
            owner[omega] = Some(a);
            claimed[a] = claimed[a].clone() + mu.get(omega).clone();
        }
    }
    let values: Vec<T> = (0..n)
        .map(|a| {
            if claimed[a].is_zero() {
                T::zero()
            } else {
                claimed[a].clone() / (den[a].clone() * den[a].clone())
            }
        })
        .collect();
    let weight = WeightFunction::general(topo, values)?;
    let maximal_norm = l2_squared(mu, &maximal);
    let embedding_sum = num
        .iter()
        .zip(weight.values())
        .fold(T::zero(), |s, (f, w)| s + w.clone() * f.clone() * f.clone());
    Ok(ExtremalWeight {
        weight,
        maximal,
        owner,
        maximal_norm,
        embedding_sum,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalAudit {
    pub identity_holds: bool,
    pub carleson: f64,
    pub carleson_at_most_one: bool,
}

/// Checks `Σ (M_μψ)² μ = Σ w I*(ψμ)²` and `[w,μ]_C ≤ 1` (exactly for rationals,
/// to relative `1e-12` in floating point).
pub fn audit_extremal_weight<T: Scalar>(
    topo: &BiTreeTopology,
    mu: &MassFunction<T>,
    ew: &ExtremalWeight<T>,
) -> Result<ExtremalAudit> {
    let sol = carleson_mincut(topo, mu, &ew.weight, 1e-12)?;
    let (identity_holds, carleson_at_most_one) = if T::EXACT {
        (ew.maximal_norm == ew.embedding_sum, sol.value <= T::one())
    } else {
        let (a, b) = (ew.maximal_norm.to_f64(), ew.embedding_sum.to_f64());
        (
            (a - b).abs() <= 1e-12 * a.abs().max(b.abs()),
            sol.value.to_f64() <= 1.0 + 1e-12,
        )
    };
    Ok(ExtremalAudit {
        identity_holds,
        carleson: sol.value.to_f64(),
        carleson_at_most_one,
    })
}

/// Nonnegative heavy-tailed test function on `supp μ`: i.i.d. values, a
/// power singularity at a random support point, or an indicator of a box.
pub fn random_test_function(topo: &BiTreeTopology, mu: &MassFunction, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let support = mu.support();
    let mut psi = vec![0.0; topo.len()];
    if support.is_empty() {
        return psi;
    }
    match rng.gen_range(0..3) {
        0 => {
            for &i in &support {
                let u: f64 = rng.gen_range(1e-9..1.0);
                psi[i] = (-u.ln()).powi(2);
            }
        }
        1 => {
            let p = support[rng.gen_range(0..support.len())];
            let gamma = rng.gen_range(0.25..0.5);
            let adj = hardy_adjoint(topo, mu.values());
            for &i in &support {
                psi[i] = adj[topo.lca(i, p)].powf(-gamma);
            }
        }
        _ => {
            let root = rng.gen_range(0..topo.len());
            for &i in &support {
                psi[i] = if topo.le(i, root) { 1.0 } else { 1e-3 };
            }
        }
    }
    psi
}

/// Rounds of `ψ → w_ψ → |φ|` per random start, `φ` the embedding witness.
pub const PROBE_REFINEMENTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub start: usize,
    pub round: usize,
    pub maximal_ratio: f64,
    pub embedding: f64,
    pub carleson: f64,
    /// `[w,μ]_C · ‖M_μ|φ|‖² / ‖φ‖²` at the embedding witness `φ`: the
    /// layer-cake bound on the embedding constant.
    pub layer_cake_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalProbe {
    /// `max_ψ [w_ψ, μ]_CE` over extremal weights with certified `[w_ψ, μ]_C ≤ 1`.
    pub left: f64,
    /// `max_ψ ‖M_μψ‖² / ‖ψ‖²` over the same test functions.
    pub right: f64,
    pub gap: f64,
    /// Largest layer-cake bound over the samples.
    pub upper_proxy: f64,
    pub samples: Vec<ProbeSample>,
}

/// Estimates both sides of `sup_{[w,μ]_C ≤ 1} [w,μ]_CE = ‖M_μ‖²`.
///
/// Each of `sample_count` seeded random test functions is refined
/// [`PROBE_REFINEMENTS`] times by replacing `ψ` with `|φ|`, where `φ` is the
/// embedding witness for the extremal weight of `ψ`. The layer-cake bound
/// gives `‖M_μ|φ|‖²/‖φ‖² ≥ [w_ψ, μ]_CE ≥ ‖M_μψ‖²/‖ψ‖²`, so both estimates
/// only increase along a chain. Starts run in parallel.
pub fn maximal_equivalence_probe(
    topo: &BiTreeTopology,
    mu: &MassFunction,
    sample_count: usize,
    seed: u64,
) -> Result<MaximalProbe> {
    if sample_count == 0 {
        return Err(Error::Parameter("sample_count must be at least 1".into()));
    }
    if mu.is_zero() {
        return Err(Error::Precondition("μ ≡ 0".into()));
    }
    let chains: Vec<Vec<ProbeSample>> = (0..sample_count)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let mut psi = random_test_function(topo, mu, &mut rng);
            let mut chain = Vec::with_capacity(PROBE_REFINEMENTS + 1);
            for round in 0..=PROBE_REFINEMENTS {
                let (sample, next) = probe_one(topo, mu, &psi)?;
                chain.push(ProbeSample { start: s, round, ..sample });
                match next {
                    Some(next) => psi = next,
                    None => break,
                }
            }
            Ok(chain)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<ProbeSample> = chains.into_iter().flatten().collect();
    let left = samples.iter().map(|s| s.embedding).fold(0.0, f64::max);
    let right = samples.iter().map(|s| s.maximal_ratio).fold(0.0, f64::max);
    let upper_proxy = samples.iter().map(|s| s.layer_cake_bound).fold(0.0, f64::max);
    Ok(MaximalProbe {
        left,
        right,
        gap: left - right,
        upper_proxy,
        samples,
    })
}

fn probe_one(topo: &BiTreeTopology, mu: &MassFunction, psi: &[f64]) -> Result<(ProbeSample, Option<Vec<f64>>)> {
    let ew = extremal_weight(topo, mu, psi, None)?;
    let maximal_ratio = ew.maximal_norm / l2_squared(mu, psi);
    let audit = audit_extremal_weight(topo, mu, &ew)?;
    if !audit.carleson_at_most_one {
        return Err(Error::Postcondition(format!(
            "extremal weight has Carleson constant {} > 1",
            audit.carleson
        )));
    }
    let ce = embedding_constant(topo, mu, &ew.weight, DEFAULT_EMBEDDING_TOL)?;
    let mut phi = vec![0.0; topo.len()];
    if let Witness::TestFunction { support, values } = &ce.witness {
        for (&i, v) in support.iter().zip(values) {
            phi[i] = v.abs();
        }
    }
    let norm = l2_squared(mu, &phi);
    let (layer_cake_bound, next) = if norm > 0.0 {
        let m = maximal_function(topo, mu, &phi)?;
        (audit.carleson * l2_squared(mu, &m) / norm, Some(phi))
    } else {
        (0.0, None)
    };
    let sample = ProbeSample {
        start: 0,
        round: 0,
        maximal_ratio,
        embedding: ce.value,
        carleson: audit.carleson,
        layer_cake_bound,
    };
    Ok((sample, next))
}

// ------------------------------------------------------------ sparse

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub boundary: usize,
    pub member: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSelection {
    pub assignment: Vec<Assignment>,
    /// `(Q, μ(E_Q))` per collection member.
    pub totals: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SelectionOutcome {
    Feasible(SparseSelection),
    /// A union `Ω` of members with `Σ_{Q ⊆ Ω} w(Q) μ(Q)² > μ(Ω)`.
    Infeasible { union: Vec<usize>, lhs: f64, rhs: f64 },
}

/// Fractional sets `E_Q ⊆ Q` with `μ(E_Q) ≥ w(Q) μ(Q)²`, found by one
/// maximum flow: source → `Q` (demand), `Q` → boundary squares inside `Q`
/// (unbounded), square → sink (`μ(ω)`). Every demand is met exactly when no
/// union of members violates `Σ_{Q ⊆ Ω} w(Q) μ(Q)² ≤ μ(Ω)`; otherwise the
/// members on the source side of a minimum cut form such a union.
pub fn sparse_selection<T: Scalar>(
    topo: &BiTreeTopology,
    collection: &[usize],
    w: &WeightFunction<T>,
    mu: &MassFunction<T>,
) -> Result<SelectionOutcome> {
    if !mu.is_boundary_supported(topo) {
        return Err(Error::Precondition("sparse selection needs a boundary-supported μ".into()));
    }
    let mut seen = vec![false; topo.len()];
    for &q in collection {
        if q >= topo.len() || std::mem::replace(&mut seen[q], true) {
            return Err(Error::Parameter(format!("collection member {q} is out of range or repeated")));
        }
    }
    let adj = hardy_adjoint(topo, mu.values());
    let squares: Vec<usize> = topo.boundary().filter(|&b| !mu.get(b).is_zero()).collect();
    let (c, b) = (collection.len(), squares.len());
    let (s, t) = (0, 1 + c + b);
    let mut net: FlowNetwork<T> = FlowNetwork::new(c + b + 2);
    let demand: Vec<T> = collection
        .iter()
        .map(|&q| w.get(q).clone() * adj[q].clone() * adj[q].clone())
        .collect();
    let total_demand = demand.iter().fold(T::zero(), |a, d| a + d.clone());
    let infinity = total_demand.clone() + mu.total_mass() + T::one();
    let mut demand_edges = Vec::with_capacity(c);
    let mut links = Vec::new();
    for (k, &q) in collection.iter().enumerate() {
        demand_edges.push(net.add_edge(s, 1 + k, demand[k].clone()));
        for (l, &sq) in squares.iter().enumerate() {
            if topo.le(sq, q) {
                links.push((net.add_edge(1 + k, 1 + c + l, infinity.clone()), sq, q));
            }
        }
    }
    for (l, &sq) in squares.iter().enumerate() {
        net.add_edge(1 + c + l, t, mu.get(sq).clone());
    }
    let (value, _) = net.max_flow(s, t);
    let met = if T::EXACT {
        value == total_demand
    } else {
        (total_demand.to_f64() - value.to_f64()) <= 1e-12 * total_demand.to_f64().max(f64::MIN_POSITIVE)
    };
    if met {
        let assignment: Vec<Assignment> = links
            .iter()
            .filter_map(|&(e, sq, q)| {
                let f = net.flow_on(e);
                (f > T::zero()).then(|| Assignment {
                    boundary: sq,
                    member: q,
                    mass: f.to_f64(),
                })
            })
            .collect();
        let totals = collection
            .iter()
            .zip(&demand_edges)
            .map(|(&q, &e)| (q, net.flow_on(e).to_f64()))
            .collect();
        return Ok(SelectionOutcome::Feasible(SparseSelection { assignment, totals }));
    }
    let side = net.min_cut_source_side(t);
    let union: Vec<usize> = collection
        .iter()
        .enumerate()
        .filter(|(k, _)| side[1 + k])
        .map(|(_, &q)| q)
        .collect();
    let (lhs, rhs) = union_carleson_sides(topo, collection, w, mu, &union);
    if !(lhs > rhs) {
        return Err(Error::Solver(format!(
            "minimum cut did not certify a violating union ({} vs {})",
            lhs.to_f64(),
            rhs.to_f64()
        )));
    }
    Ok(SelectionOutcome::Infeasible {
        union,
        lhs: lhs.to_f64(),
        rhs: rhs.to_f64(),
    })
}

/// `(Σ_{Q ∈ collection, Q ⊆ Ω} w(Q) μ(Q)², μ(Ω))` for `Ω = ∪ generators`,
/// containment read on boundary squares.
pub fn union_carleson_sides<T: Scalar>(
    topo: &BiTreeTopology,
    collection: &[usize],
    w: &WeightFunction<T>,
    mu: &MassFunction<T>,
    generators: &[usize],
) -> (T, T) {
    let inside: Vec<bool> = topo
        .boundary()
        .map(|b| generators.iter().any(|&g| topo.le(b, g)))
        .collect();
    let boundary: Vec<usize> = topo.boundary().collect();
    let in_omega = |q: usize| boundary.iter().zip(&inside).all(|(&b, &i)| i || !topo.le(b, q));
    let adj = hardy_adjoint(topo, mu.values());
    let lhs = collection
        .iter()
        .filter(|&&q| in_omega(q))
        .fold(T::zero(), |s, &q| s + w.get(q).clone() * adj[q].clone() * adj[q].clone());
    let rhs = boundary
        .iter()
        .zip(&inside)
        .filter(|(_, &i)| i)
        .fold(T::zero(), |s, (&b, _)| s + mu.get(b).clone());
    (lhs, rhs)
}

/// Checks the three invariants of a selection.
pub fn verify_selection<T: Scalar>(
    topo: &BiTreeTopology,
    w: &WeightFunction<T>,
    mu: &MassFunction<T>,
    sel: &SparseSelection,
    tol: f64,
) -> Result<()> {
    let mut used = vec![0.0; topo.len()];
    for a in &sel.assignment {
        if !topo.le(a.boundary, a.member) {
            return Err(Error::Postcondition(format!(
                "square {} assigned to {} which does not contain it",
                a.boundary, a.member
            )));
        }
        used[a.boundary] += a.mass;
    }
    for (i, u) in used.iter().enumerate() {
        let m = mu.get(i).to_f64();
        if *u > m * (1.0 + tol) + tol * f64::MIN_POSITIVE {
            return Err(Error::Postcondition(format!("square {i} overused: {u} > {m}")));
        }
    }
    let adj = hardy_adjoint(topo, mu.values());
    for &(q, total) in &sel.totals {
        let need = (w.get(q).clone() * adj[q].clone() * adj[q].clone()).to_f64();
        if total < need * (1.0 - tol) {
            return Err(Error::Postcondition(format!("member {q} gets {total} < {need}")));
        }
    }
    Ok(())
}

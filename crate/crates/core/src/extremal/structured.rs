//! Closed-form evaluation of the counterexample families at large depth.
//!
//! Every weight here vanishes off the corner rectangles `[0,2^-a] × [0,2^-b]`,
//! so `V^μ(R) = Σ_{a ≤ A, b ≤ B} w(a,b) I*μ(a,b)` where `(A, B)` are the
//! corner levels of `R` (the smallest corner rectangle containing `R`). One
//! 2-D prefix table over the `(N+1)²` corner grid answers every node.

use std::collections::BTreeMap;

use num::{BigUint, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rect::{DyadicInterval, DyadicRect};
use crate::error::{Error, Result};
use crate::hardy::{MassFunction, WeightFunction};
use crate::poset::BiTreeTopology;

/// Largest depth for which corner tables are built.
pub const MAX_STRUCTURED_DEPTH: u32 = 2048;
/// Largest generator list for the Carleson upper bound (subset lattice).
pub const MAX_BOUND_GENERATORS: usize = 20;
/// Random boundary squares drawn per piece, on top of its four corners.
pub const RANDOM_SAMPLES_PER_PIECE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    SimpleCarNotRec,
    UpsetCarNotRec,
    RecNotEmbedding,
    SumOfProducts,
}

/// How the unit mass on a quadrant is laid out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantMass {
    /// One atom at the lowest-indexed boundary square.
    #[default]
    Atom,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PieceFamily {
    /// Mass sitting on `ω₀`.
    Anchor,
    /// Part of `μ_k`.
    Level { k: usize },
}

/// Mass spread uniformly over the boundary squares of `rect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub rect: DyadicRect,
    pub mass: f64,
    pub family: PieceFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `w = 1` exactly on the generators.
    Listed,
    /// Indicator of the up-set of the generators.
    UpSet,
    /// Number of generators below.
    UpSetCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredConstruction {
    pub kind: ConstructionKind,
    pub n: u32,
    pub m: usize,
    /// Largest `k` with a nonempty family `Q_{k,·}`.
    pub k_max: usize,
    /// `q[k][j - 1] = Q_{k,j}`.
    pub q: Vec<Vec<DyadicRect>>,
    pub pieces: Vec<Piece>,
    pub weight_rule: WeightRule,
    /// Corner levels of the weight generators.
    pub generators: Vec<(u32, u32)>,
}

fn check_power_of_two(n: u32) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::Parameter(format!("N must be a power of two ≥ 4, got {n}")));
    }
    if n > MAX_STRUCTURED_DEPTH {
        return Err(Error::Size(format!("N = {n} exceeds {MAX_STRUCTURED_DEPTH}")));
    }
    Ok(())
}

/// Largest `j` with `2^j + 1 ≤ N`, so that `Q_j^{++}` still fits in the tree.
pub fn family_size(n: u32) -> usize {
    let mut m = 0;
    while (1u64 << (m + 1)) < n as u64 {
        m += 1;
    }
    m
}

fn floor_log2(m: usize) -> usize {
    (usize::BITS - 1 - m.leading_zeros()) as usize
}

impl StructuredConstruction {
    /// `Q_i = [0, 2^{-i+1}] × [0, 2^{-N+i}]`, unit masses on `ω₀` and each
    /// `Q_i^{++}`, `w = 1` on `{ω₀, Q_1, …, Q_N}`.
    pub fn simple_car_not_rec(n: u32, layout: QuadrantMass) -> Result<Self> {
        if n == 0 || n > MAX_STRUCTURED_DEPTH {
            return Err(Error::Parameter(format!("N must lie in 1..={MAX_STRUCTURED_DEPTH}, got {n}")));
        }
        let q: Vec<DyadicRect> = (1..=n).map(|i| DyadicRect::corner(i - 1, n - i)).collect();
        let mut pieces = vec![Piece {
            rect: DyadicRect::corner(n, n),
            mass: 1.0,
            family: PieceFamily::Anchor,
        }];
        for (i, qi) in (1..=n).zip(&q) {
            let rect = match layout {
                QuadrantMass::Uniform => qi.quadrant(),
                QuadrantMass::Atom => DyadicRect::new(
                    DyadicInterval::new(n, BigUint::one() << (n - i) as usize)?,
                    DyadicInterval::new(n, BigUint::one() << (i - 1) as usize)?,
                ),
            };
            pieces.push(Piece {
                rect,
                mass: 1.0,
                family: PieceFamily::Level { k: 0 },
            });
        }
        let mut generators = vec![(n, n)];
        generators.extend(q.iter().map(|r| r.corner_levels()));
        Ok(Self {
            kind: ConstructionKind::SimpleCarNotRec,
            n,
            m: n as usize,
            k_max: 0,
            q: vec![q],
            pieces,
            weight_rule: WeightRule::Listed,
            generators,
        })
    }

    /// `Q_j = [0, 2^{-2^j}] × [0, 2^{-N/2^j}]`, mass `1/N` uniform on each
    /// `Q_j^{++}` and on `ω₀`, `w` the indicator of the up-set of the `Q_j`.
    pub fn upset_car_not_rec(n: u32) -> Result<Self> {
        Self::upset_family(n, ConstructionKind::UpsetCarNotRec, WeightRule::UpSet)
    }

    /// As [`Self::upset_car_not_rec`] with `w = Σ_j 1_{R ⊇ Q_j}`.
    pub fn sum_of_products(n: u32) -> Result<Self> {
        Self::upset_family(n, ConstructionKind::SumOfProducts, WeightRule::UpSetCount)
    }

    fn upset_family(n: u32, kind: ConstructionKind, rule: WeightRule) -> Result<Self> {
        check_power_of_two(n)?;
        let m = family_size(n);
        let q = base_family(n, m);
        let inv_n = 1.0 / n as f64;
        let mut pieces: Vec<Piece> = q
            .iter()
            .map(|r| Piece {
                rect: r.quadrant(),
                mass: inv_n,
                family: PieceFamily::Level { k: 0 },
            })
            .collect();
        pieces.push(Piece {
            rect: DyadicRect::corner(n, n),
            mass: inv_n,
            family: PieceFamily::Anchor,
        });
        Ok(Self {
            kind,
            n,
            m,
            k_max: 0,
            generators: q.iter().map(|r| r.corner_levels()).collect(),
            q: vec![q],
            pieces,
            weight_rule: rule,
        })
    }

    /// `μ = μ₀ + Σ_{k=1}^{K} μ_k` with `μ_k` of mass `2^{-2k}/N` uniform on each
    /// `Q_{k,j}^{++}`, `Q_{k,j}` the intersection of `2^k` consecutive `Q_j`.
    pub fn rec_not_embedding(n: u32) -> Result<Self> {
        Self::rec_family(n, 4)
    }

    pub(crate) fn rec_family(n: u32, min_m: usize) -> Result<Self> {
        check_power_of_two(n)?;
        let m = family_size(n);
        if m < min_m {
            return Err(Error::Parameter(format!("N = {n} gives M = {m} < {min_m}")));
        }
        let k_max = floor_log2(m);
        let inv_n = 1.0 / n as f64;
        let mut q = Vec::with_capacity(k_max + 1);
        let mut pieces = Vec::new();
        for k in 0..=k_max {
            let span = 1usize << k;
            let family: Vec<DyadicRect> = (1..=m + 1 - span)
                .map(|j| DyadicRect::corner(1 << (j + span - 1), n >> j))
                .collect();
            let mass = inv_n * 0.25f64.powi(k as i32);
            pieces.extend(family.iter().map(|r| Piece {
                rect: r.quadrant(),
                mass,
                family: PieceFamily::Level { k },
            }));
            q.push(family);
        }
        Ok(Self {
            kind: ConstructionKind::RecNotEmbedding,
            n,
            m,
            k_max,
            generators: q[0].iter().map(|r| r.corner_levels()).collect(),
            q,
            pieces,
            weight_rule: WeightRule::UpSet,
        })
    }

    /// `w` on the corner rectangle `[0,2^-a] × [0,2^-b]`.
    pub fn corner_weight(&self, a: u32, b: u32) -> f64 {
        let below = |&&(p, q): &&(u32, u32)| a <= p && b <= q;
        match self.weight_rule {
            WeightRule::Listed => {
                if self.generators.contains(&(a, b)) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightRule::UpSet => {
                if self.generators.iter().any(|g| below(&g)) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightRule::UpSetCount => self.generators.iter().filter(|g| below(g)).count() as f64,
        }
    }

    /// `I*μ` on the corner rectangle `(a, b)`, restricted to pieces passing `keep`.
    pub fn corner_mass(&self, a: u32, b: u32, keep: impl Fn(&PieceFamily) -> bool) -> f64 {
        let (cx, cy) = (DyadicInterval::corner(a), DyadicInterval::corner(b));
        self.pieces
            .iter()
            .filter(|p| keep(&p.family))
            .map(|p| p.mass * cx.overlap_fraction(&p.rect.x) * cy.overlap_fraction(&p.rect.y))
            .sum()
    }

    /// Corner levels at which `V` is constant on the boundary squares of the piece.
    pub fn piece_levels(&self, piece: &Piece) -> Result<(u32, u32)> {
        let flat = |i: &DyadicInterval| !i.off.is_zero() || i.gen == self.n;
        if !(flat(&piece.rect.x) && flat(&piece.rect.y)) {
            return Err(Error::Precondition(format!(
                "potential is not constant on piece {}",
                piece.rect
            )));
        }
        Ok(piece.rect.corner_levels())
    }

    fn families(&self) -> Vec<PieceFamily> {
        let mut out: Vec<PieceFamily> = Vec::new();
        for p in &self.pieces {
            if !out.contains(&p.family) {
                out.push(p.family);
            }
        }
        out
    }

    /// `overlap(corner(a), piece axis)` for `a = 0..=N`, per piece and axis.
    fn axis_fractions(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let axis = |i: &DyadicInterval| -> Vec<f64> {
            let level = i.corner_level();
            (0..=n)
                .map(|a| {
                    if a <= level {
                        1.0
                    } else if a > i.gen && i.off.is_zero() {
                        0.5f64.powi((a - i.gen) as i32)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        self.pieces.iter().map(|p| (axis(&p.rect.x), axis(&p.rect.y))).collect()
    }

    fn grid(&self) -> CornerGrid {
        let side = self.n as usize + 1;
        let families = self.families();
        let fractions = self.axis_fractions();
        let group: Vec<usize> = self
            .pieces
            .iter()
            .map(|p| families.iter().position(|f| *f == p.family).expect("listed"))
            .collect();
        let g = families.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..side)
            .into_par_iter()
            .map(|a| {
                let mut weights = Vec::with_capacity(side);
                let mut masses = vec![0.0; side * g];
                for b in 0..side {
                    let w = self.corner_weight(a as u32, b as u32);
                    weights.push(w);
                    if w == 0.0 {
                        continue;
                    }
                    for (i, p) in self.pieces.iter().enumerate() {
                        let (fx, fy) = &fractions[i];
                        masses[b * g + group[i]] += p.mass * fx[a] * fy[b];
                    }
                }
                (weights, masses)
            })
            .collect();
        let mut weights = Vec::with_capacity(side * side);
        let mut masses = Vec::with_capacity(side * side * g);
        for (w, m) in rows {
            weights.extend(w);
            masses.extend(m);
        }
        CornerGrid {
            side,
            families,
            weights,
            masses,
        }
    }

    /// Prefix table of `V^μ` for the pieces passing `keep`.
    pub fn potential_table(&self, keep: impl Fn(&PieceFamily) -> bool) -> PotentialTable {
        self.grid().table(keep)
    }

    /// `V^μ(node)` for the full measure.
    pub fn potential(&self, node: &DyadicRect) -> f64 {
        self.potential_table(|_| true).at_rect(node)
    }

    /// `ℰ = Σ w (I*μ)²` for the pieces passing `keep`.
    pub fn energy(&self, keep: impl Fn(&PieceFamily) -> bool) -> f64 {
        self.grid().energy(keep)
    }

    /// `∫ (V)² dμ` over the pieces passing `keep`, `V` read from `table`.
    pub fn integral_of_square(&self, table: &PotentialTable, keep: impl Fn(&PieceFamily) -> bool) -> Result<f64> {
        let mut total = 0.0;
        for p in self.pieces.iter().filter(|p| keep(&p.family)) {
            let (a, b) = self.piece_levels(p)?;
            total += p.mass * table.at(a, b).powi(2);
        }
        Ok(total)
    }

    /// `ℰ[ν 1_{ω₀}] / ν(ω₀) = ν(ω₀) Σ_{R ∋ ω₀} w(R)`; `None` without mass at `ω₀`.
    pub fn anchor_hereditary_ratio(&self) -> Option<f64> {
        let n = self.n;
        let m0 = self.corner_mass(n, n, |_| true);
        if m0 <= 0.0 {
            return None;
        }
        let side = n + 1;
        let wsum: f64 = (0..side * side)
            .into_par_iter()
            .map(|i| self.corner_weight(i / side, i % side))
            .sum();
        Some(m0 * wsum)
    }

    /// Upper bound for the Carleson constant. A down-set `D` only sees
    /// weighted rectangles whose generators all lie in `D`, and its mass is at
    /// least that of the pieces inside the generators it contains, so
    /// `[w,μ]_C ≤ max_J Σ_{Q : ∅ ≠ J(Q) ⊆ J} w(Q) μ(Q)² / μ(∪J)`.
    pub fn carleson_upper_bound(&self) -> Result<f64> {
        let g = self.generators.len();
        if g > MAX_BOUND_GENERATORS {
            return Err(Error::Size(format!(
                "{g} generators exceed the subset-lattice cap {MAX_BOUND_GENERATORS}"
            )));
        }
        let full = 1usize << g;
        let gens: Vec<DyadicRect> = self.generators.iter().map(|&(a, b)| DyadicRect::corner(a, b)).collect();
        let mut numer = vec![0.0f64; full];
        let side = self.n + 1;
        for a in 0..side {
            for b in 0..side {
                let w = self.corner_weight(a, b);
                if w == 0.0 {
                    continue;
                }
                let q = DyadicRect::corner(a, b);
                let mask = gens
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| q.contains(r))
                    .fold(0usize, |s, (i, _)| s | 1 << i);
                debug_assert!(mask != 0);
                let mq = self.corner_mass(a, b, |_| true);
                numer[mask] += w * mq * mq;
            }
        }
        // mass of pieces whose container set P misses J, indexed by P
        let mut outside = vec![0.0f64; full];
        let mut total = 0.0;
        for p in &self.pieces {
            let mask = gens
                .iter()
                .enumerate()
                .filter(|(_, r)| r.contains(&p.rect))
                .fold(0usize, |s, (i, _)| s | 1 << i);
            outside[mask] += p.mass;
            total += p.mass;
        }
        zeta_subsets(&mut numer, g);
        zeta_subsets(&mut outside, g);
        let mut best = 0.0f64;
        for j in 1..full {
            if numer[j] == 0.0 {
                continue;
            }
            let den = total - outside[(full - 1) & !j];
            if den <= 0.0 {
                return Ok(f64::INFINITY);
            }
            best = best.max(numer[j] / den);
        }
        Ok(best)
    }

    /// `#C^I` for every interval `I = [lo, hi]` of generator indices (1-based):
    /// the corner rectangles whose contained generators are exactly `I`.
    pub fn interval_counts(&self) -> BTreeMap<(usize, usize), u64> {
        let mut out = BTreeMap::new();
        let side = self.n + 1;
        for a in 0..side {
            for b in 0..side {
                let inside: Vec<usize> = self
                    .generators
                    .iter()
                    .enumerate()
                    .filter(|(_, &(p, q))| a <= p && b <= q)
                    .map(|(i, _)| i + 1)
                    .collect();
                if let (Some(&lo), Some(&hi)) = (inside.first(), inside.last()) {
                    *out.entry((lo, hi)).or_insert(0) += 1;
                }
            }
        }
        out
    }

    /// The four corner squares of every piece plus
    /// [`RANDOM_SAMPLES_PER_PIECE`] seeded random squares inside it.
    pub fn sample_points(&self, seed: u64) -> Vec<(usize, DyadicRect)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let mut out = Vec::new();
        for (idx, p) in self.pieces.iter().enumerate() {
            let span = |i: &DyadicInterval| {
                let shift = (n - i.gen) as usize;
                (&i.off << shift, shift)
            };
            let (lx, sx) = span(&p.rect.x);
            let (ly, sy) = span(&p.rect.y);
            let last = |lo: &BigUint, s: usize| lo + ((BigUint::one() << s) - 1u32);
            let point = |x: BigUint, y: BigUint| {
                DyadicRect::new(DyadicInterval { gen: n, off: x }, DyadicInterval { gen: n, off: y })
            };
            for x in [lx.clone(), last(&lx, sx)] {
                for y in [ly.clone(), last(&ly, sy)] {
                    out.push((idx, point(x.clone(), y)));
                }
            }
            for _ in 0..RANDOM_SAMPLES_PER_PIECE {
                let x = &lx + random_below_pow2(&mut rng, sx);
                let y = &ly + random_below_pow2(&mut rng, sy);
                out.push((idx, point(x, y)));
            }
        }
        out
    }

    /// `max_k sup_{supp μ_k} Σ_{n ≥ k} V^{μ_n}` over the sampling plan.
    pub fn rec_surrogate(&self, seed: u64) -> RecSurrogate {
        let grid = self.grid();
        let samples = self.sample_points(seed);
        let mut per_level = Vec::with_capacity(self.k_max + 1);
        for k in 0..=self.k_max {
            let table = grid.table(|f| matches!(f, PieceFamily::Level { k: l } if *l >= k));
            let worst = samples
                .iter()
                .filter(|(i, _)| self.pieces[*i].family == PieceFamily::Level { k })
                .map(|(_, r)| table.at_rect(r))
                .fold(0.0f64, f64::max);
            per_level.push(worst);
        }
        RecSurrogate {
            value: per_level.iter().copied().fold(0.0, f64::max),
            per_level,
            samples: samples.len(),
        }
    }

    /// `V^μ` for the quadrant pieces (the anchor mass left out) at `ω₀`, at
    /// the `Q_j` and on the sampling plan.
    pub fn potential_profile(&self, seed: u64) -> PotentialProfile {
        let table = self.potential_table(|f| *f != PieceFamily::Anchor);
        let at_generators = self.q[0].iter().map(|r| table.at_rect(r)).fold(0.0, f64::max);
        let at_samples = self
            .sample_points(seed)
            .iter()
            .filter(|(i, _)| self.pieces[*i].family != PieceFamily::Anchor)
            .map(|(_, r)| table.at_rect(r))
            .fold(0.0, f64::max);
        PotentialProfile {
            at_anchor: table.at(self.n, self.n),
            max_at_generators: at_generators,
            max_at_samples: at_samples,
        }
    }

    /// Test of the embedding with `f = I*μ₀`:
    /// `∫ (I(fw))² dμ` against `Σ f² w`.
    pub fn embedding_probe(&self) -> Result<EmbeddingProbe> {
        let level0 = |f: &PieceFamily| *f == PieceFamily::Level { k: 0 };
        let table = self.potential_table(level0);
        let numerator = self.integral_of_square(&table, |_| true)?;
        let denominator = self.energy(level0);
        Ok(EmbeddingProbe {
            numerator,
            denominator,
            ratio: numerator / denominator,
        })
    }

    /// Dense copy on the bi-tree of depth `(N, N)`.
    pub fn materialize(&self) -> Result<(BiTreeTopology, MassFunction, WeightFunction)> {
        let n = self.n;
        let topo = BiTreeTopology::new(n, n)?;
        let mut mass = vec![0.0; topo.len()];
        for p in &self.pieces {
            let (sx, sy) = (n - p.rect.x.gen, n - p.rect.y.gen);
            let count = 1usize << (sx + sy);
            let each = p.mass / count as f64;
            let base = |i: &DyadicInterval, s: u32| -> Result<usize> {
                let off: usize = num::ToPrimitive::to_usize(&i.off)
                    .ok_or_else(|| Error::Size("offset exceeds usize".into()))?;
                Ok(off << s)
            };
            let (bx, by) = (base(&p.rect.x, sx)?, base(&p.rect.y, sy)?);
            for dx in 0..1usize << sx {
                for dy in 0..1usize << sy {
                    let x = topo.tree_x.index(n, bx + dx).expect("inside the tree");
                    let y = topo.tree_y.index(n, by + dy).expect("inside the tree");
                    mass[topo.index(crate::poset::BiNode::new(x, y))] += each;
                }
            }
        }
        let mu = MassFunction::new(&topo, mass)?;
        let w = match self.weight_rule {
            WeightRule::UpSetCount => {
                let terms = self
                    .generators
                    .iter()
                    .map(|&(p, q)| (corner_indicator(&topo, p, true), corner_indicator(&topo, q, false)))
                    .collect();
                WeightFunction::sum_of_products(&topo, terms)?
            }
            _ => {
                let values = (0..topo.len())
                    .map(|i| {
                        let a = topo.address(i);
                        if a.off_x == 0 && a.off_y == 0 {
                            self.corner_weight(a.gen_x, a.gen_y)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let anchor = DyadicRect::corner(n, n).index_in(&topo).expect("ω₀ is in the tree");
                WeightFunction::hooked(&topo, values, anchor)?
            }
        };
        Ok((topo, mu, w))
    }
}

/// `1` on the corner intervals of generation `≤ level`, one axis.
fn corner_indicator(topo: &BiTreeTopology, level: u32, x_axis: bool) -> Vec<f64> {
    let tree = if x_axis { &topo.tree_x } else { &topo.tree_y };
    (0..tree.len())
        .map(|i| {
            if tree.offset(i) == 0 && tree.generation(i) <= level {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn base_family(n: u32, m: usize) -> Vec<DyadicRect> {
    (1..=m).map(|j| DyadicRect::corner(1 << j, n >> j)).collect()
}

/// In place: `f(S) ← Σ_{T ⊆ S} f(T)`.
fn zeta_subsets(f: &mut [f64], bits: usize) {
    for b in 0..bits {
        for s in 0..f.len() {
            if s & (1 << b) != 0 {
                f[s] += f[s ^ (1 << b)];
            }
        }
    }
}

fn random_below_pow2(rng: &mut ChaCha8Rng, bits: usize) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let words = bits.div_ceil(32);
    let mut digits: Vec<u32> = (0..words).map(|_| rng.gen()).collect();
    let spare = words * 32 - bits;
    if spare > 0 {
        let last = digits.last_mut().expect("nonempty");
        *last >>= spare;
    }
    BigUint::new(digits)
}

struct CornerGrid {
    side: usize,
    families: Vec<PieceFamily>,
    /// `w(a, b)` row-major.
    weights: Vec<f64>,
    /// `I*μ(a, b)` split by family, `families.len()` entries per corner.
    masses: Vec<f64>,
}

impl CornerGrid {
    fn restricted_mass(&self, keep: &impl Fn(&PieceFamily) -> bool) -> Vec<f64> {
        let g = self.families.len();
        let sel: Vec<bool> = self.families.iter().map(keep).collect();
        self.masses
            .chunks(g)
            .map(|c| c.iter().zip(&sel).filter(|(_, &k)| k).map(|(m, _)| m).sum())
            .collect()
    }

    fn energy(&self, keep: impl Fn(&PieceFamily) -> bool) -> f64 {
        let m = self.restricted_mass(&keep);
        self.weights.iter().zip(&m).map(|(w, m)| w * m * m).sum()
    }

    fn table(&self, keep: impl Fn(&PieceFamily) -> bool) -> PotentialTable {
        let side = self.side;
        let m = self.restricted_mass(&keep);
        let mut values: Vec<f64> = self.weights.iter().zip(&m).map(|(w, m)| w * m).collect();
        for a in 0..side {
            for b in 0..side {
                let mut s = values[a * side + b];
                if a > 0 {
                    s += values[(a - 1) * side + b];
                }
                if b > 0 {
                    s += values[a * side + b - 1];
                }
                if a > 0 && b > 0 {
                    s -= values[(a - 1) * side + b - 1];
                }
                values[a * side + b] = s;
            }
        }
        PotentialTable { side, values }
    }
}

/// `V` as a function of corner levels.
#[derive(Clone, Debug)]
pub struct PotentialTable {
    side: usize,
    values: Vec<f64>,
}

impl PotentialTable {
    pub fn at(&self, a: u32, b: u32) -> f64 {
        self.values[a as usize * self.side + b as usize]
    }

    pub fn at_rect(&self, r: &DyadicRect) -> f64 {
        let (a, b) = r.corner_levels();
        self.at(a, b)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Free-function form of [`StructuredConstruction::potential`].
pub fn structured_potential(c: &StructuredConstruction, node: &DyadicRect) -> f64 {
    c.potential(node)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecSurrogate {
    pub value: f64,
    pub per_level: Vec<f64>,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub at_anchor: f64,
    pub max_at_generators: f64,
    pub max_at_samples: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProbe {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

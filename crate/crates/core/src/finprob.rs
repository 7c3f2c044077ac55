//! Finite commutative probability spaces with faithful rational states.
//!
//! A unital subalgebra of functions on a finite atom set is the algebra of
//! functions constant on the blocks of a partition, so subalgebras are handled
//! as [`Partition`]s and conditional expectations as weighted block averages.

use std::collections::HashMap;
use std::hash::Hash;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{format_rational, RatMatrix, Rational};

/// Atom space with strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinSpace {
    weights: Vec<Rational>,
}

impl FinSpace {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("a space needs at least one atom".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_positive()) {
            return Err(Error::InvalidInput(format!(
                "atom {i} has weight {}, the state must be faithful",
                format_rational(&weights[i])
            )));
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidInput(format!("weights sum to {}, not 1", format_rational(&total))));
        }
        Ok(FinSpace { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        FinSpace { weights: vec![Rational::new(1.into(), (n as i64).into()); n] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> &Rational {
        &self.weights[i]
    }

    /// Product space; atom `(i, j)` has index `i + self.len() * j`.
    pub fn product(&self, other: &FinSpace) -> FinSpace {
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for wj in &other.weights {
            for wi in &self.weights {
                weights.push(wi * wj);
            }
        }
        FinSpace { weights }
    }

    /// The state ψ(f) = Σ wᵢ fᵢ.
    pub fn expectation(&self, f: &AlgebraElement) -> Rational {
        assert_eq!(f.len(), self.len(), "element hosted on a different space");
        self.weights.iter().zip(&f.values).map(|(w, v)| w * v).sum()
    }
}

/// A rational-valued function on the atoms of a [`FinSpace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgebraElement {
    pub values: Vec<Rational>,
}

impl AlgebraElement {
    pub fn new(values: Vec<Rational>) -> Self {
        AlgebraElement { values }
    }

    pub fn constant(n: usize, c: Rational) -> Self {
        AlgebraElement { values: vec![c; n] }
    }

    pub fn indicator(n: usize, atoms: impl IntoIterator<Item = usize>) -> Self {
        let mut values = vec![Rational::zero(); n];
        for i in atoms {
            values[i] = Rational::one();
        }
        AlgebraElement { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mul(&self, other: &AlgebraElement) -> AlgebraElement {
        AlgebraElement { values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() }
    }

    pub fn sup_norm(&self) -> Rational {
        self.values.iter().map(|v| v.abs()).max().unwrap_or_else(Rational::zero)
    }
}

/// Disjoint-set forest over `0..n`.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb as u32,
            std::cmp::Ordering::Greater => self.parent[rb] = ra as u32,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub(crate) fn into_partition(mut self) -> Partition {
        let n = self.parent.len();
        Partition::from_keys((0..n).map(|i| self.find(i)))
    }
}

/// A partition of `0..n`, standing for the subalgebra of block-constant
/// functions. Block ids are numbered in order of first occurrence, so equal
/// partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    block_of: Vec<u32>,
    blocks: usize,
}

impl Partition {
    /// One block: the scalars.
    pub fn trivial(n: usize) -> Self {
        Partition { block_of: vec![0; n], blocks: usize::from(n > 0) }
    }

    /// Singletons: the full algebra.
    pub fn discrete(n: usize) -> Self {
        Partition { block_of: (0..n as u32).collect(), blocks: n }
    }

    /// The partition generated by a key function on atoms.
    pub fn from_keys<K: Hash + Eq, I: IntoIterator<Item = K>>(keys: I) -> Self {
        let mut ids: HashMap<K, u32> = HashMap::new();
        let block_of: Vec<u32> = keys
            .into_iter()
            .map(|k| {
                let next = ids.len() as u32;
                *ids.entry(k).or_insert(next)
            })
            .collect();
        Partition { block_of, blocks: ids.len() }
    }

    /// Builds from explicit block lists, which must be nonempty and exhaust `0..n`
    /// exactly once.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut label = vec![u32::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidInput(format!("block {b} is empty")));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::InvalidInput(format!("atom {i} out of range 0..{n}")));
                }
                if label[i] != u32::MAX {
                    return Err(Error::InvalidInput(format!("atom {i} appears in two blocks")));
                }
                label[i] = b as u32;
            }
        }
        if let Some(i) = label.iter().position(|&l| l == u32::MAX) {
            return Err(Error::InvalidInput(format!("atom {i} is in no block")));
        }
        Ok(Self::from_keys(label))
    }

    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    pub fn block_of(&self, atom: usize) -> usize {
        self.block_of[atom] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.block_of
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b as usize].push(i);
        }
        out
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks <= 1
    }

    pub fn is_discrete(&self) -> bool {
        self.blocks == self.len()
    }

    /// True when every block of `finer` lies inside a block of `self`, i.e. the
    /// subalgebra of `self` is contained in that of `finer`.
    pub fn is_coarser_than(&self, finer: &Partition) -> bool {
        self.coarsening_map(finer).is_some()
    }

    /// For `self` coarser than `finer`: the block of `self` containing each
    /// block of `finer`.
    pub fn coarsening_map(&self, finer: &Partition) -> Option<Vec<u32>> {
        if self.len() != finer.len() {
            return None;
        }
        let mut map = vec![u32::MAX; finer.blocks];
        for (i, &fb) in finer.block_of.iter().enumerate() {
            let slot = &mut map[fb as usize];
            if *slot == u32::MAX {
                *slot = self.block_of[i];
            } else if *slot != self.block_of[i] {
                return None;
            }
        }
        Some(map)
    }

    /// First atom pair witnessing that `self` is not coarser than `finer`.
    pub fn coarseness_witness(&self, finer: &Partition) -> Option<(usize, usize)> {
        let mut rep = vec![usize::MAX; finer.blocks];
        for (i, &fb) in finer.block_of.iter().enumerate() {
            let r = &mut rep[fb as usize];
            if *r == usize::MAX {
                *r = i;
            } else if self.block_of[*r] != self.block_of[i] {
                return Some((*r, i));
            }
        }
        None
    }

    /// Common refinement: the subalgebra generated by both.
    pub fn join(&self, other: &Partition) -> Partition {
        assert_eq!(self.len(), other.len(), "partitions of different spaces");
        Partition::from_keys(self.block_of.iter().zip(&other.block_of).map(|(a, b)| (*a, *b)))
    }

    /// Finest common coarsening: the intersection subalgebra.
    pub fn meet(&self, other: &Partition) -> Partition {
        assert_eq!(self.len(), other.len(), "partitions of different spaces");
        let mut uf = UnionFind::new(self.len());
        let mut first_a = vec![usize::MAX; self.blocks];
        let mut first_b = vec![usize::MAX; other.blocks];
        for i in 0..self.len() {
            for (first, b) in [(&mut first_a, self.block_of[i]), (&mut first_b, other.block_of[i])] {
                let f = &mut first[b as usize];
                if *f == usize::MAX {
                    *f = i;
                } else {
                    uf.union(*f, i);
                }
            }
        }
        uf.into_partition()
    }

    /// Pulls back along a point map `phi: 0..n → 0..self.len()`.
    pub fn pullback(&self, n: usize, phi: impl Fn(usize) -> usize) -> Partition {
        Partition::from_keys((0..n).map(|x| self.block_of[phi(x)]))
    }

    pub fn is_measurable(&self, f: &AlgebraElement) -> bool {
        let mut value: Vec<Option<&Rational>> = vec![None; self.blocks];
        f.values.iter().zip(&self.block_of).all(|(v, &b)| match value[b as usize] {
            None => {
                value[b as usize] = Some(v);
                true
            }
            Some(prev) => prev == v,
        })
    }

    fn block_weights(&self, space: &FinSpace) -> Vec<Rational> {
        let mut w = vec![Rational::zero(); self.blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            w[b as usize] += space.weight(i);
        }
        w
    }
}

fn check_host(space: &FinSpace, p: &Partition) -> Result<()> {
    if p.len() != space.len() {
        return Err(Error::InvalidInput(format!(
            "partition on {} atoms used with a space of {} atoms",
            p.len(),
            space.len()
        )));
    }
    Ok(())
}

/// The ψ-preserving conditional expectation onto the block-constant functions.
pub fn cond_exp(space: &FinSpace, p: &Partition, f: &AlgebraElement) -> Result<AlgebraElement> {
    check_host(space, p)?;
    if f.len() != space.len() {
        return Err(Error::InvalidInput("element hosted on a different space".into()));
    }
    let mut num = vec![Rational::zero(); p.block_count()];
    let mut den = vec![Rational::zero(); p.block_count()];
    for (i, v) in f.values.iter().enumerate() {
        let b = p.block_of(i);
        num[b] += space.weight(i) * v;
        den[b] += space.weight(i);
    }
    let avg: Vec<Rational> = num.into_iter().zip(den).map(|(n, d)| n / d).collect();
    Ok(AlgebraElement { values: (0..space.len()).map(|i| avg[p.block_of(i)].clone()).collect() })
}

/// Orbits of a permutation of the atoms.
pub fn orbit_partition(perm: &[usize]) -> Result<Partition> {
    let n = perm.len();
    let mut hit = vec![false; n];
    for &y in perm {
        if y >= n || std::mem::replace(&mut hit[y], true) {
            return Err(Error::InvalidInput("map is not a permutation".into()));
        }
    }
    let mut label = vec![u32::MAX; n];
    let mut next = 0;
    for s in 0..n {
        let mut x = s;
        while label[x] == u32::MAX {
            label[x] = next;
            x = perm[x];
        }
        if label[s] == next {
            next += 1;
        }
    }
    Ok(Partition::from_keys(label))
}

/// `(1/N) Σ_{i<N} f ∘ σ^i` for a permutation `σ`.
pub fn cesaro_average(perm: &[usize], f: &AlgebraElement, n: usize) -> AlgebraElement {
    let mut sum = vec![Rational::zero(); f.len()];
    let mut pos: Vec<usize> = (0..f.len()).collect();
    for _ in 0..n {
        for (x, p) in pos.iter_mut().enumerate() {
            sum[x] += &f.values[*p];
            *p = perm[*p];
        }
    }
    let n = Rational::from_integer((n as i64).into());
    AlgebraElement { values: sum.into_iter().map(|v| v / &n).collect() }
}

/// Mean ergodic identity for a measure-preserving permutation: the Cesàro
/// averages over multiples of the common cycle length `N` equal the
/// conditional expectation onto the invariant functions. Returns `N`, or
/// `None` when the identity fails.
pub fn mean_ergodic_check(space: &FinSpace, perm: &[usize], f: &AlgebraElement) -> Result<Option<usize>> {
    let orbits = orbit_partition(perm)?;
    if perm.len() != space.len() || (0..perm.len()).any(|x| space.weight(perm[x]) != space.weight(x)) {
        return Err(Error::Precondition("permutation must preserve the weights".into()));
    }
    let period = orbits
        .blocks()
        .iter()
        .fold(1usize, |acc, b| acc / gcd(acc, b.len()) * b.len());
    let target = cond_exp(space, &orbits, f)?;
    let ok = (1..=2).all(|j| cesaro_average(perm, f, j * period) == target);
    Ok(ok.then_some(period))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Dense matrix of the conditional expectation, acting on column vectors of
/// atom values.
pub fn expectation_matrix(space: &FinSpace, p: &Partition) -> Result<RatMatrix> {
    check_host(space, p)?;
    let bw = p.block_weights(space);
    let n = space.len();
    let mut m = RatMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if p.block_of(i) == p.block_of(j) {
                m[(i, j)] = space.weight(j) / &bw[p.block_of(j)];
            }
        }
    }
    Ok(m)
}

/// Verdicts of the four equivalent commuting-square conditions for
/// `M₀ ⊂ M₁ ∩ M₂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommutingSquareReport {
    /// `E₀(xy) = E₀(x)E₀(y)` for `x ∈ M₁`, `y ∈ M₂`.
    pub factorization: bool,
    /// `E₁E₂ = E₀`.
    pub product_is_e0: bool,
    /// `E₁(M₂) = M₀`.
    pub image_is_m0: bool,
    /// `E₁E₂ = E₂E₁` and `M₁ ∩ M₂ = M₀`.
    pub commute_and_meet: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl CommutingSquareReport {
    pub fn holds(&self) -> bool {
        self.factorization && self.product_is_e0 && self.image_is_m0 && self.commute_and_meet
    }

    /// The four verdicts coincide.
    pub fn consistent(&self) -> bool {
        let v = [self.factorization, self.product_is_e0, self.image_is_m0, self.commute_and_meet];
        v.iter().all(|&x| x) || v.iter().all(|&x| !x)
    }
}

/// Block-pair incidence data shared by the four checks: block weights of the
/// three partitions and the weights of nonempty intersections `A ∩ B`.
struct Incidence {
    w0: Vec<Rational>,
    w1: Vec<Rational>,
    w2: Vec<Rational>,
    /// p0-block of each p1-block and each p2-block.
    up1: Vec<u32>,
    up2: Vec<u32>,
    /// Nonempty intersections as (A, B, weight), grouped by B.
    pairs: Vec<(u32, u32, Rational)>,
    by_b: Vec<std::ops::Range<usize>>,
    by_a: Vec<Vec<(u32, usize)>>,
    /// Number of p1- and p2-blocks inside each p0-block.
    n1_in: Vec<usize>,
    n2_in: Vec<usize>,
}

impl Incidence {
    fn new(space: &FinSpace, p0: &Partition, p1: &Partition, p2: &Partition, up1: Vec<u32>, up2: Vec<u32>) -> Self {
        let mut index: HashMap<(u32, u32), usize> = HashMap::new();
        let mut raw: Vec<(u32, u32, Rational)> = Vec::new();
        for i in 0..space.len() {
            let key = (p1.labels()[i], p2.labels()[i]);
            let slot = *index.entry(key).or_insert_with(|| {
                raw.push((key.0, key.1, Rational::zero()));
                raw.len() - 1
            });
            raw[slot].2 += space.weight(i);
        }
        raw.sort_by_key(|(a, b, _)| (*b, *a));
        let mut by_b = vec![0..0; p2.block_count()];
        let mut start = 0;
        for i in 1..=raw.len() {
            if i == raw.len() || raw[i].1 != raw[start].1 {
                by_b[raw[start].1 as usize] = start..i;
                start = i;
            }
        }
        let mut by_a = vec![Vec::new(); p1.block_count()];
        for (idx, (a, b, _)) in raw.iter().enumerate() {
            by_a[*a as usize].push((*b, idx));
        }
        let mut n1_in = vec![0; p0.block_count()];
        for &u in &up1 {
            n1_in[u as usize] += 1;
        }
        let mut n2_in = vec![0; p0.block_count()];
        for &u in &up2 {
            n2_in[u as usize] += 1;
        }
        Incidence {
            w0: p0.block_weights(space),
            w1: p1.block_weights(space),
            w2: p2.block_weights(space),
            up1,
            up2,
            pairs: raw,
            by_b,
            by_a,
            n1_in,
            n2_in,
        }
    }

    /// (i) pairwise factorization of block indicators over p0.
    fn factorization(&self) -> std::result::Result<(), String> {
        let mut present = vec![0usize; self.w0.len()];
        for (a, b, w) in &self.pairs {
            let a0 = self.up1[*a as usize] as usize;
            present[a0] += 1;
            if w * &self.w0[a0] != &self.w1[*a as usize] * &self.w2[*b as usize] {
                return Err(format!("factorization fails for p1-block {a}, p2-block {b}"));
            }
        }
        for (a0, &n) in present.iter().enumerate() {
            if n != self.n1_in[a0] * self.n2_in[a0] {
                return Err(format!("disjoint p1/p2 blocks inside p0-block {a0}"));
            }
        }
        Ok(())
    }

    /// (ii) `E₁(1_B) = E₀(1_B)` for every p2-block `B`.
    fn product_is_e0(&self) -> std::result::Result<(), String> {
        for (b, range) in self.by_b.iter().enumerate() {
            let a0 = self.up2[b] as usize;
            let e0 = &self.w2[b] / &self.w0[a0];
            if range.len() != self.n1_in[a0] {
                return Err(format!("E1 E2 differs from E0 on the indicator of p2-block {b} (support)"));
            }
            for (a, _, w) in &self.pairs[range.clone()] {
                if w / &self.w1[*a as usize] != e0 {
                    return Err(format!("E1 E2 differs from E0 on the indicator of p2-block {b} at p1-block {a}"));
                }
            }
        }
        Ok(())
    }

    /// (iii) every `E₁(1_B)` is p0-measurable and together they span `M₀`.
    fn image_is_m0(&self) -> std::result::Result<(), String> {
        let mut hit = vec![false; self.w0.len()];
        for (b, range) in self.by_b.iter().enumerate() {
            let a0 = self.up2[b] as usize;
            if range.len() != self.n1_in[a0] {
                return Err(format!("E1 of p2-block {b} vanishes on part of its p0-block"));
            }
            let mut vals = self.pairs[range.clone()].iter().map(|(a, _, w)| w / &self.w1[*a as usize]);
            let first = vals.next().expect("blocks are nonempty");
            if vals.any(|v| v != first) {
                return Err(format!("E1 of p2-block {b} is not constant on its p0-block"));
            }
            hit[a0] |= first.is_positive();
        }
        match hit.iter().position(|h| !h) {
            Some(a0) => Err(format!("image of E1 misses the indicator of p0-block {a0}")),
            None => Ok(()),
        }
    }

    /// (iv) `E₁(M₂) ⊆ M₂` (equivalent to `E₁E₂ = E₂E₁` for self-adjoint
    /// projections) together with `meet(p1, p2) = p0`.
    fn commute_and_meet(&self, p0: &Partition, p1: &Partition, p2: &Partition) -> std::result::Result<(), String> {
        let mut value_at_a: HashMap<u32, Rational> = HashMap::new();
        for (b, range) in self.by_b.iter().enumerate() {
            value_at_a.clear();
            for (a, _, w) in &self.pairs[range.clone()] {
                value_at_a.insert(*a, w / &self.w1[*a as usize]);
            }
            // E₁(1_B) takes value value_at_a[A] on p1-block A (zero elsewhere);
            // it is p2-measurable iff it is constant on the atoms of every
            // p2-block B' touching one of those A.
            let mut checked: HashMap<u32, Option<Rational>> = HashMap::new();
            for (a, _, _) in &self.pairs[range.clone()] {
                for &(b2, _) in &self.by_a[*a as usize] {
                    if checked.contains_key(&b2) {
                        continue;
                    }
                    let mut vals = self.pairs[self.by_b[b2 as usize].clone()]
                        .iter()
                        .map(|(a2, _, _)| value_at_a.get(a2).cloned().unwrap_or_else(Rational::zero));
                    let first = vals.next().expect("blocks are nonempty");
                    if vals.any(|v| v != first) {
                        return Err(format!("E1 of p2-block {b} is not constant on p2-block {b2}"));
                    }
                    checked.insert(b2, Some(first));
                }
            }
        }
        let meet = p1.meet(p2);
        if &meet != p0 {
            return Err(format!(
                "M1 ∩ M2 has {} blocks but M0 has {}",
                meet.block_count(),
                p0.block_count()
            ));
        }
        Ok(())
    }
}

/// Evaluates the four commuting-square conditions independently.
pub fn commuting_square_check(
    space: &FinSpace,
    p0: &Partition,
    p1: &Partition,
    p2: &Partition,
) -> Result<CommutingSquareReport> {
    for p in [p0, p1, p2] {
        check_host(space, p)?;
    }
    let up1 = p0
        .coarsening_map(p1)
        .ok_or_else(|| Error::Precondition("M0 is not contained in M1".into()))?;
    let up2 = p0
        .coarsening_map(p2)
        .ok_or_else(|| Error::Precondition("M0 is not contained in M2".into()))?;
    let inc = Incidence::new(space, p0, p1, p2, up1, up2);
    let mut witness = None;
    let mut verdict = |r: std::result::Result<(), String>| match r {
        Ok(()) => true,
        Err(w) => {
            witness.get_or_insert(w);
            false
        }
    };
    let factorization = verdict(inc.factorization());
    let product_is_e0 = verdict(inc.product_is_e0());
    let image_is_m0 = verdict(inc.image_is_m0());
    let commute_and_meet = verdict(inc.commute_and_meet(p0, p1, p2));
    Ok(CommutingSquareReport { factorization, product_is_e0, image_is_m0, commute_and_meet, witness })
}

// ---------------------------------------------------------------------------
// Markov maps

/// A positive unital map between commutative finite spaces, given by a
/// row-stochastic matrix.
///
/// The matrix acts on functions on the column space (state `psi`) and returns
/// functions on the row space (state `phi`); compatibility of the states is
/// `Σᵢ φᵢ Tᵢⱼ = ψⱼ`, i.e. `φ(T b) = ψ(b)`. Both states are tracial, so there
/// is no modular condition to check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovKernel {
    matrix: RatMatrix,
    phi: Vec<Rational>,
    psi: Vec<Rational>,
}

fn check_state(name: &str, s: &[Rational]) -> Result<()> {
    if s.iter().any(|x| !x.is_positive()) {
        return Err(Error::InvalidInput(format!("state {name} is not faithful")));
    }
    if !s.iter().sum::<Rational>().is_one() {
        return Err(Error::InvalidInput(format!("state {name} does not sum to 1")));
    }
    Ok(())
}

impl MarkovKernel {
    pub fn new(matrix: RatMatrix, phi: Vec<Rational>, psi: Vec<Rational>) -> Result<Self> {
        if matrix.rows() != phi.len() || matrix.cols() != psi.len() {
            return Err(Error::InvalidInput("kernel and state dimensions disagree".into()));
        }
        check_state("phi", &phi)?;
        check_state("psi", &psi)?;
        for i in 0..matrix.rows() {
            let row = matrix.row(i);
            if let Some(j) = row.iter().position(|x| x.is_negative()) {
                return Err(Error::InvalidInput(format!("negative entry at ({i}, {j})")));
            }
            if !row.iter().sum::<Rational>().is_one() {
                return Err(Error::InvalidInput(format!("row {i} does not sum to 1")));
            }
        }
        for j in 0..matrix.cols() {
            let pushed: Rational = (0..matrix.rows()).map(|i| &phi[i] * &matrix[(i, j)]).sum();
            if pushed != psi[j] {
                return Err(Error::InvalidInput(format!(
                    "state compatibility fails in column {j}: {} != {}",
                    format_rational(&pushed),
                    format_rational(&psi[j])
                )));
            }
        }
        Ok(MarkovKernel { matrix, phi, psi })
    }

    /// A kernel on one space preserving the state `pi`.
    pub fn stationary(matrix: RatMatrix, pi: Vec<Rational>) -> Result<Self> {
        Self::new(matrix, pi.clone(), pi)
    }

    pub fn matrix(&self) -> &RatMatrix {
        &self.matrix
    }

    pub fn phi(&self) -> &[Rational] {
        &self.phi
    }

    pub fn psi(&self) -> &[Rational] {
        &self.psi
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// `T* = (φᵢ Tᵢⱼ / ψⱼ)ⱼᵢ`, characterised by `ψ(T*(y) x) = φ(y T(x))`.
    pub fn adjoint(&self) -> MarkovKernel {
        let (r, c) = (self.matrix.rows(), self.matrix.cols());
        let mut adj = RatMatrix::zeros(c, r);
        for i in 0..r {
            for j in 0..c {
                adj[(j, i)] = &self.phi[i] * &self.matrix[(i, j)] / &self.psi[j];
            }
        }
        MarkovKernel { matrix: adj, phi: self.psi.clone(), psi: self.phi.clone() }
    }

    /// The composite map `x ↦ self(other(x))`.
    pub fn compose(&self, other: &MarkovKernel) -> Result<MarkovKernel> {
        if self.psi != other.phi {
            return Err(Error::Precondition("states do not chain".into()));
        }
        Ok(MarkovKernel { matrix: &self.matrix * &other.matrix, phi: self.phi.clone(), psi: other.psi.clone() })
    }
}

pub fn markov_map_adjoint(t: &MarkovKernel) -> MarkovKernel {
    t.adjoint()
}

pub fn partition_join(p: &Partition, q: &Partition) -> Partition {
    p.join(q)
}

pub fn partition_meet(p: &Partition, q: &Partition) -> Partition {
    p.meet(q)
}

// ---------------------------------------------------------------------------
// Local filtrations

/// An interval-indexed family `[m, n] ↦ M_[m,n]` for `0 ≤ m ≤ n ≤ K`; the
/// unbounded interval `[m, ∞)` is represented by `[m, K]`.
#[derive(Debug, Clone)]
pub struct LocalFiltration {
    space: FinSpace,
    horizon: usize,
    algebras: HashMap<(usize, usize), Partition>,
}

impl LocalFiltration {
    pub fn new(space: FinSpace, horizon: usize, mut family: impl FnMut(usize, usize) -> Partition) -> Result<Self> {
        let mut algebras = HashMap::new();
        for m in 0..=horizon {
            for n in m..=horizon {
                let p = family(m, n);
                check_host(&space, &p)?;
                algebras.insert((m, n), p);
            }
        }
        Ok(LocalFiltration { space, horizon, algebras })
    }

    pub fn space(&self) -> &FinSpace {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, m: usize, n: usize) -> &Partition {
        &self.algebras[&(m, n)]
    }

    fn intervals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.horizon).flat_map(move |m| (m..=self.horizon).map(move |n| (m, n)))
    }

    /// `self` is coarser than `other` interval-wise.
    pub fn is_coarser_than(&self, other: &LocalFiltration) -> Option<(usize, usize)> {
        self.intervals().find(|&(m, n)| !self.get(m, n).is_coarser_than(other.get(m, n)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiltrationReport {
    /// `(n, verdict)` for the condition `E_{[0,n-1]∨[n,n]} E_{[n,n]∨[n+1,∞)} = E_{[n,n]}`.
    pub markov: Vec<(usize, bool)>,
    /// `(n, verdict)` for `E_{[0,n]} E_{[n,∞)} = E_{[n,n]}`.
    pub saturated: Vec<(usize, bool)>,
    pub locally_minimal: bool,
    /// Saturated implies Markov, and locally minimal plus Markov implies
    /// saturated, on this instance.
    pub implications_hold: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl FiltrationReport {
    pub fn is_markovian(&self) -> bool {
        self.markov.iter().all(|(_, v)| *v)
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated.iter().all(|(_, v)| *v)
    }
}

/// Checks isotony, the two Markov conditions, local minimality, and the
/// implications between them. An isotony violation is malformed input.
pub fn local_filtration_markov_check(f: &LocalFiltration) -> Result<FiltrationReport> {
    let k = f.horizon;
    for (m, n) in f.intervals() {
        for (m2, n2) in f.intervals() {
            if m2 <= m && n <= n2 && (m2, n2) != (m, n) && !f.get(m, n).is_coarser_than(f.get(m2, n2)) {
                return Err(Error::InvalidInput(format!("isotony fails: M[{m},{n}] is not inside M[{m2},{n2}]")));
            }
        }
    }
    let mut witness = None;
    let mut square = |p0: &Partition, p1: &Partition, p2: &Partition, label: String| -> Result<bool> {
        let r = commuting_square_check(&f.space, p0, p1, p2)?;
        if !r.consistent() {
            return Err(Error::InvalidInput(format!("commuting-square verdicts disagree at {label}")));
        }
        if !r.holds() && witness.is_none() {
            witness = Some(format!("{label}: {}", r.witness.clone().unwrap_or_default()));
        }
        Ok(r.holds())
    };
    let mut markov = Vec::new();
    for n in 1..k {
        let here = f.get(n, n);
        let past = f.get(0, n - 1).join(here);
        let future = here.join(f.get(n + 1, k));
        markov.push((n, square(here, &past, &future, format!("Markov condition at n={n}"))?));
    }
    let mut saturated = Vec::new();
    for n in 0..=k {
        let ok = square(f.get(n, n), f.get(0, n), f.get(n, k), format!("saturated Markov condition at n={n}"))?;
        saturated.push((n, ok));
    }
    let mut locally_minimal = true;
    'outer: for (m1, n1) in f.intervals() {
        for (m2, n2) in f.intervals() {
            // union is an interval iff they overlap or are adjacent
            if m2 > n1 + 1 || m1 > n2 + 1 {
                continue;
            }
            let union = (m1.min(m2), n1.max(n2));
            if f.get(m1, n1).join(f.get(m2, n2)) != *f.get(union.0, union.1) {
                locally_minimal = false;
                witness.get_or_insert(format!(
                    "M[{m1},{n1}] v M[{m2},{n2}] != M[{},{}]",
                    union.0, union.1
                ));
                break 'outer;
            }
        }
    }
    let all = |v: &[(usize, bool)]| v.iter().all(|(_, b)| *b);
    let sat = all(&saturated);
    let mk = all(&markov);
    let implications_hold = (!sat || mk) && (!(locally_minimal && mk) || sat);
    Ok(FiltrationReport { markov, saturated, locally_minimal, implications_hold, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn space(ws: &[(i64, i64)]) -> FinSpace {
        FinSpace::new(ws.iter().map(|&(n, d)| rat(n, d)).collect()).unwrap()
    }

    fn elem(vs: &[i64]) -> AlgebraElement {
        AlgebraElement::new(vs.iter().map(|&v| int(v)).collect())
    }

    #[test]
    fn space_validation() {
        assert!(FinSpace::new(vec![rat(1, 2), rat(1, 3)]).is_err());
        assert!(FinSpace::new(vec![rat(1, 1), rat(0, 1)]).is_err());
        assert!(FinSpace::new(vec![]).is_err());
        assert_eq!(FinSpace::uniform(4).weight(2), &rat(1, 4));
    }

    #[test]
    fn cond_exp_worked_example() {
        let s = space(&[(1, 3), (1, 6), (1, 2)]);
        let p = Partition::from_blocks(3, &[vec![0, 1], vec![2]]).unwrap();
        let e = cond_exp(&s, &p, &elem(&[3, 0, 5])).unwrap();
        assert_eq!(e, elem(&[2, 2, 5]));
        // summation oracle: the block average
        let by_hand = (rat(1, 3) * int(3) + rat(1, 6) * int(0)) / (rat(1, 3) + rat(1, 6));
        assert_eq!(e.values[0], by_hand);
    }

    #[test]
    fn trivial_and_discrete_expectations() {
        let s = space(&[(1, 3), (1, 6), (1, 2)]);
        let f = elem(&[3, -1, 7]);
        let e = cond_exp(&s, &Partition::trivial(3), &f).unwrap();
        assert_eq!(e, AlgebraElement::constant(3, s.expectation(&f)));
        assert_eq!(cond_exp(&s, &Partition::discrete(3), &f).unwrap(), f);
    }

    #[test]
    fn join_meet_examples() {
        let p = Partition::from_blocks(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let q = Partition::from_blocks(4, &[vec![0, 2], vec![1, 3]]).unwrap();
        assert!(p.join(&q).is_discrete());
        assert!(p.meet(&q).is_trivial());
        assert_eq!(p.join(&Partition::trivial(4)), p);
        assert!(p.meet(&Partition::trivial(4)).is_trivial());
        assert_eq!(p.join(&p), p);
        assert_eq!(p.meet(&p), p);
        assert!(Partition::trivial(4).is_coarser_than(&p));
        assert!(!p.is_coarser_than(&q));
        assert_eq!(p.coarseness_witness(&q), Some((0, 2)));
    }

    #[test]
    fn from_blocks_rejects_bad_input() {
        assert!(Partition::from_blocks(3, &[vec![0, 1]]).is_err());
        assert!(Partition::from_blocks(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::from_blocks(3, &[vec![0, 1, 2], vec![]]).is_err());
        assert!(Partition::from_blocks(2, &[vec![0, 5]]).is_err());
    }

    #[test]
    fn equal_partitions_commute_trivially() {
        let s = space(&[(1, 8), (3, 8), (1, 4), (1, 4)]);
        let p = Partition::from_blocks(4, &[vec![0, 3], vec![1, 2]]).unwrap();
        let r = commuting_square_check(&s, &p, &p, &p).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn independent_product_factors_form_a_commuting_square() {
        let a = space(&[(1, 3), (2, 3)]);
        let b = space(&[(1, 4), (1, 4), (1, 2)]);
        let s = a.product(&b);
        let first = Partition::from_keys((0..6).map(|i| i % 2));
        let second = Partition::from_keys((0..6).map(|i| i / 2));
        let r = commuting_square_check(&s, &Partition::trivial(6), &first, &second).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn non_commuting_pair_fails_all_four() {
        // Oracle: search 2-block partition pairs of a fixed non-uniform 4-atom
        // space for one where E1 E2 != E2 E1 as dense matrices.
        let s = space(&[(1, 10), (2, 10), (3, 10), (4, 10)]);
        let two_block: Vec<Partition> = (1u32..8)
            .map(|mask| Partition::from_keys((0..4).map(|i| if i == 0 { 0 } else { (mask >> (i - 1)) & 1 })))
            .filter(|p| p.block_count() == 2)
            .collect();
        let mut found = false;
        for p1 in &two_block {
            for p2 in &two_block {
                let e1 = expectation_matrix(&s, p1).unwrap();
                let e2 = expectation_matrix(&s, p2).unwrap();
                if &e1 * &e2 != &e2 * &e1 {
                    let r = commuting_square_check(&s, &Partition::trivial(4), p1, p2).unwrap();
                    assert!(!r.factorization && !r.product_is_e0 && !r.image_is_m0 && !r.commute_and_meet, "{r:?}");
                    found = true;
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn square_check_agrees_with_dense_matrices() {
        // All triples of partitions of a 4-atom space with p0 coarser than p1, p2.
        let s = space(&[(1, 6), (1, 3), (1, 6), (1, 3)]);
        let all = all_partitions(4);
        for p1 in &all {
            for p2 in &all {
                for p0 in &all {
                    if !p0.is_coarser_than(p1) || !p0.is_coarser_than(p2) {
                        continue;
                    }
                    let r = commuting_square_check(&s, p0, p1, p2).unwrap();
                    let (e0, e1, e2) = (
                        expectation_matrix(&s, p0).unwrap(),
                        expectation_matrix(&s, p1).unwrap(),
                        expectation_matrix(&s, p2).unwrap(),
                    );
                    assert_eq!(r.product_is_e0, &e1 * &e2 == e0);
                    let commute = &e1 * &e2 == &e2 * &e1 && p1.meet(p2) == *p0;
                    assert_eq!(r.commute_and_meet, commute);
                    assert!(r.consistent(), "{r:?}");
                }
            }
        }
    }

    fn all_partitions(n: usize) -> Vec<Partition> {
        // restricted growth strings
        let mut out = Vec::new();
        let mut rgs = vec![0usize; n];
        loop {
            out.push(Partition::from_keys(rgs.iter().copied()));
            let mut i = n - 1;
            loop {
                let max_prev = rgs[..i].iter().copied().max().unwrap_or(0);
                if i > 0 && rgs[i] <= max_prev {
                    rgs[i] += 1;
                    for r in rgs.iter_mut().skip(i + 1) {
                        *r = 0;
                    }
                    break;
                }
                if i <= 1 {
                    return out;
                }
                i -= 1;
            }
        }
    }

    #[test]
    fn partition_enumeration_counts_bell_numbers() {
        assert_eq!(all_partitions(4).len(), 15);
        assert_eq!(all_partitions(3).len(), 5);
    }

    #[test]
    fn square_precondition() {
        let s = FinSpace::uniform(4);
        let p = Partition::from_blocks(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let q = Partition::from_blocks(4, &[vec![0, 2], vec![1, 3]]).unwrap();
        assert!(matches!(commuting_square_check(&s, &p, &q, &q), Err(Error::Precondition(_))));
    }

    fn kernel_2x2() -> MarkovKernel {
        let t = RatMatrix::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 4), rat(3, 4)]]).unwrap();
        MarkovKernel::stationary(t, vec![rat(1, 3), rat(2, 3)]).unwrap()
    }

    #[test]
    fn adjoint_examples() {
        let id = MarkovKernel::stationary(RatMatrix::identity(3), vec![rat(1, 3); 3]).unwrap();
        assert_eq!(id.adjoint(), id);
        let sym = RatMatrix::from_rows(vec![vec![rat(1, 3), rat(2, 3)], vec![rat(2, 3), rat(1, 3)]]).unwrap();
        let sym = MarkovKernel::stationary(sym, vec![rat(1, 2); 2]).unwrap();
        assert_eq!(sym.adjoint(), sym);

        // Solve the pairing equations ψ(T*(e_j) e_i) = φ(e_j T(e_i)) directly.
        let t = kernel_2x2();
        let adj = t.adjoint();
        for i in 0..2 {
            for j in 0..2 {
                let lhs = &t.psi()[j] * &adj.matrix()[(j, i)];
                let rhs = &t.phi()[i] * &t.matrix()[(i, j)];
                assert_eq!(lhs, rhs);
            }
        }
        assert_eq!(adj.matrix(), t.matrix());
        assert_eq!(adj.adjoint(), t);
    }

    #[test]
    fn kernel_validation() {
        let bad_row = RatMatrix::from_rows(vec![vec![rat(1, 2), rat(1, 3)], vec![rat(1, 4), rat(3, 4)]]).unwrap();
        assert!(MarkovKernel::stationary(bad_row, vec![rat(1, 3), rat(2, 3)]).is_err());
        let t = RatMatrix::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 4), rat(3, 4)]]).unwrap();
        assert!(MarkovKernel::stationary(t.clone(), vec![rat(1, 2), rat(1, 2)]).is_err());
        let neg = RatMatrix::from_rows(vec![vec![rat(3, 2), rat(-1, 2)], vec![rat(0, 1), rat(1, 1)]]).unwrap();
        assert!(MarkovKernel::stationary(neg, vec![rat(0, 1), rat(1, 1)]).is_err());
    }

    #[test]
    fn adjoint_reverses_composition() {
        let t = kernel_2x2();
        let s = MarkovKernel::stationary(
            RatMatrix::from_rows(vec![vec![rat(0, 1), rat(1, 1)], vec![rat(1, 2), rat(1, 2)]]).unwrap(),
            vec![rat(1, 3), rat(2, 3)],
        )
        .unwrap();
        let st = s.compose(&t).unwrap();
        assert_eq!(st.adjoint(), t.adjoint().compose(&s.adjoint()).unwrap());
    }

    #[test]
    fn constant_filtration_is_markovian() {
        let s = space(&[(1, 2), (1, 4), (1, 4)]);
        let f = LocalFiltration::new(s, 3, |_, _| Partition::discrete(3)).unwrap();
        let r = local_filtration_markov_check(&f).unwrap();
        assert!(r.is_markovian() && r.is_saturated() && r.locally_minimal && r.implications_hold);
    }

    #[test]
    fn iid_coordinates_give_markov_filtration() {
        // three i.i.d. fair bits; M_[m,n] generated by coordinates m..=n
        let s = FinSpace::uniform(8);
        let f = LocalFiltration::new(s, 2, |m, n| Partition::from_keys((0..8).map(|x| (x >> m) & ((1 << (n - m + 1)) - 1))))
            .unwrap();
        let r = local_filtration_markov_check(&f).unwrap();
        assert!(r.is_markovian() && r.is_saturated() && r.locally_minimal, "{r:?}");
    }

    #[test]
    fn isotony_violation_is_malformed() {
        let s = FinSpace::uniform(4);
        let f = LocalFiltration::new(s, 1, |m, n| {
            if (m, n) == (0, 1) {
                Partition::trivial(4)
            } else {
                Partition::discrete(4)
            }
        })
        .unwrap();
        assert!(matches!(local_filtration_markov_check(&f), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn measurability() {
        let p = Partition::from_blocks(3, &[vec![0, 2], vec![1]]).unwrap();
        assert!(p.is_measurable(&elem(&[4, 1, 4])));
        assert!(!p.is_measurable(&elem(&[4, 1, 3])));
    }
}

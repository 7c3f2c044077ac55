//! Tensor dilations of finite stationary Markov chains.
//!
//! The state space `A = {0..d}` carries the stationary law `π` and the noise
//! space `C` discretises Lebesgue measure on `[0, 1)`. Fiber `i` of `A × [0,1)`
//! is cut into pieces `Ω_ij` of length `T_ij`; a measure-preserving interval
//! exchange `τ` sends every `Ω_ij` into fiber `j`. The coupling point map is
//! `c_map(i, c) = j` for `c ⊆ Ω_ij`, and the dilation endomorphism `α` acts
//! dually by `(a, c₀, c₁, …) ↦ (c_map(a, c₀), c₁, …)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finprob::{local_filtration_markov_check, FinSpace, LocalFiltration, MarkovKernel, Partition};
use crate::graded::{GradedSpace, DEFAULT_ATOM_BUDGET};
use crate::rational::{format_rational, solve, RatMatrix, Rational};

/// A row-stochastic `T` with a faithful stationary law `π`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSpec {
    t: RatMatrix,
    pi: Vec<Rational>,
}

impl ChainSpec {
    /// Validates `T`; `π` is computed when not supplied.
    pub fn new(t: RatMatrix, pi: Option<Vec<Rational>>) -> Result<Self> {
        if t.rows() != t.cols() || t.rows() == 0 {
            return Err(Error::InvalidInput("transition matrix must be square and nonempty".into()));
        }
        let pi = match pi {
            Some(pi) => pi,
            None => stationary_distribution(&t)?,
        };
        MarkovKernel::stationary(t.clone(), pi.clone())?;
        Ok(ChainSpec { t, pi })
    }

    /// `T = [[1-p₁, p₁], [p₂, 1-p₂]]`.
    pub fn two_state(p1: Rational, p2: Rational) -> Result<Self> {
        let one = Rational::one();
        let t = RatMatrix::from_rows(vec![vec![&one - &p1, p1], vec![p2.clone(), &one - &p2]])?;
        Self::new(t, None)
    }

    /// Every row equal to `pi`: an i.i.d. sequence.
    pub fn iid(pi: Vec<Rational>) -> Result<Self> {
        let t = RatMatrix::from_rows(vec![pi.clone(); pi.len()])?;
        Self::new(t, Some(pi))
    }

    pub fn d(&self) -> usize {
        self.pi.len()
    }

    pub fn t(&self) -> &RatMatrix {
        &self.t
    }

    pub fn pi(&self) -> &[Rational] {
        &self.pi
    }

    pub fn kernel(&self) -> MarkovKernel {
        MarkovKernel::stationary(self.t.clone(), self.pi.clone()).expect("validated")
    }

    pub fn state_space(&self) -> FinSpace {
        FinSpace::new(self.pi.clone()).expect("validated")
    }
}

/// The unique stationary vector of `T`, by exact elimination. Fails when it
/// is not unique or not strictly positive.
pub fn stationary_distribution(t: &RatMatrix) -> Result<Vec<Rational>> {
    let d = t.rows();
    if t.cols() != d || d == 0 {
        return Err(Error::InvalidInput("transition matrix must be square and nonempty".into()));
    }
    let mut a = t.transpose();
    for i in 0..d {
        a[(i, i)] -= Rational::one();
    }
    if a.rank() != d - 1 {
        return Err(Error::InvalidInput("stationary distribution is not unique".into()));
    }
    for j in 0..d {
        a[(d - 1, j)] = Rational::one();
    }
    let mut b = vec![Rational::zero(); d];
    b[d - 1] = Rational::one();
    let pi = solve(&a, &b).ok_or_else(|| Error::InvalidInput("stationary system is singular".into()))?;
    if let Some(i) = pi.iter().position(|p| !p.is_positive()) {
        return Err(Error::InvalidInput(format!(
            "stationary weight of state {i} is {}, the state would not be faithful",
            format_rational(&pi[i])
        )));
    }
    Ok(pi)
}

/// Arrangement choices for the coupling. Observable laws do not depend on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum TieBreak {
    /// Pieces `Ω_ij` laid out in order `j = 0..d`; the diagonal piece stays in
    /// place and incoming pieces fill the rest of fiber `j` in source order.
    #[default]
    FixedDiagonalFirst,
    /// Both orders reversed.
    Reversed,
}

impl TieBreak {
    fn order(self, d: usize) -> Vec<usize> {
        match self {
            TieBreak::FixedDiagonalFirst => (0..d).collect(),
            TieBreak::Reversed => (0..d).rev().collect(),
        }
    }
}

/// Piece `Ω_ij` of fiber `i` in local `[0, 1)` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Piece {
    target: usize,
    start: Rational,
    end: Rational,
}

fn fiber_pieces(spec: &ChainSpec, tie: TieBreak) -> Vec<Vec<Piece>> {
    let d = spec.d();
    (0..d)
        .map(|i| {
            let mut start = Rational::zero();
            let mut out = Vec::new();
            for j in tie.order(d) {
                let len = &spec.t()[(i, j)];
                if len.is_zero() {
                    continue;
                }
                let end = &start + len;
                out.push(Piece { target: j, start: start.clone(), end: end.clone() });
                start = end;
            }
            out
        })
        .collect()
}

/// Finite discretisation of `([0,1), λ)` fine enough for every fiber's pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseSpace {
    cuts: Vec<Rational>,
    space: FinSpace,
}

impl NoiseSpace {
    pub fn from_cuts(cuts: BTreeSet<Rational>) -> Result<Self> {
        let cuts: Vec<Rational> = cuts.into_iter().collect();
        if cuts.first() != Some(&Rational::zero()) || cuts.last() != Some(&Rational::one()) {
            return Err(Error::InvalidInput("noise cuts must start at 0 and end at 1".into()));
        }
        let space = FinSpace::new(cuts.windows(2).map(|w| &w[1] - &w[0]).collect())?;
        Ok(NoiseSpace { cuts, space })
    }

    pub fn space(&self) -> &FinSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn cuts(&self) -> &[Rational] {
        &self.cuts
    }

    /// The atom containing local coordinate `u ∈ [0, 1)`.
    pub fn atom_at(&self, u: &Rational) -> usize {
        self.cuts.partition_point(|x| x <= u) - 1
    }
}

/// A measure-preserving bijection of the fine atoms of `⨆ᵢ {i} × [0,1)`, in
/// global coordinates where fiber `i` occupies `[Pᵢ, Pᵢ + πᵢ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingMap {
    offsets: Vec<Rational>,
    pi: Vec<Rational>,
    cuts: Vec<Rational>,
    image: Vec<usize>,
    fiber: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Segment {
    src: Rational,
    len: Rational,
    dst: Rational,
}

fn translate(segs: &[Segment], x: &Rational, inverse: bool) -> Rational {
    let key = |s: &Segment| if inverse { s.dst.clone() } else { s.src.clone() };
    let i = segs.partition_point(|s| &key(s) <= x) - 1;
    let s = &segs[i];
    if inverse {
        &s.src + (x - &s.dst)
    } else {
        &s.dst + (x - &s.src)
    }
}

impl CouplingMap {
    fn build(spec: &ChainSpec, pieces: &[Vec<Piece>], tie: TieBreak) -> Self {
        let d = spec.d();
        let pi = spec.pi().to_vec();
        let mut offsets = vec![Rational::zero()];
        for p in &pi {
            let next = offsets.last().unwrap() + p;
            offsets.push(next);
        }
        let global = |i: usize, u: &Rational| &offsets[i] + &pi[i] * u;
        let mut segs = Vec::new();
        for j in 0..d {
            let (lo, hi) = (offsets[j].clone(), offsets[j + 1].clone());
            let mut gaps = Vec::new();
            match pieces[j].iter().find(|p| p.target == j) {
                Some(diag) => {
                    let (ds, de) = (global(j, &diag.start), global(j, &diag.end));
                    segs.push(Segment { src: ds.clone(), len: &de - &ds, dst: ds.clone() });
                    gaps.push((lo, ds));
                    gaps.push((de, hi));
                }
                None => gaps.push((lo, hi)),
            }
            gaps.retain(|(a, b)| a < b);
            let mut gap = 0;
            let mut cursor = gaps.first().map(|g| g.0.clone()).unwrap_or_default();
            for i in tie.order(d).into_iter().filter(|&i| i != j) {
                let Some(p) = pieces[i].iter().find(|p| p.target == j) else { continue };
                let (mut src, src_end) = (global(i, &p.start), global(i, &p.end));
                while src < src_end {
                    let room = &gaps[gap].1 - &cursor;
                    let take = room.clone().min(&src_end - &src);
                    segs.push(Segment { src: src.clone(), len: take.clone(), dst: cursor.clone() });
                    src += &take;
                    cursor += &take;
                    if take == room && gap + 1 < gaps.len() {
                        gap += 1;
                        cursor = gaps[gap].0.clone();
                    }
                }
            }
        }
        segs.sort_by(|a, b| a.src.cmp(&b.src));
        let mut by_dst = segs.clone();
        by_dst.sort_by(|a, b| a.dst.cmp(&b.dst));

        // Close the cut set under τ and τ⁻¹ so atoms map onto atoms. The
        // closure is finite: all points share a common denominator.
        let one = Rational::one();
        let mut cuts: BTreeSet<Rational> = offsets.iter().cloned().collect();
        for s in &segs {
            cuts.insert(s.src.clone());
            cuts.insert(&s.src + &s.len);
            cuts.insert(s.dst.clone());
            cuts.insert(&s.dst + &s.len);
        }
        let mut work: Vec<Rational> = cuts.iter().cloned().collect();
        while let Some(x) = work.pop() {
            if x >= one {
                continue;
            }
            for y in [translate(&segs, &x, false), translate(&by_dst, &x, true)] {
                if cuts.insert(y.clone()) {
                    work.push(y);
                }
            }
        }
        let cuts: Vec<Rational> = cuts.into_iter().collect();
        let index_of = |x: &Rational| cuts.binary_search(x).expect("closed cut set");
        let n = cuts.len() - 1;
        let image = (0..n).map(|k| index_of(&translate(&segs, &cuts[k], false))).collect();
        let fiber = (0..n).map(|k| offsets.partition_point(|o| o <= &cuts[k]) - 1).collect();
        CouplingMap { offsets, pi, cuts, image, fiber }
    }

    pub fn atom_count(&self) -> usize {
        self.image.len()
    }

    pub fn atom_weight(&self, k: usize) -> Rational {
        &self.cuts[k + 1] - &self.cuts[k]
    }

    pub fn image(&self, k: usize) -> usize {
        self.image[k]
    }

    pub fn fiber(&self, k: usize) -> usize {
        self.fiber[k]
    }

    /// Left endpoint of atom `k` in its fiber's `[0, 1)` coordinates.
    pub fn local_start(&self, k: usize) -> Rational {
        let i = self.fiber[k];
        (&self.cuts[k] - &self.offsets[i]) / &self.pi[i]
    }

    /// Replaces the image of one atom; the result is generally not a valid
    /// coupling and exists to exercise the verifier.
    pub fn with_image(mut self, k: usize, target: usize) -> Self {
        self.image[k] = target;
        self
    }

    pub fn verify(&self, spec: &ChainSpec, noise: &NoiseSpace, c_map: &[u32]) -> CouplingReport {
        let n = self.atom_count();
        let d = spec.d();
        let mut witness = None;
        let mut seen = vec![false; n];
        let mut bijective = true;
        for k in 0..n {
            let t = self.image[k];
            if t >= n || std::mem::replace(&mut seen[t], true) {
                bijective = false;
                witness.get_or_insert(format!("atom {t} is hit twice (second time from atom {k})"));
                break;
            }
        }
        let mut measure_preserving = true;
        for k in 0..n {
            let t = self.image[k].min(n - 1);
            if self.atom_weight(k) != self.atom_weight(t) {
                measure_preserving = false;
                witness.get_or_insert(format!("atom {k} and its image {t} have different measure"));
                break;
            }
        }
        let mut c_map_consistent = true;
        let mut mass = RatMatrix::zeros(d, d);
        for k in 0..n {
            let i = self.fiber[k];
            let j = self.fiber[self.image[k].min(n - 1)];
            let c = noise.atom_at(&self.local_start(k));
            if c_map[i + d * c] as usize != j {
                c_map_consistent = false;
                witness.get_or_insert(format!("atom {k} of fiber {i} lands in fiber {j}, c_map says {}", c_map[i + d * c]));
            }
            mass[(i, j)] += self.atom_weight(k);
        }
        for i in 0..d {
            for j in 0..d {
                mass[(i, j)] = &mass[(i, j)] / &spec.pi()[i];
            }
        }
        let compression_is_t = &mass == spec.t();
        if !compression_is_t {
            let (i, j) = mass.first_difference(spec.t()).unwrap_or_default();
            witness.get_or_insert(format!(
                "compression entry ({i},{j}) is {}, T has {}",
                format_rational(&mass[(i, j)]),
                format_rational(&spec.t()[(i, j)])
            ));
        }
        CouplingReport { bijective, measure_preserving, c_map_consistent, compression_is_t, witness }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CouplingReport {
    pub bijective: bool,
    pub measure_preserving: bool,
    pub c_map_consistent: bool,
    /// `ι* C ι = T`.
    pub compression_is_t: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl CouplingReport {
    pub fn holds(&self) -> bool {
        self.bijective && self.measure_preserving && self.c_map_consistent && self.compression_is_t
    }
}

/// The noise space, coupling and `c_map` table (indexed `a + d·c`).
#[derive(Debug, Clone)]
pub struct FirstOrderDilation {
    pub noise: NoiseSpace,
    pub coupling: CouplingMap,
    pub c_map: Vec<u32>,
}

pub fn build_first_order_dilation(spec: &ChainSpec, tie: TieBreak) -> FirstOrderDilation {
    let pieces = fiber_pieces(spec, tie);
    let mut cuts: BTreeSet<Rational> = [Rational::zero(), Rational::one()].into();
    for fiber in &pieces {
        for p in fiber {
            cuts.insert(p.start.clone());
            cuts.insert(p.end.clone());
        }
    }
    let noise = NoiseSpace::from_cuts(cuts).expect("cuts lie in [0, 1]");
    let d = spec.d();
    let mut c_map = vec![0u32; d * noise.len()];
    for (i, fiber) in pieces.iter().enumerate() {
        for c in 0..noise.len() {
            let u = &noise.cuts()[c];
            let p = fiber.iter().find(|p| &p.start <= u && u < &p.end).expect("pieces cover the fiber");
            c_map[i + d * c] = p.target as u32;
        }
    }
    let coupling = CouplingMap::build(spec, &pieces, tie);
    FirstOrderDilation { noise, coupling, c_map }
}

#[derive(Debug, Clone, Copy)]
pub struct DilationOptions {
    pub tie_break: TieBreak,
    pub budget: u128,
}

impl Default for DilationOptions {
    fn default() -> Self {
        DilationOptions { tie_break: TieBreak::default(), budget: DEFAULT_ATOM_BUDGET }
    }
}

/// A Markov dilation of a chain truncated at horizon `K`.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    spec: ChainSpec,
    first_order: FirstOrderDilation,
    graded: GradedSpace,
    horizon: usize,
}

pub fn build_markov_dilation(spec: &ChainSpec, horizon: usize, opts: DilationOptions) -> Result<ProcessModel> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let first_order = build_first_order_dilation(spec, opts.tie_break);
    ProcessModel::from_parts(spec.clone(), first_order, horizon, opts.budget)
}

impl ProcessModel {
    /// Assembles a model from an explicit first-order dilation. The `c_map`
    /// table is used as given.
    pub fn from_parts(spec: ChainSpec, first_order: FirstOrderDilation, horizon: usize, budget: u128) -> Result<Self> {
        let d = spec.d();
        if first_order.c_map.len() != d * first_order.noise.len()
            || first_order.c_map.iter().any(|&j| j as usize >= d)
        {
            return Err(Error::InvalidInput("c_map table has the wrong shape".into()));
        }
        let graded = GradedSpace::new(spec.state_space(), first_order.noise.space().clone(), horizon, budget)?;
        Ok(ProcessModel { spec, first_order, graded, horizon })
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn noise(&self) -> &NoiseSpace {
        &self.first_order.noise
    }

    pub fn coupling(&self) -> &CouplingMap {
        &self.first_order.coupling
    }

    pub fn c_map(&self) -> &[u32] {
        &self.first_order.c_map
    }

    pub fn first_order(&self) -> &FirstOrderDilation {
        &self.first_order
    }

    pub fn graded(&self) -> &GradedSpace {
        &self.graded
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The point map dual to `α`, from level `m+1` to level `m`.
    pub fn alpha_point(&self, x: usize) -> usize {
        let dc = self.graded.d() * self.graded.c();
        self.first_order.c_map[x % dc] as usize + self.graded.d() * (x / dc)
    }

    /// `Xₙ` on a level-`m` atom (`n ≤ m`): the state reached by `n` steps of
    /// the dual of `α` on the level-`n` truncation.
    pub fn state_at(&self, x: usize, n: usize) -> usize {
        let mut y = self.graded.truncate(x, n);
        for _ in 0..n {
            y = self.alpha_point(y);
        }
        y
    }

    /// `(X₀, …, X_m)` of a level-`m` atom by the forward recursion
    /// `s_{k+1} = c_map(s_k, c_k)`.
    pub fn trajectory(&self, x: usize, m: usize) -> Vec<u32> {
        let d = self.graded.d();
        let mut s = self.graded.state(x);
        let mut out = vec![s as u32];
        for k in 0..m {
            s = self.first_order.c_map[s + d * self.graded.coord(x, k)] as usize;
            out.push(s as u32);
        }
        out
    }

    /// `ι* αⁿ ι` computed on level-`n` atoms.
    pub fn compression(&self, n: usize) -> RatMatrix {
        let d = self.spec.d();
        let mut m = RatMatrix::zeros(d, d);
        let level = self.graded.level(n);
        for x in 0..level.len() {
            m[(self.graded.state(x), self.state_at(x, n))] += level.weight(x);
        }
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = &m[(i, j)] / &self.spec.pi()[i];
            }
        }
        m
    }

    /// Law of `(X₀, …, X_K)` pushed forward from the level-`K` atoms.
    pub fn model_path_law(&self) -> PathLaw {
        let level = self.graded.level(self.horizon);
        let mut probs: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for x in 0..level.len() {
            let path: Vec<u32> = (0..=self.horizon).map(|n| self.state_at(x, n) as u32).collect();
            *probs.entry(path).or_insert_with(Rational::zero) += level.weight(x);
        }
        PathLaw { states: self.spec.d(), horizon: self.horizon, probs }
    }
}

/// A law on state paths `(s₀, …, s_K)`; only positive entries are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathLaw {
    states: usize,
    horizon: usize,
    probs: BTreeMap<Vec<u32>, Rational>,
}

impl PathLaw {
    pub fn from_probs(states: usize, horizon: usize, probs: BTreeMap<Vec<u32>, Rational>) -> Result<Self> {
        if probs.keys().any(|p| p.len() != horizon + 1 || p.iter().any(|&s| s as usize >= states)) {
            return Err(Error::InvalidInput("path of the wrong length or with an unknown state".into()));
        }
        if probs.values().any(|p| !p.is_positive()) {
            return Err(Error::InvalidInput("path probabilities must be positive".into()));
        }
        if !probs.values().sum::<Rational>().is_one() {
            return Err(Error::InvalidInput("path probabilities do not sum to 1".into()));
        }
        Ok(PathLaw { states, horizon, probs })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn probs(&self) -> &BTreeMap<Vec<u32>, Rational> {
        &self.probs
    }

    pub fn prob(&self, path: &[u32]) -> Rational {
        self.probs.get(path).cloned().unwrap_or_else(Rational::zero)
    }

    /// Joint law of `(X_{t₁}, …, X_{t_r})` for the given ordered times.
    pub fn marginal(&self, times: &[usize]) -> BTreeMap<Vec<u32>, Rational> {
        let mut out: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for (path, p) in &self.probs {
            let key: Vec<u32> = times.iter().map(|&t| path[t]).collect();
            *out.entry(key).or_insert_with(Rational::zero) += p;
        }
        out
    }

    /// `E[Πᵢ fᵢ(X_{kᵢ})]` for functions given as value vectors on states.
    pub fn moment(&self, factors: &[(usize, Vec<Rational>)]) -> Rational {
        self.probs
            .iter()
            .map(|(path, p)| factors.iter().fold(p.clone(), |acc, (k, f)| acc * &f[path[*k] as usize]))
            .sum()
    }

    /// Image law under a map of states.
    pub fn lump(&self, f: &[u32], states: usize) -> PathLaw {
        let mut probs: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for (path, p) in &self.probs {
            let key = path.iter().map(|&s| f[s as usize]).collect();
            *probs.entry(key).or_insert_with(Rational::zero) += p;
        }
        PathLaw { states, horizon: self.horizon, probs }
    }
}

/// `P(s₀, …, s_K) = π_{s₀} Π T_{s_k s_{k+1}}`, enumerated directly.
pub fn path_law(spec: &ChainSpec, horizon: usize) -> PathLaw {
    let d = spec.d();
    let mut probs = BTreeMap::new();
    let mut frontier: Vec<(Vec<u32>, Rational)> =
        (0..d).map(|s| (vec![s as u32], spec.pi()[s].clone())).filter(|(_, p)| p.is_positive()).collect();
    for _ in 0..horizon {
        let mut next = Vec::new();
        for (path, p) in frontier {
            let last = *path.last().unwrap() as usize;
            for j in 0..d {
                let q = &p * &spec.t()[(last, j)];
                if q.is_positive() {
                    let mut ext = path.clone();
                    ext.push(j as u32);
                    next.push((ext, q));
                }
            }
        }
        frontier = next;
    }
    probs.extend(frontier);
    PathLaw { states: d, horizon, probs }
}

/// The canonical local filtration `A_[m,n] = σ(X_m, …, X_n)`, on the space of
/// positive-probability paths.
pub fn canonical_filtration(law: &PathLaw) -> Result<LocalFiltration> {
    let paths: Vec<&Vec<u32>> = law.probs.keys().collect();
    let space = FinSpace::new(law.probs.values().cloned().collect())?;
    LocalFiltration::new(space, law.horizon, |m, n| Partition::from_keys(paths.iter().map(|p| &p[m..=n])))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DilationReport {
    /// `(n, ι* αⁿ ι = Tⁿ)` for `0 ≤ n ≤ K`.
    pub powers: Vec<(usize, bool)>,
    pub moments_checked: usize,
    pub moments_agree: bool,
    pub measure_preserving: bool,
    /// `E₀ = ι₀ ι₀*` on level `K`.
    pub e0_factorizes: bool,
    pub coupling: CouplingReport,
    pub locally_minimal: bool,
    pub markov_filtration: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl DilationReport {
    pub fn holds(&self) -> bool {
        self.powers.iter().all(|(_, ok)| *ok)
            && self.moments_agree
            && self.measure_preserving
            && self.e0_factorizes
            && self.coupling.holds()
            && self.locally_minimal
            && self.markov_filtration
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MomentOptions {
    pub max_order: usize,
    pub random_tuples: usize,
    pub seed: u64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions { max_order: 3, random_tuples: 100, seed: 0x5eed }
    }
}

/// Compares indicator moments of order `≤ max_order` exhaustively (as
/// multisets of `(time, state)`) and `random_tuples` longer products of random
/// rational functions. Returns the count checked and the first mismatch.
pub fn compare_moments(model: &PathLaw, oracle: &PathLaw, opts: MomentOptions) -> (usize, Option<String>) {
    let k = model.horizon.min(oracle.horizon);
    let d = model.states;
    let letters: Vec<(usize, u32)> = (0..=k).flat_map(|t| (0..d as u32).map(move |s| (t, s))).collect();
    let mut marginals: HashMap<Vec<usize>, (BTreeMap<Vec<u32>, Rational>, BTreeMap<Vec<u32>, Rational>)> =
        HashMap::new();
    let mut count = 0;
    let mut tuple: Vec<usize> = Vec::new();
    // nondecreasing index tuples into `letters`
    fn next(tuple: &mut Vec<usize>, n: usize, max_len: usize) -> bool {
        if tuple.len() < max_len {
            tuple.push(*tuple.last().unwrap_or(&0));
            return true;
        }
        while let Some(last) = tuple.pop() {
            if last + 1 < n {
                tuple.push(last + 1);
                return true;
            }
        }
        false
    }
    while next(&mut tuple, letters.len(), opts.max_order) {
        let mut fixed: BTreeMap<usize, u32> = BTreeMap::new();
        let mut conflict = false;
        for &i in &tuple {
            let (t, s) = letters[i];
            if *fixed.entry(t).or_insert(s) != s {
                conflict = true;
            }
        }
        count += 1;
        if conflict {
            continue;
        }
        let times: Vec<usize> = fixed.keys().copied().collect();
        let key: Vec<u32> = fixed.values().copied().collect();
        let (mm, mo) = marginals.entry(times.clone()).or_insert_with(|| (model.marginal(&times), oracle.marginal(&times)));
        let zero = Rational::zero();
        let (a, b) = (mm.get(&key).unwrap_or(&zero), mo.get(&key).unwrap_or(&zero));
        if a != b {
            let desc: Vec<String> = tuple.iter().map(|&i| format!("1[X{}={}]", letters[i].0, letters[i].1)).collect();
            return (count, Some(format!("moment of {} is {} in the model, {} on paths", desc.join("*"), format_rational(a), format_rational(b))));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_tuples {
        let r = rng.gen_range(opts.max_order + 1..=opts.max_order + 1 + k);
        let factors: Vec<(usize, Vec<Rational>)> = (0..r)
            .map(|_| {
                let t = rng.gen_range(0..=k);
                let f = (0..d).map(|_| Rational::new(rng.gen_range(-5..=5).into(), rng.gen_range(1..=4).into())).collect();
                (t, f)
            })
            .collect();
        count += 1;
        let (a, b) = (model.moment(&factors), oracle.moment(&factors));
        if a != b {
            let times: Vec<usize> = factors.iter().map(|(t, _)| *t).collect();
            return (count, Some(format!("random moment at times {times:?} differs: {} vs {}", format_rational(&a), format_rational(&b))));
        }
    }
    (count, None)
}

/// Verifies the dilation identities, moments against the path law, measure
/// preservation of `α` at every level, `E₀ = ι₀ι₀*`, and the canonical
/// filtration's minimality and Markov property.
pub fn dilation_property_check(model: &ProcessModel, opts: MomentOptions) -> Result<DilationReport> {
    let spec = &model.spec;
    let g = &model.graded;
    let mut witness = None;

    let mut powers = Vec::new();
    let mut tn = RatMatrix::identity(spec.d());
    for n in 0..=model.horizon {
        let c = model.compression(n);
        let ok = c == tn;
        if !ok {
            let (i, j) = c.first_difference(&tn).unwrap_or_default();
            witness.get_or_insert(format!(
                "ι* α^{n} ι differs from T^{n} at ({i},{j}): {} vs {}",
                format_rational(&c[(i, j)]),
                format_rational(&tn[(i, j)])
            ));
        }
        powers.push((n, ok));
        tn = &tn * spec.t();
    }

    let model_law = model.model_path_law();
    let oracle = path_law(spec, model.horizon);
    let (moments_checked, mismatch) = compare_moments(&model_law, &oracle, opts);
    let moments_agree = mismatch.is_none();
    if let Some(w) = mismatch {
        witness.get_or_insert(w);
    }

    let mut measure_preserving = true;
    for m in 0..model.horizon {
        let (upper, lower) = (g.level(m + 1), g.level(m));
        let mut pushed = vec![Rational::zero(); lower.len()];
        for y in 0..upper.len() {
            pushed[model.alpha_point(y)] += upper.weight(y);
        }
        if let Some(x) = (0..lower.len()).find(|&x| &pushed[x] != lower.weight(x)) {
            measure_preserving = false;
            witness.get_or_insert(format!("α does not preserve the weight of level-{m} atom {x}"));
            break;
        }
    }

    // ι₀ι₀*(1_x) = λ(c(x)) on the fiber of x, while E₀(1_x) = w(x)/π_a there.
    let top = g.level(model.horizon);
    let mut e0_factorizes = true;
    for x in 0..top.len() {
        let (a, cs) = g.decode(model.horizon, x);
        let noise_mass: Rational = cs.iter().fold(Rational::one(), |acc, &c| acc * g.noise().weight(c));
        if noise_mass != top.weight(x) / &spec.pi()[a] {
            e0_factorizes = false;
            witness.get_or_insert(format!("E0 differs from ι0 ι0* on the indicator of atom {x}"));
            break;
        }
    }

    let coupling = model.first_order.coupling.verify(spec, &model.first_order.noise, &model.first_order.c_map);
    if let Some(w) = &coupling.witness {
        witness.get_or_insert(w.clone());
    }

    let filtration = local_filtration_markov_check(&canonical_filtration(&model_law)?)?;
    if let Some(w) = &filtration.witness {
        witness.get_or_insert(w.clone());
    }
    Ok(DilationReport {
        powers,
        moments_checked,
        moments_agree,
        measure_preserving,
        e0_factorizes,
        coupling,
        locally_minimal: filtration.locally_minimal,
        markov_filtration: filtration.is_markovian() && filtration.is_saturated(),
        witness,
    })
}

/// Random irreducible `d`-state chain with entries of denominator at most
/// `max_den`, drawn until the stationary law is unique and positive.
pub fn random_chain<R: Rng>(rng: &mut R, d: usize, max_den: i64) -> ChainSpec {
    loop {
        let rows: Vec<Vec<Rational>> = (0..d)
            .map(|_| {
                let den = rng.gen_range(1..=max_den);
                let mut cuts: Vec<i64> = (0..d - 1).map(|_| rng.gen_range(0..=den)).collect();
                cuts.sort_unstable();
                let mut prev = 0;
                let mut row = Vec::with_capacity(d);
                for c in cuts.into_iter().chain(std::iter::once(den)) {
                    row.push(Rational::new((c - prev).into(), den.into()));
                    prev = c;
                }
                row
            })
            .collect();
        let t = RatMatrix::from_rows(rows).expect("square");
        if let Ok(spec) = ChainSpec::new(t, None) {
            if is_irreducible(spec.t()) {
                return spec;
            }
        }
    }
}

pub fn is_irreducible(t: &RatMatrix) -> bool {
    let d = t.rows();
    (0..d).all(|s| {
        let mut seen = vec![false; d];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                if !seen[j] && t[(i, j)].is_positive() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|b| b)
    })
}

pub fn uniform_noise(n: usize) -> NoiseSpace {
    let cuts = (0..=n).map(|k| Rational::new((k as i64).into(), (n as i64).into())).collect();
    NoiseSpace::from_cuts(cuts).expect("uniform grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn coin() -> ChainSpec {
        ChainSpec::two_state(rat(1, 2), rat(1, 4)).unwrap()
    }

    #[test]
    fn stationary_examples() {
        assert_eq!(coin().pi(), &[rat(1, 3), rat(2, 3)]);
        assert_eq!(stationary_distribution(&RatMatrix::identity(1)).unwrap(), vec![rat(1, 1)]);
        // general two-state formula π = (p₂, p₁)/(p₁+p₂)
        for (p1, p2) in [(rat(1, 3), rat(3, 5)), (rat(1, 1), rat(1, 7))] {
            let s = ChainSpec::two_state(p1.clone(), p2.clone()).unwrap();
            let tot = &p1 + &p2;
            assert_eq!(s.pi(), &[&p2 / &tot, &p1 / &tot]);
        }
    }

    #[test]
    fn stationary_rejections() {
        assert!(stationary_distribution(&RatMatrix::identity(2)).is_err());
        // absorbing state: unique but not faithful
        let t = RatMatrix::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(0, 1), rat(1, 1)]]).unwrap();
        assert!(stationary_distribution(&t).is_err());
    }

    #[test]
    fn symmetric_coin_swaps_halves() {
        let s = ChainSpec::two_state(rat(1, 2), rat(1, 2)).unwrap();
        let fo = build_first_order_dilation(&s, TieBreak::default());
        assert_eq!(fo.noise.len(), 2);
        assert_eq!(fo.c_map, vec![0, 0, 1, 1]);
        let cm = &fo.coupling;
        assert_eq!(cm.atom_count(), 4);
        // second half of fiber 0 <-> first half of fiber 1
        assert_eq!((0..4).map(|k| cm.image(k)).collect::<Vec<_>>(), vec![0, 2, 1, 3]);
        assert!(cm.verify(&s, &fo.noise, &fo.c_map).holds());
    }

    #[test]
    fn coin_coupling_compresses_to_t() {
        let s = coin();
        let fo = build_first_order_dilation(&s, TieBreak::default());
        let r = fo.coupling.verify(&s, &fo.noise, &fo.c_map);
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn corrupted_coupling_is_caught() {
        let s = coin();
        let fo = build_first_order_dilation(&s, TieBreak::default());
        let bad = fo.coupling.clone().with_image(0, fo.coupling.image(1));
        assert!(!bad.verify(&s, &fo.noise, &fo.c_map).bijective);
    }

    #[test]
    fn path_law_examples() {
        let s = coin();
        assert_eq!(path_law(&s, 2).prob(&[0, 1, 1]), rat(1, 8));
        let p0 = path_law(&s, 0);
        assert_eq!(p0.prob(&[0]), rat(1, 3));
        let iid = ChainSpec::iid(vec![rat(1, 4), rat(3, 4)]).unwrap();
        let law = path_law(&iid, 2);
        assert_eq!(law.prob(&[1, 0, 1]), rat(3, 4) * rat(1, 4) * rat(3, 4));
    }

    #[test]
    fn coin_dilation_powers() {
        let m = build_markov_dilation(&coin(), 5, DilationOptions::default()).unwrap();
        for n in 0..=5u32 {
            assert_eq!(m.compression(n as usize), coin().t().pow(n));
        }
        let r = dilation_property_check(&m, MomentOptions::default()).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn trajectories_agree_with_alpha() {
        let m = build_markov_dilation(&coin(), 3, DilationOptions::default()).unwrap();
        for x in 0..m.graded().size(3) {
            let t = m.trajectory(x, 3);
            for n in 0..=3 {
                assert_eq!(t[n] as usize, m.state_at(x, n));
            }
        }
    }

    #[test]
    fn tie_break_does_not_change_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2, 3, 4] {
            let s = random_chain(&mut rng, d, 6);
            let a = build_markov_dilation(&s, 3, DilationOptions::default()).unwrap();
            let b = build_markov_dilation(&s, 3, DilationOptions { tie_break: TieBreak::Reversed, ..Default::default() })
                .unwrap();
            assert_eq!(a.model_path_law(), b.model_path_law());
            assert!(b.coupling().verify(&s, b.noise(), b.c_map()).holds());
        }
    }

    #[test]
    fn zero_entries_are_dropped() {
        let t = RatMatrix::from_rows(vec![
            vec![rat(0, 1), rat(1, 1), rat(0, 1)],
            vec![rat(0, 1), rat(0, 1), rat(1, 1)],
            vec![rat(1, 2), rat(0, 1), rat(1, 2)],
        ])
        .unwrap();
        let s = ChainSpec::new(t, None).unwrap();
        let fo = build_first_order_dilation(&s, TieBreak::default());
        assert!(fo.coupling.verify(&s, &fo.noise, &fo.c_map).holds());
        let m = build_markov_dilation(&s, 3, DilationOptions::default()).unwrap();
        assert!(dilation_property_check(&m, MomentOptions::default()).unwrap().holds());
    }

    #[test]
    fn noise_size_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = rng.gen_range(1..=4);
            let s = random_chain(&mut rng, d, 6);
            let fo = build_first_order_dilation(&s, TieBreak::default());
            assert!(fo.noise.len() <= d * (d - 1) + 1);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let r = build_markov_dilation(&coin(), 30, DilationOptions::default());
        assert!(matches!(r, Err(Error::Budget { .. })));
    }
}

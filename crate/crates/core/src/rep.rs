//! Point-map representations of `S⁺` and `F⁺` on truncated tensor products.
//!
//! A generator acts on functions by composition with a point map
//! `η_n^(m): level m+1 → level m`, so `α_n(f) = f ∘ η_n^(m)` raises the level
//! by one. A word `α_k α_ℓ` therefore dualises to `η_ℓ^(m) ∘ η_k^(m+1)`.
//!
//! A representation built for horizon `K` carries levels `0..=K+1`: the
//! algebras `M_n` live on level `K-1` (their fixed-point relations read level
//! `K`) and the intertwining identity compares level `K-1` with level `K`.

use std::collections::HashMap;

use num_traits::Zero;
use serde::Serialize;

use crate::dilation::ProcessModel;
use crate::error::{Error, Result};
use crate::finprob::{commuting_square_check, local_filtration_markov_check, FiltrationReport, FinSpace, LocalFiltration, Partition, UnionFind};
use crate::graded::GradedSpace;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RepKind {
    /// `β_n` inserts a unit in tensor slot `n`; dually, coordinate `n` is deleted.
    SPlusShift,
    /// `α₀ = C ⊗ id` and `α_n = D` on slots `n-1, n`, given by point tables:
    /// `c_map[a + d·c]` and `delta[c + |C|·c']`.
    FPlusTensor { c_map: Vec<u32>, delta: Vec<u32> },
}

/// The two canonical choices of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeltaChoice {
    /// `D(x) = 1 ⊗ x`, i.e. `δ(c, c') = c'`; gives `α_n = β_{n-1}` for `n ≥ 1`.
    Second,
    /// `D(x) = x ⊗ 1`, i.e. `δ(c, c') = c`; gives `α_n = β_n`.
    First,
}

impl DeltaChoice {
    pub fn table(self, c: usize) -> Vec<u32> {
        (0..c * c)
            .map(|i| match self {
                DeltaChoice::Second => (i / c) as u32,
                DeltaChoice::First => (i % c) as u32,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PointRep {
    graded: GradedSpace,
    kind: RepKind,
    horizon: usize,
}

fn pushforward_ok(src: &FinSpace, dst: &FinSpace, map: impl Fn(usize) -> usize) -> Option<usize> {
    let mut pushed = vec![Rational::zero(); dst.len()];
    for x in 0..src.len() {
        pushed[map(x)] += src.weight(x);
    }
    (0..dst.len()).find(|&y| &pushed[y] != dst.weight(y))
}

pub fn build_splus_rep(base: FinSpace, noise: FinSpace, horizon: usize, budget: u128) -> Result<PointRep> {
    if horizon < 2 {
        return Err(Error::InvalidInput("horizon must be at least 2".into()));
    }
    let graded = GradedSpace::new(base, noise, horizon + 1, budget)?;
    Ok(PointRep { graded, kind: RepKind::SPlusShift, horizon })
}

/// Checks that `c_map` and `delta` push product measures to the factor
/// measures, then builds the representation.
pub fn build_fplus_rep(
    base: FinSpace,
    noise: FinSpace,
    c_map: Vec<u32>,
    delta: Vec<u32>,
    horizon: usize,
    budget: u128,
) -> Result<PointRep> {
    let (d, c) = (base.len(), noise.len());
    if c_map.len() != d * c || c_map.iter().any(|&a| a as usize >= d) {
        return Err(Error::InvalidInput("c_map table must map A×C into A".into()));
    }
    if delta.len() != c * c || delta.iter().any(|&x| x as usize >= c) {
        return Err(Error::InvalidInput("delta table must map C×C into C".into()));
    }
    if let Some(a) = pushforward_ok(&base.product(&noise), &base, |x| c_map[x] as usize) {
        return Err(Error::Precondition(format!("c_map does not preserve the weight of state {a}")));
    }
    if let Some(x) = pushforward_ok(&noise.product(&noise), &noise, |y| delta[y] as usize) {
        return Err(Error::Precondition(format!("delta does not preserve the weight of noise atom {x}")));
    }
    build_fplus_rep_unchecked(base, noise, c_map, delta, horizon, budget)
}

/// Builds without the measure precondition; used to exercise the verifiers
/// on deliberately broken tables.
pub fn build_fplus_rep_unchecked(
    base: FinSpace,
    noise: FinSpace,
    c_map: Vec<u32>,
    delta: Vec<u32>,
    horizon: usize,
    budget: u128,
) -> Result<PointRep> {
    if horizon < 2 {
        return Err(Error::InvalidInput("horizon must be at least 2".into()));
    }
    let (d, c) = (base.len(), noise.len());
    if c_map.len() != d * c || delta.len() != c * c {
        return Err(Error::InvalidInput("table sizes do not match the spaces".into()));
    }
    let graded = GradedSpace::new(base, noise, horizon + 1, budget)?;
    Ok(PointRep { graded, kind: RepKind::FPlusTensor { c_map, delta }, horizon })
}

/// The `F⁺` representation whose `α₀` is the model's dilation endomorphism.
pub fn rep_from_model(model: &ProcessModel, delta: DeltaChoice, budget: u128) -> Result<PointRep> {
    let c = model.noise().len();
    build_fplus_rep(
        model.spec().state_space(),
        model.noise().space().clone(),
        model.c_map().to_vec(),
        delta.table(c),
        model.horizon(),
        budget,
    )
}

impl PointRep {
    pub fn graded(&self) -> &GradedSpace {
        &self.graded
    }

    pub fn kind(&self) -> &RepKind {
        &self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Level on which the algebras `M_n` are compared.
    pub fn work_level(&self) -> usize {
        self.horizon - 1
    }

    /// `η_n^(m)`: a level-`m+1` atom to a level-`m` atom.
    pub fn eta(&self, n: usize, m: usize, x: usize) -> usize {
        let g = &self.graded;
        match &self.kind {
            RepKind::SPlusShift => {
                let k = n.min(m);
                let low = x % g.size(k);
                let high = x / g.size(k + 1);
                low + g.size(k) * high
            }
            RepKind::FPlusTensor { c_map, delta } => {
                let (d, c) = (g.d(), g.c());
                if n == 0 {
                    c_map[x % (d * c)] as usize + d * (x / (d * c))
                } else if n <= m {
                    let low = x % g.size(n - 1);
                    let pair = (x / g.size(n - 1)) % (c * c);
                    let high = x / g.size(n + 1);
                    low + g.size(n - 1) * delta[pair] as usize + g.size(n) * high
                } else {
                    x % g.size(m)
                }
            }
        }
    }

    /// `η_0` iterated `k` times, from level `j + k` down to level `j`.
    pub fn eta0_power(&self, k: usize, j: usize, mut x: usize) -> usize {
        for step in (0..k).rev() {
            x = self.eta(0, j + step, x);
        }
        x
    }

    /// First `(n, m, atom)` where some `η_n^(m)` fails to push the level-`m+1`
    /// weights onto the level-`m` weights, over levels `m+1 ≤ K`.
    pub fn state_preservation_witness(&self) -> Option<(usize, usize, usize)> {
        let g = &self.graded;
        for m in 0..self.horizon {
            // every n > m acts as truncation, so n = m+1 stands for all of them
            for n in 0..=m + 1 {
                if let Some(x) = pushforward_ok(g.level(m + 1), g.level(m), |y| self.eta(n, m, y)) {
                    return Some((n, m, x));
                }
            }
        }
        None
    }

    /// `α_k α_ℓ = α_{ℓ+1} α_k` on level-`m` functions, as point maps from
    /// level `m+2`. Returns a violating atom.
    pub fn relation_witness(&self, k: usize, l: usize, m: usize) -> Result<Option<usize>> {
        if k > l {
            return Err(Error::Precondition(format!("relation needs k <= l, got ({k}, {l})")));
        }
        if m + 2 > self.graded.max_level() {
            return Err(Error::Precondition(format!("level {} is beyond the representation", m + 2)));
        }
        Ok((0..self.graded.size(m + 2)).find(|&y| {
            self.eta(l, m, self.eta(k, m + 1, y)) != self.eta(k, m, self.eta(l + 1, m + 1, y))
        }))
    }

    pub fn relation_check(&self, k: usize, l: usize, m: usize) -> Result<bool> {
        Ok(self.relation_witness(k, l, m)?.is_none())
    }

    /// All defining relations with `k < ℓ ≤ max_index` (or `k ≤ ℓ` for the
    /// `S⁺` shift) on levels `m ≤ K-2`.
    pub fn relations_witness(&self, max_index: usize) -> Option<String> {
        let strict = matches!(self.kind, RepKind::FPlusTensor { .. });
        for l in 0..=max_index {
            for k in 0..=l {
                if strict && k == l {
                    continue;
                }
                for m in 0..=self.horizon - 2 {
                    if let Some(y) = self.relation_witness(k, l, m).expect("within range") {
                        return Some(format!("relation ({k},{l}) fails at level {m} on atom {y}"));
                    }
                }
            }
        }
        None
    }

    fn fixed_relations(&self, uf: &mut UnionFind, n: usize, level: usize) {
        let g = &self.graded;
        for y in 0..g.size(level + 1) {
            uf.union(self.eta(n, level, y), g.truncate(y, level));
        }
    }

    /// Fixed points of `α_n` among level-`level` functions: `f ∘ η_n = f ∘ drop`.
    pub fn fixed_point_algebra(&self, n: usize, level: usize) -> Result<Partition> {
        self.check_level(level + 1)?;
        let mut uf = UnionFind::new(self.graded.size(level));
        self.fixed_relations(&mut uf, n, level);
        Ok(uf.into_partition())
    }

    /// `M_n = ⋂_{k>n} Fix(α_k)` on level `level`. Generators with `k > level`
    /// act as truncation there, so they fix everything and drop out.
    pub fn intersected_fixed_points(&self, n: usize, level: usize) -> Result<Partition> {
        self.check_level(level + 1)?;
        let mut uf = UnionFind::new(self.graded.size(level));
        for k in n + 1..=level {
            self.fixed_relations(&mut uf, k, level);
        }
        Ok(uf.into_partition())
    }

    /// `M_0, …, M_{K-1}` on the work level.
    pub fn tower(&self) -> Result<Vec<Partition>> {
        let l = self.work_level();
        (0..=l).map(|n| self.intersected_fixed_points(n, l)).collect()
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.graded.max_level() {
            return Err(Error::Precondition(format!("level {level} is beyond the representation")));
        }
        Ok(())
    }

    /// `α₀^k(P)` for a partition `P` of level `level`, as a partition of the
    /// same level. `None` when `P` is not measurable at level `level - k`.
    pub fn alpha0_pullback(&self, p: &Partition, k: usize, level: usize) -> Option<Partition> {
        let g = &self.graded;
        let j = g.measurable_level(p, level);
        if j + k > level {
            return None;
        }
        let base = g.restrict(p, j);
        let lifted = base.pullback(g.size(j + k), |x| self.eta0_power(k, j, x));
        Some(g.extend(&lifted, j + k, level))
    }

    /// Generating property at the work level `L`: the join of `M_n`, `n < L`,
    /// contains every function of level `L-1`.
    pub fn is_generating(&self, tower: &[Partition]) -> bool {
        let l = self.work_level();
        let join = tower[..l].iter().fold(Partition::trivial(self.graded.size(l)), |acc, p| acc.join(p));
        self.graded.cylinder(l - 1, l).is_coarser_than(&join)
    }
}

/// Checks `α_k Q_n = Q_{n+1} α_k`, where `Q_n` is the conditional expectation
/// onto the fixed points of `α_n`, on functions of level `K-1`.
pub fn intertwining_check(rep: &PointRep, k: usize, n: usize) -> Result<Option<String>> {
    let lo = rep.work_level();
    if k >= n || n > lo {
        return Err(Error::Precondition(format!("intertwining needs k < n <= {lo}, got ({k}, {n})")));
    }
    intertwining_witness(rep, k, n)
}

fn intertwining_witness(rep: &PointRep, k: usize, n: usize) -> Result<Option<String>> {
    let lo = rep.work_level();
    let hi = lo + 1;
    let g = &rep.graded;
    let fix_lo = rep.fixed_point_algebra(n, lo)?;
    let fix_hi = rep.fixed_point_algebra(n + 1, hi)?;
    let (w_lo, w_hi) = (g.level(lo), g.level(hi));
    let mut beta_weight = vec![Rational::zero(); fix_lo.block_count()];
    for x in 0..w_lo.len() {
        beta_weight[fix_lo.block_of(x)] += w_lo.weight(x);
    }
    // For each block b of Fix(α_{n+1}): the law of η_k(z), z ∈ b, must be the
    // normalised restriction of the level-K-1 weights to the Fix(α_n) block
    // containing every η_k(z).
    let mut block_weight = vec![Rational::zero(); fix_hi.block_count()];
    let mut block_target: Vec<Option<usize>> = vec![None; fix_hi.block_count()];
    let mut mass: HashMap<(usize, usize), Rational> = HashMap::new();
    for z in 0..w_hi.len() {
        let b = fix_hi.block_of(z);
        let x = rep.eta(k, lo, z);
        let beta = fix_lo.block_of(x);
        match block_target[b] {
            None => block_target[b] = Some(beta),
            Some(prev) if prev != beta => {
                return Ok(Some(format!(
                    "α_{k} Q_{n} is not constant on a fixed-point block of α_{} (atoms map into two blocks)",
                    n + 1
                )))
            }
            _ => {}
        }
        block_weight[b] += w_hi.weight(z);
        *mass.entry((b, x)).or_insert_with(Rational::zero) += w_hi.weight(z);
    }
    let mut seen_per_block = vec![0usize; fix_hi.block_count()];
    for ((b, x), m) in &mass {
        let beta = block_target[*b].expect("block visited");
        seen_per_block[*b] += 1;
        if m / &block_weight[*b] != w_lo.weight(*x) / &beta_weight[beta] {
            return Ok(Some(format!("α_{k} Q_{n} and Q_{} α_{k} differ on the indicator of level-{lo} atom {x}", n + 1)));
        }
    }
    let blocks_lo = fix_lo.blocks();
    for (b, &count) in seen_per_block.iter().enumerate() {
        let beta = block_target[b].expect("blocks are nonempty");
        if count != blocks_lo[beta].len() {
            return Ok(Some(format!(
                "Q_{} α_{k} misses part of a fixed-point block of α_{n}",
                n + 1
            )));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TowerCell {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// `None` when `α₀^k` cannot be applied within the horizon.
    pub verdict: Option<bool>,
    pub conditions_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TowerReport {
    pub generating: bool,
    pub increasing: bool,
    pub cells: Vec<TowerCell>,
    /// `(n, M_{n+1} ∩ α₀(M_{n+1}) = α₀(M_n))` for `n+1 ≤ K-1`, on level `K`,
    /// wherever `α₀` of both sides is defined there.
    pub intersections: Vec<(usize, bool)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl TowerReport {
    pub fn holds(&self) -> bool {
        self.generating
            && self.increasing
            && self.cells.iter().all(|c| c.verdict != Some(false) && c.conditions_agree)
            && self.intersections.iter().all(|(_, ok)| *ok)
    }

    pub fn checked_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.verdict.is_some()).count()
    }
}

/// Every cell `α₀^k(M_m) ⊂ M_{m+k}, α₀^k(M_n)` with `m ≤ n` and
/// `m+k, n+k ≤ K-1` is a commuting square, plus the intersection identities.
pub fn triangular_tower_check(rep: &PointRep) -> Result<TowerReport> {
    let l = rep.work_level();
    let tower = rep.tower()?;
    let space = rep.graded.level(l);
    let mut witness = None;
    let generating = rep.is_generating(&tower);
    if !generating {
        return Ok(TowerReport {
            generating,
            increasing: false,
            cells: Vec::new(),
            intersections: Vec::new(),
            witness: Some("the fixed-point tower does not generate the work level".into()),
        });
    }
    let increasing = tower.windows(2).all(|w| w[0].is_coarser_than(&w[1]));
    if !increasing {
        witness = Some("M_n is not contained in M_{n+1}".into());
    }
    let mut pulled: HashMap<(usize, usize), Option<Partition>> = HashMap::new();
    let mut pull = |n: usize, k: usize| -> Option<Partition> {
        pulled.entry((n, k)).or_insert_with(|| rep.alpha0_pullback(&tower[n], k, l)).clone()
    };
    let mut cells = Vec::new();
    for m in 0..=l {
        for n in m..=l {
            for k in 0..=l - n {
                let (p0, p2) = (pull(m, k), pull(n, k));
                let cell = match (p0, p2) {
                    (Some(p0), Some(p2)) => {
                        let r = commuting_square_check(space, &p0, &tower[m + k], &p2)?;
                        if !r.holds() {
                            witness.get_or_insert(format!("cell (m={m}, n={n}, k={k}): {}", r.witness.clone().unwrap_or_default()));
                        }
                        TowerCell { m, n, k, verdict: Some(r.holds()), conditions_agree: r.consistent() }
                    }
                    _ => TowerCell { m, n, k, verdict: None, conditions_agree: true },
                };
                cells.push(cell);
            }
        }
    }
    // one level up, so that α₀(M_{n+1}) stays defined for more n
    let top = rep.horizon();
    let upper: Vec<Partition> = (0..=l).map(|n| rep.intersected_fixed_points(n, top)).collect::<Result<_>>()?;
    let mut intersections = Vec::new();
    for n in 0..l {
        let a_next = rep.alpha0_pullback(&upper[n + 1], 1, top);
        let a_n = rep.alpha0_pullback(&upper[n], 1, top);
        if let (Some(a_next), Some(a_n)) = (a_next, a_n) {
            let ok = upper[n + 1].meet(&a_next) == a_n;
            if !ok {
                witness.get_or_insert(format!("M_{} ∩ α₀(M_{}) differs from α₀(M_{n})", n + 1, n + 1));
            }
            intersections.push((n, ok));
        }
    }
    Ok(TowerReport { generating, increasing, cells, intersections, witness })
}

/// The local filtration `[m, m+n] ↦ α₀^m(M_n)` on the work level, truncated
/// at the largest horizon `H` for which every member is defined.
#[derive(Debug, Clone)]
pub struct RepFiltration {
    pub filtration: LocalFiltration,
    pub report: FiltrationReport,
}

pub fn filtration_from_rep(rep: &PointRep) -> Result<RepFiltration> {
    filtration_from_rep_shifted(rep, 0)
}

/// The filtration `[k, k+ℓ] ↦ α₀^k(M_{ℓ+s})` built from the shifted
/// representation `ρ ∘ sh_{0,s}`; `s = 0` is the plain one.
pub fn filtration_from_rep_shifted(rep: &PointRep, s: usize) -> Result<RepFiltration> {
    let l = rep.work_level();
    let g = &rep.graded;
    let tower = rep.tower()?;
    if !rep.is_generating(&tower) {
        return Err(Error::Precondition("representation is not generating at this horizon".into()));
    }
    let ml: Vec<usize> = tower.iter().map(|p| g.measurable_level(p, l)).collect();
    let horizon = (0..=l.saturating_sub(s))
        .rev()
        .find(|&h| (0..=h).all(|n| n + s <= l && ml[n + s] + (h - n) <= l))
        .ok_or_else(|| Error::Precondition("no interval fits in the horizon".into()))?;
    let mut members: HashMap<(usize, usize), Partition> = HashMap::new();
    for m in 0..=horizon {
        for n in m..=horizon {
            let p = rep.alpha0_pullback(&tower[n - m + s], m, l).expect("horizon chosen so pullbacks exist");
            members.insert((m, n), p);
        }
    }
    let filtration = LocalFiltration::new(g.level(l).clone(), horizon, |m, n| members.remove(&(m, n)).expect("filled"))?;
    let report = local_filtration_markov_check(&filtration)?;
    Ok(RepFiltration { filtration, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::{build_markov_dilation, ChainSpec, DilationOptions};
    use crate::graded::DEFAULT_ATOM_BUDGET;
    use crate::rational::rat;

    fn coin_rep(delta: DeltaChoice, k: usize) -> PointRep {
        let spec = ChainSpec::two_state(rat(1, 2), rat(1, 4)).unwrap();
        let model = build_markov_dilation(&spec, k, DilationOptions::default()).unwrap();
        rep_from_model(&model, delta, DEFAULT_ATOM_BUDGET).unwrap()
    }

    fn splus(k: usize) -> PointRep {
        let a = FinSpace::new(vec![rat(1, 3), rat(2, 3)]).unwrap();
        let c = FinSpace::new(vec![rat(1, 4), rat(3, 4)]).unwrap();
        build_splus_rep(a, c, k, DEFAULT_ATOM_BUDGET).unwrap()
    }

    #[test]
    fn splus_beta0_deletes_slot_zero() {
        let r = splus(3);
        let g = r.graded();
        let x = g.encode(1, &[0, 1, 1]);
        assert_eq!(r.eta(0, 2, x), g.encode(1, &[1, 1]));
        assert_eq!(r.eta(1, 2, x), g.encode(1, &[0, 1]));
    }

    #[test]
    fn splus_relations_hold_for_k_le_l() {
        let r = splus(4);
        assert!(r.relation_check(0, 0, 0).unwrap());
        assert_eq!(r.relations_witness(4), None);
    }

    #[test]
    fn splus_fixed_points_of_beta1() {
        let r = splus(3);
        let l = r.work_level();
        let g = r.graded();
        let oracle = Partition::from_keys((0..g.size(l)).map(|x| (g.state(x), g.coord(x, 0))));
        assert_eq!(r.fixed_point_algebra(1, l).unwrap(), oracle);
    }

    #[test]
    fn splus_tower_is_coordinate_filtration() {
        let r = splus(4);
        let l = r.work_level();
        let g = r.graded();
        for (n, m) in r.tower().unwrap().iter().enumerate() {
            let oracle = Partition::from_keys((0..g.size(l)).map(|x| g.truncate(x, (n + 1).min(l))));
            assert_eq!(m, &oracle, "M_{n}");
        }
    }

    #[test]
    fn fplus_relations_on_coin() {
        for delta in [DeltaChoice::Second, DeltaChoice::First] {
            let r = coin_rep(delta, 4);
            assert_eq!(r.relations_witness(4), None);
            assert_eq!(r.state_preservation_witness(), None);
        }
    }

    #[test]
    fn second_delta_matches_shifted_beta() {
        let r = coin_rep(DeltaChoice::Second, 3);
        let g = r.graded().clone();
        let b = build_splus_rep(g.base().clone(), g.noise().clone(), 3, DEFAULT_ATOM_BUDGET).unwrap();
        for m in 0..3 {
            for y in 0..g.size(m + 1) {
                for n in 1..4 {
                    assert_eq!(r.eta(n, m, y), b.eta(n - 1, m, y), "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn first_delta_matches_beta() {
        let r = coin_rep(DeltaChoice::First, 3);
        let g = r.graded().clone();
        let b = build_splus_rep(g.base().clone(), g.noise().clone(), 3, DEFAULT_ATOM_BUDGET).unwrap();
        for m in 0..3 {
            for y in 0..g.size(m + 1) {
                for n in 1..4 {
                    assert_eq!(r.eta(n, m, y), b.eta(n, m, y), "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn coin_m0_is_state_algebra() {
        let r = coin_rep(DeltaChoice::Second, 4);
        let l = r.work_level();
        let m0 = r.intersected_fixed_points(0, l).unwrap();
        assert_eq!(m0, r.graded().state_partition(l));
        assert_eq!(m0, r.fixed_point_algebra(1, l).unwrap());
    }

    #[test]
    fn constants_are_fixed() {
        let r = coin_rep(DeltaChoice::Second, 3);
        let l = r.work_level();
        for n in 0..=l + 1 {
            assert!(Partition::trivial(r.graded().size(l)).is_coarser_than(&r.fixed_point_algebra(n, l).unwrap()));
        }
    }

    #[test]
    fn non_associative_delta_breaks_k_equal_l() {
        // measure-preserving δ on two fair noise atoms, searched for a failure
        // of the S⁺-only relation α_k α_k = α_{k+1} α_k
        let a = FinSpace::uniform(1);
        let c = FinSpace::uniform(2);
        let mut failing = Vec::new();
        for bits in 0u32..16 {
            let delta: Vec<u32> = (0..4).map(|i| (bits >> i) & 1).collect();
            if delta.iter().filter(|&&v| v == 1).count() != 2 {
                continue;
            }
            let r = build_fplus_rep(a.clone(), c.clone(), vec![0, 0], delta.clone(), 3, DEFAULT_ATOM_BUDGET).unwrap();
            assert_eq!(r.relations_witness(3), None);
            if r.relation_witness(1, 1, 1).unwrap().is_some() {
                failing.push(delta);
            }
        }
        // δ(x, y) = not x
        assert!(failing.contains(&vec![1, 0, 1, 0]), "{failing:?}");
    }

    #[test]
    fn tower_and_intertwining_on_coin() {
        for delta in [DeltaChoice::Second, DeltaChoice::First] {
            let r = coin_rep(delta, 4);
            let t = triangular_tower_check(&r).unwrap();
            assert!(t.holds(), "{t:?}");
            assert!(t.checked_cells() > 0);
            for n in 1..=3 {
                for k in 0..n {
                    assert_eq!(intertwining_check(&r, k, n).unwrap(), None, "k={k} n={n} {delta:?}");
                }
            }
        }
        assert!(intertwining_check(&coin_rep(DeltaChoice::Second, 4), 2, 2).is_err());
    }

    #[test]
    fn intertwining_fails_outside_its_range() {
        // negative control: the identity is not claimed for k > n
        let r = coin_rep(DeltaChoice::Second, 4);
        assert!(intertwining_witness(&r, 2, 1).unwrap().is_some());
        assert!(intertwining_witness(&r, 0, 0).unwrap().is_some());
    }

    #[test]
    fn filtrations_from_reps_are_markov() {
        for delta in [DeltaChoice::Second, DeltaChoice::First] {
            let r = coin_rep(delta, 4);
            for s in 0..2 {
                let f = filtration_from_rep_shifted(&r, s).unwrap();
                assert!(f.report.is_markovian() && f.report.is_saturated(), "{delta:?} s={s} {:?}", f.report);
                assert!(f.report.implications_hold);
            }
        }
        let f = filtration_from_rep(&coin_rep(DeltaChoice::Second, 4)).unwrap();
        assert_eq!(f.filtration.horizon(), 3);
    }

    #[test]
    fn unchecked_builder_skips_precondition() {
        let a = FinSpace::uniform(2);
        let c = FinSpace::uniform(2);
        let bad_delta = vec![0, 0, 0, 1];
        assert!(matches!(
            build_fplus_rep(a.clone(), c.clone(), vec![0, 1, 0, 1], bad_delta.clone(), 3, DEFAULT_ATOM_BUDGET),
            Err(Error::Precondition(_))
        ));
        let r = build_fplus_rep_unchecked(a, c, vec![0, 1, 0, 1], bad_delta, 3, DEFAULT_ATOM_BUDGET).unwrap();
        assert!(r.state_preservation_witness().is_some());
    }
}

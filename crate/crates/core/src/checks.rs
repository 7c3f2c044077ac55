//! Verifiers for the invariance properties of stationary sequences and the
//! end-to-end suites built on them.

use std::collections::BTreeMap;
use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ChainFile;
use crate::dilation::{
    build_first_order_dilation, build_markov_dilation, FirstOrderDilation, TieBreak, canonical_filtration, compare_moments, dilation_property_check, path_law, ChainSpec,
    DilationOptions, MomentOptions, PathLaw, ProcessModel,
};
use crate::error::{Error, Result};
use crate::finprob::{cond_exp, local_filtration_markov_check, AlgebraElement, FiltrationReport, FinSpace, Partition};
use crate::rational::{format_rational, RatMatrix, Rational};
use crate::rep::{build_fplus_rep_unchecked, filtration_from_rep, intertwining_check, rep_from_model, triangular_tower_check, DeltaChoice, PointRep};

/// A finite sequence `Y_0, …, Y_K` of state-valued random variables on an
/// atom space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessView {
    space: FinSpace,
    traj: Vec<Vec<u32>>,
    states: usize,
}

impl ProcessView {
    pub fn new(space: FinSpace, traj: Vec<Vec<u32>>, states: usize) -> Result<Self> {
        if traj.is_empty() || traj.iter().any(|t| t.len() != space.len() || t.iter().any(|&s| s as usize >= states)) {
            return Err(Error::InvalidInput("trajectories do not match the space".into()));
        }
        Ok(ProcessView { space, traj, states })
    }

    /// `Y_n = X_n` on the level-`K` atoms of a dilation.
    pub fn from_model(model: &ProcessModel) -> Self {
        let k = model.horizon();
        let level = model.graded().level(k);
        let mut traj = vec![Vec::with_capacity(level.len()); k + 1];
        for x in 0..level.len() {
            for (n, s) in model.trajectory(x, k).into_iter().enumerate() {
                traj[n].push(s);
            }
        }
        ProcessView { space: level.clone(), traj, states: model.spec().d() }
    }

    /// The coordinate process on the space of positive-probability paths.
    pub fn from_path_law(law: &PathLaw) -> Self {
        let space = FinSpace::new(law.probs().values().cloned().collect()).expect("path law is a probability");
        let traj = (0..=law.horizon()).map(|n| law.probs().keys().map(|p| p[n]).collect()).collect();
        ProcessView { space, traj, states: law.states() }
    }

    pub fn horizon(&self) -> usize {
        self.traj.len() - 1
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn space(&self) -> &FinSpace {
        &self.space
    }

    pub fn value(&self, n: usize, x: usize) -> u32 {
        self.traj[n][x]
    }

    pub fn path_law(&self) -> PathLaw {
        let mut probs: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for x in 0..self.space.len() {
            let path: Vec<u32> = self.traj.iter().map(|t| t[x]).collect();
            *probs.entry(path).or_insert_with(Rational::zero) += self.space.weight(x);
        }
        PathLaw::from_probs(self.states, self.horizon(), probs).expect("pushforward of a probability")
    }

    /// `E[Πᵢ fᵢ(Y_{kᵢ})]` summed over atoms.
    pub fn moment(&self, factors: &[(usize, Vec<Rational>)]) -> Rational {
        (0..self.space.len())
            .map(|x| factors.iter().fold(self.space.weight(x).clone(), |acc, (k, f)| acc * &f[self.traj[*k][x] as usize]))
            .sum()
    }
}

/// `ζ_n = f ∘ Y_n` for a surjection `f` onto `0..states`.
pub fn lump_process(view: &ProcessView, f: &[u32]) -> Result<ProcessView> {
    let states = check_surjection(f, view.states)?;
    let traj = view.traj.iter().map(|t| t.iter().map(|&s| f[s as usize]).collect()).collect();
    Ok(ProcessView { space: view.space.clone(), traj, states })
}

fn check_surjection(f: &[u32], domain: usize) -> Result<usize> {
    if f.len() != domain {
        return Err(Error::InvalidInput(format!("lumping map has {} entries for {domain} states", f.len())));
    }
    let states = f.iter().max().map_or(0, |&m| m as usize + 1);
    if (0..states as u32).any(|s| !f.contains(&s)) {
        return Err(Error::InvalidInput("lumping map must be onto 0..k".into()));
    }
    Ok(states)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartialSpreadabilityReport {
    /// Every `η_n` is state-preserving and the `F⁺` relations hold within the
    /// horizon, so the point maps represent `F⁺` by state-preserving maps.
    pub representation: bool,
    /// `α_n ι₀ = ι₀` for `1 ≤ n ≤ K-1`.
    pub localized: bool,
    /// `ι_n = α₀ⁿ ι₀` for `0 ≤ n ≤ K`.
    pub stationary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl PartialSpreadabilityReport {
    pub fn holds(&self) -> bool {
        self.representation && self.localized && self.stationary
    }
}

/// Partial spreadability of `view` through `rep`, where `ι₀` reads the
/// observed state `obs[a]` of the base state `a`. The view must live on the
/// level-`K` atoms of the representation.
pub fn partial_spreadability_check(rep: &PointRep, obs: &[u32], view: &ProcessView) -> Result<PartialSpreadabilityReport> {
    let g = rep.graded();
    let k = rep.horizon();
    if obs.len() != g.d() || view.space.len() != g.size(k) || view.horizon() != k {
        return Err(Error::InvalidInput("view and representation do not share level-K atoms".into()));
    }
    let mut witness = None;
    let mut representation = true;
    if let Some((n, m, x)) = rep.state_preservation_witness() {
        representation = false;
        witness = Some(format!("η_{n} does not preserve the weight of level-{m} atom {x}"));
    } else if let Some(w) = rep.relations_witness(k) {
        representation = false;
        witness = Some(w);
    }
    let mut localized = true;
    'l: for n in 1..k {
        for z in 0..g.size(k) {
            let moved = obs[g.state(rep.eta(n, k - 1, z))];
            if moved != obs[g.state(z)] {
                localized = false;
                witness.get_or_insert(format!("α_{n} ι₀ differs from ι₀ at level-{k} atom {z}"));
                break 'l;
            }
        }
    }
    let mut stationary = true;
    'outer: for n in 0..=k {
        for x in 0..g.size(k) {
            let y = rep.eta0_power(n, 0, g.truncate(x, n));
            if obs[y] != view.value(n, x) {
                stationary = false;
                witness.get_or_insert(format!("ι_{n} differs from α₀^{n} ι₀ at level-{k} atom {x}"));
                break 'outer;
            }
        }
    }
    Ok(PartialSpreadabilityReport { representation, localized, stationary, witness })
}

/// Range partition of `ι₀` on the work level.
fn iota0_partition(rep: &PointRep, obs: &[u32]) -> Partition {
    let g = rep.graded();
    let l = rep.work_level();
    Partition::from_keys((0..g.size(l)).map(|x| obs[g.state(x)]))
}

/// `ι₀(A) = M₀`; returns a witness on failure.
pub fn maximal_ps_check(rep: &PointRep, obs: &[u32]) -> Result<Option<String>> {
    let l = rep.work_level();
    let m0 = rep.intersected_fixed_points(0, l)?;
    let range = iota0_partition(rep, obs);
    if range == m0 {
        return Ok(None);
    }
    Ok(Some(if range.is_coarser_than(&m0) {
        format!("ι₀(A) has {} blocks, strictly inside M₀ with {}", range.block_count(), m0.block_count())
    } else {
        format!("ι₀(A) is not contained in M₀ ({} vs {} blocks)", range.block_count(), m0.block_count())
    }))
}

/// `A_[m,n] ⊂ M^ρ_[m,n]` for every interval of the representation's filtration,
/// with `A` generated by `α₀^j ι₀` on the work level.
pub fn adaptedness_witness(rep: &PointRep, obs: &[u32]) -> Result<Option<String>> {
    let g = rep.graded();
    let l = rep.work_level();
    let filt = filtration_from_rep(rep)?;
    let h = filt.filtration.horizon();
    let y: Vec<Vec<u32>> = (0..=h)
        .map(|j| (0..g.size(l)).map(|x| obs[rep.eta0_power(j, 0, g.truncate(x, j))]).collect())
        .collect();
    for m in 0..=h {
        for n in m..=h {
            let a = Partition::from_keys((0..g.size(l)).map(|x| (m..=n).map(|j| y[j][x]).collect::<Vec<_>>()));
            if !a.is_coarser_than(filt.filtration.get(m, n)) {
                return Ok(Some(format!("σ(Y_{m}..Y_{n}) is not inside M^ρ[{m},{n}]")));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkovSequenceReport {
    /// `(n, E_{A[0,n]} ι_{n+1} = E_{A[n,n]} ι_{n+1})`.
    pub steps: Vec<(usize, bool)>,
    pub filtration: FiltrationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl MarkovSequenceReport {
    pub fn holds(&self) -> bool {
        self.steps.iter().all(|(_, ok)| *ok) && self.filtration.is_markovian()
    }
}

/// Markov property of the sequence, computed on its path space.
pub fn markov_sequence_check(view: &ProcessView) -> Result<MarkovSequenceReport> {
    let law = view.path_law();
    let paths: Vec<&Vec<u32>> = law.probs().keys().collect();
    let space = FinSpace::new(law.probs().values().cloned().collect())?;
    let mut steps = Vec::new();
    let mut witness = None;
    for n in 0..law.horizon() {
        let past = Partition::from_keys(paths.iter().map(|p| &p[..=n]));
        let present = Partition::from_keys(paths.iter().map(|p| p[n]));
        let mut ok = true;
        for b in 0..view.states as u32 {
            let f = AlgebraElement::indicator(paths.len(), (0..paths.len()).filter(|&i| paths[i][n + 1] == b));
            let (e_past, e_now) = (cond_exp(&space, &past, &f)?, cond_exp(&space, &present, &f)?);
            if let Some(i) = (0..paths.len()).find(|&i| e_past.values[i] != e_now.values[i]) {
                ok = false;
                witness.get_or_insert(format!(
                    "P(Y{}={b} | Y0..Y{n} = {:?}) = {} but P(Y{}={b} | Y{n}) = {}",
                    n + 1,
                    &paths[i][..=n],
                    format_rational(&e_past.values[i]),
                    n + 1,
                    format_rational(&e_now.values[i])
                ));
                break;
            }
        }
        steps.push((n, ok));
    }
    let filtration = local_filtration_markov_check(&canonical_filtration(&law)?)?;
    if let Some(w) = &filtration.witness {
        witness.get_or_insert(w.clone());
    }
    Ok(MarkovSequenceReport { steps, filtration, witness })
}

/// The three values of a time-ordered correlation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QRegression {
    pub model: Rational,
    pub nested: Rational,
    pub path_law: Rational,
}

impl QRegression {
    pub fn agrees(&self) -> bool {
        self.model == self.nested && self.nested == self.path_law
    }
}

/// `ψ(ι_{k₁}(a₁) ⋯ ι_{k_r}(a_r b_r) ⋯ ι_{k₁}(b₁))` computed in the model, by
/// the nested formula `φ(a₁ T^{k₂-k₁}(a₂ ⋯ T^{k_r-k_{r-1}}(a_r b_r) ⋯ b₂) b₁)`
/// and on the path law. Times must be strictly increasing.
pub fn qregression_check(
    view: &ProcessView,
    spec: &ChainSpec,
    times: &[usize],
    a: &[Vec<Rational>],
    b: &[Vec<Rational>],
) -> Result<QRegression> {
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) || *times.last().unwrap() > view.horizon() {
        return Err(Error::Precondition("times must be strictly increasing within the horizon".into()));
    }
    let d = spec.d();
    if a.len() != times.len() || b.len() != times.len() || a.iter().chain(b).any(|f| f.len() != d) {
        return Err(Error::InvalidInput("one pair of functions on the states per time".into()));
    }
    let prod = |i: usize| -> Vec<Rational> { (0..d).map(|s| &a[i][s] * &b[i][s]).collect() };
    let factors: Vec<(usize, Vec<Rational>)> = times.iter().enumerate().map(|(i, &k)| (k, prod(i))).collect();
    let model = view.moment(&factors);
    let r = times.len();
    let mut v = prod(r - 1);
    for i in (0..r - 1).rev() {
        let step = spec.t().pow((times[i + 1] - times[i]) as u32).apply(&v);
        v = prod(i).iter().zip(step).map(|(p, s)| p * s).collect();
    }
    let nested = spec.pi().iter().zip(&v).map(|(p, x)| p * x).sum();
    let path = path_law(spec, view.horizon()).moment(&factors);
    Ok(QRegression { model, nested, path_law: path })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HierarchyReport {
    pub stationary: bool,
    pub spreadable: bool,
    pub exchangeable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partially_spreadable: Option<bool>,
    /// exchangeable ⟹ spreadable ⟹ partially spreadable ⟹ stationary.
    pub implications_hold: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity_witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spreadability_witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchangeability_witness: Option<String>,
}

pub const MAX_HIERARCHY_HORIZON: usize = 6;

fn marginal_difference(law: &PathLaw, s: &[usize], t: &[usize]) -> Option<String> {
    let (ms, mt) = (law.marginal(s), law.marginal(t));
    if ms == mt {
        return None;
    }
    let zero = Rational::zero();
    let key = ms.keys().chain(mt.keys()).find(|k| ms.get(*k) != mt.get(*k)).expect("maps differ");
    Some(format!(
        "P(X{s:?} = {key:?}) = {} but P(X{t:?} = {key:?}) = {}",
        format_rational(ms.get(key).unwrap_or(&zero)),
        format_rational(mt.get(key).unwrap_or(&zero))
    ))
}

/// Decides stationarity, spreadability and exchangeability of the law up to
/// its horizon, and checks the implication chain. Exchangeability is tested
/// on adjacent transpositions, which generate all permutations.
pub fn hierarchy_check(law: &PathLaw, partially_spreadable: Option<bool>) -> Result<HierarchyReport> {
    let k = law.horizon();
    if k > MAX_HIERARCHY_HORIZON {
        return Err(Error::Precondition(format!("hierarchy check enumerates paths only up to horizon {MAX_HIERARCHY_HORIZON}")));
    }
    let subsets: Vec<Vec<usize>> = (1u32..1 << (k + 1))
        .map(|mask| (0..=k).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    let mut stationarity_witness = None;
    'st: for s in &subsets {
        for shift in 1..=k - s.last().unwrap() {
            let t: Vec<usize> = s.iter().map(|i| i + shift).collect();
            if let Some(w) = marginal_difference(law, s, &t) {
                stationarity_witness = Some(w);
                break 'st;
            }
        }
    }
    let mut spreadability_witness = None;
    for s in &subsets {
        let initial: Vec<usize> = (0..s.len()).collect();
        if let Some(w) = marginal_difference(law, s, &initial) {
            spreadability_witness = Some(w);
            break;
        }
    }
    let mut exchangeability_witness = None;
    for i in 0..k {
        let mut order: Vec<usize> = (0..=k).collect();
        order.swap(i, i + 1);
        if let Some(w) = marginal_difference(law, &order, &(0..=k).collect::<Vec<_>>()) {
            exchangeability_witness = Some(w);
            break;
        }
    }
    let stationary = stationarity_witness.is_none();
    let spreadable = spreadability_witness.is_none();
    let exchangeable = exchangeability_witness.is_none();
    let implications_hold = (!exchangeable || spreadable)
        && (!spreadable || stationary)
        && partially_spreadable.map_or(true, |p| (!spreadable || p) && (!p || stationary));
    Ok(HierarchyReport {
        stationary,
        spreadable,
        exchangeable,
        partially_spreadable,
        implications_hold,
        stationarity_witness,
        spreadability_witness,
        exchangeability_witness,
    })
}

/// All 3-state kernels whose rows have a common denominator `≤ max_den`, in a
/// fixed order, paired with the three 2-block lumpings; returns the first
/// irreducible chain whose lumped sequence fails the Markov check at
/// `horizon`.
pub fn find_nonlumpable_chain(max_den: i64, horizon: usize) -> Result<Option<(ChainSpec, Vec<u32>)>> {
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for den in 1..=max_den {
        for a in 0..=den {
            for b in 0..=den - a {
                let row = vec![Rational::new(a.into(), den.into()), Rational::new(b.into(), den.into()), Rational::new((den - a - b).into(), den.into())];
                if !rows.contains(&row) {
                    rows.push(row);
                }
            }
        }
    }
    let maps: [Vec<u32>; 3] = [vec![0, 1, 1], vec![0, 1, 0], vec![0, 0, 1]];
    for r0 in &rows {
        for r1 in &rows {
            for r2 in &rows {
                let t = RatMatrix::from_rows(vec![r0.clone(), r1.clone(), r2.clone()])?;
                if !crate::dilation::is_irreducible(&t) {
                    continue;
                }
                let Ok(spec) = ChainSpec::new(t, None) else { continue };
                let view = ProcessView::from_path_law(&path_law(&spec, horizon));
                for f in &maps {
                    if !markov_sequence_check(&lump_process(&view, f)?)?.holds() {
                        return Ok(Some((spec, f.clone())));
                    }
                }
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Reports and suites

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckEntry {
    pub check: String,
    pub anchor: String,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micros: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub entries: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.verdict)
    }

    pub fn get(&self, check: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.verdict)
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.entries.extend(other.entries);
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("plain data") + "\n").collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub budget: u128,
    pub timing: bool,
    pub parallel: bool,
    pub moments: MomentOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            budget: crate::graded::DEFAULT_ATOM_BUDGET,
            timing: false,
            parallel: false,
            moments: MomentOptions::default(),
        }
    }
}

type Outcome = (bool, Option<String>);

struct Recorder {
    timing: bool,
    report: VerificationReport,
}

impl Recorder {
    fn run(&mut self, check: &str, anchor: &str, f: impl FnOnce() -> Result<Outcome>) -> Result<bool> {
        let start = Instant::now();
        let (verdict, witness) = f()?;
        let micros = self.timing.then(|| start.elapsed().as_micros() as u64);
        self.report.entries.push(CheckEntry {
            check: check.into(),
            anchor: anchor.into(),
            verdict,
            witness: if verdict { None } else { witness },
            micros,
        });
        Ok(verdict)
    }
}

fn outcome(witness: Option<String>) -> Outcome {
    (witness.is_none(), witness)
}

/// The process model of a chain together with an `F⁺` representation whose
/// `α₀` is the model's dilation endomorphism, and the observed sequence.
pub struct SuiteModel {
    pub model: ProcessModel,
    pub rep: PointRep,
    pub view: ProcessView,
}

impl SuiteModel {
    /// The canonical construction with `δ(c, c') = c'`.
    pub fn build(spec: &ChainSpec, horizon: usize, budget: u128) -> Result<Self> {
        let model = build_markov_dilation(spec, horizon, DilationOptions { budget, ..Default::default() })?;
        let rep = rep_from_model(&model, DeltaChoice::Second, budget)?;
        Ok(Self::assemble(model, rep))
    }

    /// Uses the given first-order dilation and `δ` table as they are, without
    /// checking that they preserve the measures, so that the verifiers judge
    /// them.
    pub fn from_tables(
        spec: &ChainSpec,
        first_order: FirstOrderDilation,
        delta: Vec<u32>,
        horizon: usize,
        budget: u128,
    ) -> Result<Self> {
        let model = ProcessModel::from_parts(spec.clone(), first_order, horizon, budget)?;
        let rep = build_fplus_rep_unchecked(
            spec.state_space(),
            model.noise().space().clone(),
            model.c_map().to_vec(),
            delta,
            horizon,
            budget,
        )?;
        Ok(Self::assemble(model, rep))
    }

    /// The canonical construction with the optional `c_map` and `δ` tables
    /// of a chain file substituted.
    pub fn from_chain_file(file: &ChainFile, horizon: usize, budget: u128) -> Result<Self> {
        let spec = file.spec()?;
        let mut first_order = build_first_order_dilation(&spec, TieBreak::default());
        if let Some(c_map) = &file.c_map {
            first_order.c_map = c_map.clone();
        }
        let c = first_order.noise.len();
        let delta = file.delta_map.clone().unwrap_or_else(|| DeltaChoice::Second.table(c));
        Self::from_tables(&spec, first_order, delta, horizon, budget)
    }

    fn assemble(model: ProcessModel, rep: PointRep) -> Self {
        let view = ProcessView::from_model(&model);
        SuiteModel { model, rep, view }
    }

    pub fn identity_obs(&self) -> Vec<u32> {
        (0..self.model.spec().d() as u32).collect()
    }
}

fn dilation_stage(sm: &SuiteModel, opts: &SuiteOptions, rec: &mut Recorder) -> Result<()> {
    let spec = sm.model.spec();
    let report = dilation_property_check(&sm.model, opts.moments)?;
    let w = report.witness.clone();
    rec.run("dilation.powers", "compressions of α^n equal T^n for n ≤ K", || {
        Ok((report.powers.iter().all(|(_, ok)| *ok), w.clone()))
    })?;
    rec.run("dilation.coupling", "the coupling is a measure-preserving bijection compressing to T", || {
        Ok((report.coupling.holds(), report.coupling.witness.clone()))
    })?;
    rec.run("dilation.moments", "model moments equal path-law moments", || Ok((report.moments_agree, w.clone())))?;
    rec.run("dilation.measure_preserving", "α preserves the product state", || {
        Ok((report.measure_preserving, w.clone()))
    })?;
    rec.run("dilation.e0", "E₀ = ι₀ι₀*", || Ok((report.e0_factorizes, w.clone())))?;
    rec.run("dilation.canonical_filtration", "the canonical filtration is locally minimal and Markovian", || {
        Ok((report.locally_minimal && report.markov_filtration, w.clone()))
    })?;
    rec.run("dilation.stationary_law", "π T = π with π faithful", || {
        let pushed = spec.t().transpose().apply(spec.pi());
        Ok((pushed.as_slice() == spec.pi(), Some("π is not stationary".into())))
    })?;
    Ok(())
}

fn spreadability_stage(sm: &SuiteModel, rec: &mut Recorder) -> Result<(bool, bool)> {
    let obs = sm.identity_obs();
    let ps = partial_spreadability_check(&sm.rep, &obs, &sm.view)?;
    let ps_ok = rec.run("ps.partial", "the sequence is partially spreadable through the F⁺ representation", || {
        Ok((ps.holds(), ps.witness.clone()))
    })?;
    let max_ok = rec.run("ps.maximal", "ι₀(A) equals the intersected fixed points M₀", || {
        Ok(outcome(maximal_ps_check(&sm.rep, &obs)?))
    })?;
    rec.run("ps.adapted", "partially spreadable sequences are adapted to the representation's Markov filtration", || {
        if !ps_ok {
            return Ok((true, None));
        }
        Ok(outcome(adaptedness_witness(&sm.rep, &obs)?))
    })?;
    Ok((ps_ok, max_ok))
}

fn markov_stage(sm: &SuiteModel, maximal: bool, rec: &mut Recorder) -> Result<()> {
    let ms = markov_sequence_check(&sm.view)?;
    let markov = rec.run("markov.sequence", "the sequence is a Markov sequence", || Ok((ms.holds(), ms.witness.clone())))?;
    rec.run("markov.maximal_implies_markov", "maximal partial spreadability implies the Markov property", || {
        Ok((!maximal || markov, Some("maximal but not Markov".into())))
    })?;
    rec.run("markov.rep_filtration", "the representation's local filtration is Markovian", || {
        let f = filtration_from_rep(&sm.rep)?;
        let ok = f.report.is_markovian() && f.report.is_saturated() && f.report.implications_hold;
        Ok((ok, f.report.witness.clone()))
    })?;
    Ok(())
}

fn distribution_stage(sm: &SuiteModel, opts: &SuiteOptions, rec: &mut Recorder) -> Result<()> {
    let spec = sm.model.spec();
    let law = sm.view.path_law();
    rec.run("distribution.transition_operator", "the sequence has initial law π and transition operator T", || {
        let d = spec.d();
        let two = law.marginal(&[0, 1]);
        let one = law.marginal(&[0]);
        let zero = Rational::zero();
        for i in 0..d as u32 {
            let p = one.get(&vec![i]).unwrap_or(&zero);
            if p != &spec.pi()[i as usize] {
                return Ok((false, Some(format!("P(Y0={i}) = {}", format_rational(p)))));
            }
            for j in 0..d as u32 {
                let r = two.get(&vec![i, j]).unwrap_or(&zero) / p;
                if r != spec.t()[(i as usize, j as usize)] {
                    return Ok((false, Some(format!("estimated transition ({i},{j}) is {}", format_rational(&r)))));
                }
            }
        }
        Ok((true, None))
    })?;
    rec.run("distribution.path_law", "the sequence has the law of the chain", || {
        let (_, w) = compare_moments(&law, &path_law(spec, law.horizon()), opts.moments);
        Ok(outcome(w))
    })?;
    rec.run("distribution.qregression", "time-ordered correlations follow the nested T formula", || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.moments.seed);
        let d = spec.d();
        let k = sm.view.horizon();
        let rand_fn = |rng: &mut ChaCha8Rng| -> Vec<Rational> {
            (0..d).map(|_| Rational::new(rng.gen_range(-3..=3).into(), rng.gen_range(1..=3).into())).collect()
        };
        for _ in 0..12 {
            let r = rng.gen_range(1..=3.min(k + 1));
            let mut times: Vec<usize> = rand::seq::index::sample(&mut rng, k + 1, r).into_vec();
            times.sort_unstable();
            let a: Vec<_> = (0..r).map(|_| rand_fn(&mut rng)).collect();
            let b: Vec<_> = (0..r).map(|_| rand_fn(&mut rng)).collect();
            let q = qregression_check(&sm.view, spec, &times, &a, &b)?;
            if !q.agrees() {
                return Ok((false, Some(format!(
                    "times {times:?}: model {}, nested {}, path law {}",
                    format_rational(&q.model),
                    format_rational(&q.nested),
                    format_rational(&q.path_law)
                ))));
            }
        }
        Ok((true, None))
    })?;
    Ok(())
}

fn tower_stage(rep: &PointRep, rec: &mut Recorder) -> Result<()> {
    let tower = triangular_tower_check(rep)?;
    rec.run("tower.cells", "every cell of the triangular tower is a commuting square", || {
        Ok((tower.holds() && tower.checked_cells() > 0, tower.witness.clone()))
    })?;
    rec.run("tower.intertwining", "α_k Q_n = Q_{n+1} α_k for k < n ≤ K-1", || {
        for n in 1..=rep.work_level() {
            for k in 0..n {
                if let Some(w) = intertwining_check(rep, k, n)? {
                    return Ok((false, Some(format!("(k={k}, n={n}): {w}"))));
                }
            }
        }
        Ok((true, None))
    })?;
    Ok(())
}

fn run_stages(
    opts: &SuiteOptions,
    stages: Vec<Box<dyn Fn(&mut Recorder) -> Result<()> + Send + Sync + '_>>,
) -> Result<VerificationReport> {
    let results: Vec<Result<VerificationReport>> = if opts.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = stages
                .iter()
                .map(|stage| {
                    s.spawn(move || {
                        let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
                        stage(&mut rec).map(|_| rec.report)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("stage panicked")).collect()
        })
    } else {
        stages
            .iter()
            .map(|stage| {
                let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
                stage(&mut rec).map(|_| rec.report)
            })
            .collect()
    };
    let mut report = VerificationReport::default();
    for r in results {
        report.extend(r?);
    }
    Ok(report)
}

/// The end-to-end suite: dilation, partial and maximal spreadability, the
/// Markov property, equality in law with the chain, and the fixed-point tower.
pub fn definetti_suite(spec: &ChainSpec, horizon: usize, opts: SuiteOptions) -> Result<VerificationReport> {
    definetti_suite_on(&SuiteModel::build(spec, horizon, opts.budget)?, opts)
}

pub fn definetti_suite_on(sm: &SuiteModel, opts: SuiteOptions) -> Result<VerificationReport> {
    let stages: Vec<Box<dyn Fn(&mut Recorder) -> Result<()> + Send + Sync>> = vec![
        Box::new(move |rec| dilation_stage(sm, &opts, rec)),
        Box::new(move |rec| {
            let (_, maximal) = spreadability_stage(sm, rec)?;
            markov_stage(sm, maximal, rec)
        }),
        Box::new(move |rec| distribution_stage(sm, &opts, rec)),
        Box::new(move |rec| tower_stage(&sm.rep, rec)),
    ];
    run_stages(&opts, stages)
}

pub fn dilation_suite_on(sm: &SuiteModel, opts: SuiteOptions) -> Result<VerificationReport> {
    let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
    dilation_stage(sm, &opts, &mut rec)?;
    Ok(rec.report)
}

/// State preservation, the `F⁺` relations, the tower and the representation's
/// local filtration.
pub fn rep_suite_on(rep: &PointRep, opts: SuiteOptions) -> Result<VerificationReport> {
    let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
    let k = rep.horizon();
    rec.run("rep.state_preserving", "every η_n pushes the product state onto the product state", || {
        Ok(outcome(rep.state_preservation_witness().map(|(n, m, x)| {
            format!("η_{n} does not preserve the weight of level-{m} atom {x}")
        })))
    })?;
    rec.run("rep.relations", "α_k α_ℓ = α_{ℓ+1} α_k for k < ℓ ≤ K on levels ≤ K-2", || {
        Ok(outcome(rep.relations_witness(k)))
    })?;
    tower_stage(rep, &mut rec)?;
    rec.run("rep.filtration", "[m, n] ↦ α₀^m(M_{n-m}) is a Markovian local filtration", || {
        let f = filtration_from_rep(rep)?;
        Ok((f.report.is_markovian() && f.report.implications_hold, f.report.witness.clone()))
    })?;
    Ok(rec.report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LumpSummary {
    pub states: usize,
    pub partially_spreadable: bool,
    pub maximal: bool,
    pub markov: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maximality_witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markov_witness: Option<String>,
}

/// `ζ_n = f(X_n)`: partial spreadability is inherited and maximality forces
/// the Markov property; maximality and Markovianity themselves are reported.
pub fn lump_suite_on(sm: &SuiteModel, f: &[u32], opts: SuiteOptions) -> Result<(VerificationReport, LumpSummary)> {
    let lumped = lump_process(&sm.view, f)?;
    let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
    let ps = partial_spreadability_check(&sm.rep, f, &lumped)?;
    let max_w = maximal_ps_check(&sm.rep, f)?;
    let ms = markov_sequence_check(&lumped)?;
    rec.run("lump.partial", "functions of a partially spreadable sequence are partially spreadable", || {
        Ok((ps.holds(), ps.witness.clone()))
    })?;
    rec.run("lump.maximal_implies_markov", "maximal partial spreadability implies the Markov property", || {
        Ok((max_w.is_some() || ms.holds(), ms.witness.clone()))
    })?;
    let summary = LumpSummary {
        states: lumped.states(),
        partially_spreadable: ps.holds(),
        maximal: max_w.is_none(),
        markov: ms.holds(),
        maximality_witness: max_w,
        markov_witness: ms.witness.clone(),
    };
    Ok((rec.report, summary))
}

/// Tower cells and intertwining for both canonical `δ` choices.
pub fn tower_suite(spec: &ChainSpec, horizon: usize, opts: SuiteOptions) -> Result<VerificationReport> {
    let model = build_markov_dilation(spec, horizon, DilationOptions { budget: opts.budget, ..Default::default() })?;
    let mut report = VerificationReport::default();
    for (delta, suffix) in [(DeltaChoice::Second, "second"), (DeltaChoice::First, "first")] {
        let rep = rep_from_model(&model, delta, opts.budget)?;
        let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
        tower_stage(&rep, &mut rec)?;
        for mut e in rec.report.entries {
            e.check = format!("{}[delta={suffix}]", e.check);
            report.entries.push(e);
        }
    }
    Ok(report)
}

/// Stationarity, partial spreadability and the implication chain are
/// verdicts; spreadability and exchangeability are reported as information,
/// since a Markov chain need not have them.
pub fn hierarchy_suite(spec: &ChainSpec, horizon: usize, opts: SuiteOptions) -> Result<VerificationReport> {
    hierarchy_suite_on(&SuiteModel::build(spec, horizon, opts.budget)?, opts)
}

pub fn hierarchy_suite_on(sm: &SuiteModel, opts: SuiteOptions) -> Result<VerificationReport> {
    let mut rec = Recorder { timing: opts.timing, report: VerificationReport::default() };
    let ps = partial_spreadability_check(&sm.rep, &sm.identity_obs(), &sm.view)?;
    let h = hierarchy_check(&sm.view.path_law(), Some(ps.holds()))?;
    rec.run("hierarchy.stationary", "the sequence is stationary up to the horizon", || {
        Ok((h.stationary, h.stationarity_witness.clone()))
    })?;
    rec.run("hierarchy.partially_spreadable", "the sequence is partially spreadable", || Ok((ps.holds(), ps.witness.clone())))?;
    rec.run("hierarchy.implications", "exchangeable ⟹ spreadable ⟹ partially spreadable ⟹ stationary", || {
        Ok((h.implications_hold, Some(format!("{h:?}"))))
    })?;
    rec.run("hierarchy.exchangeable_iff_spreadable", "exchangeability and spreadability coincide", || {
        Ok((h.exchangeable == h.spreadable, Some(format!("exchangeable={} spreadable={}", h.exchangeable, h.spreadable))))
    })?;
    let mut report = rec.report;
    for (check, what, witness) in [
        ("hierarchy.spreadable", "spreadability", &h.spreadability_witness),
        ("hierarchy.exchangeable", "exchangeability", &h.exchangeability_witness),
    ] {
        report.entries.push(CheckEntry {
            check: check.into(),
            anchor: format!("informational: {what} up to the horizon"),
            verdict: true,
            witness: Some(match witness {
                None => format!("{what}: holds"),
                Some(w) => format!("{what}: fails, {w}"),
            }),
            micros: None,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::DEFAULT_ATOM_BUDGET;
    use crate::rational::{int, rat};

    fn coin() -> ChainSpec {
        ChainSpec::two_state(rat(1, 2), rat(1, 4)).unwrap()
    }

    #[test]
    fn coin_is_partially_spreadable_and_maximal() {
        let sm = SuiteModel::build(&coin(), 4, DEFAULT_ATOM_BUDGET).unwrap();
        let obs = sm.identity_obs();
        let ps = partial_spreadability_check(&sm.rep, &obs, &sm.view).unwrap();
        assert!(ps.holds(), "{ps:?}");
        assert_eq!(maximal_ps_check(&sm.rep, &obs).unwrap(), None);
        assert_eq!(adaptedness_witness(&sm.rep, &obs).unwrap(), None);
        assert!(markov_sequence_check(&sm.view).unwrap().holds());
    }

    #[test]
    fn lumping_injective_and_constant() {
        let sm = SuiteModel::build(&coin(), 3, DEFAULT_ATOM_BUDGET).unwrap();
        let swapped = lump_process(&sm.view, &[1, 0]).unwrap();
        assert!(markov_sequence_check(&swapped).unwrap().holds());
        let constant = lump_process(&sm.view, &[0, 0]).unwrap();
        assert!(markov_sequence_check(&constant).unwrap().holds());
        let h = hierarchy_check(&constant.path_law(), None).unwrap();
        assert!(h.exchangeable && h.spreadable && h.stationary);
        assert!(lump_process(&sm.view, &[1, 1]).is_err());
    }

    #[test]
    fn coin_hierarchy() {
        let h = hierarchy_check(&path_law(&coin(), 5), None).unwrap();
        assert!(h.stationary && !h.spreadable && !h.exchangeable && h.implications_hold);
        assert!(h.spreadability_witness.is_some());
        let iid = ChainSpec::iid(coin().pi().to_vec()).unwrap();
        let h = hierarchy_check(&path_law(&iid, 5), None).unwrap();
        assert!(h.stationary && h.spreadable && h.exchangeable);
    }

    #[test]
    fn nonlumpable_search_finds_a_chain() {
        let (spec, f) = find_nonlumpable_chain(4, 3).unwrap().expect("a hit");
        assert_eq!(spec.d(), 3);
        let view = ProcessView::from_path_law(&path_law(&spec, 3));
        assert!(!markov_sequence_check(&lump_process(&view, &f).unwrap()).unwrap().holds());
        println!("{:?} {f:?}", spec.t().to_strings());
    }

    #[test]
    fn non_stationary_law_is_detected() {
        let mut probs = BTreeMap::new();
        probs.insert(vec![0, 1], rat(1, 2));
        probs.insert(vec![0, 0], rat(1, 2));
        let law = PathLaw::from_probs(2, 1, probs).unwrap();
        let h = hierarchy_check(&law, None).unwrap();
        assert!(!h.stationary && !h.spreadable && !h.exchangeable);
    }

    #[test]
    fn qregression_examples() {
        let spec = coin();
        let sm = SuiteModel::build(&spec, 3, DEFAULT_ATOM_BUDGET).unwrap();
        let a = vec![int(2), int(-1)];
        let b = vec![rat(1, 2), int(3)];
        let one = vec![int(1), int(1)];
        let q = qregression_check(&sm.view, &spec, &[2], &[a.clone()], &[b.clone()]).unwrap();
        let phi_ab: Rational = spec.pi().iter().zip(a.iter().zip(&b)).map(|(p, (x, y))| p * x * y).sum();
        assert!(q.agrees() && q.model == phi_ab);
        // ψ(ι₀(a) ι₁(b)) = φ(a T(b))
        let q = qregression_check(&sm.view, &spec, &[0, 1], &[a.clone(), b.clone()], &[one.clone(), one]).unwrap();
        let tb = spec.t().apply(&b);
        let direct: Rational = (0..2).map(|s| &spec.pi()[s] * &a[s] * &tb[s]).sum();
        assert!(q.agrees() && q.nested == direct);
        assert!(qregression_check(&sm.view, &spec, &[1, 1], &[a.clone(), a], &[b.clone(), b]).is_err());
    }

    #[test]
    fn one_state_chain_passes_everything() {
        let spec = ChainSpec::new(RatMatrix::identity(1), None).unwrap();
        let r = definetti_suite(&spec, 3, SuiteOptions::default()).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn suite_passes_on_coin_serial_and_parallel() {
        let serial = definetti_suite(&coin(), 4, SuiteOptions::default()).unwrap();
        assert!(serial.passed(), "{:?}", serial.failures().collect::<Vec<_>>());
        let parallel = definetti_suite(&coin(), 4, SuiteOptions { parallel: true, ..Default::default() }).unwrap();
        assert_eq!(serial, parallel);
        assert!(tower_suite(&coin(), 4, SuiteOptions::default()).unwrap().passed());
        assert!(hierarchy_suite(&coin(), 4, SuiteOptions::default()).unwrap().passed());
    }

    #[test]
    fn default_report_has_no_timing() {
        let r = definetti_suite(&coin(), 3, SuiteOptions::default()).unwrap();
        assert!(r.entries.iter().all(|e| e.micros.is_none()));
        let r = definetti_suite(&coin(), 3, SuiteOptions { timing: true, ..Default::default() }).unwrap();
        assert!(r.entries.iter().all(|e| e.micros.is_some()));
    }
}

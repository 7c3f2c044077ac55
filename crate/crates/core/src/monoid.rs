//! Words over the generator families `g`, `h` and `c`, the word problems of the
//! Thompson monoid F⁺ and the partial shifts monoid S⁺, and derivations in the
//! extended monoids EF⁺, ES⁺ and FF⁺.
//!
//! Composition convention: a word read left to right denotes the composite of
//! its letters applied rightmost letter first, so `h1 h0` evaluated at `x` is
//! `θ₁(θ₀(x))`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    G,
    H,
    C,
}

impl Family {
    fn symbol(self) -> char {
        match self {
            Family::G => 'g',
            Family::H => 'h',
            Family::C => 'c',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub family: Family,
    pub index: u32,
}

impl Letter {
    pub fn g(index: u32) -> Self {
        Letter { family: Family::G, index }
    }
    pub fn h(index: u32) -> Self {
        Letter { family: Family::H, index }
    }
    pub fn c(index: u32) -> Self {
        Letter { family: Family::C, index }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family.symbol(), self.index)
    }
}

impl FromStr for Letter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        let family = match chars.next() {
            Some('g') => Family::G,
            Some('h') => Family::H,
            Some('c') => Family::C,
            _ => return Err(Error::Parse(format!("bad generator token {s:?}"))),
        };
        let rest = chars.as_str();
        if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
            return Err(Error::Parse(format!("bad generator index in {s:?}")));
        }
        let index = rest.parse().map_err(|_| Error::Parse(format!("generator index out of range in {s:?}")))?;
        Ok(Letter { family, index })
    }
}

/// A finite word; the empty word is the identity `e`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn g(indices: &[u32]) -> Self {
        Word(indices.iter().copied().map(Letter::g).collect())
    }

    pub fn h(indices: &[u32]) -> Self {
        Word(indices.iter().copied().map(Letter::h).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word(self.0.iter().chain(&other.0).copied().collect())
    }

    pub fn max_index(&self) -> Option<u32> {
        self.0.iter().map(|l| l.index).max()
    }

    fn indices_of(&self, family: Family) -> Result<Vec<u32>> {
        self.0
            .iter()
            .map(|l| {
                if l.family == family {
                    Ok(l.index)
                } else {
                    Err(Error::InvalidInput(format!(
                        "expected only {}-letters, found {l}",
                        family.symbol()
                    )))
                }
            })
            .collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;
    /// Space-separated tokens such as `"g0 g1 c2 h0"`; `""` and `"e"` denote the identity.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::identity());
        }
        s.split_whitespace().map(str::parse).collect::<Result<Vec<_>>>().map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical form `g_k^{a_k} ⋯ g_1^{a_1} g_0^{a_0}` of an F⁺ element.
///
/// `exponents[i]` is `a_i`; trailing zeros are trimmed, so the identity is the
/// empty vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NormalForm {
    exponents: Vec<u32>,
}

impl NormalForm {
    pub fn from_exponents(mut exponents: Vec<u32>) -> Self {
        while exponents.last() == Some(&0) {
            exponents.pop();
        }
        NormalForm { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// `None` for the identity.
    pub fn top_index(&self) -> Option<u32> {
        self.exponents.len().checked_sub(1).map(|k| k as u32)
    }

    pub fn is_identity(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn to_word(&self) -> Word {
        let mut letters = Vec::new();
        for (i, &a) in self.exponents.iter().enumerate().rev() {
            letters.extend(std::iter::repeat_n(Letter::g(i as u32), a as usize));
        }
        Word(letters)
    }
}

impl fmt::Display for NormalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "e");
        }
        let mut first = true;
        for (i, &a) in self.exponents.iter().enumerate().rev() {
            if a == 0 {
                continue;
            }
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "g{i}^{a}")?;
        }
        Ok(())
    }
}

/// Rewrites the rightmost pair `g_k g_ℓ` with `k < ℓ` to `g_{ℓ+1} g_k` until the
/// indices are weakly decreasing.
pub fn normal_form_fplus(w: &Word) -> Result<NormalForm> {
    let mut idx = w.indices_of(Family::G)?;
    while let Some(p) = (0..idx.len().saturating_sub(1)).rev().find(|&p| idx[p] < idx[p + 1]) {
        let (k, l) = (idx[p], idx[p + 1]);
        idx[p] = l + 1;
        idx[p + 1] = k;
    }
    let mut exponents = vec![0u32; idx.first().map_or(0, |&m| m as usize + 1)];
    for i in idx {
        exponents[i as usize] += 1;
    }
    Ok(NormalForm::from_exponents(exponents))
}

pub fn words_equal_fplus(w1: &Word, w2: &Word) -> Result<bool> {
    Ok(normal_form_fplus(w1)? == normal_form_fplus(w2)?)
}

/// The (m,n)-partial shift: `g_0 ↦ g_m`, `g_k ↦ g_{n+k}` for `k ≥ 1`.
pub fn shift_mn(m: u32, n: u32, w: &Word) -> Result<Word> {
    if m > n {
        return Err(Error::Precondition(format!("partial shift needs m <= n, got m={m}, n={n}")));
    }
    let idx = w.indices_of(Family::G)?;
    Ok(Word::g(&idx.into_iter().map(|k| if k == 0 { m } else { n + k }).collect::<Vec<_>>()))
}

/// The partial shift θ_k on the nonnegative integers.
pub fn theta(k: u64, x: u64) -> u64 {
    if x < k {
        x
    } else {
        x + 1
    }
}

/// Evaluates the composite of partial shifts denoted by an h-word at `x`.
pub fn splus_apply(w: &Word, x: u64) -> Result<u64> {
    let idx = w.indices_of(Family::H)?;
    Ok(idx.iter().rev().fold(x, |acc, &k| theta(k as u64, acc)))
}

/// Decides equality in S⁺ by comparing the induced maps on `{0, …, L}` with
/// `L = 1 + max index + max word length`.
pub fn words_equal_splus(w1: &Word, w2: &Word) -> Result<bool> {
    w1.indices_of(Family::H)?;
    w2.indices_of(Family::H)?;
    let max_index = w1.max_index().into_iter().chain(w2.max_index()).max().unwrap_or(0) as u64;
    let bound = 1 + max_index + w1.len().max(w2.len()) as u64;
    for x in 0..=bound {
        if splus_apply(w1, x)? != splus_apply(w2, x)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The canonical epimorphism F⁺ → S⁺, `g_n ↦ h_n`.
pub fn project_to_splus(w: &Word) -> Result<Word> {
    Ok(Word::h(&w.indices_of(Family::G)?))
}

// ---------------------------------------------------------------------------
// Presentations and rewriting

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MonoidKind {
    #[serde(rename = "F+")]
    FPlus,
    #[serde(rename = "S+")]
    SPlus,
    #[serde(rename = "EF+")]
    EFPlus,
    #[serde(rename = "ES+")]
    ESPlus,
    #[serde(rename = "FF+")]
    FFPlus,
}

impl FromStr for MonoidKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['+', '_', '-'], "").as_str() {
            "f" | "fplus" => Ok(MonoidKind::FPlus),
            "s" | "splus" => Ok(MonoidKind::SPlus),
            "ef" | "efplus" => Ok(MonoidKind::EFPlus),
            "es" | "esplus" => Ok(MonoidKind::ESPlus),
            "ff" | "ffplus" => Ok(MonoidKind::FFPlus),
            _ => Err(Error::Parse(format!("unknown monoid {s:?}"))),
        }
    }
}

impl fmt::Display for MonoidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonoidKind::FPlus => "F+",
            MonoidKind::SPlus => "S+",
            MonoidKind::EFPlus => "EF+",
            MonoidKind::ESPlus => "ES+",
            MonoidKind::FFPlus => "FF+",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ix {
    K,
    L,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Range {
    /// `k < ℓ`
    Strict,
    /// `k ≤ ℓ`
    Weak,
}

/// A defining relation `X_a Y_b = Z_c W_d`, each index an expression in `k`
/// and `ℓ`, quantified over the stated range.
#[derive(Debug, Clone, Copy)]
struct Relation {
    name: &'static str,
    lhs: [(Family, Ix); 2],
    rhs: [(Family, Ix); 2],
    range: Range,
}

const fn rel(name: &'static str, lhs: [(Family, Ix); 2], rhs: [(Family, Ix); 2], range: Range) -> Relation {
    Relation { name, lhs, rhs, range }
}

use Family::{C, G, H};
use Ix::{K, L, L1};

const GG: Relation = rel("g_k g_l = g_(l+1) g_k", [(G, K), (G, L)], [(G, L1), (G, K)], Range::Strict);
const HH: Relation = rel("h_k h_l = h_(l+1) h_k", [(H, K), (H, L)], [(H, L1), (H, K)], Range::Weak);
const CC_COMMUTE: Relation = rel("c_k c_(l+1) = c_(l+1) c_k", [(C, K), (C, L1)], [(C, L1), (C, K)], Range::Strict);
const CG_COMMUTE: Relation = rel("c_k g_(l+1) = g_(l+1) c_k", [(C, K), (G, L1)], [(G, L1), (C, K)], Range::Strict);
const CH_COMMUTE: Relation = rel("c_k h_(l+1) = h_(l+1) c_k", [(C, K), (H, L1)], [(H, L1), (C, K)], Range::Strict);
const GC_SHIFT: Relation = rel("g_k c_l = c_(l+1) g_k", [(G, K), (C, L)], [(C, L1), (G, K)], Range::Strict);
const HC_SHIFT: Relation = rel("h_k c_l = c_(l+1) h_k", [(H, K), (C, L)], [(C, L1), (H, K)], Range::Strict);
const CC_THOMPSON: Relation = rel("c_k c_l = c_(l+1) c_k", [(C, K), (C, L)], [(C, L1), (C, K)], Range::Strict);
const GC_COMMUTE: Relation = rel("g_k c_l = c_l g_k", [(G, K), (C, L)], [(C, L), (G, K)], Range::Strict);

impl MonoidKind {
    fn relations(self) -> &'static [Relation] {
        match self {
            MonoidKind::FPlus => &[GG],
            MonoidKind::SPlus => &[HH],
            MonoidKind::EFPlus => &[GG, CC_COMMUTE, CG_COMMUTE, GC_SHIFT],
            MonoidKind::ESPlus => &[HH, CC_COMMUTE, CH_COMMUTE, HC_SHIFT],
            MonoidKind::FFPlus => &[GG, CC_THOMPSON, CG_COMMUTE, GC_COMMUTE],
        }
    }

    fn families(self) -> &'static [Family] {
        match self {
            MonoidKind::FPlus => &[G],
            MonoidKind::SPlus => &[H],
            MonoidKind::EFPlus | MonoidKind::FFPlus => &[G, C],
            MonoidKind::ESPlus => &[H, C],
        }
    }

    /// The letter family playing the role of the Thompson generators.
    fn base_family(self) -> Family {
        match self {
            MonoidKind::SPlus | MonoidKind::ESPlus => H,
            _ => G,
        }
    }
}

fn eval_ix(ix: Ix, k: u32, l: u32) -> u32 {
    match ix {
        Ix::K => k,
        Ix::L => l,
        Ix::L1 => l + 1,
    }
}

/// Solves `side` against the pair `(a, b)` for `(k, ℓ)`.
fn match_side(side: &[(Family, Ix); 2], range: Range, a: Letter, b: Letter) -> Option<(u32, u32)> {
    if side[0].0 != a.family || side[1].0 != b.family {
        return None;
    }
    let mut k = None;
    let mut l = None;
    for ((_, ix), letter) in side.iter().zip([a, b]) {
        match ix {
            Ix::K => k = Some(letter.index),
            Ix::L => l = Some(letter.index),
            Ix::L1 => l = Some(letter.index.checked_sub(1)?),
        }
    }
    let (k, l) = (k?, l?);
    let ok = match range {
        Range::Strict => k < l,
        Range::Weak => k <= l,
    };
    ok.then_some((k, l))
}

fn instantiate(side: &[(Family, Ix); 2], k: u32, l: u32) -> (Letter, Letter) {
    let mk = |(fam, ix): (Family, Ix)| Letter { family: fam, index: eval_ix(ix, k, l) };
    (mk(side[0]), mk(side[1]))
}

/// All words reachable from `w` by one application (in either direction) of a
/// defining relation of `kind`, with the relation name and position.
pub fn single_rewrites(kind: MonoidKind, w: &Word) -> Vec<(Word, &'static str, usize)> {
    let mut out = Vec::new();
    for p in 0..w.len().saturating_sub(1) {
        let (a, b) = (w.0[p], w.0[p + 1]);
        for r in kind.relations() {
            for (from, to) in [(&r.lhs, &r.rhs), (&r.rhs, &r.lhs)] {
                if let Some((k, l)) = match_side(from, r.range, a, b) {
                    let (x, y) = instantiate(to, k, l);
                    if (x, y) != (a, b) {
                        let mut next = w.clone();
                        next.0[p] = x;
                        next.0[p + 1] = y;
                        out.push((next, r.name, p));
                    }
                }
            }
        }
    }
    out
}

/// Bidirectional rewriting closure of `w`, exploring only words whose indices
/// stay at or below `index_ceiling`.
pub fn rewriting_closure(kind: MonoidKind, w: &Word, index_ceiling: u32) -> HashSet<Word> {
    let mut seen = HashSet::from([w.clone()]);
    let mut queue = VecDeque::from([w.clone()]);
    while let Some(cur) = queue.pop_front() {
        for (next, _, _) in single_rewrites(kind, &cur) {
            if next.max_index().unwrap_or(0) <= index_ceiling && seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    seen
}

/// Index ceiling sufficient for closures of words with the given maximum index
/// and length.
pub fn closure_ceiling(max_index: u32, len: usize) -> u32 {
    max_index + len as u32 + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationStep {
    pub word: Word,
    /// Relation used to obtain this word from the previous step; absent on the
    /// start word.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position: Option<usize>,
}

/// A chain of single-relation rewrites from a start word to an end word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DerivationTrace {
    pub steps: Vec<DerivationStep>,
}

impl DerivationTrace {
    pub fn start(&self) -> Option<&Word> {
        self.steps.first().map(|s| &s.word)
    }

    pub fn end(&self) -> Option<&Word> {
        self.steps.last().map(|s| &s.word)
    }

    pub fn rewrite_count(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Replays the trace, checking that every step is one application of the
    /// named defining relation of `kind` at the recorded position.
    pub fn validate(&self, kind: MonoidKind) -> Result<()> {
        let Some(first) = self.steps.first() else {
            return Err(Error::InvalidInput("empty derivation".into()));
        };
        if first.relation.is_some() {
            return Err(Error::InvalidInput("start word must not carry a relation".into()));
        }
        for (i, pair) in self.steps.windows(2).enumerate() {
            let (prev, step) = (&pair[0], &pair[1]);
            let ok = single_rewrites(kind, &prev.word).into_iter().any(|(w, name, pos)| {
                w == step.word && Some(name) == step.relation.as_deref() && Some(pos) == step.position
            });
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "step {} ({} -> {}) is not a single {kind} relation application",
                    i + 1,
                    prev.word,
                    step.word
                )));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_NODE_BUDGET: usize = 200_000;

/// Breadth-first search for a derivation between two words of equal length.
pub fn find_derivation(kind: MonoidKind, from: &Word, to: &Word, node_budget: usize) -> Result<DerivationTrace> {
    if from.len() != to.len() {
        return Err(Error::Precondition("relations preserve length; words differ in length".into()));
    }
    let ceiling = closure_ceiling(from.max_index().max(to.max_index()).unwrap_or(0), from.len());
    let mut parent: HashMap<Word, Option<(Word, &'static str, usize)>> = HashMap::from([(from.clone(), None)]);
    let mut queue = VecDeque::from([from.clone()]);
    while let Some(cur) = queue.pop_front() {
        if &cur == to {
            let mut steps = Vec::new();
            let mut node = cur;
            while let Some(Some((prev, name, pos))) = parent.get(&node).cloned() {
                steps.push(DerivationStep { word: node, relation: Some(name.to_string()), position: Some(pos) });
                node = prev;
            }
            steps.push(DerivationStep { word: node, relation: None, position: None });
            steps.reverse();
            return Ok(DerivationTrace { steps });
        }
        if parent.len() >= node_budget {
            return Err(Error::SearchExhausted { explored: parent.len() });
        }
        for (next, name, pos) in single_rewrites(kind, &cur) {
            if next.max_index().unwrap_or(0) <= ceiling && !parent.contains_key(&next) {
                parent.insert(next.clone(), Some((cur.clone(), name, pos)));
                queue.push_back(next);
            }
        }
    }
    Err(Error::SearchExhausted { explored: parent.len() })
}

/// Derives `(c_k x_k)(c_ℓ x_ℓ) = (c_{ℓ+1} x_{ℓ+1})(c_k x_k)` in an extended
/// monoid, where `x` is `g` (EF⁺, FF⁺) or `h` (ES⁺).
pub fn extended_relation_check(kind: MonoidKind, k: u32, l: u32, node_budget: usize) -> Result<DerivationTrace> {
    if !kind.families().contains(&Family::C) {
        return Err(Error::Precondition(format!("{kind} has no c-generators")));
    }
    if k >= l {
        return Err(Error::Precondition(format!("need k < l, got k={k}, l={l}")));
    }
    let x = kind.base_family();
    let pair = |i: u32| [Letter::c(i), Letter { family: x, index: i }];
    let from = Word(pair(k).into_iter().chain(pair(l)).collect());
    let to = Word(pair(l + 1).into_iter().chain(pair(k)).collect());
    find_derivation(kind, &from, &to, node_budget)
}

//! File formats. Rationals are `"num/den"` strings or integers; a file is
//! read as TOML when its extension is `.toml` and as JSON otherwise.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dilation::ChainSpec;
use crate::error::{Error, Result};
use crate::finprob::{FinSpace, MarkovKernel, Partition};
use crate::rational::{format_rational, parse_rational, RatMatrix, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatRepr {
    Int(i64),
    Text(String),
}

impl RatRepr {
    fn parse(&self) -> Result<Rational> {
        match self {
            RatRepr::Int(n) => Ok(Rational::from_integer((*n).into())),
            RatRepr::Text(s) => parse_rational(s),
        }
    }
}

impl From<&Rational> for RatRepr {
    fn from(r: &Rational) -> Self {
        RatRepr::Text(format_rational(r))
    }
}

fn parse_vec(v: &[RatRepr]) -> Result<Vec<Rational>> {
    v.iter().map(RatRepr::parse).collect()
}

fn parse_matrix(rows: &[Vec<RatRepr>]) -> Result<RatMatrix> {
    RatMatrix::from_rows(rows.iter().map(|r| parse_vec(r)).collect::<Result<_>>()?)
}

/// `{ "d": 2, "T": [["1/2", "1/2"], ...], "pi": [...]?, "c_map": [...]?, "delta_map": [...]? }`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub d: usize,
    #[serde(rename = "T")]
    pub t: Vec<Vec<RatRepr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<RatRepr>>,
    /// Explicit `c_map[a + d·c]` over the constructed noise atoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_map: Option<Vec<u32>>,
    /// Explicit `δ[c + |C|·c']`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_map: Option<Vec<u32>>,
}

impl ChainFile {
    pub fn from_spec(spec: &ChainSpec) -> Self {
        ChainFile {
            d: spec.d(),
            t: (0..spec.d()).map(|i| spec.t().row(i).iter().map(RatRepr::from).collect()).collect(),
            pi: Some(spec.pi().iter().map(RatRepr::from).collect()),
            c_map: None,
            delta_map: None,
        }
    }

    pub fn spec(&self) -> Result<ChainSpec> {
        let t = parse_matrix(&self.t)?;
        if t.rows() != self.d || t.cols() != self.d {
            return Err(Error::InvalidInput(format!("T must be {0}×{0}", self.d)));
        }
        let pi = self.pi.as_deref().map(parse_vec).transpose()?;
        ChainSpec::new(t, pi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub weights: Vec<RatRepr>,
}

impl SpaceFile {
    pub fn space(&self) -> Result<FinSpace> {
        FinSpace::new(parse_vec(&self.weights)?)
    }
}

/// A Markov map between `(C^n, φ)` and `(C^m, ψ)`; `psi` defaults to `phi`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub matrix: Vec<Vec<RatRepr>>,
    pub phi: Vec<RatRepr>,
    #[serde(default)]
    pub psi: Option<Vec<RatRepr>>,
}

impl KernelFile {
    pub fn kernel(&self) -> Result<MarkovKernel> {
        let phi = parse_vec(&self.phi)?;
        let psi = match &self.psi {
            Some(p) => parse_vec(p)?,
            None => phi.clone(),
        };
        MarkovKernel::new(parse_matrix(&self.matrix)?, phi, psi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub atoms: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl PartitionFile {
    pub fn partition(&self) -> Result<Partition> {
        Partition::from_blocks(self.atoms, &self.blocks)
    }
}

/// A chain together with a lumping map of its states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpFile {
    pub chain: ChainFile,
    pub map: Vec<u32>,
}

pub fn parse_str<T: DeserializeOwned>(text: &str, toml_format: bool) -> Result<T> {
    if toml_format {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_str(&text, path.extension().is_some_and(|e| e == "toml"))
}

/// A chain file, or a lump file together with its map.
pub fn load_chain(path: impl AsRef<Path>) -> Result<(ChainFile, Option<Vec<u32>>)> {
    let path = path.as_ref();
    match load::<LumpFile>(path) {
        Ok(l) => Ok((l.chain, Some(l.map))),
        Err(_) => Ok((load::<ChainFile>(path)?, None)),
    }
}

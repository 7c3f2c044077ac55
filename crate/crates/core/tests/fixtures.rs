use std::path::PathBuf;

use fplus_core::checks::{definetti_suite_on, find_nonlumpable_chain, SuiteModel, SuiteOptions};
use fplus_core::config::{load, ChainFile, LumpFile};
use fplus_core::dilation::{build_first_order_dilation, TieBreak};
use fplus_core::graded::DEFAULT_ATOM_BUDGET;
use fplus_core::rep::DeltaChoice;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn cached_nonlumpable_chain_is_the_first_search_hit() {
    let fixture: LumpFile = load(data("nonlumpable.json")).unwrap();
    let (spec, map) = find_nonlumpable_chain(4, 3).unwrap().expect("search finds a chain");
    assert_eq!(fixture.chain.spec().unwrap(), spec);
    assert_eq!(fixture.map, map);
}

#[test]
fn json_and_toml_coin_agree() {
    let json: ChainFile = load(data("coin_p12_p14.json")).unwrap();
    let toml: ChainFile = load(data("coin_p12_p14.toml")).unwrap();
    assert_eq!(json.spec().unwrap(), toml.spec().unwrap());
}

#[test]
fn explicit_tables_reproduce_the_canonical_suite() {
    let mut file: ChainFile = load(data("coin_p12_p14.json")).unwrap();
    let spec = file.spec().unwrap();
    let canonical = definetti_suite_on(&SuiteModel::build(&spec, 3, DEFAULT_ATOM_BUDGET).unwrap(), SuiteOptions::default()).unwrap();
    let fo = build_first_order_dilation(&spec, TieBreak::default());
    file.c_map = Some(fo.c_map.clone());
    file.delta_map = Some(DeltaChoice::Second.table(fo.noise.len()));
    let explicit = SuiteModel::from_chain_file(&file, 3, DEFAULT_ATOM_BUDGET).unwrap();
    assert_eq!(definetti_suite_on(&explicit, SuiteOptions::default()).unwrap(), canonical);

    file.delta_map = Some(DeltaChoice::First.table(fo.noise.len()));
    let first = SuiteModel::from_chain_file(&file, 3, DEFAULT_ATOM_BUDGET).unwrap();
    let report = definetti_suite_on(&first, SuiteOptions::default()).unwrap();
    // M₀ then also remembers the first noise coordinate
    let failing: Vec<&str> = report.failures().map(|e| e.check.as_str()).collect();
    assert_eq!(failing, ["ps.maximal"]);
}

#[test]
fn missing_file_is_a_parse_error() {
    assert!(load::<ChainFile>(data("absent.json")).is_err());
}

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fplus_core::checks::{
    definetti_suite_on, dilation_suite_on, hierarchy_suite_on, lump_suite_on, rep_suite_on, tower_suite,
    SuiteModel, SuiteOptions, VerificationReport,
};
use fplus_core::config::{load_chain, ChainFile};
use fplus_core::graded::DEFAULT_ATOM_BUDGET;
use fplus_core::monoid::{
    extended_relation_check, find_derivation, normal_form_fplus, project_to_splus, shift_mn, words_equal_fplus,
    words_equal_splus, DerivationTrace, Family, Letter, MonoidKind, Word, DEFAULT_NODE_BUDGET,
};
use fplus_core::rational::format_rational;
use fplus_core::rep::triangular_tower_check;
use fplus_core::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "fplus", version, about = "Exact checks for Thompson-monoid representations and Markov dilations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report (JSON lines) or the result (JSON) to this file.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Maximum number of atoms at the top level.
    #[arg(long, global = true, default_value_t = DEFAULT_ATOM_BUDGET)]
    budget: u128,
    /// Record per-check wall-clock time in the report.
    #[arg(long, global = true)]
    timing: bool,
    /// Run independent suite stages on separate threads.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Normal form of an F⁺ word such as "g0 g1".
    Normalize { word: String },
    /// Decide equality of two words.
    WordEq {
        w1: String,
        w2: String,
        #[arg(long, value_enum, default_value_t = EqMonoid::Fplus)]
        monoid: EqMonoid,
    },
    /// Apply the (m,n)-partial shift to an F⁺ word.
    Shift { m: u32, n: u32, word: String },
    /// Derive the relation for the pair (k, l) in a presented monoid.
    Derive {
        monoid: String,
        k: u32,
        l: u32,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        nodes: usize,
    },
    /// Stationary distribution of a chain.
    Stationary { chainspec: PathBuf },
    /// Build the Markov dilation and check it.
    Dilate {
        chainspec: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Check the F⁺ representation attached to the dilation.
    RepCheck {
        chainspec: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Lump states through a map such as "0,1,1" and check the lumped sequence.
    Lump {
        chainspec: PathBuf,
        /// Defaults to the map stored in a lump file.
        #[arg(long, value_delimiter = ',')]
        map: Vec<u32>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Run a verification suite.
    Verify {
        chainspec: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EqMonoid {
    Fplus,
    Splus,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Definetti,
    Tower,
    Hierarchy,
    All,
}

/// What a command prints, writes and exits with.
struct Output {
    lines: Vec<String>,
    json: Value,
    report: Option<VerificationReport>,
    ok: bool,
}

impl Output {
    fn data(lines: Vec<String>, json: Value, ok: bool) -> Self {
        Output { lines, json, report: None, ok }
    }

    fn report(report: VerificationReport, extra: Value) -> Self {
        let mut lines: Vec<String> = report
            .entries
            .iter()
            .map(|e| {
                let tag = match (e.verdict, e.anchor.strip_prefix("informational: ")) {
                    (_, Some(_)) => "INFO",
                    (true, None) => "PASS",
                    (false, None) => "FAIL",
                };
                let mut line = format!("{tag} {}: {}", e.check, e.anchor.trim_start_matches("informational: "));
                if let Some(w) = &e.witness {
                    line += &format!("\n     {w}");
                }
                if let Some(us) = e.micros {
                    line += &format!(" [{us} us]");
                }
                line
            })
            .collect();
        let ok = report.passed();
        lines.push(format!("{} of {} checks passed", report.entries.iter().filter(|e| e.verdict).count(), report.entries.len()));
        Output { lines, json: extra, report: Some(report), ok }
    }
}

fn parse_word(s: &str) -> Result<Word, Error> {
    s.parse()
}

fn chain(path: &PathBuf) -> Result<ChainFile, Error> {
    Ok(load_chain(path)?.0)
}

fn trace_json(trace: &DerivationTrace) -> Value {
    serde_json::to_value(trace).expect("plain data")
}

fn derive(kind: MonoidKind, k: u32, l: u32, nodes: usize) -> Result<DerivationTrace, Error> {
    if matches!(kind, MonoidKind::FPlus | MonoidKind::SPlus) {
        let x = |i| if kind == MonoidKind::FPlus { Letter::g(i) } else { Letter::h(i) };
        let strict = kind == MonoidKind::FPlus;
        if k > l || (strict && k == l) {
            return Err(Error::Precondition(format!("need k {} l, got k={k}, l={l}", if strict { "<" } else { "<=" })));
        }
        let from = Word(vec![x(k), x(l)]);
        let to = Word(vec![x(l + 1), x(k)]);
        return find_derivation(kind, &from, &to, nodes);
    }
    extended_relation_check(kind, k, l, nodes)
}

fn run(cli: &Cli) -> Result<Output, Error> {
    let opts = SuiteOptions { budget: cli.budget, timing: cli.timing, parallel: cli.parallel, ..Default::default() };
    Ok(match &cli.command {
        Command::Normalize { word } => {
            let nf = normal_form_fplus(&parse_word(word)?)?;
            Output::data(vec![nf.to_string()], json!({ "word": word, "normal_form": nf.to_string() }), true)
        }
        Command::WordEq { w1, w2, monoid } => {
            let (a, b) = (parse_word(w1)?, parse_word(w2)?);
            let equal = match monoid {
                EqMonoid::Fplus => words_equal_fplus(&a, &b)?,
                EqMonoid::Splus => {
                    // g-words are read through the quotient map g_k ↦ h_k
                    let lift = |w: &Word| {
                        if w.letters().iter().any(|l| l.family == Family::G) {
                            project_to_splus(w)
                        } else {
                            Ok(w.clone())
                        }
                    };
                    words_equal_splus(&lift(&a)?, &lift(&b)?)?
                }
            };
            let text = if equal { "equal" } else { "not equal" };
            Output::data(vec![text.into()], json!({ "w1": w1, "w2": w2, "equal": equal }), equal)
        }
        Command::Shift { m, n, word } => {
            let shifted = shift_mn(*m, *n, &parse_word(word)?)?;
            Output::data(vec![shifted.to_string()], json!({ "m": m, "n": n, "word": word, "shifted": shifted.to_string() }), true)
        }
        Command::Derive { monoid, k, l, nodes } => {
            let kind: MonoidKind = monoid.parse()?;
            let trace = derive(kind, *k, *l, *nodes)?;
            trace.validate(kind)?;
            let mut lines = vec![format!("{kind}: {} rewrite steps", trace.rewrite_count())];
            lines.extend(trace.steps.iter().map(|s| match &s.relation {
                Some(r) => format!("  {}   [{r} at {}]", s.word, s.position.unwrap_or_default()),
                None => format!("  {}", s.word),
            }));
            Output::data(lines, json!({ "monoid": kind.to_string(), "k": k, "l": l, "trace": trace_json(&trace) }), true)
        }
        Command::Stationary { chainspec } => {
            let spec = chain(chainspec)?.spec()?;
            let pi: Vec<String> = spec.pi().iter().map(format_rational).collect();
            Output::data(vec![pi.join(" ")], json!({ "pi": pi }), true)
        }
        Command::Dilate { chainspec, depth } => {
            let sm = SuiteModel::from_chain_file(&chain(chainspec)?, *depth, cli.budget)?;
            let extra = json!({ "noise_atoms": sm.model.noise().len(), "c_map": sm.model.c_map() });
            Output::report(dilation_suite_on(&sm, opts)?, extra)
        }
        Command::RepCheck { chainspec, depth } => {
            let sm = SuiteModel::from_chain_file(&chain(chainspec)?, *depth, cli.budget)?;
            let tower = triangular_tower_check(&sm.rep)?;
            Output::report(rep_suite_on(&sm.rep, opts)?, json!({ "tower": tower }))
        }
        Command::Lump { chainspec, map, depth } => {
            let (file, file_map) = load_chain(chainspec)?;
            let map = match (map.is_empty(), file_map) {
                (false, _) => map.clone(),
                (true, Some(m)) => m,
                (true, None) => return Err(Error::InvalidInput("no --map given and the file carries none".into())),
            };
            let sm = SuiteModel::from_chain_file(&file, *depth, cli.budget)?;
            let (report, summary) = lump_suite_on(&sm, &map, opts)?;
            let mut out = Output::report(report, json!({ "lump": summary }));
            out.lines.insert(
                0,
                format!(
                    "lumped to {} states: partially spreadable={}, maximal={}, markov={}",
                    summary.states, summary.partially_spreadable, summary.maximal, summary.markov
                ),
            );
            let witnesses = [&summary.maximality_witness, &summary.markov_witness];
            for (i, w) in witnesses.into_iter().flatten().enumerate() {
                out.lines.insert(1 + i, format!("  {w}"));
            }
            out
        }
        Command::Verify { chainspec, depth, suite } => {
            let file = chain(chainspec)?;
            let sm = SuiteModel::from_chain_file(&file, *depth, cli.budget)?;
            let mut report = VerificationReport::default();
            if matches!(suite, Suite::Definetti | Suite::All) {
                report.extend(definetti_suite_on(&sm, opts)?);
            }
            if matches!(suite, Suite::Tower | Suite::All) {
                report.extend(tower_suite(&file.spec()?, *depth, opts)?);
            }
            if matches!(suite, Suite::Hierarchy | Suite::All) {
                report.extend(hierarchy_suite_on(&sm, opts)?);
            }
            Output::report(report, Value::Null)
        }
    })
}

fn write_json(path: &PathBuf, out: &Output) -> std::io::Result<()> {
    let text = match &out.report {
        Some(r) => {
            let mut text = r.to_json_lines();
            if !out.json.is_null() {
                text += &(out.json.to_string() + "\n");
            }
            text
        }
        None => out.json.to_string() + "\n",
    };
    fs::write(path, text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            for line in &out.lines {
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            if let Some(path) = &cli.json {
                if let Err(e) = write_json(path, &out) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            ExitCode::from(if out.ok { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::SearchExhausted { .. } => 1,
                _ => 2,
            })
        }
    }
}

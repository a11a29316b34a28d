//! Command adapters: read a document, call the library, write the result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use robustexp::document::{from_value, parse_json, ChainDoc, FamilyDoc, GaussianFamilyDoc, ModelDoc, SCHEMA_VERSION};
use robustexp::kernels::MarkovChain;
use robustexp::kolmogorov::{DiracPathFamily, FullSimplexFamily};
use robustexp::{
    check_consistency_expectations, check_consistency_scenario_sets, hat_vs_bar_gap_demo, maximal_extension_eval,
    minimal_extension_eval, robust_eval, verify_axioms, ConsistencyReport, Error, FiniteSubset, GaussianFunction,
    MarginalFamily, ParamBox, RandomVariable, StateSpace, SubspaceModel, TimeGrid, AXIOM_TOL,
};

#[derive(Parser, Debug)]
#[command(name = "robustexp", version, about = "Nonlinear expectations on finite spaces")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input document (JSON).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for randomized probes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Pass/fail tolerance; each command has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Number of random probe functions.
    #[arg(long, global = true, default_value_t = 50)]
    pub probes: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the expectation axioms of a model.
    Axioms,
    /// Maximal and minimal extensions from a subspace.
    Extend,
    /// Consistency of a marginal family.
    Consistency,
    /// Evaluate a Markov chain family.
    Markov {
        /// Also dump backward-induction tensors (f64 little endian) here, with a JSON sidecar.
        #[arg(long)]
        tensor: Option<PathBuf>,
    },
    /// Robust expectation under drift and volatility uncertainty.
    Gaussian(GaussianArgs),
    /// The continuity gap of the Dirac path family.
    DemoGap {
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Comma-separated path states, padded with 0.
        #[arg(long, default_value = "")]
        path: String,
        #[arg(long, value_enum, default_value_t = GapFamily::Dirac)]
        family: GapFamily,
    },
}

#[derive(Args, Debug)]
pub struct GaussianArgs {
    /// Comma-separated observation times.
    #[arg(long)]
    pub times: String,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_hi: f64,
    #[arg(long)]
    pub sigma_lo: f64,
    #[arg(long)]
    pub sigma_hi: f64,
    #[arg(long, default_value_t = 20)]
    pub order: usize,
    #[arg(long, default_value_t = 9)]
    pub grid: usize,
    #[arg(long)]
    pub refine: bool,
    /// Registered test function.
    #[arg(long, default_value = "last")]
    pub function: String,
    /// Polynomial coefficient file `[[c, [e1, ..., en]], ...]`, overriding `--function`.
    #[arg(long)]
    pub poly: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GapFamily {
    Dirac,
    Full,
}

/// Outcome of a run: the process exit status.
pub enum Outcome {
    Pass,
    Fail(String),
}

pub fn run(cli: &Cli) -> Result<Outcome, Error> {
    let c = &cli.common;
    match &cli.command {
        Command::Axioms => axioms(c),
        Command::Extend => extend(c),
        Command::Consistency => consistency(c),
        Command::Markov { tensor } => markov(c, tensor.as_deref()),
        Command::Gaussian(g) => gaussian(c, g),
        Command::DemoGap { depth, path, family } => demo_gap(c, *depth, path, *family),
    }
}

fn read_input(c: &Common) -> Result<Value, Error> {
    let path = c.input.as_ref().ok_or_else(|| Error::Argument("--input is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Argument(format!("reading {}: {e}", path.display())))?;
    parse_json(&text)
}

fn take(doc: &mut Value, key: &str) -> Option<Value> {
    doc.as_object_mut().and_then(|m| m.remove(key))
}

fn require(doc: &mut Value, key: &str) -> Result<Value, Error> {
    take(doc, key).ok_or_else(|| Error::Parse(format!("missing field `{key}`")))
}

fn write_output(c: &Common, bytes: &[u8]) -> Result<(), Error> {
    match &c.output {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Argument(format!("writing {}: {e}", p.display()))),
        None => match std::io::stdout().write_all(bytes) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(Error::Argument(format!("writing output: {e}")))
            }
            _ => Ok(()),
        },
    }
}

fn write_json(c: &Common, v: &Value) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    write_output(c, s.as_bytes())
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("results serialize")
}

fn random_probes(space: &StateSpace, count: usize, seed: u64) -> Result<Vec<RandomVariable>, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| RandomVariable::new(space, (0..space.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect()))
        .collect()
}

fn vectors(space: &StateSpace, v: Value, what: &str) -> Result<Vec<RandomVariable>, Error> {
    let rows: Vec<Vec<f64>> = from_value(v, what)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| RandomVariable::new(space, r).map_err(|e| Error::Parse(format!("{what}[{i}]: {e}"))))
        .collect()
}

fn axioms(c: &Common) -> Result<Outcome, Error> {
    let mut doc = read_input(c)?;
    let samples = take(&mut doc, "samples");
    let model_doc: ModelDoc = match take(&mut doc, "model") {
        Some(m) => from_value(m, "model")?,
        None => from_value(doc, "model")?,
    };
    let model = model_doc.build(None)?;
    let samples = match samples {
        Some(v) => vectors(model.space(), v, "samples")?,
        None => random_probes(model.space(), c.probes.max(2), c.seed)?,
    };
    let tol = c.tol.unwrap_or(AXIOM_TOL);
    let report = verify_axioms(&model, &samples, tol)?;
    let pass = report.is_convex_expectation();
    write_json(
        c,
        &json!({
            "v": SCHEMA_VERSION,
            "command": "axioms",
            "kind": model.kind(),
            "pass": pass,
            "expectation": report.is_expectation(),
            "convex": report.is_convex_expectation(),
            "sublinear": report.is_sublinear_expectation(),
            "report": to_value(&report),
        }),
    )?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail("axiom check failed".into()) })
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
enum ExtendMode {
    Maximal,
    Minimal,
    #[default]
    Both,
}

fn extend(c: &Common) -> Result<Outcome, Error> {
    let mut doc = read_input(c)?;
    let model_doc: ModelDoc = from_value(require(&mut doc, "model")?, "model")?;
    let model = model_doc.build(None)?;
    let basis = vectors(model.space(), require(&mut doc, "basis")?, "basis")?;
    let inputs = vectors(model.space(), require(&mut doc, "inputs")?, "inputs")?;
    let mode: ExtendMode = take(&mut doc, "mode").map(|v| from_value(v, "mode")).transpose()?.unwrap_or_default();
    let lp_tol: Option<f64> = take(&mut doc, "lp_tol").map(|v| from_value(v, "lp_tol")).transpose()?;
    if let Some(extra) = doc.as_object().and_then(|m| m.keys().next()) {
        return Err(Error::Parse(format!("unknown field `{extra}`")));
    }
    let mut sub = SubspaceModel::new(basis, model)?;
    if let Some(t) = lp_tol.or(c.tol) {
        sub = sub.with_lp_tol(t)?;
    }
    let mut results = Vec::new();
    let mut sandwich_ok = true;
    for (i, x) in inputs.iter().enumerate() {
        let mut rec = json!({ "input": i });
        let hi = (mode != ExtendMode::Minimal).then(|| maximal_extension_eval(&sub, x)).transpose()?;
        let lo = (mode != ExtendMode::Maximal).then(|| minimal_extension_eval(&sub, x)).transpose()?;
        if let (Some(h), Some(l)) = (&hi, &lo) {
            sandwich_ok &= l.value <= h.value + sub.lp_tol();
        }
        if let Some(h) = hi {
            rec["maximal"] = to_value(&h);
        }
        if let Some(l) = lo {
            rec["minimal"] = to_value(&l);
        }
        results.push(rec);
    }
    write_json(c, &json!({ "v": SCHEMA_VERSION, "command": "extend", "results": results }))?;
    Ok(if sandwich_ok { Outcome::Pass } else { Outcome::Fail("minimal extension exceeds maximal extension".into()) })
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
enum CheckKind {
    #[default]
    Expectations,
    ScenarioSets,
    Both,
}

fn default_pairs(horizon: Option<usize>, listed: &[FiniteSubset]) -> Result<Vec<(FiniteSubset, FiniteSubset)>, Error> {
    let mut pairs = Vec::new();
    match horizon {
        Some(h) => {
            let full = FiniteSubset::range(0, h as u32 + 1)?;
            let mut subsets: Vec<FiniteSubset> = full.proper_subsets().into_iter().filter(|s| s.len() <= 3).collect();
            if full.len() <= 3 {
                subsets.push(full);
            }
            for j in subsets.iter().filter(|s| s.len() >= 2) {
                for &i in j.indices() {
                    pairs.push((j.clone(), j.without(i).expect("at least two indices")));
                }
            }
            for j in listed {
                pairs.push((j.clone(), j.clone()));
            }
        }
        None => {
            for j in listed {
                for k in listed {
                    if k.is_subset_of(j) {
                        pairs.push((j.clone(), k.clone()));
                    }
                }
            }
        }
    }
    Ok(pairs)
}

fn consistency(c: &Common) -> Result<Outcome, Error> {
    let mut doc = read_input(c)?;
    let family: FamilyDoc = from_value(require(&mut doc, "family")?, "family")?;
    if let FamilyDoc::Gaussian(g) = family {
        return gaussian_consistency(c, &g);
    }
    let base: Vec<String> = from_value(require(&mut doc, "base")?, "base")?;
    let base = StateSpace::new(base).map_err(|e| Error::Parse(format!("base: {e}")))?;
    let check: CheckKind = take(&mut doc, "check").map(|v| from_value(v, "check")).transpose()?.unwrap_or_default();
    let pairs_doc: Option<Vec<(Vec<u32>, Vec<u32>)>> =
        take(&mut doc, "pairs").map(|v| from_value(v, "pairs")).transpose()?;
    let built = family.build(&base)?;
    let pairs = match pairs_doc {
        Some(p) => p
            .iter()
            .enumerate()
            .map(|(i, (j, k))| {
                let j = FiniteSubset::new(j.clone()).map_err(|e| Error::Parse(format!("pairs[{i}]: {e}")))?;
                let k = FiniteSubset::new(k.clone()).map_err(|e| Error::Parse(format!("pairs[{i}]: {e}")))?;
                if !k.is_subset_of(&j) {
                    return Err(Error::Parse(format!("pairs[{i}]: {k} is not a subset of {j}")));
                }
                Ok((j, k))
            })
            .collect::<Result<Vec<_>, Error>>()?,
        None => default_pairs(built.chain.as_ref().map(MarkovChain::horizon), &built.listed)?,
    };
    let fam: &MarginalFamily = &built.family;
    let mut reports: Vec<(&str, ConsistencyReport)> = Vec::new();
    if check != CheckKind::ScenarioSets {
        let mut r = check_consistency_expectations(fam, &pairs, c.probes, c.seed)?;
        if let Some(t) = c.tol {
            r = r.with_tol(t);
        }
        reports.push(("expectations", r));
    }
    if check != CheckKind::Expectations {
        let mut r = check_consistency_scenario_sets(fam, &pairs)?;
        if let Some(t) = c.tol {
            r = r.with_tol(t);
        }
        reports.push(("scenario_sets", r));
    }
    let mut buf = Vec::new();
    if reports.len() == 1 {
        reports[0].1.write_csv(&mut buf)?;
    } else {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| Error::Argument(format!("writing CSV: {e}"));
        w.write_record(["check", "J", "K", "max_discrepancy", "pass"]).map_err(io)?;
        for (name, r) in &reports {
            for row in &r.rows {
                let d = format!("{:e}", row.max_discrepancy);
                w.write_record([
                    *name,
                    row.left.as_str(),
                    row.right.as_str(),
                    d.as_str(),
                    if row.pass { "true" } else { "false" },
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Argument(format!("writing CSV: {e}")))?;
        drop(w);
    }
    write_output(c, &buf)?;
    for (name, r) in &reports {
        if let Some(row) = r.first_failure() {
            let witness = json!({
                "v": SCHEMA_VERSION,
                "check": name,
                "J": row.left,
                "K": row.right,
                "max_discrepancy": row.max_discrepancy,
                "f": row.witness,
            });
            return Ok(Outcome::Fail(witness.to_string()));
        }
    }
    Ok(Outcome::Pass)
}

fn gaussian_function(name: &str, poly: Option<&Path>) -> Result<GaussianFunction, Error> {
    match poly {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Argument(format!("reading {}: {e}", p.display())))?;
            let terms: Vec<(f64, Vec<u32>)> = from_value(parse_json(&text)?, "polynomial")?;
            Ok(GaussianFunction::Polynomial(terms))
        }
        None => GaussianFunction::from_name(name),
    }
}

fn times(v: &[f64]) -> Result<TimeGrid, Error> {
    TimeGrid::new(v.to_vec())
}

fn gaussian_consistency(c: &Common, g: &GaussianFamilyDoc) -> Result<Outcome, Error> {
    let fam = g.build()?;
    let tol = c.tol.unwrap_or(robustexp::gaussian::GAUSSIAN_CONSISTENCY_TOL);
    let mut rows = Vec::new();
    let mut failure = None;
    for (i, chk) in g.checks.iter().enumerate() {
        let f = GaussianFunction::from_name(&chk.function)?;
        let (j, k) = (times(&chk.j)?, times(&chk.k)?);
        let r = fam.consistency(&j, &k, Arc::new(move |x: &[f64]| f.eval(x)), tol)?;
        if !r.pass && failure.is_none() {
            failure = Some(format!("gaussian check {i} differs by {:e}", r.discrepancy));
        }
        rows.push(json!({ "J": chk.j, "K": chk.k, "function": chk.function, "result": to_value(&r) }));
    }
    write_json(c, &json!({ "v": SCHEMA_VERSION, "command": "consistency", "tol": tol, "checks": rows }))?;
    Ok(failure.map_or(Outcome::Pass, Outcome::Fail))
}

fn markov(c: &Common, tensor: Option<&Path>) -> Result<Outcome, Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Evaluation {
        #[serde(rename = "J")]
        j: Vec<u32>,
        f: Vec<f64>,
    }
    let mut doc = read_input(c)?;
    let evaluations: Vec<Evaluation> = from_value(require(&mut doc, "evaluations")?, "evaluations")?;
    let chain = from_value::<ChainDoc>(doc, "markov document")?.build()?;
    let base = chain.operator().domain().clone();
    let mut buf = Vec::new();
    let mut blocks = Vec::new();
    let mut dump: Vec<u8> = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| Error::Argument(format!("writing CSV: {e}"));
        w.write_record(["J", "value"]).map_err(io)?;
        for (i, ev) in evaluations.iter().enumerate() {
            let j = FiniteSubset::new(ev.j.clone()).map_err(|e| Error::Parse(format!("evaluations[{i}].J: {e}")))?;
            let value = chain.evaluate(&j, &ev.f).map_err(|e| match e {
                Error::Dimension { expected, got } => {
                    Error::Parse(format!("evaluations[{i}].f: expected {expected} values, got {got}"))
                }
                other => other,
            })?;
            w.write_record([j.to_string(), value.to_string()]).map_err(io)?;
            if tensor.is_some() {
                for (level, t) in chain.backward_tensors(&j, &ev.f)?.into_iter().enumerate() {
                    let dims = j.len() - level;
                    blocks.push(json!({
                        "evaluation": i,
                        "J": j.indices()[..dims],
                        "shape": vec![base.len(); dims],
                        "offset_bytes": dump.len(),
                    }));
                    t.iter().for_each(|v| dump.extend_from_slice(&v.to_le_bytes()));
                }
            }
        }
        w.flush().map_err(|e| Error::Argument(format!("writing CSV: {e}")))?;
    }
    write_output(c, &buf)?;
    if let Some(path) = tensor {
        fs::write(path, &dump).map_err(|e| Error::Argument(format!("writing {}: {e}", path.display())))?;
        let sidecar = json!({
            "v": SCHEMA_VERSION,
            "dtype": "f64",
            "endianness": "little",
            "order": "row-major, last coordinate fastest",
            "blocks": blocks,
        });
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        let mut s = serde_json::to_string_pretty(&sidecar).expect("values serialize");
        s.push('\n');
        fs::write(&side, s).map_err(|e| Error::Argument(format!("writing sidecar: {e}")))?;
    }
    Ok(Outcome::Pass)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("{what}: cannot parse {t:?}"))))
        .collect()
}

fn gaussian(c: &Common, g: &GaussianArgs) -> Result<Outcome, Error> {
    let grid = times(&parse_list::<f64>(&g.times, "--times")?)?;
    let pbox = ParamBox::new(g.mu_lo, g.mu_hi, g.sigma_lo, g.sigma_hi)?;
    let f = gaussian_function(&g.function, g.poly.as_deref())?;
    f.check_arity(grid.len())?;
    let r = robust_eval(&grid, &|x: &[f64]| f.eval(x), &pbox, g.order, g.grid, g.refine)?;
    let mut out = to_value(&r);
    out["v"] = json!(SCHEMA_VERSION);
    out["function"] = json!(f.to_string());
    write_json(c, &out)?;
    Ok(Outcome::Pass)
}

fn demo_gap(c: &Common, depth: usize, path: &str, family: GapFamily) -> Result<Outcome, Error> {
    let y: Vec<usize> = parse_list(path, "--path")?;
    let base = StateSpace::new(["0", "1"])?;
    let fam = match family {
        GapFamily::Dirac => MarginalFamily::new(&base, Arc::new(DiracPathFamily::new(y.clone()))),
        GapFamily::Full => MarginalFamily::new(&base, Arc::new(FullSimplexFamily)),
    };
    let demo = hat_vs_bar_gap_demo(&fam, &y, depth)?;
    let summary = format!("hat={} bar_limit={}", demo.hat_value, demo.bar_limit);
    let mut out = to_value(&demo);
    out["v"] = json!(SCHEMA_VERSION);
    out["family"] = json!(match family {
        GapFamily::Dirac => "dirac",
        GapFamily::Full => "full",
    });
    match &c.output {
        Some(_) => {
            write_json(c, &out)?;
            println!("{summary}");
        }
        None => {
            println!("{summary}");
            write_json(c, &out)?;
        }
    }
    Ok(Outcome::Pass)
}

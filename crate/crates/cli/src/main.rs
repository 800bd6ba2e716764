use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Number, Value};

use nsf_core::circuit::{format_f64, parse, Circuit};
use nsf_core::compression::{compress, raw_shot_cost, shot_cost, CompressOptions};
use nsf_core::graphs::{fused_caterpillars, NoiseModel, OperationNoise};
use nsf_core::oracle::{self, MeasureAction};
use nsf_core::param::{Assignment, Weight};
use nsf_core::pipeline::{self, grid, run_expectation, run_sweep, RecordKind, RunOptions};
use nsf_core::sampler;
use nsf_core::{Error, PauliString};

#[derive(Parser)]
#[command(name = "nsf", version, about = "Noisy stabilizer circuits in the Pauli-channel standard form")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Circuit file, or `-` for stdin.
    circuit: PathBuf,
    /// Observables on the final register, comma separated.
    #[arg(long, value_delimiter = ',')]
    observables: Vec<String>,
    /// Parameter value, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Seed for unforced random measurement outcomes.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of post-selected deterministic measurements.
    #[arg(long, default_value_t = 16)]
    budget: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Exact expectation values, as JSON.
    Expect(Common),
    /// Expectation values over a parameter grid, as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid axis `name=start:stop:count` or `name=v1,v2,...`; repeatable, last varies fastest.
        #[arg(long = "grid", value_name = "AXIS", required = true)]
        axes: Vec<String>,
    },
    /// Compressed circuit on stdout (or `--output`) plus JSON statistics.
    Compress {
        circuit: PathBuf,
        /// Write the compressed circuit here; statistics then go to stdout instead of stderr.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Pauli-frame sampling of measurement records and terminal observables.
    Sample {
        circuit: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        observables: Vec<String>,
        /// Sample the compressed circuit.
        #[arg(long)]
        compressed: bool,
    },
    /// Witness values of fused noisy caterpillar states, as CSV.
    Witness {
        /// Number of fused caterpillars.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Backbone lengths, `a..b` (inclusive) or a single value.
        #[arg(long, default_value = "1..6")]
        n_range: String,
        #[arg(long, value_enum, default_value_t = Model::Initial)]
        noise_model: Model,
        /// Initial depolarizing probability.
        #[arg(long, default_value_t = 0.001)]
        p: f64,
        /// Single-qubit operation noise.
        #[arg(long, default_value_t = 0.0005)]
        p1: f64,
        /// Two-qubit operation noise.
        #[arg(long, default_value_t = 0.001)]
        p2: f64,
        /// Build symbolically and add the witness expression as a column.
        #[arg(long)]
        parametric: bool,
    },
    /// Engine against the dense oracle; exits with 4 when the discrepancy exceeds the tolerance.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    None,
    Initial,
    Operational,
}

const EXIT_PARSE: u8 = 2;
const EXIT_FRAGMENT: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Parse { .. } | Error::InvalidPauli(_)) => EXIT_PARSE,
        Some(
            Error::DeterministicMeasurement(_)
            | Error::RandomMeasurement(_)
            | Error::BudgetExceeded { .. }
            | Error::CapExceeded { .. }
            | Error::Unsupported(_)
            | Error::SymbolicWeights,
        ) => EXIT_FRAGMENT,
        _ => 1,
    }
}

fn number(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    serde_json::from_str::<Number>(&format_f64(v)).map(Value::Number).unwrap_or(Value::Null)
}

fn read_circuit(path: &Path) -> anyhow::Result<Circuit> {
    let mut text = String::new();
    if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text)?;
    } else {
        text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(parse(&text)?)
}

fn observables(list: &[String]) -> anyhow::Result<Vec<PauliString>> {
    list.iter().map(|s| s.trim().parse::<PauliString>().map_err(anyhow::Error::from)).collect()
}

fn assignment(params: &[String]) -> anyhow::Result<Option<Assignment>> {
    if params.is_empty() {
        return Ok(None);
    }
    let mut a = Assignment::new();
    for p in params {
        let (name, value) = p.split_once('=').ok_or_else(|| anyhow!("expected NAME=VALUE, got {p:?}"))?;
        a.insert(name.trim().to_string(), value.trim().parse().with_context(|| format!("value of {name}"))?);
    }
    Ok(Some(a))
}

fn options(c: &Common) -> RunOptions {
    RunOptions { seed: c.seed, deterministic_budget: c.budget, ..RunOptions::default() }
}

fn axis(spec: &str) -> anyhow::Result<(String, Vec<f64>)> {
    let (name, values) = spec.split_once('=').ok_or_else(|| anyhow!("expected NAME=VALUES, got {spec:?}"))?;
    let parts: Vec<&str> = values.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, count] => {
            let (a, b): (f64, f64) = (start.parse()?, stop.parse()?);
            let count: usize = count.parse()?;
            match count {
                0 => bail!("empty grid axis {name}"),
                1 => vec![a],
                _ => (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect(),
            }
        }
        [list] => list.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<_, _>>()?,
        _ => bail!("bad grid axis {spec:?}"),
    };
    Ok((name.trim().to_string(), values))
}

fn n_range(spec: &str) -> anyhow::Result<Vec<usize>> {
    let spec = spec.trim();
    let (a, b) = match spec.split_once("..") {
        Some((a, b)) => (a.parse::<usize>()?, b.trim_start_matches('=').parse::<usize>()?),
        None => {
            let v = spec.parse::<usize>()?;
            (v, v)
        }
    };
    if a == 0 || b < a {
        bail!("bad backbone range {spec:?}");
    }
    Ok((a..=b).collect())
}

fn expect(c: &Common) -> anyhow::Result<()> {
    let circuit = read_circuit(&c.circuit)?;
    let obs = observables(&c.observables)?;
    let a = assignment(&c.params)?;
    let report = run_expectation(&circuit, &obs, a.as_ref(), &options(c))?;
    let records: Vec<Value> = report
        .records
        .iter()
        .map(|r| {
            json!({
                "label": r.label,
                "outcome": r.outcome,
                "kind": match r.kind {
                    RecordKind::Random => "random",
                    RecordKind::Deterministic => "deterministic",
                    RecordKind::Unrecorded => "unrecorded",
                },
                "probability": r.probability.map_or(Value::Null, number),
            })
        })
        .collect();
    let values: Vec<Value> = report
        .values
        .iter()
        .map(|v| {
            let mut m = Map::new();
            m.insert("observable".into(), json!(v.observable.to_string()));
            m.insert("member".into(), v.member.map_or(Value::Null, |s| json!(s)));
            match &v.value {
                pipeline::Value::Num(x) => m.insert("value".into(), number(*x)),
                pipeline::Value::Expr(e) => m.insert("expression".into(), json!(e.to_string())),
            };
            Value::Object(m)
        })
        .collect();
    let out = json!({
        "mode": report.mode.to_string(),
        "qubits": report.qubits,
        "norm": number(report.norm),
        "records": records,
        "observables": values,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn sweep(c: &Common, axes: &[String]) -> anyhow::Result<()> {
    let circuit = read_circuit(&c.circuit)?;
    let obs = observables(&c.observables)?;
    let axes = axes.iter().map(|s| axis(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut points = grid(&axes);
    if let Some(fixed) = assignment(&c.params)? {
        for p in &mut points {
            for (k, v) in &fixed {
                p.entry(k.clone()).or_insert(*v);
            }
        }
    }
    let rows = run_sweep(&circuit, &obs, &points, &options(c))?;
    let mut header: Vec<String> = axes.iter().map(|(n, _)| n.clone()).collect();
    header.extend(obs.iter().map(|o| o.to_string()));
    println!("{}", header.join(","));
    for (p, row) in points.iter().zip(rows) {
        let mut cells: Vec<String> = axes.iter().map(|(n, _)| format_f64(p[n])).collect();
        cells.extend(row.into_iter().map(format_f64));
        println!("{}", cells.join(","));
    }
    Ok(())
}

fn compress_cmd(path: &Path, output: Option<&Path>) -> anyhow::Result<()> {
    let circuit = read_circuit(path)?;
    let cc = compress(&circuit, &CompressOptions::default())?;
    let text = cc.to_circuit()?.to_string();
    let compressed_ops = cc.channels().count() + cc.entries().count();
    let stats = json!({
        "original_ops": circuit.ops.len(),
        "compressed_ops": compressed_ops,
        "shot_cost_before": raw_shot_cost(&circuit),
        "shot_cost_after": shot_cost(&cc),
    });
    let stats = serde_json::to_string_pretty(&stats)?;
    match output {
        Some(out) => {
            std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("{stats}");
        }
        None => {
            print!("{text}");
            eprintln!("{stats}");
        }
    }
    Ok(())
}

fn sample_cmd(path: &Path, shots: usize, seed: u64, obs: &[String], compressed: bool) -> anyhow::Result<()> {
    let circuit = read_circuit(path)?;
    let obs = observables(obs)?;
    let (target, cost) = if compressed {
        let cc = compress(&circuit, &CompressOptions::default())?;
        (cc.to_circuit()?, shot_cost(&cc))
    } else {
        let cost = raw_shot_cost(&circuit);
        (circuit, cost)
    };
    let batch = sampler::sample(&target, shots, seed, &obs)?;
    let mut per = Map::new();
    for (o, e) in batch.observables.iter().zip(&batch.estimates) {
        per.insert(o.to_string(), json!({ "mean": number(e.mean), "se": number(e.se), "shots": e.shots }));
    }
    let out = json!({
        "per_observable": per,
        "seed": seed,
        "shot_cost": cost,
        "shots": shots,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn witness_cmd(k: usize, ns: &str, model: Model, p: f64, p1: f64, p2: f64, parametric: bool) -> anyhow::Result<()> {
    let ns = n_range(ns)?;
    let mut values = Assignment::new();
    let weight = |name: &str, v: f64, values: &mut Assignment| {
        if parametric {
            values.insert(name.to_string(), v);
            Weight::param(name)
        } else {
            Weight::Num(v)
        }
    };
    let noise = match model {
        Model::None => NoiseModel::Noiseless,
        Model::Initial => NoiseModel::Initial(weight("p", p, &mut values)),
        Model::Operational => NoiseModel::Operational(OperationNoise {
            p1: weight("p1", p1, &mut values),
            p2: weight("p2", p2, &mut values),
        }),
    };
    if parametric {
        println!("n,k,m,witness_value,expression");
    } else {
        println!("n,k,m,witness_value");
    }
    for n in ns {
        let gs = fused_caterpillars(k, n, &noise)?;
        if parametric {
            let w = gs.witness_parametric()?;
            let expr = w.value();
            println!("{n},{k},{},{},\"{expr}\"", w.m, format_f64(expr.eval(&values)?));
        } else {
            let w = gs.witness()?;
            println!("{n},{k},{},{}", w.m, format_f64(w.value));
        }
    }
    Ok(())
}

fn oracle_check(c: &Common, tolerance: f64) -> anyhow::Result<bool> {
    let mut circuit = read_circuit(&c.circuit)?;
    if let Some(a) = assignment(&c.params)? {
        circuit = circuit.instantiate(&a)?;
    }
    let obs = observables(&c.observables)?;
    let run = pipeline::simulate(&circuit, &options(c))?;
    let actions: Vec<MeasureAction> = run
        .records
        .iter()
        .map(|r| match r.kind {
            RecordKind::Unrecorded => MeasureAction::Dephase,
            _ => MeasureAction::Project(r.outcome),
        })
        .collect();
    let (dense, probs) = oracle::run_circuit(&circuit, &actions, None)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for o in &obs {
        let (e, d) = (run.state.expectation(o)?, dense.expectation(o));
        worst = worst.max((e - d).abs());
        rows.push(json!({ "observable": o.to_string(), "engine": number(e), "oracle": number(d) }));
    }
    for (r, pr) in run.records.iter().zip(&probs) {
        if let (Some(a), Some(b)) = (r.probability, pr) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= tolerance;
    let out = json!({
        "mode": run.state.mode().to_string(),
        "max_abs_diff": number(worst),
        "tolerance": number(tolerance),
        "pass": pass,
        "observables": rows,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(pass)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Expect(c) => expect(&c)?,
        Command::Sweep { common, axes } => sweep(&common, &axes)?,
        Command::Compress { circuit, output } => compress_cmd(&circuit, output.as_deref())?,
        Command::Sample { circuit, shots, seed, observables, compressed } => {
            sample_cmd(&circuit, shots, seed, &observables, compressed)?
        }
        Command::Witness { k, n_range, noise_model, p, p1, p2, parametric } => {
            witness_cmd(k, &n_range, noise_model, p, p1, p2, parametric)?
        }
        Command::OracleCheck { common, tolerance } => {
            if !oracle_check(&common, tolerance)? {
                return Ok(ExitCode::from(EXIT_TOLERANCE));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    if let Some(threads) = std::env::var("NSF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if threads > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

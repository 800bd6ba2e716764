//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nsf_core::circuit::{Circuit, Op};
use nsf_core::compression::{self, CompressOptions};
use nsf_core::graphs::{self, NoiseModel, OperationNoise};
use nsf_core::oracle::{self, MeasureAction};
use nsf_core::param::Weight;
use nsf_core::pipeline::{self, RunOptions, SimState};
use nsf_core::sampler;
use nsf_core::Error;

const ORACLE_TOL: f64 = 1e-12;
const GENERAL_TOL: f64 = 1e-10;
const TV_TOL: f64 = 1e-12;
const SE_LIMIT: f64 = 5.0;
const SAMPLE_SHOTS: usize = 100_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Check = fn() -> Result<Verdict, String>;

fn fragments_match_oracle() -> Result<Verdict, String> {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..500 {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
        let obs = observables(&mut r, reference(&run), 10, 10);
        match oracle_gap(&c, &obs)? {
            Some((_, gap)) => {
                worst = worst.max(gap);
                compared += 1;
            }
            None => skipped += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        worst <= ORACLE_TOL && secs <= 120.0 && compared == 500,
        format!(
            "standard form vs dense oracle: max |diff| {worst:.1e} (tol {ORACLE_TOL:.0e}) over {compared} circuits x 20 observables, {skipped} skipped, {secs:.1} s (limit 120 s)"
        ),
    ))
}

fn symbolic_is_bit_exact() -> Result<Verdict, String> {
    let mut r = rng(2);
    let (mut checked, mut mismatches) = (0, 0);
    for _ in 0..50 {
        let c = symbolic_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
        let SimState::Standard(s) = &run.state else { return Err("symbolic run left the standard form".into()) };
        let obs = observables(&mut r, &s.tableau, 6, 4);
        for _ in 0..5 {
            let a = random_assignment(&mut r);
            let numeric = pipeline::simulate(&c.instantiate(&a).unwrap(), &RunOptions::default()).unwrap();
            for o in &obs {
                let sym = s.expectation_parametric(o).unwrap().eval(&a).unwrap();
                let num = numeric.state.expectation(o).unwrap();
                checked += 1;
                if sym.to_bits() != num.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(verdict(
        mismatches == 0,
        format!("symbolic evaluation vs numeric run: {mismatches} bitwise mismatches in {checked} values (50 circuits x 5 assignments)"),
    ))
}

fn branching_matches_oracle() -> Result<Verdict, String> {
    let mut r = rng(3);
    let (mut worst, mut compared, mut skipped, mut over) = (0.0f64, 0, 0, 0);
    while compared < 300 {
        let c = branching_circuit(&mut r);
        let run = match pipeline::simulate(&c, &RunOptions::default()) {
            Ok(run) => run,
            Err(Error::ZeroProbability(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(format!("{e}\n{c}")),
        };
        let obs = observables(&mut r, reference(&run), 10, 10);
        let Some((run, gap)) = oracle_gap(&c, &obs)? else {
            skipped += 1;
            continue;
        };
        worst = worst.max(gap);
        let m = run.records.iter().filter(|rec| rec.kind == pipeline::RecordKind::Deterministic).count();
        if let SimState::Branched(b) = &run.state {
            if b.term_count() > 1 << m {
                over += 1;
            }
        }
        compared += 1;
    }
    Ok(verdict(
        worst <= ORACLE_TOL && over == 0,
        format!(
            "post-selected deterministic measurements: max |diff| {worst:.1e} (tol {ORACLE_TOL:.0e}) over {compared} circuits, {skipped} impossible conditions skipped, {over} runs above 2^m terms"
        ),
    ))
}

/// Dense probability of outcome `s` at the last measurement, given the earlier forced outcomes.
fn dense_last(c: &Circuit, s: i8) -> Result<Option<(f64, oracle::DenseState)>, String> {
    let forced: Vec<MeasureAction> = c
        .measurements()
        .map(|m| MeasureAction::Project(m.forced.expect("all outcomes forced")))
        .collect();
    let mut actions = forced;
    *actions.last_mut().unwrap() = MeasureAction::Project(s);
    match oracle::run_circuit(c, &actions, None) {
        Ok((d, probs)) => Ok(Some((probs.last().copied().flatten().unwrap(), d))),
        Err(Error::ZeroProbability(_)) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

fn with_last(c: &Circuit, s: i8) -> Circuit {
    let mut c = c.clone();
    if let Some(Op::Measure(m)) = c.ops.iter_mut().rev().find(|op| matches!(op, Op::Measure(_))) {
        m.forced = Some(s);
    }
    c
}

fn general_matches_oracle() -> Result<Verdict, String> {
    let mut r = rng(4);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    while compared < 200 {
        let c = general_circuit(&mut r);
        let mut head = c.clone();
        head.ops.pop();
        let head_actions: Vec<MeasureAction> = head.measurements().map(|m| MeasureAction::Project(m.forced.unwrap())).collect();
        if matches!(oracle::run_circuit(&head, &head_actions, None), Err(Error::ZeroProbability(_))) {
            skipped += 1;
            continue;
        }
        let mut total = 0.0;
        for s in [1i8, -1] {
            let variant = with_last(&c, s);
            let engine = match pipeline::simulate(&variant, &RunOptions::default()) {
                Ok(run) => Some(run),
                Err(Error::ZeroProbability(_)) => None,
                Err(e) => return Err(format!("{e}\n{variant}")),
            };
            let dense = dense_last(&c, s)?;
            let pe = engine.as_ref().and_then(|run| run.records.last().unwrap().probability).unwrap_or(0.0);
            let pd = dense.as_ref().map_or(0.0, |(p, _)| *p);
            worst = worst.max((pe - pd).abs());
            total += pe;
            if let (Some(run), Some((_, d))) = (&engine, &dense) {
                if run.state.mode() != pipeline::Mode::General {
                    return Err(format!("non-Clifford circuit ran in {} mode", run.state.mode()));
                }
                for o in observables(&mut r, reference(run), 4, 6) {
                    worst = worst.max((run.state.expectation(&o).unwrap() - d.expectation(&o)).abs());
                }
            }
        }
        worst = worst.max((total - 1.0).abs());
        compared += 1;
    }
    Ok(verdict(
        worst <= GENERAL_TOL,
        format!(
            "non-Clifford circuits, both outcomes of the final measurement: max |diff| {worst:.1e} (tol {GENERAL_TOL:.0e}) over {compared} circuits, {skipped} skipped"
        ),
    ))
}

fn compression_preserves_distribution() -> Result<Verdict, String> {
    let mut r = rng(5);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    while compared < 250 {
        let c = compression_circuit(&mut r);
        let Some(cc) = props::try_compress(&c)? else {
            skipped += 1;
            continue;
        };
        match props::compression_tv(&c, &cc) {
            Ok(tv) => worst = worst.max(tv),
            Err(Error::ZeroProbability(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        }
        compared += 1;
    }
    let absorb = props::absorption_matches_brute_force(55, 1000);
    Ok(verdict(
        worst <= TV_TOL && absorb.is_ok(),
        format!(
            "compression: max TV {worst:.1e} (tol {TV_TOL:.0e}) over {compared} circuits, {skipped} skipped; insertion verdict vs brute force over 1000 cases: {}",
            absorb.err().unwrap_or_else(|| "agree".into())
        ),
    ))
}

fn best_of(runs: usize, mut f: impl FnMut() -> Result<(), String>) -> Result<Duration, String> {
    let mut best = Duration::MAX;
    for _ in 0..runs {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed());
    }
    Ok(best)
}

fn sample_all(c: &Circuit) -> Result<(), String> {
    sampler::sample(c, SAMPLE_SHOTS, 9, &[]).map(|_| ()).map_err(|e| e.to_string())
}

fn compression_pays_off() -> Result<Verdict, String> {
    let model = NoiseModel::Operational(OperationNoise { p1: Weight::Num(5e-4), p2: Weight::Num(1e-3) });
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 1..=4 {
        let c = graphs::caterpillar_fusion_circuit(2, n, &model).map_err(|e| e.to_string())?;
        let cc = compression::compress(&c, &CompressOptions::default()).map_err(|e| e.to_string())?;
        let compressed = cc.to_circuit().map_err(|e| e.to_string())?;
        let (raw, cost) = (compression::raw_shot_cost(&c), compression::shot_cost(&cc));
        let t_raw = best_of(3, || sample_all(&c))?;
        let t_cmp = best_of(3, || sample_all(&compressed))?;
        let speedup = t_raw.as_secs_f64() / t_cmp.as_secs_f64();
        pass &= cost < raw && speedup > 1.0;
        parts.push(format!("n={n}: cost {raw}->{cost}, {:.0}->{:.0} kshots/s", 1e-3 * SAMPLE_SHOTS as f64 / t_raw.as_secs_f64(), 1e-3 * SAMPLE_SHOTS as f64 / t_cmp.as_secs_f64()));
    }
    Ok(verdict(pass, format!("compressed fusion circuits, k=2, {SAMPLE_SHOTS} shots: {}", parts.join("; "))))
}

fn sampling_is_unbiased() -> Result<Verdict, String> {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    let mut se_formula = true;
    for k in 0..40 {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).unwrap();
        let obs = observables(&mut r, reference(&run), 6, 4);
        worst = worst.max(props::sampler_deviation(&c, &obs, SAMPLE_SHOTS, 100 + k)?);
        let batch = sampler::sample(&c, 1000, k, &obs).map_err(|e| e.to_string())?;
        for e in &batch.estimates {
            se_formula &= e.se == ((1.0 - e.mean * e.mean) / 1000.0).sqrt();
        }
    }
    let hoeffding = sampler::shots_for_accuracy(0.1, 0.05).map_err(|e| e.to_string())?;
    Ok(verdict(
        worst <= SE_LIMIT && se_formula && hoeffding == 185,
        format!(
            "frame sampling, 40 circuits x 10 observables at {SAMPLE_SHOTS} shots: max deviation {worst:.2} SE (limit {SE_LIMIT}); SE formula {}; shots for (0.1, 0.05) = {hoeffding} (want 185)",
            if se_formula { "holds" } else { "violated" }
        ),
    ))
}

fn caterpillar_witness() -> Result<Verdict, String> {
    let models = [
        ("initial", NoiseModel::Initial(Weight::Num(1e-3))),
        ("operational", NoiseModel::Operational(OperationNoise { p1: Weight::Num(5e-4), p2: Weight::Num(1e-3) })),
    ];
    let mut worst = 0.0f64;
    for (_, model) in &models {
        let gs = graphs::fused_caterpillars(2, 1, model).map_err(|e| e.to_string())?;
        let actions: Vec<MeasureAction> = gs.transcript().measurements().map(|m| MeasureAction::Project(m.forced.unwrap())).collect();
        let (dense, _) = oracle::run_circuit(gs.transcript(), &actions, None).map_err(|e| e.to_string())?;
        let g = gs.graph();
        let m = g.num_vertices() as f64;
        let want = m - 1.0 - (0..g.num_vertices()).map(|v| dense.expectation(&g.generator(v))).sum::<f64>();
        worst = worst.max((gs.witness().unwrap().value - want).abs());
    }
    let mut monotone = true;
    let mut noiseless = 0.0f64;
    let mut series = Vec::new();
    for k in [2, 4, 8] {
        for (name, model) in &models {
            let v = props::witness_series(k, 6, model).map_err(|e| e.to_string())?;
            monotone &= v.windows(2).all(|w| w[1] > w[0]);
            if k == 2 && *name == "initial" {
                series = v;
            }
        }
        for w in props::witness_series(k, 6, &NoiseModel::Noiseless).map_err(|e| e.to_string())? {
            noiseless = noiseless.max((w + 1.0).abs());
        }
    }
    let shown: Vec<String> = series.iter().map(|v| format!("{v:.5}")).collect();
    Ok(verdict(
        worst <= ORACLE_TOL && monotone && noiseless <= ORACLE_TOL,
        format!(
            "fused caterpillar witness: k=2 n=1 vs dense replay {worst:.1e} (tol {ORACLE_TOL:.0e}); increasing in n=1..6 for k=2,4,8: {monotone}; noiseless |W+1| {noiseless:.1e}; k=2 initial p=1e-3: [{}]",
            shown.join(", ")
        ),
    ))
}

fn all_properties() -> Result<Verdict, String> {
    let start = Instant::now();
    let mut failed = Vec::new();
    for (name, check, cases) in props::ALL {
        if let Err(msg) = check(0xacce, *cases) {
            failed.push(format!("{name}: {}", msg.lines().next().unwrap_or("")));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        failed.is_empty() && secs <= 600.0,
        format!(
            "{} properties, {} failed, {secs:.1} s (limit 600 s){}",
            props::ALL.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join("; ")) }
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("1", fragments_match_oracle),
        ("2", symbolic_is_bit_exact),
        ("3", branching_matches_oracle),
        ("4", general_matches_oracle),
        ("5", compression_preserves_distribution),
        ("6", compression_pays_off),
        ("7", sampling_is_unbiased),
        ("8", caterpillar_witness),
        ("9", all_properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (id, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let t = Instant::now();
        let (status, detail) = match check() {
            Ok(v) => (if v.pass { "PASS" } else { "FAIL" }, v.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("{status} [{id}] {detail} ({:.1} s)", t.elapsed().as_secs_f64());
    }
    if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

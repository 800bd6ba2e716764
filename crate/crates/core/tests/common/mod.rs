//! Seeded circuit generators and property checks shared by the property and acceptance suites.
#![allow(dead_code)]

pub mod props;

use nsf_core::circuit::{ChannelSpec, Circuit, GeneralSpec, Op};
use nsf_core::oracle::{self, DenseState, MeasureAction};
use nsf_core::param::{Assignment, Weight};
use nsf_core::pipeline::{self, RecordKind, Run, RunOptions, SimState};
use nsf_core::{Error, Gate, MeasurementKind, PauliString, StabilizerTableau};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sign(rng: &mut Rng8) -> i8 {
    if rng.random_bool(0.5) { 1 } else { -1 }
}

pub fn random_pauli(rng: &mut Rng8, n: usize) -> PauliString {
    let mut p = PauliString::identity(n);
    for q in 0..n {
        p.set_letter(q, ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).unwrap();
    }
    p.with_sign(sign(rng))
}

pub fn random_nonidentity(rng: &mut Rng8, n: usize) -> PauliString {
    loop {
        let p = random_pauli(rng, n);
        if !p.is_identity() {
            return p;
        }
    }
}

pub fn random_gate(rng: &mut Rng8, n: usize) -> Gate {
    let q = rng.random_range(0..n);
    let other = |rng: &mut Rng8| (q + 1 + rng.random_range(0..n - 1)) % n;
    match rng.random_range(0..if n > 1 { 8 } else { 6 }) {
        0 => Gate::H(q),
        1 => Gate::S(q),
        2 => Gate::Sdg(q),
        3 => Gate::X(q),
        4 => Gate::Y(q),
        5 => Gate::Z(q),
        6 => Gate::Cnot(q, other(rng)),
        _ => Gate::Cz(q, other(rng)),
    }
}

/// Every gate acting on `n` qubits.
pub fn all_gates(n: usize) -> Vec<Gate> {
    let mut out = Vec::new();
    for q in 0..n {
        out.extend([Gate::H(q), Gate::S(q), Gate::Sdg(q), Gate::X(q), Gate::Y(q), Gate::Z(q)]);
        for r in (0..n).filter(|&r| r != q) {
            out.extend([Gate::Cnot(q, r), Gate::Cz(q, r)]);
        }
    }
    out
}

pub fn random_tableau(rng: &mut Rng8, n: usize) -> StabilizerTableau {
    let mut t = StabilizerTableau::new_computational(n).unwrap();
    for _ in 0..6 * n + 4 {
        t.apply(&random_gate(rng, n)).unwrap();
    }
    t
}

fn distinct_qubits(rng: &mut Rng8, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

fn weight(rng: &mut Rng8, params: &[&str]) -> Weight {
    if params.is_empty() {
        Weight::Num(rng.random_range(0.0..0.3))
    } else {
        Weight::param(params[rng.random_range(0..params.len())])
    }
}

/// Depolarizing, correlated or literal channel on at most three qubits. Literal channels carry
/// up to 16 distinct terms with normalized weights and are only drawn for numeric circuits.
pub fn random_channel_spec(rng: &mut Rng8, n: usize, params: &[&str]) -> ChannelSpec {
    let kinds = if params.is_empty() { 4 } else { 3 };
    match rng.random_range(0..kinds) {
        0 => ChannelSpec::Depol1 { q: rng.random_range(0..n), p: weight(rng, params) },
        1 if n > 1 => {
            let qs = distinct_qubits(rng, n, 2);
            ChannelSpec::Depol2 { a: qs[0], b: qs[1], p: weight(rng, params) }
        }
        1 | 2 => {
            let k = rng.random_range(1..=n.min(3));
            let qubits = distinct_qubits(rng, n, k);
            let op = random_nonidentity(rng, qubits.len()).unsigned();
            ChannelSpec::Corr { qubits, op, p: weight(rng, params) }
        }
        _ => {
            let k = rng.random_range(1..=n.min(3));
            let qubits = distinct_qubits(rng, n, k);
            let k = qubits.len();
            let mut ops: Vec<PauliString> = Vec::new();
            for _ in 0..rng.random_range(1..=16) {
                let op = random_pauli(rng, k).unsigned();
                if !ops.contains(&op) {
                    ops.push(op);
                }
            }
            let raw: Vec<f64> = ops.iter().map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let terms = raw.iter().zip(ops).map(|(w, op)| (Weight::Num(w / total), op)).collect();
            ChannelSpec::Literal { qubits, terms }
        }
    }
}

/// Random Pauli that the tableau classifies as random, if one turns up.
fn random_outcome_observable(rng: &mut Rng8, t: &StabilizerTableau) -> Option<PauliString> {
    (0..50).map(|_| random_nonidentity(rng, t.num_qubits())).find(|p| t.is_member(p).is_none())
}

/// Nontrivial stabilizer of `t` with its sign.
fn random_member(rng: &mut Rng8, t: &StabilizerTableau) -> PauliString {
    loop {
        let mut p = PauliString::identity(t.num_qubits());
        for g in t.stabilizers() {
            if rng.random_bool(0.5) {
                p = p.multiply(&g).unwrap();
            }
        }
        if !p.is_identity() {
            return p;
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Gate,
    Channel,
    Random,
    Deterministic,
}

fn build(rng: &mut Rng8, n: usize, params: &[&str], mut slots: Vec<Slot>) -> Circuit {
    slots.shuffle(rng);
    let mut c = Circuit::new(n).with_params(params);
    let mut t = StabilizerTableau::new_computational(n).unwrap();
    for s in slots {
        match s {
            Slot::Gate => {
                let g = random_gate(rng, n);
                t.apply(&g).unwrap();
                c.gate(g);
            }
            Slot::Channel => {
                c.channel(random_channel_spec(rng, n, params));
            }
            Slot::Random => {
                if let Some(p) = random_outcome_observable(rng, &t) {
                    let o = sign(rng);
                    t.measure_forced(&p, o).unwrap();
                    c.measure(&p, Some(o)).unwrap();
                }
            }
            Slot::Deterministic => {
                let p = random_member(rng, &t);
                let noiseless = t.is_member(&p).unwrap();
                let o = if rng.random_bool(0.6) { noiseless } else { -noiseless };
                c.measure(&p, Some(o)).unwrap();
            }
        }
    }
    c
}

fn slots(rng: &mut Rng8, gates: usize, channels: usize, random: usize, det: usize) -> Vec<Slot> {
    let mut v = Vec::new();
    v.extend(std::iter::repeat_n(Slot::Gate, rng.random_range(gates / 3..=gates)));
    v.extend(std::iter::repeat_n(Slot::Channel, rng.random_range(1..=channels)));
    v.extend(std::iter::repeat_n(Slot::Random, rng.random_range(0..=random)));
    v.extend(std::iter::repeat_n(Slot::Deterministic, det));
    v
}

/// At most 25 Cliffords, 4 channels and 3 forced random measurements on up to 6 qubits.
pub fn fragment_circuit(rng: &mut Rng8) -> Circuit {
    let n = rng.random_range(1..=6);
    let s = slots(rng, 25, 4, 3, 0);
    build(rng, n, &[], s)
}

pub const SYMBOLS: [&str; 3] = ["p", "q", "r"];

/// Fragment with symbolic channel weights.
pub fn symbolic_circuit(rng: &mut Rng8) -> Circuit {
    let n = rng.random_range(1..=6);
    let s = slots(rng, 25, 4, 3, 0);
    build(rng, n, &SYMBOLS, s)
}

pub fn random_assignment(rng: &mut Rng8) -> Assignment {
    SYMBOLS.iter().map(|s| (s.to_string(), rng.random_range(0.0..0.3))).collect()
}

/// Fragment with up to three post-selected deterministic measurements on up to 5 qubits.
pub fn branching_circuit(rng: &mut Rng8) -> Circuit {
    let n = rng.random_range(1..=5);
    let det = rng.random_range(1..=3);
    let s = slots(rng, 20, 4, 2, det);
    build(rng, n, &[], s)
}

/// Fragment on up to 4 qubits with one or two non-Clifford rotations, ending in a forced measurement.
pub fn general_circuit(rng: &mut Rng8) -> Circuit {
    let n = rng.random_range(1..=4);
    let mut s = slots(rng, 16, 3, 2, 0);
    s.shuffle(rng);
    let mut c = build(rng, n, &[], s);
    for _ in 0..rng.random_range(1..=2) {
        let q = rng.random_range(0..n);
        let spec = match rng.random_range(0..3) {
            0 => GeneralSpec::Rz { q, theta: rng.random_range(-3.0..3.0) },
            1 => GeneralSpec::T(q),
            _ => GeneralSpec::Tdg(q),
        };
        let at = rng.random_range(0..=c.ops.len());
        c.ops.insert(at, Op::General(spec));
    }
    for _ in 0..rng.random_range(0..4) {
        c.gate(random_gate(rng, n));
    }
    let p = random_nonidentity(rng, n);
    c.measure(&p, Some(sign(rng))).unwrap();
    c
}

/// `members` stabilizers of the final reference state plus `others` random Paulis.
pub fn observables(rng: &mut Rng8, t: &StabilizerTableau, members: usize, others: usize) -> Vec<PauliString> {
    let mut out: Vec<PauliString> = (0..members).map(|_| random_member(rng, t)).collect();
    out.extend((0..others).map(|_| random_pauli(rng, t.num_qubits())));
    out
}

pub fn reference(run: &Run) -> &StabilizerTableau {
    match &run.state {
        SimState::Standard(s) => &s.tableau,
        SimState::Branched(s) => &s.tableau,
        SimState::General(s) => &s.tableau,
    }
}

pub fn actions(run: &Run) -> Vec<MeasureAction> {
    run.records
        .iter()
        .map(|r| match r.kind {
            RecordKind::Unrecorded => MeasureAction::Dephase,
            _ => MeasureAction::Project(r.outcome),
        })
        .collect()
}

/// Dense replay of the engine's run with the same outcomes.
pub fn replay(circuit: &Circuit, run: &Run) -> nsf_core::Result<(DenseState, Vec<Option<f64>>)> {
    oracle::run_circuit(circuit, &actions(run), None)
}

/// Worst disagreement between engine and dense replay over `obs` and the record probabilities.
/// `Ok(None)` when a conditioned branch has zero probability.
pub fn oracle_gap(circuit: &Circuit, obs: &[PauliString]) -> Result<Option<(Run, f64)>, String> {
    let run = match pipeline::simulate(circuit, &RunOptions::default()) {
        Ok(r) => r,
        Err(Error::ZeroProbability(_)) => return Ok(None),
        Err(e) => return Err(format!("engine: {e}\n{circuit}")),
    };
    let (dense, probs) = match replay(circuit, &run) {
        Ok(x) => x,
        Err(Error::ZeroProbability(_)) => return Ok(None),
        Err(e) => return Err(format!("oracle: {e}\n{circuit}")),
    };
    let mut worst = 0.0f64;
    for o in obs {
        let e = run.state.expectation(o).map_err(|e| e.to_string())?;
        worst = worst.max((e - dense.expectation(o)).abs());
    }
    for (r, p) in run.records.iter().zip(&probs) {
        if let (Some(a), Some(b)) = (r.probability, p) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Some((run, worst)))
}

/// Classification of `p` against `t` as the sign it would read, or `None` when random.
pub fn deterministic_sign(t: &StabilizerTableau, p: &PauliString) -> Option<i8> {
    match t.classify(p).unwrap() {
        MeasurementKind::Deterministic(s) => Some(s),
        MeasurementKind::Random(_) => None,
    }
}

/// Sum over outcome vectors of `|a - b| / 2`.
pub fn total_variation(a: &[(Vec<i8>, f64)], b: &[(Vec<i8>, f64)]) -> f64 {
    use std::collections::BTreeMap;
    let mut diff: BTreeMap<&Vec<i8>, f64> = BTreeMap::new();
    for (k, p) in a {
        *diff.entry(k).or_default() += p;
    }
    for (k, p) in b {
        *diff.entry(k).or_default() -= p;
    }
    diff.values().map(|d| d.abs()).sum::<f64>() / 2.0
}

/// Circuits made of Cliffords, Pauli channels and measurements with a mix of forced and free outcomes.
pub fn compression_circuit(rng: &mut Rng8) -> Circuit {
    let n = rng.random_range(1..=5);
    let mut c = Circuit::new(n);
    for _ in 0..rng.random_range(4..=16) {
        match rng.random_range(0..10) {
            0..=3 => {
                c.gate(random_gate(rng, n));
            }
            4..=5 => {
                c.channel(random_channel_spec(rng, n, &[]));
            }
            _ => {
                let forced = if rng.random_bool(0.25) { Some(sign(rng)) } else { None };
                c.measure(&random_nonidentity(rng, n), forced).unwrap();
            }
        }
    }
    c
}

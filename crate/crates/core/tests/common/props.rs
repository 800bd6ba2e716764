//! Property checks. Each takes a seed and a case count and reports the first violation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use nsf_core::bits;
use nsf_core::circuit::{self, Circuit, Op};
use nsf_core::compression::{self, Block, CompressOptions, Disposition, Entry, EntryKind};
use nsf_core::graphs::{self, Graph, GraphState, NoiseModel, OperationNoise};
use nsf_core::noise::NoiseChannel;
use nsf_core::oracle::{self, DenseState};
use nsf_core::param::Weight;
use nsf_core::pipeline::{self, RunOptions, SimState};
use nsf_core::sampler::{self, Frame};
use nsf_core::{Error, PauliString, StabilizerTableau};
use rand::Rng;

use super::*;

pub type Outcome = Result<(), String>;
pub type Property = fn(u64, usize) -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    }};
}

/// Name, check and default number of cases.
pub const ALL: &[(&str, Property, usize)] = &[
    ("pauli_commutator_symmetric", pauli_commutator_symmetric, 10_000),
    ("pauli_commutator_bilinear", pauli_commutator_bilinear, 10_000),
    ("pauli_square_is_identity", pauli_square_is_identity, 10_000),
    ("pauli_product_matches_dense", pauli_product_matches_dense, 2_000),
    ("tableau_invariants", tableau_invariants, 500),
    ("tableau_matches_dense", tableau_matches_dense, 200),
    ("forced_measurement_joins_group", forced_measurement_joins_group, 2_000),
    ("decompose_recomposes", decompose_recomposes, 2_000),
    ("conjugation_preserves_terms", conjugation_preserves_terms, 2_000),
    ("absorption_commutes_with_observable", absorption_commutes_with_observable, 2_000),
    ("reduce_and_merge_preserve_state", reduce_and_merge_preserve_state, 300),
    ("heisenberg_factor_bounds", heisenberg_factor_bounds, 2_000),
    ("expectation_in_range", expectation_in_range, 300),
    ("engine_matches_oracle", engine_matches_oracle, 150),
    ("parametric_is_exact", parametric_is_exact, 100),
    ("branch_probabilities_sum_to_one", branch_probabilities_sum_to_one, 150),
    ("general_norm_matches_oracle", general_norm_matches_oracle, 100),
    ("channel_order_is_irrelevant", channel_order_is_irrelevant, 200),
    ("compression_preserves_distribution", compression_preserves_distribution, 150),
    ("absorption_matches_brute_force", absorption_matches_brute_force, 500),
    ("compression_is_idempotent", compression_is_idempotent, 300),
    ("compression_alternates_on_prefixes", compression_alternates_on_prefixes, 150),
    ("frame_matches_conjugation", frame_matches_conjugation, 1),
    ("sampler_within_five_se", sampler_within_five_se, 20),
    ("sampler_reproducible", sampler_reproducible, 20),
    ("local_complement_matches_direct", local_complement_matches_direct, 200),
    ("reduced_density_matrices", reduced_density_matrices, 150),
    ("noiseless_witness_is_minus_one", noiseless_witness_is_minus_one, 60),
    ("witness_monotone_in_length", witness_monotone_in_length, 1),
    ("circuit_text_roundtrip", circuit_text_roundtrip, 300),
    ("unknown_directive_is_rejected", unknown_directive_is_rejected, 1),
    ("dense_state_invariants", dense_state_invariants, 200),
    ("dense_measurement_matches_tableau", dense_measurement_matches_tableau, 500),
];

fn small_n(rng: &mut Rng8, max: usize) -> usize {
    rng.random_range(1..=max)
}

pub fn pauli_commutator_symmetric(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 130);
        let (a, b) = (random_pauli(&mut r, n), random_pauli(&mut r, n));
        ensure!(a.commutator_bit(&b).unwrap() == b.commutator_bit(&a).unwrap(), "asymmetric: {a} {b}");
    }
    Ok(())
}

pub fn pauli_commutator_bilinear(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 130);
        let (a, b, c) = (random_pauli(&mut r, n), random_pauli(&mut r, n), random_pauli(&mut r, n));
        let mut ab = a.clone();
        ab.mul_bits_assign(&b);
        let lhs = ab.commutator_bit(&c).unwrap();
        let rhs = a.commutator_bit(&c).unwrap() ^ b.commutator_bit(&c).unwrap();
        ensure!(lhs == rhs, "not bilinear: {a} {b} {c}");
    }
    Ok(())
}

pub fn pauli_square_is_identity(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 130);
        let a = random_pauli(&mut r, n);
        let sq = a.multiply(&a).map_err(|e| e.to_string())?;
        ensure!(sq.is_identity() && !sq.is_negative(), "{a}^2 = {sq}");
        ensure!(a.commutator_bit(&a).unwrap() == 0, "{a} anticommutes with itself");
    }
    Ok(())
}

fn max_diff(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn pauli_product_matches_dense(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    let i_pow = [C::new(1.0, 0.0), C::new(0.0, 1.0), C::new(-1.0, 0.0), C::new(0.0, -1.0)];
    for _ in 0..cases {
        let n = small_n(&mut r, 4);
        let (a, b) = (random_pauli(&mut r, n), random_pauli(&mut r, n));
        let (ma, mb) = (oracle::pauli_matrix(&a), oracle::pauli_matrix(&b));
        let (c, k) = a.mul_phase(&b).unwrap();
        let prod = &ma * &mb;
        ensure!(max_diff(&prod, &(oracle::pauli_matrix(&c) * i_pow[k as usize])) < 1e-12, "product {a} {b}");
        let comm = &prod - &mb * &ma;
        let dense_anti = comm.iter().any(|z| z.norm() > 1e-9);
        ensure!(dense_anti == a.anticommutes(&b), "commutation {a} {b}");
    }
    Ok(())
}

pub fn tableau_invariants(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 70);
        let mut t = StabilizerTableau::new_computational(n).unwrap();
        for _ in 0..40 {
            if r.random_bool(0.8) {
                t.apply(&random_gate(&mut r, n)).unwrap();
            } else {
                let p = random_nonidentity(&mut r, n);
                match t.measure_forced(&p, sign(&mut r)) {
                    Ok(_) | Err(Error::OutcomeContradiction { .. }) => {}
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
        t.check_invariants().map_err(|e| format!("{e}\n{t}"))?;
    }
    Ok(())
}

pub fn tableau_matches_dense(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 5);
        let t = random_tableau(&mut r, n);
        let d = DenseState::from_tableau(&t).unwrap();
        for _ in 0..20 {
            let p = random_pauli(&mut r, n);
            let want = t.is_member(&p).map_or(0.0, f64::from);
            ensure!((d.expectation(&p) - want).abs() < 1e-12, "<{p}> on\n{t}");
        }
    }
    Ok(())
}

pub fn forced_measurement_joins_group(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 40);
        let mut t = random_tableau(&mut r, n);
        let p = random_nonidentity(&mut r, n);
        let s = sign(&mut r);
        let (got, random) = match t.measure_forced(&p, s) {
            Ok(x) => x,
            Err(Error::OutcomeContradiction { actual, .. }) => {
                ensure!(actual == -s && t.is_member(&p) == Some(actual), "contradiction on {p} without membership");
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        if random {
            ensure!(got == s, "forced {s} read {got}");
        }
        ensure!(t.is_member(&p) == Some(got), "{p} not in the group with sign {got}");
        t.check_invariants().map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub fn decompose_recomposes(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 40);
        let t = random_tableau(&mut r, n);
        let p = random_pauli(&mut r, n);
        let (alpha, beta) = t.decompose(&p);
        let mut acc = PauliString::identity(n);
        for i in bits::ones(&alpha) {
            acc.mul_bits_assign(&t.destabilizer(i));
        }
        for i in bits::ones(&beta) {
            acc.mul_bits_assign(&t.stabilizer(i));
        }
        ensure!(acc.same_bits(&p), "recomposed {acc} from {p}");
        for i in 0..n {
            ensure!(bits::get(&alpha, i) == p.anticommutes(&t.stabilizer(i)), "alpha bit {i} of {p}");
        }
    }
    Ok(())
}

fn random_channel(r: &mut Rng8, n: usize) -> NoiseChannel {
    random_channel_spec(r, n, &[]).build(n, &circuit::QubitMap::new(n)).unwrap()
}

pub fn conjugation_preserves_terms(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 6);
        let ch = random_channel(&mut r, n);
        let g = random_gate(&mut r, n);
        let mut out = ch.clone();
        out.conjugate(&g);
        ensure!(out.len() == ch.len(), "term count changed");
        for (a, b) in ch.terms().iter().zip(out.terms()) {
            ensure!(a.weight == b.weight, "weight changed under {g:?}");
            ensure!(a.op.clone().conjugated(&g).same_bits(&b.op), "{} -> {} under {g:?}", a.op, b.op);
        }
    }
    Ok(())
}

pub fn absorption_commutes_with_observable(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 6);
        let mut ch = random_channel(&mut r, n);
        let obs = random_nonidentity(&mut r, n);
        let inserted = random_nonidentity(&mut r, n);
        let before = ch.clone();
        match ch.absorb_random_measurement(&obs, &inserted) {
            Err(Error::InsertionCommutes) => ensure!(!inserted.anticommutes(&obs), "rejected a valid insertion"),
            Err(e) => return Err(e.to_string()),
            Ok(touched) => {
                ensure!(ch.terms().iter().all(|t| !t.op.anticommutes(&obs)), "term still anticommutes with {obs}");
                for (j, (a, b)) in before.terms().iter().zip(ch.terms()).enumerate() {
                    ensure!(a.weight == b.weight, "weight changed");
                    ensure!(touched.contains(&j) == !a.op.same_bits(&b.op), "touched set wrong at {j}");
                }
            }
        }
    }
    Ok(())
}

fn apply_to(t: &StabilizerTableau, chs: &[&NoiseChannel]) -> DenseState {
    let mut d = DenseState::from_tableau(t).unwrap();
    for ch in chs {
        d.apply_channel(ch).unwrap();
    }
    d
}

pub fn reduce_and_merge_preserve_state(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 4);
        let t = random_tableau(&mut r, n);
        let a = random_channel(&mut r, n);
        let b = random_channel(&mut r, n);
        let mut reduced = a.clone();
        reduced.reduce_terms(&t);
        let d = apply_to(&t, &[&a]).distance(&apply_to(&t, &[&reduced]));
        ensure!(d < 1e-12, "reduce_terms moved the state by {d:e}");
        if let Some(m) = NoiseChannel::try_merge(&a, &b, &t) {
            let d = apply_to(&t, &[&a, &b]).distance(&apply_to(&t, &[&m]));
            ensure!(d < 1e-12, "try_merge moved the state by {d:e}");
        }
    }
    Ok(())
}

pub fn heisenberg_factor_bounds(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 8);
        let ch = random_channel(&mut r, n);
        let id = ch.heisenberg_value(&PauliString::identity(n));
        ensure!((id - 1.0).abs() < 1e-12, "factor of the identity is {id}");
        let v = ch.heisenberg_value(&random_pauli(&mut r, n));
        ensure!(v.abs() <= 1.0 + 1e-12, "factor {v} out of range");
    }
    Ok(())
}

pub fn expectation_in_range(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
        for o in observables(&mut r, reference(&run), 5, 5) {
            let v = run.state.expectation(&o).map_err(|e| e.to_string())?;
            ensure!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v), "<{o}> = {v}\n{c}");
        }
    }
    Ok(())
}

pub fn engine_matches_oracle(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
        let obs = observables(&mut r, reference(&run), 10, 10);
        if let Some((_, gap)) = oracle_gap(&c, &obs)? {
            ensure!(gap <= 1e-12, "gap {gap:e}\n{c}");
        }
    }
    Ok(())
}

pub fn parametric_is_exact(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = symbolic_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).map_err(|e| e.to_string())?;
        let SimState::Standard(s) = &run.state else { return Err("symbolic run left the standard form".into()) };
        let obs = observables(&mut r, &s.tableau, 4, 2);
        for _ in 0..3 {
            let a = random_assignment(&mut r);
            let numeric = pipeline::simulate(&c.instantiate(&a).unwrap(), &RunOptions::default()).unwrap();
            for o in &obs {
                let sym = s.expectation_parametric(o).unwrap().eval(&a).unwrap();
                let num = numeric.state.expectation(o).unwrap();
                ensure!(sym.to_bits() == num.to_bits(), "<{o}>: {sym:e} vs {num:e}\n{c}");
            }
        }
    }
    Ok(())
}

fn flip_last(c: &Circuit) -> Circuit {
    let mut c = c.clone();
    if let Some(Op::Measure(m)) = c.ops.iter_mut().rev().find(|op| matches!(op, Op::Measure(_))) {
        m.forced = m.forced.map(|o| -o);
    }
    c
}

/// Engine probability of the last record, with impossible outcomes reported as 0.
fn last_probability(c: &Circuit) -> Result<Option<f64>, String> {
    match pipeline::simulate(c, &RunOptions::default()) {
        Ok(run) => Ok(run.records.last().and_then(|rec| rec.probability)),
        Err(Error::ZeroProbability(_)) => Ok(Some(0.0)),
        Err(e) => Err(format!("{e}\n{c}")),
    }
}

pub fn branch_probabilities_sum_to_one(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    let mut done = 0;
    while done < cases {
        let c = branching_circuit(&mut r);
        let mut prefix = c.clone();
        while !matches!(prefix.ops.last(), Some(Op::Measure(_))) {
            prefix.ops.pop();
        }
        // earlier conditions must be possible for the split to be meaningful
        let mut head = prefix.clone();
        head.ops.pop();
        if matches!(pipeline::simulate(&head, &RunOptions::default()), Err(Error::ZeroProbability(_))) {
            continue;
        }
        let (Some(a), Some(b)) = (last_probability(&prefix)?, last_probability(&flip_last(&prefix))?) else {
            continue;
        };
        ensure!((a + b - 1.0).abs() < 1e-12, "p(+) + p(-) = {}\n{prefix}", a + b);
        done += 1;
    }
    Ok(())
}

pub fn general_norm_matches_oracle(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = general_circuit(&mut r);
        let run = match pipeline::simulate(&c, &RunOptions::default()) {
            Ok(run) => run,
            Err(Error::ZeroProbability(_)) => continue,
            Err(e) => return Err(format!("{e}\n{c}")),
        };
        let (_, probs) = match replay(&c, &run) {
            Ok(x) => x,
            Err(Error::ZeroProbability(_)) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let dense_norm: f64 = probs.iter().flatten().product();
        ensure!((run.norm - dense_norm).abs() < 1e-10, "norm {} vs {dense_norm}\n{c}", run.norm);
    }
    Ok(())
}

pub fn channel_order_is_irrelevant(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = fragment_circuit(&mut r);
        let mut swapped = c.clone();
        let n = c.n;
        let at = r.random_range(0..=c.ops.len());
        swapped.ops.insert(at, Op::Channel(random_channel_spec(&mut r, n, &[])));
        swapped.ops.insert(at, Op::Channel(random_channel_spec(&mut r, n, &[])));
        let mut other = swapped.clone();
        other.ops.swap(at, at + 1);
        let a = pipeline::simulate(&swapped, &RunOptions::default()).unwrap();
        let b = pipeline::simulate(&other, &RunOptions::default()).unwrap();
        for o in observables(&mut r, reference(&a), 5, 5) {
            let (x, y) = (a.state.expectation(&o).unwrap(), b.state.expectation(&o).unwrap());
            ensure!((x - y).abs() < 1e-12, "<{o}> {x} vs {y}\n{swapped}");
        }
    }
    Ok(())
}

/// Total variation between the source circuit, conditioned on the absorbed outcomes, and the
/// compressed circuit with its outcomes expanded back to source order.
pub fn compression_tv(c: &Circuit, cc: &compression::CompressedCircuit) -> nsf_core::Result<f64> {
    let mut conditioned = c.clone();
    let measures = conditioned.ops.iter_mut().filter_map(|op| match op {
        Op::Measure(m) => Some(m),
        _ => None,
    });
    for (m, rec) in measures.zip(&cc.records) {
        if let Disposition::AbsorbedRandom(o) = rec.disposition {
            m.forced = Some(o);
        }
    }
    let want = oracle::outcome_distribution(&conditioned, None)?;
    let mut got: BTreeMap<Vec<i8>, f64> = BTreeMap::new();
    for (kept, p) in oracle::outcome_distribution(&cc.to_circuit()?, None)? {
        *got.entry(cc.expand_outcomes(&kept)?).or_default() += p;
    }
    Ok(total_variation(&want, &got.into_iter().collect::<Vec<_>>()))
}

/// Compressed form of `c`, or `None` for circuits with contradictory or impossible conditions.
pub fn try_compress(c: &Circuit) -> Result<Option<compression::CompressedCircuit>, String> {
    match compression::compress(c, &CompressOptions::default()) {
        Ok(cc) => Ok(Some(cc)),
        Err(Error::OutcomeContradiction { .. }) => Ok(None),
        Err(e) => Err(format!("{e}\n{c}")),
    }
}

pub fn compression_preserves_distribution(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    let mut done = 0;
    while done < cases {
        let c = compression_circuit(&mut r);
        let Some(cc) = try_compress(&c)? else { continue };
        match compression_tv(&c, &cc) {
            Ok(tv) => ensure!(tv <= 1e-12, "tv {tv:e}\n{c}"),
            Err(Error::ZeroProbability(_)) => continue,
            Err(e) => return Err(e.to_string()),
        }
        done += 1;
    }
    Ok(())
}

pub fn absorption_matches_brute_force(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    let mut done = 0;
    while done < cases {
        let n = small_n(&mut r, 5);
        let t = random_tableau(&mut r, n);
        let obs = random_nonidentity(&mut r, n);
        if t.is_member(&obs).is_some() {
            continue;
        }
        let downstream: Vec<PauliString> = (0..r.random_range(0..4)).map(|_| random_nonidentity(&mut r, n)).collect();
        let entries = downstream
            .iter()
            .enumerate()
            .map(|(i, d)| Entry { observable: d.clone(), kind: EntryKind::Random, forced: None, label: format!("e{i}") })
            .collect();
        let got = compression::can_absorb_random(&t, &obs, &[Block::Measurements(entries)]);
        let gens = t.stabilizers();
        let mut exists = false;
        for mask in 1u32..(1 << n) {
            let mut g = PauliString::identity(n);
            for (i, gi) in gens.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    g.mul_bits_assign(gi);
                }
            }
            let ok = g.anticommutes(&obs) && downstream.iter().all(|d| !g.anticommutes(d) && !d.anticommutes(&obs));
            exists |= ok;
        }
        ensure!(got.is_some() == exists, "verdict {} vs brute force {exists}", got.is_some());
        if let Some(g) = got {
            ensure!(g.anticommutes(&obs), "insertion commutes with {obs}");
            ensure!(downstream.iter().all(|d| !g.anticommutes(d)), "insertion hits a downstream entry");
            ensure!(t.is_member(&g).is_some(), "insertion outside the stabilizer group");
        }
        done += 1;
    }
    Ok(())
}

pub fn compression_is_idempotent(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    let mut done = 0;
    while done < cases {
        let c = compression_circuit(&mut r);
        let Some(cc) = try_compress(&c)? else { continue };
        let again = try_compress(&cc.to_circuit().unwrap())?.ok_or("recompression contradicts")?;
        ensure!(again.same_structure(&cc), "not idempotent\n{c}");
        ensure!(compression::shot_cost(&again) == compression::shot_cost(&cc), "cost changed");
        done += 1;
    }
    Ok(())
}

pub fn compression_alternates_on_prefixes(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = compression_circuit(&mut r);
        for k in 0..=c.ops.len() {
            let mut prefix = c.clone();
            prefix.ops.truncate(k);
            let Some(cc) = try_compress(&prefix)? else { break };
            ensure!(cc.is_alternating(), "prefix of {k} ops not alternating\n{c}");
            ensure!(compression::shot_cost(&cc) <= compression::raw_shot_cost(&prefix), "compression grew the cost");
        }
    }
    Ok(())
}

/// Every Pauli frame on up to four qubits under every gate.
pub fn frame_matches_conjugation(_seed: u64, _cases: usize) -> Outcome {
    for n in 1..=4 {
        for code in 0..4usize.pow(n as u32) {
            let mut p = PauliString::identity(n);
            for q in 0..n {
                p.set_letter(q, ['I', 'X', 'Y', 'Z'][code / 4usize.pow(q as u32) % 4]).unwrap();
            }
            for g in all_gates(n) {
                let mut f = Frame { x: p.x_words().to_vec(), z: p.z_words().to_vec() };
                f.apply(&g);
                let want = p.clone().conjugated(&g);
                ensure!(f.x == want.x_words() && f.z == want.z_words(), "frame {p} under {g:?}");
            }
        }
    }
    Ok(())
}

/// Largest deviation of sampled means from exact values, in standard errors, with `shots` per circuit.
pub fn sampler_deviation(c: &Circuit, obs: &[PauliString], shots: usize, seed: u64) -> Result<f64, String> {
    let run = pipeline::simulate(c, &RunOptions::default()).map_err(|e| e.to_string())?;
    let batch = sampler::sample(c, shots, seed, obs).map_err(|e| format!("{e}\n{c}"))?;
    let mut worst = 0.0f64;
    for (o, est) in obs.iter().zip(&batch.estimates) {
        let exact = run.state.expectation(o).unwrap();
        let se = sampler::standard_error(exact, shots);
        let dev = (est.mean - exact).abs();
        if se == 0.0 {
            if dev > 1e-12 {
                return Err(format!("<{o}> sampled {} but exact {exact} with zero variance\n{c}", est.mean));
            }
        } else {
            worst = worst.max(dev / se);
        }
    }
    Ok(worst)
}

pub fn sampler_within_five_se(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for k in 0..cases {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).unwrap();
        let obs = observables(&mut r, reference(&run), 4, 2);
        let dev = sampler_deviation(&c, &obs, 20_000, seed + k as u64)?;
        ensure!(dev <= 5.0, "deviation {dev:.2} SE\n{c}");
    }
    Ok(())
}

pub fn sampler_reproducible(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let c = fragment_circuit(&mut r);
        let run = pipeline::simulate(&c, &RunOptions::default()).unwrap();
        let obs = observables(&mut r, reference(&run), 2, 2);
        let s = r.random::<u64>();
        let a = sampler::sample(&c, 500, s, &obs).unwrap();
        let b = sampler::sample(&c, 500, s, &obs).unwrap();
        ensure!(a == b, "same seed gave different batches\n{c}");
    }
    Ok(())
}

pub fn random_graph(r: &mut Rng8, n: usize) -> Graph {
    let mut g = Graph::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if r.random_bool(0.5) {
                g.add_edge(a, b).unwrap();
            }
        }
    }
    g
}

pub fn local_complement_matches_direct(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 6);
        let mut gs = GraphState::new(random_graph(&mut r, n)).unwrap();
        for _ in 0..4 {
            gs.local_complement(r.random_range(0..n)).map_err(|e| e.to_string())?;
            let direct = graphs::graph_state_tableau(gs.graph()).unwrap();
            ensure!(gs.state.tableau.same_state(&direct), "state after LC differs from\n{}", gs.graph());
        }
    }
    Ok(())
}

/// Rank over F2 of the adjacency block between `a` and its complement.
fn cut_rank(g: &Graph, a: &[usize]) -> usize {
    let rest: Vec<usize> = (0..g.num_vertices()).filter(|v| !a.contains(v)).collect();
    let mut rows: Vec<u64> =
        a.iter().map(|&u| rest.iter().enumerate().filter(|(_, &v)| g.has_edge(u, v)).map(|(j, _)| 1u64 << j).sum()).collect();
    let mut rank = 0;
    for bit in 0..rest.len() {
        if let Some(i) = (rank..rows.len()).find(|&i| rows[i] >> bit & 1 == 1) {
            rows.swap(rank, i);
            for j in 0..rows.len() {
                if j != rank && rows[j] >> bit & 1 == 1 {
                    rows[j] ^= rows[rank];
                }
            }
            rank += 1;
        }
    }
    rank
}

pub fn reduced_density_matrices(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = r.random_range(2..=6);
        let g = random_graph(&mut r, n);
        let mut gs = GraphState::new(g.clone()).unwrap();
        let mut a: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
        if a.is_empty() {
            a.push(0);
        }
        let rho = graphs::reduced_density_matrix(&gs.state, &a, graphs::DEFAULT_RDM_CAP).unwrap();
        let s = graphs::entropy(&rho).map_err(|e| e.to_string())?;
        ensure!((s - cut_rank(&g, &a) as f64).abs() < 1e-9, "S = {s} vs cut rank for {a:?} of\n{g}");
        let p = r.random_range(0.0..0.3);
        gs.depolarize1(r.random_range(0..n), &Weight::Num(p)).unwrap();
        let rho = graphs::reduced_density_matrix(&gs.state, &a, graphs::DEFAULT_RDM_CAP).unwrap();
        let tr = rho.trace();
        ensure!((tr - C::new(1.0, 0.0)).norm() < 1e-12, "trace {tr}");
        ensure!(max_diff(&rho, &rho.adjoint()) < 1e-12, "not Hermitian");
        let s = graphs::entropy(&rho).map_err(|e| e.to_string())?;
        ensure!((-1e-12..=a.len() as f64 + 1e-9).contains(&s), "entropy {s} outside [0, {}]", a.len());
        let replayed = oracle::run_circuit(gs.transcript(), &[], None).map_err(|e| e.to_string())?.0;
        let want = replayed.reduced(&a).unwrap();
        ensure!(max_diff(&rho, &want) < 1e-12, "RDM differs from dense partial trace");
    }
    Ok(())
}

pub fn noiseless_witness_is_minus_one(seed: u64, cases: usize) -> Outcome {
    for n in 1..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect();
            let w = GraphState::new(Graph::from_edges(n, &edges).unwrap()).unwrap().witness().unwrap();
            ensure!((w.value + 1.0).abs() < 1e-12, "witness {} on {edges:?}", w.value);
        }
    }
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = r.random_range(6..=8);
        let mut gs = GraphState::new(random_graph(&mut r, n)).unwrap();
        for _ in 0..3 {
            gs.local_complement(r.random_range(0..n)).unwrap();
        }
        let w = gs.witness().unwrap().value;
        ensure!((w + 1.0).abs() < 1e-12, "witness {w} after local complements");
    }
    Ok(())
}

/// Witness values for `n = 1..=max_n` with `k` fused caterpillars.
pub fn witness_series(k: usize, max_n: usize, model: &NoiseModel) -> nsf_core::Result<Vec<f64>> {
    (1..=max_n).map(|n| graphs::fused_caterpillars(k, n, model)?.witness().map(|w| w.value)).collect()
}

pub fn witness_monotone_in_length(_seed: u64, _cases: usize) -> Outcome {
    let models = [
        NoiseModel::Initial(Weight::Num(1e-3)),
        NoiseModel::Operational(OperationNoise { p1: Weight::Num(5e-4), p2: Weight::Num(1e-3) }),
    ];
    for model in &models {
        let v = witness_series(2, 4, model).map_err(|e| e.to_string())?;
        ensure!(v.windows(2).all(|w| w[1] > w[0]), "not increasing: {v:?}");
        ensure!(v.iter().all(|&x| x < 0.0), "lost entanglement detection: {v:?}");
    }
    Ok(())
}

pub fn circuit_text_roundtrip(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for k in 0..cases {
        let c = match k % 4 {
            0 => fragment_circuit(&mut r),
            1 => symbolic_circuit(&mut r),
            2 => general_circuit(&mut r),
            _ => compression_circuit(&mut r),
        };
        let text = c.to_string();
        let back = circuit::parse(&text).map_err(|e| format!("{e}\n{text}"))?;
        ensure!(back == c, "roundtrip changed the circuit\n{text}");
        ensure!(back.to_string() == text, "printing is not stable\n{text}");
    }
    Ok(())
}

pub fn unknown_directive_is_rejected(_seed: u64, _cases: usize) -> Outcome {
    for bad in ["QUBITS 1\nFROB 0\n", "QUBITS 1\nH\n", "QUBITS 1\nM Q 0\n", "QUBITS 2\nCNOT 0\n", "QUBITS 1\nH 3\n"] {
        ensure!(circuit::parse(bad).is_err(), "accepted {bad:?}");
    }
    Ok(())
}

pub fn dense_state_invariants(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 4);
        let mut d = DenseState::zero(n).unwrap();
        for _ in 0..12 {
            match r.random_range(0..4) {
                0 | 1 => d.apply_gate(&random_gate(&mut r, n)).unwrap(),
                2 => d.apply_channel(&random_channel(&mut r, n)).unwrap(),
                _ => {
                    let p = random_nonidentity(&mut r, n);
                    let mut trial = d.clone();
                    match trial.measure_project(&p, sign(&mut r)) {
                        Ok(_) => d = trial,
                        Err(Error::ZeroProbability(_)) => {}
                        Err(e) => return Err(e.to_string()),
                    }
                }
            }
            d.check_invariants().map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

pub fn dense_measurement_matches_tableau(seed: u64, cases: usize) -> Outcome {
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = small_n(&mut r, 4);
        let t = random_tableau(&mut r, n);
        let p = random_nonidentity(&mut r, n);
        let s = sign(&mut r);
        let mut d = DenseState::from_tableau(&t).unwrap();
        let want = match deterministic_sign(&t, &p) {
            Some(v) if v == s => 1.0,
            Some(_) => 0.0,
            None => 0.5,
        };
        match d.measure_project(&p, s) {
            Ok(prob) => {
                ensure!((prob - want).abs() < 1e-12, "prob {prob} vs {want} for {p}");
                let mut t2 = t.clone();
                t2.measure_forced(&p, s).unwrap();
                ensure!(d.distance(&DenseState::from_tableau(&t2).unwrap()) < 1e-12, "post-measurement state differs");
            }
            Err(Error::ZeroProbability(_)) => ensure!(want == 0.0, "zero probability for {p}"),
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(())
}

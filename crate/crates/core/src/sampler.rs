//! Pauli-frame sampling against a noiseless reference shot.
//!
//! Frames live on the declared register for the whole run; a trace-out only clears the bits of
//! the discarded qubit. Each frame starts as a uniformly random element of the initial
//! stabilizer group and picks up the measured observable with probability 1/2 after every
//! random measurement, which makes random outcomes come out uniformly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bits::{self, words_for};
use crate::circuit::{Circuit, Op, QubitMap};
use crate::error::{Error, Result};
use crate::gate::Gate;
use crate::pauli::PauliString;
use crate::tableau::{MeasurementKind, StabilizerTableau};

/// Stream reserved for the reference shot; shot `k` uses stream `k`.
const REFERENCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub x: Vec<u64>,
    pub z: Vec<u64>,
}

impl Frame {
    pub fn new(n: usize) -> Self {
        Self { x: vec![0; words_for(n)], z: vec![0; words_for(n)] }
    }

    fn mul(&mut self, x: &[u64], z: &[u64]) {
        bits::xor_into(&mut self.x, x);
        bits::xor_into(&mut self.z, z);
    }

    /// Symplectic product with the Pauli `(x, z)`.
    fn anticommutes(&self, x: &[u64], z: &[u64]) -> bool {
        let mut acc = 0u32;
        for i in 0..x.len() {
            acc ^= ((self.x[i] & z[i]) ^ (self.z[i] & x[i])).count_ones() & 1;
        }
        acc == 1
    }

    /// Conjugates the frame by a Clifford gate, ignoring signs.
    pub fn apply(&mut self, g: &Gate) {
        let get = |v: &[u64], q: usize| bits::get(v, q);
        match *g {
            Gate::H(q) => {
                let (a, b) = (get(&self.x, q), get(&self.z, q));
                bits::set(&mut self.x, q, b);
                bits::set(&mut self.z, q, a);
            }
            Gate::S(q) | Gate::Sdg(q) => {
                if get(&self.x, q) {
                    bits::flip(&mut self.z, q);
                }
            }
            Gate::X(_) | Gate::Y(_) | Gate::Z(_) => {}
            Gate::Cnot(c, t) => {
                if get(&self.x, c) {
                    bits::flip(&mut self.x, t);
                }
                if get(&self.z, t) {
                    bits::flip(&mut self.z, c);
                }
            }
            Gate::Cz(a, b) => {
                let (xa, xb) = (get(&self.x, a), get(&self.x, b));
                if xb {
                    bits::flip(&mut self.z, a);
                }
                if xa {
                    bits::flip(&mut self.z, b);
                }
            }
        }
    }

    fn clear(&mut self, q: usize) {
        bits::set(&mut self.x, q, false);
        bits::set(&mut self.z, q, false);
    }
}

#[derive(Debug, Clone)]
struct Sparse {
    x: Vec<u64>,
    z: Vec<u64>,
}

impl Sparse {
    fn of(p: &PauliString) -> Self {
        Self { x: p.x_words().to_vec(), z: p.z_words().to_vec() }
    }
}

#[derive(Debug, Clone)]
enum Step {
    Gate(Gate),
    Channel { cdf: Vec<f64>, ops: Vec<Sparse> },
    Measure { obs: Sparse, flip_ref: bool, random: bool, witness: Option<Sparse> },
    TraceOut(usize),
}

/// Reference outcomes and the per-shot instruction list of a circuit.
#[derive(Debug, Clone)]
pub struct ShotProgram {
    n: usize,
    init: Vec<Sparse>,
    steps: Vec<Step>,
    pub labels: Vec<String>,
    /// Noiseless outcome of every measurement.
    pub reference: Vec<i8>,
    final_map: QubitMap,
    final_tableau: StabilizerTableau,
    seed: u64,
}

/// Noiseless run with channels skipped; random outcomes come from the reference stream of
/// `seed` unless forced.
pub fn reference_shot(circuit: &Circuit, seed: u64) -> Result<ShotProgram> {
    circuit.validate()?;
    let n = circuit.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(REFERENCE_STREAM);
    let mut t = circuit.initial_tableau()?;
    let init = t.stabilizers().iter().map(Sparse::of).collect();
    let mut map = QubitMap::new(n);
    let mut steps = Vec::with_capacity(circuit.ops.len());
    let mut labels = Vec::new();
    let mut reference = Vec::new();
    let declared = |p: &PauliString, map: &QubitMap| p.embed(n, &map.remaining()).expect("register sizes agree");
    for op in &circuit.ops {
        match op {
            Op::Gate(g) => {
                t.apply(&g.remap(|q| map.get(q).expect("validated")))?;
                steps.push(Step::Gate(*g));
            }
            Op::Channel(spec) => {
                let ch = spec.build(n, &QubitMap::new(n))?;
                let mut weights = Vec::with_capacity(ch.len());
                for term in ch.terms() {
                    let w = term.weight.as_num().ok_or(Error::SymbolicWeights)?;
                    if term.negative || w.is_nan() || w < 0.0 {
                        return Err(Error::InvalidWeight(if term.negative { -w } else { w }));
                    }
                    weights.push(w);
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect();
                if let Some(last) = cdf.last_mut() {
                    *last = 1.0;
                }
                steps.push(Step::Channel { cdf, ops: ch.terms().iter().map(|term| Sparse::of(&term.op)).collect() });
            }
            Op::Measure(m) => {
                let obs = m.observable(map.active(), &map)?;
                let (outcome, random, witness) = match t.classify(&obs)? {
                    MeasurementKind::Deterministic(s) => {
                        if m.forced.is_some() {
                            return Err(Error::Unsupported(format!(
                                "frame sampling cannot post-select the deterministic measurement {}",
                                m.label
                            )));
                        }
                        (s, false, None)
                    }
                    MeasurementKind::Random(l) => {
                        let witness = m.forced.map(|_| Sparse::of(&declared(&t.stabilizer(l), &map)));
                        let (o, _) = t.measure(&obs, m.forced, &mut rng)?;
                        (o, true, witness)
                    }
                };
                labels.push(m.label.clone());
                reference.push(outcome);
                steps.push(Step::Measure { obs: Sparse::of(&declared(&obs, &map)), flip_ref: outcome < 0, random, witness });
            }
            Op::TraceOut(q) => {
                let v = map.remove(*q)?;
                t = t.trace_out(v)?;
                steps.push(Step::TraceOut(*q));
            }
            Op::General(_) => return Err(Error::Unsupported("frame sampling of non-Pauli channels".into())),
        }
    }
    Ok(ShotProgram { n, init, steps, labels, reference, final_map: map, final_tableau: t, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub shots: usize,
}

impl Estimate {
    /// From the number of `+1` values among `shots` samples.
    pub fn from_counts(plus: usize, shots: usize) -> Self {
        let mean = (2.0 * plus as f64 - shots as f64) / shots as f64;
        Self { mean, se: standard_error(mean, shots), shots }
    }
}

/// `sqrt((1 - mu^2) / M)` for the mean of `M` samples of a `+-1` variable.
pub fn standard_error(mean: f64, shots: usize) -> f64 {
    ((1.0 - mean * mean).max(0.0) / shots as f64).sqrt()
}

/// Hoeffding sample size for accuracy `epsilon` at confidence `1 - delta`, before rounding up.
pub fn hoeffding_bound(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidWeight(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidWeight(delta));
    }
    Ok((2.0 / delta).ln() / (2.0 * epsilon * epsilon))
}

pub fn shots_for_accuracy(epsilon: f64, delta: f64) -> Result<u64> {
    let b = hoeffding_bound(epsilon, delta)?;
    // absorb rounding in the logarithm when the bound is an exact integer
    Ok((b * (1.0 - 4.0 * f64::EPSILON)).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotBatch {
    pub seed: u64,
    pub shots: usize,
    pub labels: Vec<String>,
    pub reference: Vec<i8>,
    /// Row-major `shots x labels.len()` outcomes.
    pub outcomes: Vec<i8>,
    pub observables: Vec<PauliString>,
    pub estimates: Vec<Estimate>,
}

impl ShotBatch {
    pub fn shot(&self, k: usize) -> &[i8] {
        let w = self.labels.len();
        &self.outcomes[k * w..(k + 1) * w]
    }

    /// Mean of the product of the listed measurement outcomes.
    pub fn parity(&self, records: &[usize]) -> Estimate {
        let plus = (0..self.shots).filter(|&k| records.iter().map(|&r| self.shot(k)[r]).product::<i8>() > 0).count();
        Estimate::from_counts(plus, self.shots)
    }
}

struct ShotResult {
    outcomes: Vec<i8>,
    observables: Vec<bool>,
}

impl ShotProgram {
    pub fn num_measurements(&self) -> usize {
        self.labels.len()
    }

    /// Per-shot operation count.
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    fn run_shot(&self, k: u64, observables: &[(Sparse, bool)]) -> ShotResult {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        let mut f = Frame::new(self.n);
        let mut bits_left = 0;
        let mut word = 0u64;
        for g in &self.init {
            if bits_left == 0 {
                word = rng.next_u64();
                bits_left = 64;
            }
            if word & 1 == 1 {
                f.mul(&g.x, &g.z);
            }
            word >>= 1;
            bits_left -= 1;
        }
        let mut outcomes = Vec::with_capacity(self.reference.len());
        for step in &self.steps {
            match step {
                Step::Gate(g) => f.apply(g),
                Step::Channel { cdf, ops } => {
                    let u: f64 = rng.random();
                    let j = cdf.partition_point(|&c| c <= u).min(ops.len() - 1);
                    f.mul(&ops[j].x, &ops[j].z);
                }
                Step::Measure { obs, flip_ref, random, witness } => {
                    let mut flip = f.anticommutes(&obs.x, &obs.z);
                    if flip {
                        if let Some(w) = witness {
                            f.mul(&w.x, &w.z);
                            flip = false;
                        }
                    }
                    outcomes.push(if flip ^ flip_ref { -1 } else { 1 });
                    if *random && rng.random::<bool>() {
                        f.mul(&obs.x, &obs.z);
                    }
                }
                Step::TraceOut(q) => f.clear(*q),
            }
        }
        let observables = observables.iter().map(|(o, flip_ref)| f.anticommutes(&o.x, &o.z) ^ flip_ref).collect();
        ShotResult { outcomes, observables }
    }

    /// `shots` frames in parallel, with terminal estimates of `observables` on the final register.
    pub fn sample(&self, shots: usize, observables: &[PauliString]) -> Result<ShotBatch> {
        if shots == 0 {
            return Err(Error::Unsupported("at least one shot is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(REFERENCE_STREAM - 1);
        let mut terminal = Vec::with_capacity(observables.len());
        for o in observables {
            if o.num_qubits() != self.final_tableau.num_qubits() {
                return Err(Error::Dimension { expected: self.final_tableau.num_qubits(), actual: o.num_qubits() });
            }
            let sign = match self.final_tableau.is_member(o) {
                Some(s) => s,
                None if rng.random::<bool>() => 1,
                None => -1,
            };
            let declared = o.embed(self.n, &self.final_map.remaining())?;
            terminal.push((Sparse::of(&declared), sign < 0));
        }
        let results: Vec<ShotResult> = (0..shots as u64).into_par_iter().map(|k| self.run_shot(k, &terminal)).collect();
        let mut counts = vec![0usize; observables.len()];
        let mut outcomes = Vec::with_capacity(shots * self.reference.len());
        for r in &results {
            outcomes.extend_from_slice(&r.outcomes);
            for (c, &b) in counts.iter_mut().zip(&r.observables) {
                if !b {
                    *c += 1;
                }
            }
        }
        Ok(ShotBatch {
            seed: self.seed,
            shots,
            labels: self.labels.clone(),
            reference: self.reference.clone(),
            outcomes,
            observables: observables.to_vec(),
            estimates: counts.into_iter().map(|c| Estimate::from_counts(c, shots)).collect(),
        })
    }
}

/// Reference shot plus `shots` noisy frames.
pub fn sample(circuit: &Circuit, shots: usize, seed: u64, observables: &[PauliString]) -> Result<ShotBatch> {
    reference_shot(circuit, seed)?.sample(shots, observables)
}

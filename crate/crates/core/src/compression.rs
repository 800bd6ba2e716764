//! Compressed circuits: an updated reference tableau followed by alternating channel and
//! measurement blocks, with every Clifford gate conjugated away.
//!
//! Blocks are stored in application order, so `blocks[0]` acts on the tableau state first.

use std::collections::HashMap;
use std::fmt;

use crate::bits;
use crate::circuit::{ChannelSpec, Circuit, Measurement, Op, QubitMap};
use crate::error::{Error, Result};
use crate::f2::F2Matrix;
use crate::noise::NoiseChannel;
use crate::pauli::PauliString;
use crate::tableau::{MeasurementKind, StabilizerTableau};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Deterministic,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub observable: PauliString,
    /// Classification against the reference tableau when the entry was appended.
    pub kind: EntryKind,
    pub forced: Option<i8>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Channels(Vec<NoiseChannel>),
    Measurements(Vec<Entry>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    /// Random measurement folded into the tableau with this outcome.
    AbsorbedRandom(i8),
    /// Deterministic measurement that reached the tableau; its outcome is fixed.
    AbsorbedDeterministic(i8),
    /// Repeats a kept entry: outcome is `sign` times the outcome of `target`.
    Alias { target: String, sign: i8 },
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub label: String,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedCircuit {
    pub n: usize,
    pub params: Vec<String>,
    pub tableau: StabilizerTableau,
    pub blocks: Vec<Block>,
    /// One record per measurement of the source circuit, in circuit order.
    pub records: Vec<MeasurementRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressOptions {
    /// Outcome assigned to absorbed random measurements without a forced value.
    pub default_outcome: i8,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self { default_outcome: 1 }
    }
}

/// Stabilizer `G` of `tableau` that anticommutes with `obs` and commutes with every
/// measurement-block observable, or `None` when no such element exists.
pub fn can_absorb_random(tableau: &StabilizerTableau, obs: &PauliString, blocks: &[Block]) -> Option<PauliString> {
    let n = tableau.num_qubits();
    let mut rows = vec![tableau.decompose(obs).0];
    let mut rhs = vec![true];
    for b in blocks {
        if let Block::Measurements(entries) = b {
            for e in entries {
                if e.observable.anticommutes(obs) {
                    return None;
                }
                let alpha = tableau.decompose(&e.observable).0;
                debug_assert!(
                    e.kind == EntryKind::Random || bits::is_zero(&alpha),
                    "deterministic entry left the stabilizer group"
                );
                rows.push(alpha);
                rhs.push(false);
            }
        }
    }
    let t = F2Matrix::from_rows(n, rows).solve_min(&rhs)?;
    let mut g = PauliString::identity(n);
    for i in bits::ones(&t) {
        g = g.multiply(&tableau.stabilizer(i)).expect("stabilizers commute");
    }
    Some(g)
}

impl CompressedCircuit {
    fn new(n: usize, params: Vec<String>, tableau: StabilizerTableau) -> Self {
        Self { n, params, tableau, blocks: Vec::new(), records: Vec::new() }
    }

    pub fn channels(&self) -> impl Iterator<Item = &NoiseChannel> {
        self.blocks.iter().flat_map(|b| match b {
            Block::Channels(c) => c.as_slice(),
            Block::Measurements(_) => &[],
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.blocks.iter().flat_map(|b| match b {
            Block::Measurements(e) => e.as_slice(),
            Block::Channels(_) => &[],
        })
    }

    pub fn measurement_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| matches!(b, Block::Measurements(_))).count()
    }

    /// Absorbed random outcomes in circuit order.
    pub fn recorded_outcomes(&self) -> Vec<(String, i8)> {
        self.records
            .iter()
            .filter_map(|r| match r.disposition {
                Disposition::AbsorbedRandom(o) => Some((r.label.clone(), o)),
                _ => None,
            })
            .collect()
    }

    /// No two adjacent blocks of the same kind and no empty blocks.
    pub fn is_alternating(&self) -> bool {
        let empty = |b: &Block| match b {
            Block::Channels(c) => c.is_empty(),
            Block::Measurements(e) => e.is_empty(),
        };
        !self.blocks.iter().any(empty)
            && self.blocks.windows(2).all(|w| matches!(w, [Block::Channels(_), Block::Measurements(_)] | [Block::Measurements(_), Block::Channels(_)]))
    }

    fn push_channel(&mut self, ch: NoiseChannel) {
        match self.blocks.last_mut() {
            Some(Block::Channels(c)) => c.push(ch),
            _ => self.blocks.push(Block::Channels(vec![ch])),
        }
    }

    fn push_entry(&mut self, e: Entry) {
        match self.blocks.last_mut() {
            Some(Block::Measurements(v)) => v.push(e),
            _ => self.blocks.push(Block::Measurements(vec![e])),
        }
    }

    fn conjugate(&mut self, g: &crate::gate::Gate) -> Result<()> {
        self.tableau.apply(g)?;
        for b in &mut self.blocks {
            match b {
                Block::Channels(chs) => chs.iter_mut().for_each(|c| c.conjugate(g)),
                Block::Measurements(es) => es.iter_mut().for_each(|e| e.observable.conjugate(g)),
            }
        }
        Ok(())
    }

    /// Walks `obs` from the newest block towards the tableau. Returns the index of a kept
    /// entry with the same operator, `Ok(None)` on reaching the tableau, `Err(())` when blocked.
    fn walk(&self, obs: &PauliString) -> std::result::Result<Option<(usize, usize)>, ()> {
        for (bi, b) in self.blocks.iter().enumerate().rev() {
            match b {
                Block::Channels(chs) => {
                    if chs.iter().any(|c| c.terms().iter().any(|t| t.op.anticommutes(obs))) {
                        return Err(());
                    }
                }
                Block::Measurements(es) => {
                    for (ei, e) in es.iter().enumerate().rev() {
                        if e.observable.same_bits(obs) {
                            return Ok(Some((bi, ei)));
                        }
                        if e.observable.anticommutes(obs) {
                            return Err(());
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn entry_mut(&mut self, bi: usize, ei: usize) -> &mut Entry {
        match &mut self.blocks[bi] {
            Block::Measurements(es) => &mut es[ei],
            Block::Channels(_) => unreachable!("walk returns measurement positions"),
        }
    }

    fn measure(&mut self, m: &Measurement, opts: &CompressOptions) -> Result<()> {
        let obs = m.observable(self.n, &QubitMap::new(self.n))?;
        let disposition = match self.tableau.classify(&obs)? {
            MeasurementKind::Deterministic(s) => match self.walk(&obs) {
                Ok(None) => {
                    if let Some(f) = m.forced.filter(|&f| f != s) {
                        return Err(Error::OutcomeContradiction { forced: f, actual: s });
                    }
                    Disposition::AbsorbedDeterministic(s)
                }
                Ok(Some((bi, ei))) => {
                    let e = self.entry_mut(bi, ei);
                    let sign = obs.sign() * e.observable.sign();
                    if let Some(f) = m.forced {
                        match e.forced {
                            Some(g) if g * sign != f => return Err(Error::OutcomeContradiction { forced: f, actual: g * sign }),
                            Some(_) => {}
                            None => e.forced = Some(f * sign),
                        }
                    }
                    Disposition::Alias { target: e.label.clone(), sign }
                }
                Err(()) => {
                    self.push_entry(Entry { observable: obs, kind: EntryKind::Deterministic, forced: m.forced, label: m.label.clone() });
                    Disposition::Kept
                }
            },
            MeasurementKind::Random(_) => match can_absorb_random(&self.tableau, &obs, &self.blocks) {
                Some(g) => {
                    let outcome = m.forced.unwrap_or(opts.default_outcome);
                    for b in &mut self.blocks {
                        if let Block::Channels(chs) = b {
                            for c in chs.iter_mut() {
                                c.absorb_random_measurement(&obs, &g)?;
                                c.merge_duplicates();
                            }
                        }
                    }
                    self.tableau.measure_forced(&obs, outcome)?;
                    Disposition::AbsorbedRandom(outcome)
                }
                None => {
                    self.push_entry(Entry { observable: obs, kind: EntryKind::Random, forced: m.forced, label: m.label.clone() });
                    Disposition::Kept
                }
            },
        };
        self.records.push(MeasurementRecord { label: m.label.clone(), disposition });
        Ok(())
    }

    /// The compressed form as a circuit: a `STATE` block followed by channels and measurements.
    pub fn to_circuit(&self) -> Result<Circuit> {
        let mut c = Circuit::new(self.n);
        c.params = self.params.clone();
        c.initial = Some(self.tableau.clone());
        for b in &self.blocks {
            match b {
                Block::Channels(chs) => {
                    for ch in chs {
                        c.ops.push(Op::Channel(ChannelSpec::from_channel(ch)?));
                    }
                }
                Block::Measurements(es) => {
                    for e in es {
                        c.ops.push(Op::Measure(Measurement::of(&e.observable, e.forced, &e.label)?));
                    }
                }
            }
        }
        Ok(c)
    }

    /// Outcomes of every source measurement, given the outcomes of the kept entries in block order.
    pub fn expand_outcomes(&self, kept: &[i8]) -> Result<Vec<i8>> {
        let labels: Vec<&str> = self.entries().map(|e| e.label.as_str()).collect();
        if labels.len() != kept.len() {
            return Err(Error::Dimension { expected: labels.len(), actual: kept.len() });
        }
        let by_label: HashMap<&str, i8> = labels.into_iter().zip(kept.iter().copied()).collect();
        Ok(self
            .records
            .iter()
            .map(|r| match &r.disposition {
                Disposition::AbsorbedRandom(o) | Disposition::AbsorbedDeterministic(o) => *o,
                Disposition::Alias { target, sign } => sign * by_label[target.as_str()],
                Disposition::Kept => by_label[r.label.as_str()],
            })
            .collect())
    }

    /// Structural equality up to channel labels.
    pub fn same_structure(&self, other: &Self) -> bool {
        let strip = |b: &Block| match b {
            Block::Channels(chs) => Block::Channels(
                chs.iter()
                    .map(|c| {
                        let mut c = c.clone();
                        c.label.clear();
                        c
                    })
                    .collect(),
            ),
            other => other.clone(),
        };
        self.n == other.n
            && self.tableau.same_state(&other.tableau)
            && self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| strip(a) == strip(b))
    }
}

/// Compresses a circuit of Clifford gates, Pauli channels and Pauli measurements.
pub fn compress(circuit: &Circuit, opts: &CompressOptions) -> Result<CompressedCircuit> {
    circuit.validate()?;
    let n = circuit.n;
    let identity = QubitMap::new(n);
    let mut c = CompressedCircuit::new(n, circuit.params.clone(), circuit.initial_tableau()?);
    for op in &circuit.ops {
        match op {
            Op::Gate(g) => c.conjugate(g)?,
            Op::Channel(spec) => c.push_channel(spec.build(n, &identity)?),
            Op::Measure(m) => c.measure(m, opts)?,
            Op::TraceOut(_) => return Err(Error::Unsupported("compression of circuits with trace-outs".into())),
            Op::General(_) => return Err(Error::Unsupported("compression of non-Pauli channels".into())),
        }
    }
    Ok(c)
}

/// Per-shot operation count of a frame sampler: one update per gate, channel and measurement.
pub fn raw_shot_cost(circuit: &Circuit) -> usize {
    circuit.ops.len()
}

/// Per-shot operation count of the compressed form: one update per channel and kept measurement.
pub fn shot_cost(c: &CompressedCircuit) -> usize {
    c.channels().count() + c.entries().count()
}

impl fmt::Display for CompressedCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_circuit() {
            Ok(c) => write!(f, "{c}"),
            Err(e) => write!(f, "# {e}"),
        }
    }
}

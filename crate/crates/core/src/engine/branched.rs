//! Deterministic measurements as a real combination of sign-flipped copies of the standard form.
//!
//! Each branch term is `c * E~_1 ... E~_N(|S><S|)`, where `E~_i` shares its Kraus operators with
//! `E_i` and flips the sign of the terms selected by the branch's overlay bits.

use std::collections::HashMap;

use crate::bits::BitSet;
use crate::error::{Error, Result};
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::pauli::PauliString;
use crate::tableau::{MeasurementKind, StabilizerTableau};

use super::{check_size, NsfState, ZERO_PROBABILITY};

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTerm {
    pub coeff: f64,
    /// One bit per channel term, channels concatenated in order.
    pub overlay: BitSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchedState {
    pub tableau: StabilizerTableau,
    pub channels: Vec<NoiseChannel>,
    pub terms: Vec<BranchTerm>,
    /// Product of the probabilities of all measurement outcomes applied so far.
    pub norm: f64,
    pub deterministic_measurements: usize,
}

impl BranchedState {
    pub fn from_nsf(state: NsfState) -> Result<Self> {
        if !state.is_numeric() {
            return Err(Error::SymbolicWeights);
        }
        let total = state.channels.iter().map(|c| c.len()).sum();
        Ok(Self {
            tableau: state.tableau,
            channels: state.channels,
            terms: vec![BranchTerm { coeff: 1.0, overlay: BitSet::zeros(total) }],
            norm: 1.0,
            deterministic_measurements: 0,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.tableau.num_qubits()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    fn total_terms(&self) -> usize {
        self.channels.iter().map(|c| c.len()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.channels
            .iter()
            .map(|c| {
                let o = acc;
                acc += c.len();
                o
            })
            .collect()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        self.tableau.apply(gate)?;
        for ch in &mut self.channels {
            ch.conjugate(gate);
        }
        Ok(())
    }

    pub fn add_channel(&mut self, ch: NoiseChannel) -> Result<()> {
        if ch.num_qubits() != self.num_qubits() {
            return Err(Error::Dimension { expected: self.num_qubits(), actual: ch.num_qubits() });
        }
        if !ch.is_numeric() {
            return Err(Error::SymbolicWeights);
        }
        self.channels.push(ch);
        let total = self.total_terms();
        for t in &mut self.terms {
            t.overlay.resize(total);
        }
        Ok(())
    }

    /// Bits of the channel terms anticommuting with `obs`.
    fn flip_mask(&self, obs: &PauliString) -> BitSet {
        let mut mask = BitSet::zeros(self.total_terms());
        let mut k = 0;
        for ch in &self.channels {
            for t in ch.terms() {
                if t.op.anticommutes(obs) {
                    mask.set(k, true);
                }
                k += 1;
            }
        }
        mask
    }

    /// Random measurement. The shared channels absorb the observable exactly as in the standard
    /// form, overlays are untouched, and the outcome probability is 1/2.
    pub fn measure_random(&mut self, obs: &PauliString, outcome: i8) -> Result<f64> {
        let l = match self.tableau.classify(obs)? {
            MeasurementKind::Deterministic(_) => return Err(Error::DeterministicMeasurement(obs.to_string())),
            MeasurementKind::Random(l) => l,
        };
        let g = self.tableau.stabilizer(l);
        for ch in &mut self.channels {
            ch.absorb_random_measurement(obs, &g)?;
        }
        self.tableau.measure_forced(obs, outcome)?;
        self.norm *= 0.5;
        Ok(0.5)
    }

    /// Post-selects outcome `outcome` of an observable in the stabilizer group. Returns its probability.
    pub fn measure_deterministic(&mut self, obs: &PauliString, outcome: i8) -> Result<f64> {
        check_size(self.num_qubits(), obs)?;
        let s = match self.tableau.classify(obs)? {
            MeasurementKind::Deterministic(s) => s,
            MeasurementKind::Random(_) => return Err(Error::RandomMeasurement(obs.to_string())),
        };
        let mask = self.flip_mask(obs);
        let partner_sign = (outcome * s) as f64;
        let mut index: HashMap<BitSet, usize> = HashMap::new();
        let mut next: Vec<BranchTerm> = Vec::with_capacity(2 * self.terms.len());
        let mut push = |coeff: f64, overlay: BitSet, next: &mut Vec<BranchTerm>| match index.get(&overlay) {
            Some(&i) => next[i].coeff += coeff,
            None => {
                index.insert(overlay.clone(), next.len());
                next.push(BranchTerm { coeff, overlay });
            }
        };
        for t in &self.terms {
            push(t.coeff / 2.0, t.overlay.clone(), &mut next);
            let mut flipped = t.overlay.clone();
            flipped.xor_with(&mask);
            push(t.coeff * partner_sign / 2.0, flipped, &mut next);
        }
        next.retain(|t| t.coeff != 0.0);
        let old = std::mem::replace(&mut self.terms, next);
        let prob = self.trace();
        if prob.is_nan() || prob < ZERO_PROBABILITY {
            self.terms = old;
            return Err(Error::ZeroProbability(prob));
        }
        for t in &mut self.terms {
            t.coeff /= prob;
        }
        self.norm *= prob;
        self.deterministic_measurements += 1;
        Ok(prob)
    }

    fn branch_value(&self, t: &BranchTerm, obs: Option<&PauliString>) -> f64 {
        let mut acc = 1.0;
        for (ch, off) in self.channels.iter().zip(self.offsets()) {
            let flip = |j: usize| t.overlay.get(off + j);
            acc *= match obs {
                Some(o) => ch.heisenberg_value_with(o, flip),
                None => ch.trace_value_with(flip),
            };
        }
        acc
    }

    /// `sum_t c_t tr(E~_t(|S><S|))`; 1 after renormalization.
    pub fn trace(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff * self.branch_value(t, None)).sum()
    }

    pub fn expectation(&self, obs: &PauliString) -> Result<f64> {
        check_size(self.num_qubits(), obs)?;
        let Some(s) = self.tableau.is_member(obs) else {
            return Ok(0.0);
        };
        // coefficients are renormalized after every measurement, so the trace is 1
        let num: f64 = self.terms.iter().map(|t| t.coeff * self.branch_value(t, Some(obs))).sum();
        Ok(s as f64 * num)
    }

    /// Probability of `outcome` when measuring `obs` next, without collapsing.
    pub fn outcome_probability(&self, obs: &PauliString, outcome: i8) -> Result<f64> {
        Ok((1.0 + outcome as f64 * self.expectation(obs)?) / 2.0)
    }

    /// Discards the factorized qubit `v`. Channel terms are restricted but not merged so that
    /// overlay bits stay aligned.
    pub fn trace_out(&mut self, v: usize) -> Result<()> {
        let t = self.tableau.trace_out(v)?;
        self.tableau = t;
        for ch in &mut self.channels {
            ch.trace_out(v, false);
        }
        Ok(())
    }
}

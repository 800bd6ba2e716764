//! Noisy states in standard form `rho = E_1 ... E_N(|S><S|)` and their extensions.

mod branched;
mod general;

pub use branched::{BranchTerm, BranchedState};
pub use general::{GeneralChannel, GeneralState, GeneralTerm, DEFAULT_TERM_BUDGET};

use rand::Rng;

use crate::error::{Error, Result};
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::param::{Assignment, ParamExpr};
use crate::pauli::PauliString;
use crate::tableau::{MeasurementKind, StabilizerTableau};

/// Probabilities below this are treated as impossible branches.
pub const ZERO_PROBABILITY: f64 = 1e-14;

/// Pure stabilizer reference state preceded by Pauli-diagonal channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NsfState {
    pub tableau: StabilizerTableau,
    pub channels: Vec<NoiseChannel>,
}

pub(crate) fn check_size(expected: usize, p: &PauliString) -> Result<()> {
    if p.num_qubits() != expected {
        return Err(Error::Dimension { expected, actual: p.num_qubits() });
    }
    Ok(())
}

impl NsfState {
    pub fn new(tableau: StabilizerTableau) -> Self {
        Self { tableau, channels: Vec::new() }
    }

    pub fn computational(n: usize) -> Result<Self> {
        Ok(Self::new(StabilizerTableau::new_computational(n)?))
    }

    pub fn num_qubits(&self) -> usize {
        self.tableau.num_qubits()
    }

    pub fn is_numeric(&self) -> bool {
        self.channels.iter().all(|c| c.is_numeric())
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
        self.channels.push(ch);
        Ok(())
    }

    pub fn classify(&self, obs: &PauliString) -> Result<MeasurementKind> {
        self.tableau.classify(obs)
    }

    /// Random measurement of `obs` with outcome `outcome`. Fails on a deterministic observable.
    pub fn measure_random_forced(&mut self, obs: &PauliString, outcome: i8) -> Result<()> {
        let l = match self.tableau.classify(obs)? {
            MeasurementKind::Deterministic(_) => return Err(Error::DeterministicMeasurement(obs.to_string())),
            MeasurementKind::Random(l) => l,
        };
        let g = self.tableau.stabilizer(l);
        for ch in &mut self.channels {
            ch.absorb_random_measurement(obs, &g)?;
        }
        self.tableau.measure_forced(obs, outcome)?;
        Ok(())
    }

    /// Random measurement with the outcome taken from `forced` or drawn from `rng`.
    pub fn measure_random<R: Rng + ?Sized>(&mut self, obs: &PauliString, forced: Option<i8>, rng: &mut R) -> Result<i8> {
        if let MeasurementKind::Deterministic(_) = self.tableau.classify(obs)? {
            return Err(Error::DeterministicMeasurement(obs.to_string()));
        }
        let outcome = forced.unwrap_or_else(|| if rng.random_bool(0.5) { 1 } else { -1 });
        self.measure_random_forced(obs, outcome)?;
        Ok(outcome)
    }

    /// Discards the factorized qubit `v`; higher qubits shift down.
    pub fn trace_out(&mut self, v: usize) -> Result<()> {
        let t = self.tableau.trace_out(v)?;
        self.tableau = t;
        for ch in &mut self.channels {
            ch.trace_out(v, true);
        }
        Ok(())
    }

    /// Merges channel terms that differ by a stabilizer.
    pub fn reduce_terms(&mut self) {
        for ch in &mut self.channels {
            ch.reduce_terms(&self.tableau);
        }
    }

    pub fn instantiate(&self, a: &Assignment) -> Result<Self> {
        Ok(Self {
            tableau: self.tableau.clone(),
            channels: self.channels.iter().map(|c| c.instantiate(a)).collect::<Result<_>>()?,
        })
    }

    /// `<obs>` for numeric channels: `s * prod_i sum_j lambda_j (-1)^[[N_j, obs]]` or 0.
    pub fn expectation(&self, obs: &PauliString) -> Result<f64> {
        check_size(self.num_qubits(), obs)?;
        if !self.is_numeric() {
            return Err(Error::SymbolicWeights);
        }
        let Some(s) = self.tableau.is_member(obs) else {
            return Ok(0.0);
        };
        let mut acc = s as f64;
        for ch in &self.channels {
            acc *= ch.heisenberg_value(obs);
        }
        Ok(acc)
    }

    /// Product-of-sums form of [`expectation`](Self::expectation).
    pub fn expectation_parametric(&self, obs: &PauliString) -> Result<ParamExpr> {
        check_size(self.num_qubits(), obs)?;
        let Some(s) = self.tableau.is_member(obs) else {
            return Ok(ParamExpr::zero());
        };
        Ok(ParamExpr { sign: s, factors: self.channels.iter().map(|c| c.heisenberg_factor(obs)).collect() })
    }
}

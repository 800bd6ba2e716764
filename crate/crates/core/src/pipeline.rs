//! Runs circuits through the standard form, escalating to branched or general states on demand.
//!
//! Measurement semantics:
//! - random measurements are conditioned on the forced outcome, or on one drawn from the seed
//!   (`+1` when no seed is given);
//! - a forced outcome on a deterministic measurement post-selects it;
//! - an unforced deterministic measurement is left unrecorded, so it leaves the state unchanged
//!   in the standard and branched forms and drops mixed-parity coherences in the general form.

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Op, QubitMap};
use crate::engine::{BranchedState, GeneralState, NsfState, DEFAULT_TERM_BUDGET};
use crate::error::{Error, Result};
use crate::param::{Assignment, ParamExpr};
use crate::pauli::PauliString;
use crate::tableau::MeasurementKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Maximum number of post-selected deterministic measurements.
    pub deterministic_budget: usize,
    pub term_budget: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: None, deterministic_budget: 16, term_budget: DEFAULT_TERM_BUDGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Standard,
    Branched,
    General,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Standard => "standard",
            Mode::Branched => "branched",
            Mode::General => "general",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Random,
    /// Post-selected deterministic measurement.
    Deterministic,
    /// Deterministic measurement without a forced outcome; `outcome` is the noiseless value.
    Unrecorded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: String,
    pub outcome: i8,
    pub kind: RecordKind,
    /// Probability of `outcome` given all earlier records; `None` when unrecorded.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum SimState {
    Standard(NsfState),
    Branched(BranchedState),
    General(GeneralState),
}

impl SimState {
    pub fn mode(&self) -> Mode {
        match self {
            SimState::Standard(_) => Mode::Standard,
            SimState::Branched(_) => Mode::Branched,
            SimState::General(_) => Mode::General,
        }
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            SimState::Standard(s) => s.num_qubits(),
            SimState::Branched(s) => s.num_qubits(),
            SimState::General(s) => s.num_qubits(),
        }
    }

    pub fn expectation(&self, obs: &PauliString) -> Result<f64> {
        match self {
            SimState::Standard(s) => s.expectation(obs),
            SimState::Branched(s) => s.expectation(obs),
            SimState::General(s) => s.expectation(obs),
        }
    }

    pub fn is_member(&self, obs: &PauliString) -> Option<i8> {
        match self {
            SimState::Standard(s) => s.tableau.is_member(obs),
            SimState::Branched(s) => s.tableau.is_member(obs),
            SimState::General(s) => s.tableau.is_member(obs),
        }
    }

    fn escalate_branched(&mut self) -> Result<&mut BranchedState> {
        if let SimState::Standard(s) = self {
            *self = SimState::Branched(BranchedState::from_nsf(s.clone())?);
        }
        match self {
            SimState::Branched(b) => Ok(b),
            _ => unreachable!("escalation only goes up"),
        }
    }

    fn escalate_general(&mut self, budget: usize) -> Result<&mut GeneralState> {
        match self {
            SimState::Standard(s) => *self = SimState::General(GeneralState::from_nsf(s.clone())?.with_budget(budget)),
            SimState::Branched(b) => *self = SimState::General(GeneralState::from_branched(b.clone())?.with_budget(budget)),
            SimState::General(_) => {}
        }
        match self {
            SimState::General(g) => Ok(g),
            _ => unreachable!("escalation only goes up"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Run {
    pub state: SimState,
    pub map: QubitMap,
    pub records: Vec<Record>,
    /// Probability of all conditioned outcomes together.
    pub norm: f64,
}

/// Processes every op of `circuit`. Symbolic weights are kept as long as the state stays in
/// the standard form.
pub fn simulate(circuit: &Circuit, opts: &RunOptions) -> Result<Run> {
    circuit.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(0));
    let mut state = SimState::Standard(NsfState::new(circuit.initial_tableau()?));
    let mut map = QubitMap::new(circuit.n);
    let mut records = Vec::new();
    let mut norm = 1.0;
    let mut post_selected = 0;
    for op in &circuit.ops {
        let n = map.active();
        match op {
            Op::Gate(g) => {
                let g = g.remap(|q| map.get(q).expect("validated"));
                match &mut state {
                    SimState::Standard(s) => s.apply_gate(&g)?,
                    SimState::Branched(s) => s.apply_gate(&g)?,
                    SimState::General(s) => s.apply_gate(&g)?,
                }
            }
            Op::Channel(spec) => {
                let ch = spec.build(n, &map)?;
                match &mut state {
                    SimState::Standard(s) => s.add_channel(ch)?,
                    SimState::Branched(s) => s.add_channel(ch)?,
                    SimState::General(s) => s.add_channel(ch)?,
                }
            }
            Op::General(spec) => {
                let ch = spec.build(n, &map)?;
                state.escalate_general(opts.term_budget)?.apply_general_channel(&ch)?;
            }
            Op::TraceOut(q) => {
                let v = map.remove(*q)?;
                match &mut state {
                    SimState::Standard(s) => s.trace_out(v)?,
                    SimState::Branched(s) => s.trace_out(v)?,
                    SimState::General(s) => s.trace_out(v)?,
                }
            }
            Op::Measure(m) => {
                let obs = m.observable(n, &map)?;
                let kind = match &state {
                    SimState::Standard(s) => s.classify(&obs)?,
                    SimState::Branched(s) => s.tableau.classify(&obs)?,
                    SimState::General(s) => s.tableau.classify(&obs)?,
                };
                let record = match kind {
                    MeasurementKind::Random(_) => {
                        let outcome = match (m.forced, opts.seed) {
                            (Some(o), _) => o,
                            (None, Some(_)) => {
                                if rand::Rng::random_bool(&mut rng, 0.5) {
                                    1
                                } else {
                                    -1
                                }
                            }
                            (None, None) => 1,
                        };
                        let prob = match &mut state {
                            SimState::Standard(s) => {
                                s.measure_random_forced(&obs, outcome)?;
                                0.5
                            }
                            SimState::Branched(s) => s.measure_random(&obs, outcome)?,
                            SimState::General(s) => s.measure_random(&obs, outcome)?,
                        };
                        Record { label: m.label.clone(), outcome, kind: RecordKind::Random, probability: Some(prob) }
                    }
                    MeasurementKind::Deterministic(sign) => match m.forced {
                        None => {
                            if let SimState::General(g) = &mut state {
                                g.dephase(&obs)?;
                            }
                            Record { label: m.label.clone(), outcome: sign, kind: RecordKind::Unrecorded, probability: None }
                        }
                        Some(outcome) => {
                            post_selected += 1;
                            if post_selected > opts.deterministic_budget {
                                return Err(Error::BudgetExceeded { needed: post_selected, cap: opts.deterministic_budget });
                            }
                            if matches!(state, SimState::Standard(ref s) if !s.is_numeric()) {
                                return Err(Error::DeterministicMeasurement(format!(
                                    "post-selecting {} needs numeric weights",
                                    m.label
                                )));
                            }
                            let prob = match &mut state {
                                SimState::General(g) => g.measure_deterministic(&obs, outcome)?,
                                other => other.escalate_branched()?.measure_deterministic(&obs, outcome)?,
                            };
                            Record { label: m.label.clone(), outcome, kind: RecordKind::Deterministic, probability: Some(prob) }
                        }
                    },
                };
                norm *= record.probability.unwrap_or(1.0);
                records.push(record);
            }
        }
    }
    Ok(Run { state, map, records, norm })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Expr(ParamExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableValue {
    pub observable: PauliString,
    /// Sign of the observable in the final reference stabilizer group, if it belongs to it.
    pub member: Option<i8>,
    pub value: Value,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub mode: Mode,
    pub qubits: usize,
    pub records: Vec<Record>,
    pub norm: f64,
    pub values: Vec<ObservableValue>,
}

fn check_observables(n: usize, observables: &[PauliString]) -> Result<()> {
    for o in observables {
        if o.num_qubits() != n {
            return Err(Error::Dimension { expected: n, actual: o.num_qubits() });
        }
    }
    Ok(())
}

/// Expectation values of `observables` on the final register. Without an assignment, a
/// symbolic circuit yields product-of-sums expressions.
pub fn run_expectation(
    circuit: &Circuit,
    observables: &[PauliString],
    assignment: Option<&Assignment>,
    opts: &RunOptions,
) -> Result<Report> {
    let circuit = match assignment {
        Some(a) => circuit.instantiate(a)?,
        None => circuit.clone(),
    };
    let run = simulate(&circuit, opts)?;
    check_observables(run.state.num_qubits(), observables)?;
    let mut values = Vec::with_capacity(observables.len());
    for o in observables {
        let member = run.state.is_member(o);
        let value = match &run.state {
            SimState::Standard(s) if !s.is_numeric() => Value::Expr(s.expectation_parametric(o)?),
            st => Value::Num(st.expectation(o)?),
        };
        values.push(ObservableValue { observable: o.clone(), member, value });
    }
    Ok(Report { mode: run.state.mode(), qubits: run.state.num_qubits(), records: run.records, norm: run.norm, values })
}

/// Cartesian product of parameter axes; the last axis varies fastest.
pub fn grid(axes: &[(String, Vec<f64>)]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for (name, values) in axes {
        out = out
            .into_iter()
            .flat_map(|a| {
                values.iter().map(move |&v| {
                    let mut b = a.clone();
                    b.insert(name.clone(), v);
                    b
                })
            })
            .collect();
    }
    out
}

/// One row per grid point with the value of every observable. The standard form is built once
/// and its expressions evaluated per point; circuits that leave the standard form are rerun
/// numerically at each point.
pub fn run_sweep(
    circuit: &Circuit,
    observables: &[PauliString],
    points: &[Assignment],
    opts: &RunOptions,
) -> Result<Vec<Vec<f64>>> {
    let used: BTreeSet<String> = circuit.params_used();
    for a in points {
        if let Some(p) = used.iter().find(|p| !a.contains_key(*p)) {
            return Err(Error::UnboundParameter(p.clone()));
        }
    }
    let built = match simulate(circuit, opts) {
        Ok(run) => Some(run),
        Err(Error::SymbolicWeights) | Err(Error::DeterministicMeasurement(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(Run { state: SimState::Standard(s), .. }) = &built {
        check_observables(s.num_qubits(), observables)?;
        let exprs = observables.iter().map(|o| s.expectation_parametric(o)).collect::<Result<Vec<_>>>()?;
        return points.iter().map(|a| exprs.iter().map(|e| e.eval(a)).collect()).collect();
    }
    points
        .iter()
        .map(|a| {
            let run = simulate(&circuit.instantiate(a)?, opts)?;
            check_observables(run.state.num_qubits(), observables)?;
            observables.iter().map(|o| run.state.expectation(o)).collect()
        })
        .collect()
}

//! Graph states: local complementation, emitter-based caterpillar generation, fusion, and
//! metrics evaluated from stabilizer expectation values.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::bits::{self, BitSet};
use crate::circuit::{ChannelSpec, Circuit, Op};
use crate::engine::NsfState;
use crate::error::{check_index, Error, Result};
use crate::f2::F2Matrix;
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::param::{ExprSum, ParamExpr, Weight};
use crate::pauli::PauliString;
use crate::tableau::StabilizerTableau;

/// Default cap on the subsystem size of [`reduced_density_matrix`].
pub const DEFAULT_RDM_CAP: usize = 10;

/// Simple undirected graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    adj: Vec<BitSet>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![BitSet::zeros(n); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for a in 0..n {
            for b in a + 1..n {
                g.toggle(a, b);
            }
        }
        g
    }

    /// Backbone `0, 3, 6, ...` with spikes `3j + 1`, `3j + 2` on backbone vertex `3j`.
    pub fn caterpillar(n: usize) -> Self {
        let mut g = Self::new(3 * n);
        for j in 0..n {
            g.toggle(3 * j, 3 * j + 1);
            g.toggle(3 * j, 3 * j + 2);
            if j > 0 {
                g.toggle(3 * (j - 1), 3 * j);
            }
        }
        g
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].get(b)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        check_index(a, self.num_vertices())?;
        check_index(b, self.num_vertices())?;
        if a == b {
            return Err(Error::RepeatedQubit(a));
        }
        self.adj[a].set(b, true);
        self.adj[b].set(a, true);
        Ok(())
    }

    fn toggle(&mut self, a: usize, b: usize) {
        self.adj[a].flip(b);
        self.adj[b].flip(a);
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        bits::ones(self.adj[v].words()).collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].count_ones()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_vertices()).flat_map(|a| self.neighbors(a).into_iter().filter(move |&b| b > a).map(move |b| (a, b))).collect()
    }

    /// Inverts the subgraph induced on the neighborhood of `v`.
    pub fn local_complement(&mut self, v: usize) -> Result<()> {
        check_index(v, self.num_vertices())?;
        let nb = self.neighbors(v);
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                self.toggle(a, b);
            }
        }
        Ok(())
    }

    /// Deletes `v`; higher vertices shift down.
    pub fn remove_vertex(&mut self, v: usize) -> Result<()> {
        check_index(v, self.num_vertices())?;
        let n = self.num_vertices();
        let old = std::mem::take(&mut self.adj);
        self.adj = vec![BitSet::zeros(n - 1); n - 1];
        let shift = |u: usize| if u > v { u - 1 } else { u };
        for (a, row) in old.iter().enumerate() {
            if a == v {
                continue;
            }
            for b in bits::ones(row.words()).filter(|&b| b != v) {
                self.adj[shift(a)].set(shift(b), true);
            }
        }
        Ok(())
    }

    /// `g_v = X_v prod_{w in N(v)} Z_w`.
    pub fn generator(&self, v: usize) -> PauliString {
        let n = self.num_vertices();
        let mut x = vec![0u64; bits::words_for(n)];
        bits::set(&mut x, v, true);
        PauliString::from_bits(n, x, self.adj[v].words().to_vec(), false)
    }

    pub fn generators(&self) -> Vec<PauliString> {
        (0..self.num_vertices()).map(|v| self.generator(v)).collect()
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vertices:", self.num_vertices())?;
        for (a, b) in self.edges() {
            write!(f, " {a}-{b}")?;
        }
        Ok(())
    }
}

/// Tableau with stabilizers `g_v` and destabilizers `Z_v`.
pub fn graph_state_tableau(g: &Graph) -> Result<StabilizerTableau> {
    let n = g.num_vertices();
    let destab = (0..n).map(|v| PauliString::single(n, v, 'Z')).collect::<Result<Vec<_>>>()?;
    StabilizerTableau::from_rows(&destab, &g.generators())
}

/// Noise attached to the operations of the generation and fusion protocols: a
/// single-qubit depolarizing channel before every single-qubit gate or measurement, and a
/// two-qubit depolarizing channel before every two-qubit gate.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationNoise {
    pub p1: Weight,
    pub p2: Weight,
}

impl OperationNoise {
    pub fn none() -> Self {
        Self { p1: Weight::Num(0.0), p2: Weight::Num(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Noiseless,
    /// Ideal generation and fusion; each photon of every caterpillar is depolarized with `p`
    /// before fusing.
    Initial(Weight),
    /// Noisy generation and fusion.
    Operational(OperationNoise),
}

impl NoiseModel {
    fn operations(&self) -> OperationNoise {
        match self {
            NoiseModel::Operational(o) => o.clone(),
            _ => OperationNoise::none(),
        }
    }
}

fn is_zero(w: &Weight) -> bool {
    w.as_num() == Some(0.0)
}

/// Noisy graph state together with the graph of its reference state and a replayable
/// transcript of everything applied to it.
///
/// Qubits carry declared labels from the initial register; positions shift down as qubits are
/// traced out. The transcript uses declared labels.
#[derive(Debug, Clone)]
pub struct GraphState {
    pub state: NsfState,
    graph: Graph,
    labels: Vec<usize>,
    transcript: Circuit,
}

impl GraphState {
    pub fn new(graph: Graph) -> Result<Self> {
        let n = graph.num_vertices();
        let tableau = graph_state_tableau(&graph)?;
        let mut transcript = Circuit::new(n);
        transcript.initial = Some(tableau.clone());
        Ok(Self { state: NsfState::new(tableau), graph, labels: (0..n).collect(), transcript })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_qubits(&self) -> usize {
        self.state.num_qubits()
    }

    /// Declared label of each current position.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Current position of declared qubit `label`.
    pub fn position(&self, label: usize) -> Result<usize> {
        self.labels
            .binary_search(&label)
            .map_err(|_| Error::Unsupported(format!("qubit {label} is not in the register")))
    }

    /// Circuit over the declared register reproducing this state, trace-outs included.
    pub fn transcript(&self) -> &Circuit {
        &self.transcript
    }

    fn gate(&mut self, g: Gate) -> Result<()> {
        self.state.apply_gate(&g)?;
        self.transcript.gate(g.remap(|q| self.labels[q]));
        Ok(())
    }

    pub fn depolarize1(&mut self, v: usize, p: &Weight) -> Result<()> {
        check_index(v, self.num_qubits())?;
        if is_zero(p) {
            return Ok(());
        }
        self.state.add_channel(NoiseChannel::depolarizing1(v, p.clone(), self.num_qubits())?)?;
        self.transcript.channel(ChannelSpec::Depol1 { q: self.labels[v], p: p.clone() });
        Ok(())
    }

    pub fn depolarize2(&mut self, a: usize, b: usize, p: &Weight) -> Result<()> {
        check_index(a, self.num_qubits())?;
        check_index(b, self.num_qubits())?;
        if is_zero(p) {
            return Ok(());
        }
        self.state.add_channel(NoiseChannel::depolarizing2(a, b, p.clone(), self.num_qubits())?)?;
        self.transcript.channel(ChannelSpec::Depol2 { a: self.labels[a], b: self.labels[b], p: p.clone() });
        Ok(())
    }

    /// Restores `+g_v` for every vertex with `Z_v` corrections. Fails when the reference
    /// state is not the graph state of the tracked graph up to signs.
    fn align(&mut self) -> Result<()> {
        for v in 0..self.num_qubits() {
            match self.state.tableau.is_member(&self.graph.generator(v)) {
                Some(1) => {}
                Some(_) => self.gate(Gate::Z(v))?,
                None => {
                    return Err(Error::InvalidStabilizers(format!("reference is not the graph state of {}", self.graph)))
                }
            }
        }
        Ok(())
    }

    /// `LC_v = (HSH)_v prod_{w in N(v)} S_w`, followed by the Pauli correction that restores the
    /// canonical generator signs.
    pub fn local_complement(&mut self, v: usize) -> Result<()> {
        check_index(v, self.num_qubits())?;
        for w in self.graph.neighbors(v) {
            self.gate(Gate::S(w))?;
        }
        for g in [Gate::H(v), Gate::S(v), Gate::H(v)] {
            self.gate(g)?;
        }
        self.graph.local_complement(v)?;
        self.align()
    }

    /// Measures `Z_v` with the given outcome and traces `v` out.
    fn measure_z_out(&mut self, v: usize, outcome: i8, noise: &OperationNoise) -> Result<()> {
        self.depolarize1(v, &noise.p1)?;
        let n = self.num_qubits();
        let z = PauliString::single(n, v, 'Z')?;
        self.state.measure_random_forced(&z, outcome)?;
        let label = self.labels[v];
        let zl = PauliString::single(self.transcript.n, label, 'Z')?;
        self.transcript.measure(&zl, Some(outcome))?;
        self.state.trace_out(v)?;
        self.transcript.trace_out(label);
        self.labels.remove(v);
        Ok(())
    }

    /// Removes vertex `v` by a `Z` measurement with `outcome`, correcting the neighbours.
    pub fn remove_vertex(&mut self, v: usize, outcome: i8, noise: &OperationNoise) -> Result<()> {
        check_index(v, self.num_qubits())?;
        self.measure_z_out(v, outcome, noise)?;
        self.graph.remove_vertex(v)?;
        self.align()
    }

    /// `Fuse_{s,t}`: CNOT from `s` to `t`, `Z_t` measured with `outcome`, Pauli correction, and
    /// `t` traced out. Vertex `s` keeps the symmetric difference of both neighbourhoods.
    pub fn fuse(&mut self, s: usize, t: usize, outcome: i8, noise: &OperationNoise) -> Result<()> {
        check_index(s, self.num_qubits())?;
        check_index(t, self.num_qubits())?;
        if s == t {
            return Err(Error::RepeatedQubit(s));
        }
        self.depolarize2(s, t, &noise.p2)?;
        self.gate(Gate::Cnot(s, t))?;
        let mut graph = self.graph.clone();
        for w in self.graph.neighbors(t) {
            if w != s {
                graph.toggle(s, w);
            }
        }
        if graph.has_edge(s, t) {
            graph.toggle(s, t);
        }
        self.measure_z_out(t, outcome, noise)?;
        graph.remove_vertex(t)?;
        self.graph = graph;
        self.align()
    }

    pub fn witness(&self) -> Result<WitnessResult> {
        witness_with(&self.graph, |g| self.state.expectation(g))
    }

    pub fn witness_parametric(&self) -> Result<ParametricWitness> {
        let per_generator =
            self.graph.generators().par_iter().map(|g| self.state.expectation_parametric(g)).collect::<Result<Vec<_>>>()?;
        Ok(ParametricWitness { m: self.num_qubits(), per_generator })
    }
}

/// Runs the emitter protocol for one caterpillar on photons `photons` (backbone, spike, spike
/// per block) and emitter `emitter`, all given by declared label. The emitter is measured out.
fn emit_caterpillar(gs: &mut GraphState, photons: &[usize], emitter: usize, noise: &OperationNoise) -> Result<()> {
    for block in photons.chunks(3) {
        let e = gs.position(emitter)?;
        for &ph in block {
            let q = gs.position(ph)?;
            gs.depolarize2(e, q, &noise.p2)?;
            gs.gate(Gate::Cz(e, q))?;
            gs.graph.toggle(e, q);
        }
        let p = gs.position(block[0])?;
        // LC_p LC_e = (HSHS)_p (SHSH)_e
        gs.depolarize1(e, &noise.p1)?;
        for g in [Gate::H(e), Gate::S(e), Gate::H(e), Gate::S(e)] {
            gs.gate(g)?;
        }
        gs.depolarize1(p, &noise.p1)?;
        for g in [Gate::S(p), Gate::H(p), Gate::S(p), Gate::H(p)] {
            gs.gate(g)?;
        }
        gs.graph.local_complement(e)?;
        gs.graph.local_complement(p)?;
        gs.align()?;
    }
    let e = gs.position(emitter)?;
    gs.remove_vertex(e, 1, noise)
}

/// Caterpillar graph state on `3n` photons generated by a single emitter: each block emits
/// three photons (`|+>` and a CZ with the emitter), then applies two local complementations;
/// the emitter is finally measured in `Z` and removed. Photon `3j` is backbone vertex `j` and
/// photons `3j + 1`, `3j + 2` are its spikes.
pub fn generate_caterpillar(n: usize, noise: &OperationNoise) -> Result<GraphState> {
    if n == 0 {
        return Err(Error::EmptyRegister);
    }
    let mut gs = GraphState::new(Graph::new(3 * n + 1))?;
    let photons: Vec<usize> = (0..3 * n).collect();
    emit_caterpillar(&mut gs, &photons, 3 * n, noise)?;
    Ok(gs)
}

/// Fusion pairs `(s, t)` by declared label for [`fused_caterpillars`]: spike `3j + 2` of
/// caterpillar `c` with spike `3j + 1` of caterpillar `c + 1`.
pub fn fusion_pairs(k: usize, n: usize) -> Vec<(usize, usize)> {
    let base = |c: usize, j: usize| 3 * n * c + 3 * j;
    (0..k.saturating_sub(1)).flat_map(|c| (0..n).map(move |j| (base(c, j) + 2, base(c + 1, j) + 1))).collect()
}

/// `k` caterpillars of backbone length `n` generated on one register, then fused one leaf
/// per backbone node between neighbours. The result has `m = (2k + 1) n` qubits.
///
/// Caterpillar `c` uses photons `3nc .. 3n(c + 1)` and emitter `3nk + c`.
pub fn fused_caterpillars(k: usize, n: usize, model: &NoiseModel) -> Result<GraphState> {
    if k == 0 || n == 0 {
        return Err(Error::EmptyRegister);
    }
    let ops = model.operations();
    let mut gs = GraphState::new(Graph::new(3 * n * k + k))?;
    for c in 0..k {
        let photons: Vec<usize> = (3 * n * c..3 * n * (c + 1)).collect();
        emit_caterpillar(&mut gs, &photons, 3 * n * k + c, &ops)?;
    }
    if let NoiseModel::Initial(p) = model {
        for v in 0..gs.num_qubits() {
            gs.depolarize1(v, p)?;
        }
    }
    for (s, t) in fusion_pairs(k, n) {
        let (s, t) = (gs.position(s)?, gs.position(t)?);
        gs.fuse(s, t, 1, &ops)?;
    }
    Ok(gs)
}

/// Transcript of [`fused_caterpillars`] without trace-outs, for compression and sampling.
/// Measured qubits stay in the register as `|0>` (after a `+1` outcome).
pub fn caterpillar_fusion_circuit(k: usize, n: usize, model: &NoiseModel) -> Result<Circuit> {
    let gs = fused_caterpillars(k, n, model)?;
    let mut c = gs.transcript().clone();
    c.ops.retain(|op| !matches!(op, Op::TraceOut(_)));
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessResult {
    pub value: f64,
    pub m: usize,
    pub per_generator: Vec<f64>,
}

impl WitnessResult {
    /// Negative values certify genuine multipartite entanglement.
    pub fn detects_entanglement(&self) -> bool {
        self.value < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricWitness {
    pub m: usize,
    pub per_generator: Vec<ParamExpr>,
}

impl ParametricWitness {
    /// `(m - 1) - sum_v <g_v>` as an expression sum.
    pub fn value(&self) -> ExprSum {
        ExprSum { constant: (self.m as f64) - 1.0, terms: self.per_generator.iter().map(|e| (-1.0, e.clone())).collect() }
    }
}

/// `<W_G> = (m - 1) - sum_v <g_v>` with expectations from `expect`.
pub fn witness_with<F>(graph: &Graph, expect: F) -> Result<WitnessResult>
where
    F: Fn(&PauliString) -> Result<f64> + Sync,
{
    let per_generator = graph.generators().par_iter().map(&expect).collect::<Result<Vec<_>>>()?;
    let m = graph.num_vertices();
    let value = per_generator.iter().fold((m as f64) - 1.0, |acc, g| acc - g);
    Ok(WitnessResult { value, m, per_generator })
}

/// Matrix of the unsigned Pauli `p`; basis bit `i` is qubit `i`.
fn pauli_dense(p: &PauliString) -> DMatrix<C> {
    let n = p.num_qubits();
    let d = 1usize << n;
    let mut xmask = 0usize;
    let mut m = DMatrix::from_element(d, d, C::new(0.0, 0.0));
    for q in 0..n {
        if p.x_bit(q) {
            xmask |= 1 << q;
        }
    }
    for col in 0..d {
        let mut phase = C::new(1.0, 0.0);
        for q in 0..n {
            // X|b> = |1-b>, Z|b> = (-1)^b |b>, Y|b> = i (-1)^b |1-b>
            if p.z_bit(q) && (col >> q) & 1 == 1 {
                phase = -phase;
            }
            if p.x_bit(q) && p.z_bit(q) {
                phase *= C::new(0.0, 1.0);
            }
        }
        m[(col ^ xmask, col)] = phase;
    }
    m
}

/// `rho_A = 2^-|A| sum_{S in stab, supp S in A} <S> S|_A`. Local basis bit `i` is qubit `a[i]`.
pub fn reduced_density_matrix(state: &NsfState, a: &[usize], cap: usize) -> Result<DMatrix<C>> {
    let n = state.num_qubits();
    if a.len() > cap {
        return Err(Error::CapExceeded { what: "subsystem size", value: a.len(), cap });
    }
    for (i, &q) in a.iter().enumerate() {
        check_index(q, n)?;
        if a[..i].contains(&q) {
            return Err(Error::RepeatedQubit(q));
        }
    }
    let gens = state.tableau.stabilizers();
    // one row per x/z column outside A, one column per generator
    let outside: Vec<usize> = (0..n).filter(|q| !a.contains(q)).collect();
    let mut m = F2Matrix::zeros(0, n);
    for &q in &outside {
        for z in [false, true] {
            let mut row = vec![0u64; bits::words_for(n)];
            for (i, g) in gens.iter().enumerate() {
                if if z { g.z_bit(q) } else { g.x_bit(q) } {
                    bits::set(&mut row, i, true);
                }
            }
            m.push_row(row);
        }
    }
    let kernel = m.kernel();
    if kernel.len() > cap {
        return Err(Error::CapExceeded { what: "supported subgroup dimension", value: kernel.len(), cap });
    }
    let basis: Vec<PauliString> = kernel
        .iter()
        .map(|beta| {
            let mut p = PauliString::identity(n);
            for i in bits::ones(beta) {
                p.mul_bits_assign(&gens[i]);
            }
            p.unsigned()
        })
        .collect();
    let d = 1usize << a.len();
    let scale = 1.0 / d as f64;
    let mut rho = DMatrix::from_element(d, d, C::new(0.0, 0.0));
    let mut element = PauliString::identity(n);
    // Gray-code walk over the 2^dim subgroup elements
    for step in 0..(1usize << basis.len()) {
        if step > 0 {
            element.mul_bits_assign(&basis[step.trailing_zeros() as usize]);
        }
        let s = element.unsigned();
        let value = state.expectation(&s)?;
        if value != 0.0 {
            rho += pauli_dense(&s.restrict(a)?) * C::new(value * scale, 0.0);
        }
    }
    Ok(rho)
}

/// Von Neumann entropy in bits.
pub fn entropy(rho: &DMatrix<C>) -> Result<f64> {
    const TOL: f64 = 1e-10;
    if !rho.is_square() {
        return Err(Error::NotDensityMatrix("not square".into()));
    }
    let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > TOL {
        return Err(Error::NotDensityMatrix(format!("not Hermitian ({herm:e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
        return Err(Error::NotDensityMatrix(format!("trace {tr}")));
    }
    let eig = rho.clone().symmetric_eigen();
    let mut s = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l < -TOL {
            return Err(Error::NotDensityMatrix(format!("eigenvalue {l:e}")));
        }
        if l > 0.0 {
            s -= l * l.log2();
        }
    }
    Ok(s)
}

fn check_terms(n: usize, terms: &[(f64, PauliString)]) -> Result<()> {
    for (_, p) in terms {
        if p.num_qubits() != n {
            return Err(Error::Dimension { expected: n, actual: p.num_qubits() });
        }
    }
    Ok(())
}

/// `<H> = sum_i h_i <P_i>`; terms outside the stabilizer group contribute 0.
pub fn energy(state: &NsfState, hamiltonian: &[(f64, PauliString)]) -> Result<f64> {
    check_terms(state.num_qubits(), hamiltonian)?;
    let values = hamiltonian.par_iter().map(|(_, p)| state.expectation(p)).collect::<Result<Vec<_>>>()?;
    Ok(hamiltonian.iter().zip(values).fold(0.0, |acc, ((h, _), v)| acc + h * v))
}

pub fn energy_parametric(state: &NsfState, hamiltonian: &[(f64, PauliString)]) -> Result<ExprSum> {
    check_terms(state.num_qubits(), hamiltonian)?;
    let terms = hamiltonian
        .par_iter()
        .map(|(h, p)| Ok((*h, state.expectation_parametric(p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExprSum { constant: 0.0, terms })
}

/// Score of a Bell expression over Pauli correlators and whether it exceeds `classical_bound`.
pub fn bell_score(state: &NsfState, terms: &[(f64, PauliString)], classical_bound: f64) -> Result<(f64, bool)> {
    let score = energy(state, terms)?;
    Ok((score, score > classical_bound + 1e-12))
}

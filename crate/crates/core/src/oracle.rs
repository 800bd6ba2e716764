//! Brute-force dense simulator used as ground truth in tests.
//!
//! Basis index bit `q` is the state of qubit `q`. Gates and Pauli operators act through explicit
//! small matrices and never touch the symplectic kernels they are meant to check.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::circuit::{Circuit, GeneralSpec, Op, QubitMap};
use crate::error::{Error, Result};
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::param::Assignment;
use crate::pauli::PauliString;
use crate::tableau::StabilizerTableau;

pub const MAX_QUBITS: usize = 12;
const ZERO_PROBABILITY: f64 = 1e-14;

type C = Complex64;

const O: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);
const I: C = C::new(0.0, 1.0);

/// Row-major 2x2 or 4x4 matrix.
pub type Small = Vec<C>;

pub fn pauli_letter_matrix(letter: char) -> Small {
    match letter {
        'I' => vec![ONE, O, O, ONE],
        'X' => vec![O, ONE, ONE, O],
        'Y' => vec![O, -I, I, O],
        'Z' => vec![ONE, O, O, -ONE],
        other => panic!("not a Pauli letter: {other}"),
    }
}

/// Dense matrix of a gate; for two-qubit gates the first listed qubit is the high local bit.
pub fn gate_matrix(g: &Gate) -> Small {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match g {
        Gate::H(_) => vec![C::new(h, 0.0), C::new(h, 0.0), C::new(h, 0.0), C::new(-h, 0.0)],
        Gate::S(_) => vec![ONE, O, O, I],
        Gate::Sdg(_) => vec![ONE, O, O, -I],
        Gate::X(_) => pauli_letter_matrix('X'),
        Gate::Y(_) => pauli_letter_matrix('Y'),
        Gate::Z(_) => pauli_letter_matrix('Z'),
        Gate::Cnot(..) => {
            let mut m = vec![O; 16];
            for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                m[r * 4 + c] = ONE;
            }
            m
        }
        Gate::Cz(..) => {
            let mut m = vec![O; 16];
            for d in 0..4 {
                m[d * 4 + d] = if d == 3 { -ONE } else { ONE };
            }
            m
        }
    }
}

pub fn rz_matrix(theta: f64) -> Small {
    vec![C::from_polar(1.0, -theta / 2.0), O, O, C::from_polar(1.0, theta / 2.0)]
}

/// Full `2^n x 2^n` matrix of a signed Pauli string.
pub fn pauli_matrix(p: &PauliString) -> DMatrix<C> {
    let n = p.num_qubits();
    let mut m = DMatrix::from_element(1, 1, C::new(p.sign() as f64, 0.0));
    for q in 0..n {
        let l = pauli_letter_matrix(p.letter(q));
        let lm = DMatrix::from_row_slice(2, 2, &l);
        m = lm.kronecker(&m);
    }
    m
}

fn transpose(m: &[C], d: usize) -> Small {
    let mut t = vec![O; d * d];
    for r in 0..d {
        for c in 0..d {
            t[c * d + r] = m[r * d + c];
        }
    }
    t
}

fn conj(m: &[C]) -> Small {
    m.iter().map(|z| z.conj()).collect()
}

/// Applies a `2^k x 2^k` matrix on `qubits` to a strided vector of length `dim`.
fn apply_local(v: &mut [C], offset: usize, stride: usize, dim: usize, qubits: &[usize], m: &[C]) {
    let k = qubits.len();
    let d = 1 << k;
    let mask: usize = qubits.iter().map(|q| 1 << q).sum();
    let mut idx = vec![0usize; d];
    let mut buf = vec![O; d];
    for base in 0..dim {
        if base & mask != 0 {
            continue;
        }
        for (l, slot) in idx.iter_mut().enumerate() {
            let mut i = base;
            for (pos, &q) in qubits.iter().enumerate() {
                if (l >> (k - 1 - pos)) & 1 == 1 {
                    i |= 1 << q;
                }
            }
            *slot = i;
        }
        for r in 0..d {
            let mut acc = O;
            for c in 0..d {
                acc += m[r * d + c] * v[offset + idx[c] * stride];
            }
            buf[r] = acc;
        }
        for r in 0..d {
            v[offset + idx[r] * stride] = buf[r];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseState {
    Pure { n: usize, psi: Vec<C> },
    Mixed { n: usize, rho: Vec<C> },
}

impl DenseState {
    fn check_cap(n: usize) -> Result<()> {
        if n > MAX_QUBITS {
            return Err(Error::CapExceeded { what: "oracle qubits", value: n, cap: MAX_QUBITS });
        }
        if n == 0 {
            return Err(Error::EmptyRegister);
        }
        Ok(())
    }

    /// |0...0>.
    pub fn zero(n: usize) -> Result<Self> {
        Self::check_cap(n)?;
        let mut psi = vec![O; 1 << n];
        psi[0] = ONE;
        Ok(DenseState::Pure { n, psi })
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        Self::check_cap(n)?;
        let d = 1 << n;
        let mut rho = vec![O; d * d];
        for i in 0..d {
            rho[i * d + i] = C::new(1.0 / d as f64, 0.0);
        }
        Ok(DenseState::Mixed { n, rho })
    }

    /// The stabilizer state of `t`, built by projecting the maximally mixed state.
    pub fn from_tableau(t: &StabilizerTableau) -> Result<Self> {
        let mut s = Self::maximally_mixed(t.num_qubits())?;
        for g in t.stabilizers() {
            s.measure_project(&g, 1)?;
        }
        Ok(s)
    }

    pub fn from_density(n: usize, rho: &DMatrix<C>) -> Result<Self> {
        Self::check_cap(n)?;
        let d = 1 << n;
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Dimension { expected: d, actual: rho.nrows() });
        }
        let mut out = vec![O; d * d];
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = rho[(r, c)];
            }
        }
        Ok(DenseState::Mixed { n, rho: out })
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            DenseState::Pure { n, .. } | DenseState::Mixed { n, .. } => *n,
        }
    }

    fn dim(&self) -> usize {
        1 << self.num_qubits()
    }

    fn make_mixed(&mut self) {
        if let DenseState::Pure { n, psi } = self {
            let d = psi.len();
            let mut rho = vec![O; d * d];
            for r in 0..d {
                for c in 0..d {
                    rho[r * d + c] = psi[r] * psi[c].conj();
                }
            }
            *self = DenseState::Mixed { n: *n, rho };
        }
    }

    pub fn density_matrix(&self) -> DMatrix<C> {
        let d = self.dim();
        let mut s = self.clone();
        s.make_mixed();
        let DenseState::Mixed { rho, .. } = s else { unreachable!() };
        DMatrix::from_row_slice(d, d, &rho)
    }

    fn check_qubits(&self, qubits: &[usize]) -> Result<()> {
        let n = self.num_qubits();
        for (i, &q) in qubits.iter().enumerate() {
            if q >= n {
                return Err(Error::IndexOutOfRange { index: q, n });
            }
            if qubits[..i].contains(&q) {
                return Err(Error::RepeatedQubit(q));
            }
        }
        Ok(())
    }

    /// `rho <- L rho R` for local matrices `L`, `R` on `qubits` (`R = None` means `L^dagger`).
    fn sandwich(&mut self, qubits: &[usize], left: &[C], right: Option<&[C]>) {
        let d = self.dim();
        match self {
            DenseState::Pure { psi, .. } => {
                debug_assert!(right.is_none());
                apply_local(psi, 0, 1, d, qubits, left);
            }
            DenseState::Mixed { rho, .. } => {
                let k = 1 << qubits.len();
                let rt = match right {
                    Some(r) => transpose(r, k),
                    None => conj(left),
                };
                for c in 0..d {
                    apply_local(rho, c, d, d, qubits, left);
                }
                for r in 0..d {
                    apply_local(rho, r * d, 1, d, qubits, &rt);
                }
            }
        }
    }

    pub fn apply_gate(&mut self, g: &Gate) -> Result<()> {
        g.validate(self.num_qubits())?;
        self.sandwich(&g.qubits(), &gate_matrix(g), None);
        Ok(())
    }

    /// Applies a unitary given as a row-major `2^k x 2^k` matrix on `qubits`
    /// (first listed qubit is the high local bit).
    pub fn apply_unitary(&mut self, qubits: &[usize], u: &[C]) -> Result<()> {
        self.check_qubits(qubits)?;
        let k = 1 << qubits.len();
        if u.len() != k * k {
            return Err(Error::Dimension { expected: k * k, actual: u.len() });
        }
        for r in 0..k {
            for c in 0..k {
                let mut acc = O;
                for j in 0..k {
                    acc += u[r * k + j] * u[c * k + j].conj();
                }
                let want = if r == c { ONE } else { O };
                if (acc - want).norm() > 1e-10 {
                    return Err(Error::Unsupported("matrix is not unitary".into()));
                }
            }
        }
        self.sandwich(qubits, u, None);
        Ok(())
    }

    /// `rho <- sum_k K rho K^dagger` for single- or few-qubit Kraus matrices.
    pub fn apply_kraus(&mut self, qubits: &[usize], kraus: &[Small]) -> Result<()> {
        self.check_qubits(qubits)?;
        self.make_mixed();
        let base = self.clone();
        let mut acc: Option<Vec<C>> = None;
        for k in kraus {
            let mut s = base.clone();
            s.sandwich(qubits, k, None);
            let DenseState::Mixed { rho, .. } = s else { unreachable!() };
            acc = Some(match acc {
                None => rho,
                Some(mut a) => {
                    a.iter_mut().zip(&rho).for_each(|(x, y)| *x += y);
                    a
                }
            });
        }
        if let (DenseState::Mixed { rho, .. }, Some(a)) = (self, acc) {
            *rho = a;
        }
        Ok(())
    }

    fn apply_pauli_sandwich(&mut self, left: &PauliString, right: &PauliString) {
        let n = self.num_qubits();
        for q in 0..n {
            let (l, r) = (left.letter(q), right.letter(q));
            if l == 'I' && r == 'I' {
                continue;
            }
            self.sandwich(&[q], &pauli_letter_matrix(l), Some(&pauli_letter_matrix(r)));
        }
        let s = (left.sign() * right.sign()) as f64;
        if s < 0.0 {
            self.scale(C::new(s, 0.0));
        }
    }

    fn scale(&mut self, f: C) {
        match self {
            DenseState::Pure { psi, .. } => psi.iter_mut().for_each(|z| *z *= f),
            DenseState::Mixed { rho, .. } => rho.iter_mut().for_each(|z| *z *= f),
        }
    }

    fn check_pauli(&self, p: &PauliString) -> Result<()> {
        if p.num_qubits() != self.num_qubits() {
            return Err(Error::Dimension { expected: self.num_qubits(), actual: p.num_qubits() });
        }
        Ok(())
    }

    /// `rho <- sum_j s_j lambda_j N_j rho N_j`; signed (non-physical) channels are allowed.
    pub fn apply_channel(&mut self, ch: &NoiseChannel) -> Result<()> {
        let terms: Vec<(C, PauliString, PauliString)> = ch
            .terms()
            .iter()
            .map(|t| {
                let w = t.weight.as_num().ok_or(Error::SymbolicWeights)?;
                let w = if t.negative { -w } else { w };
                Ok((C::new(w, 0.0), t.op.clone(), t.op.clone()))
            })
            .collect::<Result<_>>()?;
        let total: f64 = terms.iter().map(|t| t.0.re).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NotTracePreserving(total));
        }
        self.apply_general(&terms)
    }

    /// `rho <- sum alpha P rho Q`.
    pub fn apply_general(&mut self, terms: &[(C, PauliString, PauliString)]) -> Result<()> {
        for (_, p, q) in terms {
            self.check_pauli(p)?;
            self.check_pauli(q)?;
        }
        self.make_mixed();
        let base = self.clone();
        let d = self.dim();
        let mut acc = vec![O; d * d];
        for (alpha, p, q) in terms {
            let mut s = base.clone();
            s.apply_pauli_sandwich(p, q);
            let DenseState::Mixed { rho, .. } = s else { unreachable!() };
            acc.iter_mut().zip(&rho).for_each(|(a, r)| *a += alpha * r);
        }
        if let DenseState::Mixed { rho, .. } = self {
            *rho = acc;
        }
        Ok(())
    }

    fn apply_pauli_left(&self, p: &PauliString) -> DenseState {
        let mut s = self.clone();
        for q in 0..p.num_qubits() {
            let l = p.letter(q);
            if l == 'I' {
                continue;
            }
            let m = pauli_letter_matrix(l);
            let d = s.dim();
            match &mut s {
                DenseState::Pure { psi, .. } => apply_local(psi, 0, 1, d, &[q], &m),
                DenseState::Mixed { rho, .. } => {
                    for c in 0..d {
                        apply_local(rho, c, d, d, &[q], &m);
                    }
                }
            }
        }
        if p.is_negative() {
            s.scale(-ONE);
        }
        s
    }

    pub fn trace(&self) -> C {
        let d = self.dim();
        match self {
            DenseState::Pure { psi, .. } => C::new(psi.iter().map(|z| z.norm_sqr()).sum(), 0.0),
            DenseState::Mixed { rho, .. } => (0..d).map(|i| rho[i * d + i]).sum(),
        }
    }

    /// `tr(P rho)` as a complex number.
    pub fn expectation_complex(&self, p: &PauliString) -> Result<C> {
        self.check_pauli(p)?;
        let pp = self.apply_pauli_left(p);
        Ok(match (self, &pp) {
            (DenseState::Pure { psi, .. }, DenseState::Pure { psi: ppsi, .. }) => {
                psi.iter().zip(ppsi).map(|(a, b)| a.conj() * b).sum()
            }
            _ => pp.trace(),
        })
    }

    /// Real part of `tr(P rho)`.
    ///
    /// # Panics
    /// If the imaginary part exceeds 1e-10 or the sizes differ.
    pub fn expectation(&self, p: &PauliString) -> f64 {
        let e = self.expectation_complex(p).expect("observable size matches state");
        assert!(e.im.abs() < 1e-10, "expectation of a Hermitian observable has imaginary part {}", e.im);
        e.re
    }

    /// Projects onto the `sign` eigenspace of `p` and renormalizes. Returns the probability.
    pub fn measure_project(&mut self, p: &PauliString, sign: i8) -> Result<f64> {
        self.check_pauli(p)?;
        let half = C::new(0.5, 0.0);
        let s = C::new(sign as f64, 0.0);
        let prob = match self {
            DenseState::Pure { .. } => {
                let pp = self.apply_pauli_left(p);
                let DenseState::Pure { psi: ppsi, .. } = pp else { unreachable!() };
                let DenseState::Pure { psi, .. } = self else { unreachable!() };
                psi.iter_mut().zip(&ppsi).for_each(|(a, b)| *a = half * (*a + s * b));
                psi.iter().map(|z| z.norm_sqr()).sum::<f64>()
            }
            DenseState::Mixed { .. } => {
                let terms = [
                    (C::new(0.25, 0.0), PauliString::identity(p.num_qubits()), PauliString::identity(p.num_qubits())),
                    (C::new(0.25, 0.0) * s, p.clone(), PauliString::identity(p.num_qubits())),
                    (C::new(0.25, 0.0) * s, PauliString::identity(p.num_qubits()), p.clone()),
                    (C::new(0.25, 0.0), p.clone(), p.clone()),
                ];
                self.apply_general(&terms)?;
                self.trace().re
            }
        };
        if prob < ZERO_PROBABILITY {
            return Err(Error::ZeroProbability(prob));
        }
        match self {
            DenseState::Pure { psi, .. } => {
                let f = 1.0 / prob.sqrt();
                psi.iter_mut().for_each(|z| *z *= f);
            }
            DenseState::Mixed { rho, .. } => {
                let f = 1.0 / prob;
                rho.iter_mut().for_each(|z| *z *= f);
            }
        }
        Ok(prob)
    }

    /// Traces out qubit `v`; higher qubits shift down by one.
    pub fn partial_trace(&self, v: usize) -> Result<DenseState> {
        let n = self.num_qubits();
        if v >= n {
            return Err(Error::IndexOutOfRange { index: v, n });
        }
        if n == 1 {
            return Err(Error::EmptyRegister);
        }
        let keep: Vec<usize> = (0..n).filter(|&q| q != v).collect();
        let m = self.reduced(&keep)?;
        DenseState::from_density(n - 1, &m)
    }

    /// Reduced density matrix on `keep`; local basis bit `i` is qubit `keep[i]`.
    pub fn reduced(&self, keep: &[usize]) -> Result<DMatrix<C>> {
        self.check_qubits(keep)?;
        let n = self.num_qubits();
        let full = self.density_matrix();
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let dk = 1 << keep.len();
        let spread = |local: usize, qs: &[usize]| -> usize {
            qs.iter().enumerate().filter(|(i, _)| (local >> i) & 1 == 1).map(|(_, q)| 1 << q).sum()
        };
        let mut out = DMatrix::from_element(dk, dk, O);
        for r in 0..dk {
            for c in 0..dk {
                let (br, bc) = (spread(r, keep), spread(c, keep));
                let mut acc = O;
                for e in 0..(1usize << traced.len()) {
                    let be = spread(e, &traced);
                    acc += full[(br | be, bc | be)];
                }
                out[(r, c)] = acc;
            }
        }
        Ok(out)
    }

    /// Checks trace 1, Hermiticity (1e-12) and positivity (1e-10).
    pub fn check_invariants(&self) -> Result<()> {
        let m = self.density_matrix();
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-12 {
            return Err(Error::NotDensityMatrix(format!("trace {tr}")));
        }
        let herm = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::NotDensityMatrix(format!("non-Hermitian by {herm:e}")));
        }
        let eig = m.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::NotDensityMatrix(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Max entrywise distance between density matrices.
    pub fn distance(&self, other: &DenseState) -> f64 {
        (self.density_matrix() - other.density_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// What the dense runner does at a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureAction {
    Project(i8),
    /// Measure without recording: `(rho + P rho P) / 2`.
    Dephase,
}

impl DenseState {
    pub fn dephase(&mut self, p: &PauliString) -> Result<()> {
        let id = PauliString::identity(p.num_qubits());
        self.apply_general(&[(C::new(0.5, 0.0), id.clone(), id), (C::new(0.5, 0.0), p.clone(), p.clone())])
    }
}

fn start_state(circuit: &Circuit) -> Result<DenseState> {
    match &circuit.initial {
        Some(t) => DenseState::from_tableau(t),
        None => DenseState::zero(circuit.n),
    }
}

/// Applies one non-measurement op. Channels are instantiated under `a` when given.
fn apply_op(state: &mut DenseState, map: &mut QubitMap, op: &Op, a: Option<&Assignment>) -> Result<()> {
    let n = map.active();
    match op {
        Op::Gate(g) => state.apply_gate(&g.remap(|q| map.get(q).expect("validated"))),
        Op::Channel(spec) => {
            let mut ch = spec.build(n, map)?;
            if let Some(a) = a {
                ch = ch.instantiate(a)?;
            }
            state.apply_channel(&ch)
        }
        Op::General(spec) => {
            let q = map.get(spec.qubit())?;
            let theta = match *spec {
                GeneralSpec::Rz { theta, .. } => theta,
                GeneralSpec::T(_) => std::f64::consts::FRAC_PI_4,
                GeneralSpec::Tdg(_) => -std::f64::consts::FRAC_PI_4,
            };
            state.apply_unitary(&[q], &rz_matrix(theta))
        }
        Op::TraceOut(q) => {
            let v = map.remove(*q)?;
            *state = state.partial_trace(v)?;
            Ok(())
        }
        Op::Measure(_) => unreachable!("measurements handled by the caller"),
    }
}

/// Dense run of `circuit`, taking `actions[k]` at the `k`-th measurement. Returns the final
/// state and the conditional probability of each projected outcome.
pub fn run_circuit(
    circuit: &Circuit,
    actions: &[MeasureAction],
    a: Option<&Assignment>,
) -> Result<(DenseState, Vec<Option<f64>>)> {
    circuit.validate()?;
    if actions.len() != circuit.measurement_count() {
        return Err(Error::Dimension { expected: circuit.measurement_count(), actual: actions.len() });
    }
    let mut state = start_state(circuit)?;
    let mut map = QubitMap::new(circuit.n);
    let mut probs = Vec::new();
    let mut k = 0;
    for op in &circuit.ops {
        if let Op::Measure(m) = op {
            let obs = m.observable(map.active(), &map)?;
            probs.push(match actions[k] {
                MeasureAction::Project(s) => Some(state.measure_project(&obs, s)?),
                MeasureAction::Dephase => {
                    state.dephase(&obs)?;
                    None
                }
            });
            k += 1;
        } else {
            apply_op(&mut state, &mut map, op, a)?;
        }
    }
    Ok((state, probs))
}

/// Joint distribution of all measurement outcomes, conditioned on the forced ones. Branches
/// below `1e-14` are dropped.
pub fn outcome_distribution(circuit: &Circuit, a: Option<&Assignment>) -> Result<Vec<(Vec<i8>, f64)>> {
    circuit.validate()?;
    let mut out = Vec::new();
    let mut stack = vec![(start_state(circuit)?, QubitMap::new(circuit.n), 0usize, Vec::new(), 1.0)];
    while let Some((mut state, mut map, mut i, outcomes, prob)) = stack.pop() {
        loop {
            match circuit.ops.get(i) {
                None => {
                    out.push((outcomes, prob));
                    break;
                }
                Some(Op::Measure(m)) => {
                    let obs = m.observable(map.active(), &map)?;
                    let signs: &[i8] = match m.forced {
                        Some(1) => &[1],
                        Some(_) => &[-1],
                        None => &[1, -1],
                    };
                    for &s in signs {
                        let mut branch = state.clone();
                        match branch.measure_project(&obs, s) {
                            Ok(pr) if prob * pr >= ZERO_PROBABILITY => {
                                let mut o = outcomes.clone();
                                o.push(s);
                                stack.push((branch, map.clone(), i + 1, o, prob * pr));
                            }
                            Ok(_) | Err(Error::ZeroProbability(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    break;
                }
                Some(op) => {
                    apply_op(&mut state, &mut map, op, a)?;
                    i += 1;
                }
            }
        }
    }
    let total: f64 = out.iter().map(|(_, p)| p).sum();
    if total < ZERO_PROBABILITY {
        return Err(Error::ZeroProbability(total));
    }
    for (_, p) in &mut out {
        *p /= total;
    }
    out.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(out)
}

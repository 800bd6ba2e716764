//! Non-Pauli-diagonal channels `E(rho) = sum alpha_{P,Q} P rho Q`.
//!
//! The state is `sum_t alpha_t E~_t(P_t |S><S| Q_t)` with shared Kraus operators and per-term
//! sign overlays. `P_t` and `Q_t` are stored with positive sign; phases live in `alpha_t`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;

use crate::bits::BitSet;
use crate::error::{check_index, Error, Result};
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::pauli::PauliString;
use crate::tableau::{MeasurementKind, StabilizerTableau};

use super::{check_size, BranchedState, NsfState, ZERO_PROBABILITY};

type C = Complex64;

pub const DEFAULT_TERM_BUDGET: usize = 4096;

fn i_pow(k: u8) -> C {
    match k % 4 {
        0 => C::new(1.0, 0.0),
        1 => C::new(0.0, 1.0),
        2 => C::new(-1.0, 0.0),
        _ => C::new(0.0, -1.0),
    }
}

/// A channel given as `sum beta P . Q` over Pauli pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralChannel {
    pub n: usize,
    pub terms: Vec<(C, PauliString, PauliString)>,
    pub label: String,
}

impl GeneralChannel {
    /// Checks sizes and that every `(beta, P, Q)` has a partner `(conj beta, Q, P)`.
    pub fn new(n: usize, terms: Vec<(C, PauliString, PauliString)>, label: &str) -> Result<Self> {
        let mut clean = Vec::with_capacity(terms.len());
        for (b, p, q) in terms {
            check_size(n, &p)?;
            check_size(n, &q)?;
            let b = b * (p.sign() * q.sign()) as f64;
            clean.push((b, p.unsigned(), q.unsigned()));
        }
        for (b, p, q) in &clean {
            let partner = clean.iter().any(|(b2, p2, q2)| p2 == q && q2 == p && (b2 - b.conj()).norm() <= 1e-12);
            if !partner {
                return Err(Error::NonHermitianExpansion(format!("no conjugate partner for ({b}, {p}, {q})")));
            }
        }
        Ok(Self { n, terms: clean, label: label.to_string() })
    }

    /// Expansion of `rho -> U rho U^dagger` for a single-qubit unitary (row-major 2x2).
    pub fn from_unitary_1q(q: usize, u: [C; 4], n: usize) -> Result<Self> {
        Self::from_kraus_1q(q, &[u], n)
    }

    /// Expansion of `rho -> sum_k K_k rho K_k^dagger` for single-qubit Kraus matrices.
    pub fn from_kraus_1q(q: usize, kraus: &[[C; 4]], n: usize) -> Result<Self> {
        check_index(q, n)?;
        // u_P = tr(P K) / 2 for P in I, X, Y, Z
        let coeffs = |k: &[C; 4]| -> [C; 4] {
            let half = 0.5;
            [
                (k[0] + k[3]) * half,
                (k[1] + k[2]) * half,
                (k[1] - k[2]) * C::new(0.0, half),
                (k[0] - k[3]) * half,
            ]
        };
        let letters = ['I', 'X', 'Y', 'Z'];
        let mut acc = [[C::new(0.0, 0.0); 4]; 4];
        for k in kraus {
            let u = coeffs(k);
            for a in 0..4 {
                for b in 0..4 {
                    acc[a][b] += u[a] * u[b].conj();
                }
            }
        }
        let mut terms = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if acc[a][b].norm() > 0.0 {
                    terms.push((
                        acc[a][b],
                        PauliString::single(n, q, letters[a])?,
                        PauliString::single(n, q, letters[b])?,
                    ));
                }
            }
        }
        Self::new(n, terms, "KRAUS")
    }

    /// `Rz(theta) = exp(-i theta Z / 2)`.
    pub fn rz(q: usize, theta: f64, n: usize) -> Result<Self> {
        check_index(q, n)?;
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let id = PauliString::identity(n);
        let z = PauliString::single(n, q, 'Z')?;
        let mut ch = Self::new(
            n,
            vec![
                (C::new(c * c, 0.0), id.clone(), id.clone()),
                (C::new(s * s, 0.0), z.clone(), z.clone()),
                (C::new(0.0, -s * c), z.clone(), id.clone()),
                (C::new(0.0, c * s), id, z),
            ],
            "RZ",
        )?;
        ch.terms.retain(|t| t.0.norm() > 0.0);
        Ok(ch)
    }

    /// T gate, equal to `Rz(pi/4)` up to a global phase.
    pub fn t(q: usize, n: usize) -> Result<Self> {
        let mut ch = Self::rz(q, FRAC_PI_4, n)?;
        ch.label = "T".into();
        Ok(ch)
    }

    pub fn tdg(q: usize, n: usize) -> Result<Self> {
        let mut ch = Self::rz(q, -FRAC_PI_4, n)?;
        ch.label = "TDG".into();
        Ok(ch)
    }

    /// Re-indexes qubits through `map` onto an `n`-qubit register.
    pub fn remap(&self, n: usize, map: impl Fn(usize) -> usize) -> Result<Self> {
        let mv = |p: &PauliString| -> Result<PauliString> {
            let mut out = PauliString::identity(n);
            for q in p.support() {
                out.set_letter(map(q), p.letter(q))?;
            }
            Ok(out)
        };
        let terms = self.terms.iter().map(|(b, p, q)| Ok((*b, mv(p)?, mv(q)?))).collect::<Result<_>>()?;
        Ok(Self { n, terms, label: self.label.clone() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralTerm {
    pub alpha: C,
    pub left: PauliString,
    pub right: PauliString,
    pub overlay: BitSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralState {
    pub tableau: StabilizerTableau,
    pub channels: Vec<NoiseChannel>,
    pub terms: Vec<GeneralTerm>,
    pub norm: f64,
    pub budget: usize,
}

type Key = (PauliString, PauliString, BitSet);

fn merge_terms(terms: Vec<GeneralTerm>) -> Vec<GeneralTerm> {
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut out: Vec<GeneralTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        let key = (t.left.clone(), t.right.clone(), t.overlay.clone());
        match index.get(&key) {
            Some(&i) => out[i].alpha += t.alpha,
            None => {
                index.insert(key, out.len());
                out.push(t);
            }
        }
    }
    out.retain(|t| t.alpha != C::new(0.0, 0.0));
    out
}

impl GeneralState {
    pub fn from_nsf(state: NsfState) -> Result<Self> {
        Self::from_branched(BranchedState::from_nsf(state)?)
    }

    pub fn from_branched(b: BranchedState) -> Result<Self> {
        let n = b.num_qubits();
        let terms = b
            .terms
            .into_iter()
            .map(|t| GeneralTerm {
                alpha: C::new(t.coeff, 0.0),
                left: PauliString::identity(n),
                right: PauliString::identity(n),
                overlay: t.overlay,
            })
            .collect();
        Ok(Self { tableau: b.tableau, channels: b.channels, terms, norm: b.norm, budget: DEFAULT_TERM_BUDGET })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
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
        for t in &mut self.terms {
            t.left.conjugate(gate);
            t.right.conjugate(gate);
            if t.left.is_negative() ^ t.right.is_negative() {
                t.alpha = -t.alpha;
            }
            t.left.set_negative(false);
            t.right.set_negative(false);
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

    fn flip_mask(&self, p: &PauliString) -> BitSet {
        let mut mask = BitSet::zeros(self.total_terms());
        let mut k = 0;
        for ch in &self.channels {
            for t in ch.terms() {
                if t.op.anticommutes(p) {
                    mask.set(k, true);
                }
                k += 1;
            }
        }
        mask
    }

    pub fn apply_general_channel(&mut self, ch: &GeneralChannel) -> Result<()> {
        if ch.n != self.num_qubits() {
            return Err(Error::Dimension { expected: self.num_qubits(), actual: ch.n });
        }
        let needed = self.terms.len() * ch.terms.len();
        let masks: Vec<(BitSet, BitSet)> = ch.terms.iter().map(|(_, p, q)| (self.flip_mask(p), self.flip_mask(q))).collect();
        let mut next = Vec::with_capacity(needed.min(self.budget + 1));
        for t in &self.terms {
            for ((beta, p2, q2), (mp, mq)) in ch.terms.iter().zip(&masks) {
                let (left, k) = p2.mul_phase(&t.left)?;
                let (right, m) = t.right.mul_phase(q2)?;
                let mut overlay = t.overlay.clone();
                overlay.xor_with(mp);
                overlay.xor_with(mq);
                next.push(GeneralTerm { alpha: t.alpha * beta * i_pow(k + m), left, right, overlay });
            }
        }
        let next = merge_terms(next);
        if next.len() > self.budget {
            return Err(Error::BudgetExceeded { needed: next.len(), cap: self.budget });
        }
        self.terms = next;
        Ok(())
    }

    /// `<S|M|S>` for a signed Pauli product `M = i^k c`.
    fn stab_value(&self, m: &PauliString, k: u8) -> C {
        match self.tableau.is_member(m) {
            Some(s) => i_pow(k) * s as f64,
            None => C::new(0.0, 0.0),
        }
    }

    fn channel_value(&self, t: &GeneralTerm, obs: Option<&PauliString>) -> f64 {
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

    /// `tr(A sigma)` for the unnormalized operator `sigma`.
    fn raw_trace_with(&self, obs: Option<&PauliString>) -> C {
        let mut total = C::new(0.0, 0.0);
        for t in &self.terms {
            // tr(A E~(P|S><S|Q)) = factor * <S|Q A P|S>
            let (qa, k1) = match obs {
                Some(a) => t.right.mul_phase(a).expect("sizes checked"),
                None => (t.right.clone(), 0),
            };
            let (m, k2) = qa.mul_phase(&t.left).expect("sizes checked");
            let v = self.stab_value(&m, k1 + k2);
            if v.norm() == 0.0 {
                continue;
            }
            total += t.alpha * v * self.channel_value(t, obs);
        }
        total
    }

    pub fn trace(&self) -> f64 {
        self.raw_trace_with(None).re
    }

    pub fn expectation(&self, obs: &PauliString) -> Result<f64> {
        check_size(self.num_qubits(), obs)?;
        let tr = self.trace();
        if tr == 0.0 {
            return Err(Error::ZeroProbability(tr));
        }
        Ok(self.raw_trace_with(Some(obs)).re / tr)
    }

    pub fn outcome_probability(&self, obs: &PauliString, outcome: i8) -> Result<f64> {
        Ok((1.0 + outcome as f64 * self.expectation(obs)?) / 2.0)
    }

    fn renormalize(&mut self, old: Vec<GeneralTerm>, old_tableau: Option<StabilizerTableau>) -> Result<f64> {
        let prob = self.trace();
        if prob.is_nan() || prob < ZERO_PROBABILITY {
            self.terms = old;
            if let Some(t) = old_tableau {
                self.tableau = t;
            }
            return Err(Error::ZeroProbability(prob));
        }
        for t in &mut self.terms {
            t.alpha /= prob;
        }
        self.norm *= prob;
        Ok(prob)
    }

    /// Random measurement of `obs` with outcome `outcome`. Returns the outcome probability.
    ///
    /// The lowest anticommuting generator `g` is inserted into every channel term that
    /// anticommutes with `obs`; the projector then maps `P|S>` to `P g^[[obs,P]] |S'>/sqrt(2)`.
    pub fn measure_random(&mut self, obs: &PauliString, outcome: i8) -> Result<f64> {
        let l = match self.tableau.classify(obs)? {
            MeasurementKind::Deterministic(_) => return Err(Error::DeterministicMeasurement(obs.to_string())),
            MeasurementKind::Random(l) => l,
        };
        let g = self.tableau.stabilizer(l);
        let old_channels = self.channels.clone();
        let old_terms = self.terms.clone();
        let old_tableau = self.tableau.clone();
        let offsets = self.offsets();
        let mut touched_bits = BitSet::zeros(self.total_terms());
        for (ch, off) in self.channels.iter_mut().zip(&offsets) {
            for j in ch.absorb_random_measurement(obs, &g)? {
                touched_bits.set(off + j, true);
            }
        }
        for t in &mut self.terms {
            if t.left.anticommutes(&g) ^ t.right.anticommutes(&g) {
                t.overlay.xor_with(&touched_bits);
            }
            if t.left.anticommutes(obs) {
                let (c, k) = t.left.mul_phase(&g)?;
                t.left = c;
                t.alpha *= i_pow(k);
            }
            if t.right.anticommutes(obs) {
                let (c, k) = g.mul_phase(&t.right)?;
                t.right = c;
                t.alpha *= i_pow(k);
            }
            t.alpha *= 0.5;
        }
        self.tableau.measure_forced(obs, outcome)?;
        self.terms = merge_terms(std::mem::take(&mut self.terms));
        let result = self.renormalize(old_terms, Some(old_tableau));
        if result.is_err() {
            self.channels = old_channels;
        }
        result
    }

    /// Post-selects `outcome` of an observable in the stabilizer group.
    pub fn measure_deterministic(&mut self, obs: &PauliString, outcome: i8) -> Result<f64> {
        check_size(self.num_qubits(), obs)?;
        let s = match self.tableau.classify(obs)? {
            MeasurementKind::Deterministic(s) => s,
            MeasurementKind::Random(_) => return Err(Error::RandomMeasurement(obs.to_string())),
        };
        let mask = self.flip_mask(obs);
        let mut next = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            let bp = t.left.anticommutes(obs);
            if bp != t.right.anticommutes(obs) {
                continue;
            }
            let a = (outcome * s) as f64 * if bp { -1.0 } else { 1.0 };
            next.push(GeneralTerm { alpha: t.alpha * 0.5, ..t.clone() });
            let mut overlay = t.overlay.clone();
            overlay.xor_with(&mask);
            next.push(GeneralTerm { alpha: t.alpha * (0.5 * a), left: t.left.clone(), right: t.right.clone(), overlay });
        }
        let next = merge_terms(next);
        if next.len() > self.budget {
            return Err(Error::BudgetExceeded { needed: next.len(), cap: self.budget });
        }
        let old = std::mem::replace(&mut self.terms, next);
        self.renormalize(old, None)
    }

    /// Unrecorded measurement of a stabilizer-group observable: `(rho + B rho B) / 2`.
    pub fn dephase(&mut self, obs: &PauliString) -> Result<()> {
        check_size(self.num_qubits(), obs)?;
        if let MeasurementKind::Random(_) = self.tableau.classify(obs)? {
            return Err(Error::RandomMeasurement(obs.to_string()));
        }
        self.terms.retain(|t| t.left.anticommutes(obs) == t.right.anticommutes(obs));
        Ok(())
    }

    /// Discards the factorized qubit `v`, contracting `<s_v| Q_v P_v |s_v>` into each coefficient.
    pub fn trace_out(&mut self, v: usize) -> Result<()> {
        check_index(v, self.num_qubits())?;
        let f = self.tableau.factor_qubit(v).ok_or(Error::NotFactorizable(v))?;
        let fv = f.restrict(&[v])?;
        let tableau = self.tableau.trace_out(v)?;
        for t in &mut self.terms {
            let (pv, qv) = (t.left.restrict(&[v])?, t.right.restrict(&[v])?);
            let (c, k) = qv.mul_phase(&pv)?;
            let val = if c.is_identity() {
                i_pow(k)
            } else if c.same_bits(&fv) {
                i_pow(k) * fv.sign() as f64
            } else {
                C::new(0.0, 0.0)
            };
            t.alpha *= val;
            t.left = t.left.remove_qubit(v);
            t.right = t.right.remove_qubit(v);
        }
        self.tableau = tableau;
        for ch in &mut self.channels {
            ch.trace_out(v, false);
        }
        self.terms = merge_terms(std::mem::take(&mut self.terms));
        Ok(())
    }
}

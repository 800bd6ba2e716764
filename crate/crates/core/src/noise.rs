//! Pauli-diagonal noise channels `E(rho) = sum_j lambda_j N_j rho N_j` and their updates.
//!
//! Kraus operators are stored unsigned (the sign of `N_j` cancels in `N_j rho N_j`). Each
//! term carries a separate sign flag so that non-physical channels produced by
//! deterministic-measurement updates keep their weights symbolic and sign-free.

use std::fmt;

use crate::error::{check_index, Error, Result};
use crate::gate::Gate;
use crate::param::{signed_sum, Assignment, Factor, Weight};
use crate::pauli::PauliString;
use crate::tableau::StabilizerTableau;

const SUM_TOLERANCE: f64 = 1e-12;

/// `[0, 1]` up to the round-off that merging terms can introduce.
fn in_unit_range(v: f64) -> bool {
    (-SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTerm {
    pub weight: Weight,
    pub negative: bool,
    pub op: PauliString,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannel {
    n: usize,
    terms: Vec<ChannelTerm>,
    pub label: String,
}

/// `(neg_a) a + (neg_b) b`, keeping the first operand's sign flag.
fn signed_add(a: (bool, &Weight), b: (bool, &Weight)) -> (bool, Weight) {
    if a.0 == b.0 {
        (a.0, a.1 + b.1)
    } else {
        (a.0, a.1 - b.1)
    }
}

fn product_bits(a: &PauliString, b: &PauliString) -> PauliString {
    let mut p = a.unsigned();
    p.mul_bits_assign(b);
    p
}

impl NoiseChannel {
    /// Validated construction: numeric weights in `[0, 1]` summing to 1, duplicate ops merged.
    pub fn new(n: usize, terms: Vec<(Weight, PauliString)>, label: &str) -> Result<Self> {
        let mut sum = 0.0;
        let mut all_numeric = true;
        for (w, op) in &terms {
            if op.num_qubits() != n {
                return Err(Error::Dimension { expected: n, actual: op.num_qubits() });
            }
            match w.as_num() {
                Some(v) if !in_unit_range(v) => return Err(Error::InvalidWeight(v)),
                Some(v) => sum += v,
                None => all_numeric = false,
            }
        }
        if all_numeric && (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotTracePreserving(sum));
        }
        let mut ch = Self { n, terms: Vec::new(), label: label.to_string() };
        for (w, op) in terms {
            ch.push_merged(false, w, op.unsigned());
        }
        Ok(ch)
    }

    /// Construction without physicality checks, duplicates kept as given.
    pub fn from_terms_unchecked(n: usize, terms: Vec<ChannelTerm>, label: &str) -> Self {
        Self { n, terms, label: label.to_string() }
    }

    fn push_merged(&mut self, negative: bool, weight: Weight, op: PauliString) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.op == op) {
            let (neg, w) = signed_add((t.negative, &t.weight), (negative, &weight));
            t.negative = neg;
            t.weight = w;
        } else {
            self.terms.push(ChannelTerm { weight, negative, op });
        }
    }

    fn check_weight(p: &Weight) -> Result<()> {
        match p.as_num() {
            Some(v) if !in_unit_range(v) => Err(Error::InvalidWeight(v)),
            _ => Ok(()),
        }
    }

    pub fn depolarizing1(q: usize, p: Weight, n: usize) -> Result<Self> {
        check_index(q, n)?;
        Self::check_weight(&p)?;
        let third = &p / &Weight::Num(3.0);
        let mut terms = vec![(Weight::Num(1.0) - p.clone(), PauliString::identity(n))];
        for c in ['X', 'Y', 'Z'] {
            terms.push((third.clone(), PauliString::single(n, q, c)?));
        }
        Self::new(n, terms, "DEPOL1")
    }

    pub fn depolarizing2(a: usize, b: usize, p: Weight, n: usize) -> Result<Self> {
        check_index(a, n)?;
        check_index(b, n)?;
        if a == b {
            return Err(Error::RepeatedQubit(a));
        }
        Self::check_weight(&p)?;
        let fifteenth = &p / &Weight::Num(15.0);
        let letters = ['I', 'X', 'Y', 'Z'];
        let mut terms = Vec::with_capacity(16);
        for la in letters {
            for lb in letters {
                let mut op = PauliString::identity(n);
                op.set_letter(a, la)?;
                op.set_letter(b, lb)?;
                let w = if op.is_identity() { Weight::Num(1.0) - p.clone() } else { fifteenth.clone() };
                terms.push((w, op));
            }
        }
        Self::new(n, terms, "DEPOL2")
    }

    pub fn correlated(op: PauliString, p: Weight) -> Result<Self> {
        if op.is_identity() {
            return Err(Error::IdentityObservable);
        }
        Self::check_weight(&p)?;
        let n = op.num_qubits();
        Self::new(n, vec![(Weight::Num(1.0) - p.clone(), PauliString::identity(n)), (p, op)], "CORR")
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[ChannelTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_numeric(&self) -> bool {
        self.terms.iter().all(|t| t.weight.is_numeric())
    }

    /// All weights numeric and nonnegative with positive sign flags.
    pub fn is_physical(&self) -> bool {
        self.terms.iter().all(|t| !t.negative && t.weight.as_num().is_some_and(|v| v >= 0.0))
    }

    pub fn instantiate(&self, a: &Assignment) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| Ok(ChannelTerm { weight: t.weight.instantiate(a)?, negative: t.negative, op: t.op.clone() }))
            .collect::<Result<_>>()?;
        Ok(Self { n: self.n, terms, label: self.label.clone() })
    }

    /// Removes numeric terms with `|w| <= epsilon`. Channels with any symbolic weight are left alone.
    pub fn prune_zeros(&mut self, epsilon: f64) {
        if !self.is_numeric() {
            return;
        }
        self.terms.retain(|t| t.weight.as_num().unwrap().abs() > epsilon);
    }

    pub fn conjugate(&mut self, gate: &Gate) {
        for t in &mut self.terms {
            t.op.conjugate(gate);
            t.op.set_negative(false);
        }
    }

    /// Indices of terms anticommuting with `observable`.
    pub fn anticommuting_terms(&self, observable: &PauliString) -> Vec<usize> {
        (0..self.terms.len()).filter(|&j| self.terms[j].op.anticommutes(observable)).collect()
    }

    /// Multiplies every term anticommuting with `observable` by `inserted`. Returns the indices touched.
    pub fn absorb_random_measurement(&mut self, observable: &PauliString, inserted: &PauliString) -> Result<Vec<usize>> {
        if !inserted.anticommutes(observable) {
            return Err(Error::InsertionCommutes);
        }
        let touched = self.anticommuting_terms(observable);
        for &j in &touched {
            self.terms[j].op = product_bits(&self.terms[j].op, inserted);
        }
        Ok(touched)
    }

    /// Merges terms with identical ops into the first occurrence.
    pub fn merge_duplicates(&mut self) {
        for t in std::mem::take(&mut self.terms) {
            self.push_merged(t.negative, t.weight, t.op);
        }
    }

    /// Merges terms whose ops differ by a stabilizer of `t`; the earlier term's op is kept.
    pub fn reduce_terms(&mut self, t: &StabilizerTableau) {
        let mut kept: Vec<ChannelTerm> = Vec::with_capacity(self.terms.len());
        for term in std::mem::take(&mut self.terms) {
            let hit = kept.iter_mut().find(|k| t.is_member(&product_bits(&k.op, &term.op)).is_some());
            match hit {
                Some(k) => {
                    let (neg, w) = signed_add((k.negative, &k.weight), (term.negative, &term.weight));
                    k.negative = neg;
                    k.weight = w;
                }
                None => kept.push(term),
            }
        }
        self.terms = kept;
    }

    /// Composes `a` and `b` when the products of their terms fall into the stabilizer classes of
    /// one side. The result uses that side's ops; weights are convolved.
    pub fn try_merge(a: &Self, b: &Self, t: &StabilizerTableau) -> Option<Self> {
        if a.n != b.n || a.n != t.num_qubits() {
            return None;
        }
        for side in [a, b] {
            let mut reps = side.clone();
            reps.reduce_terms(t);
            let mut acc: Vec<Option<(bool, Weight)>> = vec![None; reps.terms.len()];
            let mut closed = true;
            'outer: for ta in &a.terms {
                for tb in &b.terms {
                    let prod = product_bits(&ta.op, &tb.op);
                    let Some(k) = reps.terms.iter().position(|r| t.is_member(&product_bits(&r.op, &prod)).is_some())
                    else {
                        closed = false;
                        break 'outer;
                    };
                    let contrib = (ta.negative ^ tb.negative, &ta.weight * &tb.weight);
                    acc[k] = Some(match acc[k].take() {
                        None => contrib,
                        Some(cur) => signed_add((cur.0, &cur.1), (contrib.0, &contrib.1)),
                    });
                }
            }
            if closed {
                let terms = reps
                    .terms
                    .iter()
                    .zip(acc)
                    .filter_map(|(r, w)| w.map(|(negative, weight)| ChannelTerm { weight, negative, op: r.op.clone() }))
                    .collect();
                return Some(Self { n: a.n, terms, label: format!("{}*{}", a.label, b.label) });
            }
        }
        None
    }

    /// Removes qubit `v` from every op. With `merge`, ops that become equal are combined.
    pub fn trace_out(&mut self, v: usize, merge: bool) {
        let old = std::mem::take(&mut self.terms);
        self.n -= 1;
        for t in old {
            let op = t.op.remove_qubit(v);
            if merge {
                self.push_merged(t.negative, t.weight, op);
            } else {
                self.terms.push(ChannelTerm { weight: t.weight, negative: t.negative, op });
            }
        }
    }

    /// Heisenberg factor `sum_j s_j lambda_j (-1)^[[N_j, obs]]` as a symbolic sum.
    pub fn heisenberg_factor(&self, obs: &PauliString) -> Factor {
        self.heisenberg_factor_with(obs, |_| false)
    }

    /// As [`heisenberg_factor`](Self::heisenberg_factor) with extra per-term sign flips.
    pub fn heisenberg_factor_with(&self, obs: &PauliString, flip: impl Fn(usize) -> bool) -> Factor {
        Factor {
            terms: self
                .terms
                .iter()
                .enumerate()
                .map(|(j, t)| (t.negative ^ flip(j) ^ t.op.anticommutes(obs), t.weight.clone()))
                .collect(),
        }
    }

    /// Numeric Heisenberg factor. Panics on symbolic weights.
    pub fn heisenberg_value(&self, obs: &PauliString) -> f64 {
        self.heisenberg_value_with(obs, |_| false)
    }

    pub fn heisenberg_value_with(&self, obs: &PauliString, flip: impl Fn(usize) -> bool) -> f64 {
        signed_sum(self.terms.iter().enumerate().map(|(j, t)| {
            let v = t.weight.as_num().expect("numeric channel");
            (t.negative ^ flip(j) ^ t.op.anticommutes(obs), v)
        }))
    }

    /// Signed weight sum `sum_j s_j lambda_j`, i.e. the trace factor.
    pub fn trace_value_with(&self, flip: impl Fn(usize) -> bool) -> f64 {
        signed_sum(self.terms.iter().enumerate().map(|(j, t)| (t.negative ^ flip(j), t.weight.as_num().expect("numeric channel"))))
    }
}

impl fmt::Display for NoiseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.label)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let sign = if t.negative { "-" } else { "" };
            let op = t.op.to_string();
            write!(f, "{sign}{}: {}", t.weight, &op[1..])?;
        }
        f.write_str("}")
    }
}

//! Destabilizer-augmented stabilizer tableau for the pure reference state.
//!
//! Rows `0..n` hold the destabilizers `d_i`, rows `n..2n` the stabilizers `g_i`, with
//! `[[d_i, g_j]] = delta_ij`. X bits, Z bits and signs live in separate packed planes.

use std::fmt;

use rand::Rng;

use crate::bits::{self, words_for};
use crate::error::{check_index, Error, Result};
use crate::f2::F2Matrix;
use crate::gate::Gate;
use crate::pauli::{phase_word, PauliString};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    w: usize,
    xs: Vec<u64>,
    zs: Vec<u64>,
    signs: Vec<u64>,
}

/// Outcome class of a Pauli measurement on the reference state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    /// The observable (up to sign) is in the stabilizer group; the outcome is fixed.
    Deterministic(i8),
    /// Lowest-index stabilizer generator anticommuting with the observable.
    Random(usize),
}

impl StabilizerTableau {
    /// |0...0>: stabilizers `Z_i`, destabilizers `X_i`.
    pub fn new_computational(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyRegister);
        }
        let w = words_for(n);
        let mut t = Self { n, w, xs: vec![0; 2 * n * w], zs: vec![0; 2 * n * w], signs: vec![0; words_for(2 * n)] };
        for i in 0..n {
            bits::set(t.row_x_mut(i), i, true);
            bits::set(t.row_z_mut(n + i), i, true);
        }
        Ok(t)
    }

    /// Builds a tableau from explicit destabilizer and stabilizer rows, validating all invariants.
    pub fn from_rows(destabilizers: &[PauliString], stabilizers: &[PauliString]) -> Result<Self> {
        let n = stabilizers.len();
        if n == 0 {
            return Err(Error::EmptyRegister);
        }
        if destabilizers.len() != n {
            return Err(Error::InvalidStabilizers(format!("{} destabilizers for {} stabilizers", destabilizers.len(), n)));
        }
        let w = words_for(n);
        let mut t = Self { n, w, xs: vec![0; 2 * n * w], zs: vec![0; 2 * n * w], signs: vec![0; words_for(2 * n)] };
        for (r, p) in destabilizers.iter().chain(stabilizers).enumerate() {
            if p.num_qubits() != n {
                return Err(Error::Dimension { expected: n, actual: p.num_qubits() });
            }
            t.set_row(r, p);
        }
        t.check_invariants()?;
        Ok(t)
    }

    /// Builds a tableau for the state stabilized by `stabilizers`, completing the
    /// destabilizers by solving for symplectic partners.
    pub fn from_stabilizers(stabilizers: &[PauliString]) -> Result<Self> {
        let n = stabilizers.len();
        if n == 0 {
            return Err(Error::EmptyRegister);
        }
        for g in stabilizers {
            if g.num_qubits() != n {
                return Err(Error::Dimension { expected: n, actual: g.num_qubits() });
            }
        }
        for (i, a) in stabilizers.iter().enumerate() {
            for b in &stabilizers[i + 1..] {
                if a.anticommutes(b) {
                    return Err(Error::InvalidStabilizers(format!("{a} and {b} anticommute")));
                }
            }
        }
        // row i = (g_i.z | g_i.x) so that row . (h.x | h.z) is the symplectic product
        let mut m = F2Matrix::zeros(0, 2 * n);
        for g in stabilizers {
            let mut row = vec![0u64; words_for(2 * n)];
            for q in 0..n {
                bits::set(&mut row, q, g.z_bit(q));
                bits::set(&mut row, n + q, g.x_bit(q));
            }
            m.push_row(row);
        }
        if m.rank() != n {
            return Err(Error::InvalidStabilizers("generators are not independent".into()));
        }
        let mut partners: Vec<PauliString> = Vec::with_capacity(n);
        for i in 0..n {
            let rhs: Vec<bool> = (0..n).map(|j| j == i).collect();
            let h = m.solve(&rhs).expect("independent rows admit symplectic partners");
            let mut d = PauliString::identity(n);
            for q in 0..n {
                if bits::get(&h, q) {
                    d.set_letter(q, 'X').unwrap();
                }
            }
            let mut z = PauliString::identity(n);
            for q in 0..n {
                if bits::get(&h, n + q) {
                    z.set_letter(q, 'Z').unwrap();
                }
            }
            d.mul_bits_assign(&z);
            partners.push(d);
        }
        for j in 0..n {
            for i in 0..j {
                if partners[i].anticommutes(&partners[j]) {
                    let g = stabilizers[i].clone();
                    partners[j].mul_bits_assign(&g);
                }
            }
        }
        let partners: Vec<PauliString> = partners.into_iter().map(|p| p.unsigned()).collect();
        Self::from_rows(&partners, stabilizers)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    #[inline]
    fn row_x(&self, r: usize) -> &[u64] {
        &self.xs[r * self.w..(r + 1) * self.w]
    }

    #[inline]
    fn row_z(&self, r: usize) -> &[u64] {
        &self.zs[r * self.w..(r + 1) * self.w]
    }

    #[inline]
    fn row_x_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.xs[r * self.w..(r + 1) * self.w]
    }

    #[inline]
    fn row_z_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.zs[r * self.w..(r + 1) * self.w]
    }

    #[inline]
    fn row_neg(&self, r: usize) -> bool {
        bits::get(&self.signs, r)
    }

    fn set_row(&mut self, r: usize, p: &PauliString) {
        self.row_x_mut(r).copy_from_slice(p.x_words());
        self.row_z_mut(r).copy_from_slice(p.z_words());
        bits::set(&mut self.signs, r, p.is_negative());
    }

    pub fn row(&self, r: usize) -> PauliString {
        PauliString::from_bits(self.n, self.row_x(r).to_vec(), self.row_z(r).to_vec(), self.row_neg(r))
    }

    pub fn stabilizer(&self, i: usize) -> PauliString {
        self.row(self.n + i)
    }

    pub fn destabilizer(&self, i: usize) -> PauliString {
        self.row(i)
    }

    pub fn stabilizers(&self) -> Vec<PauliString> {
        (0..self.n).map(|i| self.stabilizer(i)).collect()
    }

    pub fn destabilizers(&self) -> Vec<PauliString> {
        (0..self.n).map(|i| self.destabilizer(i)).collect()
    }

    #[inline]
    fn row_anticommutes(&self, r: usize, p: &PauliString) -> bool {
        let (x, z) = (self.row_x(r), self.row_z(r));
        let mut acc = 0u64;
        for k in 0..self.w {
            acc ^= (x[k] & p.z_words()[k]) ^ (z[k] & p.x_words()[k]);
        }
        acc.count_ones() & 1 == 1
    }

    /// row[target] <- row[target] * row[source]; the two rows must commute.
    fn row_mul(&mut self, target: usize, source: usize) {
        let w = self.w;
        let mut k = 2 * (self.row_neg(target) as i32 + self.row_neg(source) as i32);
        for i in 0..w {
            let (tx, tz) = (self.xs[target * w + i], self.zs[target * w + i]);
            let (sx, sz) = (self.xs[source * w + i], self.zs[source * w + i]);
            k += phase_word(tx, tz, sx, sz);
            self.xs[target * w + i] = tx ^ sx;
            self.zs[target * w + i] = tz ^ sz;
        }
        let k = k.rem_euclid(4);
        debug_assert!(k % 2 == 0, "row product of anticommuting rows");
        bits::set(&mut self.signs, target, k == 2);
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n)?;
        let w = self.w;
        for r in 0..2 * self.n {
            let (xs, zs) = (&mut self.xs[r * w..(r + 1) * w], &mut self.zs[r * w..(r + 1) * w]);
            if gate.conjugate_bits(xs, zs) {
                bits::flip(&mut self.signs, r);
            }
        }
        Ok(())
    }

    fn check_observable(&self, p: &PauliString) -> Result<()> {
        if p.num_qubits() != self.n {
            return Err(Error::Dimension { expected: self.n, actual: p.num_qubits() });
        }
        Ok(())
    }

    /// `Some(s)` when `s * p` is in the stabilizer group (so `<p> = s`), `None` otherwise.
    ///
    /// # Panics
    /// On a qubit-count mismatch.
    pub fn is_member(&self, p: &PauliString) -> Option<i8> {
        assert_eq!(p.num_qubits(), self.n, "observable size does not match tableau");
        if (0..self.n).any(|i| self.row_anticommutes(self.n + i, p)) {
            return None;
        }
        let mut acc = PauliString::identity(self.n);
        for i in 0..self.n {
            if self.row_anticommutes(i, p) {
                acc = acc.multiply(&self.stabilizer(i)).expect("stabilizers commute");
            }
        }
        debug_assert!(acc.same_bits(p));
        Some(if acc.is_negative() == p.is_negative() { 1 } else { -1 })
    }

    pub fn classify(&self, p: &PauliString) -> Result<MeasurementKind> {
        self.check_observable(p)?;
        if p.is_identity() {
            return Err(Error::IdentityObservable);
        }
        match (0..self.n).find(|&i| self.row_anticommutes(self.n + i, p)) {
            Some(l) => Ok(MeasurementKind::Random(l)),
            None => Ok(MeasurementKind::Deterministic(self.is_member(p).expect("commutes with all generators"))),
        }
    }

    /// Measures `p`. A random outcome is taken from `forced` if given, otherwise from `rng`.
    /// Returns the outcome and whether it was random.
    pub fn measure<R: Rng + ?Sized>(&mut self, p: &PauliString, forced: Option<i8>, rng: &mut R) -> Result<(i8, bool)> {
        match self.classify(p)? {
            MeasurementKind::Deterministic(s) => match forced {
                Some(f) if f != s => Err(Error::OutcomeContradiction { forced: f, actual: s }),
                _ => Ok((s, false)),
            },
            MeasurementKind::Random(l) => {
                let outcome = forced.unwrap_or_else(|| if rng.random_bool(0.5) { 1 } else { -1 });
                self.collapse(l, p, outcome);
                Ok((outcome, true))
            }
        }
    }

    /// Measurement with a caller-chosen outcome; no randomness is consumed.
    pub fn measure_forced(&mut self, p: &PauliString, outcome: i8) -> Result<(i8, bool)> {
        match self.classify(p)? {
            MeasurementKind::Deterministic(s) if s != outcome => {
                Err(Error::OutcomeContradiction { forced: outcome, actual: s })
            }
            MeasurementKind::Deterministic(s) => Ok((s, false)),
            MeasurementKind::Random(l) => {
                self.collapse(l, p, outcome);
                Ok((outcome, true))
            }
        }
    }

    fn collapse(&mut self, l: usize, p: &PauliString, outcome: i8) {
        let n = self.n;
        let pivot = n + l;
        for r in 0..2 * n {
            if r != pivot && r != l && self.row_anticommutes(r, p) {
                self.row_mul(r, pivot);
            }
        }
        let old = self.row(pivot);
        self.set_row(l, &old);
        let new = p.clone().with_sign(p.sign() * outcome);
        self.set_row(pivot, &new);
    }

    /// Single-qubit stabilizer `P in {+-Z_v, +-X_v, +-Y_v}` when the state factorizes at `v`.
    pub fn factor_qubit(&self, v: usize) -> Option<PauliString> {
        if v >= self.n {
            return None;
        }
        ['Z', 'X', 'Y'].into_iter().find_map(|c| {
            let p = PauliString::single(self.n, v, c).ok()?;
            self.is_member(&p).map(|s| p.with_sign(s))
        })
    }

    /// Removes a factorized qubit, returning the tableau of the remaining `n - 1` qubits.
    pub fn trace_out(&self, v: usize) -> Result<StabilizerTableau> {
        check_index(v, self.n)?;
        if self.factor_qubit(v).is_none() {
            return Err(Error::NotFactorizable(v));
        }
        if self.n == 1 {
            return Err(Error::EmptyRegister);
        }
        let mut gens = self.stabilizers();
        let touches = |g: &PauliString| g.x_bit(v) || g.z_bit(v);
        let j = gens.iter().position(touches).expect("a factorized qubit carries a generator");
        let pivot = gens[j].clone();
        for (i, g) in gens.iter_mut().enumerate() {
            if i != j && touches(g) {
                *g = g.multiply(&pivot)?;
            }
        }
        gens.remove(j);
        let reduced: Vec<PauliString> = gens.iter().map(|g| g.remove_qubit(v)).collect();
        Self::from_stabilizers(&reduced)
    }

    /// Coordinates of `p` in the destabilizer/stabilizer basis:
    /// `p ~ prod d_i^alpha_i prod g_i^beta_i` with `alpha_i = [[p, g_i]]`, `beta_i = [[p, d_i]]`.
    pub fn decompose(&self, p: &PauliString) -> (Vec<u64>, Vec<u64>) {
        let mut alpha = vec![0u64; self.w];
        let mut beta = vec![0u64; self.w];
        for i in 0..self.n {
            bits::set(&mut alpha, i, self.row_anticommutes(self.n + i, p));
            bits::set(&mut beta, i, self.row_anticommutes(i, p));
        }
        (alpha, beta)
    }

    /// Checks pairwise commutation, the destabilizer pairing and full rank.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        let rows: Vec<PauliString> = (0..2 * n).map(|r| self.row(r)).collect();
        for i in 0..n {
            for j in 0..n {
                if i < j && rows[n + i].anticommutes(&rows[n + j]) {
                    return Err(Error::InvalidStabilizers(format!("stabilizers {i} and {j} anticommute")));
                }
                if i < j && rows[i].anticommutes(&rows[j]) {
                    return Err(Error::InvalidStabilizers(format!("destabilizers {i} and {j} anticommute")));
                }
                if rows[i].anticommutes(&rows[n + j]) != (i == j) {
                    return Err(Error::InvalidStabilizers(format!("pairing broken at ({i}, {j})")));
                }
            }
        }
        // the pairing already forces independence; the rank check guards the construction
        let m = F2Matrix::from_rows(
            2 * n,
            rows.iter()
                .map(|p| {
                    let mut row = vec![0u64; words_for(2 * n)];
                    for q in 0..n {
                        bits::set(&mut row, q, p.x_bit(q));
                        bits::set(&mut row, n + q, p.z_bit(q));
                    }
                    row
                })
                .collect(),
        );
        if m.rank() != 2 * n {
            return Err(Error::InvalidStabilizers("rows are not independent".into()));
        }
        Ok(())
    }

    /// True when both tableaus stabilize the same state (generators may differ).
    pub fn same_state(&self, other: &Self) -> bool {
        self.n == other.n && other.stabilizers().iter().all(|g| self.is_member(g) == Some(1))
    }

    /// One row per line, destabilizers first, separated by `---`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in 0..self.n {
            s.push_str(&self.row(r).to_string());
            s.push('\n');
        }
        s.push_str("---\n");
        for r in self.n..2 * self.n {
            s.push_str(&self.row(r).to_string());
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for StabilizerTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

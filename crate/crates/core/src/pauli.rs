//! Signed Hermitian n-qubit Pauli operators in packed symplectic form.
//!
//! A `PauliString` with bits `(x, z)` and sign bit `s` represents the operator
//! `(-1)^s * prod_j i^(x_j z_j) X^(x_j) Z^(z_j)`, so `Y = iXZ` and every stored
//! operator is Hermitian. Qubit 0 is the leftmost character of the textual form.

use std::fmt;
use std::str::FromStr;

use crate::bits::{self, words_for};
use crate::error::{check_index, Error, Result};
use crate::gate::Gate;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    neg: bool,
}

/// Per-word contribution to the power of `i` picked up by a product of canonical Paulis.
#[inline]
pub(crate) fn phase_word(ax: u64, az: u64, bx: u64, bz: u64) -> i32 {
    let (a_x, a_y, a_z) = (ax & !az, ax & az, !ax & az);
    let (b_x, b_y, b_z) = (bx & !bz, bx & bz, !bx & bz);
    let plus = (a_x & b_y) | (a_y & b_z) | (a_z & b_x);
    let minus = (a_x & b_z) | (a_y & b_x) | (a_z & b_y);
    plus.count_ones() as i32 - minus.count_ones() as i32
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        let w = words_for(n);
        Self { n, x: vec![0; w], z: vec![0; w], neg: false }
    }

    pub fn from_bits(n: usize, x: Vec<u64>, z: Vec<u64>, negative: bool) -> Self {
        debug_assert_eq!(x.len(), words_for(n));
        debug_assert_eq!(z.len(), words_for(n));
        Self { n, x, z, neg: negative }
    }

    /// Single-qubit Pauli `letter` in {I, X, Y, Z} acting on `q`.
    pub fn single(n: usize, q: usize, letter: char) -> Result<Self> {
        check_index(q, n)?;
        let mut p = Self::identity(n);
        p.set_letter(q, letter)?;
        Ok(p)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn x_bit(&self, q: usize) -> bool {
        bits::get(&self.x, q)
    }

    pub fn z_bit(&self, q: usize) -> bool {
        bits::get(&self.z, q)
    }

    pub fn is_negative(&self) -> bool {
        self.neg
    }

    /// +1 or -1.
    pub fn sign(&self) -> i8 {
        if self.neg {
            -1
        } else {
            1
        }
    }

    pub fn set_negative(&mut self, negative: bool) {
        self.neg = negative;
    }

    pub fn negated(mut self) -> Self {
        self.neg = !self.neg;
        self
    }

    pub fn with_sign(mut self, sign: i8) -> Self {
        self.neg = sign < 0;
        self
    }

    /// Copy with the sign reset to +1.
    pub fn unsigned(&self) -> Self {
        Self { neg: false, ..self.clone() }
    }

    pub fn letter(&self, q: usize) -> char {
        match (self.x_bit(q), self.z_bit(q)) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        }
    }

    pub fn set_letter(&mut self, q: usize, letter: char) -> Result<()> {
        let (x, z) = match letter {
            'I' => (false, false),
            'X' => (true, false),
            'Y' => (true, true),
            'Z' => (false, true),
            other => return Err(Error::InvalidPauli(other.to_string())),
        };
        bits::set(&mut self.x, q, x);
        bits::set(&mut self.z, q, z);
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        bits::is_zero(&self.x) && bits::is_zero(&self.z)
    }

    /// Equal up to sign.
    pub fn same_bits(&self, other: &Self) -> bool {
        self.n == other.n && self.x == other.x && self.z == other.z
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n, actual: other.n })
        }
    }

    /// Symplectic product: true iff the two operators anticommute. Signs are ignored.
    #[inline]
    pub fn anticommutes(&self, other: &Self) -> bool {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0u64;
        for k in 0..self.x.len() {
            acc ^= (self.x[k] & other.z[k]) ^ (self.z[k] & other.x[k]);
        }
        acc.count_ones() & 1 == 1
    }

    /// Checked form of [`anticommutes`](Self::anticommutes), returning the bit `[[a, b]]`.
    pub fn commutator_bit(&self, other: &Self) -> Result<u8> {
        self.check_dim(other)?;
        Ok(self.anticommutes(other) as u8)
    }

    /// Full operator product `self * other = i^k * c` with `c` positive canonical.
    /// Returns `(c, k mod 4)`.
    pub fn mul_phase(&self, other: &Self) -> Result<(Self, u8)> {
        self.check_dim(other)?;
        let mut k: i32 = 2 * (self.neg as i32 + other.neg as i32);
        let mut x = self.x.clone();
        let mut z = self.z.clone();
        for w in 0..x.len() {
            k += phase_word(self.x[w], self.z[w], other.x[w], other.z[w]);
            x[w] ^= other.x[w];
            z[w] ^= other.z[w];
        }
        Ok((Self { n: self.n, x, z, neg: false }, k.rem_euclid(4) as u8))
    }

    /// Hermitian product. Fails when the factors anticommute (the product carries +-i).
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let (mut c, k) = self.mul_phase(other)?;
        match k {
            0 => Ok(c),
            2 => {
                c.neg = true;
                Ok(c)
            }
            _ => Err(Error::NonHermitian),
        }
    }

    /// In-place product ignoring phase: only the bits change. Used for Kraus operators,
    /// where `N rho N` is insensitive to the phase of `N`.
    pub fn mul_bits_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        bits::xor_into(&mut self.x, &other.x);
        bits::xor_into(&mut self.z, &other.z);
    }

    pub fn support(&self) -> Vec<usize> {
        let any: Vec<u64> = self.x.iter().zip(&self.z).map(|(a, b)| a | b).collect();
        bits::ones(&any).collect()
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    /// Operator on `keep.len()` qubits built from the listed positions, sign preserved.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let mut out = Self::identity(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            check_index(old, self.n)?;
            bits::set(&mut out.x, new, self.x_bit(old));
            bits::set(&mut out.z, new, self.z_bit(old));
        }
        out.neg = self.neg;
        Ok(out)
    }

    /// Drops qubit `v`, shifting higher qubits down by one.
    pub fn remove_qubit(&self, v: usize) -> Self {
        let keep: Vec<usize> = (0..self.n).filter(|&q| q != v).collect();
        self.restrict(&keep).expect("indices in range")
    }

    /// Places this operator onto `positions` of an `n`-qubit register.
    pub fn embed(&self, n: usize, positions: &[usize]) -> Result<Self> {
        if positions.len() != self.n {
            return Err(Error::Dimension { expected: self.n, actual: positions.len() });
        }
        let mut out = Self::identity(n);
        for (local, &q) in positions.iter().enumerate() {
            check_index(q, n)?;
            bits::set(&mut out.x, q, self.x_bit(local));
            bits::set(&mut out.z, q, self.z_bit(local));
        }
        out.neg = self.neg;
        Ok(out)
    }

    pub fn conjugate(&mut self, gate: &Gate) {
        if gate.conjugate_bits(&mut self.x, &mut self.z) {
            self.neg = !self.neg;
        }
    }

    pub fn conjugated(mut self, gate: &Gate) -> Self {
        self.conjugate(gate);
        self
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (neg, body) = match s.as_bytes().first() {
            Some(b'+') => (false, &s[1..]),
            Some(b'-') => (true, &s[1..]),
            _ => (false, s),
        };
        let n = body.chars().count();
        let mut p = Self::identity(n);
        for (q, c) in body.chars().enumerate() {
            p.set_letter(q, c).map_err(|_| Error::InvalidPauli(s.to_string()))?;
        }
        p.neg = neg;
        Ok(p)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.neg { "-" } else { "+" })?;
        for q in 0..self.n {
            write!(f, "{}", self.letter(q))?;
        }
        Ok(())
    }
}

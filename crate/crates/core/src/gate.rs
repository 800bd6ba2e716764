//! Clifford gate descriptors and their action on symplectic (x|z) rows.

use std::fmt;

use crate::bits;
use crate::error::{check_index, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cnot(usize, usize),
    Cz(usize, usize),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::S(q) | Gate::Sdg(q) | Gate::X(q) | Gate::Y(q) | Gate::Z(q) => vec![q],
            Gate::Cnot(a, b) | Gate::Cz(a, b) => vec![a, b],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cnot(..) | Gate::Cz(..))
    }

    pub fn is_pauli(&self) -> bool {
        matches!(self, Gate::X(_) | Gate::Y(_) | Gate::Z(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "H",
            Gate::S(_) => "S",
            Gate::Sdg(_) => "SDG",
            Gate::X(_) => "X",
            Gate::Y(_) => "Y",
            Gate::Z(_) => "Z",
            Gate::Cnot(..) => "CNOT",
            Gate::Cz(..) => "CZ",
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        for &q in &qs {
            check_index(q, n)?;
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::RepeatedQubit(qs[0]));
        }
        Ok(())
    }

    /// Same gate with qubit indices passed through `map`.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::H(q) => Gate::H(map(q)),
            Gate::S(q) => Gate::S(map(q)),
            Gate::Sdg(q) => Gate::Sdg(map(q)),
            Gate::X(q) => Gate::X(map(q)),
            Gate::Y(q) => Gate::Y(map(q)),
            Gate::Z(q) => Gate::Z(map(q)),
            Gate::Cnot(a, b) => Gate::Cnot(map(a), map(b)),
            Gate::Cz(a, b) => Gate::Cz(map(a), map(b)),
        }
    }

    /// Conjugates the Hermitian Pauli with bits `x`, `z` in place (P -> C P C^dagger).
    /// Returns true when the canonical sign flips.
    #[inline]
    pub fn conjugate_bits(&self, x: &mut [u64], z: &mut [u64]) -> bool {
        let g = |w: &[u64], q: usize| bits::get(w, q);
        match *self {
            Gate::H(q) => {
                let (xq, zq) = (g(x, q), g(z, q));
                bits::set(x, q, zq);
                bits::set(z, q, xq);
                xq && zq
            }
            Gate::S(q) => {
                let (xq, zq) = (g(x, q), g(z, q));
                bits::set(z, q, zq ^ xq);
                xq && zq
            }
            Gate::Sdg(q) => {
                let (xq, zq) = (g(x, q), g(z, q));
                bits::set(z, q, zq ^ xq);
                xq && !zq
            }
            Gate::X(q) => g(z, q),
            Gate::Z(q) => g(x, q),
            Gate::Y(q) => g(x, q) ^ g(z, q),
            Gate::Cnot(c, t) => {
                let (xc, zc, xt, zt) = (g(x, c), g(z, c), g(x, t), g(z, t));
                bits::set(x, t, xt ^ xc);
                bits::set(z, c, zc ^ zt);
                xc && zt && !(xt ^ zc)
            }
            Gate::Cz(a, b) => {
                let (xa, za, xb, zb) = (g(x, a), g(z, a), g(x, b), g(z, b));
                bits::set(z, a, za ^ xb);
                bits::set(z, b, zb ^ xa);
                xa && xb && (za ^ zb)
            }
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        Ok(())
    }
}

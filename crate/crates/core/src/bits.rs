//! Word-packed bit vector helpers shared by the Pauli, tableau and F2 kernels.

pub const WORD: usize = 64;

#[inline]
pub fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

#[inline]
pub fn get(words: &[u64], i: usize) -> bool {
    (words[i / WORD] >> (i % WORD)) & 1 == 1
}

#[inline]
pub fn set(words: &mut [u64], i: usize, value: bool) {
    let mask = 1u64 << (i % WORD);
    if value {
        words[i / WORD] |= mask;
    } else {
        words[i / WORD] &= !mask;
    }
}

#[inline]
pub fn flip(words: &mut [u64], i: usize) {
    words[i / WORD] ^= 1u64 << (i % WORD);
}

#[inline]
pub fn xor_into(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Parity of the AND of two bit vectors.
#[inline]
pub fn dot(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).fold(0u32, |acc, (x, y)| acc ^ (x & y).count_ones()) & 1 == 1
}

#[inline]
pub fn is_zero(words: &[u64]) -> bool {
    words.iter().all(|&w| w == 0)
}

pub fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(k, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(k * WORD + bit)
            }
        })
    })
}

/// Growable bit set, used for per-branch sign overlays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitSet {
    len: usize,
    words: Vec<u64>,
}

impl BitSet {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; words_for(len)] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        get(&self.words, i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        set(&mut self.words, i, value)
    }

    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        flip(&mut self.words, i)
    }

    pub fn resize(&mut self, len: usize) {
        self.words.resize(words_for(len), 0);
        if len < self.len {
            // clear the tail so equality stays bitwise
            for i in len..self.words.len() * WORD {
                set(&mut self.words, i, false);
            }
        }
        self.len = len;
    }

    pub fn xor_with(&mut self, other: &BitSet) {
        debug_assert_eq!(self.len, other.len);
        xor_into(&mut self.words, &other.words);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

//! Dense linear algebra over F2 on word-packed rows.

use crate::bits::{self, words_for};

/// Row-major binary matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct F2Matrix {
    cols: usize,
    rows: Vec<Vec<u64>>,
}

impl F2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { cols, rows: vec![vec![0; words_for(cols)]; rows] }
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<u64>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == words_for(cols)));
        Self { cols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        bits::get(&self.rows[r], c)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        bits::set(&mut self.rows[r], c, v)
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.rows[r]
    }

    pub fn push_row(&mut self, row: Vec<u64>) {
        debug_assert_eq!(row.len(), words_for(self.cols));
        self.rows.push(row);
    }

    /// In-place reduced row echelon form. Pivot search scans columns left to right and
    /// takes the lowest-index eligible row. Returns the pivot column of each leading row.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in 0..self.cols {
            if next == self.rows.len() {
                break;
            }
            let Some(p) = (next..self.rows.len()).find(|&r| bits::get(&self.rows[r], c)) else {
                continue;
            };
            self.rows.swap(next, p);
            let pivot_row = self.rows[next].clone();
            for r in 0..self.rows.len() {
                if r != next && bits::get(&self.rows[r], c) {
                    bits::xor_into(&mut self.rows[r], &pivot_row);
                }
            }
            pivots.push(c);
            next += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref().len()
    }

    /// Basis of { x : A x = 0 }.
    pub fn kernel(&self) -> Vec<Vec<u64>> {
        let mut m = self.clone();
        let pivots = m.rref();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let w = words_for(self.cols);
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = vec![0u64; w];
                bits::set(&mut v, f, true);
                for (r, &p) in pivots.iter().enumerate() {
                    if bits::get(&m.rows[r], f) {
                        bits::set(&mut v, p, true);
                    }
                }
                v
            })
            .collect()
    }

    /// Some solution of A x = b with all free variables zero, if the system is consistent.
    pub fn solve(&self, b: &[bool]) -> Option<Vec<u64>> {
        assert_eq!(b.len(), self.rows.len());
        let cols = self.cols;
        let mut aug = F2Matrix::zeros(self.rows.len(), cols + 1);
        for (r, row) in self.rows.iter().enumerate() {
            for c in bits::ones(row) {
                aug.set(r, c, true);
            }
            aug.set(r, cols, b[r]);
        }
        let pivots = aug.rref();
        if pivots.last() == Some(&cols) {
            return None;
        }
        let mut x = vec![0u64; words_for(cols)];
        for (r, &p) in pivots.iter().enumerate() {
            if aug.get(r, cols) {
                bits::set(&mut x, p, true);
            }
        }
        Some(x)
    }

    /// The solution of A x = b that is smallest when x is read as a binary number with
    /// bit 0 least significant, i.e. high-index variables are cleared first.
    pub fn solve_min(&self, b: &[bool]) -> Option<Vec<u64>> {
        let mut x = self.solve(b)?;
        let mut basis = self.kernel();
        // reduce the kernel basis so that every vector owns a distinct highest bit
        let highest = |v: &[u64]| bits::ones(v).last();
        let mut reduced: Vec<(usize, Vec<u64>)> = Vec::new();
        while let Some(mut v) = basis.pop() {
            for (h, r) in &reduced {
                if bits::get(&v, *h) {
                    bits::xor_into(&mut v, r);
                }
            }
            if let Some(h) = highest(&v) {
                for (_, r) in reduced.iter_mut() {
                    if bits::get(r, h) {
                        bits::xor_into(r, &v);
                    }
                }
                reduced.push((h, v));
            }
        }
        reduced.sort_by_key(|e| std::cmp::Reverse(e.0));
        for (h, v) in &reduced {
            if bits::get(&x, *h) {
                bits::xor_into(&mut x, v);
            }
        }
        Some(x)
    }
}

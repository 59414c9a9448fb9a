//! Real symmetric affine matrix blocks for PSD constraints.

use crate::expr::LinExpr;

/// Affine symmetric matrix, stored as the upper triangle (column-major).
#[derive(Clone, Debug)]
pub struct SymmetricAffine {
    dim: usize,
    /// entries[idx(i,j)] for i <= j, column-major: (0,0),(0,1),(1,1),(0,2)...
    entries: Vec<LinExpr>,
}

impl SymmetricAffine {
    pub fn new(dim: usize) -> Self {
        let n = dim * (dim + 1) / 2;
        Self {
            dim,
            entries: vec![LinExpr::zero(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j < self.dim);
        j * (j + 1) / 2 + i
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        let k = self.idx(i, j);
        &mut self.entries[k]
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[self.idx(i, j)]
    }

    /// Entries in Clarabel's svec order: upper triangle, column-major,
    /// off-diagonal entries scaled by sqrt(2).
    pub fn svec_exprs(&self) -> Vec<LinExpr> {
        let sq2 = std::f64::consts::SQRT_2;
        let mut out = Vec::with_capacity(self.entries.len());
        for j in 0..self.dim {
            for i in 0..=j {
                let e = &self.entries[j * (j + 1) / 2 + i];
                out.push(if i == j { e.clone() } else { e.scaled(sq2) });
            }
        }
        out
    }

    pub fn compress(&mut self) {
        for e in &mut self.entries {
            e.compress();
        }
    }
}

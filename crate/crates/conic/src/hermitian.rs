//! Complex Hermitian affine matrices and their real symmetric lift.
//!
//! A Hermitian `H = Hr + i*Hi` is PSD iff the real symmetric matrix
//! `[[Hr, -Hi], [Hi, Hr]]` is PSD (its spectrum is that of `H` with
//! doubled multiplicity), so every complex LMI can be handed to a
//! real-only backend.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::sym::SymmetricAffine;

/// `constant + sum_s x_s * coeff_s` with all matrices Hermitian.
#[derive(Clone, Debug)]
pub struct HermitianAffine {
    dim: usize,
    constant: DMatrix<Complex64>,
    terms: Vec<(usize, DMatrix<Complex64>)>,
}

impl HermitianAffine {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_const(&mut self, m: &DMatrix<Complex64>) -> &mut Self {
        debug_assert!(is_hermitian(m, 1e-9));
        self.constant += m;
        self
    }

    /// Add `z` at `(i, j)` and `conj(z)` at `(j, i)`.
    pub fn add_const_entry(&mut self, i: usize, j: usize, z: Complex64) -> &mut Self {
        if i == j {
            debug_assert!(z.im.abs() <= 1e-9 * (1.0 + z.re.abs()));
            self.constant[(i, i)] += Complex64::new(z.re, 0.0);
        } else {
            self.constant[(i, j)] += z;
            self.constant[(j, i)] += z.conj();
        }
        self
    }

    /// Add `x_var * m` with `m` Hermitian.
    pub fn add_term(&mut self, var: usize, m: DMatrix<Complex64>) -> &mut Self {
        debug_assert!(is_hermitian(&m, 1e-9));
        self.terms.push((var, m));
        self
    }

    /// Add `x_var * (z E_ij + conj(z) E_ji)`.
    pub fn add_term_entry(&mut self, var: usize, i: usize, j: usize, z: Complex64) -> &mut Self {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        if i == j {
            m[(i, i)] = Complex64::new(z.re, 0.0);
        } else {
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
        self.terms.push((var, m));
        self
    }

    /// Constant part and per-variable coefficient matrices.
    pub fn parts(&self) -> (&DMatrix<Complex64>, &[(usize, DMatrix<Complex64>)]) {
        (&self.constant, &self.terms)
    }

    /// Evaluate the matrix at a variable assignment.
    pub fn eval(&self, x: &[f64]) -> DMatrix<Complex64> {
        let mut m = self.constant.clone();
        for (var, coeff) in &self.terms {
            m += coeff.scale(x[*var]);
        }
        m
    }

    /// Bordered block `[[Y, Y h], [h^H Y, h^H Y h]]` applied to every
    /// coefficient matrix; used for S-Lemma style LMIs where the same
    /// affine kernel appears in all four positions.
    pub fn bordered(&self, h: &DVector<Complex64>) -> HermitianAffine {
        let map = |y: &DMatrix<Complex64>| -> DMatrix<Complex64> {
            let n = self.dim;
            let yh = y * h;
            let corner = h.dotc(&yh); // h^H (Y h)
            let mut out = DMatrix::zeros(n + 1, n + 1);
            out.view_mut((0, 0), (n, n)).copy_from(y);
            for i in 0..n {
                out[(i, n)] = yh[i];
                out[(n, i)] = yh[i].conj();
            }
            out[(n, n)] = Complex64::new(corner.re, 0.0);
            out
        };
        HermitianAffine {
            dim: self.dim + 1,
            constant: map(&self.constant),
            terms: self.terms.iter().map(|(v, m)| (*v, map(m))).collect(),
        }
    }

    /// Real symmetric lift of dimension `2 dim`.
    pub fn to_symmetric(&self) -> SymmetricAffine {
        let n = self.dim;
        let mut sym = SymmetricAffine::new(2 * n);
        let put = |sym: &mut SymmetricAffine, m: &DMatrix<Complex64>, var: Option<usize>| {
            for j in 0..n {
                for i in 0..=j {
                    let z = m[(i, j)];
                    if z.re != 0.0 {
                        add(sym, i, j, z.re, var);
                        add(sym, n + i, n + j, z.re, var);
                    }
                    if z.im != 0.0 {
                        // upper-right block is -Im(H); entry (i, n+j)
                        add(sym, i, n + j, -z.im, var);
                        if i != j {
                            add(sym, j, n + i, z.im, var);
                        }
                    }
                }
            }
        };
        put(&mut sym, &self.constant, None);
        for (v, m) in &self.terms {
            put(&mut sym, m, Some(*v));
        }
        sym.compress();
        sym
    }
}

fn add(sym: &mut SymmetricAffine, i: usize, j: usize, c: f64, var: Option<usize>) {
    let e = sym.entry_mut(i, j);
    match var {
        None => {
            e.add_constant(c);
        }
        Some(v) => {
            e.add_term(v, c);
        }
    }
}

pub fn is_hermitian(m: &DMatrix<Complex64>, tol: f64) -> bool {
    let scale = m.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    (m - m.adjoint()).iter().all(|z| z.norm() <= tol * scale)
}

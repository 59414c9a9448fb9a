//! Affine expressions over the program's real decision variables.

/// `constant + sum_i coeff_i * x_{var_i}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coeff: f64) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(index, coeff)],
        }
    }

    pub fn add_term(&mut self, index: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        for &(i, c) in &other.terms {
            self.add_term(i, scale * c);
        }
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        LinExpr {
            constant: self.constant * scale,
            terms: self.terms.iter().map(|&(i, c)| (i, c * scale)).collect(),
        }
    }

    /// Evaluate at a point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merge duplicate variable terms (keeps the expression small after
    /// repeated accumulation).
    pub fn compress(&mut self) {
        if self.terms.len() < 2 {
            return;
        }
        self.terms.sort_unstable_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }

    /// Largest absolute coefficient (including the constant).
    pub fn max_abs(&self) -> f64 {
        self.terms
            .iter()
            .map(|&(_, c)| c.abs())
            .fold(self.constant.abs(), f64::max)
    }
}

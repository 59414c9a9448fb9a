//! Plain-text sparse dump of a program, for cross-checking against an
//! external solver.
//!
//! Format (one record per line, whitespace separated):
//!
//! ```text
//! vars <n>
//! obj <var> <coeff>            # maximize sum coeff*x
//! quad <i> <j> <coeff>         # objective -= coeff*x_i*x_j
//! cone <zero|nonneg|soc|psd> <rows> [<matrix dim>]
//! row <local index> const <c>
//! row <local index> term <var> <coeff>
//! ```
//!
//! PSD blocks list their upper triangle column-major (unscaled entries,
//! not svec).

use std::fmt::Write;

use crate::program::{ConeBlock, Program};

pub fn dump(program: &Program) -> String {
    let mut out = String::new();
    writeln!(out, "vars {}", program.n_vars()).unwrap();
    let (lin, quad) = program.objective_terms();
    for &(i, c) in lin {
        writeln!(out, "obj {} {:.17e}", i, c).unwrap();
    }
    for &(i, j, c) in quad {
        writeln!(out, "quad {} {} {:.17e}", i, j, c).unwrap();
    }
    for block in program.blocks() {
        let (kind, rows, dim) = match block {
            ConeBlock::Zero(r) => ("zero", r.clone(), None),
            ConeBlock::Nonneg(r) => ("nonneg", r.clone(), None),
            ConeBlock::Soc(r) => ("soc", r.clone(), None),
            ConeBlock::Psd(sym) => {
                let mut r = Vec::new();
                for j in 0..sym.dim() {
                    for i in 0..=j {
                        r.push(sym.entry(i, j).clone());
                    }
                }
                ("psd", r, Some(sym.dim()))
            }
        };
        match dim {
            Some(d) => writeln!(out, "cone {} {} {}", kind, rows.len(), d).unwrap(),
            None => writeln!(out, "cone {} {}", kind, rows.len()).unwrap(),
        }
        for (k, e) in rows.iter().enumerate() {
            if e.constant != 0.0 {
                writeln!(out, "row {} const {:.17e}", k, e.constant).unwrap();
            }
            for &(v, c) in &e.terms {
                writeln!(out, "row {} term {} {:.17e}", k, v, c).unwrap();
            }
        }
    }
    out
}

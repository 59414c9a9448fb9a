//! Robust-QCQP regression family with a closed-form oracle.
//!
//! Each instance minimizes ||x||^2 subject to (a + d)' x >= 1 for all
//! ||d|| <= eps, encoded through the S-procedure LMI
//!
//!   [ w I      x/2              ]
//!   [ x'/2     a'x - 1 - w eps^2] >= 0,   w >= 0.
//!
//! The worst-case constraint collapses to a'x - eps ||x|| >= 1, whose
//! optimum is x = a / (||a|| (||a|| - eps)) with value 1/(||a|| - eps)^2.
//!
//! `write_dumps` (ignored) regenerates the text dumps consumed by
//! tools/crosscheck_conic.py, which refreshes the frozen objectives in
//! tests/fixtures/robust_qcqp_expected.json.

use conic::{dump, LinExpr, Program, Status, SymmetricAffine, Tolerances};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Instance {
    a: Vec<f64>,
    eps: f64,
}

impl Instance {
    fn norm_a(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Minimum of ||x||^2 over the robust feasible set.
    fn oracle(&self) -> f64 {
        let r = self.norm_a() - self.eps;
        1.0 / (r * r)
    }

    fn program(&self) -> Program {
        let n = self.a.len();
        let mut p = Program::new();
        let xs = p.add_vars(n);
        let x0 = xs.start;
        let w = p.add_var();
        for k in 0..n {
            p.quad_penalty(x0 + k, x0 + k, 1.0);
        }
        p.nonneg(LinExpr::var(w));

        let mut lmi = SymmetricAffine::new(n + 1);
        for i in 0..n {
            lmi.entry_mut(i, i).add_term(w, 1.0);
            lmi.entry_mut(i, n).add_term(x0 + i, 0.5);
        }
        {
            let corner = lmi.entry_mut(n, n);
            for (i, ai) in self.a.iter().enumerate() {
                corner.add_term(x0 + i, *ai);
            }
            corner.add_constant(-1.0);
            corner.add_term(w, -self.eps * self.eps);
        }
        p.psd(lmi);
        p
    }
}

fn instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51c0_95ab);
    (0..20)
        .map(|_| {
            let n = rng.random_range(2..=6usize);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(0.3);
            // keep the robust set nonempty with margin
            let eps = rng.random_range(0.05..0.7) * norm;
            Instance { a, eps }
        })
        .collect()
}

#[test]
fn matches_closed_form() {
    for (k, inst) in instances().iter().enumerate() {
        let sol = inst.program().solve(&Tolerances::default());
        assert_eq!(sol.status, Status::Optimal, "instance {k}");
        let got = -sol.objective; // maximize -||x||^2
        let want = inst.oracle();
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-5, "instance {k}: got {got}, want {want}, rel {rel}");
    }
}

#[test]
fn matches_frozen_external_solutions() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/robust_qcqp_expected.json"
    );
    let text = std::fs::read_to_string(path).expect("frozen fixture file");
    let expected: Vec<f64> = serde_json::from_str(&text).unwrap();
    let insts = instances();
    assert_eq!(expected.len(), insts.len());
    for (k, (inst, want)) in insts.iter().zip(&expected).enumerate() {
        let sol = inst.program().solve(&Tolerances::default());
        let got = -sol.objective;
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-5, "instance {k}: got {got}, frozen {want}, rel {rel}");
    }
}

#[test]
#[ignore]
fn write_dumps() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/dumps");
    std::fs::create_dir_all(dir).unwrap();
    for (k, inst) in instances().iter().enumerate() {
        let text = dump::dump(&inst.program());
        std::fs::write(format!("{dir}/robust_qcqp_{k:02}.txt"), text).unwrap();
    }
}

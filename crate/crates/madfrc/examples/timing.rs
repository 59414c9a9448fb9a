use madfrc::driver::{run_bcd, RunOptions};
use madfrc::scenario::{linear_to_db, Scenario};

fn main() {
    let mut s = Scenario::default();
    if let Some(seed) = std::env::var("T_SEED").ok().and_then(|x| x.parse().ok()) {
        s.seed = seed;
    }
    let mut opts = RunOptions::default();
    if let Some(n) = std::env::var("T_INNER").ok().and_then(|x| x.parse().ok()) {
        opts.inner_max = n;
    }
    if let Some(n) = std::env::var("T_OUTER").ok().and_then(|x| x.parse().ok()) {
        opts.outer_max = n;
    }
    let real = s.generate().unwrap();
    let t = std::time::Instant::now();
    match run_bcd(&s, &real, &opts) {
        Ok((state, trace)) => {
            println!("total {:.1}s status {:?}", t.elapsed().as_secs_f64(), trace.status);
            for r in &trace.inner {
                println!(
                    "outer {} block {:<12} gb {:+.4e} {:.2}s",
                    r.outer, r.block, r.gamma_bar, r.seconds
                );
            }
            for (i, o) in trace.outer.iter().enumerate() {
                println!("outer {} min grid {:.3} dB", i, linear_to_db(o.min_grid_sinr));
            }
            let comm = state.comm_sinrs(&s, &real).unwrap();
            println!("comm {:?}", comm.iter().map(|v| linear_to_db(*v)).collect::<Vec<_>>());
        }
        Err(e) => println!("failed: {e}"),
    }
}

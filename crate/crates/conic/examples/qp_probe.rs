fn main() {
    let mut p = conic::Program::new();
    let x = p.add_var();
    let y = p.add_var();
    p.maximize_term(x, 4.0);
    p.maximize_term(y, -2.0);
    p.quad_penalty(x, x, 1.0);
    p.quad_penalty(y, y, 1.0);
    let sol = p.solve_dense(&conic::Tolerances::default());
    println!("{:?} x={:?} obj={}", sol.status, sol.x, sol.objective);
    let _ = (x, y);
}

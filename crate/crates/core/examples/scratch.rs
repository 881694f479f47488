use qsemigroup::{dilation::*, matrixcore::Tolerances, models::builtin};
use std::time::Instant;
fn main() {
    let t = Tolerances::default();
    let m = builtin("random_nonfaithful(1)", &t).unwrap();
    let g = TimeGrid::new(vec![-1.0, 0.0, 1.0]).unwrap();
    let s = Instant::now();
    let sp = build_dilation_space(&m.qms, &m.state, &g, DEFAULT_CAP, &t).unwrap();
    println!("build {:?} D={}", s.elapsed(), sp.dim());
    let s = Instant::now();
    let _ = sp.filtration_projection(0.0, &t);
    println!("F {:?}", s.elapsed());
    let s = Instant::now();
    let _ = sp.represent_j(0.0, &qsemigroup::matrixcore::identity(3));
    println!("j {:?}", s.elapsed());
    let s = Instant::now();
    let _ = markov_property_check(&sp, 0.0, 1.0, &qsemigroup::matrixcore::identity(3), &t);
    println!("markov {:?}", s.elapsed());
    let s = Instant::now();
    let _ = compression_check(&sp);
    println!("comp {:?}", s.elapsed());
    let s = Instant::now();
    let _ = monotonicity_residual(&sp, &t);
    println!("mono {:?}", s.elapsed());
    let s = Instant::now();
    let _ = filtration_closed_form_residual(&sp, &t);
    println!("closed {:?}", s.elapsed());
    let s = Instant::now();
    let _ = homomorphism_check(&sp, &t);
    println!("hom {:?}", s.elapsed());
    let s = Instant::now();
    let _ = cyclic_sweep(&sp);
    println!("cyc {:?}", s.elapsed());
    let s = Instant::now();
    let _ = sp.reproduction_residual();
    println!("repro {:?}", s.elapsed());
}

#![allow(dead_code)]

use std::sync::Arc;

use stokeslab::continuation::*;
use stokeslab::dispersion::*;
use stokeslab::stream::*;

pub fn irrotational_stream(r: f64) -> UniformStream {
    let vm = Arc::new(primitive(VorticitySpec::Constant { value: 0.0 }).unwrap());
    let s = critical_data(&vm, r).unwrap().s_plus.unwrap();
    solve_uniform_stream(vm, s).unwrap()
}

pub fn stream_of_slope(spec: VorticitySpec, s: f64) -> UniformStream {
    solve_uniform_stream(Arc::new(primitive(spec).unwrap()), s).unwrap()
}

pub fn branch(r: f64, nq: usize, np: usize, steps: usize, step: f64) -> (UniformStream, Branch) {
    let st = irrotational_stream(r);
    let dc = find_tau_star(&st).unwrap();
    let b = continue_branch(&st, dc.tau_star, &ContinuationOptions::new(nq, np, steps, step)).unwrap();
    (st, b)
}

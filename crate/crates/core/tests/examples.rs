//! Runs every example so they stay in step with the library.

#[path = "../examples/plane_wave_spectrum.rs"]
mod plane_wave_spectrum;

#[test]
fn plane_wave_spectrum_runs() {
    plane_wave_spectrum::run_example().unwrap();
}

#[path = "../examples/h_surface_convergence.rs"]
mod h_surface_convergence;

#[test]
fn h_surface_convergence_runs() {
    h_surface_convergence::run_example().unwrap();
}

#[path = "../examples/clifford_torus.rs"]
mod clifford_torus;

#[test]
fn clifford_torus_runs() {
    clifford_torus::run_example().unwrap();
}

#[path = "../examples/heat_flow.rs"]
mod heat_flow;

#[test]
fn heat_flow_runs() {
    heat_flow::run_example().unwrap();
}

#[path = "../examples/coupled_solve.rs"]
mod coupled_solve;

#[test]
fn coupled_solve_runs() {
    coupled_solve::run_example().unwrap();
}

#[path = "../examples/stress_and_hopf.rs"]
mod stress_and_hopf;

#[test]
fn stress_and_hopf_runs() {
    stress_and_hopf::run_example().unwrap();
}

#[path = "../examples/conformal_invariance.rs"]
mod conformal_invariance;

#[test]
fn conformal_invariance_runs() {
    conformal_invariance::run_example().unwrap();
}

#[path = "../examples/gradient_oracle.rs"]
mod gradient_oracle;

#[test]
fn gradient_oracle_runs() {
    gradient_oracle::run_example().unwrap();
}

#[path = "../examples/annulus_decay.rs"]
mod annulus_decay;

#[test]
fn annulus_decay_runs() {
    annulus_decay::run_example().unwrap();
}

#[path = "../examples/riviere_form.rs"]
mod riviere_form;

#[test]
fn riviere_form_runs() {
    riviere_form::run_example().unwrap();
}

#[path = "../examples/config_run.rs"]
mod config_run;

#[test]
fn config_run_runs() {
    config_run::run_example().unwrap();
}

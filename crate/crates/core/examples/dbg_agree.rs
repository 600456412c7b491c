use defective_flow::assembly::assemble_constant_blocks;
use defective_flow::harness::*;
use defective_flow::mesh::InflowMode;
use defective_flow::sparse::norm2;

fn main() {
    let text = std::fs::read_to_string("crates/core/configs/womersley.toml").unwrap();
    let mut cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let warm: bool = std::env::args().nth(1).map(|s| s == "warm").unwrap_or(true);
    let tol: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1e-8);
    cfg.solver.warm_start = warm;
    cfg.solver.krylov.rel_tol = tol;
    let mesh = cfg.mesh.build_with_modes(InflowMode::LagrangeMultiplier, &[]).unwrap();
    let inlet = cfg.waveform_for(PortTarget::Inlet).unwrap();
    let steps = 1250;
    let mut runs = Vec::new();
    for choice in [PrecondChoice::AugSimple, PrecondChoice::AugIdentity] {
        let solver = SolverConfig { preconditioner: choice, ..cfg.solver.clone() };
        let rec = run_timeloop(&TimeLoopSpec {
            mesh: &mesh, viscosity: cfg.viscosity, stab_alpha: cfg.stab_alpha,
            dt: cfg.dt, steps, flow_waveforms: &[inlet], profile_waveforms: &[],
            solver: &solver, initial_velocity: None,
            variant: choice.label().into(), snapshot_stride: 0,
        }).unwrap();
        runs.push(rec);
    }
    let cb = assemble_constant_blocks(&mesh, cfg.viscosity, cfg.stab_alpha).unwrap();
    let d: Vec<f64> = runs[0].final_velocity.iter().zip(&runs[1].final_velocity).map(|(x, y)| x - y).collect();
    let vel = fe_l2_norm(&cb, &d).unwrap() / fe_l2_norm(&cb, &runs[0].final_velocity).unwrap();
    let dp: Vec<f64> = runs[0].final_pressure.iter().zip(&runs[1].final_pressure).map(|(x, y)| x - y).collect();
    println!("warm={warm} tol={tol:.0e}: velocity {:.3e} ({:.1} x tol), pressure {:.3e} ({:.1} x tol)",
        vel, vel / tol, norm2(&dp) / norm2(&runs[0].final_pressure), norm2(&dp) / norm2(&runs[0].final_pressure) / tol);
}

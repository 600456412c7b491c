use defective_flow::assembly::*;
use defective_flow::harness::*;
use defective_flow::krylov::{gmres, KrylovParams};
use defective_flow::mesh::InflowMode;

fn main() {
    let text = std::fs::read_to_string("crates/core/configs/m_scaling.toml").unwrap();
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    for m_target in [1usize, 5] {
        let port_modes: Vec<InflowMode> = (0..4)
            .map(|i| if i < m_target - 1 { InflowMode::LagrangeMultiplier } else { InflowMode::DirichletProfile })
            .collect();
        let mesh = cfg.mesh.build_with_modes(InflowMode::LagrangeMultiplier, &port_modes).unwrap();
        // reach mid-ramp state with a few steps, then examine one solve
        let flow_w: Vec<Waveform> = {
            let mut v = vec![cfg.waveform_for(PortTarget::Inlet).unwrap()];
            for (i, m) in port_modes.iter().enumerate() {
                if *m == InflowMode::LagrangeMultiplier {
                    v.push(cfg.waveform_for(PortTarget::Port(i + 1)).unwrap());
                }
            }
            v
        };
        let profile_w: Vec<Waveform> = port_modes.iter().enumerate()
            .filter(|(_, m)| **m == InflowMode::DirichletProfile)
            .map(|(i, _)| cfg.waveform_for(PortTarget::Port(i + 1)).unwrap())
            .collect();
        let solver = cfg.solver.clone();
        let rec = run_timeloop(&TimeLoopSpec {
            mesh: &mesh, viscosity: cfg.viscosity, stab_alpha: cfg.stab_alpha,
            dt: cfg.dt, steps: 15, flow_waveforms: &flow_w, profile_waveforms: &profile_w,
            solver: &solver, initial_velocity: None, variant: "x".into(), snapshot_stride: 0,
        }).unwrap();
        // build the step-16 system and solve cold with full history
        use defective_flow::assembly as asm;
        let cb = asm::assemble_constant_blocks(&mesh, cfg.viscosity, cfg.stab_alpha).unwrap();
        let flux = asm::assemble_flux_matrix(&mesh).unwrap();
        let conv = asm::assemble_convection(&mesh, &rec.final_velocity).unwrap();
        let t = 16.0 * cfg.dt;
        let q: Vec<f64> = flow_w.iter().map(|w| w.eval(t)).collect();
        let mut dir = asm::DirichletData::default();
        for (j, w) in profile_w.iter().enumerate() {
            let d = asm::dirichlet_profile(&mesh, defective_flow::mesh::SectionId::Profile(j + 1), w.eval(t), asm::ProfileShape::Parabolic).unwrap();
            dir = d.override_onto(&dir);
        }
        let dir = asm::wall_dirichlet(&mesh).override_onto(&dir);
        let sys = asm::build_time_step_system(&asm::NsBlocks {
            constant: &cb, convection: Some(&conv), extra_momentum: None, flux: &flux,
            body_force: [0.0, 0.0], flow_rates: &q, dt: Some(cfg.dt),
        }, &rec.final_velocity, &dir).unwrap();
        let pre = build_preconditioner(&sys, &solver).unwrap();
        let params = KrylovParams { rel_tol: 1e-10, ..Default::default() };
        let (_, stats) = gmres(&sys, Some(&pre), sys.rhs.as_slice(), None, &params).unwrap();
        let h: Vec<String> = stats.residual_history.iter().map(|r| format!("{:.1e}", r / stats.rhs_norm)).collect();
        println!("m = {m_target}: {} iters\n  history: {}", stats.iterations, h.join(" "));
    }
}

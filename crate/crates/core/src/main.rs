use clap::{Parser, Subcommand};
use defective_flow::error::Result;
use defective_flow::harness::{
    self, export_csv, export_m_scaling_csv, export_vtk, parse_inner_kind, ExperimentConfig,
    ExperimentKind, PortTarget, PrecondChoice, TimeLoopSpec,
};
use defective_flow::mesh::InflowMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "defective-flow",
    about = "Monolithic Navier-Stokes solver with Lagrange-multiplier flow-rate \
             conditions and augmented SIMPLE preconditioners",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to the TOML experiment config.
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the preconditioner: aug-as | aug-as-i | simple | exact-lu.
        #[arg(long)]
        precond: Option<String>,
        /// Override both inner solvers: direct | ilu0 | jacobi:k | chebyshev:k.
        #[arg(long)]
        inner: Option<String>,
        /// Abort on the first non-converged time step.
        #[arg(long)]
        fail_fast: bool,
    },
    /// Run the preconditioner verification suite; exit 0 iff every check passes.
    Verify {
        /// Path to the TOML experiment config (mesh and solver settings).
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            precond,
            inner,
            fail_fast,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(p) = precond {
                cfg.solver.preconditioner = PrecondChoice::parse(&p)?;
            }
            if let Some(i) = inner {
                let kind = parse_inner_kind(&i)?;
                cfg.solver.inner_momentum = kind;
                cfg.solver.inner_schur = kind;
            }
            if fail_fast {
                cfg.solver.fail_fast = true;
            }
            run_experiment(&cfg)
        }
        Command::Verify { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let checks = harness::run_verification_suite(&cfg)?;
            let mut all_ok = true;
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", c.name, c.detail);
                all_ok &= c.passed;
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn run_experiment(cfg: &ExperimentConfig) -> Result<ExitCode> {
    match cfg.experiment {
        ExperimentKind::MScaling => {
            let report = harness::run_m_scaling(cfg)?;
            let summary = cfg.output_dir.join("m_scaling.csv");
            export_m_scaling_csv(&report.rows, &summary)?;
            for (m, rec) in &report.runs {
                let path = cfg
                    .output_dir
                    .join(format!("steps_m{}_{}.csv", m, rec.variant));
                export_csv(rec, &path)?;
            }
            println!("m  variant    mean_iters  max_iters  wall_s");
            for r in &report.rows {
                println!(
                    "{:<2} {:<10} {:<11.2} {:<10} {:.3}",
                    r.m, r.variant, r.mean_iterations, r.max_iterations, r.wall_seconds
                );
            }
            for fa in &report.field_agreement {
                println!(
                    "m = {}: aug-as vs aug-as-i fields agree to {:.3e} (velocity), {:.3e} (pressure)",
                    fa.m, fa.velocity_rel_l2, fa.pressure_rel_l2
                );
            }
            println!("wrote {}", summary.display());
            let all_converged = report.runs.iter().all(|(_, r)| r.all_converged());
            Ok(if all_converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        ExperimentKind::Womersley => {
            let report = harness::run_womersley_comparison(cfg)?;
            export_csv(&report.lm_run, &cfg.output_dir.join("steps_lagrange.csv"))?;
            export_csv(
                &report.dirichlet_run,
                &cfg.output_dir.join("steps_dirichlet.csv"),
            )?;
            let mesh = cfg
                .mesh
                .build_with_modes(InflowMode::LagrangeMultiplier, &[])?;
            export_vtk(
                &mesh,
                &report.lm_run.final_velocity,
                &report.lm_run.final_pressure,
                &cfg.output_dir.join("peak_lagrange.vtk"),
            )?;
            let mesh_d = cfg
                .mesh
                .build_with_modes(InflowMode::DirichletProfile, &[])?;
            export_vtk(
                &mesh_d,
                &report.dirichlet_run.final_velocity,
                &report.dirichlet_run.final_pressure,
                &cfg.output_dir.join("peak_dirichlet.vtk"),
            )?;

            println!("peak-flow instant t = {} s", report.peak_time);
            for (label, pe) in [("inlet", &report.inlet), ("mid-channel", &report.mid_channel)] {
                println!(
                    "{label} (x = {} mm): profile L2 error {:.3}% (multiplier) vs {:.3}% (Dirichlet profile)",
                    pe.section_x,
                    100.0 * pe.lm_error,
                    100.0 * pe.dirichlet_error
                );
            }
            println!(
                "multiplier run: max flow-rate residual {:.3e}; Dirichlet run: max profile-flux error {:.3e}",
                report.lm_flow_residual_max, report.dirichlet_flux_error_max
            );
            match report.validate() {
                Ok(()) => {
                    println!("[PASS] multiplier solve tracks the analytic profile better at both stations");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("[FAIL] {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        ExperimentKind::Verify => {
            let checks = harness::run_verification_suite(cfg)?;
            let mut all_ok = true;
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", c.name, c.detail);
                all_ok &= c.passed;
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        ExperimentKind::Custom => {
            let mesh = cfg.mesh.build()?;
            let port_modes: Vec<InflowMode> = cfg.mesh.ports.iter().map(|p| p.mode).collect();
            let mut flow_w = Vec::new();
            let mut profile_w = Vec::new();
            let inlet_wave = cfg.waveform_for(PortTarget::Inlet)?;
            match cfg.mesh.inflow {
                InflowMode::LagrangeMultiplier => flow_w.push(inlet_wave),
                InflowMode::DirichletProfile => profile_w.push(inlet_wave),
            }
            for (idx, mode) in port_modes.iter().enumerate() {
                let w = cfg.waveform_for(PortTarget::Port(idx + 1))?;
                match mode {
                    InflowMode::LagrangeMultiplier => flow_w.push(w),
                    InflowMode::DirichletProfile => profile_w.push(w),
                }
            }
            let steps = ((cfg.t_end / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
            let rec = harness::run_timeloop(&TimeLoopSpec {
                mesh: &mesh,
                viscosity: cfg.viscosity,
                stab_alpha: cfg.stab_alpha,
                dt: cfg.dt,
                steps,
                flow_waveforms: &flow_w,
                profile_waveforms: &profile_w,
                solver: &cfg.solver,
                initial_velocity: None,
                variant: cfg.solver.preconditioner.label().to_string(),
                snapshot_stride: cfg.snapshot_stride,
            })?;
            export_csv(&rec, &cfg.output_dir.join("steps.csv"))?;
            for (step, u, p) in &rec.snapshots {
                export_vtk(
                    &mesh,
                    u,
                    p,
                    &cfg.output_dir.join(format!("snapshot_{step:06}.vtk")),
                )?;
            }
            export_vtk(
                &mesh,
                &rec.final_velocity,
                &rec.final_pressure,
                &cfg.output_dir.join("final.vtk"),
            )?;
            println!(
                "{} steps, mean {:.2} GMRES iterations (max {}), wall {:.2} s",
                rec.steps.len(),
                rec.mean_iterations(),
                rec.max_iterations(),
                rec.total_wall_seconds()
            );
            if !rec.all_converged() {
                let failed = rec.steps.iter().filter(|s| !s.converged).count();
                println!("{failed} steps did not converge");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

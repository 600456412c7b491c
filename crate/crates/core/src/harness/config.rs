//! Experiment configuration: a flat TOML file, parsed once into the internal
//! unit system.
//!
//! Units at the config surface follow the conventions of the problem class:
//! geometry in mm, kinematic viscosity in m^2/s, flow rates per unit depth in
//! cm^2/s, times in s. Internally everything is converted to mm and s
//! (viscosity mm^2/s, flow rate mm^2/s), once, here. The full key list ships
//! in `configs/schema.md`.

use crate::error::{Error, Result};
use crate::krylov::KrylovParams;
use crate::mesh::{self, InflowMode, Mesh, PortSide, PortSpec};
use crate::precond::InnerKind;
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const M2S_TO_MM2S: f64 = 1.0e6;
pub const CM2S_TO_MM2S: f64 = 1.0e2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MScaling,
    Womersley,
    Verify,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Constant { amplitude: f64 },
    /// Linear ramp from 0 to `amplitude` over `ramp_time`, then hold.
    Ramp { amplitude: f64, ramp_time: f64 },
    /// `amplitude * sin(omega t)`.
    Sinusoid { amplitude: f64, omega: f64 },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { amplitude } => *amplitude,
            Waveform::Ramp {
                amplitude,
                ramp_time,
            } => amplitude * (t / ramp_time).clamp(0.0, 1.0),
            Waveform::Sinusoid { amplitude, omega } => amplitude * (omega * t).sin(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            Waveform::Constant { amplitude }
            | Waveform::Ramp { amplitude, .. }
            | Waveform::Sinusoid { amplitude, .. } => *amplitude,
        }
    }
}

/// Which boundary a waveform drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortTarget {
    Inlet,
    /// 1-based port number in declaration order.
    Port(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Channel,
    Manifold,
}

#[derive(Debug, Clone)]
pub struct MeshConfig {
    pub kind: MeshKind,
    pub length: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub inflow: InflowMode,
    pub ports: Vec<PortSpec>,
}

impl MeshConfig {
    /// Build the mesh exactly as declared.
    pub fn build(&self) -> Result<Mesh> {
        self.build_with_modes(self.inflow, &self.ports.iter().map(|p| p.mode).collect::<Vec<_>>())
    }

    /// Build the same triangulation with overridden inlet/port modes (the
    /// multiplier-scaling experiment switches ports on fixed geometry).
    pub fn build_with_modes(&self, inflow: InflowMode, port_modes: &[InflowMode]) -> Result<Mesh> {
        if port_modes.len() != self.ports.len() {
            return Err(Error::Config(format!(
                "{} port modes for {} ports",
                port_modes.len(),
                self.ports.len()
            )));
        }
        match self.kind {
            MeshKind::Channel => {
                if !self.ports.is_empty() {
                    return Err(Error::Config(
                        "channel meshes have no ports; use kind = \"manifold\"".to_string(),
                    ));
                }
                mesh::build_channel_mesh(self.length, self.height, self.nx, self.ny, inflow)
            }
            MeshKind::Manifold => {
                if inflow != InflowMode::LagrangeMultiplier {
                    return Err(Error::Config(
                        "manifold meshes use a Lagrange-multiplier inlet".to_string(),
                    ));
                }
                let ports: Vec<PortSpec> = self
                    .ports
                    .iter()
                    .zip(port_modes)
                    .map(|(p, &mode)| PortSpec { mode, ..*p })
                    .collect();
                mesh::build_manifold_mesh(self.length, self.height, self.nx, self.ny, &ports)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondChoice {
    AugSimple,
    AugIdentity,
    Simple,
    ExactLu,
}

impl PrecondChoice {
    pub fn label(&self) -> &'static str {
        match self {
            PrecondChoice::AugSimple => "aug-as",
            PrecondChoice::AugIdentity => "aug-as-i",
            PrecondChoice::Simple => "simple",
            PrecondChoice::ExactLu => "exact-lu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "aug-as" => Ok(PrecondChoice::AugSimple),
            "aug-as-i" => Ok(PrecondChoice::AugIdentity),
            "simple" => Ok(PrecondChoice::Simple),
            "exact-lu" => Ok(PrecondChoice::ExactLu),
            other => Err(Error::Config(format!(
                "unknown preconditioner `{other}` (aug-as | aug-as-i | simple | exact-lu)"
            ))),
        }
    }
}

pub fn parse_inner_kind(s: &str) -> Result<InnerKind> {
    if s == "direct" {
        return Ok(InnerKind::DirectLu);
    }
    if s == "ilu0" {
        return Ok(InnerKind::Ilu0);
    }
    if let Some(k) = s.strip_prefix("jacobi:") {
        let sweeps: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad jacobi sweep count `{k}`")))?;
        return Ok(InnerKind::JacobiSweeps(sweeps));
    }
    if let Some(k) = s.strip_prefix("chebyshev:") {
        let sweeps: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad chebyshev sweep count `{k}`")))?;
        return Ok(InnerKind::ChebyshevSweeps(sweeps));
    }
    Err(Error::Config(format!(
        "unknown inner solver `{s}` (direct | ilu0 | jacobi:k | chebyshev:k)"
    )))
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub preconditioner: PrecondChoice,
    pub inner_momentum: InnerKind,
    pub inner_schur: InnerKind,
    pub krylov: KrylovParams,
    pub warm_start: bool,
    pub fail_fast: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            preconditioner: PrecondChoice::AugSimple,
            inner_momentum: InnerKind::DirectLu,
            inner_schur: InnerKind::DirectLu,
            krylov: KrylovParams::default(),
            warm_start: true,
            fail_fast: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub mesh: MeshConfig,
    /// mm^2/s (converted from m^2/s at parse).
    pub viscosity: f64,
    pub stab_alpha: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Outward-flux waveforms in mm^2/s, one per target (inlet, then ports in
    /// declaration order). Inflow needs a negative amplitude.
    pub waveforms: Vec<(PortTarget, Waveform)>,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Write velocity/pressure VTK snapshots every `snapshot_stride` steps
    /// (0 = never).
    pub snapshot_stride: usize,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse failed: {e}")))?;
        raw.validate()
    }

    pub fn waveform_for(&self, target: PortTarget) -> Result<Waveform> {
        self.waveforms
            .iter()
            .find(|(t, _)| *t == target)
            .map(|(_, w)| *w)
            .ok_or_else(|| Error::Config(format!("no waveform for {target:?}")))
    }
}

// ---- raw serde layer ------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    mesh: RawMesh,
    physics: RawPhysics,
    #[serde(default)]
    waveform: Vec<RawWaveform>,
    #[serde(default)]
    solver: RawSolver,
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    kind: String,
    length_mm: f64,
    height_mm: f64,
    nx: usize,
    ny: usize,
    inflow: Option<String>,
    #[serde(default)]
    port: Vec<RawPort>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPort {
    side: String,
    span_mm: [f64; 2],
    mode: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    viscosity_m2s: f64,
    dt_s: f64,
    t_end_s: f64,
    stab_alpha: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaveform {
    target: String,
    kind: String,
    amplitude_cm2s: f64,
    ramp_time_s: Option<f64>,
    frequency_hz: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    preconditioner: Option<String>,
    inner_momentum: Option<String>,
    inner_schur: Option<String>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    restart: Option<usize>,
    max_iters: Option<usize>,
    warm_start: Option<bool>,
    fail_fast: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: String,
    snapshot_stride: Option<usize>,
}

fn parse_mode(s: &str) -> Result<InflowMode> {
    match s {
        "lagrange" => Ok(InflowMode::LagrangeMultiplier),
        "dirichlet-parabolic" => Ok(InflowMode::DirichletProfile),
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (lagrange | dirichlet-parabolic)"
        ))),
    }
}

fn parse_target(s: &str) -> Result<PortTarget> {
    if s == "inlet" {
        return Ok(PortTarget::Inlet);
    }
    if let Some(k) = s.strip_prefix("port:") {
        let idx: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad port index `{k}`")))?;
        if idx == 0 {
            return Err(Error::Config("port indices are 1-based".to_string()));
        }
        return Ok(PortTarget::Port(idx));
    }
    Err(Error::Config(format!(
        "unknown waveform target `{s}` (inlet | port:k)"
    )))
}

impl RawConfig {
    fn validate(self) -> Result<ExperimentConfig> {
        let experiment = match self.experiment.as_str() {
            "m_scaling" => ExperimentKind::MScaling,
            "womersley" => ExperimentKind::Womersley,
            "verify" => ExperimentKind::Verify,
            "custom" => ExperimentKind::Custom,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment `{other}` (m_scaling | womersley | verify | custom)"
                )))
            }
        };

        let kind = match self.mesh.kind.as_str() {
            "channel" => MeshKind::Channel,
            "manifold" => MeshKind::Manifold,
            other => {
                return Err(Error::Config(format!(
                    "unknown mesh kind `{other}` (channel | manifold)"
                )))
            }
        };
        let inflow = match &self.mesh.inflow {
            Some(s) => parse_mode(s)?,
            None => InflowMode::LagrangeMultiplier,
        };
        let mut ports = Vec::with_capacity(self.mesh.port.len());
        for p in &self.mesh.port {
            let side = match p.side.as_str() {
                "top" => PortSide::Top,
                "bottom" => PortSide::Bottom,
                other => {
                    return Err(Error::Config(format!(
                        "unknown port side `{other}` (top | bottom)"
                    )))
                }
            };
            ports.push(PortSpec {
                side,
                span: p.span_mm,
                mode: parse_mode(&p.mode)?,
            });
        }
        let mesh = MeshConfig {
            kind,
            length: self.mesh.length_mm,
            height: self.mesh.height_mm,
            nx: self.mesh.nx,
            ny: self.mesh.ny,
            inflow,
            ports,
        };

        if self.physics.dt_s <= 0.0 || self.physics.t_end_s <= 0.0 {
            return Err(Error::Config(
                "dt_s and t_end_s must be positive".to_string(),
            ));
        }

        let mut waveforms = Vec::with_capacity(self.waveform.len());
        for w in &self.waveform {
            let target = parse_target(&w.target)?;
            if let PortTarget::Port(k) = target {
                if k > mesh.ports.len() {
                    return Err(Error::Config(format!(
                        "waveform targets port {k} but only {} ports are declared",
                        mesh.ports.len()
                    )));
                }
            }
            if waveforms.iter().any(|(t, _)| *t == target) {
                return Err(Error::Config(format!("duplicate waveform for {target:?}")));
            }
            let amplitude = w.amplitude_cm2s * CM2S_TO_MM2S;
            let wave = match w.kind.as_str() {
                "constant" => Waveform::Constant { amplitude },
                "ramp" => {
                    let ramp_time = w.ramp_time_s.ok_or_else(|| {
                        Error::Config("ramp waveform needs ramp_time_s".to_string())
                    })?;
                    if ramp_time <= 0.0 {
                        return Err(Error::Config("ramp_time_s must be positive".to_string()));
                    }
                    Waveform::Ramp {
                        amplitude,
                        ramp_time,
                    }
                }
                "sinusoid" => {
                    let f = w.frequency_hz.ok_or_else(|| {
                        Error::Config("sinusoid waveform needs frequency_hz".to_string())
                    })?;
                    if f <= 0.0 {
                        return Err(Error::Config("frequency_hz must be positive".to_string()));
                    }
                    Waveform::Sinusoid {
                        amplitude,
                        omega: 2.0 * std::f64::consts::PI * f,
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown waveform kind `{other}` (constant | ramp | sinusoid)"
                    )))
                }
            };
            waveforms.push((target, wave));
        }
        // one waveform per flow-carrying boundary: the inlet plus every port
        if experiment != ExperimentKind::Verify {
            if !waveforms.iter().any(|(t, _)| *t == PortTarget::Inlet) {
                return Err(Error::Config("missing waveform for the inlet".to_string()));
            }
            for k in 1..=mesh.ports.len() {
                if !waveforms.iter().any(|(t, _)| *t == PortTarget::Port(k)) {
                    return Err(Error::Config(format!("missing waveform for port {k}")));
                }
            }
        }

        let mut krylov = KrylovParams::default();
        if let Some(v) = self.solver.rel_tol {
            krylov.rel_tol = v;
        }
        if let Some(v) = self.solver.abs_tol {
            krylov.abs_tol = v;
        }
        if let Some(v) = self.solver.restart {
            krylov.restart = v;
        }
        if let Some(v) = self.solver.max_iters {
            krylov.max_iters = v;
        }
        let solver = SolverConfig {
            preconditioner: match &self.solver.preconditioner {
                Some(s) => PrecondChoice::parse(s)?,
                None => PrecondChoice::AugSimple,
            },
            inner_momentum: match &self.solver.inner_momentum {
                Some(s) => parse_inner_kind(s)?,
                None => InnerKind::DirectLu,
            },
            inner_schur: match &self.solver.inner_schur {
                Some(s) => parse_inner_kind(s)?,
                None => InnerKind::DirectLu,
            },
            krylov,
            warm_start: self.solver.warm_start.unwrap_or(true),
            fail_fast: self.solver.fail_fast.unwrap_or(false),
        };

        Ok(ExperimentConfig {
            experiment,
            mesh,
            viscosity: self.physics.viscosity_m2s * M2S_TO_MM2S,
            stab_alpha: self.physics.stab_alpha.unwrap_or(0.05),
            dt: self.physics.dt_s,
            t_end: self.physics.t_end_s,
            waveforms,
            solver,
            output_dir: PathBuf::from(self.output.directory),
            snapshot_stride: self.output.snapshot_stride.unwrap_or(0),
        })
    }
}

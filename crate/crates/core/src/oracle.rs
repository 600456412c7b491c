//! Analytic reference solutions for channel flow and the error norms used to
//! compare discrete fields against them.
//!
//! The pulsatile solution is the parallel-plate analog of oscillatory duct
//! flow: the exact solution of
//!
//! ```text
//!   du/dt = g(t) + nu * d2u/dy2,   u(0) = u(H) = 0,
//! ```
//!
//! with the spatially uniform forcing g(t) (physically the negative axial
//! pressure gradient) chosen so that the instantaneous flow rate satisfies
//! `int_0^H u dy = Q0 sin(w t)`. With the complex ansatz
//! `u = Im[ uhat(y) e^{iwt} ]` one gets
//!
//! ```text
//!   uhat(y) = Q0 * (1 - cosh(b (y - H/2)) / cosh(b H/2))
//!             / (H - (2/b) tanh(b H/2)),      b = sqrt(i w / nu),
//! ```
//!
//! which is validated in the tests against an independent Crank-Nicolson
//! space-time solver that enforces the flux constraint directly.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::SparseMatrix;
use num_complex::Complex64;

/// Channel cross-flow description. Lengths in mm, viscosity in mm^2/s,
/// flow rate per unit depth in mm^2/s, frequency in rad/s.
#[derive(Debug, Clone, Copy)]
pub struct ChannelFlowSpec {
    pub height: f64,
    pub viscosity: f64,
    /// Steady flow rate, or the amplitude Q0 of `Q0 sin(w t)` when pulsatile.
    pub flow_rate: f64,
    /// Angular frequency; 0 selects the steady (Poiseuille) regime.
    pub angular_frequency: f64,
}

impl ChannelFlowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height <= 0.0 || self.viscosity <= 0.0 || self.angular_frequency < 0.0 {
            return Err(Error::Config(format!(
                "channel flow spec requires H > 0, nu > 0, w >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Steady channel profile with flow rate Q: u(y) = (6Q/H^3) y (H - y).
pub fn poiseuille_velocity(spec: &ChannelFlowSpec, y: f64) -> Result<f64> {
    spec.validate()?;
    let h = spec.height;
    if !(0.0..=h).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside channel [0, {h}]")));
    }
    Ok(6.0 * spec.flow_rate / (h * h * h) * y * (h - y))
}

fn womersley_amplitude(spec: &ChannelFlowSpec, y: f64) -> Complex64 {
    let h = spec.height;
    let beta = (Complex64::i() * spec.angular_frequency / spec.viscosity).sqrt();
    let denom = h - (2.0 / beta) * (beta * h / 2.0).tanh();
    let shape = 1.0 - ((y - h / 2.0) * beta).cosh() / (beta * h / 2.0).cosh();
    spec.flow_rate * shape / denom
}

/// Axial velocity of the pulsatile channel solution at (y, t).
pub fn womersley_channel_velocity(spec: &ChannelFlowSpec, y: f64, t: f64) -> Result<f64> {
    spec.validate()?;
    if spec.angular_frequency == 0.0 {
        return Err(Error::Domain(
            "angular frequency is 0: use poiseuille_velocity for the steady regime".to_string(),
        ));
    }
    let h = spec.height;
    if !(0.0..=h).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside channel [0, {h}]")));
    }
    let phase = Complex64::new(0.0, spec.angular_frequency * t).exp();
    Ok((womersley_amplitude(spec, y) * phase).im)
}

/// The uniform forcing g(t) that drives the pulsatile solution (equal to the
/// negative axial pressure gradient of the corresponding channel flow).
pub fn womersley_channel_forcing(spec: &ChannelFlowSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if spec.angular_frequency == 0.0 {
        return Err(Error::Domain(
            "angular frequency is 0: the steady forcing is -dp/dx of Poiseuille flow".to_string(),
        ));
    }
    let h = spec.height;
    let w = spec.angular_frequency;
    let beta = (Complex64::i() * w / spec.viscosity).sqrt();
    let denom = h - (2.0 / beta) * (beta * h / 2.0).tanh();
    let ghat = Complex64::i() * w * spec.flow_rate / denom;
    let phase = Complex64::new(0.0, w * t).exp();
    Ok((ghat * phase).im)
}

/// Flow rate through section i (1-based): row i of the flux matrix dotted
/// with the velocity vector.
pub fn compute_flow_rate(flux: &SparseMatrix, velocity: &[f64], section: usize) -> Result<f64> {
    if section == 0 || section > flux.nrows() {
        return Err(Error::Index(format!(
            "section {section} (flux matrix has {} rows)",
            flux.nrows()
        )));
    }
    if velocity.len() != flux.ncols() {
        return Err(Error::Shape(format!(
            "flow rate: velocity length {} != {} flux columns",
            velocity.len(),
            flux.ncols()
        )));
    }
    let (cols, vals) = flux.row(section - 1);
    Ok(cols.iter().zip(vals).map(|(&c, &v)| v * velocity[c]).sum())
}

/// Degree-4 triangle quadrature (6 points, barycentric, weights sum to 1).
pub const TRI_QUAD_D4: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445948490915965;
    const B1: f64 = 0.108103018168070;
    const W1: f64 = 0.223381589678011;
    const A2: f64 = 0.091576213509771;
    const B2: f64 = 0.816847572980458;
    const W2: f64 = 0.109951743655322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// L2 norm of (u_h - u) for a P1 vector field (two interleaved components per
/// vertex), by elementwise degree-4 quadrature.
pub fn l2_error_velocity<F>(mesh: &Mesh, field: &[f64], exact: F) -> Result<f64>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    if field.len() != 2 * mesh.num_vertices() {
        return Err(Error::Shape(format!(
            "velocity field has {} entries for {} vertices",
            field.len(),
            mesh.num_vertices()
        )));
    }
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = mesh.triangle_area(t);
        let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertex(v)).collect();
        for (bary, w) in TRI_QUAD_D4 {
            let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
            let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
            let ex = exact(x, y);
            for c in 0..2 {
                let uh: f64 = (0..3).map(|k| bary[k] * field[2 * tri[k] + c]).sum();
                total += area * w * (uh - ex[c]) * (uh - ex[c]);
            }
        }
    }
    Ok(total.sqrt())
}

/// Scalar-field version of [`l2_error_velocity`] (one value per vertex).
pub fn l2_error_scalar<F>(mesh: &Mesh, field: &[f64], exact: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if field.len() != mesh.num_vertices() {
        return Err(Error::Shape(format!(
            "scalar field has {} entries for {} vertices",
            field.len(),
            mesh.num_vertices()
        )));
    }
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let area = mesh.triangle_area(t);
        let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertex(v)).collect();
        for (bary, w) in TRI_QUAD_D4 {
            let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
            let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
            let vh: f64 = (0..3).map(|k| bary[k] * field[tri[k]]).sum();
            let d = vh - exact(x, y);
            total += area * w * d * d;
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_channel_mesh, InflowMode};

    fn pulsatile_spec() -> ChannelFlowSpec {
        ChannelFlowSpec {
            height: 6.0,
            viscosity: 3.3,
            flow_rate: 60.0,
            angular_frequency: 2.0 * std::f64::consts::PI,
        }
    }

    #[test]
    fn poiseuille_no_slip_and_peak() {
        let spec = ChannelFlowSpec {
            height: 2.0,
            viscosity: 3.3,
            flow_rate: 4.0,
            angular_frequency: 0.0,
        };
        assert_eq!(poiseuille_velocity(&spec, 0.0).unwrap(), 0.0);
        assert_eq!(poiseuille_velocity(&spec, 2.0).unwrap(), 0.0);
        // peak = 1.5 Q / H from int_0^H a y (H - y) dy = a H^3 / 6
        let peak = poiseuille_velocity(&spec, 1.0).unwrap();
        assert!((peak - 1.5 * 4.0 / 2.0).abs() < 1e-13);
        assert!(poiseuille_velocity(&spec, -0.1).is_err());
    }

    /// Composite Simpson with n intervals (n even).
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn poiseuille_integrates_to_flow_rate() {
        let spec = ChannelFlowSpec {
            height: 2.0,
            viscosity: 3.3,
            flow_rate: 4.0,
            angular_frequency: 0.0,
        };
        let q = simpson(
            |y| poiseuille_velocity(&spec, y).unwrap(),
            0.0,
            spec.height,
            1000,
        );
        assert!((q - 4.0).abs() < 1e-10 * 4.0, "flux {q}");
    }

    #[test]
    fn womersley_flux_is_the_prescribed_sinusoid() {
        let spec = pulsatile_spec();
        for &t in &[0.113, 0.25, 0.4, 0.77, 1.31] {
            let q = simpson(
                |y| womersley_channel_velocity(&spec, y, t).unwrap(),
                0.0,
                spec.height,
                2000,
            );
            let want = spec.flow_rate * (spec.angular_frequency * t).sin();
            assert!(
                (q - want).abs() <= 1e-8 * spec.flow_rate,
                "t = {t}: flux {q} vs {want}"
            );
        }
    }

    #[test]
    fn womersley_zero_frequency_is_an_error() {
        let mut spec = pulsatile_spec();
        spec.angular_frequency = 0.0;
        assert!(matches!(
            womersley_channel_velocity(&spec, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn womersley_low_frequency_limit_is_quasi_steady_poiseuille() {
        // alpha = H sqrt(w/nu) = 0.1
        let h = 2.0;
        let w = 1.0;
        let nu = w * h * h / (0.1 * 0.1);
        let spec = ChannelFlowSpec {
            height: h,
            viscosity: nu,
            flow_rate: 10.0,
            angular_frequency: w,
        };
        let t = 0.25 * 2.0 * std::f64::consts::PI / w; // quarter period
        let q_t = spec.flow_rate * (w * t).sin();
        let steady = ChannelFlowSpec {
            height: h,
            viscosity: nu,
            flow_rate: q_t,
            angular_frequency: 0.0,
        };
        let mut max_dev = 0.0f64;
        let mut max_ref = 0.0f64;
        for k in 0..=200 {
            let y = h * k as f64 / 200.0;
            let uw = womersley_channel_velocity(&spec, y, t).unwrap();
            let up = poiseuille_velocity(&steady, y).unwrap();
            max_dev = max_dev.max((uw - up).abs());
            max_ref = max_ref.max(up.abs());
        }
        assert!(
            max_dev <= 0.01 * max_ref,
            "quasi-steady deviation {} vs scale {}",
            max_dev,
            max_ref
        );
    }

    #[test]
    fn womersley_satisfies_the_pde() {
        // du/dt - nu d2u/dy2 - g(t) = 0, checked with high-order central
        // differences at pseudo-random interior points.
        let spec = pulsatile_spec();
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut unit = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let hy = 1e-3;
        let ht = 1e-4;
        let scale = spec.angular_frequency * spec.flow_rate / spec.height; // forcing magnitude
        for _ in 0..100 {
            let y = 0.05 * spec.height + 0.9 * spec.height * unit();
            let t = 2.0 * unit();
            let u = |yy: f64, tt: f64| womersley_channel_velocity(&spec, yy, tt).unwrap();
            // 4th-order central first/second derivatives
            let ut = (-u(y, t + 2.0 * ht) + 8.0 * u(y, t + ht) - 8.0 * u(y, t - ht)
                + u(y, t - 2.0 * ht))
                / (12.0 * ht);
            let uyy = (-u(y + 2.0 * hy, t) + 16.0 * u(y + hy, t) - 30.0 * u(y, t)
                + 16.0 * u(y - hy, t)
                - u(y - 2.0 * hy, t))
                / (12.0 * hy * hy);
            let g = womersley_channel_forcing(&spec, t).unwrap();
            let residual = ut - spec.viscosity * uyy - g;
            assert!(
                residual.abs() <= 1e-6 * scale,
                "PDE residual {residual} at (y={y}, t={t}), scale {scale}"
            );
        }
    }

    #[test]
    fn flow_rate_row_extraction() {
        let flux =
            SparseMatrix::from_triplets(2, 4, &[(0, 0, 0.5), (0, 2, 0.5), (1, 3, 2.0)]).unwrap();
        let u = [1.0, 9.0, 3.0, -1.0];
        assert_eq!(compute_flow_rate(&flux, &u, 1).unwrap(), 2.0);
        assert_eq!(compute_flow_rate(&flux, &u, 2).unwrap(), -2.0);
        assert!(compute_flow_rate(&flux, &u, 3).is_err());
        assert_eq!(compute_flow_rate(&flux, &[0.0; 4], 1).unwrap(), 0.0);
    }

    #[test]
    fn l2_error_reproduces_linear_fields() {
        let mesh = build_channel_mesh(4.0, 2.0, 4, 2, InflowMode::LagrangeMultiplier).unwrap();
        let field: Vec<f64> = mesh
            .vertices()
            .iter()
            .flat_map(|&[x, y]| [2.0 * x - y, 0.5 * y + 1.0])
            .collect();
        let err = l2_error_velocity(&mesh, &field, |x, y| [2.0 * x - y, 0.5 * y + 1.0]).unwrap();
        assert!(err < 1e-12, "interpolant error {err}");
    }

    #[test]
    fn l2_error_of_zero_against_one_is_domain_measure() {
        // field 0 vs exact 1 on a domain of area 1: error = 1
        let mesh = build_channel_mesh(1.0, 1.0, 2, 2, InflowMode::LagrangeMultiplier).unwrap();
        let field = vec![0.0; 2 * mesh.num_vertices()];
        let err = l2_error_velocity(&mesh, &field, |_, _| [1.0, 0.0]).unwrap();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_interpolation_error_is_second_order() {
        let exact = |x: f64, y: f64| [(0.9 * x).sin() * (1.3 * y).cos(), (x * 0.4 + y).cos()];
        let mut errs = Vec::new();
        for lvl in 0..2 {
            let n = 4 << lvl;
            let mesh =
                build_channel_mesh(4.0, 4.0, n, n, InflowMode::LagrangeMultiplier).unwrap();
            let field: Vec<f64> = mesh
                .vertices()
                .iter()
                .flat_map(|&[x, y]| exact(x, y))
                .collect();
            errs.push(l2_error_velocity(&mesh, &field, exact).unwrap());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.5..4.5).contains(&ratio),
            "halving h gave ratio {ratio}, errors {errs:?}"
        );
    }
}

//! Brute-force validation of the pulsatile channel solution.
//!
//! An independent Crank-Nicolson solver discretizes
//! `du/dt = g(t) + nu d2u/dy2` on [0, H] with homogeneous Dirichlet ends and
//! treats the uniform forcing g(t) as an extra unknown fixed by the flux
//! constraint `int u dy = Q0 sin(w t)` at every step (a bordered tridiagonal
//! system). It never sees the closed form: the constraint is enforced
//! directly, so agreement at the periodic steady state validates the
//! complex-exponential solution end to end.

use defective_flow::oracle::{womersley_channel_velocity, ChannelFlowSpec};

/// Prefactored constant tridiagonal solver (Thomas algorithm).
struct Tridiag {
    // forward-swept upper coefficients and pivots for the constant matrix
    cp: Vec<f64>,
    pivots: Vec<f64>,
    lower: Vec<f64>,
}

impl Tridiag {
    /// Matrix with constant diagonals (lower, diag, upper) of size n.
    fn new(lower: f64, diag: f64, upper: f64, n: usize) -> Self {
        let mut cp = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        pivots[0] = diag;
        cp[0] = upper / diag;
        for i in 1..n {
            pivots[i] = diag - lower * cp[i - 1];
            cp[i] = upper / pivots[i];
        }
        Tridiag {
            cp,
            pivots,
            lower: vec![lower; n],
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        x[0] = b[0] / self.pivots[0];
        for i in 1..n {
            x[i] = (b[i] - self.lower[i] * x[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
        x
    }
}

/// Crank-Nicolson solve of the flux-constrained heat equation, returning the
/// full profile (including boundary zeros) at the requested time.
fn crank_nicolson_constrained_profile(
    spec: &ChannelFlowSpec,
    grid_points: usize,
    steps_per_period: usize,
    periods: usize,
    sample_time: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n_interior = grid_points - 2;
    let h = spec.height / (grid_points - 1) as f64;
    let period = 2.0 * std::f64::consts::PI / spec.angular_frequency;
    let dt = period / steps_per_period as f64;
    let r = spec.viscosity * dt / (2.0 * h * h);

    // (I - r L) u^{n+1} - dt g 1 = (I + r L) u^n, plus trapezoid flux constraint
    let t_matrix = Tridiag::new(-r, 1.0 + 2.0 * r, -r, n_interior);
    // trapezoid weights on interior nodes (boundary values are zero)
    let w: Vec<f64> = vec![h; n_interior];

    // s = T^{-1} 1, reused every step (the matrix is constant)
    let s = t_matrix.solve(&vec![1.0; n_interior]);
    let ws: f64 = w.iter().zip(&s).map(|(a, b)| a * b).sum();

    let mut u = vec![0.0f64; n_interior];
    let total_steps = steps_per_period * periods;
    let sample_step = (sample_time / dt).round() as usize;
    assert!(
        (sample_step as f64 * dt - sample_time).abs() < 1e-9,
        "sample time must land on a step"
    );
    assert!(sample_step <= total_steps);

    let mut profile_at_sample = None;
    for n in 0..total_steps {
        let t_next = (n + 1) as f64 * dt;
        let q_next = spec.flow_rate * (spec.angular_frequency * t_next).sin();
        // rhs = (I + r L) u^n
        let mut rhs = vec![0.0; n_interior];
        for i in 0..n_interior {
            let um = if i > 0 { u[i - 1] } else { 0.0 };
            let up = if i + 1 < n_interior { u[i + 1] } else { 0.0 };
            rhs[i] = (1.0 - 2.0 * r) * u[i] + r * (um + up);
        }
        let v = t_matrix.solve(&rhs);
        let wv: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let g = (q_next - wv) / (dt * ws);
        for i in 0..n_interior {
            u[i] = v[i] + dt * g * s[i];
        }
        if n + 1 == sample_step {
            let mut full = vec![0.0];
            full.extend_from_slice(&u);
            full.push(0.0);
            profile_at_sample = Some(full);
        }
    }
    let ys: Vec<f64> = (0..grid_points).map(|i| i as f64 * h).collect();
    (ys, profile_at_sample.expect("sample step inside run"))
}

#[test]
fn closed_form_matches_crank_nicolson_at_peak() {
    let spec = ChannelFlowSpec {
        height: 6.0,
        viscosity: 3.3,
        flow_rate: 60.0,
        angular_frequency: 2.0 * std::f64::consts::PI,
    };
    // peak-flow instant of the fourth period: transients are long gone
    let sample_time = 3.25;
    let (ys, cn) =
        crank_nicolson_constrained_profile(&spec, 2000, 20000, 4, sample_time);
    let scale = cn.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (y, u_cn) in ys.iter().zip(&cn) {
        let u_exact = womersley_channel_velocity(&spec, *y, sample_time).unwrap();
        worst = worst.max((u_cn - u_exact).abs());
    }
    assert!(
        worst <= 1e-4 * scale,
        "max deviation {worst:.3e} vs scale {scale:.3e}"
    );
}

#[test]
fn closed_form_matches_crank_nicolson_off_peak() {
    let spec = ChannelFlowSpec {
        height: 6.0,
        viscosity: 3.3,
        flow_rate: 60.0,
        angular_frequency: 2.0 * std::f64::consts::PI,
    };
    // an arbitrary instant in the fourth period (taken at a step multiple)
    let sample_time = 3.6;
    let (ys, cn) =
        crank_nicolson_constrained_profile(&spec, 2000, 20000, 4, sample_time);
    let scale = spec.flow_rate / spec.height; // mean-velocity scale
    let mut worst = 0.0f64;
    for (y, u_cn) in ys.iter().zip(&cn) {
        let u_exact = womersley_channel_velocity(&spec, *y, sample_time).unwrap();
        worst = worst.max((u_cn - u_exact).abs());
    }
    assert!(
        worst <= 1e-4 * scale,
        "max deviation {worst:.3e} vs scale {scale:.3e}"
    );
}

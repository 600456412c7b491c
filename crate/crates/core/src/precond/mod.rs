//! Block preconditioners for the monolithic velocity/pressure/multiplier
//! system, all derived from inexact block LU factorizations.
//!
//! The 2x2 SIMPLE factorization approximates the momentum inverse by
//! `diag(K)^-1` so the pressure Schur complement can be assembled explicitly;
//! its augmented 3x3 extension additionally assembles the multiplier
//! couplings and an m-by-m multiplier block, which keeps the flow-rate rows
//! of the preconditioner exact. The identity-block extension keeps the
//! multiplier equations unpreconditioned and serves as the baseline the
//! augmented variant is benchmarked against. An exact block LU (affordable
//! only at small sizes) provides the reference preconditioner that converges
//! in at most two GMRES iterations.

pub mod inner;

pub use inner::{InnerKind, InnerSolver};

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::krylov::PrecondOp;
use crate::sparse::{
    scaled_triple_product, BandedLu, BlockMatrixBuilder, DenseLu, DenseMatrix, MonolithicVector,
    SparseMatrix,
};

/// Approximation of the momentum inverse in the general inexact LU family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HKind {
    /// diag(K)^-1 (SIMPLE).
    DiagK,
    /// dt * diag(M)^-1 (Chorin-Temam style; the mass inverse is approximated
    /// by its diagonal so the Schur block stays assemblable).
    DtMassInv,
    /// The momentum inner solver itself (Yosida's upper factor).
    ExactK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Simple,
    GeneralLu { h1: HKind, h2: HKind },
    AugSimple,
    AugIdentity,
    ExactAugLu,
}

/// H2 action in the upper triangular factor.
#[derive(Debug, Clone)]
enum UpperAction {
    Diag(Vec<f64>),
    MomentumSolve,
}

/// Shared 2x2 core: lower factor [[K, 0], [-B, Sigma]], upper factor
/// [[I, H2 B^T], [0, I]].
#[derive(Debug, Clone)]
pub struct SimpleCore {
    n_u: usize,
    n_p: usize,
    /// Diagonal H1 used to assemble the Schur block.
    h1: Vec<f64>,
    upper: UpperAction,
    schur: SparseMatrix,
    momentum_solver: InnerSolver,
    schur_solver: InnerSolver,
    div: SparseMatrix,
    div_t: SparseMatrix,
}

impl SimpleCore {
    pub fn schur(&self) -> &SparseMatrix {
        &self.schur
    }

    pub fn h1_diag(&self) -> &[f64] {
        &self.h1
    }

    fn apply(&self, r_u: &[f64], r_p: &[f64], z_u: &mut [f64], z_p: &mut [f64]) -> Result<()> {
        // forward: K y1 = r1;  Sigma y2 = r2 + B y1
        let mut y1 = vec![0.0; self.n_u];
        self.momentum_solver
            .solve_into(r_u, &mut y1)
            .map_err(|e| Error::InnerSolve {
                step: "momentum solve",
                source: Box::new(e),
            })?;
        let mut rhs_p = self.div.mul_vec(&y1)?;
        for (t, r) in rhs_p.iter_mut().zip(r_p) {
            *t += r;
        }
        let mut y2 = vec![0.0; self.n_p];
        self.schur_solver
            .solve_into(&rhs_p, &mut y2)
            .map_err(|e| Error::InnerSolve {
                step: "schur solve",
                source: Box::new(e),
            })?;
        // backward: z2 = y2;  z1 = y1 - H2 B^T z2
        z_p.copy_from_slice(&y2);
        let bt_z2 = self.div_t.mul_vec(z_p)?;
        match &self.upper {
            UpperAction::Diag(d) => {
                for i in 0..self.n_u {
                    z_u[i] = y1[i] - d[i] * bt_z2[i];
                }
            }
            UpperAction::MomentumSolve => {
                let mut corr = vec![0.0; self.n_u];
                self.momentum_solver
                    .solve_into(&bt_z2, &mut corr)
                    .map_err(|e| Error::InnerSolve {
                        step: "upper momentum solve",
                        source: Box::new(e),
                    })?;
                for i in 0..self.n_u {
                    z_u[i] = y1[i] - corr[i];
                }
            }
        }
        Ok(())
    }
}

/// Augmented 3x3 core (`aug-aS`).
#[derive(Debug, Clone)]
pub struct AugCore {
    simple: SimpleCore,
    n_lm: usize,
    /// W^-1 = diag(Sigma)^-1.
    schur_diag_inv: Vec<f64>,
    /// Phi D^-1 B^T (m x n_p).
    flux_pressure: SparseMatrix,
    /// B D^-1 Phi^T (n_p x m).
    pressure_flux: SparseMatrix,
    /// Phi D^-1 Phi^T (m x m).
    flux_schur: DenseMatrix,
    /// L33 = (Phi D^-1 B^T) W^-1 (B D^-1 Phi^T) - Phi D^-1 Phi^T.
    multiplier_block: DenseMatrix,
    multiplier_lu: Option<DenseLu>,
    flux: SparseMatrix,
    flux_t: SparseMatrix,
}

impl AugCore {
    pub fn momentum_diag_inv(&self) -> &[f64] {
        &self.simple.h1
    }

    pub fn schur(&self) -> &SparseMatrix {
        &self.simple.schur
    }

    pub fn schur_diag_inv(&self) -> &[f64] {
        &self.schur_diag_inv
    }

    pub fn flux_pressure(&self) -> &SparseMatrix {
        &self.flux_pressure
    }

    pub fn pressure_flux(&self) -> &SparseMatrix {
        &self.pressure_flux
    }

    pub fn flux_schur(&self) -> &DenseMatrix {
        &self.flux_schur
    }

    pub fn multiplier_block(&self) -> &DenseMatrix {
        &self.multiplier_block
    }

    /// The six preconditioned-residual steps: three forward solves
    /// (momentum, Schur, multiplier block) and three backward corrections.
    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        let (n_u, n_p, m) = (self.simple.n_u, self.simple.n_p, self.n_lm);
        let (r_u, rest) = r.split_at(n_u);
        let (r_p, r_lm) = rest.split_at(n_p);

        // forward sweep
        let mut y1 = vec![0.0; n_u];
        self.simple
            .momentum_solver
            .solve_into(r_u, &mut y1)
            .map_err(|e| Error::InnerSolve {
                step: "momentum solve",
                source: Box::new(e),
            })?;
        let mut rhs_p = self.simple.div.mul_vec(&y1)?;
        for (t, rp) in rhs_p.iter_mut().zip(r_p) {
            *t += rp;
        }
        let mut y2 = vec![0.0; n_p];
        self.simple
            .schur_solver
            .solve_into(&rhs_p, &mut y2)
            .map_err(|e| Error::InnerSolve {
                step: "schur solve",
                source: Box::new(e),
            })?;
        let flux_y1 = self.flux.mul_vec(&y1)?;
        let coupling_y2 = self.flux_pressure.mul_vec(&y2)?;
        let mut rhs_lm = vec![0.0; m];
        for i in 0..m {
            rhs_lm[i] = r_lm[i] - flux_y1[i] + coupling_y2[i];
        }
        let y3 = match &self.multiplier_lu {
            Some(lu) => lu.solve(&rhs_lm).map_err(|e| Error::InnerSolve {
                step: "multiplier solve",
                source: Box::new(e),
            })?,
            None => Vec::new(),
        };

        // backward sweep
        let (z_u, z_rest) = z.split_at_mut(n_u);
        let (z_p, z_lm) = z_rest.split_at_mut(n_p);
        z_lm.copy_from_slice(&y3);
        let pf_z3 = self.pressure_flux.mul_vec(z_lm)?;
        for i in 0..n_p {
            z_p[i] = y2[i] - self.schur_diag_inv[i] * pf_z3[i];
        }
        let bt_z2 = self.simple.div_t.mul_vec(z_p)?;
        let ft_z3 = self.flux_t.mul_vec(z_lm)?;
        let dinv = &self.simple.h1;
        for i in 0..n_u {
            z_u[i] = y1[i] - dinv[i] * (bt_z2[i] + ft_z3[i]);
        }
        Ok(())
    }
}

/// Exact block LU of the augmented matrix: exact momentum solves, the exact
/// pressure Schur complement and the exact multiplier block.
#[derive(Debug, Clone)]
pub struct ExactAugCore {
    n_u: usize,
    n_p: usize,
    n_lm: usize,
    momentum_lu: BandedLu,
    schur_exact: DenseMatrix,
    schur_lu: DenseLu,
    /// Phi K^-1 B^T (m x n_p).
    coupling_lp: DenseMatrix,
    /// SigmaExact^-1 B K^-1 Phi^T (n_p x m), the upper-factor (2,3) block.
    upper_pl: DenseMatrix,
    multiplier_exact: DenseMatrix,
    multiplier_lu: Option<DenseLu>,
    div: SparseMatrix,
    div_t: SparseMatrix,
    flux: SparseMatrix,
    flux_t: SparseMatrix,
}

impl ExactAugCore {
    pub fn schur_exact(&self) -> &DenseMatrix {
        &self.schur_exact
    }

    pub fn coupling_lp(&self) -> &DenseMatrix {
        &self.coupling_lp
    }

    pub fn upper_pl(&self) -> &DenseMatrix {
        &self.upper_pl
    }

    pub fn multiplier_exact(&self) -> &DenseMatrix {
        &self.multiplier_exact
    }

    /// Exact momentum solve (used by tests to reconstruct the dense factors).
    pub fn momentum_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.momentum_lu.solve(b)
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        let (n_u, n_p, m) = (self.n_u, self.n_p, self.n_lm);
        let (r_u, rest) = r.split_at(n_u);
        let (r_p, r_lm) = rest.split_at(n_p);

        let y1 = self.momentum_lu.solve(r_u).map_err(|e| Error::InnerSolve {
            step: "momentum solve",
            source: Box::new(e),
        })?;
        let mut rhs_p = self.div.mul_vec(&y1)?;
        for (t, rp) in rhs_p.iter_mut().zip(r_p) {
            *t += rp;
        }
        let y2 = self.schur_lu.solve(&rhs_p).map_err(|e| Error::InnerSolve {
            step: "schur solve",
            source: Box::new(e),
        })?;
        let flux_y1 = self.flux.mul_vec(&y1)?;
        let coupling_y2 = self.coupling_lp.mul_vec(&y2)?;
        let mut rhs_lm = vec![0.0; m];
        for i in 0..m {
            rhs_lm[i] = r_lm[i] - flux_y1[i] + coupling_y2[i];
        }
        let y3 = match &self.multiplier_lu {
            Some(lu) => lu.solve(&rhs_lm).map_err(|e| Error::InnerSolve {
                step: "multiplier solve",
                source: Box::new(e),
            })?,
            None => Vec::new(),
        };

        let (z_u, z_rest) = z.split_at_mut(n_u);
        let (z_p, z_lm) = z_rest.split_at_mut(n_p);
        z_lm.copy_from_slice(&y3);
        let upl_z3 = self.upper_pl.mul_vec(z_lm)?;
        for i in 0..n_p {
            z_p[i] = y2[i] - upl_z3[i];
        }
        let mut corr = self.div_t.mul_vec(z_p)?;
        let ft_z3 = self.flux_t.mul_vec(z_lm)?;
        for (c, f) in corr.iter_mut().zip(&ft_z3) {
            *c += f;
        }
        let kcorr = self.momentum_lu.solve(&corr).map_err(|e| Error::InnerSolve {
            step: "upper momentum solve",
            source: Box::new(e),
        })?;
        for i in 0..n_u {
            z_u[i] = y1[i] - kcorr[i];
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum PreconditionerState {
    Simple { core: SimpleCore, variant: Variant },
    AugSimple(AugCore),
    AugIdentity { core: SimpleCore, n_lm: usize },
    ExactAugLu(ExactAugCore),
}

impl PreconditionerState {
    pub fn variant(&self) -> Variant {
        match self {
            PreconditionerState::Simple { variant, .. } => *variant,
            PreconditionerState::AugSimple(_) => Variant::AugSimple,
            PreconditionerState::AugIdentity { .. } => Variant::AugIdentity,
            PreconditionerState::ExactAugLu(_) => Variant::ExactAugLu,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PreconditionerState::Simple { core, .. } => core.n_u + core.n_p,
            PreconditionerState::AugSimple(aug) => aug.simple.n_u + aug.simple.n_p + aug.n_lm,
            PreconditionerState::AugIdentity { core, n_lm } => core.n_u + core.n_p + n_lm,
            PreconditionerState::ExactAugLu(core) => core.n_u + core.n_p + core.n_lm,
        }
    }

    /// z = P^-1 r.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        if r.len() != self.dim() || z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "preconditioner apply: vector length {} for dimension {}",
                r.len(),
                self.dim()
            )));
        }
        match self {
            PreconditionerState::Simple { core, .. } => {
                let (r_u, r_p) = r.split_at(core.n_u);
                let (z_u, z_p) = z.split_at_mut(core.n_u);
                core.apply(r_u, r_p, z_u, z_p)
            }
            PreconditionerState::AugSimple(aug) => aug.apply(r, z),
            PreconditionerState::AugIdentity { core, .. } => {
                let (r_u, rest) = r.split_at(core.n_u);
                let (r_p, r_lm) = rest.split_at(core.n_p);
                let (z_u, z_rest) = z.split_at_mut(core.n_u);
                let (z_p, z_lm) = z_rest.split_at_mut(core.n_p);
                core.apply(r_u, r_p, z_u, z_p)?;
                z_lm.copy_from_slice(r_lm);
                Ok(())
            }
            PreconditionerState::ExactAugLu(core) => core.apply(r, z),
        }
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = vec![0.0; self.dim()];
        self.apply_into(r, &mut z)?;
        Ok(z)
    }
}

impl PrecondOp for PreconditionerState {
    fn dim(&self) -> usize {
        PreconditionerState::dim(self)
    }
    fn apply_into(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        PreconditionerState::apply_into(self, r, z)
    }
}

fn momentum_diag_inverse(sys: &BlockSystem) -> Result<Vec<f64>> {
    sys.momentum
        .diag_inverse(1e-14 * sys.momentum.max_abs().max(f64::MIN_POSITIVE))
}

fn build_simple_core(
    sys: &BlockSystem,
    h1_kind: HKind,
    h2_kind: HKind,
    momentum_inner: InnerKind,
    schur_inner: InnerKind,
) -> Result<SimpleCore> {
    let h1 = match h1_kind {
        HKind::DiagK => momentum_diag_inverse(sys)?,
        HKind::DtMassInv => dt_mass_diag_inv(sys)?,
        HKind::ExactK => {
            return Err(Error::Config(
                "H1 must be a diagonal approximation (DiagK or DtMassInv): \
                 the Schur block is assembled explicitly"
                    .to_string(),
            ))
        }
    };
    let upper = match h2_kind {
        HKind::DiagK => UpperAction::Diag(momentum_diag_inverse(sys)?),
        HKind::DtMassInv => UpperAction::Diag(dt_mass_diag_inv(sys)?),
        HKind::ExactK => UpperAction::MomentumSolve,
    };
    let schur = scaled_triple_product(&sys.div, &h1, &sys.div)?.add_scaled(&sys.stab, 1.0)?;
    let momentum_solver = InnerSolver::build(momentum_inner, &sys.momentum)?;
    let schur_solver = InnerSolver::build(schur_inner, &schur)?;
    Ok(SimpleCore {
        n_u: sys.n_u(),
        n_p: sys.n_p(),
        h1,
        upper,
        schur,
        momentum_solver,
        schur_solver,
        div: sys.div.clone(),
        div_t: sys.div_t.clone(),
    })
}

fn dt_mass_diag_inv(sys: &BlockSystem) -> Result<Vec<f64>> {
    let dt = sys.dt.ok_or_else(|| {
        Error::Config(
            "DtMassInv needs the unsteady system (steady Stokes has no mass term)".to_string(),
        )
    })?;
    let mut out = vec![0.0; sys.n_u()];
    for (i, &m) in sys.mass_diag.iter().enumerate() {
        if m <= 0.0 {
            return Err(Error::SingularDiagonal { row: i });
        }
        out[i] = dt / m;
    }
    Ok(out)
}

/// Standard SIMPLE on the velocity/pressure block (the multiplier part, if
/// any, is ignored).
pub fn build_simple(
    sys: &BlockSystem,
    momentum_inner: InnerKind,
    schur_inner: InnerKind,
) -> Result<PreconditionerState> {
    let core = build_simple_core(sys, HKind::DiagK, HKind::DiagK, momentum_inner, schur_inner)?;
    Ok(PreconditionerState::Simple {
        core,
        variant: Variant::Simple,
    })
}

/// General inexact LU family: lower factor uses `B H1 B^T + S`, upper factor
/// uses `H2 B^T`. (DiagK, DiagK) is SIMPLE, (DtMassInv, DtMassInv) is the
/// Chorin-Temam variant, (DtMassInv, ExactK) is Yosida.
pub fn build_general_lu(
    sys: &BlockSystem,
    h1: HKind,
    h2: HKind,
    momentum_inner: InnerKind,
    schur_inner: InnerKind,
) -> Result<PreconditionerState> {
    let core = build_simple_core(sys, h1, h2, momentum_inner, schur_inner)?;
    Ok(PreconditionerState::Simple {
        core,
        variant: Variant::GeneralLu { h1, h2 },
    })
}

const MAX_MULTIPLIERS: usize = 32;

fn validate_flux_rows(sys: &BlockSystem) -> Result<()> {
    for i in 0..sys.n_lm() {
        let (_, vals) = sys.flux.row(i);
        if vals.iter().all(|v| *v == 0.0) {
            return Err(Error::Config(format!(
                "flow section {} has an all-zero flux row",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Augmented SIMPLE (`aug-aS`): assembles the multiplier couplings
/// explicitly and dense-factorizes the m-by-m multiplier block.
pub fn build_aug_simple(
    sys: &BlockSystem,
    momentum_inner: InnerKind,
    schur_inner: InnerKind,
) -> Result<PreconditionerState> {
    let m = sys.n_lm();
    if m > MAX_MULTIPLIERS {
        return Err(Error::Config(format!(
            "{m} multipliers exceed the dense multiplier-block guard ({MAX_MULTIPLIERS})"
        )));
    }
    validate_flux_rows(sys)?;
    let simple = build_simple_core(sys, HKind::DiagK, HKind::DiagK, momentum_inner, schur_inner)?;
    let dinv = simple.h1.clone();

    let schur_diag = simple.schur.diagonal();
    let mut schur_diag_inv = vec![0.0; schur_diag.len()];
    let floor = 1e-14 * simple.schur.max_abs().max(f64::MIN_POSITIVE);
    for (i, &w) in schur_diag.iter().enumerate() {
        if w.abs() < floor {
            return Err(Error::SingularDiagonal { row: i });
        }
        schur_diag_inv[i] = 1.0 / w;
    }

    let flux_pressure = scaled_triple_product(&sys.flux, &dinv, &sys.div)?;
    let pressure_flux = scaled_triple_product(&sys.div, &dinv, &sys.flux)?;
    let flux_schur = scaled_triple_product(&sys.flux, &dinv, &sys.flux)?.to_dense();
    let fp_w_pf =
        scaled_triple_product(&flux_pressure, &schur_diag_inv, &pressure_flux.transpose())?
            .to_dense();
    let multiplier_block = fp_w_pf.add_scaled(&flux_schur, -1.0)?;
    let multiplier_lu = if m > 0 {
        Some(DenseLu::factor(&multiplier_block)?)
    } else {
        None
    };

    Ok(PreconditionerState::AugSimple(AugCore {
        simple,
        n_lm: m,
        schur_diag_inv,
        flux_pressure,
        pressure_flux,
        flux_schur,
        multiplier_block,
        multiplier_lu,
        flux: sys.flux.clone(),
        flux_t: sys.flux_t.clone(),
    }))
}

/// Identity-block extension (`aug-aS-I`): SIMPLE on the velocity/pressure
/// block, multipliers passed through unchanged.
pub fn build_aug_identity(
    sys: &BlockSystem,
    momentum_inner: InnerKind,
    schur_inner: InnerKind,
) -> Result<PreconditionerState> {
    let core = build_simple_core(sys, HKind::DiagK, HKind::DiagK, momentum_inner, schur_inner)?;
    Ok(PreconditionerState::AugIdentity {
        core,
        n_lm: sys.n_lm(),
    })
}

const EXACT_LU_MAX_DIM: usize = 5000;

/// Exact block LU of the augmented matrix. Direct factorizations of the
/// momentum block and the exact pressure Schur complement are affordable only
/// at small sizes, hence the dimension guard.
pub fn build_exact_aug_lu(sys: &BlockSystem) -> Result<PreconditionerState> {
    let (n_u, n_p, m) = (sys.n_u(), sys.n_p(), sys.n_lm());
    let n = n_u + n_p + m;
    if n > EXACT_LU_MAX_DIM {
        return Err(Error::Config(format!(
            "exact block LU limited to systems of dimension <= {EXACT_LU_MAX_DIM}, got {n}"
        )));
    }
    validate_flux_rows(sys)?;
    let momentum_lu = BandedLu::factor(&sys.momentum)?;

    // W = K^-1 B^T, column by column
    let mut k_inv_bt = DenseMatrix::zeros(n_u, n_p);
    let mut rhs = vec![0.0; n_u];
    for j in 0..n_p {
        rhs.fill(0.0);
        let (cols, vals) = sys.div.row(j);
        for (&c, &v) in cols.iter().zip(vals) {
            rhs[c] = v;
        }
        let col = momentum_lu.solve(&rhs)?;
        for i in 0..n_u {
            k_inv_bt.set(i, j, col[i]);
        }
    }

    // SigmaExact = B K^-1 B^T + S
    let mut schur_exact = DenseMatrix::zeros(n_p, n_p);
    for j in 0..n_p {
        let colj: Vec<f64> = (0..n_u).map(|i| k_inv_bt.get(i, j)).collect();
        let bcol = sys.div.mul_vec(&colj)?;
        for i in 0..n_p {
            schur_exact.set(i, j, bcol[i]);
        }
    }
    for r in 0..n_p {
        let (cols, vals) = sys.stab.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            schur_exact.add_at(r, c, v);
        }
    }
    let schur_lu = DenseLu::factor(&schur_exact)?;

    // coupling_lp = Phi K^-1 B^T
    let mut coupling_lp = DenseMatrix::zeros(m, n_p);
    for j in 0..n_p {
        let colj: Vec<f64> = (0..n_u).map(|i| k_inv_bt.get(i, j)).collect();
        let fcol = sys.flux.mul_vec(&colj)?;
        for i in 0..m {
            coupling_lp.set(i, j, fcol[i]);
        }
    }

    // Z = K^-1 Phi^T, then B Z, SigmaExact^-1 B Z and Phi Z
    let mut upper_pl = DenseMatrix::zeros(n_p, m);
    let mut flux_k_flux = DenseMatrix::zeros(m, m);
    let mut x_y = DenseMatrix::zeros(m, m);
    for j in 0..m {
        rhs.fill(0.0);
        let (cols, vals) = sys.flux.row(j);
        for (&c, &v) in cols.iter().zip(vals) {
            rhs[c] = v;
        }
        let z_col = momentum_lu.solve(&rhs)?;
        let bz = sys.div.mul_vec(&z_col)?;
        let y_col = schur_lu.solve(&bz)?;
        for i in 0..n_p {
            upper_pl.set(i, j, y_col[i]);
        }
        let fz = sys.flux.mul_vec(&z_col)?;
        for i in 0..m {
            flux_k_flux.set(i, j, fz[i]);
        }
        let xy = coupling_lp.mul_vec(&y_col)?;
        for i in 0..m {
            x_y.set(i, j, xy[i]);
        }
    }
    let multiplier_exact = x_y.add_scaled(&flux_k_flux, -1.0)?;
    let multiplier_lu = if m > 0 {
        Some(DenseLu::factor(&multiplier_exact)?)
    } else {
        None
    };

    Ok(PreconditionerState::ExactAugLu(ExactAugCore {
        n_u,
        n_p,
        n_lm: m,
        momentum_lu,
        schur_exact,
        schur_lu,
        coupling_lp,
        upper_pl,
        multiplier_exact,
        multiplier_lu,
        div: sys.div.clone(),
        div_t: sys.div_t.clone(),
        flux: sys.flux.clone(),
        flux_t: sys.flux_t.clone(),
    }))
}

/// 3-step SIMPLE-like solve of `P_S x = (f, 0)`: intermediate velocity,
/// pressure, velocity correction.
pub fn simple_like_solve(state: &PreconditionerState, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let core = match state {
        PreconditionerState::Simple { core, .. } => core,
        PreconditionerState::AugIdentity { core, .. } => core,
        _ => {
            return Err(Error::Config(
                "simple_like_solve needs a SIMPLE-family preconditioner".to_string(),
            ))
        }
    };
    if f.len() != core.n_u {
        return Err(Error::Shape(format!(
            "momentum rhs has {} entries for {} dofs",
            f.len(),
            core.n_u
        )));
    }
    let mut u_tilde = vec![0.0; core.n_u];
    core.momentum_solver.solve_into(f, &mut u_tilde)?;
    let rhs_p = core.div.mul_vec(&u_tilde)?;
    let mut p = vec![0.0; core.n_p];
    core.schur_solver.solve_into(&rhs_p, &mut p)?;
    let bt_p = core.div_t.mul_vec(&p)?;
    let mut u = vec![0.0; core.n_u];
    match &core.upper {
        UpperAction::Diag(d) => {
            for i in 0..core.n_u {
                u[i] = u_tilde[i] - d[i] * bt_p[i];
            }
        }
        UpperAction::MomentumSolve => {
            let mut corr = vec![0.0; core.n_u];
            core.momentum_solver.solve_into(&bt_p, &mut corr)?;
            for i in 0..core.n_u {
                u[i] = u_tilde[i] - corr[i];
            }
        }
    }
    Ok((u, p))
}

/// 5-step augmented SIMPLE-like solve of `P_S^aug x = (f, 0, q)`:
/// intermediate velocity and pressure, multipliers, pressure correction,
/// velocity correction.
pub fn aug_simple_like_solve(
    state: &PreconditionerState,
    f: &[f64],
    q: &[f64],
) -> Result<MonolithicVector> {
    let aug = match state {
        PreconditionerState::AugSimple(aug) => aug,
        _ => {
            return Err(Error::Config(
                "aug_simple_like_solve needs the augmented SIMPLE preconditioner".to_string(),
            ))
        }
    };
    let (n_u, n_p, m) = (aug.simple.n_u, aug.simple.n_p, aug.n_lm);
    if f.len() != n_u || q.len() != m {
        return Err(Error::Shape(format!(
            "rhs sizes ({}, {}) for ({n_u}, {m})",
            f.len(),
            q.len()
        )));
    }
    let mut u_tilde = vec![0.0; n_u];
    aug.simple.momentum_solver.solve_into(f, &mut u_tilde)?;
    let rhs_p = aug.simple.div.mul_vec(&u_tilde)?;
    let mut p_tilde = vec![0.0; n_p];
    aug.simple.schur_solver.solve_into(&rhs_p, &mut p_tilde)?;

    let coupling_p = aug.flux_pressure.mul_vec(&p_tilde)?;
    let flux_u = aug.flux.mul_vec(&u_tilde)?;
    let mut rhs_lm = vec![0.0; m];
    for i in 0..m {
        rhs_lm[i] = q[i] + coupling_p[i] - flux_u[i];
    }
    let lm = match &aug.multiplier_lu {
        Some(lu) => lu.solve(&rhs_lm)?,
        None => Vec::new(),
    };

    let pf_lm = aug.pressure_flux.mul_vec(&lm)?;
    let mut p = vec![0.0; n_p];
    for i in 0..n_p {
        p[i] = p_tilde[i] - aug.schur_diag_inv[i] * pf_lm[i];
    }
    let bt_p = aug.simple.div_t.mul_vec(&p)?;
    let ft_lm = aug.flux_t.mul_vec(&lm)?;
    let dinv = &aug.simple.h1;
    let mut u = vec![0.0; n_u];
    for i in 0..n_u {
        u[i] = u_tilde[i] - dinv[i] * (bt_p[i] + ft_lm[i]);
    }
    Ok(MonolithicVector::from_parts(&u, &p, &lm))
}

/// Explicit error matrix `A_aug - P_S_aug` of the augmented SIMPLE
/// preconditioner. Only three blocks are non-zero:
/// (1,2) = (I - K D^-1) B^T, (1,3) = (I - K D^-1) Phi^T,
/// (2,3) = (I - Sigma W^-1) Sigma_PL; in particular the whole multiplier
/// block row vanishes, so the flow-rate equations are represented exactly.
pub fn error_matrix(state: &PreconditionerState, sys: &BlockSystem) -> Result<SparseMatrix> {
    let aug = match state {
        PreconditionerState::AugSimple(aug) => aug,
        _ => {
            return Err(Error::Config(
                "error_matrix is defined for the augmented SIMPLE preconditioner".to_string(),
            ))
        }
    };
    let (n_u, n_p, m) = (sys.n_u(), sys.n_p(), sys.n_lm());
    let dinv = &aug.simple.h1;
    let winv = &aug.schur_diag_inv;

    // (I - K D^-1) B^T and (I - K D^-1) Phi^T
    let k_dinv_bt = scaled_triple_product(&sys.momentum, dinv, &sys.div)?;
    let block_12 = sys.div_t.add_scaled(&k_dinv_bt, -1.0)?;
    let k_dinv_ft = scaled_triple_product(&sys.momentum, dinv, &sys.flux)?;
    let block_13 = sys.flux_t.add_scaled(&k_dinv_ft, -1.0)?;
    // (I - Sigma W^-1) Sigma_PL
    let s_winv_pf =
        scaled_triple_product(&aug.simple.schur, winv, &aug.pressure_flux.transpose())?;
    let block_23 = aug.pressure_flux.add_scaled(&s_winv_pf, -1.0)?;

    let n = n_u + n_p + m;
    let mut b = BlockMatrixBuilder::new(n, n);
    b.add_block(0, n_u, &block_12, 1.0);
    b.add_block(0, n_u + n_p, &block_13, 1.0);
    b.add_block(n_u, n_u + n_p, &block_23, 1.0);
    b.build()
}

/// The explicit (multiplied-out) preconditioner matrix, for verification.
pub fn explicit_preconditioner(
    state: &PreconditionerState,
    sys: &BlockSystem,
) -> Result<SparseMatrix> {
    let (n_u, n_p, m) = (sys.n_u(), sys.n_p(), sys.n_lm());
    match state {
        PreconditionerState::Simple { core, .. } => {
            let d = match &core.upper {
                UpperAction::Diag(d) => d,
                UpperAction::MomentumSolve => {
                    return Err(Error::Config(
                        "explicit form needs a diagonal upper factor".to_string(),
                    ))
                }
            };
            // [[K, K H2 B^T], [-B, S + B (H1 - H2) B^T]]
            let k_h2_bt = scaled_triple_product(&sys.momentum, d, &sys.div)?;
            let b_h1_bt = scaled_triple_product(&sys.div, &core.h1, &sys.div)?;
            let b_h2_bt = scaled_triple_product(&sys.div, d, &sys.div)?;
            let block_22 = sys
                .stab
                .add_scaled(&b_h1_bt, 1.0)?
                .add_scaled(&b_h2_bt, -1.0)?;
            let mut bld = BlockMatrixBuilder::new(n_u + n_p, n_u + n_p);
            bld.add_block(0, 0, &sys.momentum, 1.0);
            bld.add_block(0, n_u, &k_h2_bt, 1.0);
            bld.add_block(n_u, 0, &sys.div, -1.0);
            bld.add_block(n_u, n_u, &block_22, 1.0);
            bld.build()
        }
        PreconditionerState::AugSimple(aug) => {
            let dinv = &aug.simple.h1;
            let winv = &aug.schur_diag_inv;
            let k_dinv_bt = scaled_triple_product(&sys.momentum, dinv, &sys.div)?;
            let k_dinv_ft = scaled_triple_product(&sys.momentum, dinv, &sys.flux)?;
            // -(I - Sigma W^-1) Sigma_PL
            let s_winv_pf =
                scaled_triple_product(&aug.simple.schur, winv, &aug.pressure_flux.transpose())?;
            let block_23 = s_winv_pf.add_scaled(&aug.pressure_flux, -1.0)?;
            let n = n_u + n_p + m;
            let mut bld = BlockMatrixBuilder::new(n, n);
            bld.add_block(0, 0, &sys.momentum, 1.0);
            bld.add_block(0, n_u, &k_dinv_bt, 1.0);
            bld.add_block(0, n_u + n_p, &k_dinv_ft, 1.0);
            bld.add_block(n_u, 0, &sys.div, -1.0);
            bld.add_block(n_u, n_u, &sys.stab, 1.0);
            bld.add_block(n_u, n_u + n_p, &block_23, 1.0);
            bld.add_block(n_u + n_p, 0, &sys.flux, 1.0);
            bld.build()
        }
        PreconditionerState::AugIdentity { core, .. } => {
            let d = match &core.upper {
                UpperAction::Diag(d) => d,
                UpperAction::MomentumSolve => unreachable!("identity extension uses diag upper"),
            };
            let k_dinv_bt = scaled_triple_product(&sys.momentum, d, &sys.div)?;
            let n = n_u + n_p + m;
            let mut bld = BlockMatrixBuilder::new(n, n);
            bld.add_block(0, 0, &sys.momentum, 1.0);
            bld.add_block(0, n_u, &k_dinv_bt, 1.0);
            bld.add_block(n_u, 0, &sys.div, -1.0);
            bld.add_block(n_u, n_u, &sys.stab, 1.0);
            bld.add_identity(n_u + n_p, n_u + n_p, m, 1.0);
            bld.build()
        }
        PreconditionerState::ExactAugLu(_) => Err(Error::Config(
            "the exact LU factors are dense; use exact_lu_dense_factors".to_string(),
        )),
    }
}

/// The stored lower/upper factors as explicit sparse matrices (diagonal-H2
/// variants only), so the product L U can be compared with the explicit
/// preconditioner formula.
pub fn sparse_factors(
    state: &PreconditionerState,
    sys: &BlockSystem,
) -> Result<(SparseMatrix, SparseMatrix)> {
    let (n_u, n_p, m) = (sys.n_u(), sys.n_p(), sys.n_lm());
    match state {
        PreconditionerState::Simple { core, .. } => {
            let d = match &core.upper {
                UpperAction::Diag(d) => d,
                UpperAction::MomentumSolve => {
                    return Err(Error::Config(
                        "sparse factors need a diagonal upper factor".to_string(),
                    ))
                }
            };
            let n = n_u + n_p;
            let mut lower = BlockMatrixBuilder::new(n, n);
            lower.add_block(0, 0, &sys.momentum, 1.0);
            lower.add_block(n_u, 0, &sys.div, -1.0);
            lower.add_block(n_u, n_u, &core.schur, 1.0);
            let mut upper = BlockMatrixBuilder::new(n, n);
            upper.add_identity(0, 0, n_u, 1.0);
            upper.add_block(0, n_u, &sys.div_t.scale_rows(d)?, 1.0);
            upper.add_identity(n_u, n_u, n_p, 1.0);
            Ok((lower.build()?, upper.build()?))
        }
        PreconditionerState::AugSimple(aug) => {
            let n = n_u + n_p + m;
            let dinv = &aug.simple.h1;
            let mut lower = BlockMatrixBuilder::new(n, n);
            lower.add_block(0, 0, &sys.momentum, 1.0);
            lower.add_block(n_u, 0, &sys.div, -1.0);
            lower.add_block(n_u, n_u, &aug.simple.schur, 1.0);
            lower.add_block(n_u + n_p, 0, &sys.flux, 1.0);
            lower.add_block(n_u + n_p, n_u, &aug.flux_pressure, -1.0);
            lower.add_dense_block(n_u + n_p, n_u + n_p, &aug.multiplier_block, 1.0);
            let mut upper = BlockMatrixBuilder::new(n, n);
            upper.add_identity(0, 0, n_u, 1.0);
            upper.add_block(0, n_u, &sys.div_t.scale_rows(dinv)?, 1.0);
            upper.add_block(0, n_u + n_p, &sys.flux_t.scale_rows(dinv)?, 1.0);
            upper.add_identity(n_u, n_u, n_p, 1.0);
            upper.add_block(
                n_u,
                n_u + n_p,
                &aug.pressure_flux.scale_rows(&aug.schur_diag_inv)?,
                1.0,
            );
            upper.add_identity(n_u + n_p, n_u + n_p, m, 1.0);
            Ok((lower.build()?, upper.build()?))
        }
        PreconditionerState::AugIdentity { core, .. } => {
            let d = match &core.upper {
                UpperAction::Diag(d) => d,
                UpperAction::MomentumSolve => unreachable!(),
            };
            let n = n_u + n_p + m;
            let mut lower = BlockMatrixBuilder::new(n, n);
            lower.add_block(0, 0, &sys.momentum, 1.0);
            lower.add_block(n_u, 0, &sys.div, -1.0);
            lower.add_block(n_u, n_u, &core.schur, 1.0);
            lower.add_identity(n_u + n_p, n_u + n_p, m, 1.0);
            let mut upper = BlockMatrixBuilder::new(n, n);
            upper.add_identity(0, 0, n_u, 1.0);
            upper.add_block(0, n_u, &sys.div_t.scale_rows(d)?, 1.0);
            upper.add_identity(n_u, n_u, n_p, 1.0);
            upper.add_identity(n_u + n_p, n_u + n_p, m, 1.0);
            Ok((lower.build()?, upper.build()?))
        }
        PreconditionerState::ExactAugLu(_) => Err(Error::Config(
            "the exact LU factors are dense; use exact_lu_dense_factors".to_string(),
        )),
    }
}

/// Dense L and U of the exact augmented factorization (small systems only;
/// reconstructs K^-1 B^T and K^-1 Phi^T column by column).
pub fn exact_lu_dense_factors(
    state: &PreconditionerState,
    sys: &BlockSystem,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let core = match state {
        PreconditionerState::ExactAugLu(core) => core,
        _ => {
            return Err(Error::Config(
                "exact_lu_dense_factors needs the exact LU preconditioner".to_string(),
            ))
        }
    };
    let (n_u, n_p, m) = (core.n_u, core.n_p, core.n_lm);
    let n = n_u + n_p + m;
    let mut lower = DenseMatrix::zeros(n, n);
    let mut upper = DenseMatrix::zeros(n, n);

    let kd = sys.momentum.to_dense();
    for r in 0..n_u {
        for c in 0..n_u {
            lower.set(r, c, kd.get(r, c));
        }
    }
    let bd = sys.div.to_dense();
    for r in 0..n_p {
        for c in 0..n_u {
            lower.set(n_u + r, c, -bd.get(r, c));
        }
        for c in 0..n_p {
            lower.set(n_u + r, n_u + c, core.schur_exact.get(r, c));
        }
    }
    let fd = sys.flux.to_dense();
    for r in 0..m {
        for c in 0..n_u {
            lower.set(n_u + n_p + r, c, fd.get(r, c));
        }
        for c in 0..n_p {
            lower.set(n_u + n_p + r, n_u + c, -core.coupling_lp.get(r, c));
        }
        for c in 0..m {
            lower.set(n_u + n_p + r, n_u + n_p + c, core.multiplier_exact.get(r, c));
        }
    }

    for i in 0..n {
        upper.set(i, i, 1.0);
    }
    let mut rhs = vec![0.0; n_u];
    for j in 0..n_p {
        rhs.fill(0.0);
        let (cols, vals) = sys.div.row(j);
        for (&c, &v) in cols.iter().zip(vals) {
            rhs[c] = v;
        }
        let col = core.momentum_lu.solve(&rhs)?;
        for i in 0..n_u {
            upper.set(i, n_u + j, col[i]);
        }
    }
    for j in 0..m {
        rhs.fill(0.0);
        let (cols, vals) = sys.flux.row(j);
        for (&c, &v) in cols.iter().zip(vals) {
            rhs[c] = v;
        }
        let col = core.momentum_lu.solve(&rhs)?;
        for i in 0..n_u {
            upper.set(i, n_u + n_p + j, col[i]);
        }
        for i in 0..n_p {
            upper.set(n_u + i, n_u + n_p + j, core.upper_pl.get(i, j));
        }
    }
    Ok((lower, upper))
}

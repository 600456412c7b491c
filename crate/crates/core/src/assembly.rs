//! Stabilized P1-P1 finite element assembly of the monolithic blocks.
//!
//! Velocity unknowns are interleaved per vertex (`dof = 2*vertex + comp`),
//! pressure unknowns are vertex-indexed. The continuity row is written in the
//! skew form `-B U + S P = rhs_p`, where `[B]_{lj} = -(xi_l, div psi_j)` and
//! `S` is a Brezzi-Pitkaranta pressure-gradient penalty with elementwise
//! coefficient `tau_K = alpha h_K^2 / nu`; this keeps equal-order elements
//! stable without touching the momentum/flux block structure the
//! preconditioners rely on.
//!
//! Dirichlet constraints are eliminated (reduced system): constrained rows
//! and columns are removed and their columns are lifted into the right-hand
//! sides, so the momentum diagonal seen by the preconditioners is never
//! polluted by penalty entries.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, SectionId};
use crate::sparse::{BlockMatrixBuilder, MonolithicVector, SparseMatrix};

/// P1 shape-function gradients and area of one triangle.
fn triangle_geometry(mesh: &Mesh, t: usize) -> ([[f64; 2]; 3], f64, f64) {
    let tri = mesh.triangle(t);
    let p: [[f64; 2]; 3] = [
        mesh.vertex(tri[0]),
        mesh.vertex(tri[1]),
        mesh.vertex(tri[2]),
    ];
    let two_a = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let mut grads = [[0.0f64; 2]; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        let e = [b[0] - a[0], b[1] - a[1]];
        grads[i] = [-e[1] / two_a, e[0] / two_a];
    }
    let h = (0..3)
        .map(|i| {
            let a = p[i];
            let b = p[(i + 1) % 3];
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        })
        .fold(0.0f64, f64::max);
    (grads, two_a / 2.0, h)
}

/// Time-independent operators: velocity mass and stiffness, the divergence
/// block and the pressure stabilization.
#[derive(Debug, Clone)]
pub struct ConstantBlocks {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub div: SparseMatrix,
    pub stab: SparseMatrix,
    pub viscosity: f64,
    pub stab_alpha: f64,
}

pub fn assemble_constant_blocks(
    mesh: &Mesh,
    viscosity: f64,
    stab_alpha: f64,
) -> Result<ConstantBlocks> {
    if viscosity <= 0.0 {
        return Err(Error::Config(format!("viscosity must be positive: {viscosity}")));
    }
    let nv = mesh.num_vertices();
    let n_u = 2 * nv;
    let mut mass_t = Vec::new();
    let mut stiff_t = Vec::new();
    let mut div_t = Vec::new();
    let mut stab_t = Vec::new();

    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let (grads, area, h) = triangle_geometry(mesh, t);
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::Assembly(format!("degenerate triangle {t}")));
        }
        let tau = stab_alpha * h * h / viscosity;
        for a in 0..3 {
            for b in 0..3 {
                let m_ab = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                let k_ab = viscosity * area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                for c in 0..2 {
                    mass_t.push((2 * tri[a] + c, 2 * tri[b] + c, m_ab));
                    stiff_t.push((2 * tri[a] + c, 2 * tri[b] + c, k_ab));
                }
                stab_t.push((
                    tri[a],
                    tri[b],
                    tau * area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]),
                ));
            }
        }
        // [B]_{l,(b,c)} = -(xi_l, d/dx_c phi_b) with constant divergence per element
        for l in 0..3 {
            for b in 0..3 {
                for c in 0..2 {
                    div_t.push((tri[l], 2 * tri[b] + c, -area / 3.0 * grads[b][c]));
                }
            }
        }
    }

    Ok(ConstantBlocks {
        mass: SparseMatrix::from_triplets(n_u, n_u, &mass_t)?,
        stiffness: SparseMatrix::from_triplets(n_u, n_u, &stiff_t)?,
        div: SparseMatrix::from_triplets(nv, n_u, &div_t)?,
        stab: SparseMatrix::from_triplets(nv, nv, &stab_t)?,
        viscosity,
        stab_alpha,
    })
}

/// Convection matrix `C[k,j] = (a . grad psi_j, psi_k)` linearized at the
/// previous velocity `a = u_prev` (P1 interpolated). The integrand is
/// quadratic, so the nodal formula below is exact.
pub fn assemble_convection(mesh: &Mesh, u_prev: &[f64]) -> Result<SparseMatrix> {
    let nv = mesh.num_vertices();
    let n_u = 2 * nv;
    if u_prev.len() != n_u {
        return Err(Error::Shape(format!(
            "convection: velocity has {} entries for {} dofs",
            u_prev.len(),
            n_u
        )));
    }
    let mut trip = Vec::new();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let (grads, area, _) = triangle_geometry(mesh, t);
        for a in 0..3 {
            for b in 0..3 {
                // int phi_a (u_prev . grad phi_b) with u_prev = sum_v phi_v u_v
                let mut adv = 0.0;
                for v in 0..3 {
                    let w = area / 12.0 * if a == v { 2.0 } else { 1.0 };
                    adv += w
                        * (u_prev[2 * tri[v]] * grads[b][0]
                            + u_prev[2 * tri[v] + 1] * grads[b][1]);
                }
                for c in 0..2 {
                    trip.push((2 * tri[a] + c, 2 * tri[b] + c, adv));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n_u, n_u, &trip)
}

/// Flow-rate coupling matrix: `[Phi]_{ij} = int_{Gamma_i} psi_j . n`,
/// one row per Lagrange-multiplier section.
pub fn assemble_flux_matrix(mesh: &Mesh) -> Result<SparseMatrix> {
    let m = mesh.num_sections();
    let n_u = 2 * mesh.num_vertices();
    let mut trip = Vec::new();
    for i in 1..=m {
        let row = section_flux_row(mesh, SectionId::Flow(i))?;
        if row.is_empty() {
            return Err(Error::Assembly(format!("flow section {i} is empty")));
        }
        for (dof, w) in row {
            trip.push((i - 1, dof, w));
        }
    }
    let flux = SparseMatrix::from_triplets(m, n_u, &trip)?;
    for i in 0..m {
        let (_, vals) = flux.row(i);
        if vals.iter().all(|v| *v == 0.0) {
            return Err(Error::Assembly(format!("flow section {} has a zero flux row", i + 1)));
        }
    }
    Ok(flux)
}

/// The discrete flux functional of one boundary section as a sparse row over
/// velocity dofs: edge-wise trapezoid weights times the outward normal.
pub fn section_flux_row(mesh: &Mesh, id: SectionId) -> Result<Vec<(usize, f64)>> {
    let edges = mesh.section_edges(id);
    if edges.is_empty() {
        return Err(Error::Index(format!("section {id:?} has no edges")));
    }
    let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
    for e in edges {
        for &v in &e.vertices {
            for c in 0..2 {
                *acc.entry(2 * v + c).or_insert(0.0) += 0.5 * e.length * e.normal[c];
            }
        }
    }
    Ok(acc.into_iter().collect())
}

/// Prescribed velocity values on constrained dofs, stored sorted by dof.
#[derive(Debug, Clone, Default)]
pub struct DirichletData {
    pairs: Vec<(usize, f64)>,
}

impl DirichletData {
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!(
                    "dirichlet dof {} listed twice",
                    w[0].0
                )));
            }
        }
        Ok(DirichletData { pairs })
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Entries of `self` take precedence over `other` on shared dofs.
    /// Used to let wall no-slip win over profile data at section corners.
    pub fn override_onto(&self, other: &DirichletData) -> DirichletData {
        let mut map: std::collections::BTreeMap<usize, f64> =
            other.pairs.iter().copied().collect();
        for &(d, v) in &self.pairs {
            map.insert(d, v);
        }
        DirichletData {
            pairs: map.into_iter().collect(),
        }
    }
}

/// Zero velocity on every wall node (both components).
pub fn wall_dirichlet(mesh: &Mesh) -> DirichletData {
    let mut dofs: std::collections::BTreeSet<usize> = Default::default();
    for e in mesh.boundary_edges() {
        if e.tag == BoundaryTag::Wall {
            for &v in &e.vertices {
                dofs.insert(2 * v);
                dofs.insert(2 * v + 1);
            }
        }
    }
    DirichletData {
        pairs: dofs.into_iter().map(|d| (d, 0.0)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileShape {
    Parabolic,
    Flat,
}

/// Nodal velocity data imposing flow rate `q` through a straight section with
/// the given profile shape. The shape is rescaled so its *discrete* flux
/// (the section flux row dotted with the data) equals `q` exactly; note that
/// flat profiles lose that exactness if a later wall merge zeroes shared
/// corner nodes, which is why the shipped experiments use parabolic profiles.
pub fn dirichlet_profile(
    mesh: &Mesh,
    id: SectionId,
    q: f64,
    shape: ProfileShape,
) -> Result<DirichletData> {
    let edges = mesh.section_edges(id);
    if edges.is_empty() {
        return Err(Error::Index(format!("section {id:?} has no edges")));
    }
    let normal = edges[0].normal;
    for e in &edges {
        if (e.normal[0] - normal[0]).abs() > 1e-12 || (e.normal[1] - normal[1]).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "section {id:?} is not straight; profiles need a single normal"
            )));
        }
    }
    let length: f64 = edges.iter().map(|e| e.length).sum();
    if length <= 0.0 {
        return Err(Error::Domain(format!("section {id:?} has zero length")));
    }

    // arclength coordinate along the section
    let tangent = [-normal[1], normal[0]];
    let mut nodes: std::collections::BTreeMap<usize, f64> = Default::default();
    let mut weights: std::collections::BTreeMap<usize, f64> = Default::default();
    for e in &edges {
        for &v in &e.vertices {
            let p = mesh.vertex(v);
            nodes.insert(v, p[0] * tangent[0] + p[1] * tangent[1]);
            *weights.entry(v).or_insert(0.0) += 0.5 * e.length;
        }
    }
    let smin = nodes.values().cloned().fold(f64::INFINITY, f64::min);
    let smax = nodes.values().cloned().fold(f64::NEG_INFINITY, f64::max);

    let raw = |s: f64| match shape {
        ProfileShape::Parabolic => (s - smin) * (smax - s),
        ProfileShape::Flat => 1.0,
    };
    let discrete_flux: f64 = nodes.iter().map(|(v, &s)| raw(s) * weights[v]).sum();
    let scale = q / discrete_flux;

    let mut pairs = Vec::with_capacity(2 * nodes.len());
    for (&v, &s) in &nodes {
        let val = scale * raw(s);
        pairs.push((2 * v, val * normal[0]));
        pairs.push((2 * v + 1, val * normal[1]));
    }
    DirichletData::from_pairs(pairs)
}

/// The per-time-step block collection before Dirichlet elimination.
#[derive(Debug, Clone, Copy)]
pub struct NsBlocks<'a> {
    pub constant: &'a ConstantBlocks,
    /// Convection at the previous velocity; ignored in steady Stokes mode.
    pub convection: Option<&'a SparseMatrix>,
    /// Extra momentum operator hook (added to K unchanged; the
    /// preconditioners adapt through diag(K) without modification).
    pub extra_momentum: Option<&'a SparseMatrix>,
    pub flux: &'a SparseMatrix,
    /// Constant body force (per component); enters the momentum rhs as
    /// `(f, psi)`.
    pub body_force: [f64; 2],
    /// Prescribed flow rates at the new time level, one per section.
    pub flow_rates: &'a [f64],
    /// BDF1 time step; `None` selects the steady Stokes system
    /// (no mass term, no convection).
    pub dt: Option<f64>,
}

/// Mapping between full velocity dofs and the reduced (free) numbering.
#[derive(Debug, Clone)]
pub struct FreeDofMap {
    /// full dof -> reduced index (None when constrained)
    pub to_free: Vec<Option<usize>>,
    /// reduced index -> full dof
    pub to_full: Vec<usize>,
    /// constrained dofs with their prescribed values, sorted by dof
    pub constrained: Vec<(usize, f64)>,
}

impl FreeDofMap {
    fn build(n_full: usize, dirichlet: &DirichletData) -> Result<Self> {
        let mut to_free = vec![None; n_full];
        let mut constrained_mask = vec![false; n_full];
        for &(d, _) in dirichlet.pairs() {
            if d >= n_full {
                return Err(Error::Index(format!(
                    "dirichlet dof {d} out of {n_full} velocity dofs"
                )));
            }
            constrained_mask[d] = true;
        }
        let mut to_full = Vec::with_capacity(n_full - dirichlet.len());
        for d in 0..n_full {
            if !constrained_mask[d] {
                to_free[d] = Some(to_full.len());
                to_full.push(d);
            }
        }
        Ok(FreeDofMap {
            to_free,
            to_full,
            constrained: dirichlet.pairs().to_vec(),
        })
    }

    pub fn n_free(&self) -> usize {
        self.to_full.len()
    }

    /// Write the reduced velocity plus the prescribed values into a
    /// full-length vector.
    pub fn scatter(&self, free: &[f64], full: &mut [f64]) {
        for (i, &d) in self.to_full.iter().enumerate() {
            full[d] = free[i];
        }
        for &(d, v) in &self.constrained {
            full[d] = v;
        }
    }

    /// Extract the free part of a full-length vector.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.to_full.iter().map(|&d| full[d]).collect()
    }
}

/// One assembled, reduced monolithic system
/// `[[K, B^T, Phi^T], [-B, S, 0], [Phi, 0, 0]] x = rhs`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub momentum: SparseMatrix,
    pub div: SparseMatrix,
    pub div_t: SparseMatrix,
    pub stab: SparseMatrix,
    pub flux: SparseMatrix,
    pub flux_t: SparseMatrix,
    /// Diagonal of the reduced velocity mass matrix (zeros in steady mode).
    pub mass_diag: Vec<f64>,
    pub rhs: MonolithicVector,
    pub dt: Option<f64>,
    pub free_map: FreeDofMap,
}

impl BlockSystem {
    pub fn n_u(&self) -> usize {
        self.momentum.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.div.nrows()
    }

    pub fn n_lm(&self) -> usize {
        self.flux.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_u() + self.n_p() + self.n_lm()
    }

    /// y = A x for the monolithic operator.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let (n_u, n_p, m) = (self.n_u(), self.n_p(), self.n_lm());
        if x.len() != n_u + n_p + m || y.len() != x.len() {
            return Err(Error::Shape(format!(
                "monolithic apply: got {} entries, system has {}",
                x.len(),
                n_u + n_p + m
            )));
        }
        let (xu, rest) = x.split_at(n_u);
        let (xp, xl) = rest.split_at(n_p);
        {
            let (yu, rest) = y.split_at_mut(n_u);
            self.momentum.spmv_into(xu, yu, false)?;
            self.div_t.spmv_into(xp, yu, true)?;
            self.flux_t.spmv_into(xl, yu, true)?;
            let (yp, yl) = rest.split_at_mut(n_p);
            let bu = self.div.mul_vec(xu)?;
            self.stab.spmv_into(xp, yp, false)?;
            for (ypi, bui) in yp.iter_mut().zip(&bu) {
                *ypi -= bui;
            }
            self.flux.spmv_into(xu, yl, false)?;
        }
        Ok(())
    }

    /// Explicit monolithic matrix (verification and small systems only).
    pub fn assemble_monolithic(&self) -> Result<SparseMatrix> {
        let (n_u, n_p, m) = (self.n_u(), self.n_p(), self.n_lm());
        let n = n_u + n_p + m;
        let mut b = BlockMatrixBuilder::new(n, n);
        b.add_block(0, 0, &self.momentum, 1.0);
        b.add_block(0, n_u, &self.div_t, 1.0);
        b.add_block(0, n_u + n_p, &self.flux_t, 1.0);
        b.add_block(n_u, 0, &self.div, -1.0);
        b.add_block(n_u, n_u, &self.stab, 1.0);
        b.add_block(n_u + n_p, 0, &self.flux, 1.0);
        b.build()
    }
}

/// Assemble the reduced monolithic system of one time step (or the steady
/// Stokes system when `blocks.dt` is `None`).
pub fn build_time_step_system(
    blocks: &NsBlocks,
    prev_velocity: &[f64],
    dirichlet: &DirichletData,
) -> Result<BlockSystem> {
    let cb = blocks.constant;
    let n_u_full = cb.mass.nrows();
    let m = blocks.flux.nrows();
    if blocks.flow_rates.len() != m {
        return Err(Error::Shape(format!(
            "{} flow rates for {} sections",
            blocks.flow_rates.len(),
            m
        )));
    }
    if prev_velocity.len() != n_u_full {
        return Err(Error::Shape(format!(
            "previous velocity has {} entries for {} dofs",
            prev_velocity.len(),
            n_u_full
        )));
    }
    if let Some(dt) = blocks.dt {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive: {dt}")));
        }
    }

    // K = M/dt + A + C (+ G), or A (+ G) in steady Stokes mode
    let mut momentum_full = cb.stiffness.clone();
    if let Some(dt) = blocks.dt {
        momentum_full = momentum_full.add_scaled(&cb.mass, 1.0 / dt)?;
        if let Some(conv) = blocks.convection {
            momentum_full = momentum_full.add_scaled(conv, 1.0)?;
        }
    }
    if let Some(g) = blocks.extra_momentum {
        momentum_full = momentum_full.add_scaled(g, 1.0)?;
    }

    // momentum rhs: (f, psi) + (1/dt) M u^n
    let mut f_full = vec![0.0; n_u_full];
    if blocks.body_force != [0.0, 0.0] {
        // (f, phi_a e_c) = f_c * area/3 summed over elements; recover it from
        // the mass matrix row sums: sum_b M[(a,c),(b,c)] = int phi_a
        let ones = vec![1.0; n_u_full];
        let lumped = cb.mass.mul_vec(&ones)?;
        for a in 0..n_u_full / 2 {
            f_full[2 * a] += blocks.body_force[0] * lumped[2 * a];
            f_full[2 * a + 1] += blocks.body_force[1] * lumped[2 * a + 1];
        }
    }
    if let Some(dt) = blocks.dt {
        let mu = cb.mass.mul_vec(prev_velocity)?;
        for (f, m) in f_full.iter_mut().zip(&mu) {
            *f += m / dt;
        }
    }

    let free_map = FreeDofMap::build(n_u_full, dirichlet)?;
    let n_free = free_map.n_free();
    let free_cols: Vec<Option<usize>> = free_map.to_free.clone();
    let mut constrained_cols = vec![None; n_u_full];
    let g_values: Vec<f64> = free_map.constrained.iter().map(|&(_, v)| v).collect();
    for (k, &(d, _)) in free_map.constrained.iter().enumerate() {
        constrained_cols[d] = Some(k);
    }

    let k_rows = momentum_full.select_rows(&free_map.to_full)?;
    let momentum = k_rows.filter_cols(&free_cols, n_free)?;
    let k_fc = k_rows.filter_cols(&constrained_cols, g_values.len())?;
    let mut f_red = free_map.gather(&f_full);
    let lift = k_fc.mul_vec(&g_values)?;
    for (f, l) in f_red.iter_mut().zip(&lift) {
        *f -= l;
    }

    let div = cb.div.filter_cols(&free_cols, n_free)?;
    let div_c = cb.div.filter_cols(&constrained_cols, g_values.len())?;
    // continuity row: -B_f u + S p = B_c g
    let rhs_p = div_c.mul_vec(&g_values)?;

    let flux = blocks.flux.filter_cols(&free_cols, n_free)?;
    let flux_c = blocks.flux.filter_cols(&constrained_cols, g_values.len())?;
    let mut rhs_lm = blocks.flow_rates.to_vec();
    let flux_lift = flux_c.mul_vec(&g_values)?;
    for (q, l) in rhs_lm.iter_mut().zip(&flux_lift) {
        *q -= l;
    }

    let mass_diag = if blocks.dt.is_some() {
        let full_diag = cb.mass.diagonal();
        free_map.to_full.iter().map(|&d| full_diag[d]).collect()
    } else {
        vec![0.0; n_free]
    };

    Ok(BlockSystem {
        div_t: div.transpose(),
        flux_t: flux.transpose(),
        momentum,
        div,
        stab: cb.stab.clone(),
        flux,
        mass_diag,
        rhs: MonolithicVector::from_parts(&f_red, &rhs_p, &rhs_lm),
        dt: blocks.dt,
        free_map,
    })
}

//! Structured 2-D triangulations with tagged boundary segments.
//!
//! Two generators are provided: a straight channel and a multi-port
//! "manifold" channel whose ports can be switched, on a fixed triangulation,
//! between Lagrange-multiplier flow sections and Dirichlet-profile inlets.
//! That switch is the control variable of the multiplier-count scaling
//! experiment, so the geometry must not depend on the port modes.
//!
//! Lengths are in millimetres throughout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Homogeneous Dirichlet (no-slip).
    Wall,
    /// Homogeneous Neumann (free outflow). At least one Neumann segment must
    /// exist so the prescribed flow rates are unconstrained.
    Neumann,
    /// Flow-rate section i (1-based): the constraint is enforced through the
    /// i-th Lagrange multiplier.
    FlowSection(usize),
    /// Dirichlet-profile port j (1-based): the flow rate is imposed by a
    /// prescribed velocity profile instead of a multiplier.
    ProfilePort(usize),
}

/// Identifies a boundary section that carries a flow rate, in either mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionId {
    Flow(usize),
    Profile(usize),
}

impl SectionId {
    fn matches(&self, tag: BoundaryTag) -> bool {
        match (self, tag) {
            (SectionId::Flow(i), BoundaryTag::FlowSection(j)) => *i == j,
            (SectionId::Profile(i), BoundaryTag::ProfilePort(j)) => *i == j,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    /// Vertex indices of the edge endpoints.
    pub vertices: [usize; 2],
    /// The unique adjacent triangle.
    pub triangle: usize,
    pub tag: BoundaryTag,
    /// Outward unit normal of the adjacent triangle across this edge.
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    num_sections: usize,
    num_profile_ports: usize,
}

impl Mesh {
    /// Build a mesh from raw pieces, computing normals and validating:
    /// positive CCW triangle areas, tagged edges covering the boundary exactly
    /// once, non-empty contiguous section numbering.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tagged_edges: Vec<([usize; 2], BoundaryTag)>,
    ) -> Result<Mesh> {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::Assembly(format!(
                        "triangle {t} references vertex {v} out of {}",
                        vertices.len()
                    )));
                }
            }
            if triangle_area(&vertices, tri) <= 0.0 {
                return Err(Error::Assembly(format!(
                    "triangle {t} has non-positive area (vertices must be CCW)"
                )));
            }
        }

        // each undirected edge -> (occurrences, last triangle seen)
        let mut edge_use: std::collections::BTreeMap<(usize, usize), (usize, usize)> =
            std::collections::BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                let e = edge_use.entry(key).or_insert((0, t));
                e.0 += 1;
                e.1 = t;
            }
        }

        let mut boundary = Vec::with_capacity(tagged_edges.len());
        let mut seen: std::collections::BTreeSet<(usize, usize)> = Default::default();
        for (vs, tag) in &tagged_edges {
            let key = (vs[0].min(vs[1]), vs[0].max(vs[1]));
            let (count, tri) = *edge_use.get(&key).ok_or_else(|| {
                Error::Assembly(format!("tagged edge {vs:?} is not a mesh edge"))
            })?;
            if count != 1 {
                return Err(Error::Assembly(format!(
                    "tagged edge {vs:?} belongs to {count} triangles, not 1"
                )));
            }
            if !seen.insert(key) {
                return Err(Error::Assembly(format!("edge {vs:?} tagged twice")));
            }
            let (normal, length) = outward_normal(&vertices, &triangles[tri], *vs);
            boundary.push(BoundaryEdge {
                vertices: *vs,
                triangle: tri,
                tag: *tag,
                normal,
                length,
            });
        }
        let boundary_count = edge_use.values().filter(|(c, _)| *c == 1).count();
        if boundary_count != boundary.len() {
            return Err(Error::Assembly(format!(
                "{} boundary edges in the triangulation but {} tagged",
                boundary_count,
                boundary.len()
            )));
        }

        let num_sections = contiguous_tag_count(&boundary, |t| match t {
            BoundaryTag::FlowSection(i) => Some(i),
            _ => None,
        })?;
        let num_profile_ports = contiguous_tag_count(&boundary, |t| match t {
            BoundaryTag::ProfilePort(i) => Some(i),
            _ => None,
        })?;

        Ok(Mesh {
            vertices,
            triangles,
            boundary,
            num_sections,
            num_profile_ports,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of Lagrange-multiplier flow sections (m).
    pub fn num_sections(&self) -> usize {
        self.num_sections
    }

    pub fn num_profile_ports(&self) -> usize {
        self.num_profile_ports
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[t])
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn section_edges(&self, id: SectionId) -> Vec<&BoundaryEdge> {
        self.boundary
            .iter()
            .filter(|e| id.matches(e.tag))
            .collect()
    }

    /// Sum of tagged edge lengths of one section.
    pub fn section_length(&self, id: SectionId) -> Result<f64> {
        let in_range = match id {
            SectionId::Flow(i) => i >= 1 && i <= self.num_sections,
            SectionId::Profile(i) => i >= 1 && i <= self.num_profile_ports,
        };
        if !in_range {
            return Err(Error::Index(format!(
                "section {id:?} (mesh has {} flow sections, {} profile ports)",
                self.num_sections, self.num_profile_ports
            )));
        }
        Ok(self.section_edges(id).iter().map(|e| e.length).sum())
    }

    /// Number of distinct edges in the triangulation (for Euler checks).
    pub fn edge_count(&self) -> usize {
        let mut edges: std::collections::BTreeSet<(usize, usize)> = Default::default();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }
}

fn triangle_area(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn outward_normal(
    vertices: &[[f64; 2]],
    tri: &[usize; 3],
    edge: [usize; 2],
) -> ([f64; 2], f64) {
    let p0 = vertices[edge[0]];
    let p1 = vertices[edge[1]];
    let w = tri
        .iter()
        .copied()
        .find(|v| *v != edge[0] && *v != edge[1])
        .expect("edge must belong to triangle");
    let pw = vertices[w];
    let ex = p1[0] - p0[0];
    let ey = p1[1] - p0[1];
    let len = (ex * ex + ey * ey).sqrt();
    let mut n = [ey / len, -ex / len];
    // point away from the interior vertex
    if n[0] * (pw[0] - p0[0]) + n[1] * (pw[1] - p0[1]) > 0.0 {
        n = [-n[0], -n[1]];
    }
    (n, len)
}

fn contiguous_tag_count(
    boundary: &[BoundaryEdge],
    pick: impl Fn(BoundaryTag) -> Option<usize>,
) -> Result<usize> {
    let mut max = 0usize;
    for e in boundary {
        if let Some(i) = pick(e.tag) {
            if i == 0 {
                return Err(Error::Config("section indices are 1-based".to_string()));
            }
            max = max.max(i);
        }
    }
    for i in 1..=max {
        if !boundary.iter().any(|e| pick(e.tag) == Some(i)) {
            return Err(Error::Config(format!("section {i} has no boundary edges")));
        }
    }
    Ok(max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflowMode {
    /// Inlet flux enforced through a Lagrange multiplier.
    LagrangeMultiplier,
    /// Inlet velocity prescribed by a profile of matching flux.
    DirichletProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortSide {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortSpec {
    pub side: PortSide,
    /// Port extent [x0, x1] along the channel, in mm; must lie on mesh lines.
    pub span: [f64; 2],
    pub mode: InflowMode,
}

/// Structured crossed-triangle channel on [0, length] x [0, height]:
/// every cell is split into four triangles around its centroid. The left
/// boundary is the inflow (flow section 1, or a profile port in Dirichlet
/// mode), the right boundary is Neumann, top and bottom are walls.
pub fn build_channel_mesh(
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    inflow: InflowMode,
) -> Result<Mesh> {
    build_manifold_mesh_with_inflow(length, height, nx, ny, &[], inflow)
}

/// Channel with extra flow ports on the top/bottom walls. Lagrange-multiplier
/// ports are tagged as flow sections 2, 3, ... in declaration order after the
/// inlet; Dirichlet-profile ports become profile ports 1, 2, ... The
/// triangulation depends only on the geometry, never on the port modes.
pub fn build_manifold_mesh(
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    ports: &[PortSpec],
) -> Result<Mesh> {
    build_manifold_mesh_with_inflow(length, height, nx, ny, ports, InflowMode::LagrangeMultiplier)
}

fn build_manifold_mesh_with_inflow(
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    ports: &[PortSpec],
    inflow: InflowMode,
) -> Result<Mesh> {
    if length <= 0.0 || height <= 0.0 {
        return Err(Error::Config(format!(
            "channel dimensions must be positive, got {length} x {height}"
        )));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::Config(format!(
            "need nx, ny >= 2, got nx = {nx}, ny = {ny}"
        )));
    }
    let dx = length / nx as f64;
    let dy = height / ny as f64;

    // column-blocked numbering keeps the operator bandwidth at O(ny)
    let col = 2 * ny + 1;
    let grid = |i: usize, j: usize| i * col + j;
    let center = |i: usize, j: usize| i * col + (ny + 1) + j;

    let mut vertices = vec![[0.0f64; 2]; (nx + 1) * (ny + 1) + nx * ny];
    for i in 0..=nx {
        for j in 0..=ny {
            vertices[grid(i, j)] = [i as f64 * dx, j as f64 * dy];
        }
        if i < nx {
            for j in 0..ny {
                vertices[center(i, j)] = [(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy];
            }
        }
    }

    let mut triangles = Vec::with_capacity(4 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let a = grid(i, j);
            let b = grid(i + 1, j);
            let c = grid(i + 1, j + 1);
            let d = grid(i, j + 1);
            let m = center(i, j);
            triangles.push([a, b, m]);
            triangles.push([b, c, m]);
            triangles.push([c, d, m]);
            triangles.push([d, a, m]);
        }
    }

    // port bookkeeping: snap spans to grid lines and assign section numbers
    let snap_tol = 1e-9 * length.max(height);
    let mut checked: Vec<(usize, usize, PortSide, BoundaryTag)> = Vec::new();
    let mut next_flow = match inflow {
        InflowMode::LagrangeMultiplier => 2,
        InflowMode::DirichletProfile => 1,
    };
    let mut next_profile = match inflow {
        InflowMode::LagrangeMultiplier => 1,
        InflowMode::DirichletProfile => 2,
    };
    for (k, port) in ports.iter().enumerate() {
        let [x0, x1] = port.span;
        if !(x0 < x1) || x0 < -snap_tol || x1 > length + snap_tol {
            return Err(Error::Config(format!(
                "port {k}: span [{x0}, {x1}] outside channel [0, {length}]"
            )));
        }
        let i0 = x0 / dx;
        let i1 = x1 / dx;
        if (i0 - i0.round()).abs() > 1e-9 * nx as f64 || (i1 - i1.round()).abs() > 1e-9 * nx as f64
        {
            return Err(Error::Config(format!(
                "port {k}: span [{x0}, {x1}] not aligned to mesh lines (dx = {dx})"
            )));
        }
        let i0 = i0.round() as usize;
        let i1 = i1.round() as usize;
        if i0 >= i1 {
            return Err(Error::Config(format!("port {k}: empty span after snapping")));
        }
        let tag = match port.mode {
            InflowMode::LagrangeMultiplier => {
                let t = BoundaryTag::FlowSection(next_flow);
                next_flow += 1;
                t
            }
            InflowMode::DirichletProfile => {
                let t = BoundaryTag::ProfilePort(next_profile);
                next_profile += 1;
                t
            }
        };
        for other in &checked {
            if other.2 == port.side && i0 < other.1 && other.0 < i1 {
                return Err(Error::Config(format!(
                    "port {k}: span overlaps an earlier port on the same side"
                )));
            }
        }
        checked.push((i0, i1, port.side, tag));
    }

    let tag_horizontal = |i: usize, side: PortSide| -> BoundaryTag {
        for &(i0, i1, s, tag) in &checked {
            if s == side && i >= i0 && i < i1 {
                return tag;
            }
        }
        BoundaryTag::Wall
    };
    let inflow_tag = match inflow {
        InflowMode::LagrangeMultiplier => BoundaryTag::FlowSection(1),
        InflowMode::DirichletProfile => BoundaryTag::ProfilePort(1),
    };

    let mut tagged = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        tagged.push(([grid(i, 0), grid(i + 1, 0)], tag_horizontal(i, PortSide::Bottom)));
    }
    for j in 0..ny {
        tagged.push(([grid(nx, j), grid(nx, j + 1)], BoundaryTag::Neumann));
    }
    for i in 0..nx {
        tagged.push(([grid(i, ny), grid(i + 1, ny)], tag_horizontal(i, PortSide::Top)));
    }
    for j in 0..ny {
        tagged.push(([grid(0, j), grid(0, j + 1)], inflow_tag));
    }

    Mesh::from_parts(vertices, triangles, tagged)
}

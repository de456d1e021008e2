//! Structured P1 triangulation of the perforated plate `(−2,2)² \ [−1,1]²`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::archive::write_rows;
use crate::{PreimError, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub length: f64,
}

/// Triangulated domain together with precomputed P1 element geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Cell size.
    pub h: f64,
    refine: usize,
    areas: Vec<f64>,
    hat_gradients: Vec<[Point; 3]>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Triangles must be counter-clockwise.
    pub fn from_parts(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, h: f64) -> Result<Self> {
        let mut areas = Vec::with_capacity(triangles.len());
        let mut hat_gradients = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(PreimError::invalid(format!("triangle {t} references a missing node")));
            }
            let [p0, p1, p2] = tri.map(|i| nodes[i]);
            let twice_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if !(twice_area > 0.0) {
                return Err(PreimError::invalid(format!("triangle {t} is not counter-clockwise")));
            }
            areas.push(0.5 * twice_area);
            hat_gradients.push([
                [(p1[1] - p2[1]) / twice_area, (p2[0] - p1[0]) / twice_area],
                [(p2[1] - p0[1]) / twice_area, (p0[0] - p2[0]) / twice_area],
                [(p0[1] - p1[1]) / twice_area, (p1[0] - p0[0]) / twice_area],
            ]);
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary_edges = Vec::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if edge_count[&(a.min(b), a.max(b))] == 1 {
                    let d = [nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1]];
                    boundary_edges.push(BoundaryEdge { nodes: [a, b], length: d[0].hypot(d[1]) });
                }
            }
        }

        Ok(Self { nodes, triangles, boundary_edges, h, refine: 0, areas, hat_gradients })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Refinement level used by [`generate_perforated_plate`], 0 for custom meshes.
    pub fn refine(&self) -> usize {
        self.refine
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three P1 hat functions of triangle `t`, in vertex order.
    pub fn hat_gradients(&self, t: usize) -> &[Point; 3] {
        &self.hat_gradients[t]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges.iter().map(|e| e.length).sum()
    }

    /// Gradient of `u` on one triangle.
    pub fn triangle_gradient(&self, t: usize, u: &[f64]) -> Point {
        let g = &self.hat_gradients[t];
        let tri = &self.triangles[t];
        let mut out = [0.0; 2];
        for a in 0..3 {
            out[0] += u[tri[a]] * g[a][0];
            out[1] += u[tri[a]] * g[a][1];
        }
        out
    }

    /// Writes `nodes.csv`, `triangles.csv` and `boundary.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("nodes.csv"), self.nodes.iter().map(|p| p.to_vec()))?;
        let int_rows = |rows: Vec<Vec<usize>>| -> String {
            rows.iter()
                .map(|r| r.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join("\n")
                + "\n"
        };
        std::fs::write(
            dir.join("triangles.csv"),
            int_rows(self.triangles.iter().map(|t| t.to_vec()).collect()),
        )?;
        std::fs::write(
            dir.join("boundary.csv"),
            int_rows(self.boundary_edges.iter().map(|e| e.nodes.to_vec()).collect()),
        )?;
        Ok(())
    }
}

/// Structured mesh of the perforated plate with cell size `1/refine`.
///
/// Each `h × h` cell is split along its `(+,+)` diagonal. Nodes are ordered
/// lexicographically by `(y, x)`.
pub fn generate_perforated_plate(refine: usize) -> Result<Mesh> {
    if refine == 0 {
        return Err(PreimError::invalid("mesh refinement must be at least 1"));
    }
    let r = refine;
    let n_side = 4 * r + 1;
    let in_hole = |i: usize, j: usize| i > r && i < 3 * r && j > r && j < 3 * r;
    let coord = |i: usize| -2.0 + i as f64 / r as f64;

    let mut index = vec![usize::MAX; n_side * n_side];
    let mut nodes = Vec::with_capacity(n_side * n_side);
    for j in 0..n_side {
        for i in 0..n_side {
            if !in_hole(i, j) {
                index[j * n_side + i] = nodes.len();
                nodes.push([coord(i), coord(j)]);
            }
        }
    }

    let mut triangles = Vec::with_capacity(24 * r * r);
    for j in 0..4 * r {
        for i in 0..4 * r {
            if (r..3 * r).contains(&i) && (r..3 * r).contains(&j) {
                continue;
            }
            let n00 = index[j * n_side + i];
            let n10 = index[j * n_side + i + 1];
            let n01 = index[(j + 1) * n_side + i];
            let n11 = index[(j + 1) * n_side + i + 1];
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }

    let mut mesh = Mesh::from_parts(nodes, triangles, 1.0 / r as f64)?;
    mesh.refine = r;
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridMode {
    Nodes,
    Centroids,
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridMode::Nodes => "nodes",
            GridMode::Centroids => "centroids",
        })
    }
}

impl FromStr for GridMode {
    type Err = PreimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(GridMode::Nodes),
            "centroids" => Ok(GridMode::Centroids),
            other => Err(PreimError::invalid(format!("unknown grid mode `{other}`"))),
        }
    }
}

/// Finite point set on which the nonlinearity is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub mode: GridMode,
    pub points: Vec<Point>,
    /// Node index (nodes mode) or triangle index (centroids mode) of each point.
    pub owner: Vec<usize>,
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn eval_grid(mesh: &Mesh, mode: GridMode) -> EvalGrid {
    match mode {
        GridMode::Nodes => EvalGrid {
            mode,
            points: mesh.nodes.clone(),
            owner: (0..mesh.num_nodes()).collect(),
        },
        GridMode::Centroids => EvalGrid {
            mode,
            points: (0..mesh.num_triangles()).map(|t| mesh.centroid(t)).collect(),
            owner: (0..mesh.num_triangles()).collect(),
        },
    }
}

/// Exact gradient of the P1 interpolant of `u`, one vector per triangle.
pub fn element_gradients(mesh: &Mesh, u: &[f64]) -> Result<Vec<Point>> {
    if u.len() != mesh.num_nodes() {
        return Err(PreimError::invalid(format!(
            "nodal field has {} entries, mesh has {} nodes",
            u.len(),
            mesh.num_nodes()
        )));
    }
    Ok((0..mesh.num_triangles()).map(|t| mesh.triangle_gradient(t, u)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shoelace(p: [Point; 3]) -> f64 {
        0.5 * ((p[0][0] * p[1][1] - p[1][0] * p[0][1])
            + (p[1][0] * p[2][1] - p[2][0] * p[1][1])
            + (p[2][0] * p[0][1] - p[0][0] * p[2][1]))
    }

    fn count_oracle(r: usize) -> (usize, usize) {
        // brute-force enumeration of grid points / cells outside the hole
        let mut nodes = 0;
        let mut cells = 0;
        for j in 0..=4 * r {
            for i in 0..=4 * r {
                let (x, y) = (-2.0 + i as f64 / r as f64, -2.0 + j as f64 / r as f64);
                if !(x.abs() < 1.0 - 1e-12 && y.abs() < 1.0 - 1e-12) {
                    nodes += 1;
                }
                if i < 4 * r && j < 4 * r {
                    let (cx, cy) = (x + 0.5 / r as f64, y + 0.5 / r as f64);
                    if !(cx.abs() < 1.0 && cy.abs() < 1.0) {
                        cells += 1;
                    }
                }
            }
        }
        (nodes, 2 * cells)
    }

    #[test]
    fn refine_one_counts_and_area() {
        let m = generate_perforated_plate(1).unwrap();
        assert_eq!((m.num_nodes(), m.num_triangles()), count_oracle(1));
        assert_eq!((m.num_nodes(), m.num_triangles()), (24, 24));
        let area: f64 = m.triangles.iter().map(|t| shoelace(t.map(|i| m.nodes[i]))).sum();
        assert!((area - 12.0).abs() <= 12.0 * 1e-12);
    }

    #[test]
    fn refine_two_counts() {
        let m = generate_perforated_plate(2).unwrap();
        assert_eq!((m.num_nodes(), m.num_triangles()), (72, 96));
        assert_eq!((m.num_nodes(), m.num_triangles()), count_oracle(2));
    }

    #[test]
    fn closed_form_counts() {
        for r in 1..6 {
            let m = generate_perforated_plate(r).unwrap();
            assert_eq!(m.num_nodes(), (4 * r + 1).pow(2) - (2 * r - 1).pow(2));
            assert_eq!(m.num_triangles(), 24 * r * r);
            assert!((m.total_area() - 12.0).abs() <= 12.0 * 1e-12);
        }
    }

    #[test]
    fn boundary_length_and_split() {
        for r in [1, 3, 7] {
            let m = generate_perforated_plate(r).unwrap();
            assert!((m.boundary_length() - 24.0).abs() < 1e-12);
            let outer: f64 = m
                .boundary_edges
                .iter()
                .filter(|e| e.nodes.iter().all(|&n| m.nodes[n][0].abs().max(m.nodes[n][1].abs()) > 1.5))
                .map(|e| e.length)
                .sum();
            assert!((outer - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_areas_and_edge_incidence() {
        let m = generate_perforated_plate(3).unwrap();
        assert!(m.areas().iter().all(|&a| a > 0.0));
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &m.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(count.values().all(|&c| c == 1 || c == 2));
        let boundary = count.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary, m.boundary_edges.len());
    }

    #[test]
    fn node_order_is_lexicographic_in_y_then_x() {
        let m = generate_perforated_plate(2).unwrap();
        for w in m.nodes.windows(2) {
            assert!((w[0][1], w[0][0]) < (w[1][1], w[1][0]));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_perforated_plate(4).unwrap(), generate_perforated_plate(4).unwrap());
    }

    #[test]
    fn zero_refinement_is_rejected() {
        assert!(matches!(generate_perforated_plate(0), Err(PreimError::InvalidArgument(_))));
    }

    #[test]
    fn eval_grids() {
        let m = generate_perforated_plate(1).unwrap();
        let g = eval_grid(&m, GridMode::Nodes);
        assert_eq!(g.len(), 24);
        assert_eq!(g.owner, (0..24).collect::<Vec<_>>());
        let c = eval_grid(&m, GridMode::Centroids);
        assert_eq!(c.len(), 24);
        for (t, p) in c.points.iter().enumerate() {
            // barycentric coordinates of the centroid are all 1/3 > 0
            let [a, b, d] = m.triangles[t].map(|i| m.nodes[i]);
            for (q0, q1) in [(a, b), (b, d), (d, a)] {
                assert!(shoelace([q0, q1, *p]) > 0.0);
            }
        }
    }

    #[test]
    fn gradients_of_simple_fields() {
        let m = generate_perforated_plate(2).unwrap();
        let c = vec![4.2; m.num_nodes()];
        assert!(element_gradients(&m, &c).unwrap().iter().all(|g| g[0].abs() < 1e-12 && g[1].abs() < 1e-12));
        let x: Vec<f64> = m.nodes.iter().map(|p| p[0]).collect();
        for g in element_gradients(&m, &x).unwrap() {
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        }
        let a: Vec<f64> = m.nodes.iter().map(|p| 2.0 * p[0] + 3.0 * p[1] - 1.0).collect();
        for g in element_gradients(&m, &a).unwrap() {
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] - 3.0).abs() < 1e-12);
        }
        assert!(element_gradients(&m, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn affine_reproduction(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, r in 1usize..4) {
            let m = generate_perforated_plate(r).unwrap();
            let u: Vec<f64> = m.nodes.iter().map(|p| a * p[0] + b * p[1] + c).collect();
            for g in element_gradients(&m, &u).unwrap() {
                prop_assert!((g[0] - a).abs() < 1e-10 && (g[1] - b).abs() < 1e-10);
            }
        }
    }
}

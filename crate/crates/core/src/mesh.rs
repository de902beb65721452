//! Triangle mesh ingestion and topology.
//!
//! Meshes are read from ASCII Gmsh MSH 2.2 files carrying 3-node triangles,
//! optional 2-node boundary lines with physical tags, and optional physical
//! names. [`Topology`] precomputes everything both discretizations need:
//! cell areas and centroids for the finite elements, and per-edge TPFA
//! geometry (edge length, center-to-midpoint distances) for the finite
//! volumes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format version {0:?} (expected \"2.2 0 8\")")]
    UnsupportedFormat(String),
    #[error("unsupported element type {0}")]
    UnsupportedElement(u32),
    #[error("element references unknown node id {0}")]
    DanglingNode(u64),
    #[error("cell {0} is degenerate (zero area)")]
    DegenerateCell(usize),
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("edge ({0}, {1}) is shared by more than two cells")]
    NonManifoldEdge(usize, usize),
    #[error("tagged boundary edge ({0}, {1}) does not lie on the mesh boundary")]
    EdgeNotOnBoundary(usize, usize),
}

/// Boundary line element with its physical tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: i32,
}

/// Triangle mesh with tagged boundary edges.
///
/// Cells are stored counter-clockwise; [`load_gmsh`] reorients them on load.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point2<f64>>,
    pub cells: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub physical_names: BTreeMap<i32, String>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_coords(&self, cell: usize) -> [Point2<f64>; 3] {
        let c = self.cells[cell];
        [self.nodes[c[0]], self.nodes[c[1]], self.nodes[c[2]]]
    }

    /// Resolve a physical name to its tag id. Bare integers are accepted for
    /// meshes without a `$PhysicalNames` section.
    pub fn resolve_tag(&self, name: &str) -> Option<i32> {
        for (id, n) in &self.physical_names {
            if n == name {
                return Some(*id);
            }
        }
        name.parse::<i32>().ok()
    }

    /// Validates index ranges and fixes cell orientation in place.
    fn normalize(&mut self) -> Result<(), MeshError> {
        let n = self.nodes.len();
        let scale = self
            .nodes
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0_f64, f64::max)
            .max(1.0);
        for (k, cell) in self.cells.iter_mut().enumerate() {
            for &v in cell.iter() {
                if v >= n {
                    return Err(MeshError::NodeOutOfRange(v));
                }
            }
            let a2 = signed_area2(
                &self.nodes[cell[0]],
                &self.nodes[cell[1]],
                &self.nodes[cell[2]],
            );
            if a2.abs() <= 1e-14 * scale * scale {
                return Err(MeshError::DegenerateCell(k));
            }
            if a2 < 0.0 {
                cell.swap(1, 2);
            }
        }
        for be in &self.boundary_edges {
            for &v in be.nodes.iter() {
                if v >= n {
                    return Err(MeshError::NodeOutOfRange(v));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn signed_area2(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

/// Interior edge shared by two cells, stored once with `cells[0] < cells[1]`.
#[derive(Debug, Clone)]
pub struct InteriorEdge {
    pub cells: [usize; 2],
    /// Local edge index within each adjacent cell (edge i runs from vertex i
    /// to vertex (i+1) mod 3).
    pub local: [u8; 2],
    pub nodes: [usize; 2],
    pub length: f64,
    pub midpoint: Point2<f64>,
    /// Distances from the two cell centroids to the edge midpoint.
    pub dist: [f64; 2],
}

/// Boundary face owned by a single cell.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub cell: usize,
    pub local: u8,
    /// Nodes in cell-edge orientation (owning cell on the left).
    pub nodes: [usize; 2],
    pub length: f64,
    /// Outward unit normal.
    pub normal: Vector2<f64>,
    /// Physical tag if this face was listed among the mesh boundary edges.
    pub tag: Option<i32>,
}

/// Precomputed geometric and adjacency data shared by the FE and FV kernels.
#[derive(Debug, Clone)]
pub struct Topology {
    pub cell_area: Vec<f64>,
    pub cell_centroid: Vec<Point2<f64>>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Per cell: (interior edge index, neighbor cell) for each interior edge.
    pub cell_neighbors: Vec<Vec<(usize, usize)>>,
    pub total_area: f64,
}

/// Builds cell/edge topology and TPFA geometry for a valid mesh.
pub fn build_topology(mesh: &Mesh) -> Result<Topology, MeshError> {
    let n_cells = mesh.n_cells();
    let mut cell_area = Vec::with_capacity(n_cells);
    let mut cell_centroid = Vec::with_capacity(n_cells);
    for k in 0..n_cells {
        let [a, b, c] = mesh.cell_coords(k);
        let a2 = signed_area2(&a, &b, &c);
        if a2 <= 0.0 {
            return Err(MeshError::DegenerateCell(k));
        }
        cell_area.push(0.5 * a2);
        cell_centroid.push(Point2::new(
            (a.x + b.x + c.x) / 3.0,
            (a.y + b.y + c.y) / 3.0,
        ));
    }

    // First visit of an edge opens a half-edge, the second closes it into an
    // interior edge; scan order keeps cells[0] < cells[1] and makes the edge
    // numbering deterministic.
    let mut open: HashMap<(usize, usize), (usize, u8)> = HashMap::new();
    let mut interior_edges: Vec<InteriorEdge> = Vec::new();
    let mut closed: HashMap<(usize, usize), ()> = HashMap::new();
    let mut cell_neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_cells];

    for k in 0..n_cells {
        let cell = mesh.cells[k];
        for e in 0..3u8 {
            let (i, j) = (cell[e as usize], cell[(e as usize + 1) % 3]);
            let key = (i.min(j), i.max(j));
            if closed.contains_key(&key) {
                return Err(MeshError::NonManifoldEdge(key.0, key.1));
            }
            if let Some((k0, e0)) = open.remove(&key) {
                let pa = mesh.nodes[key.0];
                let pb = mesh.nodes[key.1];
                let mid = Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y));
                let d0 = (cell_centroid[k0] - mid).norm();
                let d1 = (cell_centroid[k] - mid).norm();
                let idx = interior_edges.len();
                interior_edges.push(InteriorEdge {
                    cells: [k0, k],
                    local: [e0, e],
                    nodes: [key.0, key.1],
                    length: (pb - pa).norm(),
                    midpoint: mid,
                    dist: [d0, d1],
                });
                cell_neighbors[k0].push((idx, k));
                cell_neighbors[k].push((idx, k0));
                closed.insert(key, ());
            } else {
                open.insert(key, (k, e));
            }
        }
    }

    // Remaining half-edges are the boundary; recover them in cell-scan order.
    let mut boundary_faces = Vec::new();
    let tag_of: HashMap<(usize, usize), i32> = mesh
        .boundary_edges
        .iter()
        .map(|be| {
            let (i, j) = (be.nodes[0], be.nodes[1]);
            ((i.min(j), i.max(j)), be.tag)
        })
        .collect();
    for k in 0..n_cells {
        let cell = mesh.cells[k];
        for e in 0..3u8 {
            let (i, j) = (cell[e as usize], cell[(e as usize + 1) % 3]);
            let key = (i.min(j), i.max(j));
            if open.contains_key(&key) && open[&key] == (k, e) {
                let pa = mesh.nodes[i];
                let pb = mesh.nodes[j];
                let t = pb - pa;
                let len = t.norm();
                // Rotate the CCW edge direction by -90 degrees: outward.
                let normal = Vector2::new(t.y / len, -t.x / len);
                boundary_faces.push(BoundaryFace {
                    cell: k,
                    local: e,
                    nodes: [i, j],
                    length: len,
                    normal,
                    tag: tag_of.get(&key).copied(),
                });
            }
        }
    }

    // Every tagged boundary edge must be an actual boundary face.
    for be in &mesh.boundary_edges {
        let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
        if !open.contains_key(&key) {
            return Err(MeshError::EdgeNotOnBoundary(key.0, key.1));
        }
    }

    for ie in &interior_edges {
        if ie.dist[0] <= 0.0 || ie.dist[1] <= 0.0 {
            return Err(MeshError::DegenerateCell(ie.cells[0]));
        }
    }

    let total_area = cell_area.iter().sum();
    Ok(Topology {
        cell_area,
        cell_centroid,
        interior_edges,
        boundary_faces,
        cell_neighbors,
        total_area,
    })
}

impl Topology {
    /// Area enclosed by the mesh boundary, by Green's theorem over the
    /// oriented boundary faces. Slit faces traversed twice in opposite
    /// directions cancel.
    pub fn boundary_polygon_area(&self, mesh: &Mesh) -> f64 {
        let mut twice = 0.0;
        for f in &self.boundary_faces {
            let a = mesh.nodes[f.nodes[0]];
            let b = mesh.nodes[f.nodes[1]];
            twice += a.x * b.y - b.x * a.y;
        }
        0.5 * twice
    }
}

/// Reads an ASCII Gmsh MSH 2.2 mesh.
///
/// Supported elements: 2-node lines (boundary edges, keeping their physical
/// tag), 3-node triangles (cells) and points (ignored). Any other element
/// type is rejected.
pub fn load_gmsh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_msh(&text)
}

/// Parses MSH 2.2 content. See [`load_gmsh`].
pub fn parse_msh(text: &str) -> Result<Mesh, MeshError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0usize;
    let err = |line: usize, msg: &str| MeshError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };

    let mut node_ids: HashMap<u64, usize> = HashMap::new();
    let mut mesh = Mesh {
        nodes: Vec::new(),
        cells: Vec::new(),
        boundary_edges: Vec::new(),
        physical_names: BTreeMap::new(),
    };
    let mut saw_format = false;

    while i < lines.len() {
        let line = lines[i].trim();
        if line.is_empty() {
            i += 1;
            continue;
        }
        match line {
            "$MeshFormat" => {
                i += 1;
                let fmt = lines.get(i).ok_or_else(|| err(i, "truncated file"))?.trim();
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                let file_type = it.next().unwrap_or("");
                let data_size = it.next().unwrap_or("");
                if version != "2.2" || file_type != "0" || data_size != "8" {
                    return Err(MeshError::UnsupportedFormat(fmt.to_string()));
                }
                saw_format = true;
                i = expect_end(&lines, i + 1, "$EndMeshFormat")?;
            }
            "$PhysicalNames" => {
                i += 1;
                let count: usize = parse_count(&lines, i)?;
                for j in 0..count {
                    let l = lines
                        .get(i + 1 + j)
                        .ok_or_else(|| err(i + j, "truncated $PhysicalNames"))?
                        .trim();
                    let mut it = l.splitn(3, ' ');
                    let _dim = it.next();
                    let id: i32 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad physical name id"))?;
                    let name = it.next().unwrap_or("").trim().trim_matches('"').to_string();
                    mesh.physical_names.insert(id, name);
                }
                i = expect_end(&lines, i + 1 + count, "$EndPhysicalNames")?;
            }
            "$Nodes" => {
                i += 1;
                let count: usize = parse_count(&lines, i)?;
                mesh.nodes.reserve(count);
                for j in 0..count {
                    let l = lines
                        .get(i + 1 + j)
                        .ok_or_else(|| err(i + j, "truncated $Nodes"))?;
                    let mut it = l.split_whitespace();
                    let id: u64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad node id"))?;
                    let x: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad node x"))?;
                    let y: f64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad node y"))?;
                    node_ids.insert(id, mesh.nodes.len());
                    mesh.nodes.push(Point2::new(x, y));
                }
                i = expect_end(&lines, i + 1 + count, "$EndNodes")?;
            }
            "$Elements" => {
                i += 1;
                let count: usize = parse_count(&lines, i)?;
                for j in 0..count {
                    let l = lines
                        .get(i + 1 + j)
                        .ok_or_else(|| err(i + j, "truncated $Elements"))?;
                    let mut it = l.split_whitespace();
                    let _id = it.next();
                    let ty: u32 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad element type"))?;
                    let ntags: usize = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(i + 1 + j, "bad tag count"))?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        let t: i32 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(i + 1 + j, "bad element tag"))?;
                        tags.push(t);
                    }
                    let phys = tags.first().copied().unwrap_or(0);
                    let node = |it: &mut std::str::SplitWhitespace| -> Result<usize, MeshError> {
                        let id: u64 = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| err(i + 1 + j, "bad element node"))?;
                        node_ids
                            .get(&id)
                            .copied()
                            .ok_or(MeshError::DanglingNode(id))
                    };
                    match ty {
                        1 => {
                            let a = node(&mut it)?;
                            let b = node(&mut it)?;
                            mesh.boundary_edges.push(BoundaryEdge {
                                nodes: [a, b],
                                tag: phys,
                            });
                        }
                        2 => {
                            let a = node(&mut it)?;
                            let b = node(&mut it)?;
                            let c = node(&mut it)?;
                            mesh.cells.push([a, b, c]);
                        }
                        15 => {}
                        other => return Err(MeshError::UnsupportedElement(other)),
                    }
                }
                i = expect_end(&lines, i + 1 + count, "$EndElements")?;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                // Skip unknown sections.
                let end = format!("$End{}", &s[1..]);
                i += 1;
                while i < lines.len() && lines[i].trim() != end {
                    i += 1;
                }
                i += 1;
            }
            _ => {
                return Err(err(i, "unexpected content outside a section"));
            }
        }
    }

    if !saw_format {
        return Err(MeshError::UnsupportedFormat("missing $MeshFormat".into()));
    }
    mesh.normalize()?;
    Ok(mesh)
}

fn parse_count(lines: &[&str], i: usize) -> Result<usize, MeshError> {
    lines
        .get(i)
        .and_then(|l| l.trim().parse().ok())
        .ok_or(MeshError::Parse {
            line: i + 1,
            msg: "bad section count".to_string(),
        })
}

fn expect_end(lines: &[&str], i: usize, end: &str) -> Result<usize, MeshError> {
    match lines.get(i).map(|l| l.trim()) {
        Some(l) if l == end => Ok(i + 1),
        _ => Err(MeshError::Parse {
            line: i + 1,
            msg: format!("expected {end}"),
        }),
    }
}

/// Writes a mesh as ASCII MSH 2.2, the same dialect [`load_gmsh`] reads.
pub fn write_msh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    if !mesh.physical_names.is_empty() {
        out.push_str("$PhysicalNames\n");
        out.push_str(&format!("{}\n", mesh.physical_names.len()));
        for (id, name) in &mesh.physical_names {
            out.push_str(&format!("1 {id} \"{name}\"\n"));
        }
        out.push_str("$EndPhysicalNames\n");
    }
    out.push_str("$Nodes\n");
    out.push_str(&format!("{}\n", mesh.nodes.len()));
    for (i, p) in mesh.nodes.iter().enumerate() {
        out.push_str(&format!("{} {} {} 0\n", i + 1, p.x, p.y));
    }
    out.push_str("$EndNodes\n$Elements\n");
    out.push_str(&format!(
        "{}\n",
        mesh.boundary_edges.len() + mesh.cells.len()
    ));
    let mut id = 1;
    for be in &mesh.boundary_edges {
        out.push_str(&format!(
            "{id} 1 2 {tag} {tag} {} {}\n",
            be.nodes[0] + 1,
            be.nodes[1] + 1,
            tag = be.tag
        ));
        id += 1;
    }
    for c in &mesh.cells {
        out.push_str(&format!(
            "{id} 2 2 0 0 {} {} {}\n",
            c[0] + 1,
            c[1] + 1,
            c[2] + 1
        ));
        id += 1;
    }
    out.push_str("$EndElements\n");
    fs::write(path, out).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

//! Conditional autoregressive spatial prior on a set of nodes.
//!
//! Nodes are linked when their rotated offset falls inside an ellipsoid with
//! semi-axes `(Dx, Dy, Dz)`. Each link carries the Euclidean distance and a
//! weight `exp(-3 d^2 / D^2)` or `D / d - 1`, with `D` the largest semi-axis.
//! The precision matrix is
//!
//! ```text
//! Q_ii(psi) = 1 + |psi| * sum_{j ~ i} w_ij
//! Q_ij(psi) = -psi * w_ij          (j ~ i)
//! ```
//!
//! so `Q(0) = I` and `Q(psi)` is strictly diagonally dominant for `psi > 0`.

use std::collections::HashMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::sparse::{amd_order, cholesky, LinalgError, SparseSymMatrix};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("invalid neighbourhood: {0}")]
    InvalidSpec(String),
    #[error("invalid node set: {0}")]
    InvalidNodes(String),
    #[error("nodes {0} and {1} share a position")]
    DuplicateNodes(usize, usize),
    #[error("distance {distance} outside (0, {max}]")]
    DistanceOutOfRange { distance: f64, max: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("node csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Positions of the prior's nodes, in kilometres.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet<T> {
    coords: Vec<[T; 3]>,
}

impl<T: Real> NodeSet<T> {
    pub fn new(coords: Vec<[T; 3]>) -> Result<Self, PriorError> {
        if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(PriorError::InvalidNodes(format!("node {i} has a non-finite coordinate")));
        }
        Ok(Self { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[T; 3]] {
        &self.coords
    }
}

#[derive(Debug, Deserialize)]
struct NodeRecord {
    id: usize,
    x: f64,
    y: f64,
    z: f64,
}

impl NodeSet<f64> {
    /// Reads `id,x,y,z` CSV (header required). Ids must be `0..n` in any order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PriorError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "x", "y", "z"] {
            return Err(PriorError::InvalidNodes(format!("expected header id,x,y,z, found {headers:?}")));
        }
        let mut records: Vec<NodeRecord> = rdr.deserialize().collect::<Result<_, _>>()?;
        records.sort_by_key(|r| r.id);
        if records.iter().enumerate().any(|(k, r)| r.id != k) {
            return Err(PriorError::InvalidNodes("ids must be 0..n without gaps".into()));
        }
        Self::new(records.into_iter().map(|r| [r.x, r.y, r.z]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Exponential,
    Reciprocal,
}

pub type Rotation<T> = [[T; 3]; 3];

/// Ellipsoidal neighbourhood with weight function.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSpec<T> {
    semi_axes: [T; 3],
    rotation: Rotation<T>,
    weight_kind: WeightKind,
}

fn identity3<T: Real>() -> Rotation<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

fn matmul3<T: Real>(a: &Rotation<T>, b: &Rotation<T>) -> Rotation<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// `R = Rx(ax) * Ry(ay) * Rz(az)` for angles in radians.
pub fn rotation_from_euler<T: Real>(ax: T, ay: T, az: T) -> Rotation<T> {
    let (o, z) = (T::one(), T::zero());
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = [[o, z, z], [z, cx, -sx], [z, sx, cx]];
    let ry = [[cy, z, sy], [z, o, z], [-sy, z, cy]];
    let rz = [[cz, -sz, z], [sz, cz, z], [z, z, o]];
    matmul3(&matmul3(&rx, &ry), &rz)
}

impl<T: Real> NeighborhoodSpec<T> {
    pub fn spherical(radius: T, weight_kind: WeightKind) -> Result<Self, PriorError> {
        Self::ellipsoidal([radius; 3], weight_kind)
    }

    pub fn ellipsoidal(semi_axes: [T; 3], weight_kind: WeightKind) -> Result<Self, PriorError> {
        if semi_axes.iter().any(|&a| !(a > T::zero()) || !a.is_finite()) {
            return Err(PriorError::InvalidSpec("semi-axes must be positive and finite".into()));
        }
        Ok(Self {
            semi_axes,
            rotation: identity3(),
            weight_kind,
        })
    }

    /// Replaces the rotation; it must be orthogonal to 1e-12.
    pub fn with_rotation(mut self, rotation: Rotation<T>) -> Result<Self, PriorError> {
        let rt = [
            [rotation[0][0], rotation[1][0], rotation[2][0]],
            [rotation[0][1], rotation[1][1], rotation[2][1]],
            [rotation[0][2], rotation[1][2], rotation[2][2]],
        ];
        let prod = matmul3(&rotation, &rt);
        let id = identity3::<T>();
        let tol = T::c(1e-12).max(T::epsilon() * T::c(16.0));
        for i in 0..3 {
            for j in 0..3 {
                if (prod[i][j] - id[i][j]).abs() > tol {
                    return Err(PriorError::InvalidSpec("rotation is not orthogonal".into()));
                }
            }
        }
        self.rotation = rotation;
        Ok(self)
    }

    pub fn with_euler_angles(self, ax: T, ay: T, az: T) -> Result<Self, PriorError> {
        self.with_rotation(rotation_from_euler(ax, ay, az))
    }

    pub fn semi_axes(&self) -> [T; 3] {
        self.semi_axes
    }

    pub fn rotation(&self) -> &Rotation<T> {
        &self.rotation
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.weight_kind
    }

    /// `D = max(Dx, Dy, Dz)`.
    pub fn max_axis(&self) -> T {
        self.semi_axes.iter().copied().fold(T::zero(), T::max)
    }

    /// Whether the offset `ri - rj` lies inside the rotated ellipsoid.
    pub fn contains(&self, offset: [T; 3]) -> bool {
        let r = &self.rotation;
        let mut s = T::zero();
        for a in 0..3 {
            let rotated = r[a][0] * offset[0] + r[a][1] * offset[1] + r[a][2] * offset[2];
            let u = rotated / self.semi_axes[a];
            s += u * u;
        }
        s <= T::one()
    }
}

/// Neighbour weight at distance `d`, defined for `0 < d <= D`.
pub fn weight<T: Real>(d: T, spec: &NeighborhoodSpec<T>) -> Result<T, PriorError> {
    let big_d = spec.max_axis();
    if !(d > T::zero()) || d > big_d {
        return Err(PriorError::DistanceOutOfRange {
            distance: d.to_f64_lossy(),
            max: big_d.to_f64_lossy(),
        });
    }
    Ok(match spec.weight_kind {
        WeightKind::Exponential => (-T::c(3.0) * d * d / (big_d * big_d)).exp(),
        WeightKind::Reciprocal => big_d / d - T::one(),
    })
}

/// Symmetric neighbour lists with distances and weights (adjacency form).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph<T> {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    distances: Vec<T>,
    weights: Vec<T>,
}

/// One undirected edge `i > j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub distance: T,
    pub weight: T,
}

impl<T: Real> NeighborGraph<T> {
    /// Builds the graph from undirected edges; each edge is stored in both
    /// directions.
    pub fn from_edges(n: usize, edges: &[Edge<T>]) -> Result<Self, PriorError> {
        let mut adj: Vec<Vec<(usize, T, T)>> = vec![Vec::new(); n];
        for e in edges {
            if e.i >= n || e.j >= n || e.i == e.j {
                return Err(PriorError::InvalidNodes(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.distance > T::zero()) || !(e.weight > T::zero()) {
                return Err(PriorError::InvalidNodes(format!(
                    "edge ({}, {}) needs positive distance and weight",
                    e.i, e.j
                )));
            }
            adj[e.i].push((e.j, e.distance, e.weight));
            adj[e.j].push((e.i, e.distance, e.weight));
        }
        let mut g = Self {
            offsets: vec![0],
            neighbors: Vec::new(),
            distances: Vec::new(),
            weights: Vec::new(),
        };
        for mut list in adj {
            list.sort_by_key(|t| t.0);
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(PriorError::InvalidNodes("repeated edge".into()));
            }
            for (j, d, w) in list {
                g.neighbors.push(j);
                g.distances.push(d);
                g.weights.push(w);
            }
            g.offsets.push(g.neighbors.len());
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn distances(&self, i: usize) -> &[T] {
        &self.distances[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weights(&self, i: usize) -> &[T] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weight_sum(&self, i: usize) -> T {
        self.weights(i).iter().copied().sum()
    }

    /// Undirected edges with `i > j`.
    pub fn edges(&self) -> impl Iterator<Item = Edge<T>> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            let range = self.offsets[i]..self.offsets[i + 1];
            range.filter(move |&k| self.neighbors[k] < i).map(move |k| Edge {
                i,
                j: self.neighbors[k],
                distance: self.distances[k],
                weight: self.weights[k],
            })
        })
    }
}

fn sub3<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3<T: Real>(v: &[T; 3]) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Above this node count candidate pairs come from a uniform bucket grid.
pub const SPATIAL_HASH_THRESHOLD: usize = 5_000;

pub fn build_neighbor_graph<T: Real>(nodes: &NodeSet<T>, spec: &NeighborhoodSpec<T>) -> Result<NeighborGraph<T>, PriorError> {
    let n = nodes.len();
    if n == 0 {
        return Err(PriorError::InvalidNodes("empty node set".into()));
    }
    let coords = nodes.coords();
    let big_d = spec.max_axis();

    let candidates: Box<dyn Fn(usize) -> Vec<usize> + Sync> = if n > SPATIAL_HASH_THRESHOLD {
        let cell = |p: &[T; 3]| -> (i64, i64, i64) {
            let f = |v: T| (v / big_d).floor().to_i64().unwrap_or(0);
            (f(p[0]), f(p[1]), f(p[2]))
        };
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in coords.iter().enumerate() {
            buckets.entry(cell(p)).or_default().push(i);
        }
        Box::new(move |i| {
            let (cx, cy, cz) = cell(&coords[i]);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(b) = buckets.get(&(cx + dx, cy + dy, cz + dz)) {
                            out.extend(b.iter().copied().filter(|&j| j > i));
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
    } else {
        Box::new(move |i| (i + 1..n).collect())
    };

    let per_node: Vec<Result<Vec<Edge<T>>, PriorError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in candidates(i) {
                let offset = sub3(&coords[i], &coords[j]);
                if !spec.contains(offset) {
                    continue;
                }
                let d = norm3(&offset);
                if d == T::zero() {
                    return Err(PriorError::DuplicateNodes(i, j));
                }
                // inside the ellipsoid implies d <= D up to rounding
                let w = weight(d.min(big_d), spec)?;
                // reciprocal weight vanishes on the boundary; such a link adds nothing to Q
                if w <= T::zero() {
                    continue;
                }
                out.push(Edge {
                    i: j,
                    j: i,
                    distance: d,
                    weight: w,
                });
            }
            Ok(out)
        })
        .collect();
    let mut edges = Vec::new();
    for r in per_node {
        edges.extend(r?);
    }
    NeighborGraph::from_edges(n, &edges)
}

/// Fixed-pattern assembler for `Q(psi)`.
#[derive(Debug, Clone)]
pub struct PrecisionModel<T> {
    graph: NeighborGraph<T>,
    pattern: SparseSymMatrix<T>,
    diag_pos: Vec<usize>,
    edge_pos: Vec<(usize, T)>,
    weight_sums: Vec<T>,
}

/// Pieces of `r' Q(psi) r = squares + |psi| * weighted_squares - psi * cross`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParts<T> {
    pub squares: T,
    pub weighted_squares: T,
    pub cross: T,
}

impl<T: Real> QuadParts<T> {
    pub fn at(&self, psi: T) -> T {
        self.squares + psi.abs() * self.weighted_squares - psi * self.cross
    }
}

impl<T: Real> PrecisionModel<T> {
    pub fn new(graph: NeighborGraph<T>) -> Self {
        let n = graph.node_count();
        let edges: Vec<Edge<T>> = graph.edges().collect();
        let triplets = (0..n)
            .map(|i| (i, i, T::one()))
            .chain(edges.iter().map(|e| (e.i, e.j, T::zero())));
        let pattern = SparseSymMatrix::assemble(n, triplets).expect("graph indices in range");
        let diag_pos = (0..n).map(|i| pattern.position(i, i).expect("diagonal stored")).collect();
        let edge_pos = edges
            .iter()
            .map(|e| (pattern.position(e.i, e.j).expect("edge stored"), e.weight))
            .collect();
        let weight_sums = (0..n).map(|i| graph.weight_sum(i)).collect();
        Self {
            graph,
            pattern,
            diag_pos,
            edge_pos,
            weight_sums,
        }
    }

    /// Independent prior on `n` nodes: `Q(psi) = I` for every `psi`.
    pub fn independent(n: usize) -> Self {
        Self::new(NeighborGraph::from_edges(n, &[]).expect("empty graph"))
    }

    pub fn graph(&self) -> &NeighborGraph<T> {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.node_count()
    }

    /// Every `Q(psi)` shares this pattern (explicit zeros at `psi = 0`).
    pub fn pattern(&self) -> &SparseSymMatrix<T> {
        &self.pattern
    }

    /// Stored values of `Q(psi)` in the order of [`Self::pattern`].
    pub fn values(&self, psi: T) -> Vec<T> {
        let mut v = vec![T::zero(); self.pattern.nnz()];
        for (i, &p) in self.diag_pos.iter().enumerate() {
            v[p] = T::one() + psi.abs() * self.weight_sums[i];
        }
        for &(p, w) in &self.edge_pos {
            v[p] = -psi * w;
        }
        v
    }

    pub fn assemble(&self, psi: T) -> SparseSymMatrix<T> {
        self.pattern.with_values(self.values(psi)).expect("same pattern")
    }

    pub fn quad_parts(&self, r: &[T]) -> QuadParts<T> {
        let squares = r.iter().map(|&x| x * x).sum();
        let weighted_squares = r.iter().zip(&self.weight_sums).map(|(&x, &s)| s * x * x).sum();
        let cross = T::c(2.0) * self.graph.edges().map(|e| e.weight * r[e.i] * r[e.j]).sum::<T>();
        QuadParts {
            squares,
            weighted_squares,
            cross,
        }
    }

    /// `r' Q(psi) r`.
    pub fn quad_form(&self, psi: T, r: &[T]) -> T {
        self.quad_parts(r).at(psi)
    }
}

pub fn assemble_q<T: Real>(graph: &NeighborGraph<T>, psi: T) -> SparseSymMatrix<T> {
    PrecisionModel::new(graph.clone()).assemble(psi)
}

/// `diag(Q(psi)^{-1})` by one solve per unit vector.
pub fn prior_variance_profile<T: Real>(graph: &NeighborGraph<T>, psi: T) -> Result<Vec<T>, PriorError> {
    let q = assemble_q(graph, psi);
    let f = cholesky(&q, amd_order(&q))?;
    let n = q.dim();
    let out = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            f.solve(&e).map(|x| x[i])
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: [f64; 3], b: [f64; 3]) -> NodeSet<f64> {
        NodeSet::new(vec![a, b]).unwrap()
    }

    #[test]
    fn spherical_pair_within_radius() {
        let spec = NeighborhoodSpec::spherical(150.0, WeightKind::Reciprocal).unwrap();
        let g = build_neighbor_graph(&pair([0.0; 3], [100.0, 0.0, 0.0]), &spec).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.distances(0), &[100.0]);
        assert!((g.weights(0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vertical_pair_outside_flat_ellipsoid() {
        let spec = NeighborhoodSpec::ellipsoidal([300.0, 300.0, 150.0], WeightKind::Reciprocal).unwrap();
        let g = build_neighbor_graph(&pair([0.0; 3], [0.0, 0.0, 200.0]), &spec).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn rotation_brings_vertical_pair_inside() {
        let spec = NeighborhoodSpec::ellipsoidal([300.0, 300.0, 150.0], WeightKind::Reciprocal)
            .unwrap()
            .with_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0)
            .unwrap();
        // R maps the z axis onto the x axis
        let r = spec.rotation();
        assert!((r[0][2] - 1.0).abs() < 1e-15);
        let g = build_neighbor_graph(&pair([0.0; 3], [0.0, 0.0, 200.0]), &spec).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.distances(0), &[200.0]);
    }

    #[test]
    fn rejects_non_orthogonal_rotation_and_bad_axes() {
        let spec = NeighborhoodSpec::spherical(1.0, WeightKind::Exponential).unwrap();
        assert!(spec.with_rotation([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(NeighborhoodSpec::ellipsoidal([1.0, 0.0, 1.0], WeightKind::Exponential).is_err());
    }

    #[test]
    fn duplicate_positions_rejected() {
        let spec = NeighborhoodSpec::spherical(10.0, WeightKind::Reciprocal).unwrap();
        assert!(matches!(
            build_neighbor_graph(&pair([1.0; 3], [1.0; 3]), &spec),
            Err(PriorError::DuplicateNodes(0, 1))
        ));
    }

    #[test]
    fn weight_values() {
        let rec = NeighborhoodSpec::spherical(300.0, WeightKind::Reciprocal).unwrap();
        assert_eq!(weight(150.0, &rec).unwrap(), 1.0);
        let exp = NeighborhoodSpec::<f64>::spherical(300.0, WeightKind::Exponential).unwrap();
        assert!((weight(150.0, &exp).unwrap() - 0.472_366_552_741_014_7).abs() < 1e-12);
        assert!((weight(300.0, &exp).unwrap() - 0.049_787_068_367_863_944).abs() < 1e-12);
        assert!(weight(0.0, &exp).is_err());
        assert!(weight(300.1, &exp).is_err());
        // D is the largest semi-axis
        let ell = NeighborhoodSpec::ellipsoidal([300.0, 300.0, 150.0], WeightKind::Reciprocal).unwrap();
        assert_eq!(weight(150.0, &ell).unwrap(), 1.0);
    }

    fn edge(i: usize, j: usize, w: f64) -> Edge<f64> {
        Edge { i, j, distance: 1.0, weight: w }
    }

    #[test]
    fn q_two_nodes() {
        let g = NeighborGraph::from_edges(2, &[edge(1, 0, 0.5)]).unwrap();
        let q = assemble_q(&g, 2.0);
        assert_eq!(q.to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 2.0]]);
        let v = prior_variance_profile(&g, 2.0).unwrap();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-14 && (v[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn q_chain_and_identity() {
        let g = NeighborGraph::from_edges(3, &[edge(1, 0, 1.0), edge(2, 1, 1.0)]).unwrap();
        let q = assemble_q(&g, 1.0);
        assert_eq!(
            q.to_dense(),
            vec![vec![2.0, -1.0, 0.0], vec![-1.0, 3.0, -1.0], vec![0.0, -1.0, 2.0]]
        );
        let q0 = assemble_q(&g, 0.0);
        assert_eq!(q0.to_dense(), SparseSymMatrix::<f64>::identity(3).to_dense());
        assert_eq!(prior_variance_profile(&g, 0.0).unwrap(), vec![1.0f64; 3]);
    }

    #[test]
    fn negative_psi_uses_abs_on_diagonal() {
        let g = NeighborGraph::from_edges(2, &[edge(1, 0, 0.5)]).unwrap();
        let q = assemble_q(&g, -2.0);
        assert_eq!(q.to_dense(), vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn quad_parts_match_matrix() {
        let g = NeighborGraph::from_edges(3, &[edge(1, 0, 0.7), edge(2, 0, 0.2)]).unwrap();
        let m = PrecisionModel::new(g);
        let r = [0.3, -1.2, 2.0];
        for psi in [0.0, 0.5, 3.0, -1.0] {
            let direct = m.assemble(psi).quad_form(&r).unwrap();
            assert!((m.quad_form(psi, &r) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn star_hub_has_smaller_variance() {
        let edges: Vec<_> = (1..7).map(|k| edge(k, 0, 1.0)).collect();
        let g = NeighborGraph::from_edges(7, &edges).unwrap();
        let v = prior_variance_profile(&g, 10.0).unwrap();
        assert!(v[0] < v[1]);
    }

    #[test]
    fn spatial_hash_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::random::seeded(3);
        let coords: Vec<[f64; 3]> = (0..SPATIAL_HASH_THRESHOLD + 200)
            .map(|_| [rng.random_range(0.0..3000.0), rng.random_range(0.0..3000.0), rng.random_range(0.0..800.0)])
            .collect();
        let spec = NeighborhoodSpec::ellipsoidal([300.0, 200.0, 100.0], WeightKind::Exponential)
            .unwrap()
            .with_euler_angles(0.3, -0.2, 1.1)
            .unwrap();
        let hashed = build_neighbor_graph(&NodeSet::new(coords.clone()).unwrap(), &spec).unwrap();
        // brute force on the same nodes through the small-n path
        let mut brute = Vec::new();
        for i in 0..coords.len() {
            for j in 0..i {
                let off = sub3(&coords[i], &coords[j]);
                if spec.contains(off) {
                    brute.push((i, j));
                }
            }
        }
        let got: Vec<_> = hashed.edges().map(|e| (e.i, e.j)).collect();
        assert_eq!(got.len(), brute.len());
        assert_eq!(got, brute);
    }

    #[test]
    fn csv_loading() {
        let text = "id,x,y,z\n1,10,0,0\n0,0,0,0\n";
        let nodes = NodeSet::read_csv(text.as_bytes()).unwrap();
        assert_eq!(nodes.coords(), &[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        assert!(NodeSet::read_csv("x,y,z\n0,0,0\n".as_bytes()).is_err());
        assert!(NodeSet::read_csv("id,x,y,z\n0,0,0,0\n2,1,1,1\n".as_bytes()).is_err());
    }
}

//! Straight-ray travel-time forward model on a regular voxel grid.
//!
//! Depth is measured along `+z` from the surface at the grid's top face.
//! Each observation row holds the path length (km) of the ray in every cell
//! it crosses. Model 2 appends per-event hypocentre and origin-time
//! columns.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::substream;
use crate::scalar::Real;
use crate::sparse::{sample_gaussian_by_precision, LinalgError, SparseMatrix};
use crate::spatial::{NodeSet, PrecisionModel, PriorError};

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("degenerate ray: source and receiver coincide")]
    DegenerateRay,
    #[error("path {0} does not intersect the grid")]
    EmptyRay(usize),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("geometry csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Regular grid of `nx * ny * nz` cells; cell `(ix, iy, iz)` has index
/// `ix + nx * (iy + ny * iz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    origin: [T; 3],
    counts: [usize; 3],
    cell: [T; 3],
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(origin: [T; 3], counts: [usize; 3], cell: [T; 3]) -> Result<Self, ForwardError> {
        if counts.contains(&0) {
            return Err(ForwardError::InvalidGrid("cell counts must be at least 1".into()));
        }
        if cell.iter().any(|&c| !(c > T::zero()) || !c.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(ForwardError::InvalidGrid("cell sizes must be positive and finite".into()));
        }
        Ok(Self { origin, counts, cell })
    }

    pub fn origin(&self) -> [T; 3] {
        self.origin
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn cell_size(&self) -> [T; 3] {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn upper(&self) -> [T; 3] {
        std::array::from_fn(|a| self.origin[a] + self.cell[a] * T::from_usize_lossy(self.counts[a]))
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.counts[0] * (iy + self.counts[1] * iz)
    }

    pub fn cell_center(&self, index: usize) -> [T; 3] {
        let [nx, ny, _] = self.counts;
        let ijk = [index % nx, (index / nx) % ny, index / (nx * ny)];
        std::array::from_fn(|a| self.origin[a] + self.cell[a] * (T::from_usize_lossy(ijk[a]) + T::c(0.5)))
    }

    /// Cell centres as prior nodes.
    pub fn node_set(&self) -> NodeSet<T> {
        NodeSet::new((0..self.len()).map(|i| self.cell_center(i)).collect()).expect("finite centres")
    }
}

/// Path lengths of one ray, sorted by cell index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayRow<T> {
    pub cells: Vec<usize>,
    pub lengths: Vec<T>,
}

impl<T: Real> RayRow<T> {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_length(&self) -> T {
        self.lengths.iter().copied().sum()
    }
}

/// Exact chord lengths of the segment `source -> receiver` in every grid cell.
///
/// Crossing parameters with all cell faces are merged and each sub-segment is
/// credited to the cell containing its midpoint; zero-length pieces (ray
/// passing through an edge or corner) go to no cell. Endpoints are ordered
/// first so swapping them yields the identical row.
pub fn trace_ray<T: Real>(grid: &VoxelGrid<T>, source: [T; 3], receiver: [T; 3]) -> Result<RayRow<T>, ForwardError> {
    if source == receiver {
        return Err(ForwardError::DegenerateRay);
    }
    let (a, b) = if source.partial_cmp(&receiver) == Some(std::cmp::Ordering::Greater) {
        (receiver, source)
    } else {
        (source, receiver)
    };
    let dir: [T; 3] = std::array::from_fn(|k| b[k] - a[k]);
    let length = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let lo = grid.origin;
    let hi = grid.upper();

    let (mut t0, mut t1) = (T::zero(), T::one());
    for k in 0..3 {
        if dir[k] == T::zero() {
            if a[k] < lo[k] || a[k] > hi[k] {
                return Ok(RayRow::default());
            }
        } else {
            let ta = (lo[k] - a[k]) / dir[k];
            let tb = (hi[k] - a[k]) / dir[k];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    if !(t1 > t0) {
        return Ok(RayRow::default());
    }

    let mut ts = vec![t0, t1];
    for k in 0..3 {
        if dir[k] == T::zero() {
            continue;
        }
        for plane in 1..grid.counts[k] {
            let x = lo[k] + grid.cell[k] * T::from_usize_lossy(plane);
            let t = (x - a[k]) / dir[k];
            if t > t0 && t < t1 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|x, y| x.partial_cmp(y).expect("finite crossing parameters"));

    let min_piece = T::c(1e-12) * (t1 - t0);
    let mut pieces: Vec<(usize, T)> = Vec::with_capacity(ts.len());
    let half = T::c(0.5);
    for w in ts.windows(2) {
        let dt = w[1] - w[0];
        if dt <= min_piece {
            continue;
        }
        let tm = (w[0] + w[1]) * half;
        let ijk: [usize; 3] = std::array::from_fn(|k| {
            let u = ((a[k] + dir[k] * tm - lo[k]) / grid.cell[k]).floor();
            u.to_usize().unwrap_or(0).min(grid.counts[k] - 1)
        });
        pieces.push((grid.index(ijk[0], ijk[1], ijk[2]), dt * length));
    }
    pieces.sort_by_key(|p| p.0);
    let mut row = RayRow::default();
    for (c, l) in pieces {
        if row.cells.last() == Some(&c) {
            *row.lengths.last_mut().expect("nonempty") += l;
        } else {
            row.cells.push(c);
            row.lengths.push(l);
        }
    }
    Ok(row)
}

/// Sources, surface receivers and the observed event/station pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStationGeometry<T> {
    events: Vec<[T; 3]>,
    stations: Vec<[T; 2]>,
    paths: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    id: usize,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StationRecord {
    id: usize,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    event_id: usize,
    station_id: usize,
}

impl<T: Real> EventStationGeometry<T> {
    pub fn new(events: Vec<[T; 3]>, stations: Vec<[T; 2]>, paths: Vec<(usize, usize)>) -> Result<Self, ForwardError> {
        if let Some(e) = events.iter().position(|p| !(p[2] > T::zero())) {
            return Err(ForwardError::InvalidGeometry(format!("event {e} is not below the surface")));
        }
        if let Some(k) = paths.iter().position(|&(e, s)| e >= events.len() || s >= stations.len()) {
            return Err(ForwardError::InvalidGeometry(format!("path {k} references a missing event or station")));
        }
        Ok(Self { events, stations, paths })
    }

    pub fn events(&self) -> &[[T; 3]] {
        &self.events
    }

    pub fn stations(&self) -> &[[T; 2]] {
        &self.stations
    }

    pub fn paths(&self) -> &[(usize, usize)] {
        &self.paths
    }

    /// Station position at the surface `z = 0`.
    pub fn station_position(&self, s: usize) -> [T; 3] {
        [self.stations[s][0], self.stations[s][1], T::zero()]
    }

    /// Random layout: stations uniform on the top face; events split between
    /// the two faces `x = x_min` and `x = x_max` at depths in the lower three
    /// quarters of the grid; `n_paths` distinct pairs drawn without
    /// replacement (all pairs if `n_paths` exceeds their number).
    pub fn generate<R: Rng + ?Sized>(
        grid: &VoxelGrid<T>,
        n_events: usize,
        n_stations: usize,
        n_paths: usize,
        rng: &mut R,
    ) -> Result<Self, ForwardError> {
        if n_events == 0 || n_stations == 0 {
            return Err(ForwardError::InvalidGeometry("need at least one event and one station".into()));
        }
        let lo = grid.origin();
        let hi = grid.upper();
        let uniform = |rng: &mut R, a: T, b: T| a + (b - a) * T::c(rng.random::<f64>());
        let stations = (0..n_stations)
            .map(|_| [uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1])])
            .collect();
        let top = lo[2].max(T::zero());
        let depth_lo = top + (hi[2] - top) * T::c(0.25);
        let events = (0..n_events)
            .map(|e| {
                let x = if e % 2 == 0 { lo[0] } else { hi[0] };
                [x, uniform(rng, lo[1], hi[1]), uniform(rng, depth_lo, hi[2])]
            })
            .collect();
        let total = n_events * n_stations;
        let mut paths: Vec<(usize, usize)> = if n_paths >= total {
            (0..total).map(|k| (k / n_stations, k % n_stations)).collect()
        } else {
            rand::seq::index::sample(rng, total, n_paths)
                .into_iter()
                .map(|k| (k / n_stations, k % n_stations))
                .collect()
        };
        paths.sort_unstable();
        Self::new(events, stations, paths)
    }
}

impl EventStationGeometry<f64> {
    pub fn read_csv<E: Read, S: Read, P: Read>(events: E, stations: S, paths: P) -> Result<Self, ForwardError> {
        fn records<R: Read, D: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<D>, csv::Error> {
            csv::ReaderBuilder::new()
                .has_headers(true)
                .comment(Some(b'#'))
                .trim(csv::Trim::All)
                .from_reader(r)
                .deserialize()
                .collect()
        }
        let mut ev: Vec<EventRecord> = records(events)?;
        let mut st: Vec<StationRecord> = records(stations)?;
        let pa: Vec<PathRecord> = records(paths)?;
        ev.sort_by_key(|r| r.id);
        st.sort_by_key(|r| r.id);
        if ev.iter().enumerate().any(|(k, r)| r.id != k) || st.iter().enumerate().any(|(k, r)| r.id != k) {
            return Err(ForwardError::InvalidGeometry("ids must be 0..n without gaps".into()));
        }
        Self::new(
            ev.iter().map(|r| [r.x, r.y, r.z]).collect(),
            st.iter().map(|r| [r.x, r.y]).collect(),
            pa.iter().map(|r| (r.event_id, r.station_id)).collect(),
        )
    }

    pub fn write_csv<E: Write, S: Write, P: Write>(&self, events: E, stations: S, paths: P) -> Result<(), ForwardError> {
        let mut w = csv::Writer::from_writer(events);
        for (id, e) in self.events.iter().enumerate() {
            w.serialize(EventRecord { id, x: e[0], y: e[1], z: e[2] })?;
        }
        w.flush().map_err(csv::Error::from)?;
        let mut w = csv::Writer::from_writer(stations);
        for (id, s) in self.stations.iter().enumerate() {
            w.serialize(StationRecord { id, x: s[0], y: s[1] })?;
        }
        w.flush().map_err(csv::Error::from)?;
        let mut w = csv::Writer::from_writer(paths);
        for &(event_id, station_id) in &self.paths {
            w.serialize(PathRecord { event_id, station_id })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Velocity parameters only.
    Model1,
    /// Velocity plus per-event hypocentre and origin-time corrections.
    Model2,
}

/// Column counts of the `usa | hyp | time` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes {
    pub usa: usize,
    pub hyp: usize,
    pub time: usize,
}

impl BlockSizes {
    pub fn total(&self) -> usize {
        self.usa + self.hyp + self.time
    }
}

/// Design blocks and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardProblem<T> {
    pub x_usa: SparseMatrix<T>,
    pub x_hyp: Option<SparseMatrix<T>>,
    pub x_time: Option<SparseMatrix<T>>,
    pub y: Vec<T>,
}

impl<T: Real> ForwardProblem<T> {
    pub fn n_obs(&self) -> usize {
        self.x_usa.nrows()
    }

    pub fn blocks(&self) -> BlockSizes {
        BlockSizes {
            usa: self.x_usa.ncols(),
            hyp: self.x_hyp.as_ref().map_or(0, |m| m.ncols()),
            time: self.x_time.as_ref().map_or(0, |m| m.ncols()),
        }
    }

    pub fn model(&self) -> ModelKind {
        if self.x_hyp.is_some() {
            ModelKind::Model2
        } else {
            ModelKind::Model1
        }
    }

    /// Full design `X = [X_usa | X_hyp | X_time]`.
    pub fn design(&self) -> SparseMatrix<T> {
        let mut x = self.x_usa.clone();
        for block in [&self.x_hyp, &self.x_time].into_iter().flatten() {
            x = x.hstack(block).expect("blocks share rows");
        }
        x
    }

    pub fn with_observations(mut self, y: Vec<T>) -> Result<Self, ForwardError> {
        if y.len() != self.n_obs() {
            return Err(ForwardError::Linalg(LinalgError::DimensionMismatch {
                expected: self.n_obs(),
                found: y.len(),
            }));
        }
        self.y = y;
        Ok(self)
    }
}

/// First-order travel-time change per unit source shift along each axis:
/// moving the source toward the receiver shortens the ray, so the partials
/// are `-(unit vector source -> receiver) / v0`.
pub fn hypocenter_partials<T: Real>(source: [T; 3], receiver: [T; 3], reference_velocity: T) -> [T; 3] {
    let d: [T; 3] = std::array::from_fn(|k| receiver[k] - source[k]);
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    std::array::from_fn(|k| -d[k] / n / reference_velocity)
}

/// Default reference velocity (km/s) for hypocentre partials.
pub const DEFAULT_REFERENCE_VELOCITY: f64 = 10.0;

/// Builds `X` for every path; `y` is left at zero.
pub fn assemble_forward<T: Real>(
    grid: &VoxelGrid<T>,
    geometry: &EventStationGeometry<T>,
    model: ModelKind,
    reference_velocity: T,
) -> Result<ForwardProblem<T>, ForwardError> {
    let n = geometry.paths().len();
    let mut usa = Vec::new();
    let mut hyp = Vec::new();
    let mut time = Vec::new();
    for (k, &(e, s)) in geometry.paths().iter().enumerate() {
        let src = geometry.events()[e];
        let rcv = geometry.station_position(s);
        let row = trace_ray(grid, src, rcv)?;
        if row.is_empty() {
            return Err(ForwardError::EmptyRay(k));
        }
        usa.extend(row.cells.iter().zip(&row.lengths).map(|(&c, &l)| (k, c, l)));
        if model == ModelKind::Model2 {
            let g = hypocenter_partials(src, rcv, reference_velocity);
            hyp.extend((0..3).filter(|&a| g[a] != T::zero()).map(|a| (k, 3 * e + a, g[a])));
            time.push((k, e, T::one()));
        }
    }
    let n_events = geometry.events().len();
    let x_usa = SparseMatrix::from_triplets(n, grid.len(), usa)?;
    let (x_hyp, x_time) = match model {
        ModelKind::Model1 => (None, None),
        ModelKind::Model2 => (
            Some(SparseMatrix::from_triplets(n, 3 * n_events, hyp)?),
            Some(SparseMatrix::from_triplets(n, n_events, time)?),
        ),
    };
    Ok(ForwardProblem {
        x_usa,
        x_hyp,
        x_time,
        y: vec![T::zero(); n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// `N(0, 1 / precision)` per observation.
    Gaussian { precision: f64 },
    /// Unit-scale Student-t per observation.
    StudentT { dof: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), ForwardError> {
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Gaussian { precision } if precision > 0.0 && precision.is_finite() => Ok(()),
            NoiseKind::StudentT { dof } if dof > 2.0 && dof.is_finite() => Ok(()),
            other => Err(ForwardError::InvalidNoise(format!("{other:?}"))),
        }
    }

    /// Noise variance (`1 / precision`, `dof / (dof - 2)`, or 0).
    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian { precision } => 1.0 / precision,
            NoiseKind::StudentT { dof } => dof / (dof - 2.0),
        }
    }
}

/// `y = X beta_true + eps` with noise drawn from the spec's own seed.
pub fn synthesize_data<T: Real>(x: &SparseMatrix<T>, beta_true: &[T], noise: &NoiseSpec) -> Result<Vec<T>, ForwardError> {
    noise.validate()?;
    let mut y = x.mul_vec(beta_true)?;
    let mut rng = substream(noise.seed, 0);
    match noise.kind {
        NoiseKind::None => {}
        NoiseKind::Gaussian { precision } => {
            let sd = 1.0 / precision.sqrt();
            for v in y.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += T::c(sd * z);
            }
        }
        NoiseKind::StudentT { dof } => {
            // t = z sqrt(nu / chi2_nu), with z from the same stream a Gaussian
            // spec would use, so paired runs share their normal draws
            let chi2 = ChiSquared::new(dof).expect("valid dof");
            let mut mix = substream(noise.seed, 1);
            for v in y.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += T::c(z * (dof / chi2.sample(&mut mix)).sqrt());
            }
        }
    }
    Ok(y)
}

/// One draw from `N(center, (eta Q(psi))^{-1})`.
pub fn draw_beta_true<T: Real, R: Rng + ?Sized>(
    precision: &PrecisionModel<T>,
    eta: T,
    psi: T,
    center: &[T],
    rng: &mut R,
) -> Result<Vec<T>, ForwardError> {
    let q = precision.assemble(psi);
    let omega = q.with_values(q.values().iter().map(|&v| v * eta).collect())?;
    let xi = omega.mul_vec(center)?;
    Ok(sample_gaussian_by_precision(&omega, &xi, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(nx: usize, ny: usize, nz: usize) -> VoxelGrid<f64> {
        VoxelGrid::new([0.0; 3], [nx, ny, nz], [1.0; 3]).unwrap()
    }

    #[test]
    fn axis_aligned_ray() {
        let g = unit_grid(3, 1, 1);
        let r = trace_ray(&g, [0.0, 0.5, 0.5], [3.0, 0.5, 0.5]).unwrap();
        assert_eq!(r.cells, vec![0, 1, 2]);
        for l in r.lengths {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_through_corner() {
        let g = unit_grid(2, 2, 1);
        let r = trace_ray(&g, [0.0, 0.0, 0.5], [2.0, 2.0, 0.5]).unwrap();
        assert_eq!(r.cells, vec![g.index(0, 0, 0), g.index(1, 1, 0)]);
        for l in r.lengths {
            assert!((l - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_and_degenerate() {
        let g = unit_grid(2, 2, 2);
        assert!(trace_ray(&g, [5.0, 5.0, 5.0], [6.0, 7.0, 5.0]).unwrap().is_empty());
        assert!(trace_ray(&g, [5.0, 0.5, 0.5], [6.0, 0.5, 0.5]).unwrap().is_empty());
        assert!(matches!(trace_ray(&g, [1.0; 3], [1.0; 3]), Err(ForwardError::DegenerateRay)));
    }

    #[test]
    fn partial_ray_clipped() {
        let g = unit_grid(2, 1, 1);
        let r = trace_ray(&g, [-1.0, 0.5, 0.5], [1.5, 0.5, 0.5]).unwrap();
        assert_eq!(r.cells, vec![0, 1]);
        assert!((r.total_length() - 1.5).abs() < 1e-14);
    }

    fn single_path() -> (VoxelGrid<f64>, EventStationGeometry<f64>) {
        let g = VoxelGrid::new([0.0; 3], [3, 3, 3], [100.0; 3]).unwrap();
        let geo = EventStationGeometry::new(vec![[150.0, 150.0, 250.0]], vec![[150.0, 150.0]], vec![(0, 0)]).unwrap();
        (g, geo)
    }

    #[test]
    fn model2_columns_and_vertical_partials() {
        let (g, geo) = single_path();
        let p = assemble_forward(&g, &geo, ModelKind::Model2, 10.0).unwrap();
        assert_eq!(p.blocks(), BlockSizes { usa: 27, hyp: 3, time: 1 });
        assert_eq!(p.design().ncols(), 27 + 3 + 1);
        assert_eq!(p.x_time.as_ref().unwrap().to_dense(), vec![vec![1.0]]);
        // deeper source => longer ray => positive z partial under depth-positive z
        let hyp = p.x_hyp.as_ref().unwrap().to_dense();
        assert_eq!(hyp[0][0], 0.0);
        assert_eq!(hyp[0][1], 0.0);
        assert!((hyp[0][2] - 0.1).abs() < 1e-15);
        assert!((p.x_usa.row(0).1.iter().sum::<f64>() - 250.0).abs() < 1e-9);
    }

    #[test]
    fn model1_has_no_source_blocks() {
        let (g, geo) = single_path();
        let p = assemble_forward(&g, &geo, ModelKind::Model1, 10.0).unwrap();
        assert!(p.x_hyp.is_none() && p.x_time.is_none());
        assert_eq!(p.design().ncols(), 27);
    }

    #[test]
    fn partials_match_finite_difference() {
        let src = [10.0, 20.0, 300.0];
        let rcv = [250.0, -40.0, 0.0];
        let v0 = 8.0;
        let g = hypocenter_partials(src, rcv, v0);
        let tt = |s: [f64; 3]| ((rcv[0] - s[0]).powi(2) + (rcv[1] - s[1]).powi(2) + (rcv[2] - s[2]).powi(2)).sqrt() / v0;
        for a in 0..3 {
            let h = 1e-4;
            let mut p = src;
            let mut m = src;
            p[a] += h;
            m[a] -= h;
            assert!(((tt(p) - tt(m)) / (2.0 * h) - g[a]).abs() < 1e-8);
        }
    }

    #[test]
    fn missing_ray_reported() {
        let g = VoxelGrid::new([0.0, 0.0, 100.0], [2, 2, 2], [10.0; 3]).unwrap();
        let geo = EventStationGeometry::new(vec![[500.0, 500.0, 50.0]], vec![[600.0, 600.0]], vec![(0, 0)]).unwrap();
        assert!(matches!(
            assemble_forward(&g, &geo, ModelKind::Model1, 10.0),
            Err(ForwardError::EmptyRay(0))
        ));
    }

    #[test]
    fn geometry_validation() {
        assert!(EventStationGeometry::<f64>::new(vec![[0.0, 0.0, 0.0]], vec![[0.0, 0.0]], vec![]).is_err());
        assert!(EventStationGeometry::<f64>::new(vec![[0.0, 0.0, 1.0]], vec![[0.0, 0.0]], vec![(0, 1)]).is_err());
    }

    #[test]
    fn noise_none_is_exact() {
        let x = SparseMatrix::from_triplets(2, 2, [(0, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let y = synthesize_data(&x, &[1.0, 1.0], &NoiseSpec { kind: NoiseKind::None, seed: 1 }).unwrap();
        assert_eq!(y, vec![2.0, 3.0]);
        let bad = NoiseSpec { kind: NoiseKind::StudentT { dof: 2.0 }, seed: 1 };
        assert!(synthesize_data(&x, &[1.0, 1.0], &bad).is_err());
    }

    #[test]
    fn generated_geometry_is_traceable() {
        let g = VoxelGrid::new([0.0; 3], [6, 6, 3], [100.0; 3]).unwrap();
        let geo = EventStationGeometry::generate(&g, 6, 10, 40, &mut crate::random::seeded(5)).unwrap();
        assert_eq!(geo.paths().len(), 40);
        let p = assemble_forward(&g, &geo, ModelKind::Model1, 10.0).unwrap();
        assert_eq!(p.n_obs(), 40);
    }

    #[test]
    fn geometry_csv_round_trip() {
        let g = VoxelGrid::new([0.0; 3], [4, 4, 2], [50.0; 3]).unwrap();
        let geo = EventStationGeometry::generate(&g, 3, 4, 100, &mut crate::random::seeded(2)).unwrap();
        let (mut e, mut s, mut p) = (Vec::new(), Vec::new(), Vec::new());
        geo.write_csv(&mut e, &mut s, &mut p).unwrap();
        assert!(String::from_utf8(e.clone()).unwrap().starts_with("id,x,y,z\n"));
        assert!(String::from_utf8(p.clone()).unwrap().starts_with("event_id,station_id\n"));
        let back = EventStationGeometry::read_csv(&e[..], &s[..], &p[..]).unwrap();
        assert_eq!(back, geo);
    }
}

//! Sparse spatio-temporal risk maps.
//!
//! A [`RiskMap`] stores, for every grid cell whose aggregate risk reaches the
//! truncation threshold, the accumulated `ln(1 - P)` of that cell. Storing the
//! log-complement makes merging two maps a pure addition, and a trajectory is
//! evaluated by summing the log-complements of the cells it visits.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{log_complement, probability_from_log_complement, PresenceCell, RiskParams, Trajectory};

/// Default truncation threshold for map entries.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-9;

/// Relative tolerance used to decide whether a coordinate sits on a cell center.
const CENTER_TOLERANCE: f64 = 1e-6;

/// Integer index of a grid cell. Ordered by `(k, i, j)`, time first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: i32,
    pub j: i32,
    pub k: i64,
}

impl CellIndex {
    pub const fn new(i: i32, j: i32, k: i64) -> Self {
        Self { i, j, k }
    }
}

impl Ord for CellIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.k, self.i, self.j).cmp(&(other.k, other.i, other.j))
    }
}

impl PartialOrd for CellIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Placement and resolution of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub origin_t: i64,
    pub cell_size_xy: f64,
    pub cell_size_t: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { origin_x: 0.0, origin_y: 0.0, origin_t: 0, cell_size_xy: 1.0, cell_size_t: 1.0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_xy > 0.0 && self.cell_size_xy.is_finite())
            || !(self.cell_size_t > 0.0 && self.cell_size_t.is_finite())
        {
            return Err(Error::Domain(format!(
                "cell sizes must be positive and finite, got {} m and {} s",
                self.cell_size_xy, self.cell_size_t
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::Domain("grid origin must be finite".into()));
        }
        Ok(())
    }

    fn spatial_index(&self, v: f64, origin: f64) -> Result<i32> {
        let f = ((v - origin) / self.cell_size_xy).floor();
        if !(f >= i32::MIN as f64 && f <= i32::MAX as f64) {
            return Err(Error::Discretization(format!("coordinate {v} outside the index range")));
        }
        Ok(f as i32)
    }

    fn time_index(&self, t: f64) -> Result<i64> {
        let f = ((t - self.origin_t as f64) / self.cell_size_t).floor();
        // i64::MAX is not representable; stay well inside it.
        if !(f.abs() < 9.0e18) {
            return Err(Error::Discretization(format!("time {t} outside the index range")));
        }
        Ok(f as i64)
    }

    /// Index of the cell containing a continuous point.
    pub fn index_of_point(&self, x: f64, y: f64, t: f64) -> Result<CellIndex> {
        Ok(CellIndex {
            i: self.spatial_index(x, self.origin_x)?,
            j: self.spatial_index(y, self.origin_y)?,
            k: self.time_index(t)?,
        })
    }

    pub fn center(&self, idx: CellIndex) -> PresenceCell {
        PresenceCell {
            x: self.origin_x + (idx.i as f64 + 0.5) * self.cell_size_xy,
            y: self.origin_y + (idx.j as f64 + 0.5) * self.cell_size_xy,
            t: self.origin_t as f64 + (idx.k as f64 + 0.5) * self.cell_size_t,
        }
    }

    /// Index of a presence cell that must sit on one of this grid's centers.
    pub fn index_of_cell(&self, cell: &PresenceCell) -> Result<CellIndex> {
        let idx = self.index_of_point(cell.x, cell.y, cell.t)?;
        let c = self.center(idx);
        let off_xy = (c.x - cell.x).abs().max((c.y - cell.y).abs()) / self.cell_size_xy;
        let off_t = (c.t - cell.t).abs() / self.cell_size_t;
        if off_xy > CENTER_TOLERANCE || off_t > CENTER_TOLERANCE {
            return Err(Error::Discretization(format!(
                "cell ({}, {}, {}) is not on a grid center",
                cell.x, cell.y, cell.t
            )));
        }
        Ok(idx)
    }
}

/// A continuous position sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl PathSample {
    pub const fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }
}

/// Samples a continuous path at every grid tick in `[t_first, t_last)`,
/// interpolating positions linearly and flooring them to cell indices.
pub fn discretize(path: &[PathSample], spec: &GridSpec) -> Result<Trajectory> {
    spec.validate()?;
    if let Some(w) = path.windows(2).find(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Ordering(format!(
            "path samples must have strictly increasing times ({} then {})",
            w[0].t, w[1].t
        )));
    }
    if path.iter().any(|s| !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite())) {
        return Err(Error::Discretization("path contains non-finite values".into()));
    }
    let (Some(first), Some(last)) = (path.first(), path.last()) else {
        return Trajectory::new(Vec::new());
    };
    let tick_time = |k: i64| spec.origin_t as f64 + k as f64 * spec.cell_size_t;
    let mut k = ((first.t - spec.origin_t as f64) / spec.cell_size_t).ceil() as i64;
    let mut seg = 0usize;
    let mut cells = Vec::new();
    while tick_time(k) < last.t {
        let t = tick_time(k);
        while path[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&path[seg], &path[seg + 1]);
        let dt = t - a.t;
        let x = a.x + dt * ((b.x - a.x) / (b.t - a.t));
        let y = a.y + dt * ((b.y - a.y) / (b.t - a.t));
        let mut idx = spec.index_of_point(x, y, t)?;
        idx.k = k;
        cells.push(spec.center(idx));
        k += 1;
    }
    Trajectory::new(cells)
}

/// Sparse per-cell aggregate risk, stored as `ln(1 - P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMap {
    spec: GridSpec,
    params: RiskParams,
    truncation_eps: f64,
    entries: BTreeMap<CellIndex, f64>,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("truncation eps must lie in (0, 1), got {eps}")))
    }
}

impl RiskMap {
    pub fn empty(spec: GridSpec, params: RiskParams, truncation_eps: f64) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        check_eps(truncation_eps)?;
        Ok(Self { spec, params, truncation_eps, entries: BTreeMap::new() })
    }

    /// Assembles a map from raw entries, checking every invariant.
    pub fn from_parts(
        spec: GridSpec,
        params: RiskParams,
        truncation_eps: f64,
        entries: impl IntoIterator<Item = (CellIndex, f64)>,
    ) -> Result<Self> {
        let mut map = Self::empty(spec, params, truncation_eps)?;
        let limit = map.log_q_limit();
        for (idx, log_q) in entries {
            if !(log_q.is_finite() || log_q == f64::NEG_INFINITY) || log_q > limit {
                return Err(Error::Domain(format!(
                    "entry {idx:?} has log_q {log_q}, above the truncation limit {limit}"
                )));
            }
            if map.entries.insert(idx, log_q).is_some() {
                return Err(Error::Domain(format!("duplicate entry {idx:?}")));
            }
        }
        Ok(map)
    }

    /// Largest storable `log_q`, i.e. `ln(1 - eps)`.
    pub fn log_q_limit(&self) -> f64 {
        (-self.truncation_eps).ln_1p()
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn params(&self) -> &RiskParams {
        &self.params
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in `(k, i, j)` order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = (CellIndex, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn log_q(&self, idx: CellIndex) -> Option<f64> {
        self.entries.get(&idx).copied()
    }

    pub fn risk_at(&self, idx: CellIndex) -> f64 {
        self.log_q(idx).map_or(0.0, probability_from_log_complement)
    }

    /// Risk of the cell containing `cell`; absent cells have risk 0.
    pub fn lookup_cell(&self, cell: &PresenceCell) -> f64 {
        match self.spec.index_of_point(cell.x, cell.y, cell.t) {
            Ok(idx) => self.risk_at(idx),
            Err(_) => 0.0,
        }
    }

    /// `ln(1 - P(C = 1 | s))` of a trajectory from stored cells only.
    pub fn trajectory_log_complement(&self, user: &Trajectory) -> Result<f64> {
        let mut total = 0.0;
        for cell in user.cells() {
            let idx = self.spec.index_of_cell(cell)?;
            if let Some(l) = self.entries.get(&idx) {
                total += l;
            }
        }
        Ok(total)
    }

    /// Overall infection probability of a trajectory from this map alone.
    pub fn evaluate_trajectory(&self, user: &Trajectory) -> Result<f64> {
        self.trajectory_log_complement(user).map(probability_from_log_complement)
    }

    /// Adds another map built on the same grid and parameters.
    pub fn merge(&mut self, other: &RiskMap) -> Result<()> {
        if self.spec != other.spec || self.params != other.params || self.truncation_eps != other.truncation_eps {
            return Err(Error::Domain("cannot merge maps with different grid, parameters or eps".into()));
        }
        for (idx, l) in other.entries() {
            *self.entries.entry(idx).or_insert(0.0) += l;
        }
        Ok(())
    }

    /// Entries whose index satisfies `keep`, with the same header fields.
    pub fn filtered(&self, mut keep: impl FnMut(&CellIndex) -> bool) -> RiskMap {
        RiskMap {
            spec: self.spec,
            params: self.params,
            truncation_eps: self.truncation_eps,
            entries: self.entries.iter().filter(|(k, _)| keep(k)).map(|(k, v)| (*k, *v)).collect(),
        }
    }
}

/// Offsets (in cells) around a patient cell that receive a contribution of at
/// least `cutoff`, with the exact pairwise probability for each.
struct Neighborhood {
    offsets: Vec<(i32, i32, i64, f64)>,
}

impl Neighborhood {
    fn new(params: &RiskParams, spec: &GridSpec, cutoff: f64) -> Self {
        let p0 = params.p0();
        if p0 < cutoff {
            return Self { offsets: Vec::new() };
        }
        let reach = (p0 / cutoff).ln().sqrt();
        let rx = (params.sigma_x() * reach / spec.cell_size_xy).ceil() as i32 + 1;
        let ry = (params.sigma_y() * reach / spec.cell_size_xy).ceil() as i32 + 1;
        let rk = (params.sigma_t() * reach / spec.cell_size_t).ceil() as i64 + 1;
        let user = |di: i32, dj: i32, dk: i64| {
            PresenceCell::new(
                di as f64 * spec.cell_size_xy,
                dj as f64 * spec.cell_size_xy,
                dk as f64 * spec.cell_size_t,
            )
        };
        let origin = PresenceCell::new(0.0, 0.0, 0.0);
        let mut offsets = Vec::new();
        for dk in 0..=rk {
            for di in -rx..=rx {
                for dj in -ry..=ry {
                    let p = crate::risk::pairwise_risk(&user(di, dj, dk), &origin, params);
                    if p >= cutoff {
                        offsets.push((di, dj, dk, p));
                    }
                }
            }
        }
        Self { offsets }
    }
}

/// Builds the per-cell aggregate risk map for all patient presences.
///
/// Each patient cell contributes only to cells where its pairwise risk is at
/// least `eps / N` (`N` = total patient cells), and cells whose aggregate risk
/// stays below `eps` are dropped.
pub fn build_risk_map(
    patients: &[Trajectory],
    params: &RiskParams,
    spec: &GridSpec,
    truncation_eps: f64,
) -> Result<RiskMap> {
    let mut map = RiskMap::empty(*spec, *params, truncation_eps)?;
    let sources: Vec<CellIndex> =
        patients.iter().flat_map(|p| p.cells()).map(|c| spec.index_of_cell(c)).collect::<Result<_>>()?;
    if sources.is_empty() {
        return Ok(map);
    }
    let cutoff = truncation_eps / sources.len() as f64;
    let hood = Neighborhood::new(params, spec, cutoff);
    let mut acc: HashMap<CellIndex, f64> = HashMap::new();
    for src in &sources {
        for &(di, dj, dk, p) in &hood.offsets {
            let (Some(i), Some(j), Some(k)) = (src.i.checked_add(di), src.j.checked_add(dj), src.k.checked_add(dk))
            else {
                continue;
            };
            *acc.entry(CellIndex { i, j, k }).or_insert(0.0) += log_complement(p);
        }
    }
    let limit = map.log_q_limit();
    map.entries = acc.into_iter().filter(|&(_, l)| l <= limit).collect();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{cell_risk, trajectory_risk, DEFAULT_P0};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec::default()
    }

    fn cell(i: i32, j: i32, k: i64) -> PresenceCell {
        spec().center(CellIndex::new(i, j, k))
    }

    fn traj(cells: Vec<PresenceCell>) -> Trajectory {
        Trajectory::new(cells).unwrap()
    }

    fn random_patient(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        let mut t = rng.random_range(0..20);
        let (mut i, mut j) = (rng.random_range(-5..5), rng.random_range(-5..5));
        let mut cells = Vec::new();
        for _ in 0..n {
            cells.push(cell(i, j, t));
            t += rng.random_range(1..3);
            i += rng.random_range(-1..=1);
            j += rng.random_range(-1..=1);
        }
        traj(cells)
    }

    #[test]
    fn cell_index_orders_time_first() {
        let a = CellIndex::new(5, 5, 0);
        let b = CellIndex::new(-5, -5, 1);
        assert!(a < b);
        assert!(CellIndex::new(0, 1, 3) < CellIndex::new(1, 0, 3));
    }

    #[test]
    fn index_mapping_floors() {
        let s = GridSpec { origin_x: 10.0, origin_y: -3.0, origin_t: 100, cell_size_xy: 2.0, cell_size_t: 5.0 };
        assert_eq!(s.index_of_point(10.0, -3.0, 100.0).unwrap(), CellIndex::new(0, 0, 0));
        assert_eq!(s.index_of_point(9.99, -3.01, 99.0).unwrap(), CellIndex::new(-1, -1, -1));
        assert_eq!(s.index_of_point(13.9, 1.0, 114.9).unwrap(), CellIndex::new(1, 2, 2));
        let c = s.center(CellIndex::new(1, 2, 2));
        assert_eq!((c.x, c.y, c.t), (13.0, 2.0, 112.5));
        assert_eq!(s.index_of_cell(&c).unwrap(), CellIndex::new(1, 2, 2));
        assert!(s.index_of_cell(&PresenceCell::new(12.2, 2.0, 112.5)).is_err());
        assert!(s.index_of_point(1e12, 0.0, 0.0).is_err());
    }

    #[test]
    fn invalid_grid_rejected() {
        let s = GridSpec { cell_size_xy: 0.0, ..GridSpec::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_patient_cell_stores_p0() {
        let map = build_risk_map(&[traj(vec![cell(3, 4, 5)])], &RiskParams::reference(), &spec(), 1e-9).unwrap();
        let r = map.lookup_cell(&cell(3, 4, 5));
        assert!((r - DEFAULT_P0).abs() < 1e-17);
        // No risk before the patient arrives.
        assert_eq!(map.lookup_cell(&cell(3, 4, 4)), 0.0);
    }

    #[test]
    fn empty_patients_empty_map() {
        let map = build_risk_map(&[], &RiskParams::reference(), &spec(), 1e-9).unwrap();
        assert!(map.is_empty());
        let map = build_risk_map(&[traj(vec![])], &RiskParams::reference(), &spec(), 1e-9).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn eps_domain() {
        let p = [traj(vec![cell(0, 0, 0)])];
        for eps in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(build_risk_map(&p, &RiskParams::reference(), &spec(), eps), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn off_grid_patient_rejected() {
        let p = [traj(vec![PresenceCell::new(0.1, 0.5, 0.5)])];
        assert!(matches!(build_risk_map(&p, &RiskParams::reference(), &spec(), 1e-9), Err(Error::Discretization(_))));
    }

    #[test]
    fn stored_entries_respect_truncation() {
        let params = RiskParams::new(0.05, 1.0, 1.5, 20.0).unwrap();
        let map = build_risk_map(&[traj(vec![cell(0, 0, 0), cell(1, 0, 1)])], &params, &spec(), 1e-6).unwrap();
        assert!(!map.is_empty());
        let limit = map.log_q_limit();
        assert!(map.entries().all(|(_, l)| l <= limit && l < 0.0));
        assert!(map.entries().all(|(_, l)| probability_from_log_complement(l) >= 1e-6 * (1.0 - 1e-12)));
    }

    #[test]
    fn two_patients_match_concatenated_cell_risk() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = RiskParams::new(0.05, 1.0, 1.2, 15.0).unwrap();
        let a = random_patient(&mut rng, 12);
        let b = random_patient(&mut rng, 9);
        let map = build_risk_map(&[a.clone(), b.clone()], &params, &spec(), 1e-12).unwrap();
        let all: Vec<PresenceCell> = a.cells().iter().chain(b.cells()).copied().collect();
        for (idx, _) in map.entries().step_by(37) {
            let direct = cell_risk(&spec().center(idx), &all, &params);
            assert!((map.risk_at(idx) - direct).abs() <= 1e-12, "{idx:?}");
        }
        for _ in 0..200 {
            let c = cell(rng.random_range(-12..12), rng.random_range(-12..12), rng.random_range(0..80));
            let direct = cell_risk(&c, &all, &params);
            assert!((map.lookup_cell(&c) - direct).abs() <= 2e-12);
        }
    }

    #[test]
    fn lookup_absent_and_known_value() {
        let idx = CellIndex::new(1, 1, 1);
        let map = RiskMap::from_parts(spec(), RiskParams::reference(), 1e-9, [(idx, 0.5f64.ln())]).unwrap();
        assert!((map.risk_at(idx) - 0.5).abs() < 1e-15);
        assert_eq!(map.lookup_cell(&cell(0, 0, 0)), 0.0);
        assert!(RiskMap::from_parts(spec(), RiskParams::reference(), 1e-9, [(idx, 0.0)]).is_err());
        assert!(RiskMap::from_parts(spec(), RiskParams::reference(), 1e-9, [(idx, 0.1)]).is_err());
    }

    #[test]
    fn evaluate_trajectory_cases() {
        let params = RiskParams::reference();
        let patient = traj(vec![cell(0, 0, 0)]);
        let map = build_risk_map(&[patient], &params, &spec(), 1e-9).unwrap();
        let away = traj((0..10).map(|k| cell(50, 50, k)).collect());
        assert_eq!(map.evaluate_trajectory(&away).unwrap(), 0.0);
        let on = traj(vec![cell(0, 0, 3)]);
        assert_eq!(map.evaluate_trajectory(&on).unwrap(), map.lookup_cell(&cell(0, 0, 3)));
        let off = traj(vec![PresenceCell::new(0.2, 0.5, 0.5)]);
        assert!(matches!(map.evaluate_trajectory(&off), Err(Error::Discretization(_))));
    }

    #[test]
    fn random_trajectory_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = RiskParams::new(0.02, 1.0, 1.0, 30.0).unwrap();
        let patients: Vec<Trajectory> = (0..3).map(|_| random_patient(&mut rng, 20)).collect();
        let all: Vec<PresenceCell> = patients.iter().flat_map(|p| p.cells()).copied().collect();
        let map = build_risk_map(&patients, &params, &spec(), 1e-12).unwrap();
        for _ in 0..20 {
            let user = random_patient(&mut rng, 100);
            let direct = trajectory_risk(&user, &all, &params);
            let via_map = map.evaluate_trajectory(&user).unwrap();
            assert!((direct - via_map).abs() < 1e-9, "{direct} vs {via_map}");
            assert!(via_map <= direct + 1e-15);
        }
    }

    #[test]
    fn merge_equals_joint_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = RiskParams::new(0.03, 1.0, 1.0, 10.0).unwrap();
        let a = random_patient(&mut rng, 10);
        let b = random_patient(&mut rng, 10);
        let joint = build_risk_map(&[a.clone(), b.clone()], &params, &spec(), 1e-14).unwrap();
        let mut merged = build_risk_map(&[a], &params, &spec(), 1e-14).unwrap();
        merged.merge(&build_risk_map(&[b], &params, &spec(), 1e-14).unwrap()).unwrap();
        for (idx, _) in joint.entries() {
            assert!((joint.risk_at(idx) - merged.risk_at(idx)).abs() <= 1e-12);
        }
        for (idx, _) in merged.entries() {
            assert!((joint.risk_at(idx) - merged.risk_at(idx)).abs() <= 1e-12);
        }
        let other = RiskMap::empty(spec(), params.with_sigma_t(11.0).unwrap(), 1e-12).unwrap();
        assert!(merged.merge(&other).is_err());
    }

    #[test]
    fn sparsity_independent_of_extent() {
        let params = RiskParams::new(0.05, 1.0, 1.0, 10.0).unwrap();
        let near = build_risk_map(&[traj(vec![cell(0, 0, 0)])], &params, &spec(), 1e-6).unwrap();
        let far = build_risk_map(
            &[traj(vec![cell(0, 0, 0)]), traj(vec![cell(100_000, -70_000, 1_000_000)])],
            &params,
            &spec(),
            1e-6,
        )
        .unwrap();
        assert!(far.len() <= 2 * near.len() + 2 * near.len() / 10);
    }

    #[test]
    fn discretize_stationary() {
        let path = [PathSample::new(0.0, 3.2, 4.7), PathSample::new(10.0, 3.2, 4.7)];
        let t = discretize(&path, &spec()).unwrap();
        assert_eq!(t.len(), 10);
        for (n, c) in t.cells().iter().enumerate() {
            assert_eq!(spec().index_of_cell(c).unwrap(), CellIndex::new(3, 4, n as i64));
        }
    }

    #[test]
    fn discretize_straight_line() {
        let path = [PathSample::new(0.0, 0.5, 0.5), PathSample::new(5.0, 5.5, 0.5)];
        let t = discretize(&path, &spec()).unwrap();
        let idx: Vec<_> = t.cells().iter().map(|c| spec().index_of_cell(c).unwrap()).collect();
        assert_eq!(idx, (0..5).map(|n| CellIndex::new(n, 0, n as i64)).collect::<Vec<_>>());
    }

    #[test]
    fn discretize_diagonal_matches_point_in_cell() {
        let v = 0.75 / 2f64.sqrt();
        let path = [PathSample::new(0.3, 1.1, 2.2), PathSample::new(40.3, 1.1 + 40.0 * v, 2.2 + 40.0 * v)];
        let t = discretize(&path, &spec()).unwrap();
        // Ticks 1..=40 lie in [0.3, 40.3).
        assert_eq!(t.len(), 40);
        for (n, c) in t.cells().iter().enumerate() {
            let tick = (n + 1) as f64;
            let x = 1.1 + (tick - 0.3) * v;
            let y = 2.2 + (tick - 0.3) * v;
            assert_eq!(c.x, x.floor() + 0.5);
            assert_eq!(c.y, y.floor() + 0.5);
            assert_eq!(c.t, tick + 0.5);
        }
    }

    #[test]
    fn discretize_rejects_non_monotone() {
        let path = [PathSample::new(2.0, 0.0, 0.0), PathSample::new(1.0, 0.0, 0.0)];
        assert!(matches!(discretize(&path, &spec()), Err(Error::Ordering(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_truncation_only_drops_risk(seed in 0u64..10_000, eps_exp in 3i32..10) {
            let eps = 10f64.powi(-eps_exp);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = RiskParams::new(rng.random_range(0.001..0.2), 1.0, rng.random_range(0.5..2.0), rng.random_range(2.0..20.0)).unwrap();
            let patients: Vec<Trajectory> = (0..2).map(|_| random_patient(&mut rng, 8)).collect();
            let all: Vec<PresenceCell> = patients.iter().flat_map(|p| p.cells()).copied().collect();
            let map = build_risk_map(&patients, &params, &spec(), eps).unwrap();
            let user = random_patient(&mut rng, 30);
            let direct = trajectory_risk(&user, &all, &params);
            let via_map = map.evaluate_trajectory(&user).unwrap();
            let m = user.len() as i32;
            prop_assert!(via_map <= direct + 1e-15);
            prop_assert!(direct - via_map <= 1.0 - (1.0 - 2.0 * eps).powi(m) + 1e-15);
        }
    }
}

//! Monte Carlo comparison of risk-based and proximity-based tracing.
//!
//! A patient crosses a square area from the middle of the west side, heading
//! east at constant speed, starting at `t = 0`. In each trial one walker enters
//! at a uniformly random time, through a uniformly random side, at a uniform
//! point on the middle half of that side, and crosses straight to the opposite
//! side at a uniformly random constant speed. Each walker gets a risk score from
//! the published map, a minimum simultaneous distance to the patient, and a
//! ground-truth infection drawn from its own risk.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_risk_map, discretize, GridSpec, PathSample, RiskMap};
use crate::risk::{trajectory_risk, PresenceCell, RiskParams, Trajectory};
use crate::roc::{roc_curve, RocCurve};

/// Scenario of the crossing experiment. Defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Side of the square area (m).
    pub area_side: f64,
    /// Length of the observation span (s).
    pub horizon: f64,
    /// Patient walking speed (m/s).
    pub patient_speed: f64,
    /// Walker entry times are uniform on this window (s).
    pub walker_entry_window: (f64, f64),
    /// Walker speeds are uniform on this range (m/s).
    pub walker_speed_range: (f64, f64),
    pub n_trials: usize,
    pub rng_seed: u64,
    /// Truncation threshold of the map used for scoring.
    pub map_eps: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 100.0,
            horizon: 350.0,
            patient_speed: 1.0,
            walker_entry_window: (0.0, 200.0),
            walker_speed_range: (0.75, 1.25),
            n_trials: 20_000,
            rng_seed: 0,
            map_eps: 1e-12,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("area_side", self.area_side)?;
        positive("horizon", self.horizon)?;
        positive("patient_speed", self.patient_speed)?;
        let (lo, hi) = self.walker_speed_range;
        positive("walker speed", lo)?;
        if !(hi >= lo && hi.is_finite()) {
            return Err(Error::Domain(format!("walker speed range [{lo}, {hi}] is not ordered")));
        }
        let (e0, e1) = self.walker_entry_window;
        if !(e0 >= 0.0 && e1 >= e0 && e1 <= self.horizon) {
            return Err(Error::Domain(format!("entry window [{e0}, {e1}] must lie within [0, {}]", self.horizon)));
        }
        if !(self.map_eps > 0.0 && self.map_eps < 1.0) {
            return Err(Error::Domain(format!("map eps must lie in (0, 1), got {}", self.map_eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::West => "west",
            Side::East => "east",
            Side::South => "south",
            Side::North => "north",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Side::ALL
            .into_iter()
            .find(|side| side.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown side {s:?}")))
    }
}

/// How a walker enters the area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerMeta {
    pub side: Side,
    pub entry_time: f64,
    /// Position along the entry side (m from the side's low corner).
    pub entry_offset: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub walker: WalkerMeta,
    pub risk_score: f64,
    /// Minimum simultaneous distance to the patient; `INFINITY` if the two
    /// never share a tick.
    pub min_distance: f64,
    pub infected: bool,
}

impl TrialRecord {
    /// `exp(-min_distance)`: larger means closer.
    pub fn proximity_score(&self) -> f64 {
        (-self.min_distance).exp()
    }
}

/// The patient's crossing, west to east along the midline, starting at `t = 0`.
pub fn generate_patient(config: &ScenarioConfig, spec: &GridSpec) -> Result<Trajectory> {
    config.validate()?;
    let mid = config.area_side / 2.0;
    let duration = config.area_side / config.patient_speed;
    let t = discretize(&[PathSample::new(0.0, 0.0, mid), PathSample::new(duration, config.area_side, mid)], spec)?;
    Ok(t.with_person_id("patient"))
}

/// Trajectory of a walker with a fixed entry.
pub fn walker_trajectory(config: &ScenarioConfig, meta: &WalkerMeta, spec: &GridSpec) -> Result<Trajectory> {
    let side = config.area_side;
    let off = meta.entry_offset;
    let (start, dir) = match meta.side {
        Side::West => ((0.0, off), (1.0, 0.0)),
        Side::East => ((side, off), (-1.0, 0.0)),
        Side::South => ((off, 0.0), (0.0, 1.0)),
        Side::North => ((off, side), (0.0, -1.0)),
    };
    let exit = meta.entry_time + side / meta.speed;
    let end = exit.min(config.horizon);
    if end <= meta.entry_time {
        return Trajectory::new(Vec::new());
    }
    let travelled = (end - meta.entry_time) * meta.speed;
    discretize(
        &[
            PathSample::new(meta.entry_time, start.0, start.1),
            PathSample::new(end, start.0 + dir.0 * travelled, start.1 + dir.1 * travelled),
        ],
        spec,
    )
}

pub fn sample_walker_meta<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> WalkerMeta {
    let (e0, e1) = config.walker_entry_window;
    let (v0, v1) = config.walker_speed_range;
    let side = Side::ALL[rng.random_range(0..4)];
    let entry_time = if e1 > e0 { rng.random_range(e0..e1) } else { e0 };
    let entry_offset = rng.random_range(config.area_side / 4.0..config.area_side * 3.0 / 4.0);
    let speed = if v1 > v0 { rng.random_range(v0..v1) } else { v0 };
    WalkerMeta { side, entry_time, entry_offset, speed }
}

/// Draws a random walker and its trajectory.
pub fn generate_walker<R: Rng>(
    config: &ScenarioConfig,
    spec: &GridSpec,
    rng: &mut R,
) -> Result<(Trajectory, WalkerMeta)> {
    let meta = sample_walker_meta(config, rng);
    Ok((walker_trajectory(config, &meta, spec)?, meta))
}

/// Bernoulli draw with success probability equal to the walker's direct risk.
pub fn sample_ground_truth<R: Rng>(
    walker: &Trajectory,
    patient_cells: &[PresenceCell],
    true_params: &RiskParams,
    rng: &mut R,
) -> bool {
    let p = trajectory_risk(walker, patient_cells, true_params);
    rng.random::<f64>() < p
}

/// Minimum center-to-center distance over ticks where both are present.
pub fn min_distance(walker: &Trajectory, patient: &Trajectory) -> f64 {
    let (a, b) = (walker.cells(), patient.cells());
    let (mut i, mut j) = (0, 0);
    let mut best = f64::INFINITY;
    while i < a.len() && j < b.len() {
        if a[i].t < b[j].t {
            i += 1;
        } else if a[i].t > b[j].t {
            j += 1;
        } else {
            best = best.min((a[i].x - b[j].x).hypot(a[i].y - b[j].y));
            i += 1;
            j += 1;
        }
    }
    best
}

/// Per-trial generator: stream `trial_index` of the seeded ChaCha8 generator.
pub fn trial_rng(seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index as u64);
    rng
}

/// Scenario state shared by all trials: the patient and the published map.
pub struct Experiment {
    pub config: ScenarioConfig,
    pub params: RiskParams,
    pub spec: GridSpec,
    pub patient: Trajectory,
    pub map: RiskMap,
}

impl Experiment {
    pub fn new(config: ScenarioConfig, params: RiskParams) -> Result<Self> {
        let spec = GridSpec::default();
        let patient = generate_patient(&config, &spec)?;
        let map = build_risk_map(std::slice::from_ref(&patient), &params, &spec, config.map_eps)?;
        Ok(Self { config, params, spec, patient, map })
    }

    pub fn trial(&self, trial_index: usize) -> Result<TrialRecord> {
        let mut rng = trial_rng(self.config.rng_seed, trial_index);
        let (walker, meta) = generate_walker(&self.config, &self.spec, &mut rng)?;
        let risk_score = self.map.evaluate_trajectory(&walker)?;
        let infected = sample_ground_truth(&walker, self.patient.cells(), &self.params, &mut rng);
        Ok(TrialRecord {
            trial_index,
            walker: meta,
            risk_score,
            min_distance: min_distance(&walker, &self.patient),
            infected,
        })
    }

    pub fn run(&self) -> Result<Vec<TrialRecord>> {
        (0..self.config.n_trials).map(|n| self.trial(n)).collect()
    }
}

/// Runs every trial of the scenario; deterministic in `config.rng_seed`.
pub fn run_experiment(config: &ScenarioConfig, params: &RiskParams) -> Result<Vec<TrialRecord>> {
    Experiment::new(config.clone(), *params)?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Risk,
    Proximity,
}

impl Metric {
    pub fn score(self, r: &TrialRecord) -> f64 {
        match self {
            Metric::Risk => r.risk_score,
            Metric::Proximity => r.proximity_score(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Risk => "risk",
            Metric::Proximity => "proximity",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk" => Ok(Metric::Risk),
            "proximity" => Ok(Metric::Proximity),
            other => Err(Error::Format(format!("unknown metric {other:?}"))),
        }
    }
}

pub fn roc(records: &[TrialRecord], metric: Metric) -> Result<RocCurve> {
    let scores: Vec<f64> = records.iter().map(|r| metric.score(r)).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.infected).collect();
    roc_curve(&scores, &labels)
}

/// Formats a float with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

pub const TRIALS_HEADER: [&str; 7] =
    ["trial_index", "entry_side", "entry_time", "speed", "risk_score", "min_distance", "infected"];

pub fn write_trials_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            r.trial_index.to_string(),
            r.walker.side.to_string(),
            fmt_sig9(r.walker.entry_time),
            fmt_sig9(r.walker.speed),
            fmt_sig9(r.risk_score),
            fmt_sig9(r.min_distance),
            u8::from(r.infected).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trials file. Entry offsets are not stored and come back as NaN.
pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(TRIALS_HEADER) {
        return Err(Error::Format(format!("unexpected trials header {headers:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(TrialRecord {
            trial_index: row[0].parse().map_err(|e| Error::Format(format!("bad trial index: {e}")))?,
            walker: WalkerMeta {
                side: row[1].parse()?,
                entry_time: num(&row[2])?,
                entry_offset: f64::NAN,
                speed: num(&row[3])?,
            },
            risk_score: num(&row[4])?,
            min_distance: num(&row[5])?,
            infected: match &row[6] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Format(format!("infected must be 0 or 1, got {other:?}"))),
            },
        });
    }
    Ok(out)
}

pub fn write_roc_csv<W: Write>(curve: &RocCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([fmt_sig9(p.threshold), fmt_sig9(p.false_positive_rate), fmt_sig9(p.true_positive_rate)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["risk_score", "exp_neg_min_distance"])?;
    for r in records {
        w.write_record([fmt_sig9(r.risk_score), fmt_sig9(r.proximity_score())])?;
    }
    w.flush()?;
    Ok(())
}

//! Trajectory parsing, merge demonstration extraction, feature computation
//! and alignment onto a common decision-progress grid.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{Feature, FeatureVector, N_FEATURES};
use crate::geometry::{Projection, SceneGeometry};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Car,
    Truck,
    Other,
}

impl AgentType {
    fn parse(s: &str) -> AgentType {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => AgentType::Car,
            "truck" => AgentType::Truck,
            _ => AgentType::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TrajectoryRecord {
    pub track_id: u64,
    pub frame_id: u64,
    #[serde(rename = "timestamp_ms")]
    pub timestamp: i64,
    #[serde(deserialize_with = "de_agent")]
    pub agent_type: AgentType,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    #[serde(rename = "psi_rad")]
    pub psi: f64,
    pub length: f64,
    pub width: f64,
}

fn de_agent<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<AgentType, D::Error> {
    let s = String::deserialize(d)?;
    Ok(AgentType::parse(&s))
}

/// Records grouped by track id, each track sorted by timestamp.
pub type Tracks = BTreeMap<u64, Vec<TrajectoryRecord>>;

/// Parses an INTERACTION-style CSV and keeps car/truck records inside the
/// region of interest.
pub fn parse_tracks<R: Read>(source: R, geometry: &SceneGeometry) -> Result<Tracks> {
    geometry.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut tracks = Tracks::new();
    for (i, row) in rdr.deserialize::<TrajectoryRecord>().enumerate() {
        let row_no = i + 1;
        let rec = row.map_err(|e| Error::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        let finite = [rec.x, rec.y, rec.vx, rec.vy, rec.psi, rec.length, rec.width]
            .iter()
            .all(|v| v.is_finite());
        if !finite || rec.length <= 0.0 || rec.width <= 0.0 {
            return Err(Error::Parse {
                row: row_no,
                msg: "non-finite value or non-positive vehicle dimension".into(),
            });
        }
        if let Some(prev) = tracks.get(&rec.track_id).and_then(|t| t.last()) {
            if rec.timestamp <= prev.timestamp {
                return Err(Error::Integrity(format!(
                    "track {} timestamp {} at row {row_no} does not follow {}",
                    rec.track_id, rec.timestamp, prev.timestamp
                )));
            }
        }
        // Ordering is checked on the full stream before filtering, so a
        // record outside the region still participates.
        tracks.entry(rec.track_id).or_default().push(rec);
    }
    for recs in tracks.values_mut() {
        recs.retain(|r| {
            r.agent_type != AgentType::Other && geometry.region_of_interest.contains([r.x, r.y])
        });
    }
    tracks.retain(|_, recs| !recs.is_empty());
    Ok(tracks)
}

/// Values used when a lead or lag vehicle is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sentinels {
    pub dx_lead: f64,
    pub dx_lag: f64,
    pub dv: f64,
}

impl Default for Sentinels {
    fn default() -> Self {
        Sentinels {
            dx_lead: 200.0,
            dx_lag: 200.0,
            dv: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub sentinels: Sentinels,
    pub min_frames: usize,
    pub frame_interval_ms: i64,
    pub frame_tolerance_ms: i64,
    /// Lateral extent of the target highway lane; `None` admits every
    /// highway-side vehicle as a neighbor candidate.
    pub highway_lane_width: Option<f64>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            sentinels: Sentinels::default(),
            min_frames: 10,
            frame_interval_ms: 100,
            frame_tolerance_ms: 1,
            highway_lane_width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: i64,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDemonstration {
    pub demo_id: u64,
    pub ego_track_id: u64,
    pub frames: Vec<Frame>,
    /// Index of the first frame past the boundary; always the last frame.
    pub crossing_index: usize,
}

impl MergeDemonstration {
    pub fn duration_ms(&self) -> i64 {
        self.frames.last().map_or(0, |l| l.timestamp - self.frames[0].timestamp)
    }
}

/// Per-frame feature computation from an ego record and its neighbors.
pub fn compute_features(
    ego: &TrajectoryRecord,
    lead: Option<&TrajectoryRecord>,
    lag: Option<&TrajectoryRecord>,
    geometry: &SceneGeometry,
    sentinels: &Sentinels,
) -> FeatureVector {
    let pe = geometry.project([ego.x, ego.y]);
    let (vlong, vlat) = lane_velocity(geometry, &pe, ego);
    let s_end = geometry.project(geometry.ramp_end).s;

    let mut fv = FeatureVector::default();
    fv.set(Feature::VxEgo, vlong);
    fv.set(Feature::VyEgo, vlat);
    fv.set(Feature::DxEnd, (s_end - pe.s).max(0.0));
    fv.set(Feature::DyBdry, pe.offset);

    let rel = |nb: Option<&TrajectoryRecord>, dx_sentinel: f64| match nb {
        Some(n) => {
            let pn = geometry.project([n.x, n.y]);
            let (vn, _) = lane_velocity(geometry, &pn, n);
            (pn.s - pe.s, vn - vlong)
        }
        None => (dx_sentinel, sentinels.dv),
    };
    let (dx, dv) = rel(lead, sentinels.dx_lead);
    fv.set(Feature::DxLead, dx);
    fv.set(Feature::DvLead, dv);
    let (dx, dv) = rel(lag, sentinels.dx_lag);
    fv.set(Feature::DxLag, dx);
    fv.set(Feature::DvLag, dv);
    fv
}

fn lane_velocity(g: &SceneGeometry, p: &Projection, r: &TrajectoryRecord) -> (f64, f64) {
    let n = g.toward_highway(p.tangent);
    (
        r.vx * p.tangent[0] + r.vy * p.tangent[1],
        r.vx * n[0] + r.vy * n[1],
    )
}

struct Located {
    track_id: u64,
    rec: TrajectoryRecord,
    proj: Projection,
}

/// Finds every ramp vehicle that crosses the boundary and turns its approach
/// into a demonstration. Demo ids follow ego track id order.
pub fn extract_merge_demonstrations(
    tracks: &Tracks,
    geometry: &SceneGeometry,
    cfg: &ExtractConfig,
) -> Result<Vec<MergeDemonstration>> {
    geometry.validate()?;
    let mut by_time: BTreeMap<i64, Vec<Located>> = BTreeMap::new();
    for (&track_id, recs) in tracks {
        for rec in recs {
            by_time.entry(rec.timestamp).or_default().push(Located {
                track_id,
                rec: *rec,
                proj: geometry.project([rec.x, rec.y]),
            });
        }
    }

    let ids: Vec<u64> = tracks.keys().copied().collect();
    let windows: Vec<Option<(u64, Vec<Frame>)>> = exec::map(&ids, |&tid| {
        let recs = &tracks[&tid];
        let range = decision_window(recs, geometry, cfg)?;
        let frames = recs[range]
            .iter()
            .map(|ego| {
                let others = by_time.get(&ego.timestamp).map(Vec::as_slice).unwrap_or(&[]);
                let (lead, lag) = neighbors(tid, ego, others, geometry, cfg);
                Frame {
                    timestamp: ego.timestamp,
                    features: compute_features(ego, lead, lag, geometry, &cfg.sentinels),
                }
            })
            .collect();
        Some((tid, frames))
    });

    Ok(windows
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(k, (tid, frames))| MergeDemonstration {
            demo_id: k as u64,
            ego_track_id: tid,
            crossing_index: frames.len() - 1,
            frames,
        })
        .collect())
}

/// Index range of the decision window, or `None` when the track is not a
/// qualifying merge.
fn decision_window(
    recs: &[TrajectoryRecord],
    geometry: &SceneGeometry,
    cfg: &ExtractConfig,
) -> Option<std::ops::Range<usize>> {
    let offsets: Vec<f64> = recs
        .iter()
        .map(|r| geometry.project([r.x, r.y]).offset)
        .collect();
    if offsets.first().is_none_or(|&o| o <= 0.0) {
        return None;
    }
    let crossing = offsets.iter().position(|&o| o <= 0.0)?;
    // Start after the last timing gap preceding the crossing.
    let mut start = 0;
    for k in 1..=crossing {
        let dt = recs[k].timestamp - recs[k - 1].timestamp;
        if (dt - cfg.frame_interval_ms).abs() > cfg.frame_tolerance_ms {
            start = k;
        }
    }
    (crossing + 1 - start >= cfg.min_frames.max(2)).then_some(start..crossing + 1)
}

fn neighbors<'a>(
    ego_id: u64,
    ego: &TrajectoryRecord,
    others: &'a [Located],
    geometry: &SceneGeometry,
    cfg: &ExtractConfig,
) -> (Option<&'a TrajectoryRecord>, Option<&'a TrajectoryRecord>) {
    let s_ego = geometry.project([ego.x, ego.y]).s;
    let mut lead: Option<(f64, u64, &TrajectoryRecord)> = None;
    let mut lag: Option<(f64, u64, &TrajectoryRecord)> = None;
    for o in others {
        if o.track_id == ego_id || o.proj.offset >= 0.0 {
            continue;
        }
        if cfg.highway_lane_width.is_some_and(|w| -o.proj.offset > w) {
            continue;
        }
        let dx = o.proj.s - s_ego;
        let slot = if dx >= 0.0 { &mut lead } else { &mut lag };
        let better = match slot {
            None => true,
            Some((best, id, _)) => {
                dx.abs() < best.abs() || (dx.abs() == best.abs() && o.track_id < *id)
            }
        };
        if better {
            *slot = Some((dx, o.track_id, &o.rec));
        }
    }
    (lead.map(|l| l.2), lag.map(|l| l.2))
}

/// A demonstration resampled onto `resolution` evenly spaced progress points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDemonstration {
    pub demo_id: u64,
    pub grid: Vec<FeatureVector>,
}

/// Decision progress in percent for grid index `k` of `resolution` points.
pub fn alpha_percent(k: usize, resolution: usize) -> f64 {
    (100 * k) as f64 / (resolution - 1) as f64
}

fn resample(times: &[f64], values: &[FeatureVector], resolution: usize) -> Vec<FeatureVector> {
    let (t0, tn) = (times[0], times[times.len() - 1]);
    let last = times.len() - 1;
    let mut j = 0;
    (0..resolution)
        .map(|k| {
            if k == 0 {
                return values[0];
            }
            if k == resolution - 1 {
                return values[last];
            }
            let t = t0 + ((tn - t0) * k as f64) / (resolution - 1) as f64;
            while j + 1 < last && times[j + 1] <= t {
                j += 1;
            }
            let w = (t - times[j]) / (times[j + 1] - times[j]);
            values[j].lerp(&values[j + 1], w)
        })
        .collect()
}

/// Linear-in-time resampling of the decision window onto the progress grid.
pub fn align_to_grid(demo: &MergeDemonstration, resolution: usize) -> Result<AlignedDemonstration> {
    if demo.frames.len() < 2 {
        return Err(Error::Rejected(format!(
            "demo {} has {} frame(s); alignment needs at least 2",
            demo.demo_id,
            demo.frames.len()
        )));
    }
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let times: Vec<f64> = demo.frames.iter().map(|f| f.timestamp as f64).collect();
    let values: Vec<FeatureVector> = demo.frames.iter().map(|f| f.features).collect();
    Ok(AlignedDemonstration {
        demo_id: demo.demo_id,
        grid: resample(&times, &values, resolution),
    })
}

impl AlignedDemonstration {
    /// Resamples an aligned series, treating grid indices as time.
    pub fn resample(&self, resolution: usize) -> AlignedDemonstration {
        let times: Vec<f64> = (0..self.grid.len()).map(|k| k as f64).collect();
        AlignedDemonstration {
            demo_id: self.demo_id,
            grid: resample(&times, &self.grid, resolution),
        }
    }

    pub fn series(&self, f: Feature) -> Vec<f64> {
        self.grid.iter().map(|v| v.get(f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    pub seed: u64,
}

/// Uniform random split by demonstration; the train count is
/// `ratio * n` rounded half up, kept within `1..n`.
pub fn split_dataset(demo_ids: &[u64], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if demo_ids.len() < 2 {
        return Err(Error::Rejected(format!(
            "split needs at least 2 demonstrations, got {}",
            demo_ids.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = demo_ids.len();
    let n_train = ((ratio * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
    let mut ids = demo_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut rng::substream(seed, rng::Stream::Split));
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit { train, test, seed })
}

const ALIGNED_HEADER: [&str; 2 + N_FEATURES] = [
    "demo_id", "alpha", "dx_lead", "dv_lead", "vx_ego", "vy_ego", "dx_lag", "dv_lag", "dx_end",
    "dy_bdry",
];

/// Writes the columnar `aligned.csv` format.
pub fn write_aligned_csv<W: Write>(out: W, demos: &[AlignedDemonstration]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Integrity(format!("writing aligned csv: {e}"));
    w.write_record(ALIGNED_HEADER).map_err(io)?;
    for d in demos {
        let a = d.grid.len();
        for (k, fv) in d.grid.iter().enumerate() {
            let mut row = vec![d.demo_id.to_string(), alpha_percent(k, a).to_string()];
            row.extend(fv.0.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Integrity(format!("writing aligned csv: {e}")))?;
    Ok(())
}

/// Reads `aligned.csv`; every demonstration must carry the same number of
/// grid points in increasing alpha order.
pub fn read_aligned_csv<R: Read>(source: R) -> Result<Vec<AlignedDemonstration>> {
    let mut rdr = csv::Reader::from_reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, msg: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ALIGNED_HEADER {
        return Err(Error::Parse {
            row: 0,
            msg: format!("unexpected header {headers:?}"),
        });
    }
    let mut demos: Vec<AlignedDemonstration> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| Error::Parse {
                row,
                msg: format!("column {}: {e}", ALIGNED_HEADER[k]),
            })
        };
        let id: u64 = rec[0].parse().map_err(|e| Error::Parse {
            row,
            msg: format!("demo_id: {e}"),
        })?;
        let alpha = num(1)?;
        let mut fv = [0.0; N_FEATURES];
        for (k, v) in fv.iter_mut().enumerate() {
            *v = num(k + 2)?;
        }
        match demos.last_mut() {
            Some(d) if d.demo_id == id => {
                if alphas.last().is_some_and(|&a| alpha <= a) {
                    return Err(Error::Integrity(format!("row {row}: alpha not increasing")));
                }
                d.grid.push(FeatureVector(fv));
            }
            _ => {
                if demos.iter().any(|d| d.demo_id == id) {
                    return Err(Error::Integrity(format!("row {row}: demo {id} rows not contiguous")));
                }
                alphas.clear();
                demos.push(AlignedDemonstration {
                    demo_id: id,
                    grid: vec![FeatureVector(fv)],
                });
            }
        }
        alphas.push(alpha);
    }
    if let Some(first) = demos.first() {
        let a = first.grid.len();
        if demos.iter().any(|d| d.grid.len() != a) {
            return Err(Error::Integrity("demonstrations differ in grid length".into()));
        }
    }
    Ok(demos)
}

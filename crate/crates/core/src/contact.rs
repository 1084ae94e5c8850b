//! Binary contact data and the density-map heuristic driven by it.
//!
//! Contacts come from a text log or from sweeping a sphere along a polyline.
//! Per-nodule counts feed a Butterworth-shaped kernel whose per-vertex max
//! becomes the new density map.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::point_segment_distance;
use crate::heatmap::{HeatMap, HeatMapError, MapRole};
use crate::mesh::{Point, TriMesh};
use crate::sampler::{local_min_distance, sample_nodules, NoduleLayout, SampleError, SamplingParams};
use crate::skin::SkinShell;

#[derive(Debug, thiserror::Error)]
pub enum ContactError {
    #[error("cannot read contact log {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("contact log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("contact log line {line}: unknown nodule id {id}")]
    UnknownNodule { line: usize, id: usize },
    #[error("contact log line {line}: timestamp {timestamp} precedes the previous record")]
    DecreasingTimestamp { line: usize, timestamp: f64 },
    #[error("contact log names layout {found}, expected {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid heuristic parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    HeatMap(#[from] HeatMapError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub timestamp: f64,
    pub nodule_id: usize,
    pub contact: bool,
}

/// Contact counts for every nodule of a layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactHistogram {
    pub counts: BTreeMap<usize, u64>,
}

impl ContactHistogram {
    pub fn zeros(layout: &NoduleLayout) -> Self {
        Self { counts: layout.nodules.iter().map(|n| (n.id, 0)).collect() }
    }

    /// Count contact samples (`onsets == false`) or rising edges.
    pub fn from_events(events: &[ContactEvent], layout: &NoduleLayout, onsets: bool) -> Result<Self, ContactError> {
        let mut hist = Self::zeros(layout);
        let mut previous: BTreeMap<usize, bool> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            let count = hist.counts.get_mut(&e.nodule_id).ok_or(ContactError::UnknownNodule { line: i + 1, id: e.nodule_id })?;
            let was = previous.insert(e.nodule_id, e.contact).unwrap_or(false);
            if e.contact && (!onsets || !was) {
                *count += 1;
            }
        }
        Ok(hist)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn max(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }
}

/// Parse a contact log: optional `# layout_sha256:<hex>` header, then
/// `timestamp nodule_id contact_flag` records. Other `#` lines are comments.
pub fn parse_contact_log(text: &str, layout: &NoduleLayout) -> Result<Vec<ContactEvent>, ContactError> {
    let mut events = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(found) = comment.trim().strip_prefix("layout_sha256:") {
                let expected = layout.checksum();
                if found.trim() != expected {
                    return Err(ContactError::LayoutMismatch { expected, found: found.trim().to_string() });
                }
            }
            continue;
        }
        let malformed = |message: &str| ContactError::Malformed { line, message: message.to_string() };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed("expected `timestamp nodule_id contact_flag`"));
        }
        let timestamp: f64 = fields[0].parse().map_err(|_| malformed("timestamp is not a number"))?;
        if !timestamp.is_finite() {
            return Err(malformed("timestamp is not finite"));
        }
        let nodule_id: usize = fields[1].parse().map_err(|_| malformed("nodule id is not a non-negative integer"))?;
        let contact = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(malformed("contact flag must be 0 or 1")),
        };
        if layout.index_of(nodule_id).is_none() {
            return Err(ContactError::UnknownNodule { line, id: nodule_id });
        }
        if timestamp < last {
            return Err(ContactError::DecreasingTimestamp { line, timestamp });
        }
        last = timestamp;
        events.push(ContactEvent { timestamp, nodule_id, contact });
    }
    Ok(events)
}

pub fn ingest_contact_log(path: &Path, layout: &NoduleLayout, onsets: bool) -> Result<ContactHistogram, ContactError> {
    let text = std::fs::read_to_string(path).map_err(|source| ContactError::Io { path: path.display().to_string(), source })?;
    ContactHistogram::from_events(&parse_contact_log(&text, layout)?, layout, onsets)
}

pub fn write_contact_log(events: &[ContactEvent], layout: &NoduleLayout) -> String {
    let mut out = format!("# layout_sha256:{}\n", layout.checksum());
    for e in events {
        out.push_str(&format!("{} {} {}\n", e.timestamp, e.nodule_id, u8::from(e.contact)));
    }
    out
}

/// Sphere swept along a polyline at unit speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTrajectory {
    /// Collider sphere radius (m).
    pub collider: f64,
    pub waypoints: Vec<[f64; 3]>,
    /// Path resolution (m).
    pub step: f64,
}

impl SweepTrajectory {
    pub fn validate(&self) -> Result<(), ContactError> {
        let bad = |m: &str| Err(ContactError::InvalidTrajectory(m.to_string()));
        if self.waypoints.len() < 2 {
            return bad("at least 2 waypoints required");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.collider >= 0.0 && self.collider.is_finite()) {
            return bad("collider radius must be non-negative");
        }
        if self.waypoints.iter().flatten().any(|c| !c.is_finite()) {
            return bad("waypoints must be finite");
        }
        Ok(())
    }

    fn points(&self) -> Vec<Point> {
        self.waypoints.iter().map(|w| Point::new(w[0], w[1], w[2])).collect()
    }
}

/// Sub-polyline of `path` between arc lengths `a` and `b`.
fn sub_polyline(path: &[Point], arc: &[f64], a: f64, b: f64) -> Vec<Point> {
    let at = |s: f64| {
        let i = arc.partition_point(|&x| x <= s).clamp(1, arc.len() - 1);
        let span = arc[i] - arc[i - 1];
        let f = if span > 0.0 { ((s - arc[i - 1]) / span).clamp(0.0, 1.0) } else { 0.0 };
        path[i - 1] + (path[i] - path[i - 1]) * f
    };
    let mut out = vec![at(a)];
    out.extend((0..path.len()).filter(|&i| arc[i] > a && arc[i] < b).map(|i| path[i]));
    out.push(at(b));
    out
}

fn polyline_distance(p: &Point, line: &[Point]) -> f64 {
    line.windows(2).map(|w| point_segment_distance(p, &w[0], &w[1])).fold(f64::INFINITY, f64::min)
}

/// Sweep the collider along the trajectory. Step `k` covers the path
/// interval `[k·step − step/2, k·step + step/2]`; a nodule is in contact at
/// step `k` iff that stretch passes within `collider + radius` of its
/// centre. Emits `contact = 1` for every step in contact and `contact = 0`
/// when a contact is released. Timestamps are `k · step` (unit speed).
pub fn simulate_contacts(layout: &NoduleLayout, traj: &SweepTrajectory) -> Result<Vec<ContactEvent>, ContactError> {
    traj.validate()?;
    let path = traj.points();
    let mut arc = vec![0.0];
    for w in path.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let length = *arc.last().unwrap();
    let steps = ((length / traj.step - 0.5).ceil().max(0.0)) as usize;
    let mut in_contact = vec![false; layout.len()];
    let mut events = Vec::new();
    for k in 0..=steps {
        let center = k as f64 * traj.step;
        let a = (center - traj.step / 2.0).max(0.0);
        let b = (center + traj.step / 2.0).min(length);
        let window = sub_polyline(&path, &arc, a, b);
        for (j, n) in layout.nodules.iter().enumerate() {
            let touching = polyline_distance(&n.position, &window) <= traj.collider + n.radius;
            if touching || in_contact[j] {
                events.push(ContactEvent { timestamp: center, nodule_id: n.id, contact: touching });
            }
            in_contact[j] = touching;
        }
    }
    Ok(events)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    /// Cutoff distance α (m).
    pub alpha: f64,
    /// Filter order n.
    pub filter_order: u32,
    pub normalize_counts: bool,
}

impl HeuristicParams {
    /// Defaults for a layout: α = 2 × mean local minimum distance, n = 2.
    pub fn for_layout(layout: &NoduleLayout) -> Self {
        let finite: Vec<f64> = layout
            .nodules
            .iter()
            .map(|n| local_min_distance(n.local_weight, &layout.params))
            .filter(|d| d.is_finite())
            .collect();
        let mean = if finite.is_empty() { layout.params.d_min } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        Self { alpha: 2.0 * mean, filter_order: 2, normalize_counts: true }
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ContactError::InvalidParams("alpha must be positive".into()));
        }
        if self.filter_order == 0 {
            return Err(ContactError::InvalidParams("filter_order must be at least 1".into()));
        }
        Ok(())
    }
}

/// `sqrt(count / (1 + |distance / alpha|^(2n)))`.
pub fn butterworth_weight(distance: f64, normalized_count: f64, params: &HeuristicParams) -> f64 {
    let ratio = (distance / params.alpha).abs();
    (normalized_count / (1.0 + ratio.powi(2 * params.filter_order as i32))).sqrt()
}

/// Per-vertex max over nodules of the kernel, with counts normalized by the
/// largest count (or clamped to 1 in raw mode).
pub fn optimize_heatmap(
    mesh: &TriMesh,
    layout: &NoduleLayout,
    hist: &ContactHistogram,
    params: &HeuristicParams,
) -> Result<HeatMap, ContactError> {
    params.validate()?;
    let max = hist.max();
    let sources: Vec<(Point, f64)> = layout
        .nodules
        .iter()
        .filter_map(|n| {
            let c = *hist.counts.get(&n.id)? as f64;
            let w = if params.normalize_counts { if max > 0 { c / max as f64 } else { 0.0 } } else { c };
            (w > 0.0).then_some((n.position, w))
        })
        .collect();
    if sources.is_empty() {
        tracing::warn!("no contacts recorded; optimized density map is all zero");
    }
    let weights: Vec<f64> = mesh
        .vertices()
        .par_iter()
        .map(|v| {
            sources
                .iter()
                .map(|(p, c)| butterworth_weight((v - p).norm(), *c, params))
                .fold(0.0, f64::max)
                .min(1.0)
        })
        .collect();
    Ok(HeatMap::from_weights(mesh, MapRole::Density, weights)?)
}

/// Where one optimization round gets its contacts.
#[derive(Clone, Debug)]
pub enum ContactSource {
    Events(Vec<ContactEvent>),
    Sweep(SweepTrajectory),
}

#[derive(Clone, Debug)]
pub struct OptimizationRound {
    pub histogram: ContactHistogram,
    pub heatmap: HeatMap,
    pub layout: NoduleLayout,
    pub params: HeuristicParams,
    pub count_before: usize,
    pub count_after: usize,
    /// New nodules within α of a nodule that recorded contact.
    pub count_near_contacts: usize,
}

/// Histogram, heuristic map and re-sampling in one step.
pub fn optimize_round(
    mesh: &TriMesh,
    shell: &SkinShell,
    layout: &NoduleLayout,
    source: &ContactSource,
    onsets: bool,
    heuristic: &HeuristicParams,
    sampling: &SamplingParams,
) -> Result<OptimizationRound, ContactError> {
    let events = match source {
        ContactSource::Events(e) => e.clone(),
        ContactSource::Sweep(t) => simulate_contacts(layout, t)?,
    };
    let histogram = ContactHistogram::from_events(&events, layout, onsets)?;
    let heatmap = optimize_heatmap(mesh, layout, &histogram, heuristic)?;
    let next = sample_nodules(shell, &heatmap, sampling)?;
    let contacted: Vec<Point> = layout
        .nodules
        .iter()
        .filter(|n| histogram.counts.get(&n.id).copied().unwrap_or(0) > 0)
        .map(|n| n.position)
        .collect();
    let near = next
        .nodules
        .iter()
        .filter(|n| contacted.iter().any(|c| (n.position - c).norm() <= heuristic.alpha))
        .count();
    Ok(OptimizationRound {
        count_before: layout.len(),
        count_after: next.len(),
        count_near_contacts: near,
        histogram,
        heatmap,
        layout: next,
        params: heuristic.clone(),
    })
}

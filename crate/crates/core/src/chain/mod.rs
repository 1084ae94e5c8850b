//! Serial RC-delay chain: nodule ordering, per-segment resistances, trace
//! routing inside the shell and the touch-calibration table.
//!
//! Resistances are in kΩ, lengths in metres. With resistivity in Ω/mm,
//! `R[kΩ] = L[m] · ρ[Ω/mm]`.

mod route;

pub use route::{conductive_body, disc_mesh, route_traces, tube_mesh, RouteOptions};

use serde::{Deserialize, Serialize};

use crate::mesh::{MeshError, Point};
use crate::sampler::NoduleLayout;
use crate::skin::SkinShell;

/// Spacing below which neighbouring nodules cannot be told apart.
pub const MIN_SPACING_FLOOR: f64 = 0.009;
/// Largest layout ordered exhaustively.
pub const MAX_EXHAUSTIVE: usize = 9;

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("layout has no nodules")]
    EmptyLayout,
    #[error("start nodule {0} is not in the layout")]
    UnknownStart(usize),
    #[error("invalid filament spec: {0}")]
    InvalidSpec(String),
    #[error("nodules {a} and {b} are {distance:.4} m apart, below the minimum spacing {min:.4} m")]
    SpacingViolation { a: usize, b: usize, distance: f64, min: f64 },
    #[error("exhaustive ordering supports at most {MAX_EXHAUSTIVE} nodules, got {0}")]
    TooManyForExhaustive(usize),
    #[error("shell thickness {thickness} m does not admit a trace of diameter {diameter} m")]
    ThicknessTooSmall { thickness: f64, diameter: f64 },
    #[error("segment {segment} ({from} -> {to}) leaves the shell corridor")]
    LeavesShell { segment: usize, from: usize, to: usize },
    #[error("segment {segment} ({from} -> {to}) needs {required:.4} m of trace but the corridor fits {achievable:.4} m")]
    CorridorTooNarrow { segment: usize, from: usize, to: usize, required: f64, achievable: f64 },
    #[error("segment {segment} runs through nodule {nodule}")]
    CrossesNodule { segment: usize, nodule: usize },
    #[error("traces of segments {a} and {b} come within {distance:.5} m")]
    TracesTooClose { a: usize, b: usize, distance: f64 },
    #[error("design does not match the layout")]
    LayoutMismatch,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Conductive filament and the separation it must provide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilamentSpec {
    /// Ω per mm of trace.
    pub resistivity: f64,
    /// Minimum distance between consecutive chain nodules (m).
    pub min_nodule_spacing: f64,
    /// Minimum cumulative-resistance separation (kΩ).
    pub margin: f64,
}

impl Default for FilamentSpec {
    fn default() -> Self {
        Self { resistivity: 256.0, min_nodule_spacing: 0.060, margin: 20.0 }
    }
}

impl FilamentSpec {
    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: String| Err(ChainError::InvalidSpec(m));
        if !(self.resistivity > 0.0 && self.resistivity.is_finite()) {
            return bad(format!("resistivity must be positive, got {}", self.resistivity));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.min_nodule_spacing >= MIN_SPACING_FLOOR && self.min_nodule_spacing.is_finite()) {
            return bad(format!(
                "min_nodule_spacing {} is below the {MIN_SPACING_FLOOR} m floor",
                self.min_nodule_spacing
            ));
        }
        Ok(())
    }

    /// Resistance of `length` metres of trace, kΩ.
    pub fn resistance(&self, length: f64) -> f64 {
        length * self.resistivity
    }

    /// Trace length for `resistance` kΩ, metres.
    pub fn length_for(&self, resistance: f64) -> f64 {
        resistance / self.resistivity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDesign {
    pub order: Vec<usize>,
    pub segment_resistances: Vec<f64>,
    pub cumulative_resistances: Vec<f64>,
    pub trace_polylines: Vec<Vec<Point>>,
    pub total_resistance: f64,
}

impl ChainDesign {
    fn from_segments(order: Vec<usize>, segments: Vec<f64>, polylines: Vec<Vec<Point>>) -> Self {
        let mut cumulative = Vec::with_capacity(order.len());
        let mut acc = 0.0;
        cumulative.push(acc);
        for s in &segments {
            acc += s;
            cumulative.push(acc);
        }
        Self { order, total_resistance: segments.iter().sum(), segment_resistances: segments, cumulative_resistances: cumulative, trace_polylines: polylines }
    }

    /// Cumulative resistance of nodule `id`, if it is in the chain.
    pub fn cumulative_of(&self, id: usize) -> Option<f64> {
        self.order.iter().position(|&o| o == id).map(|k| self.cumulative_resistances[k])
    }
}

/// Greedy nearest-neighbour path from `start`; ties go to the lower id.
pub fn order_chain(layout: &NoduleLayout, start: usize) -> Result<Vec<usize>, ChainError> {
    if layout.is_empty() {
        return Err(ChainError::EmptyLayout);
    }
    let mut current = layout.index_of(start).ok_or(ChainError::UnknownStart(start))?;
    let nodules = &layout.nodules;
    let mut used = vec![false; nodules.len()];
    used[current] = true;
    let mut order = vec![start];
    for _ in 1..nodules.len() {
        let here = nodules[current].position;
        let next = (0..nodules.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                let da = (nodules[a].position - here).norm();
                let db = (nodules[b].position - here).norm();
                da.total_cmp(&db).then(nodules[a].id.cmp(&nodules[b].id))
            })
            .expect("unvisited nodule remains");
        used[next] = true;
        order.push(nodules[next].id);
        current = next;
    }
    Ok(order)
}

/// Shortest open path from `start` over all orderings (≤ 9 nodules).
/// Ties go to the lexicographically smallest id sequence.
pub fn order_chain_exhaustive(layout: &NoduleLayout, start: usize) -> Result<Vec<usize>, ChainError> {
    if layout.is_empty() {
        return Err(ChainError::EmptyLayout);
    }
    if layout.len() > MAX_EXHAUSTIVE {
        return Err(ChainError::TooManyForExhaustive(layout.len()));
    }
    let first = layout.index_of(start).ok_or(ChainError::UnknownStart(start))?;
    let mut rest: Vec<usize> = (0..layout.len()).filter(|&j| j != first).collect();
    rest.sort_by_key(|&j| layout.nodules[j].id);
    let pos = |j: usize| layout.nodules[j].position;
    let mut best: Option<(f64, Vec<usize>)> = None;
    // Ranks into `rest`, so lexicographic order over ranks is order over ids.
    let mut perm: Vec<usize> = (0..rest.len()).collect();
    let mut visit = |p: &[usize]| {
        let mut len = 0.0;
        let mut prev = first;
        for &r in p {
            len += (pos(rest[r]) - pos(prev)).norm();
            prev = rest[r];
        }
        if best.as_ref().is_none_or(|(b, _)| len < *b) {
            best = Some((len, p.iter().map(|&r| rest[r]).collect()));
        }
    };
    // Lexicographic permutation walk keeps the first of equal-length paths.
    loop {
        visit(&perm);
        let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
        let j = (i..perm.len()).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    let (_, path) = best.expect("at least one permutation");
    Ok(std::iter::once(start).chain(path.into_iter().map(|j| layout.nodules[j].id)).collect())
}

/// Nodule farthest from the layout centroid (lower id on ties); the
/// default feed end.
pub fn default_start(layout: &NoduleLayout) -> Result<usize, ChainError> {
    if layout.is_empty() {
        return Err(ChainError::EmptyLayout);
    }
    let n = layout.len() as f64;
    let centroid = layout.nodules.iter().fold(Point::origin(), |acc, nod| acc + nod.position.coords / n);
    Ok(layout
        .nodules
        .iter()
        .max_by(|a, b| (a.position - centroid).norm().total_cmp(&(b.position - centroid).norm()).then(b.id.cmp(&a.id)))
        .unwrap()
        .id)
}

/// Per-segment resistances: the straight-line trace, raised to `margin`.
pub fn assign_resistances(order: &[usize], layout: &NoduleLayout, spec: &FilamentSpec) -> Result<ChainDesign, ChainError> {
    spec.validate()?;
    if order.is_empty() {
        return Err(ChainError::EmptyLayout);
    }
    let mut positions = Vec::with_capacity(order.len());
    for &id in order {
        let i = layout.index_of(id).ok_or(ChainError::LayoutMismatch)?;
        positions.push(layout.nodules[i].position);
    }
    let mut segments = Vec::with_capacity(order.len() - 1);
    for k in 1..order.len() {
        let distance = (positions[k] - positions[k - 1]).norm();
        if distance < spec.min_nodule_spacing {
            return Err(ChainError::SpacingViolation { a: order[k - 1], b: order[k], distance, min: spec.min_nodule_spacing });
        }
        segments.push(spec.resistance(distance).max(spec.margin));
    }
    Ok(ChainDesign::from_segments(order.to_vec(), segments, Vec::new()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub nodule_id: usize,
    /// Expected delay in units of kΩ · C_touch.
    pub expected_delay: f64,
    /// Band edges; `None` is unbounded.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    /// Nodule whose band contains `delay`.
    pub fn classify(&self, delay: f64) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.lower.is_none_or(|l| delay >= l) && e.upper.is_none_or(|u| delay < u))
            .map(|e| e.nodule_id)
    }
}

/// Delays proportional to cumulative resistance, bands split at midpoints.
pub fn expected_rc_table(design: &ChainDesign) -> CalibrationTable {
    let c = &design.cumulative_resistances;
    let entries = design
        .order
        .iter()
        .enumerate()
        .map(|(k, &id)| CalibrationEntry {
            nodule_id: id,
            expected_delay: c[k],
            lower: (k > 0).then(|| 0.5 * (c[k - 1] + c[k])),
            upper: (k + 1 < c.len()).then(|| 0.5 * (c[k] + c[k + 1])),
        })
        .collect();
    CalibrationTable { entries }
}

/// Chain options beyond the filament itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainOptions {
    /// Feed-end nodule; defaults to [`default_start`].
    pub start: Option<usize>,
    pub exhaustive: bool,
    pub routing: RouteOptions,
}


/// Order, assign and route in one go.
pub fn design_chain(
    shell: &SkinShell,
    layout: &NoduleLayout,
    spec: &FilamentSpec,
    options: &ChainOptions,
) -> Result<ChainDesign, ChainError> {
    let start = match options.start {
        Some(s) => s,
        None => default_start(layout)?,
    };
    let order = if options.exhaustive { order_chain_exhaustive(layout, start)? } else { order_chain(layout, start)? };
    let design = assign_resistances(&order, layout, spec)?;
    match route_traces(shell, layout, &design, spec, &options.routing) {
        Err(e @ (ChainError::TracesTooClose { .. } | ChainError::CrossesNodule { .. })) => {
            let untangled = untangle(layout, &order)?;
            if untangled == order {
                return Err(e);
            }
            let design = assign_resistances(&untangled, layout, spec)?;
            route_traces(shell, layout, &design, spec, &options.routing)
        }
        other => other,
    }
}

/// 2-opt pass over an open chain with a fixed start: reverse any run whose
/// reversal shortens the path, until none does. Removes planar crossings.
pub fn untangle(layout: &NoduleLayout, order: &[usize]) -> Result<Vec<usize>, ChainError> {
    let mut pos = Vec::with_capacity(order.len());
    for &id in order {
        pos.push(layout.nodules[layout.index_of(id).ok_or(ChainError::LayoutMismatch)?].position);
    }
    let mut order = order.to_vec();
    let d = |a: &Point, b: &Point| (a - b).norm();
    let n = order.len();
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..n.saturating_sub(1) {
            for j in i + 1..n {
                let mut delta = d(&pos[i - 1], &pos[j]) - d(&pos[i - 1], &pos[i]);
                if j + 1 < n {
                    delta += d(&pos[i], &pos[j + 1]) - d(&pos[j], &pos[j + 1]);
                }
                if delta < -1e-12 {
                    order[i..=j].reverse();
                    pos[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
    Ok(order)
}

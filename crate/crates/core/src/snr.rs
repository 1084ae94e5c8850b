//! Signal-to-noise analysis of raw capacitance captures.
//!
//! A capture follows a rest / press / rest protocol. Rest samples give
//! `μ_U` and `σ_U`, press samples give `μ_P`, and
//! `SNR = |μ_U − μ_P| / σ_U`. A skin unit is scored by the smallest SNR
//! between any target nodule's press and any other nodule's rest.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

pub const MINIMUM_SNR: f64 = 7.0;
pub const ROBUST_SNR: f64 = 15.0;

#[derive(Debug, thiserror::Error)]
pub enum SnrError {
    #[error("cannot read trace {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace for nodule {nodule} spans {span:.3} s, protocol needs {required:.3} s")]
    TooShort { nodule: usize, span: f64, required: f64 },
    #[error("trace for nodule {nodule}: {phase} phase is empty after trimming")]
    EmptyPhase { nodule: usize, phase: &'static str },
    #[error("need at least 2 nodules, got {0}")]
    TooFewNodules(usize),
    #[error("need at least one trial")]
    NoTrials,
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureTrace {
    pub nodule_id: usize,
    /// `(timestamp s, raw value)`, timestamps strictly increasing.
    pub samples: Vec<(f64, f64)>,
}

impl CaptureTrace {
    /// Parse `# nodule:<id> rate_hz:<r>` followed by `timestamp value` lines.
    pub fn parse(text: &str) -> Result<Self, SnrError> {
        let mut nodule_id = None;
        let mut samples: Vec<(f64, f64)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let malformed = |m: &str| SnrError::Malformed { line, message: m.to_string() };
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(header) = t.strip_prefix('#') {
                for field in header.split_whitespace() {
                    if let Some(id) = field.strip_prefix("nodule:") {
                        nodule_id = Some(id.parse().map_err(|_| malformed("bad nodule id"))?);
                    } else if let Some(rate) = field.strip_prefix("rate_hz:") {
                        let r: f64 = rate.parse().map_err(|_| malformed("bad rate"))?;
                        if !(r > 0.0 && r.is_finite()) {
                            return Err(malformed("rate must be positive"));
                        }
                    }
                }
                continue;
            }
            let mut it = t.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(malformed("expected `timestamp value`"));
            };
            let ts: f64 = a.parse().map_err(|_| malformed("timestamp is not a number"))?;
            let v: f64 = b.parse().map_err(|_| malformed("value is not a number"))?;
            if !ts.is_finite() || !v.is_finite() {
                return Err(malformed("non-finite number"));
            }
            if samples.last().is_some_and(|&(p, _)| ts <= p) {
                return Err(malformed("timestamps must strictly increase"));
            }
            samples.push((ts, v));
        }
        let nodule_id = nodule_id.ok_or(SnrError::Malformed { line: 1, message: "missing `# nodule:<id>` header".into() })?;
        Ok(Self { nodule_id, samples })
    }

    pub fn load(path: &Path) -> Result<Self, SnrError> {
        let text = std::fs::read_to_string(path).map_err(|source| SnrError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_text(&self, rate_hz: f64) -> String {
        let mut out = format!("# nodule:{} rate_hz:{}\n", self.nodule_id, rate_hz);
        for (t, v) in &self.samples {
            let _ = writeln!(out, "{t} {v}");
        }
        out
    }
}

/// Rest / press / rest durations (s) and the guard trimmed on each side of
/// the two internal phase boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub rest_before: f64,
    pub press: f64,
    pub rest_after: f64,
    pub guard: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self { rest_before: 3.0, press: 3.0, rest_after: 3.0, guard: 0.25 }
    }
}

impl Protocol {
    pub fn duration(&self) -> f64 {
        self.rest_before + self.press + self.rest_after
    }

    pub fn validate(&self) -> Result<(), SnrError> {
        let all = [self.rest_before, self.press, self.rest_after];
        if all.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(SnrError::InvalidProtocol("phase durations must be positive".into()));
        }
        if !(self.guard >= 0.0 && self.guard.is_finite()) {
            return Err(SnrError::InvalidProtocol("guard must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub mu_unpressed: f64,
    pub mu_pressed: f64,
    pub sigma_unpressed: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Phase statistics with time measured from the first sample. The trace
/// must cover the protocol up to one sample period.
pub fn segment_trace(trace: &CaptureTrace, protocol: &Protocol) -> Result<PhaseStats, SnrError> {
    protocol.validate()?;
    let s = &trace.samples;
    let required = protocol.duration();
    let too_short = |span| SnrError::TooShort { nodule: trace.nodule_id, span, required };
    if s.len() < 2 {
        return Err(too_short(0.0));
    }
    let t0 = s[0].0;
    let mut gaps: Vec<f64> = s.windows(2).map(|w| w[1].0 - w[0].0).collect();
    gaps.sort_by(f64::total_cmp);
    let period = gaps[gaps.len() / 2];
    let span = s[s.len() - 1].0 - t0 + period;
    if span < required * (1.0 - 1e-9) {
        return Err(too_short(span));
    }
    let b1 = protocol.rest_before;
    let b2 = b1 + protocol.press;
    let g = protocol.guard;
    let (mut rest, mut press) = (Vec::new(), Vec::new());
    let (mut first, mut third) = (0usize, 0usize);
    for &(t, v) in s {
        let t = t - t0;
        if t < b1 - g {
            rest.push(v);
            first += 1;
        } else if t >= b1 + g && t < b2 - g {
            press.push(v);
        } else if t >= b2 + g && t < required {
            rest.push(v);
            third += 1;
        }
    }
    let empty = |phase| SnrError::EmptyPhase { nodule: trace.nodule_id, phase };
    if first == 0 {
        return Err(empty("first rest"));
    }
    if press.is_empty() {
        return Err(empty("press"));
    }
    if third == 0 {
        return Err(empty("second rest"));
    }
    Ok(PhaseStats { mu_unpressed: mean(&rest), mu_pressed: mean(&press), sigma_unpressed: sample_std(&rest) })
}

/// `|μ_U − μ_P| / σ_U`; infinite for a noiseless separation, 0 for none.
pub fn snr(stats: &PhaseStats) -> f64 {
    pair_snr(stats, stats)
}

/// SNR of `target`'s press against `reference`'s rest.
pub fn pair_snr(reference: &PhaseStats, target: &PhaseStats) -> f64 {
    let gap = (reference.mu_unpressed - target.mu_pressed).abs();
    if reference.sigma_unpressed == 0.0 {
        return if gap == 0.0 { 0.0 } else { f64::INFINITY };
    }
    gap / reference.sigma_unpressed
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrClass {
    Fail,
    Minimum,
    Robust,
}

impl SnrClass {
    pub fn of(value: f64) -> Self {
        if value >= ROBUST_SNR {
            Self::Robust
        } else if value >= MINIMUM_SNR {
            Self::Minimum
        } else {
            Self::Fail
        }
    }
}

impl std::fmt::Display for SnrClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fail => "fail",
            Self::Minimum => "minimum",
            Self::Robust => "robust",
        })
    }
}

/// JSON has no infinity; it is written as the string `"inf"`.
fn ser_snr<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() { s.serialize_str("inf") } else { s.serialize_f64(*v) }
}

fn ser_matrix<S: Serializer>(m: &[Vec<Option<f64>>], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Cell(#[serde(serialize_with = "ser_opt")] Option<f64>);
    fn ser_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) => ser_snr(x, s),
        }
    }
    let rows: Vec<Vec<Cell>> = m.iter().map(|r| r.iter().map(|&c| Cell(c)).collect()).collect();
    rows.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnrReport {
    pub nodule_ids: Vec<usize>,
    /// `matrix[target][reference]`; the diagonal is `None`.
    #[serde(serialize_with = "ser_matrix")]
    pub matrix: Vec<Vec<Option<f64>>>,
    #[serde(serialize_with = "ser_snr")]
    pub min_snr: f64,
    pub classification: SnrClass,
}

pub fn pairwise_min_snr(ids: &[usize], stats: &[PhaseStats]) -> Result<SnrReport, SnrError> {
    if stats.len() < 2 || ids.len() != stats.len() {
        return Err(SnrError::TooFewNodules(stats.len().min(ids.len())));
    }
    let n = stats.len();
    let matrix: Vec<Vec<Option<f64>>> = (0..n)
        .map(|j| (0..n).map(|i| (i != j).then(|| pair_snr(&stats[i], &stats[j]))).collect())
        .collect();
    let min_snr = matrix.iter().flatten().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(SnrReport { nodule_ids: ids.to_vec(), matrix, min_snr, classification: SnrClass::of(min_snr) })
}

/// Segment all traces (in parallel) and score the unit.
pub fn analyze_traces(traces: &[CaptureTrace], protocol: &Protocol) -> Result<SnrReport, SnrError> {
    let stats: Vec<PhaseStats> = traces.par_iter().map(|t| segment_trace(t, protocol)).collect::<Result<_, _>>()?;
    let ids: Vec<usize> = traces.iter().map(|t| t.nodule_id).collect();
    pairwise_min_snr(&ids, &stats)
}

/// Trial minima summarized as mean ± half-range (and sample std).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialAggregate {
    #[serde(serialize_with = "ser_vec")]
    pub trials: Vec<f64>,
    #[serde(serialize_with = "ser_snr")]
    pub mean: f64,
    #[serde(serialize_with = "ser_snr")]
    pub half_range: f64,
    #[serde(serialize_with = "ser_snr")]
    pub std_dev: f64,
}

fn ser_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct X(#[serde(serialize_with = "ser_snr")] f64);
    v.iter().map(|&x| X(x)).collect::<Vec<_>>().serialize(s)
}

impl TrialAggregate {
    pub fn new(trials: &[f64]) -> Result<Self, SnrError> {
        if trials.is_empty() {
            return Err(SnrError::NoTrials);
        }
        let lo = trials.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = trials.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { trials: trials.to_vec(), mean: mean(trials), half_range: 0.5 * (hi - lo), std_dev: sample_std(trials) })
    }

    /// `mean ± spread`, spread to one significant figure and the mean to the
    /// same decimal place (e.g. `8.7 ± 0.5`, `19 ± 4`, `28 ± 0`).
    pub fn display(&self) -> String {
        format_uncertain(self.mean, self.half_range)
    }
}

pub fn format_uncertain(value: f64, spread: f64) -> String {
    if !value.is_finite() || !spread.is_finite() {
        return format!("{value} ± {spread}");
    }
    if spread == 0.0 {
        return format!("{} ± 0", value.round());
    }
    let exp = spread.abs().log10().floor() as i32;
    let mut rounded = (spread / 10f64.powi(exp)).round() * 10f64.powi(exp);
    let mut exp = exp;
    if rounded >= 10f64.powi(exp + 1) {
        exp += 1;
        rounded = 10f64.powi(exp);
    }
    if exp >= 0 {
        let step = 10f64.powi(exp);
        format!("{} ± {}", (value / step).round() * step, rounded)
    } else {
        let places = (-exp) as usize;
        format!("{value:.places$} ± {rounded:.places$}")
    }
}

/// One row of the unit table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitRow {
    pub unit: String,
    pub aggregate: TrialAggregate,
    pub classification: SnrClass,
}

impl UnitRow {
    pub fn new(unit: &str, trial_minima: &[f64]) -> Result<Self, SnrError> {
        let aggregate = TrialAggregate::new(trial_minima)?;
        let worst = trial_minima.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { unit: unit.to_string(), aggregate, classification: SnrClass::of(worst) })
    }
}

/// Plain-text table: unit, one column per trial, mean.
pub fn render_table(rows: &[UnitRow]) -> String {
    let trials = rows.iter().map(|r| r.aggregate.trials.len()).max().unwrap_or(0);
    let mut header = vec!["Skin Unit".to_string()];
    header.extend((1..=trials).map(|k| format!("Trial {k}")));
    header.push("Mean".into());
    header.push("Class".into());
    let mut body: Vec<Vec<String>> = vec![header];
    for r in rows {
        let mut line = vec![r.unit.clone()];
        for k in 0..trials {
            line.push(r.aggregate.trials.get(k).map(|v| format!("{}", (v * 100.0).round() / 100.0)).unwrap_or_default());
        }
        line.push(r.aggregate.display());
        line.push(r.classification.to_string());
        body.push(line);
    }
    let widths: Vec<usize> = (0..body[0].len()).map(|c| body.iter().map(|l| l[c].chars().count()).max().unwrap()).collect();
    let mut out = String::new();
    for l in &body {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

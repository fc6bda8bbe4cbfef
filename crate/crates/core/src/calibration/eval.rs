use std::fmt;

use serde::{Deserialize, Serialize};

use super::{apply_profile, CalibrationDataset, CalibrationError, CalibrationProfile, NORMAL_RANGE_N, SHEAR_RANGE_N};
use crate::channels::{GridPosition, ShearDirection};
use crate::dsp::FilteredFrame;
use crate::sim::CycleGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalGroup {
    NormalDirect,
    NormalInterp,
    Shear,
}

impl EvalGroup {
    pub const ALL: [EvalGroup; 3] = [EvalGroup::NormalDirect, EvalGroup::NormalInterp, EvalGroup::Shear];

    pub fn title(self) -> &'static str {
        match self {
            EvalGroup::NormalDirect => "Normal (1,3,5,7,9)",
            EvalGroup::NormalInterp => "Normal (2,4,6,8)",
            EvalGroup::Shear => "Shear",
        }
    }

    pub fn full_scale(self) -> f64 {
        match self {
            EvalGroup::NormalDirect | EvalGroup::NormalInterp => NORMAL_RANGE_N,
            EvalGroup::Shear => SHEAR_RANGE_N,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    /// Mean std of the prediction over steady holds divided by full scale;
    /// `None` when no hold window qualifies.
    pub noise_to_range: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: EvalGroup,
    pub metrics: Metrics,
    pub per_label: Vec<LabelMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermistorMetrics {
    pub samples: usize,
    pub max_abs_error: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile_id: String,
    pub groups: Vec<GroupMetrics>,
    pub thermistor: Option<ThermistorMetrics>,
}

impl EvalReport {
    pub fn group(&self, group: EvalGroup) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| g.group == group)
    }
}

/// Hold windows need this many consecutive steady rows.
pub const MIN_HOLD_ROWS: usize = 250;
/// Steady: truth moves at most this fraction of full scale per row.
const HOLD_STEP_FRACTION: f64 = 1e-4;
/// Loaded: truth at least this fraction of full scale.
const HOLD_LEVEL_FRACTION: f64 = 0.1;

/// One validation cycle as parallel (predicted, truth) series.
struct Series {
    label: String,
    pred: Vec<f64>,
    truth: Vec<f64>,
}

fn hold_window_stds(s: &Series, range: f64) -> Vec<f64> {
    let steady = |i: usize| {
        s.truth[i] >= HOLD_LEVEL_FRACTION * range
            && (i == 0 || (s.truth[i] - s.truth[i - 1]).abs() <= HOLD_STEP_FRACTION * range)
    };
    let mut out = Vec::new();
    let mut start = None;
    for i in 0..=s.truth.len() {
        let ok = i < s.truth.len() && steady(i);
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                if i - a >= MIN_HOLD_ROWS {
                    let w = &s.pred[a..i];
                    let m = w.iter().sum::<f64>() / w.len() as f64;
                    out.push((w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt());
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

impl Metrics {
    fn compute<'a>(series: impl IntoIterator<Item = &'a Series> + Clone, range: f64) -> Metrics {
        let pairs = || series.clone().into_iter().flat_map(|s| s.pred.iter().zip(&s.truth));
        let n = pairs().count();
        let nf = n as f64;
        let mean_truth = pairs().map(|(_, t)| t).sum::<f64>() / nf;
        let (mut sse, mut sae, mut sst) = (0.0, 0.0, 0.0);
        for (p, t) in pairs() {
            sse += (p - t).powi(2);
            sae += (p - t).abs();
            sst += (t - mean_truth).powi(2);
        }
        let r2 = if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { 0.0 };
        let stds: Vec<f64> = series.into_iter().flat_map(|s| hold_window_stds(s, range)).collect();
        let noise_to_range = (!stds.is_empty()).then(|| stds.iter().sum::<f64>() / stds.len() as f64 / range);
        Metrics { samples: n, rmse: (sse / nf).sqrt(), mae: sae / nf, r2, noise_to_range }
    }
}

/// Per-group accuracy of a profile on held-out cycles.
pub fn evaluate(profile: &CalibrationProfile, valid: &CalibrationDataset) -> Result<EvalReport, CalibrationError> {
    let mut series: Vec<(EvalGroup, Series)> = Vec::new();
    let mut temp_errors = Vec::new();
    for c in &valid.cycles {
        let pick: Box<dyn Fn(&crate::runtime::ForceState) -> f64> = match c.kind {
            CycleGroup::Normal => {
                let Some(p) = c.position() else { continue };
                Box::new(move |s| s.normal_grid[p.index()])
            }
            CycleGroup::Shear => {
                let Some(d) = c.direction() else { continue };
                Box::new(move |s| s.shear[d.index()])
            }
            CycleGroup::Thermistor => {
                for s in &c.samples {
                    let f = FilteredFrame { timestamp_us: 0, channels: s.channels };
                    temp_errors.push(apply_profile(profile, &f).temperature - s.truth);
                }
                continue;
            }
        };
        let group = match c.kind {
            CycleGroup::Shear => EvalGroup::Shear,
            _ if c.position().is_some_and(GridPosition::is_direct) => EvalGroup::NormalDirect,
            _ => EvalGroup::NormalInterp,
        };
        let pred = c
            .samples
            .iter()
            .map(|s| pick(&apply_profile(profile, &FilteredFrame { timestamp_us: 0, channels: s.channels })))
            .collect();
        let truth = c.samples.iter().map(|s| s.truth).collect();
        series.push((group, Series { label: c.label.clone(), pred, truth }));
    }
    if series.iter().all(|(_, s)| s.pred.is_empty()) && temp_errors.is_empty() {
        return Err(CalibrationError::EmptyValidation);
    }

    let mut groups = Vec::new();
    for group in EvalGroup::ALL {
        let members: Vec<&Series> = series.iter().filter(|(g, _)| *g == group).map(|(_, s)| s).collect();
        if members.iter().all(|s| s.pred.is_empty()) {
            continue;
        }
        let range = group.full_scale();
        let mut labels: Vec<&str> = members.iter().map(|s| s.label.as_str()).collect();
        labels.sort_by_key(|l| label_order(l));
        labels.dedup();
        let per_label = labels
            .into_iter()
            .map(|l| LabelMetrics {
                label: l.to_string(),
                metrics: Metrics::compute(members.iter().copied().filter(|s| s.label == l), range),
            })
            .collect();
        groups.push(GroupMetrics { group, metrics: Metrics::compute(members.iter().copied(), range), per_label });
    }
    let thermistor = (!temp_errors.is_empty()).then(|| ThermistorMetrics {
        samples: temp_errors.len(),
        max_abs_error: temp_errors.iter().fold(0.0, |m: f64, e| m.max(e.abs())),
        rmse: (temp_errors.iter().map(|e| e * e).sum::<f64>() / temp_errors.len() as f64).sqrt(),
    });
    Ok(EvalReport { profile_id: profile.id.clone(), groups, thermistor })
}

fn label_order(label: &str) -> usize {
    label
        .parse::<GridPosition>()
        .map(|p| p.index())
        .or_else(|_| label.parse::<ShearDirection>().map(|d| 100 + d.index()))
        .unwrap_or(usize::MAX)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>9} {:>9} {:>8} {:>8} {:>8}", "Group", "RMSE (N)", "MAE (N)", "NRR", "R²", "samples")?;
        for g in &self.groups {
            let m = &g.metrics;
            let nrr = m.noise_to_range.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
            writeln!(
                f,
                "{:<20} {:>9.3} {:>9.3} {:>8} {:>8.4} {:>8}",
                g.group.title(),
                m.rmse,
                m.mae,
                nrr,
                m.r2,
                m.samples
            )?;
        }
        if let Some(t) = &self.thermistor {
            writeln!(f, "Temperature: max |error| {:.3} °C, RMSE {:.3} °C over {} samples", t.max_abs_error, t.rmse, t.samples)?;
        }
        Ok(())
    }
}

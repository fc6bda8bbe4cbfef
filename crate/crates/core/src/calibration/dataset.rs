use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::acquisition::{MuxScheduler, ThermistorDivider};
use crate::channels::{GridPosition, ShearDirection, CHANNEL_COUNT, GRID_SIZE, PIEZO_COUNT, THERMISTOR_CHANNEL};
use crate::dsp::{FilterBank, FilterSpec};
use crate::sim::{CycleGroup, SimFrame};

/// One conditioned frame paired with the quantity the cycle calibrates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub t: f64,
    /// Filtered volts, channel order.
    pub channels: [f64; CHANNEL_COUNT],
    /// Force (N) at the cycle's position or direction, or temperature (°C).
    pub truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub kind: CycleGroup,
    pub label: String,
    pub index: usize,
    pub samples: Vec<CalibrationSample>,
}

impl Cycle {
    pub fn position(&self) -> Option<GridPosition> {
        (self.kind == CycleGroup::Normal).then(|| self.label.parse().ok()).flatten()
    }

    pub fn direction(&self) -> Option<ShearDirection> {
        (self.kind == CycleGroup::Shear).then(|| self.label.parse().ok()).flatten()
    }

    fn file_name(&self) -> String {
        match self.kind {
            CycleGroup::Normal => format!("normal_p{}_c{}.csv", self.label, self.index),
            CycleGroup::Shear => {
                let slug = self.direction().map_or("unknown", ShearDirection::slug);
                format!("shear_{slug}_c{}.csv", self.index)
            }
            CycleGroup::Thermistor => format!("thermistor_{:0>2}.csv", self.label),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    pub cycles: Vec<Cycle>,
}

/// Turns a simulated run into tagged, conditioned cycles.
///
/// Frames pass through the MUX and ADC, then the filter chain. The ground
/// truth runs through an identical chain so both stay time-aligned. Filter
/// outputs arrive at the decimated rate and are held between updates, so
/// each cycle keeps one row per acquisition frame.
pub struct DatasetBuilder {
    mux: MuxScheduler,
    signal: FilterBank,
    truth: FilterBank,
    held: Option<([f64; CHANNEL_COUNT], Vec<f64>)>,
    cycles: Vec<Cycle>,
}

const TRUTH_WIDTH: usize = GRID_SIZE + PIEZO_COUNT + 1;

impl DatasetBuilder {
    pub fn new(spec: &FilterSpec) -> Result<Self, CalibrationError> {
        Ok(DatasetBuilder {
            mux: MuxScheduler::default(),
            signal: FilterBank::new(spec, CHANNEL_COUNT)?,
            truth: FilterBank::new(spec, TRUTH_WIDTH)?,
            held: None,
            cycles: Vec::new(),
        })
    }

    pub fn push(&mut self, frame: &SimFrame) {
        let mut raw = None;
        for &v in &frame.volts {
            raw = self.mux.push_slot(Some(v)).or(raw);
        }
        let raw = raw.expect("ten slots complete one frame");
        let mut truth = Vec::with_capacity(TRUTH_WIDTH);
        truth.extend_from_slice(&frame.truth.grid);
        truth.extend_from_slice(&frame.truth.shear);
        truth.push(frame.truth.temperature);
        let sig = self.signal.push(&raw.volts());
        let tru = self.truth.push(&truth);
        if let (Some(s), Some(t)) = (sig, tru) {
            self.held = Some((s.try_into().expect("channel count"), t));
        }
        let (Some(tag), Some((channels, truth))) = (&frame.cycle, &self.held) else {
            return;
        };
        let value = match tag.group {
            CycleGroup::Normal => tag.label.parse::<GridPosition>().map(|p| truth[p.index()]).ok(),
            CycleGroup::Shear => tag.label.parse::<ShearDirection>().map(|d| truth[GRID_SIZE + d.index()]).ok(),
            CycleGroup::Thermistor => Some(truth[TRUTH_WIDTH - 1]),
        };
        let Some(value) = value else { return };
        let sample = CalibrationSample { t: frame.t, channels: *channels, truth: value };
        match self.cycles.last_mut() {
            Some(c) if c.kind == tag.group && c.label == tag.label && c.index == tag.index => c.samples.push(sample),
            _ => self.cycles.push(Cycle {
                kind: tag.group,
                label: tag.label.clone(),
                index: tag.index,
                samples: vec![sample],
            }),
        }
    }

    pub fn finish(self) -> CalibrationDataset {
        CalibrationDataset { cycles: self.cycles }
    }
}

pub fn build_dataset(
    frames: impl IntoIterator<Item = SimFrame>,
    spec: &FilterSpec,
) -> Result<CalibrationDataset, CalibrationError> {
    let mut b = DatasetBuilder::new(spec)?;
    for f in frames {
        b.push(&f);
    }
    Ok(b.finish())
}

/// How cycles are divided between fitting and validation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Cycles 0–2 calibrate, 3–4 validate.
    #[default]
    FirstThree,
    /// A seeded shuffle per label picks the three calibration cycles.
    Seeded { seed: u64 },
}

pub const CYCLES_PER_GROUP: usize = 5;
pub const CALIBRATION_CYCLES: usize = 3;

impl CalibrationDataset {
    pub fn of_kind(&self, kind: CycleGroup) -> impl Iterator<Item = &Cycle> {
        self.cycles.iter().filter(move |c| c.kind == kind)
    }

    pub fn labelled<'a>(&'a self, kind: CycleGroup, label: &'a str) -> impl Iterator<Item = &'a Cycle> + 'a {
        self.of_kind(kind).filter(move |c| c.label == label)
    }

    pub fn sample_count(&self) -> usize {
        self.cycles.iter().map(|c| c.samples.len()).sum()
    }

    /// Splits every normal and shear label 3/2. Thermistor cycles go to the
    /// calibration side.
    pub fn split(&self, mode: SplitMode) -> Result<(CalibrationDataset, CalibrationDataset), CalibrationError> {
        let mut calib = CalibrationDataset::default();
        let mut valid = CalibrationDataset::default();
        let mut labels: Vec<(CycleGroup, &str)> = Vec::new();
        for c in &self.cycles {
            if c.kind == CycleGroup::Thermistor {
                calib.cycles.push(c.clone());
            } else if !labels.contains(&(c.kind, c.label.as_str())) {
                labels.push((c.kind, c.label.as_str()));
            }
        }
        for (kind, label) in labels {
            let mut group: Vec<&Cycle> = self.labelled(kind, label).collect();
            if group.len() != CYCLES_PER_GROUP {
                return Err(CalibrationError::CycleCount {
                    group: format!("{} {label}", kind.as_str()),
                    count: group.len(),
                });
            }
            group.sort_by_key(|c| c.index);
            if let SplitMode::Seeded { seed } = mode {
                let mix = label.bytes().fold(seed ^ kind as u64, |h, b| h.wrapping_mul(31).wrapping_add(u64::from(b)));
                group.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
            }
            for (i, c) in group.into_iter().enumerate() {
                if i < CALIBRATION_CYCLES {
                    calib.cycles.push(c.clone());
                } else {
                    valid.cycles.push(c.clone());
                }
            }
        }
        Ok((calib, valid))
    }

    /// One (resistance Ω, temperature °C) pair per thermistor cycle, from
    /// cycle means.
    pub fn thermistor_points(&self, divider: &ThermistorDivider) -> Result<Vec<(f64, f64)>, CalibrationError> {
        self.of_kind(CycleGroup::Thermistor)
            .map(|c| {
                if c.samples.is_empty() {
                    return Err(CalibrationError::MissingData(format!("thermistor cycle {} is empty", c.label)));
                }
                let n = c.samples.len() as f64;
                let v = c.samples.iter().map(|s| s.channels[THERMISTOR_CHANNEL]).sum::<f64>() / n;
                let t = c.samples.iter().map(|s| s.truth).sum::<f64>() / n;
                let r = divider.resistance(v).ok_or_else(|| {
                    CalibrationError::MissingData(format!("thermistor cycle {} reads at the rail", c.label))
                })?;
                Ok((r, t))
            })
            .collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), CalibrationError> {
        fs::create_dir_all(dir)?;
        let mut manifest = Manifest { schema_version: DATASET_SCHEMA_VERSION, cycles: Vec::new() };
        for c in &self.cycles {
            let file = c.file_name();
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            let truth_col = if c.kind == CycleGroup::Thermistor { "T_true" } else { "F_true" };
            let mut header = vec!["t".to_string()];
            header.extend(channel_columns());
            header.push(truth_col.into());
            header.push("label".into());
            w.write_record(&header)?;
            for s in &c.samples {
                let mut rec = vec![format!("{}", s.t)];
                rec.extend(s.channels.iter().map(|v| format!("{v}")));
                rec.push(format!("{}", s.truth));
                rec.push(c.label.clone());
                w.write_record(&rec)?;
            }
            w.flush()?;
            manifest.cycles.push(ManifestEntry {
                file,
                kind: c.kind,
                label: c.label.clone(),
                index: c.index,
                samples: c.samples.len(),
            });
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, CalibrationError> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(CalibrationError::SchemaVersion {
                found: manifest.schema_version,
                expected: DATASET_SCHEMA_VERSION,
            });
        }
        let mut cycles = Vec::with_capacity(manifest.cycles.len());
        for entry in manifest.cycles {
            let path = dir.join(&entry.file);
            let mut r = csv::Reader::from_path(&path)?;
            let expected: Vec<String> = channel_columns().collect();
            let headers = r.headers()?.clone();
            if headers.len() != CHANNEL_COUNT + 3
                || headers.iter().skip(1).take(CHANNEL_COUNT).ne(expected.iter().map(String::as_str))
            {
                return Err(CalibrationError::MissingData(format!("{}: unexpected header", path.display())));
            }
            let mut samples = Vec::new();
            for (line, rec) in r.records().enumerate() {
                let rec = rec?;
                let num = |i: usize| -> Result<f64, CalibrationError> {
                    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                        CalibrationError::MissingData(format!("{}: bad value on row {}", path.display(), line + 2))
                    })
                };
                let mut channels = [0.0; CHANNEL_COUNT];
                for (c, v) in channels.iter_mut().enumerate() {
                    *v = num(c + 1)?;
                }
                samples.push(CalibrationSample { t: num(0)?, channels, truth: num(CHANNEL_COUNT + 1)? });
            }
            cycles.push(Cycle { kind: entry.kind, label: entry.label, index: entry.index, samples });
        }
        Ok(CalibrationDataset { cycles })
    }
}

const MANIFEST: &str = "manifest.json";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    cycles: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    kind: CycleGroup,
    label: String,
    index: usize,
    samples: usize,
}

/// `O_1, O_3, O_5, O_7, O_9, O_xp, O_xn, O_yp, O_yn, O_T`.
pub fn channel_columns() -> impl Iterator<Item = String> {
    GridPosition::DIRECT
        .into_iter()
        .map(|p| format!("O_{p}"))
        .chain(ShearDirection::ALL.iter().map(|d| format!("O_{}", d.slug())))
        .chain(std::iter::once("O_T".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(kind: CycleGroup, label: &str, index: usize) -> Cycle {
        let samples = (0..4)
            .map(|i| CalibrationSample { t: i as f64, channels: [0.5 + i as f64; CHANNEL_COUNT], truth: i as f64 })
            .collect();
        Cycle { kind, label: label.into(), index, samples }
    }

    fn five(label: &str) -> Vec<Cycle> {
        (0..5).map(|i| toy(CycleGroup::Normal, label, i)).collect()
    }

    #[test]
    fn split_three_two() {
        let ds = CalibrationDataset { cycles: [five("1"), five("2")].concat() };
        let (c, v) = ds.split(SplitMode::FirstThree).unwrap();
        assert_eq!(c.cycles.len(), 6);
        assert_eq!(v.cycles.len(), 4);
        assert!(c.cycles.iter().all(|c| c.index < 3));
        assert!(v.cycles.iter().all(|c| c.index >= 3));
    }

    #[test]
    fn split_rejects_wrong_cycle_count() {
        let mut cycles = five("1");
        cycles.pop();
        let err = CalibrationDataset { cycles }.split(SplitMode::FirstThree).unwrap_err();
        assert!(matches!(err, CalibrationError::CycleCount { count: 4, .. }));
    }

    #[test]
    fn seeded_split_is_reproducible() {
        let ds = CalibrationDataset { cycles: [five("1"), five("5")].concat() };
        let pick = |seed| {
            let (c, _) = ds.split(SplitMode::Seeded { seed }).unwrap();
            c.cycles.iter().map(|c| (c.label.clone(), c.index)).collect::<Vec<_>>()
        };
        assert_eq!(pick(7), pick(7));
        assert!((0..20).any(|s| pick(s) != pick(7)));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = CalibrationDataset {
            cycles: vec![
                toy(CycleGroup::Normal, "4", 2),
                toy(CycleGroup::Shear, "y-", 0),
                toy(CycleGroup::Thermistor, "7", 0),
            ],
        };
        ds.write_dir(dir.path()).unwrap();
        let back = CalibrationDataset::read_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
        let text = fs::read_to_string(dir.path().join("normal_p4_c2.csv")).unwrap();
        assert!(text.starts_with("t,O_1,O_3,O_5,O_7,O_9,O_xp,O_xn,O_yp,O_yn,O_T,F_true,label"));
        assert!(dir.path().join("shear_yn_c0.csv").exists());
        assert!(dir.path().join("thermistor_07.csv").exists());
    }
}

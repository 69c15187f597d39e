//! Domain types shared by every pipeline stage.
//!
//! Signals are stored channel-major (`channels × time` for recordings,
//! `trials × channels × time` for epochs) so that per-channel filtering walks
//! contiguous memory. All values are volts.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostic group, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "DEM")]
    Dem,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Nc, ClassLabel::Mci, ClassLabel::Dem];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Nc => "NC",
            ClassLabel::Mci => "MCI",
            ClassLabel::Dem => "DEM",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NC" => Ok(ClassLabel::Nc),
            "MCI" => Ok(ClassLabel::Mci),
            "DEM" => Ok(ClassLabel::Dem),
            other => Err(Error::Config(format!("unknown class label `{other}`"))),
        }
    }
}

/// Cognitive task during which a recording was taken.
///
/// `Combined4` only exists at the feature level (all four tasks side by side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "FIX")]
    Fixation,
    #[serde(rename = "MI")]
    MentalImagery,
    #[serde(rename = "SR")]
    SymbolRecognition,
    #[serde(rename = "VERP")]
    Verp,
    #[serde(rename = "ALL")]
    Combined4,
}

impl TaskKind {
    pub const RECORDED: [TaskKind; 4] = [
        TaskKind::Fixation,
        TaskKind::MentalImagery,
        TaskKind::SymbolRecognition,
        TaskKind::Verp,
    ];

    pub const ALL: [TaskKind; 5] = [
        TaskKind::Fixation,
        TaskKind::MentalImagery,
        TaskKind::SymbolRecognition,
        TaskKind::Verp,
        TaskKind::Combined4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Fixation => "FIX",
            TaskKind::MentalImagery => "MI",
            TaskKind::SymbolRecognition => "SR",
            TaskKind::Verp => "VERP",
            TaskKind::Combined4 => "ALL",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_recorded(self) -> bool {
        self != TaskKind::Combined4
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FIX" | "FIXATION" => Ok(TaskKind::Fixation),
            "MI" | "MENTALIMAGERY" => Ok(TaskKind::MentalImagery),
            "SR" | "SYMBOLRECOGNITION" => Ok(TaskKind::SymbolRecognition),
            "VERP" => Ok(TaskKind::Verp),
            "ALL" | "COMBINED4" => Ok(TaskKind::Combined4),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// 32-channel 10-20 layout used throughout. Positions are irrelevant to the
/// algorithms; only names and order matter.
pub const CANONICAL_CHANNELS: [&str; 32] = [
    "Fp1", "Fp2", "F9", "F7", "F3", "Fz", "F4", "F8", "F10", "FC5", "FC1", "FC2", "FC6", "T7",
    "C3", "Cz", "C4", "T8", "CP3", "CPz", "CP4", "P9", "P7", "P3", "Pz", "P4", "P6", "P8", "P10",
    "POz", "O1", "Oz",
];

/// Channels dropped by every analysis view (eye-artifact dominated).
pub const FRONTOPOLAR: [&str; 2] = ["Fp1", "Fp2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Montage {
    channel_names: Vec<String>,
    fs: f64,
}

impl Montage {
    pub fn new(channel_names: Vec<String>, fs: f64) -> Result<Self> {
        let montage = Montage { channel_names, fs };
        montage.check()?;
        Ok(montage)
    }

    pub fn canonical(fs: f64) -> Self {
        Montage {
            channel_names: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
            fs,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidMontage(format!("sampling rate {}", self.fs)));
        }
        if self.channel_names.is_empty() {
            return Err(Error::InvalidMontage("no channels".into()));
        }
        let mut seen = HashSet::new();
        for (i, name) in self.channel_names.iter().enumerate() {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(Error::InvalidMontage(format!(
                    "channel {i} name `{name}` empty or duplicated"
                )));
            }
        }
        Ok(())
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.channel_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }
}

/// Stimulus marker inside a continuous recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub onset: usize,
    pub trial: usize,
}

/// Continuous multi-channel recording of one subject performing one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    montage: Montage,
    samples: Array2<f64>,
    events: Vec<Event>,
    subject_id: String,
    label: ClassLabel,
    task: TaskKind,
}

impl Recording {
    /// Builds and validates a recording. `samples` is `channels × time`.
    pub fn new(
        montage: Montage,
        samples: Array2<f64>,
        events: Vec<Event>,
        subject_id: impl Into<String>,
        label: ClassLabel,
        task: TaskKind,
    ) -> Result<Self> {
        validate(Recording::new_unchecked(montage, samples, events, subject_id, label, task))
    }

    /// Builds without validation; pair with [`validate`].
    pub fn new_unchecked(
        montage: Montage,
        samples: Array2<f64>,
        events: Vec<Event>,
        subject_id: impl Into<String>,
        label: ClassLabel,
        task: TaskKind,
    ) -> Self {
        Recording {
            montage,
            samples,
            events,
            subject_id: subject_id.into(),
            label,
            task,
        }
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    /// `channels × time` view.
    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> ClassLabel {
        self.label
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn with_label(mut self, label: ClassLabel) -> Self {
        self.label = label;
        self
    }

    /// Replaces the samples (same shape), keeping metadata.
    pub fn map_samples(&self, samples: Array2<f64>) -> Result<Recording> {
        if samples.dim() != self.samples.dim() {
            return Err(Error::ShapeMismatch(format!(
                "samples {:?} vs {:?}",
                samples.dim(),
                self.samples.dim()
            )));
        }
        Ok(Recording {
            samples,
            ..self.clone()
        })
    }
}

/// Checks every recording invariant; returns the recording unchanged on success.
pub fn validate(recording: Recording) -> Result<Recording> {
    recording.montage.check()?;
    if recording.task == TaskKind::Combined4 {
        return Err(Error::CombinedTaskRecording(recording.task.to_string()));
    }
    let (rows, n) = recording.samples.dim();
    if rows != recording.montage.len() {
        return Err(Error::InvalidMontage(format!(
            "{} channel names for {rows} signal rows",
            recording.montage.len()
        )));
    }
    for (i, ev) in recording.events.iter().enumerate() {
        if ev.onset >= n {
            return Err(Error::EventOutOfRange {
                index: i,
                onset: ev.onset,
                n_samples: n,
            });
        }
        if i > 0 && recording.events[i - 1].onset > ev.onset {
            return Err(Error::EventsUnsorted(i));
        }
    }
    for ((c, t), v) in recording.samples.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteSample(c, t));
        }
    }
    Ok(recording)
}

/// Stimulus-locked segments, `trials × channels × time`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    montage: Montage,
    data: Array3<f64>,
    t0_offset: usize,
    labels: Vec<ClassLabel>,
    subject_ids: Vec<String>,
    tasks: Vec<TaskKind>,
}

impl EpochSet {
    pub fn new(
        montage: Montage,
        data: Array3<f64>,
        t0_offset: usize,
        labels: Vec<ClassLabel>,
        subject_ids: Vec<String>,
        tasks: Vec<TaskKind>,
    ) -> Result<Self> {
        let (trials, channels, times) = data.dim();
        if channels != montage.len() {
            return Err(Error::ShapeMismatch(format!(
                "{channels} epoch channels for {} montage channels",
                montage.len()
            )));
        }
        if labels.len() != trials || subject_ids.len() != trials || tasks.len() != trials {
            return Err(Error::ShapeMismatch(format!(
                "{trials} trials but metadata lengths {}/{}/{}",
                labels.len(),
                subject_ids.len(),
                tasks.len()
            )));
        }
        if times > 0 && t0_offset >= times {
            return Err(Error::ShapeMismatch(format!(
                "t0 offset {t0_offset} beyond epoch length {times}"
            )));
        }
        Ok(EpochSet {
            montage,
            data,
            t0_offset,
            labels,
            subject_ids,
            tasks,
        })
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// `channels × time` view of one trial.
    pub fn epoch(&self, trial: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), trial)
    }

    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_times(&self) -> usize {
        self.data.dim().2
    }

    /// Samples before stimulus onset.
    pub fn t0_offset(&self) -> usize {
        self.t0_offset
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn tasks(&self) -> &[TaskKind] {
        &self.tasks
    }

    /// Same metadata, new data of identical trial/channel layout.
    pub fn with_data(&self, data: Array3<f64>) -> Result<EpochSet> {
        EpochSet::new(
            self.montage.clone(),
            data,
            self.t0_offset,
            self.labels.clone(),
            self.subject_ids.clone(),
            self.tasks.clone(),
        )
    }

    /// Keeps the listed trials, in the given order.
    pub fn select_trials(&self, trials: &[usize]) -> EpochSet {
        EpochSet {
            montage: self.montage.clone(),
            data: self.data.select(Axis(0), trials),
            t0_offset: self.t0_offset,
            labels: trials.iter().map(|&t| self.labels[t]).collect(),
            subject_ids: trials.iter().map(|&t| self.subject_ids[t].clone()).collect(),
            tasks: trials.iter().map(|&t| self.tasks[t]).collect(),
        }
    }

    /// Concatenates sets along the trial axis; montages and lengths must agree.
    pub fn concat(sets: &[&EpochSet]) -> Result<EpochSet> {
        let first = sets.first().ok_or(Error::Empty)?;
        for s in sets {
            if s.montage != first.montage
                || s.n_times() != first.n_times()
                || s.t0_offset != first.t0_offset
            {
                return Err(Error::ShapeMismatch("epoch sets differ in layout".into()));
            }
        }
        let views: Vec<_> = sets.iter().map(|s| s.data.view()).collect();
        let data = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(EpochSet {
            montage: first.montage.clone(),
            data,
            t0_offset: first.t0_offset,
            labels: sets.iter().flat_map(|s| s.labels.iter().copied()).collect(),
            subject_ids: sets.iter().flat_map(|s| s.subject_ids.iter().cloned()).collect(),
            tasks: sets.iter().flat_map(|s| s.tasks.iter().copied()).collect(),
        })
    }
}

/// Drops the named channels. Returns a new set; `epochs` is untouched.
pub fn exclude_channels<S: AsRef<str>>(epochs: &EpochSet, names: &[S]) -> Result<EpochSet> {
    let mut drop = HashSet::new();
    for name in names {
        let name = name.as_ref();
        let idx = epochs
            .montage
            .index_of(name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))?;
        drop.insert(idx);
    }
    let keep: Vec<usize> = (0..epochs.n_channels()).filter(|c| !drop.contains(c)).collect();
    let montage = Montage {
        channel_names: keep
            .iter()
            .map(|&c| epochs.montage.channel_names[c].clone())
            .collect(),
        fs: epochs.montage.fs,
    };
    Ok(EpochSet {
        montage,
        data: epochs.data.select(Axis(1), &keep).as_standard_layout().into_owned(),
        t0_offset: epochs.t0_offset,
        labels: epochs.labels.clone(),
        subject_ids: epochs.subject_ids.clone(),
        tasks: epochs.tasks.clone(),
    })
}

/// Frequency band. Bins satisfy `f_low <= f < f_high`, or `f <= f_high`
/// when `closed_high` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub name: String,
    pub f_low: f64,
    pub f_high: f64,
    #[serde(default)]
    pub closed_high: bool,
}

impl BandDef {
    pub fn new(name: impl Into<String>, f_low: f64, f_high: f64, closed_high: bool) -> Self {
        BandDef {
            name: name.into(),
            f_low,
            f_high,
            closed_high,
        }
    }

    /// δ, θ, α, β tiling [1, 30] Hz.
    pub fn canonical() -> Vec<BandDef> {
        vec![
            BandDef::new("delta", 1.0, 4.0, false),
            BandDef::new("theta", 4.0, 8.0, false),
            BandDef::new("alpha", 8.0, 13.0, false),
            BandDef::new("beta", 13.0, 30.0, true),
        ]
    }

    pub fn check(&self, fs: f64) -> Result<()> {
        if !(self.f_low > 0.0 && self.f_low < self.f_high && self.f_high <= fs / 2.0) {
            return Err(Error::InvalidBand(format!(
                "{} [{}, {}] at fs {fs}",
                self.name, self.f_low, self.f_high
            )));
        }
        Ok(())
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_low && (f < self.f_high || (self.closed_high && f == self.f_high))
    }
}

/// Samples × named features, with per-row subject and class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    values: Array2<f64>,
    labels: Vec<ClassLabel>,
    subject_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        names: Vec<String>,
        values: Array2<f64>,
        labels: Vec<ClassLabel>,
        subject_ids: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if names.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {cols} columns",
                names.len()
            )));
        }
        if labels.len() != rows || subject_ids.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "{rows} rows but {} labels / {} subject ids",
                labels.len(),
                subject_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateFeatureName(n.clone()));
            }
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(r, c));
        }
        Ok(FeatureMatrix {
            names,
            values,
            labels,
            subject_ids,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            values: self.values.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            values: self.values.select(Axis(1), cols),
            labels: self.labels.clone(),
            subject_ids: self.subject_ids.clone(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != self.n_rows() {
            return Err(Error::LengthMismatch(labels.len(), self.n_rows()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Stacks row blocks with identical columns.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::Empty)?;
        if parts.iter().any(|p| p.names != first.names) {
            return Err(Error::ShapeMismatch("feature names differ".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(FeatureMatrix {
            names: first.names.clone(),
            values,
            labels: parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            subject_ids: parts
                .iter()
                .flat_map(|p| p.subject_ids.iter().cloned())
                .collect(),
        })
    }
}

//! Per-recording preparation for both pipelines. A recording is reduced to
//! compact, label-independent per-trial data as soon as it is read, so a
//! whole cohort never has to sit in memory as raw signals.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fbcsp::FilterBankMoments;
use crate::preprocess::{
    average_consecutive, design_bandpass, design_notch, drop_leading_trials, extract_epochs, filter_recording,
};
use crate::signal::{exclude_channels, EpochSet, FeatureMatrix, Recording, TaskKind};
use crate::spectral::band_power_features;

/// Frequency-pipeline inputs of one task: relative band powers for the
/// rank-sum masks, and band-filtered trial moments for FBCSP. Rows align.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqTaskData {
    pub task: TaskKind,
    pub band_power: FeatureMatrix,
    pub moments: FilterBankMoments,
    pub channels: Vec<String>,
}

/// Time-pipeline inputs: flattened post-stimulus samples, channel-major in
/// blocks of `n_times` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTaskData {
    pub task: TaskKind,
    pub features: FeatureMatrix,
    pub n_times: usize,
    pub fs: f64,
}

impl TimeTaskData {
    pub fn n_series(&self) -> usize {
        self.features.n_features() / self.n_times
    }
}

/// Notch, band-pass, epoch, trim and channel exclusion shared by both
/// pipelines. `band` and the window come from `cfg` per pipeline.
pub fn freq_epochs(recording: &Recording, cfg: &RunConfig) -> Result<EpochSet> {
    let p = &cfg.preprocess;
    let fs = recording.montage().fs();
    let notch = design_notch(p.notch_hz, p.notch_bandwidth_hz, fs, p.n_taps)?;
    let bp = design_bandpass(p.freq_band[0], p.freq_band[1], fs, p.n_taps)?;
    let filtered = filter_recording(&filter_recording(recording, &notch)?, &bp)?;
    let post = p.post_ms(recording.task());
    let epochs = extract_epochs(&filtered, p.freq_pre_ms, post, (-p.freq_pre_ms, 0.0))?;
    let epochs = drop_leading_trials(&epochs, p.drop_leading)?;
    exclude_channels(&epochs, &p.exclude)
}

/// Epochs for the time pipeline, before averaging.
pub fn time_epochs(recording: &Recording, cfg: &RunConfig) -> Result<EpochSet> {
    let p = &cfg.preprocess;
    let fs = recording.montage().fs();
    let notch = design_notch(p.notch_hz, p.notch_bandwidth_hz, fs, p.n_taps)?;
    let bp = design_bandpass(p.time_band[0], p.time_band[1], fs, p.n_taps)?;
    let filtered = filter_recording(&filter_recording(recording, &notch)?, &bp)?;
    let epochs = extract_epochs(&filtered, p.time_pre_ms, p.time_post_ms, (-p.time_pre_ms, 0.0))?;
    let epochs = drop_leading_trials(&epochs, p.drop_leading)?;
    exclude_channels(&epochs, &p.exclude)
}

pub fn prepare_freq(recording: &Recording, cfg: &RunConfig) -> Result<FreqTaskData> {
    let epochs = freq_epochs(recording, cfg)?;
    freq_from_epochs(&epochs, cfg)
}

pub fn freq_from_epochs(epochs: &EpochSet, cfg: &RunConfig) -> Result<FreqTaskData> {
    let task = single_task(epochs)?;
    let band_power = band_power_features::<&str>(
        epochs,
        &cfg.spectral.bands,
        &[],
        cfg.spectral.window_len,
        cfg.spectral.overlap,
    )?;
    let moments = FilterBankMoments::compute(epochs, &cfg.spectral.bands, cfg.fbcsp.n_taps)?;
    Ok(FreqTaskData {
        task,
        band_power,
        moments,
        channels: epochs.montage().channel_names().to_vec(),
    })
}

pub fn prepare_time(recording: &Recording, cfg: &RunConfig) -> Result<TimeTaskData> {
    let epochs = time_epochs(recording, cfg)?;
    let averaged = average_consecutive(&epochs, cfg.preprocess.average_group)?;
    temporal_features(&averaged, cfg.preprocess.time_post_ms)
}

fn single_task(epochs: &EpochSet) -> Result<TaskKind> {
    let task = *epochs.tasks().first().ok_or(Error::Empty)?;
    if epochs.tasks().iter().any(|&t| t != task) {
        return Err(Error::MixedMetadata(0));
    }
    Ok(task)
}

/// The `round(post_ms·fs/1000)` samples from stimulus onset on, per channel,
/// flattened channel-major. Columns are named `CH@i` with `i` the sample
/// offset from onset.
pub fn temporal_features(epochs: &EpochSet, post_ms: f64) -> Result<TimeTaskData> {
    let task = single_task(epochs)?;
    let fs = epochs.montage().fs();
    let n_times = (post_ms / 1000.0 * fs).round() as usize;
    let t0 = epochs.t0_offset();
    if n_times == 0 || t0 + n_times > epochs.n_times() {
        return Err(Error::ShapeMismatch(format!(
            "{n_times} post-stimulus samples from offset {t0} exceed epoch length {}",
            epochs.n_times()
        )));
    }
    let n_ch = epochs.n_channels();
    let names: Vec<String> = epochs
        .montage()
        .channel_names()
        .iter()
        .flat_map(|ch| (0..n_times).map(move |i| format!("{ch}@{i}")))
        .collect();
    let mut values = Array2::zeros((epochs.n_trials(), n_ch * n_times));
    for (i, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
        let window = epochs.epoch(i);
        let window = window.slice(s![.., t0..t0 + n_times]);
        for (c, ch) in window.axis_iter(Axis(0)).enumerate() {
            row.slice_mut(s![c * n_times..(c + 1) * n_times]).assign(&ch);
        }
    }
    let features = FeatureMatrix::new(names, values, epochs.labels().to_vec(), epochs.subject_ids().to_vec())?;
    Ok(TimeTaskData {
        task,
        features,
        n_times,
        fs,
    })
}

/// Stacks one task's per-subject parts in order.
pub fn stack_freq(parts: &[FreqTaskData]) -> Result<FreqTaskData> {
    let first = parts.first().ok_or(Error::Empty)?;
    if parts.iter().any(|p| p.task != first.task || p.channels != first.channels) {
        return Err(Error::SubjectMismatch("parts differ in task or channels".into()));
    }
    let bp: Vec<&FeatureMatrix> = parts.iter().map(|p| &p.band_power).collect();
    let mom: Vec<&FilterBankMoments> = parts.iter().map(|p| &p.moments).collect();
    Ok(FreqTaskData {
        task: first.task,
        band_power: FeatureMatrix::vstack(&bp)?,
        moments: FilterBankMoments::concat(&mom)?,
        channels: first.channels.clone(),
    })
}

pub fn stack_time(parts: &[TimeTaskData]) -> Result<TimeTaskData> {
    let first = parts.first().ok_or(Error::Empty)?;
    if parts.iter().any(|p| p.task != first.task || p.n_times != first.n_times || p.fs != first.fs) {
        return Err(Error::SubjectMismatch("parts differ in task or length".into()));
    }
    let fm: Vec<&FeatureMatrix> = parts.iter().map(|p| &p.features).collect();
    Ok(TimeTaskData {
        task: first.task,
        features: FeatureMatrix::vstack(&fm)?,
        n_times: first.n_times,
        fs: first.fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ClassLabel, Montage};
    use ndarray::Array3;

    #[test]
    fn temporal_layout_is_channel_major() {
        let montage = Montage::new(vec!["A".into(), "B".into()], 256.0).unwrap();
        let data = Array3::from_shape_fn((2, 2, 257), |(t, c, s)| (t * 1000 + c * 300 + s) as f64);
        let epochs = EpochSet::new(
            montage,
            data,
            51,
            vec![ClassLabel::Nc; 2],
            vec!["s".into(); 2],
            vec![TaskKind::Verp; 2],
        )
        .unwrap();
        let t = temporal_features(&epochs, 800.0).unwrap();
        assert_eq!(t.n_times, 205);
        assert_eq!(t.features.n_features(), 410);
        assert_eq!(t.features.names()[205], "B@0");
        assert_eq!(t.features.values()[[1, 0]], 1051.0);
        assert_eq!(t.features.values()[[0, 205]], 351.0);
        assert_eq!(t.features.values()[[0, 409]], 300.0 + 51.0 + 204.0);
    }
}

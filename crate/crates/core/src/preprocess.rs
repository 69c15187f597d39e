//! FIR design, zero-phase filtering, epoching and trial bookkeeping.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{EpochSet, Recording};

pub const MIN_TAPS: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterKind {
    Bandpass { f_low: f64, f_high: f64 },
    Notch { f0: f64, bandwidth: f64 },
}

/// Linear-phase FIR kernel (odd length, symmetric taps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    taps: Vec<f64>,
    fs: f64,
    kind: FilterKind,
}

impl FilterKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// |H(f)| from the DTFT of the taps.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.fs;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, &h)| {
                let ph = w * n as f64;
                (re + h * ph.cos(), im - h * ph.sin())
            });
        re.hypot(im)
    }
}

fn check_taps(n_taps: usize) -> Result<()> {
    if n_taps % 2 == 0 {
        return Err(Error::EvenTapCount(n_taps));
    }
    if n_taps < MIN_TAPS {
        return Err(Error::TooFewTaps(n_taps, MIN_TAPS));
    }
    Ok(())
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

// Ideal low-pass impulse response with cutoff `fc`, centered at (n-1)/2.
fn ideal_lowpass(fc: f64, fs: f64, n: usize) -> impl Iterator<Item = f64> {
    let m = (n - 1) as f64 / 2.0;
    let nu = 2.0 * fc / fs;
    (0..n).map(move |i| nu * sinc(nu * (i as f64 - m)))
}

fn bandpass_taps(f_low: f64, f_high: f64, fs: f64, n_taps: usize) -> Vec<f64> {
    let win = hamming(n_taps);
    ideal_lowpass(f_high, fs, n_taps)
        .zip(ideal_lowpass(f_low, fs, n_taps))
        .zip(win)
        .map(|((hi, lo), w)| (hi - lo) * w)
        .collect()
}

/// Hamming-windowed sinc band-pass. Gain is normalized to 1 at the band centre.
pub fn design_bandpass(f_low: f64, f_high: f64, fs: f64, n_taps: usize) -> Result<FilterKernel> {
    if !(f_low > 0.0 && f_low < f_high && f_high < fs / 2.0) {
        return Err(Error::BadBandEdges { f_low, f_high, fs });
    }
    check_taps(n_taps)?;
    let mut kernel = FilterKernel {
        taps: bandpass_taps(f_low, f_high, fs, n_taps),
        fs,
        kind: FilterKind::Bandpass { f_low, f_high },
    };
    let gain = kernel.magnitude(0.5 * (f_low + f_high));
    kernel.taps.iter_mut().for_each(|t| *t /= gain);
    symmetrize(&mut kernel.taps);
    Ok(kernel)
}

/// Band-stop kernel removing `[f0 - bandwidth, f0 + bandwidth]`, unit DC gain.
pub fn design_notch(f0: f64, bandwidth: f64, fs: f64, n_taps: usize) -> Result<FilterKernel> {
    let (lo, hi) = (f0 - bandwidth, f0 + bandwidth);
    if !(bandwidth > 0.0 && lo > 0.0 && hi < fs / 2.0) {
        return Err(Error::BadBandEdges {
            f_low: lo,
            f_high: hi,
            fs,
        });
    }
    check_taps(n_taps)?;
    let mut taps: Vec<f64> = bandpass_taps(lo, hi, fs, n_taps).iter().map(|t| -t).collect();
    taps[(n_taps - 1) / 2] += 1.0;
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    symmetrize(&mut taps);
    Ok(FilterKernel {
        taps,
        fs,
        kind: FilterKind::Notch { f0, bandwidth },
    })
}

fn symmetrize(taps: &mut [f64]) {
    let n = taps.len();
    for i in 0..n / 2 {
        let v = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = v;
        taps[n - 1 - i] = v;
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

// Below this many multiply-adds direct convolution beats the FFT path.
const DIRECT_CONV_LIMIT: usize = 1 << 16;

/// Causal FIR application `y[n] = Σ h[k] x[n-k]` with zero initial state;
/// output has the input's length.
pub fn fir_filter(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let (n, m) = (x.len(), taps.len());
    if n == 0 || m == 0 {
        return vec![0.0; n];
    }
    if n * m <= DIRECT_CONV_LIMIT {
        return (0..n)
            .map(|i| {
                let kmax = i.min(m - 1);
                (0..=kmax).map(|k| taps[k] * x[i - k]).sum()
            })
            .collect();
    }
    FftConvolver::new(taps, n).filter(x)
}

/// Frequency-domain convolution with a fixed kernel. Real signals are
/// packed two per complex transform.
pub struct FftConvolver {
    size: usize,
    max_len: usize,
    delay: usize,
    spectrum: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftConvolver {
    /// Causal filtering by `taps` of signals up to `max_len` samples.
    pub fn new(taps: &[f64], max_len: usize) -> Self {
        Self::build(taps, max_len, false)
    }

    /// Forward-backward filtering by symmetric `taps`: the net kernel is
    /// `h * h`, spectrum `H²`, advanced by `len(h) - 1` samples.
    fn zero_phase(taps: &[f64], max_len: usize) -> Self {
        Self::build(taps, max_len, true)
    }

    fn build(taps: &[f64], max_len: usize, squared: bool) -> Self {
        let m = taps.len();
        let span = if squared { 2 * m - 1 } else { m };
        let size = (max_len + span - 1).next_power_of_two();
        let (fwd, inv) = PLANNER.with(|p| {
            let mut planner = p.borrow_mut();
            (planner.plan_fft_forward(size), planner.plan_fft_inverse(size))
        });
        let mut spectrum: Vec<Complex64> = taps.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectrum.resize(size, Complex64::new(0.0, 0.0));
        fwd.process(&mut spectrum);
        let scale = 1.0 / size as f64;
        for v in spectrum.iter_mut() {
            *v = if squared { *v * *v } else { *v } * scale;
        }
        FftConvolver {
            size,
            max_len,
            delay: if squared { m - 1 } else { 0 },
            spectrum,
            fwd,
            inv,
        }
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        self.filter_pair(x, None).0
    }

    /// Filters `a` and optionally `b` (same length) in one transform pair.
    pub fn filter_pair(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = a.len();
        assert!(n <= self.max_len, "signal longer than the convolver was planned for");
        let mut buf: Vec<Complex64> = match b {
            Some(b) => {
                assert_eq!(b.len(), n);
                a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect()
            }
            None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        buf.resize(self.size, Complex64::new(0.0, 0.0));
        self.fwd.process(&mut buf);
        buf.iter_mut().zip(&self.spectrum).for_each(|(u, v)| *u *= v);
        self.inv.process(&mut buf);
        let out = &buf[self.delay..self.delay + n];
        let re = out.iter().map(|c| c.re).collect();
        let im = b.map(|_| out.iter().map(|c| c.im).collect());
        (re, im)
    }
}

fn reflect_pad(signal: &[f64], pad: usize) -> Vec<f64> {
    let n = signal.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (signal[0], signal[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));
    ext
}

fn check_filtfilt_len(n: usize, kernel: &FilterKernel) -> Result<usize> {
    let pad = 3 * kernel.len();
    if n <= pad {
        return Err(Error::SignalTooShort { len: n, required: pad });
    }
    Ok(pad)
}

/// Forward-backward filtering with odd reflection padding of `3·n_taps`
/// samples on each side. Output length equals input length.
pub fn filtfilt(signal: &[f64], kernel: &FilterKernel) -> Result<Vec<f64>> {
    let n = signal.len();
    let pad = check_filtfilt_len(n, kernel)?;
    let ext = reflect_pad(signal, pad);
    if ext.len() * kernel.len() <= DIRECT_CONV_LIMIT {
        let mut y = fir_filter(&ext, &kernel.taps);
        y.reverse();
        let mut y = fir_filter(&y, &kernel.taps);
        y.reverse();
        return Ok(y[pad..pad + n].to_vec());
    }
    let conv = FftConvolver::zero_phase(&kernel.taps, ext.len());
    Ok(conv.filter(&ext)[pad..pad + n].to_vec())
}

/// [`filtfilt`] applied to every row of a `channels × time` matrix.
pub fn filtfilt_rows(signals: ArrayView2<'_, f64>, kernel: &FilterKernel) -> Result<Array2<f64>> {
    let (r, c) = signals.dim();
    if r == 0 {
        return Ok(signals.to_owned());
    }
    let pad = check_filtfilt_len(c, kernel)?;
    let conv = FftConvolver::zero_phase(&kernel.taps, c + 2 * pad);
    let mut out = Array2::zeros((r, c));
    out.axis_chunks_iter_mut(Axis(0), 2)
        .into_par_iter()
        .zip(signals.axis_chunks_iter(Axis(0), 2))
        .for_each(|(mut dst, src)| {
            let a = reflect_pad(&src.row(0).to_vec(), pad);
            let b = (src.nrows() > 1).then(|| reflect_pad(&src.row(1).to_vec(), pad));
            let (ya, yb) = conv.filter_pair(&a, b.as_deref());
            dst.row_mut(0).assign(&ndarray::ArrayView1::from(&ya[pad..pad + c]));
            if let Some(yb) = yb {
                dst.row_mut(1).assign(&ndarray::ArrayView1::from(&yb[pad..pad + c]));
            }
        });
    Ok(out)
}

/// Zero-phase filters every channel of a recording.
pub fn filter_recording(recording: &Recording, kernel: &FilterKernel) -> Result<Recording> {
    let out = filtfilt_rows(recording.samples(), kernel)?;
    recording.map_samples(out)
}

/// Zero-phase filters every (trial, channel) signal of an epoch set.
pub fn filter_epochs(epochs: &EpochSet, kernel: &FilterKernel) -> Result<EpochSet> {
    let (t, c, n) = epochs.data().dim();
    let data = epochs.data().as_standard_layout();
    let rows = data
        .view()
        .into_shape_with_order((t * c, n))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let out = filtfilt_rows(rows, kernel)?;
    let data = out
        .into_shape_with_order((t, c, n))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    epochs.with_data(data)
}

fn ms_to_samples(ms: f64, fs: f64) -> isize {
    (ms / 1000.0 * fs).round() as isize
}

/// Cuts stimulus-locked epochs and subtracts the per-channel mean over the
/// baseline window (inclusive bounds, milliseconds relative to onset).
pub fn extract_epochs(
    recording: &Recording,
    pre_ms: f64,
    post_ms: f64,
    baseline: (f64, f64),
) -> Result<EpochSet> {
    let fs = recording.montage().fs();
    if pre_ms < 0.0 || post_ms < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epoch window -{pre_ms}..{post_ms} ms"
        )));
    }
    let pre = ms_to_samples(pre_ms, fs) as usize;
    let len = ms_to_samples(pre_ms + post_ms, fs) as usize + 1;
    let b0 = pre as isize + ms_to_samples(baseline.0, fs);
    let b1 = pre as isize + ms_to_samples(baseline.1, fs);
    if b0 < 0 || b1 < b0 || b1 as usize >= len {
        return Err(Error::InvalidParameter(format!(
            "baseline {:?} ms outside epoch window",
            baseline
        )));
    }
    let (b0, b1) = (b0 as usize, b1 as usize);

    let samples = recording.samples();
    let n_ch = samples.nrows();
    let events = recording.events();
    let mut data = Array3::zeros((events.len(), n_ch, len));
    for (i, ev) in events.iter().enumerate() {
        if ev.onset < pre || ev.onset - pre + len > samples.ncols() {
            return Err(Error::EpochOutOfBounds(i));
        }
        let start = ev.onset - pre;
        let mut epoch = data.index_axis_mut(Axis(0), i);
        epoch.assign(&samples.slice(s![.., start..start + len]));
        for mut ch in epoch.axis_iter_mut(Axis(0)) {
            let base = ch.slice(s![b0..=b1]).mean().unwrap_or(0.0);
            ch.mapv_inplace(|v| v - base);
        }
    }
    let n = events.len();
    EpochSet::new(
        recording.montage().clone(),
        data,
        pre,
        vec![recording.label(); n],
        vec![recording.subject_id().to_string(); n],
        vec![recording.task(); n],
    )
}

/// Removes the first `k` trials (practice trials).
pub fn drop_leading_trials(epochs: &EpochSet, k: usize) -> Result<EpochSet> {
    let n = epochs.n_trials();
    if n <= k {
        return Err(Error::TooFewTrials { have: n, required: k });
    }
    let keep: Vec<usize> = (k..n).collect();
    Ok(epochs.select_trials(&keep))
}

/// Averages each run of `group_size` consecutive trials.
pub fn average_consecutive(epochs: &EpochSet, group_size: usize) -> Result<EpochSet> {
    let n = epochs.n_trials();
    if group_size == 0 || n % group_size != 0 {
        return Err(Error::IndivisibleTrialCount {
            trials: n,
            group: group_size,
        });
    }
    let groups = n / group_size;
    let (_, c, t) = epochs.data().dim();
    let mut data = Array3::zeros((groups, c, t));
    let mut firsts = Vec::with_capacity(groups);
    for g in 0..groups {
        let lo = g * group_size;
        for i in lo + 1..lo + group_size {
            if epochs.subject_ids()[i] != epochs.subject_ids()[lo]
                || epochs.labels()[i] != epochs.labels()[lo]
                || epochs.tasks()[i] != epochs.tasks()[lo]
            {
                return Err(Error::MixedMetadata(g));
            }
        }
        let mut acc = data.index_axis_mut(Axis(0), g);
        for i in lo..lo + group_size {
            acc += &epochs.epoch(i);
        }
        acc.mapv_inplace(|v| v / group_size as f64);
        firsts.push(lo);
    }
    let meta = epochs.select_trials(&firsts);
    meta.with_data(data)
}

//! Welch PSD and relative band power.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{exclude_channels, BandDef, EpochSet, FeatureMatrix};

/// One-sided PSD, `channels × freqs`, in V²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power: Array2<f64>,
    pub fs: f64,
    pub window_len: usize,
    pub overlap: f64,
}

impl PsdEstimate {
    pub fn df(&self) -> f64 {
        self.fs / self.window_len as f64
    }

    /// Σ P(f)·Δf for one channel.
    pub fn integrated_power(&self, channel: usize) -> f64 {
        self.power.row(channel).sum() * self.df()
    }
}

/// Periodic (DFT-even) Hamming window, the usual choice for spectral estimation.
pub fn hamming_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reusable Welch estimator for a fixed window length.
pub struct Welch {
    window: Vec<f64>,
    overlap: f64,
    hop: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Welch {
    pub fn new(window_len: usize, overlap: f64) -> Result<Self> {
        if window_len < 2 || !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParameter(format!(
                "welch window {window_len}, overlap {overlap}"
            )));
        }
        let hop = ((window_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
        let fft = FftPlanner::new().plan_fft_forward(window_len);
        Ok(Welch {
            window: hamming_periodic(window_len),
            overlap,
            hop,
            fft,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn n_bins(&self) -> usize {
        self.window.len() / 2 + 1
    }

    pub fn freqs(&self, fs: f64) -> Vec<f64> {
        let n = self.window.len() as f64;
        (0..self.n_bins()).map(|k| k as f64 * fs / n).collect()
    }

    /// Density-scaled one-sided PSD of one signal.
    pub fn psd(&self, signal: ArrayView1<'_, f64>, fs: f64) -> Result<Vec<f64>> {
        let n = self.window.len();
        if signal.len() < n {
            return Err(Error::SignalTooShort {
                len: signal.len(),
                required: n,
            });
        }
        let n_seg = (signal.len() - n) / self.hop + 1;
        let scale = 1.0 / (fs * self.window.iter().map(|w| w * w).sum::<f64>());
        let mut acc = vec![0.0; self.n_bins()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for seg in 0..n_seg {
            let part = signal.slice(ndarray::s![seg * self.hop..seg * self.hop + n]);
            let mean = part.sum() / n as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(part.iter()).zip(&self.window) {
                *b = Complex64::new((x - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr();
            }
        }
        let last = self.n_bins() - 1;
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (n % 2 == 0 && k == last) { 1.0 } else { 2.0 };
            *a *= one_sided * scale / n_seg as f64;
        }
        Ok(acc)
    }

    /// PSD of every row of a `channels × time` matrix.
    pub fn psd_rows(&self, signals: ArrayView2<'_, f64>, fs: f64) -> Result<PsdEstimate> {
        let mut power = Array2::zeros((signals.nrows(), self.n_bins()));
        for (c, row) in signals.axis_iter(Axis(0)).enumerate() {
            let p = self.psd(row, fs)?;
            power.row_mut(c).assign(&ArrayView1::from(&p));
        }
        Ok(PsdEstimate {
            freqs: self.freqs(fs),
            power,
            fs,
            window_len: self.window.len(),
            overlap: self.overlap,
        })
    }
}

/// Welch PSD of a single channel: Hamming segments of `window_len` samples,
/// hop `window_len·(1 − overlap)`, constant detrend per segment.
pub fn welch(signal: &[f64], fs: f64, window_len: usize, overlap: f64) -> Result<PsdEstimate> {
    let est = Welch::new(window_len, overlap)?;
    let view = ArrayView2::from_shape((1, signal.len()), signal)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    est.psd_rows(view, fs)
}

fn check_band(band: &BandDef, total: (f64, f64)) -> Result<()> {
    if band.f_low < total.0 || band.f_high > total.1 || band.f_low >= band.f_high {
        return Err(Error::BandOutsideTotal {
            f_low: band.f_low,
            f_high: band.f_high,
            total_low: total.0,
            total_high: total.1,
        });
    }
    Ok(())
}

/// Band power over total power for one PSD row. Band bins follow
/// [`BandDef::contains`]; the total range is closed on both ends.
pub fn relative_power_row(freqs: &[f64], power: &[f64], band: &BandDef, total: (f64, f64)) -> Result<f64> {
    check_band(band, total)?;
    if freqs.last().is_none_or(|&f| f < total.1) || freqs[0] > total.0 {
        return Err(Error::BandOutsideTotal {
            f_low: total.0,
            f_high: total.1,
            total_low: freqs.first().copied().unwrap_or(0.0),
            total_high: freqs.last().copied().unwrap_or(0.0),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&f, &p) in freqs.iter().zip(power) {
        if f >= total.0 && f <= total.1 {
            den += p;
            if band.contains(f) {
                num += p;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroTotalPower);
    }
    Ok(num / den)
}

/// Relative power of `band` for every channel of `psd`.
pub fn relative_power(psd: &PsdEstimate, band: &BandDef, total: (f64, f64)) -> Result<Vec<f64>> {
    psd.power
        .axis_iter(Axis(0))
        .map(|row| relative_power_row(&psd.freqs, row.as_slice().expect("row-major"), band, total))
        .collect()
}

/// Reference range spanned by a band list.
pub fn band_span(bands: &[BandDef]) -> (f64, f64) {
    let lo = bands.iter().map(|b| b.f_low).fold(f64::INFINITY, f64::min);
    let hi = bands.iter().map(|b| b.f_high).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Relative band power per (channel, band) for every trial.
///
/// Columns are named `CH:band`, channel-major. The reference range is the
/// span of `bands` (1–30 Hz for the canonical set).
pub fn band_power_features<S: AsRef<str> + Sync>(
    epochs: &EpochSet,
    bands: &[BandDef],
    exclude: &[S],
    window_len: usize,
    overlap: f64,
) -> Result<FeatureMatrix> {
    let view = exclude_channels(epochs, exclude)?;
    let fs = view.montage().fs();
    for b in bands {
        b.check(fs)?;
    }
    let total = band_span(bands);
    let names: Vec<String> = view
        .montage()
        .channel_names()
        .iter()
        .flat_map(|ch| bands.iter().map(move |b| format!("{ch}:{}", b.name)))
        .collect();
    let welch = Welch::new(window_len, overlap)?;
    let rows: Vec<Vec<f64>> = (0..view.n_trials())
        .into_par_iter()
        .map(|t| {
            let psd = welch.psd_rows(view.epoch(t), fs)?;
            let mut row = Vec::with_capacity(names.len());
            for p in psd.power.axis_iter(Axis(0)) {
                let p = p.as_slice().expect("row-major");
                for b in bands {
                    row.push(relative_power_row(&psd.freqs, p, b, total)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let values = Array2::from_shape_vec(
        (rows.len(), names.len()),
        rows.into_iter().flatten().collect(),
    )
    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    FeatureMatrix::new(
        names,
        values,
        view.labels().to_vec(),
        view.subject_ids().to_vec(),
    )
}

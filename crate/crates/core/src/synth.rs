//! Deterministic synthetic EEG with planted class differences.
//!
//! Each channel is a sum of band-limited processes (white noise through the
//! band-pass kernels of [`crate::preprocess`]), stimulus-locked Gaussian ERP
//! deflections, white sensor noise and optional line noise. Within a band a
//! common source mixes into every channel with a spatial weight, so classes
//! can differ in band coherence as well as in relative power.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{design_bandpass, FftConvolver};
use crate::signal::{BandDef, ClassLabel, Event, Montage, Recording, TaskKind, CANONICAL_CHANNELS};
use crate::spectral::hamming_periodic;

pub const DEFAULT_PROFILE: &str = include_str!("../profiles/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpComponent {
    pub name: String,
    pub polarity: Polarity,
    pub latency_ms: f64,
    pub amplitude_uv: f64,
    /// Standard deviation of the Gaussian window.
    pub width_ms: f64,
    pub center: String,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// One target per band, summing to 1.
    pub relative_power: Vec<f64>,
    /// Share of each band's power carried by the common source at its centre.
    pub coherence: Vec<f64>,
    #[serde(default)]
    pub erp: Vec<ErpComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBand {
    pub name: String,
    pub f_low: f64,
    pub f_high: f64,
    #[serde(default)]
    pub closed_high: bool,
    pub center: String,
    pub spread: f64,
}

impl SynthBand {
    pub fn band(&self) -> BandDef {
        BandDef::new(self.name.clone(), self.f_low, self.f_high, self.closed_high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub relative_power: f64,
    pub coherence: f64,
    pub erp_amplitude: f64,
    pub erp_latency_ms: f64,
    pub trial_latency_ms: f64,
    pub trial_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModifier {
    pub erp_gain: f64,
}

/// Generator parameters for all three classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub fs: f64,
    pub n_trials: usize,
    pub lead_in_s: f64,
    pub trial_spacing_s: f64,
    pub tail_s: f64,
    pub background_rms_uv: f64,
    pub noise_std_uv: f64,
    #[serde(default)]
    pub line_noise_uv: f64,
    #[serde(default = "default_line_freq")]
    pub line_freq_hz: f64,
    pub band_taps: usize,
    pub welch_window: usize,
    pub jitter: Jitter,
    pub bands: Vec<SynthBand>,
    pub classes: BTreeMap<ClassLabel, ClassProfile>,
    #[serde(default)]
    pub tasks: BTreeMap<TaskKind, TaskModifier>,
}

fn default_line_freq() -> f64 {
    50.0
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadProfile(msg.into())
}

impl ProfileSet {
    pub fn default_profiles() -> Self {
        Self::from_toml(DEFAULT_PROFILE).expect("bundled profile is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: ProfileSet = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        p.check()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn class(&self, label: ClassLabel) -> &ClassProfile {
        &self.classes[&label]
    }

    pub fn erp_gain(&self, task: TaskKind) -> f64 {
        self.tasks.get(&task).map_or(1.0, |m| m.erp_gain)
    }

    /// Every class replaced by the NC profile.
    pub fn with_identical_classes(&self) -> Self {
        let mut p = self.clone();
        let nc = p.classes[&ClassLabel::Nc].clone();
        for l in ClassLabel::ALL {
            p.classes.insert(l, nc.clone());
        }
        p
    }

    pub fn montage(&self) -> Montage {
        Montage::canonical(self.fs)
    }

    pub fn n_samples(&self) -> usize {
        ((self.lead_in_s + self.n_trials as f64 * self.trial_spacing_s + self.tail_s) * self.fs).round() as usize
    }

    pub fn onsets(&self) -> Vec<usize> {
        (0..self.n_trials)
            .map(|i| ((self.lead_in_s + i as f64 * self.trial_spacing_s) * self.fs).round() as usize)
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(bad(format!("fs {}", self.fs)));
        }
        if self.n_trials == 0 || !(self.trial_spacing_s > 0.0) || self.lead_in_s < 0.0 || self.tail_s < 0.0 {
            return Err(bad("trial layout"));
        }
        for (name, v) in [
            ("background_rms_uv", self.background_rms_uv),
            ("noise_std_uv", self.noise_std_uv),
            ("line_noise_uv", self.line_noise_uv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("{name} = {v}")));
            }
        }
        let j = &self.jitter;
        for v in [
            j.relative_power,
            j.coherence,
            j.erp_amplitude,
            j.erp_latency_ms,
            j.trial_latency_ms,
            j.trial_amplitude,
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad("negative or non-finite jitter"));
            }
        }
        if self.bands.is_empty() {
            return Err(bad("no bands"));
        }
        for b in &self.bands {
            b.band().check(self.fs).map_err(|e| bad(e.to_string()))?;
            position(&b.center)?;
            if !(b.spread > 0.0) {
                return Err(bad(format!("band {} spread", b.name)));
            }
        }
        if self.welch_window == 0 || self.band_taps % 2 == 0 {
            return Err(bad("welch_window must be positive and band_taps odd"));
        }
        let window_ms = self.trial_spacing_s * 1000.0;
        for label in ClassLabel::ALL {
            let c = self
                .classes
                .get(&label)
                .ok_or_else(|| bad(format!("class {label} missing")))?;
            if c.relative_power.len() != self.bands.len() || c.coherence.len() != self.bands.len() {
                return Err(bad(format!("class {label}: one value per band expected")));
            }
            if c.relative_power.iter().any(|&r| !(r >= 0.0)) {
                return Err(bad(format!("class {label}: negative relative power")));
            }
            let sum: f64 = c.relative_power.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(bad(format!("class {label}: relative powers sum to {sum}")));
            }
            if c.coherence.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                return Err(bad(format!("class {label}: coherence outside [0, 1]")));
            }
            for e in &c.erp {
                if !(e.latency_ms > 0.0 && e.latency_ms < window_ms) {
                    return Err(bad(format!("class {label}: {} latency {} ms", e.name, e.latency_ms)));
                }
                if !(e.width_ms > 0.0 && e.amplitude_uv >= 0.0 && e.spread > 0.0) {
                    return Err(bad(format!("class {label}: {} shape", e.name)));
                }
                position(&e.center)?;
            }
        }
        for m in self.tasks.values() {
            if !(m.erp_gain >= 0.0) {
                return Err(bad("negative erp_gain"));
            }
        }
        Ok(())
    }
}

// Rough scalp positions: x left to right, y back to front.
const POSITIONS: [(f64, f64); 32] = [
    (-0.30, 0.95),
    (0.30, 0.95),
    (-0.95, 0.55),
    (-0.80, 0.60),
    (-0.40, 0.55),
    (0.00, 0.50),
    (0.40, 0.55),
    (0.80, 0.60),
    (0.95, 0.55),
    (-0.65, 0.30),
    (-0.20, 0.25),
    (0.20, 0.25),
    (0.65, 0.30),
    (-1.00, 0.00),
    (-0.50, 0.00),
    (0.00, 0.00),
    (0.50, 0.00),
    (1.00, 0.00),
    (-0.45, -0.30),
    (0.00, -0.25),
    (0.45, -0.30),
    (-0.95, -0.55),
    (-0.80, -0.60),
    (-0.40, -0.55),
    (0.00, -0.50),
    (0.40, -0.55),
    (0.60, -0.60),
    (0.80, -0.60),
    (0.95, -0.55),
    (0.00, -0.75),
    (-0.30, -0.95),
    (0.00, -1.00),
];

fn position(name: &str) -> Result<(f64, f64)> {
    CANONICAL_CHANNELS
        .iter()
        .position(|&c| c == name)
        .map(|i| POSITIONS[i])
        .ok_or_else(|| bad(format!("unknown centre channel `{name}`")))
}

/// Gaussian spatial weight of every canonical channel, 1 at `center`.
pub fn topography(center: &str, spread: f64) -> Result<Vec<f64>> {
    let (cx, cy) = position(center)?;
    Ok(POSITIONS
        .iter()
        .map(|&(x, y)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * spread * spread)).exp())
        .collect())
}

/// Expected Welch power summed over each band's bins, for unit-variance
/// white noise passed through each band's kernel: `m[b][j]` is kernel `b`
/// measured in band `j`. Uses `E[P(f)] = 2/(fs·U) Σ_l r_h(l) r_w(l) cos(2πfl/fs)`
/// with `r_h`, `r_w` the kernel and window autocorrelations.
fn expected_band_powers(kernels: &[Vec<f64>], bands: &[BandDef], fs: f64, window: usize) -> Vec<Vec<f64>> {
    let w = hamming_periodic(window);
    let u: f64 = w.iter().map(|v| v * v).sum();
    let r_w: Vec<f64> = (0..window)
        .map(|l| (0..window - l).map(|i| w[i] * w[i + l]).sum())
        .collect();
    let freqs: Vec<f64> = (0..=window / 2).map(|k| k as f64 * fs / window as f64).collect();
    kernels
        .iter()
        .map(|h| {
            let m = h.len();
            let lags = m.min(window);
            let r_h: Vec<f64> = (0..lags)
                .map(|l| (0..m - l).map(|i| h[i] * h[i + l]).sum())
                .collect();
            let psd: Vec<f64> = freqs
                .iter()
                .map(|&f| {
                    let mut acc = r_h[0] * r_w[0];
                    for l in 1..lags {
                        acc += 2.0 * r_h[l] * r_w[l] * (2.0 * PI * f * l as f64 / fs).cos();
                    }
                    2.0 * acc / (fs * u)
                })
                .collect();
            bands
                .iter()
                .map(|b| freqs.iter().zip(&psd).filter(|(f, _)| b.contains(**f)).map(|(_, p)| p).sum())
                .collect()
        })
        .collect()
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Band kernels plus the calibration matrix, shared by every subject.
pub struct Generator {
    profile: ProfileSet,
    kernels: Vec<Vec<f64>>,
    calibration: Vec<Vec<f64>>,
    band_topo: Vec<Vec<f64>>,
    convolver: Vec<FftConvolver>,
}

/// Per-subject draws, shared across that subject's tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTraits {
    pub relative_power: Vec<f64>,
    pub coherence: Vec<f64>,
    pub erp_amplitude: Vec<f64>,
    pub erp_latency_ms: Vec<f64>,
}

/// Identity of one generated subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub index: usize,
    pub id: String,
    pub label: ClassLabel,
}

/// `n_per_class` subjects of each class, ids like `NC01`.
pub fn subject_specs(n_per_class: usize) -> Vec<SubjectSpec> {
    ClassLabel::ALL
        .iter()
        .enumerate()
        .flat_map(|(ci, &label)| {
            (0..n_per_class).map(move |i| SubjectSpec {
                index: ci * n_per_class + i,
                id: format!("{}{:02}", label.as_str(), i + 1),
                label,
            })
        })
        .collect()
}

fn rng_for(seed: u64, subject: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subject as u64) << 8) | stream);
    rng
}

const TRAIT_STREAM: u64 = 0xff;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl Generator {
    pub fn new(profile: ProfileSet) -> Result<Self> {
        profile.check()?;
        let bands: Vec<BandDef> = profile.bands.iter().map(SynthBand::band).collect();
        let kernels: Vec<Vec<f64>> = bands
            .iter()
            .map(|b| design_bandpass(b.f_low, b.f_high, profile.fs, profile.band_taps).map(|k| k.taps().to_vec()))
            .collect::<Result<_>>()
            .map_err(|e| bad(e.to_string()))?;
        let calibration = expected_band_powers(&kernels, &bands, profile.fs, profile.welch_window);
        let band_topo = profile
            .bands
            .iter()
            .map(|b| topography(&b.center, b.spread))
            .collect::<Result<_>>()?;
        let len = profile.n_samples() + profile.band_taps - 1;
        let convolver = kernels.iter().map(|h| FftConvolver::new(h, len)).collect();
        let g = Generator {
            profile,
            kernels,
            calibration,
            band_topo,
            convolver,
        };
        for label in ClassLabel::ALL {
            g.band_gains(&g.profile.class(label).relative_power)?;
        }
        Ok(g)
    }

    pub fn profile(&self) -> &ProfileSet {
        &self.profile
    }

    /// Variance scale of each band's process so the expected relative powers
    /// (sensor noise included) equal `targets`.
    pub fn band_gains(&self, targets: &[f64]) -> Result<Vec<f64>> {
        let p = &self.profile;
        let df = p.fs / p.welch_window as f64;
        let total = p.background_rms_uv.powi(2) / df;
        let bands: Vec<BandDef> = p.bands.iter().map(SynthBand::band).collect();
        let noise_bin = 2.0 * p.noise_std_uv.powi(2) / p.fs;
        let nb = bands.len();
        let rhs: Vec<f64> = (0..nb)
            .map(|j| {
                let bins = (0..=p.welch_window / 2)
                    .filter(|&k| bands[j].contains(k as f64 * df))
                    .count() as f64;
                targets[j] * (total + noise_bin * Self::bins_in_span(&bands, p.welch_window, df)) - noise_bin * bins
            })
            .collect();
        // a[j][b] = power of kernel b seen in band j
        let a: Vec<Vec<f64>> = (0..nb).map(|j| (0..nb).map(|b| self.calibration[b][j]).collect()).collect();
        let g = solve(a, rhs).ok_or_else(|| bad("singular band calibration"))?;
        if g.iter().any(|&v| !(v >= 0.0)) {
            return Err(bad(format!("relative powers {targets:?} unreachable above the noise floor")));
        }
        Ok(g)
    }

    fn bins_in_span(bands: &[BandDef], window: usize, df: f64) -> f64 {
        (0..=window / 2)
            .filter(|&k| bands.iter().any(|b| b.contains(k as f64 * df)))
            .count() as f64
    }

    pub fn subject_traits(&self, spec: &SubjectSpec, seed: u64) -> SubjectTraits {
        let p = &self.profile;
        let class = p.class(spec.label);
        let mut rng = rng_for(seed, spec.index, TRAIT_STREAM);
        let mut rel: Vec<f64> = class
            .relative_power
            .iter()
            .map(|&r| r * (1.0 + p.jitter.relative_power * normal(&mut rng)).max(0.0))
            .collect();
        let sum: f64 = rel.iter().sum();
        if sum > 0.0 {
            rel.iter_mut().for_each(|r| *r /= sum);
        }
        let coherence = class
            .coherence
            .iter()
            .map(|&c| (c + p.jitter.coherence * normal(&mut rng)).clamp(0.0, 1.0))
            .collect();
        let erp_amplitude = class
            .erp
            .iter()
            .map(|e| e.amplitude_uv * (1.0 + p.jitter.erp_amplitude * normal(&mut rng)).max(0.0))
            .collect();
        let erp_latency_ms = class
            .erp
            .iter()
            .map(|e| e.latency_ms + p.jitter.erp_latency_ms * normal(&mut rng))
            .collect();
        SubjectTraits {
            relative_power: rel,
            coherence,
            erp_amplitude,
            erp_latency_ms,
        }
    }

    /// One subject performing one task. Fully determined by `(seed,
    /// spec.index, task)`.
    pub fn generate(&self, spec: &SubjectSpec, task: TaskKind, seed: u64) -> Result<Recording> {
        if !task.is_recorded() {
            return Err(Error::CombinedTaskRecording(task.to_string()));
        }
        let p = &self.profile;
        let traits = self.subject_traits(spec, seed);
        let gains = self.band_gains(&traits.relative_power)?;
        let n = p.n_samples();
        let n_ch = CANONICAL_CHANNELS.len();
        let m = p.band_taps;
        let mut rng = rng_for(seed, spec.index, task.index() as u64);

        let mut data = Array2::<f64>::zeros((n_ch, n));
        let white = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n + m - 1).map(|_| normal(rng)).collect() };
        for (b, conv) in self.convolver.iter().enumerate() {
            let source = conv.filter(&white(&mut rng))[m - 1..].to_vec();
            let noises: Vec<Vec<f64>> = (0..n_ch).map(|_| white(&mut rng)).collect();
            let filtered: Vec<Vec<f64>> = noises
                .par_chunks(2)
                .flat_map_iter(|pair| {
                    let (a, b2) = conv.filter_pair(&pair[0], pair.get(1).map(|v| v.as_slice()));
                    std::iter::once(a).chain(b2)
                })
                .collect();
            let g = gains[b].sqrt();
            let rho = traits.coherence[b];
            for (c, noise) in filtered.iter().enumerate() {
                let a2 = rho * self.band_topo[b][c].powi(2);
                let (ws, wn) = (g * a2.sqrt(), g * (1.0 - a2).sqrt());
                let mut row = data.row_mut(c);
                for (t, v) in row.iter_mut().enumerate() {
                    *v += ws * source[t] + wn * noise[t + m - 1];
                }
            }
        }

        let onsets = p.onsets();
        let class = p.class(spec.label);
        let gain = p.erp_gain(task);
        let ms = p.fs / 1000.0;
        let erp_topo: Vec<Vec<f64>> = class
            .erp
            .iter()
            .map(|e| topography(&e.center, e.spread))
            .collect::<Result<_>>()?;
        for &onset in &onsets {
            for (k, e) in class.erp.iter().enumerate() {
                let lat = (traits.erp_latency_ms[k] + p.jitter.trial_latency_ms * normal(&mut rng)) * ms;
                let amp = gain
                    * traits.erp_amplitude[k]
                    * (1.0 + p.jitter.trial_amplitude * normal(&mut rng)).max(0.0)
                    * e.polarity.sign();
                let width = e.width_ms * ms;
                let lo = (onset as f64 + lat - 5.0 * width).floor().max(0.0) as usize;
                let hi = ((onset as f64 + lat + 5.0 * width).ceil() as usize).min(n);
                for t in lo..hi {
                    let z = (t as f64 - onset as f64 - lat) / width;
                    let v = amp * (-0.5 * z * z).exp();
                    for c in 0..n_ch {
                        data[[c, t]] += v * erp_topo[k][c];
                    }
                }
            }
        }

        let line_w = 2.0 * PI * p.line_freq_hz / p.fs;
        for mut row in data.rows_mut() {
            let phase = rng.random::<f64>() * 2.0 * PI;
            for (t, v) in row.iter_mut().enumerate() {
                *v += p.noise_std_uv * normal(&mut rng) + p.line_noise_uv * (line_w * t as f64 + phase).sin();
            }
        }
        data.mapv_inplace(|v| v * 1e-6);

        let events = onsets
            .iter()
            .enumerate()
            .map(|(trial, &onset)| Event { onset, trial })
            .collect();
        Recording::new(p.montage(), data, events, spec.id.clone(), spec.label, task)
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }
}

/// Convenience wrapper over [`Generator::generate`].
pub fn generate_subject(
    label: ClassLabel,
    profile: &ProfileSet,
    subject_index: usize,
    task: TaskKind,
    seed: u64,
) -> Result<Recording> {
    let spec = SubjectSpec {
        index: subject_index,
        id: format!("{}{:02}", label.as_str(), subject_index + 1),
        label,
    };
    Generator::new(profile.clone())?.generate(&spec, task, seed)
}

/// All `3·n_per_class` subjects for each task, subject-major. Holds every
/// recording in memory; stream through [`Generator`] for large sets.
pub fn generate_dataset(
    n_per_class: usize,
    profile: &ProfileSet,
    tasks: &[TaskKind],
    seed: u64,
) -> Result<Vec<Recording>> {
    if n_per_class < 3 {
        return Err(Error::TooFewSubjects {
            label: "any".into(),
            have: n_per_class,
            required: 3,
        });
    }
    let gen = Generator::new(profile.clone())?;
    let mut out = Vec::new();
    for spec in subject_specs(n_per_class) {
        for &task in tasks {
            out.push(gen.generate(&spec, task, seed)?);
        }
    }
    Ok(out)
}

//! Run configuration, read from TOML and embedded in every report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fbcsp::FbcspConfig;
use crate::ml::HyperGrid;
use crate::signal::{BandDef, ClassLabel, TaskKind, FRONTOPOLAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pipeline {
    /// Relative band power selection, FBCSP, SVM.
    #[serde(rename = "freq")]
    Frequency,
    /// Kruskal-Wallis intervals, PCA, SVM.
    #[serde(rename = "time")]
    Time,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Frequency => "freq",
            Pipeline::Time => "time",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freq" | "frequency" => Ok(Pipeline::Frequency),
            "time" => Ok(Pipeline::Time),
            other => Err(Error::Config(format!("unknown pipeline `{other}`"))),
        }
    }
}

/// Two classes, lower severity first. Written `NC-DEM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassPair {
    pub low: ClassLabel,
    pub high: ClassLabel,
}

impl ClassPair {
    pub fn new(a: ClassLabel, b: ClassLabel) -> Result<Self> {
        if a == b {
            return Err(Error::Config(format!("pair {a}-{b} needs two classes")));
        }
        Ok(ClassPair {
            low: a.min(b),
            high: a.max(b),
        })
    }

    pub const ALL: [ClassPair; 3] = [
        ClassPair {
            low: ClassLabel::Nc,
            high: ClassLabel::Mci,
        },
        ClassPair {
            low: ClassLabel::Nc,
            high: ClassLabel::Dem,
        },
        ClassPair {
            low: ClassLabel::Mci,
            high: ClassLabel::Dem,
        },
    ];

    pub fn contains(&self, l: ClassLabel) -> bool {
        l == self.low || l == self.high
    }

    /// The class left out of the pair.
    pub fn other(&self) -> ClassLabel {
        ClassLabel::ALL
            .into_iter()
            .find(|&l| !self.contains(l))
            .expect("three classes")
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.low, self.high)
    }
}

impl FromStr for ClassPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("pair `{s}` is not of the form A-B")))?;
        ClassPair::new(a.parse()?, b.parse()?)
    }
}

impl Serialize for ClassPair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_class: usize,
    /// Profile file; the bundled default when absent.
    pub profile: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 15,
            profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_bandwidth_hz: f64,
    pub n_taps: usize,
    pub freq_band: [f64; 2],
    pub time_band: [f64; 2],
    pub freq_pre_ms: f64,
    /// Post-stimulus length per task for the frequency pipeline.
    pub freq_post_ms: BTreeMap<TaskKind, f64>,
    pub time_pre_ms: f64,
    pub time_post_ms: f64,
    pub drop_leading: usize,
    pub average_group: usize,
    pub exclude: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            notch_hz: 50.0,
            notch_bandwidth_hz: 2.0,
            n_taps: 513,
            freq_band: [1.0, 40.0],
            time_band: [1.0, 30.0],
            freq_pre_ms: 500.0,
            freq_post_ms: TaskKind::RECORDED.iter().map(|&t| (t, 5000.0)).collect(),
            time_pre_ms: 200.0,
            time_post_ms: 800.0,
            drop_leading: 3,
            average_group: 3,
            exclude: FRONTOPOLAR.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PreprocessConfig {
    pub fn post_ms(&self, task: TaskKind) -> f64 {
        self.freq_post_ms.get(&task).copied().unwrap_or(5000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub window_len: usize,
    pub overlap: f64,
    pub bands: Vec<BandDef>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            window_len: 256,
            overlap: 0.5,
            bands: BandDef::canonical(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub alpha_band: f64,
    pub alpha_time: f64,
    pub min_interval_ms: f64,
    /// Rank-sum selection on per-subject mean band powers instead of trials.
    pub per_subject_selection: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            alpha_band: 0.01,
            alpha_time: 0.01,
            min_interval_ms: 31.0,
            per_subject_selection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub variance_threshold: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            variance_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub tasks: Vec<TaskKind>,
    pub pairs: Vec<ClassPair>,
    pub seed: u64,
    /// Fit selection masks on every subject of the pair, test subjects included.
    pub paper_faithful: bool,
    /// Majority vote over each test subject's rows.
    pub subject_vote: bool,
    pub out: PathBuf,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub spectral: SpectralConfig,
    pub stats: StatsConfig,
    pub fbcsp: FbcspConfig,
    pub pca: PcaConfig,
    pub grid: HyperGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: Pipeline::Frequency,
            tasks: TaskKind::ALL.to_vec(),
            pairs: ClassPair::ALL.to_vec(),
            seed: 42,
            paper_faithful: false,
            subject_vote: false,
            out: PathBuf::from("out"),
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            spectral: SpectralConfig::default(),
            stats: StatsConfig::default(),
            fbcsp: FbcspConfig::default(),
            pca: PcaConfig::default(),
            grid: HyperGrid::standard(),
        }
    }
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| cfg(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: RunConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(cfg("tasks: empty"));
        }
        if self.pairs.is_empty() {
            return Err(cfg("pairs: empty"));
        }
        if self.synth.n_per_class < 3 {
            return Err(cfg(format!("synth.n_per_class = {} (need >= 3)", self.synth.n_per_class)));
        }
        let p = &self.preprocess;
        if p.n_taps % 2 == 0 || p.n_taps < crate::preprocess::MIN_TAPS {
            return Err(cfg(format!("preprocess.n_taps = {} (odd, >= 31)", p.n_taps)));
        }
        for (name, band) in [("freq_band", p.freq_band), ("time_band", p.time_band)] {
            if !(band[0] > 0.0 && band[0] < band[1]) {
                return Err(cfg(format!("preprocess.{name} = {band:?}")));
            }
        }
        if !(p.notch_hz > 0.0 && p.notch_bandwidth_hz > 0.0) {
            return Err(cfg("preprocess.notch_hz / notch_bandwidth_hz must be positive"));
        }
        if p.freq_pre_ms < 0.0 || p.time_pre_ms < 0.0 || !(p.time_post_ms > 0.0) {
            return Err(cfg("preprocess: epoch bounds must be non-negative"));
        }
        if p.freq_post_ms.values().any(|&v| !(v > 0.0)) {
            return Err(cfg("preprocess.freq_post_ms: values must be positive"));
        }
        if p.average_group == 0 {
            return Err(cfg("preprocess.average_group = 0"));
        }
        let s = &self.spectral;
        if s.window_len < 2 || !(0.0..1.0).contains(&s.overlap) {
            return Err(cfg(format!(
                "spectral: window_len {} / overlap {}",
                s.window_len, s.overlap
            )));
        }
        if s.bands.is_empty() {
            return Err(cfg("spectral.bands: empty"));
        }
        for b in &s.bands {
            if !(b.f_low > 0.0 && b.f_low < b.f_high) {
                return Err(cfg(format!("spectral.bands: {} [{}, {}]", b.name, b.f_low, b.f_high)));
            }
        }
        let st = &self.stats;
        for (name, a) in [("alpha_band", st.alpha_band), ("alpha_time", st.alpha_time)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(cfg(format!("stats.{name} = {a} (need (0, 1])")));
            }
        }
        if !(st.min_interval_ms >= 0.0) {
            return Err(cfg("stats.min_interval_ms must be >= 0"));
        }
        let f = &self.fbcsp;
        if f.n_pairs == 0 || f.k == 0 || f.n_taps % 2 == 0 || f.n_taps < crate::preprocess::MIN_TAPS {
            return Err(cfg("fbcsp: n_pairs and k must be positive, n_taps odd and >= 31"));
        }
        if !(self.pca.variance_threshold > 0.0 && self.pca.variance_threshold <= 1.0) {
            return Err(cfg(format!("pca.variance_threshold = {}", self.pca.variance_threshold)));
        }
        let g = &self.grid;
        if g.kernels.is_empty() || g.c.is_empty() {
            return Err(cfg("grid: kernels and c must be non-empty"));
        }
        if g.kernels.iter().any(|k| k.uses_gamma()) && g.gamma.is_empty() {
            return Err(cfg("grid.gamma: empty"));
        }
        if g.c.iter().chain(&g.gamma).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(cfg("grid: values must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("pipeline = \"time\"\npairs = [\"DEM-NC\"]\n[stats]\nalpha_time = 0.05\n").unwrap();
        assert_eq!(c.pipeline, Pipeline::Time);
        assert_eq!(c.pairs, vec![ClassPair::new(ClassLabel::Nc, ClassLabel::Dem).unwrap()]);
        assert_eq!(c.stats.alpha_time, 0.05);
        assert_eq!(c.preprocess.n_taps, 513);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "seed = \"x\"",
            "bogus = 1",
            "[stats]\nalpha_band = 0.0",
            "[preprocess]\nn_taps = 512",
            "pairs = [\"NC-NC\"]",
            "[pca]\nvariance_threshold = 1.5",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn pair_helpers() {
        let p: ClassPair = "MCI-NC".parse().unwrap();
        assert_eq!(p.to_string(), "NC-MCI");
        assert_eq!(p.other(), ClassLabel::Dem);
    }
}

//! On-disk formats: binary recordings and epoch containers with JSON
//! sidecars, and feature-matrix CSVs.
//!
//! Both binary formats store samples as little-endian 32-bit floats and
//! everything else as little-endian integers. Strings are a `u16` byte length
//! followed by UTF-8.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::config::Pipeline;
use crate::error::{Error, Result};
use crate::signal::{ClassLabel, EpochSet, Event, FeatureMatrix, Montage, Recording, TaskKind};

pub const EPOCH_MAGIC: &[u8; 4] = b"EEGX";
pub const RECORDING_MAGIC: &[u8; 4] = b"EEGR";
pub const FORMAT_VERSION: u32 = 1;

/// Metadata stored next to every binary file as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub subject_id: String,
    pub label: ClassLabel,
    pub task: TaskKind,
    pub seed: Option<u64>,
    pub provenance: String,
}

impl Sidecar {
    pub fn for_recording(rec: &Recording, seed: Option<u64>, provenance: impl Into<String>) -> Self {
        Sidecar {
            subject_id: rec.subject_id().to_string(),
            label: rec.label(),
            task: rec.task(),
            seed,
            provenance: provenance.into(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(sidecar_path(path), text + "\n").map_err(|e| Error::io(sidecar_path(path), e))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let p = sidecar_path(path);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&p, format!("line {}: {e}", e.line())))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn samples<'a>(&mut self, values: impl Iterator<Item = &'a f64>) {
        for &v in values {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                self.path,
                format!("header truncated reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u16(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::parse(self.path, format!("{what}: {e}")))
    }
    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(Error::parse(
                self.path,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(expected)),
            ));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(self.path, format!("unsupported format version {version}")));
        }
        Ok(())
    }
    fn samples(&mut self, count: usize) -> Result<Vec<f64>> {
        let expected = count * 4;
        let actual = self.buf.len() - self.pos;
        if actual != expected {
            return Err(Error::parse(
                self.path,
                format!("payload is {actual} bytes, expected {expected}"),
            ));
        }
        let out = self.buf[self.pos..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        self.pos = self.buf.len();
        Ok(out)
    }
}

fn fs_check(fs: f64, path: &Path) -> Result<()> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::parse(path, format!("invalid sampling rate {fs}")));
    }
    Ok(())
}

/// Epochs of one subject and task. Payload is trial-major, then
/// channel-major.
pub fn encode_epochs(epochs: &EpochSet) -> Result<Vec<u8>> {
    single_source(epochs)?;
    let (t, c, n) = epochs.data().dim();
    let mut w = Writer(Vec::with_capacity(64 + t * c * n * 4));
    w.0.extend_from_slice(EPOCH_MAGIC);
    w.u32(FORMAT_VERSION);
    w.f64(epochs.montage().fs());
    w.u32(c as u32);
    w.u32(t as u32);
    w.u32(n as u32);
    w.u32(epochs.t0_offset() as u32);
    for name in epochs.montage().channel_names() {
        w.str(name);
    }
    w.samples(epochs.data().iter());
    Ok(w.0)
}

fn single_source(epochs: &EpochSet) -> Result<()> {
    let s = epochs.subject_ids().first();
    if epochs.subject_ids().iter().any(|x| Some(x) != s)
        || epochs.labels().windows(2).any(|w| w[0] != w[1])
        || epochs.tasks().windows(2).any(|w| w[0] != w[1])
    {
        return Err(Error::ShapeMismatch("an epoch container holds one subject and task".into()));
    }
    Ok(())
}

/// `path` only labels errors.
pub fn decode_epochs(bytes: &[u8], sidecar: &Sidecar, path: &Path) -> Result<EpochSet> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    r.magic(EPOCH_MAGIC)?;
    let fs = r.f64("fs")?;
    fs_check(fs, path)?;
    let c = r.u32("n_channels")? as usize;
    let t = r.u32("n_trials")? as usize;
    let n = r.u32("n_samples")? as usize;
    let t0 = r.u32("t0_offset")? as usize;
    let names = (0..c).map(|_| r.str("channel name")).collect::<Result<Vec<_>>>()?;
    let data = r.samples(t * c * n)?;
    let montage = Montage::new(names, fs).map_err(|e| Error::parse(path, e.to_string()))?;
    let data = Array3::from_shape_vec((t, c, n), data).map_err(|e| Error::parse(path, e.to_string()))?;
    EpochSet::new(
        montage,
        data,
        t0,
        vec![sidecar.label; t],
        vec![sidecar.subject_id.clone(); t],
        vec![sidecar.task; t],
    )
    .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_epochs(path: &Path, epochs: &EpochSet, sidecar: &Sidecar) -> Result<()> {
    fs::write(path, encode_epochs(epochs)?).map_err(|e| Error::io(path, e))?;
    write_sidecar(path, sidecar)
}

pub fn read_epochs(path: &Path) -> Result<EpochSet> {
    let sidecar = read_sidecar(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_epochs(&bytes, &sidecar, path)
}

/// Continuous recording: header, event table, then `channels × time`
/// samples.
pub fn encode_recording(rec: &Recording) -> Vec<u8> {
    let (c, n) = rec.samples().dim();
    let mut w = Writer(Vec::with_capacity(64 + c * n * 4));
    w.0.extend_from_slice(RECORDING_MAGIC);
    w.u32(FORMAT_VERSION);
    w.f64(rec.montage().fs());
    w.u32(c as u32);
    w.u64(n as u64);
    w.u32(rec.events().len() as u32);
    for name in rec.montage().channel_names() {
        w.str(name);
    }
    for e in rec.events() {
        w.u64(e.onset as u64);
        w.u32(e.trial as u32);
    }
    w.samples(rec.samples().iter());
    w.0
}

pub fn decode_recording(bytes: &[u8], sidecar: &Sidecar, path: &Path) -> Result<Recording> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    r.magic(RECORDING_MAGIC)?;
    let fs = r.f64("fs")?;
    fs_check(fs, path)?;
    let c = r.u32("n_channels")? as usize;
    let n = r.u64("n_samples")? as usize;
    let n_events = r.u32("n_events")? as usize;
    let names = (0..c).map(|_| r.str("channel name")).collect::<Result<Vec<_>>>()?;
    let events = (0..n_events)
        .map(|_| {
            Ok(Event {
                onset: r.u64("event onset")? as usize,
                trial: r.u32("event trial")? as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = r.samples(c * n)?;
    let montage = Montage::new(names, fs).map_err(|e| Error::parse(path, e.to_string()))?;
    let samples = Array2::from_shape_vec((c, n), data).map_err(|e| Error::parse(path, e.to_string()))?;
    Recording::new(montage, samples, events, sidecar.subject_id.clone(), sidecar.label, sidecar.task)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_recording(path: &Path, rec: &Recording, sidecar: &Sidecar) -> Result<()> {
    fs::write(path, encode_recording(rec)).map_err(|e| Error::io(path, e))?;
    write_sidecar(path, sidecar)
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let sidecar = read_sidecar(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_recording(&bytes, &sidecar, path)
}

pub const MANIFEST: &str = "manifest.json";

/// Index of a directory written by one CLI stage. File names are relative
/// to the directory and listed in row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub pipeline: Option<Pipeline>,
    pub seed: Option<u64>,
    pub fs: Option<f64>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(kind: &str) -> Self {
        Manifest {
            kind: kind.into(),
            pipeline: None,
            seed: None,
            fs: None,
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }

    /// Reads `dir/manifest.json` and checks its kind.
    pub fn read(dir: &Path, kind: &str) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&p, format!("line {}: {e}", e.line())))?;
        if m.kind != kind {
            return Err(Error::parse(&p, format!("manifest kind `{}`, expected `{kind}`", m.kind)));
        }
        Ok(m)
    }

    pub fn paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.files.iter().map(|f| dir.join(f)).collect()
    }
}

/// Feature rows as CSV: `subject_id,label,task,<feature names...>`.
pub fn write_features(path: &Path, fm: &FeatureMatrix, task: TaskKind) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
    let mut header = vec!["subject_id".to_string(), "label".into(), "task".into()];
    header.extend(fm.names().iter().cloned());
    w.write_record(&header).map_err(|e| Error::io(path, e))?;
    for (r, row) in fm.values().rows().into_iter().enumerate() {
        let mut rec = vec![
            fm.subject_ids()[r].clone(),
            fm.labels()[r].to_string(),
            task.to_string(),
        ];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_features`]. Returns the task of the
/// first row.
pub fn read_features(path: &Path) -> Result<(FeatureMatrix, TaskKind)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let header = rd.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    if header.len() < 4 || &header[0] != "subject_id" || &header[1] != "label" || &header[2] != "task" {
        return Err(Error::parse(path, "line 1: expected subject_id,label,task,<features>"));
    }
    let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let (mut subjects, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
    let mut task = None;
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        let at = |msg: String| Error::parse(path, format!("line {line}: {msg}"));
        subjects.push(rec[0].to_string());
        labels.push(rec[1].parse::<ClassLabel>().map_err(|e| at(e.to_string()))?);
        let t: TaskKind = rec[2].parse().map_err(|e: Error| at(e.to_string()))?;
        if *task.get_or_insert(t) != t {
            return Err(at(format!("task {t} differs from earlier rows")));
        }
        for v in rec.iter().skip(3) {
            values.push(v.parse::<f64>().map_err(|e| at(format!("`{v}`: {e}")))?);
        }
    }
    let n = subjects.len();
    let values = Array2::from_shape_vec((n, names.len()), values).map_err(|e| Error::parse(path, e.to_string()))?;
    let fm = FeatureMatrix::new(names, values, labels, subjects).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok((fm, task.ok_or_else(|| Error::parse(path, "no rows"))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epochs() -> EpochSet {
        let montage = Montage::new(vec!["Cz".into(), "Pz".into()], 256.0).unwrap();
        let data = Array3::from_shape_fn((3, 2, 5), |(t, c, s)| (t * 100 + c * 10 + s) as f64 * 0.5);
        EpochSet::new(
            montage,
            data,
            1,
            vec![ClassLabel::Mci; 3],
            vec!["MCI04".into(); 3],
            vec![TaskKind::Verp; 3],
        )
        .unwrap()
    }

    fn sidecar() -> Sidecar {
        Sidecar {
            subject_id: "MCI04".into(),
            label: ClassLabel::Mci,
            task: TaskKind::Verp,
            seed: Some(3),
            provenance: "test".into(),
        }
    }

    #[test]
    fn epoch_round_trip() {
        let e = epochs();
        let bytes = encode_epochs(&e).unwrap();
        assert_eq!(&bytes[..4], EPOCH_MAGIC);
        assert_eq!(decode_epochs(&bytes, &sidecar(), Path::new("x")).unwrap(), e);
    }

    #[test]
    fn truncated_payload_names_sizes() {
        let bytes = encode_epochs(&epochs()).unwrap();
        let err = decode_epochs(&bytes[..bytes.len() - 6], &sidecar(), Path::new("x.eegx")).unwrap_err();
        assert_eq!(err.kind(), "ParseError");
        let msg = err.to_string();
        assert!(msg.contains("114 bytes") && msg.contains("expected 120"), "{msg}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_epochs(&epochs()).unwrap();
        bytes[0] = b'Z';
        assert!(decode_epochs(&bytes, &sidecar(), Path::new("x")).unwrap_err().to_string().contains("magic"));
        let mut bytes = encode_epochs(&epochs()).unwrap();
        bytes[4] = 9;
        assert!(decode_epochs(&bytes, &sidecar(), Path::new("x")).unwrap_err().to_string().contains("version"));
    }
}

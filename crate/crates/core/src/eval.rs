//! Leave-two-subjects-out cross-validation, metrics and report assembly.
//!
//! Every fold-dependent stage (selection masks, FBCSP or PCA, scaler, grid
//! search, final SVM) is fitted from train and validation rows only. The
//! fitted state is returned as a [`FittedFold`] so tests can check that it
//! does not move when test rows change.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassPair, Pipeline, RunConfig};
use crate::error::{Error, Result};
use crate::fbcsp::FbcspModel;
use crate::ml::grid::fit_params;
use crate::ml::{grid_search, pca_fit, pca_transform, PcaModel, StandardScaler, SvmModel, SvmParams};
use crate::pipeline::{prepare_freq, prepare_time, stack_freq, stack_time, FreqTaskData, TimeTaskData};
use crate::signal::{ClassLabel, FeatureMatrix, Recording, TaskKind};
use crate::synth::{subject_specs, Generator, SubjectSpec};
use crate::stats::{kruskal_wallis_columns, select_feature_indices, significant_intervals};

const FOLD_STREAM: u64 = 0xf0;
const PERMUTE_STREAM: u64 = 0xf1;

/// Subjects of one fold, one entry per class in pair order for test and
/// validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    pub train_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Fold `i` tests the `i`-th subject of each class after a seeded shuffle.
/// One random remaining subject per class validates; the rest train. A
/// smaller class cycles through its subjects.
pub fn plan_ltocv(classes: &[(ClassLabel, Vec<String>)], seed: u64) -> Result<FoldPlan> {
    if classes.len() != 2 {
        return Err(Error::NotTwoClasses(classes.len()));
    }
    for (label, ids) in classes {
        if ids.len() < 3 {
            return Err(Error::TooFewSubjects {
                label: label.to_string(),
                have: ids.len(),
                required: 3,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FOLD_STREAM);
    let shuffled: Vec<Vec<String>> = classes
        .iter()
        .map(|(_, ids)| {
            let mut v = ids.clone();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let n_folds = shuffled.iter().map(Vec::len).max().unwrap_or(0);
    let mut folds = Vec::with_capacity(n_folds);
    for i in 0..n_folds {
        let mut fold = Fold {
            test_subjects: Vec::new(),
            val_subjects: Vec::new(),
            train_subjects: Vec::new(),
        };
        for ids in &shuffled {
            let t = i % ids.len();
            let mut rest: Vec<&String> = ids.iter().enumerate().filter(|&(k, _)| k != t).map(|(_, s)| s).collect();
            let v = rng.random_range(0..rest.len());
            fold.test_subjects.push(ids[t].clone());
            fold.val_subjects.push(rest.remove(v).clone());
            fold.train_subjects.extend(rest.into_iter().cloned());
        }
        folds.push(fold);
    }
    Ok(FoldPlan { folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

pub fn metrics(pred: &[ClassLabel], truth: &[ClassLabel], positive: ClassLabel) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0.0, 0.0, 0.0, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1;
        }
        match (p == positive, t == positive) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: correct as f64 / pred.len() as f64,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> MeanSe {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanSe { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return MeanSe { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanSe { mean, se: (var / n).sqrt() }
    }
}

/// Column-wise concatenation with names prefixed by task. A single input is
/// returned unchanged.
pub fn combine_tasks(parts: &[(TaskKind, &FeatureMatrix)]) -> Result<FeatureMatrix> {
    let (_, first) = *parts.first().ok_or(Error::Empty)?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    for (task, fm) in &parts[1..] {
        if fm.subject_ids() != first.subject_ids() || fm.labels() != first.labels() {
            return Err(Error::SubjectMismatch(format!("{task} rows do not align with {}", parts[0].0)));
        }
    }
    let names = parts
        .iter()
        .flat_map(|(task, fm)| fm.names().iter().map(move |n| format!("{task}/{n}")))
        .collect();
    let views: Vec<_> = parts.iter().map(|(_, fm)| fm.values().view()).collect();
    let values = concatenate(Axis(1), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    FeatureMatrix::new(names, values, first.labels().to_vec(), first.subject_ids().to_vec())
}

/// Features of one task (or the combined set) ready for cross-validation.
#[derive(Debug, Clone)]
pub enum EvalInput<'a> {
    /// One entry per task; several for the combined model.
    Frequency(Vec<Cow<'a, FreqTaskData>>),
    Time(Cow<'a, TimeTaskData>),
}

impl<'a> EvalInput<'a> {
    pub fn frequency(parts: Vec<Cow<'a, FreqTaskData>>) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty)?;
        for p in &parts[1..] {
            if p.band_power.subject_ids() != first.band_power.subject_ids()
                || p.band_power.labels() != first.band_power.labels()
            {
                return Err(Error::SubjectMismatch(format!(
                    "{} rows do not align with {}",
                    p.task, first.task
                )));
            }
        }
        Ok(EvalInput::Frequency(parts))
    }

    pub fn pipeline(&self) -> Pipeline {
        match self {
            EvalInput::Frequency(_) => Pipeline::Frequency,
            EvalInput::Time(_) => Pipeline::Time,
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            EvalInput::Frequency(parts) if parts.len() > 1 => TaskKind::Combined4,
            EvalInput::Frequency(parts) => parts[0].task,
            EvalInput::Time(d) => d.task,
        }
    }

    fn rows(&self) -> &FeatureMatrix {
        match self {
            EvalInput::Frequency(parts) => &parts[0].band_power,
            EvalInput::Time(d) => &d.features,
        }
    }

    pub fn labels(&self) -> &[ClassLabel] {
        self.rows().labels()
    }

    pub fn subject_ids(&self) -> &[String] {
        self.rows().subject_ids()
    }

    pub fn n_rows(&self) -> usize {
        self.rows().n_rows()
    }

    /// Feature count seen by the selection stage.
    pub fn features_pre_selection(&self) -> usize {
        match self {
            EvalInput::Frequency(parts) => parts.iter().map(|p| p.band_power.n_features()).sum(),
            EvalInput::Time(d) => d.features.n_features(),
        }
    }

    /// Subjects of `label` in row order.
    pub fn subjects_of(&self, label: ClassLabel) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.subject_ids()
            .iter()
            .zip(self.labels())
            .filter(|&(s, &l)| l == label && seen.insert(s.clone()))
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Same features with the pair's subject labels shuffled by a seeded
    /// permutation. Rows of the third class keep their labels.
    pub fn with_permuted_labels(&self, pair: ClassPair, seed: u64) -> Result<EvalInput<'static>> {
        let mut subjects = self.subjects_of(pair.low);
        subjects.extend(self.subjects_of(pair.high));
        let mut labels: Vec<ClassLabel> = subjects
            .iter()
            .map(|s| {
                let r = self.subject_ids().iter().position(|x| x == s).expect("subject present");
                self.labels()[r]
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PERMUTE_STREAM);
        labels.shuffle(&mut rng);
        let map: BTreeMap<&String, ClassLabel> = subjects.iter().zip(labels).collect();
        let relabel = |fm: &FeatureMatrix| -> Result<FeatureMatrix> {
            let new = fm
                .subject_ids()
                .iter()
                .zip(fm.labels())
                .map(|(s, &l)| map.get(s).copied().unwrap_or(l))
                .collect();
            fm.clone().with_labels(new)
        };
        Ok(match self {
            EvalInput::Frequency(parts) => EvalInput::Frequency(
                parts
                    .iter()
                    .map(|p| {
                        Ok(Cow::Owned(FreqTaskData {
                            band_power: relabel(&p.band_power)?,
                            ..p.as_ref().clone()
                        }))
                    })
                    .collect::<Result<_>>()?,
            ),
            EvalInput::Time(d) => EvalInput::Time(Cow::Owned(TimeTaskData {
                features: relabel(&d.features)?,
                ..d.as_ref().clone()
            })),
        })
    }
}

/// Fitted state of one selection/projection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedStage {
    Frequency {
        task: TaskKind,
        /// Channel indices per band.
        channel_masks: Vec<Vec<usize>>,
        fbcsp: FbcspModel,
    },
    Time {
        /// Surviving feature columns.
        kept: Vec<usize>,
        pca: PcaModel,
    },
}

/// Everything one fold learned. A pure function of train and validation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFold {
    pub stages: Vec<FittedStage>,
    pub scaler: StandardScaler,
    pub params: SvmParams,
    pub val_accuracy: f64,
    pub model: SvmModel,
    pub pair: ClassPair,
    /// Features surviving the statistical mask.
    pub n_selected: usize,
    pub warnings: Vec<String>,
}

fn rows_of(input: &EvalInput<'_>, subjects: &[String]) -> Vec<usize> {
    let set: BTreeSet<&String> = subjects.iter().collect();
    input
        .subject_ids()
        .iter()
        .enumerate()
        .filter(|(_, s)| set.contains(s))
        .map(|(r, _)| r)
        .collect()
}

fn signed(labels: &[ClassLabel], rows: &[usize], pair: ClassPair) -> Vec<f64> {
    rows.iter().map(|&r| if labels[r] == pair.high { 1.0 } else { -1.0 }).collect()
}

/// Per-subject means of every column, one row per subject in first-seen order.
fn subject_means(fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut order: Vec<&String> = Vec::new();
    let mut groups: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (r, s) in fm.subject_ids().iter().enumerate() {
        groups.entry(s).or_insert_with(|| {
            order.push(s);
            Vec::new()
        });
        groups.get_mut(s).expect("inserted").push(r);
    }
    let mut values = Array2::zeros((order.len(), fm.n_features()));
    let mut labels = Vec::with_capacity(order.len());
    for (i, s) in order.iter().enumerate() {
        let rows = &groups[s];
        let mean = fm.values().select(Axis(0), rows).mean_axis(Axis(0)).expect("non-empty");
        values.row_mut(i).assign(&mean);
        labels.push(fm.labels()[rows[0]]);
    }
    FeatureMatrix::new(
        fm.names().to_vec(),
        values,
        labels,
        order.into_iter().cloned().collect(),
    )
}

fn fit_frequency_stage(
    part: &FreqTaskData,
    train_rows: &[usize],
    mask_rows: &[usize],
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(FittedStage, usize)> {
    let n_bands = part.moments.bands.len();
    let n_ch = part.channels.len();
    if part.band_power.n_features() != n_ch * n_bands {
        return Err(Error::ShapeMismatch(format!(
            "{} band-power columns for {n_ch} channels × {n_bands} bands",
            part.band_power.n_features()
        )));
    }
    let sel = part.band_power.select_rows(mask_rows);
    let sel = if cfg.stats.per_subject_selection { subject_means(&sel)? } else { sel };
    let indices = match select_feature_indices(&sel, cfg.stats.alpha_band) {
        Ok(v) => v,
        Err(Error::NoFeatureSurvives(a)) => {
            warnings.push(format!("{}: no band-power feature below alpha {a}; using all", part.task));
            (0..sel.n_features()).collect()
        }
        Err(e) => return Err(e),
    };
    let min_channels = 2 * cfg.fbcsp.n_pairs;
    let masks: Vec<Vec<usize>> = (0..n_bands)
        .map(|b| {
            let mask: Vec<usize> = (0..n_ch).filter(|c| indices.contains(&(c * n_bands + b))).collect();
            if mask.len() < min_channels {
                warnings.push(format!(
                    "{}: band {} keeps {} channels, below {min_channels}; using all",
                    part.task,
                    part.moments.bands[b].name,
                    mask.len()
                ));
                (0..n_ch).collect()
            } else {
                mask
            }
        })
        .collect();
    let labels: Vec<ClassLabel> = train_rows.iter().map(|&r| part.band_power.labels()[r]).collect();
    let (fbcsp, _) = FbcspModel::fit(&part.moments.select(train_rows), &labels, &masks, &cfg.fbcsp)?;
    Ok((
        FittedStage::Frequency {
            task: part.task,
            channel_masks: masks,
            fbcsp,
        },
        indices.len(),
    ))
}

fn fit_time_stage(
    data: &TimeTaskData,
    train_rows: &[usize],
    kw_rows: &[usize],
    cfg: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(FittedStage, usize)> {
    let fm = &data.features;
    let groups: Vec<usize> = kw_rows.iter().map(|&r| fm.labels()[r].index()).collect();
    let present: BTreeSet<usize> = groups.iter().copied().collect();
    let mut kept = Vec::new();
    if present.len() < ClassLabel::ALL.len() {
        warnings.push(format!("{}: a class is absent from the interval test; using all features", data.task));
    } else {
        let p = kruskal_wallis_columns(fm.values().select(Axis(0), kw_rows).view(), &groups, ClassLabel::ALL.len())?;
        let nt = data.n_times;
        for s in 0..data.n_series() {
            let mask = significant_intervals(&p[s * nt..(s + 1) * nt], data.fs, cfg.stats.alpha_time, cfg.stats.min_interval_ms);
            for (a, b) in mask.intervals {
                kept.extend(s * nt + a..s * nt + b);
            }
        }
        if kept.is_empty() {
            warnings.push(format!("{}: no significant interval; using all features", data.task));
        }
    }
    if kept.is_empty() {
        kept = (0..fm.n_features()).collect();
    }
    let x = fm.values().select(Axis(0), train_rows).select(Axis(1), &kept);
    let pca = pca_fit(x.view(), cfg.pca.variance_threshold)?;
    let n = kept.len();
    Ok((FittedStage::Time { kept, pca }, n))
}

/// Applies fitted stages to `rows`, stacking stage outputs column-wise.
pub fn apply_stages(stages: &[FittedStage], input: &EvalInput<'_>, rows: &[usize]) -> Result<Array2<f64>> {
    let outputs: Vec<Array2<f64>> = match input {
        EvalInput::Frequency(parts) => {
            if parts.len() != stages.len() {
                return Err(Error::LengthMismatch(parts.len(), stages.len()));
            }
            stages
                .iter()
                .zip(parts)
                .map(|(stage, part)| match stage {
                    FittedStage::Frequency { task, fbcsp, .. } if *task == part.task => {
                        fbcsp.transform(&part.moments.select(rows))
                    }
                    _ => Err(Error::DimensionMismatch("stage does not match the task data".into())),
                })
                .collect::<Result<_>>()?
        }
        EvalInput::Time(data) => match stages {
            [FittedStage::Time { kept, pca }] => {
                let x = data.features.values().select(Axis(0), rows).select(Axis(1), kept);
                vec![pca_transform(pca, x.view())?]
            }
            _ => return Err(Error::DimensionMismatch("expected one time stage".into())),
        },
    };
    let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Fits every stage of one fold. Test rows are never read.
pub fn fit_fold(input: &EvalInput<'_>, fold: &Fold, pair: ClassPair, cfg: &RunConfig) -> Result<FittedFold> {
    let labels = input.labels();
    let train_rows = rows_of(input, &fold.train_subjects);
    let val_rows = rows_of(input, &fold.val_subjects);
    let pair_rows: Vec<usize> = (0..input.n_rows()).filter(|&r| pair.contains(labels[r])).collect();
    let mut warnings = Vec::new();

    let (stages, n_selected) = match input {
        EvalInput::Frequency(parts) => {
            let mask_rows = if cfg.paper_faithful { &pair_rows } else { &train_rows };
            let mut n = 0;
            let stages = parts
                .iter()
                .map(|part| {
                    let (s, k) = fit_frequency_stage(part, &train_rows, mask_rows, cfg, &mut warnings)?;
                    n += k;
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            (stages, n)
        }
        EvalInput::Time(data) => {
            let kw_rows: Vec<usize> = if cfg.paper_faithful {
                (0..input.n_rows()).collect()
            } else {
                let other = pair.other();
                let mut rows: Vec<usize> = train_rows.clone();
                rows.extend((0..input.n_rows()).filter(|&r| labels[r] == other));
                rows.sort_unstable();
                rows
            };
            let (s, n) = fit_time_stage(data, &train_rows, &kw_rows, cfg, &mut warnings)?;
            (vec![s], n)
        }
    };

    let x_train = apply_stages(&stages, input, &train_rows)?;
    let x_val = apply_stages(&stages, input, &val_rows)?;
    let scaler = StandardScaler::fit(x_train.view())?;
    let s_train = scaler.transform(x_train.view())?;
    let s_val = scaler.transform(x_val.view())?;
    let y_train = signed(labels, &train_rows, pair);
    let y_val = signed(labels, &val_rows, pair);
    let grid = grid_search(&cfg.grid, s_train.view(), &y_train, s_val.view(), &y_val)?;

    let x_all = concatenate(Axis(0), &[s_train.view(), s_val.view()]).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let y_all: Vec<f64> = y_train.iter().chain(&y_val).copied().collect();
    let model = fit_params(x_all.view(), &y_all, &grid.best)?;
    if !model.converged {
        warnings.push(format!("final SVM stopped at the iteration limit ({} iterations)", model.iterations));
    }
    Ok(FittedFold {
        stages,
        scaler,
        params: grid.best,
        val_accuracy: grid.best_score,
        model,
        pair,
        n_selected,
        warnings,
    })
}

impl FittedFold {
    pub fn predict(&self, input: &EvalInput<'_>, rows: &[usize]) -> Result<Vec<ClassLabel>> {
        let x = apply_stages(&self.stages, input, rows)?;
        let x = self.scaler.transform(x.view())?;
        Ok(self
            .model
            .predict(x.view())?
            .into_iter()
            .map(|y| if y > 0.0 { self.pair.high } else { self.pair.low })
            .collect())
    }

    pub fn n_model_features(&self) -> usize {
        self.scaler.mean.len()
    }
}

/// Majority label per subject; ties go to the more severe class.
pub fn subject_vote(subjects: &[String], pred: &[ClassLabel], pair: ClassPair) -> BTreeMap<String, ClassLabel> {
    let positive = pair.high;
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (s, &p) in subjects.iter().zip(pred) {
        let c = counts.entry(s.clone()).or_default();
        if p == positive {
            c.0 += 1;
        } else {
            c.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(s, (pos, neg))| (s, if pos >= neg { positive } else { pair.low }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
    pub n_train_subjects: usize,
    pub n_test_rows: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub params: SvmParams,
    pub val_accuracy: f64,
    pub n_selected: usize,
    pub n_model_features: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pipeline: Pipeline,
    pub pair: ClassPair,
    pub task: TaskKind,
    pub features_pre_selection: usize,
    pub accuracy: MeanSe,
    pub f1: MeanSe,
    pub folds: Vec<FoldResult>,
}

impl EvalReport {
    pub fn warnings(&self) -> impl Iterator<Item = (usize, &str)> {
        self.folds.iter().flat_map(|f| f.warnings.iter().map(move |w| (f.fold, w.as_str())))
    }
}

fn run_fold(input: &EvalInput<'_>, index: usize, fold: &Fold, pair: ClassPair, cfg: &RunConfig) -> Result<FoldResult> {
    let fitted = fit_fold(input, fold, pair, cfg)?;
    let test_rows = rows_of(input, &fold.test_subjects);
    let pred = fitted.predict(input, &test_rows)?;
    let truth: Vec<ClassLabel> = test_rows.iter().map(|&r| input.labels()[r]).collect();
    let m = if cfg.subject_vote {
        let subjects: Vec<String> = test_rows.iter().map(|&r| input.subject_ids()[r].clone()).collect();
        let votes = subject_vote(&subjects, &pred, pair);
        let (p, t): (Vec<_>, Vec<_>) = votes
            .iter()
            .map(|(s, &v)| {
                let r = test_rows[subjects.iter().position(|x| x == s).expect("voted subject")];
                (v, input.labels()[r])
            })
            .unzip();
        metrics(&p, &t, pair.high)?
    } else {
        metrics(&pred, &truth, pair.high)?
    };
    for w in &fitted.warnings {
        log::warn!("{} {} {pair} fold {index}: {w}", input.pipeline(), input.task());
    }
    Ok(FoldResult {
        fold: index,
        test_subjects: fold.test_subjects.clone(),
        val_subjects: fold.val_subjects.clone(),
        n_train_subjects: fold.train_subjects.len(),
        n_test_rows: test_rows.len(),
        accuracy: m.accuracy,
        f1: m.f1,
        params: fitted.params,
        val_accuracy: fitted.val_accuracy,
        n_selected: fitted.n_selected,
        n_model_features: fitted.n_model_features(),
        warnings: fitted.warnings,
    })
}

/// Runs every fold of one pair on prepared features. Folds run in parallel;
/// results are kept in fold order.
pub fn evaluate_input(input: &EvalInput<'_>, pair: ClassPair, cfg: &RunConfig) -> Result<EvalReport> {
    let classes = vec![
        (pair.low, input.subjects_of(pair.low)),
        (pair.high, input.subjects_of(pair.high)),
    ];
    let plan = plan_ltocv(&classes, cfg.seed)?;
    let folds: Vec<FoldResult> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            run_fold(input, i, fold, pair, cfg).map_err(|e| Error::Fold {
                fold: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let f1: Vec<f64> = folds.iter().map(|f| f.f1).collect();
    let report = EvalReport {
        pipeline: input.pipeline(),
        pair,
        task: input.task(),
        features_pre_selection: input.features_pre_selection(),
        accuracy: MeanSe::of(&acc),
        f1: MeanSe::of(&f1),
        folds,
    };
    log::info!(
        "{} {} {pair}: accuracy {:.3} ± {:.3}, F1 {:.3} ± {:.3}",
        report.pipeline,
        report.task,
        report.accuracy.mean,
        report.accuracy.se,
        report.f1.mean,
        report.f1.se
    );
    Ok(report)
}

/// Prepared features for every subject, per task and pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub freq: BTreeMap<TaskKind, FreqTaskData>,
    pub time: BTreeMap<TaskKind, TimeTaskData>,
}

impl Cohort {
    /// Loads `n` recordings through `load` and reduces each to compact
    /// features as soon as it is read. Row order follows `0..n`.
    pub fn prepare<F>(n: usize, load: F, pipelines: &[Pipeline], cfg: &RunConfig) -> Result<Cohort>
    where
        F: Fn(usize) -> Result<Recording> + Sync,
    {
        type Part = (TaskKind, Option<FreqTaskData>, Option<TimeTaskData>);
        let parts: Vec<Part> = (0..n)
            .into_par_iter()
            .map(|i| {
                let rec = load(i)?;
                let freq = pipelines
                    .contains(&Pipeline::Frequency)
                    .then(|| prepare_freq(&rec, cfg))
                    .transpose()?;
                let time = pipelines
                    .contains(&Pipeline::Time)
                    .then(|| prepare_time(&rec, cfg))
                    .transpose()?;
                log::debug!("prepared {} {}", rec.subject_id(), rec.task());
                Ok((rec.task(), freq, time))
            })
            .collect::<Result<_>>()?;
        let mut freq: BTreeMap<TaskKind, Vec<FreqTaskData>> = BTreeMap::new();
        let mut time: BTreeMap<TaskKind, Vec<TimeTaskData>> = BTreeMap::new();
        for (task, f, t) in parts {
            if let Some(f) = f {
                freq.entry(task).or_default().push(f);
            }
            if let Some(t) = t {
                time.entry(task).or_default().push(t);
            }
        }
        Ok(Cohort {
            freq: freq.into_iter().map(|(k, v)| Ok((k, stack_freq(&v)?))).collect::<Result<_>>()?,
            time: time.into_iter().map(|(k, v)| Ok((k, stack_time(&v)?))).collect::<Result<_>>()?,
        })
    }

    /// Features for `task`; the combined task uses every recorded task.
    pub fn input(&self, pipeline: Pipeline, task: TaskKind) -> Result<EvalInput<'_>> {
        let tasks: Vec<TaskKind> = if task.is_recorded() {
            vec![task]
        } else {
            TaskKind::RECORDED.to_vec()
        };
        let missing = |t: TaskKind| Error::Config(format!("task {t} not prepared for the {pipeline} pipeline"));
        match pipeline {
            Pipeline::Frequency => EvalInput::frequency(
                tasks
                    .iter()
                    .map(|&t| self.freq.get(&t).map(Cow::Borrowed).ok_or_else(|| missing(t)))
                    .collect::<Result<_>>()?,
            ),
            Pipeline::Time => {
                if tasks.len() == 1 {
                    let d = self.time.get(&task).ok_or_else(|| missing(task))?;
                    return Ok(EvalInput::Time(Cow::Borrowed(d)));
                }
                let parts: Vec<&TimeTaskData> = tasks
                    .iter()
                    .map(|&t| self.time.get(&t).ok_or_else(|| missing(t)))
                    .collect::<Result<_>>()?;
                let fms: Vec<(TaskKind, &FeatureMatrix)> = parts.iter().map(|d| (d.task, &d.features)).collect();
                let first = parts[0];
                if parts.iter().any(|d| d.n_times != first.n_times || d.fs != first.fs) {
                    return Err(Error::SubjectMismatch("tasks differ in epoch length".into()));
                }
                Ok(EvalInput::Time(Cow::Owned(TimeTaskData {
                    task: TaskKind::Combined4,
                    features: combine_tasks(&fms)?,
                    n_times: first.n_times,
                    fs: first.fs,
                })))
            }
        }
    }
}

/// Recorded tasks needed to evaluate `tasks`, in canonical order.
pub fn recorded_tasks(tasks: &[TaskKind]) -> Vec<TaskKind> {
    TaskKind::RECORDED
        .into_iter()
        .filter(|t| tasks.contains(t) || tasks.contains(&TaskKind::Combined4))
        .collect()
}

impl Cohort {
    /// Generates and prepares `n_per_class` subjects per class, one recording
    /// at a time.
    pub fn synthesize(
        generator: &Generator,
        n_per_class: usize,
        tasks: &[TaskKind],
        seed: u64,
        pipelines: &[Pipeline],
        cfg: &RunConfig,
    ) -> Result<Cohort> {
        let tasks = recorded_tasks(tasks);
        let jobs: Vec<(SubjectSpec, TaskKind)> = subject_specs(n_per_class)
            .into_iter()
            .flat_map(|s| tasks.iter().map(move |&t| (s.clone(), t)))
            .collect();
        Cohort::prepare(jobs.len(), |i| generator.generate(&jobs[i].0, jobs[i].1, seed), pipelines, cfg)
    }
}

/// One pair of one task through one pipeline.
pub fn run_pair(cohort: &Cohort, pair: ClassPair, task: TaskKind, pipeline: Pipeline, cfg: &RunConfig) -> Result<EvalReport> {
    evaluate_input(&cohort.input(pipeline, task)?, pair, cfg)
}

/// Every configured task and pair, task-major.
pub fn evaluate_all(cohort: &Cohort, cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let mut out = Vec::new();
    for &task in &cfg.tasks {
        for &pair in &cfg.pairs {
            out.push(run_pair(cohort, pair, task, cfg.pipeline, cfg)?);
        }
    }
    Ok(out)
}

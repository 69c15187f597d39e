//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use eegcog::config::{ClassPair, Pipeline, RunConfig};
use eegcog::eval::{evaluate_input, fit_fold, plan_ltocv, Cohort, EvalInput};
use eegcog::fbcsp::{class_covariance, csp_features, csp_fit};
use eegcog::ml::svm::{svm_train, Kernel, DEFAULT_TOLERANCE};
use eegcog::ml::HyperGrid;
use eegcog::pipeline::{FreqTaskData, TimeTaskData};
use eegcog::preprocess::{design_bandpass, design_notch, filtfilt};
use eegcog::signal::{ClassLabel, FeatureMatrix, TaskKind};
use eegcog::spectral::welch;
use eegcog::stats::{kruskal_wallis, rank_sum, TestMethod};
use eegcog::synth::{Generator, ProfileSet};

// tolerances and limits
const STATS_LIMIT: Duration = Duration::from_secs(60);
const DSP_LIMIT: Duration = Duration::from_secs(30);
const CSP_LIMIT: Duration = Duration::from_secs(60);
const SVM_LIMIT: Duration = Duration::from_secs(120);
const E2E_LIMIT: Duration = Duration::from_secs(600);
const DETERMINISM_LIMIT: Duration = Duration::from_secs(600);
const PERMUTATION_SAMPLES: usize = 50_000;
const PERMUTATION_TOL: f64 = 0.02;
const KW_EXPECTED_H: f64 = 7.2;
const SINE_PARSEVAL_TOL: f64 = 0.05;
const NOISE_PARSEVAL_TOL: f64 = 0.10;
const NOISE_TRIALS: usize = 100;
const CSP_HAND_TOL: f64 = 1e-8;
const CSP_DIAG_TOL: f64 = 1e-8;
const CSP_PAIRS: usize = 100;
const MIXING_TOL: f64 = 1e-6;
const QP_STEPS: usize = 1_000_000;
const QP_TOL: f64 = 1e-3;
const SVM_PROBLEMS: usize = 24;
const FREQ_MIN_ACC: f64 = 0.90;
const TIME_MIN_ACC: f64 = 0.85;
const CHANCE_BAND: (f64, f64) = (0.35, 0.65);
const N_PER_CLASS: usize = 15;
const SEED: u64 = 42;

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, r)
}

fn report(index: usize, name: &str, out: &Outcome, elapsed: Duration, limit: Option<Duration>) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.failures.is_empty() && in_time;
    let timing = match limit {
        Some(l) => format!("{:.1}s of {}s", elapsed.as_secs_f64(), l.as_secs()),
        None => "checked on the end-to-end cohort".to_string(),
    };
    println!(
        "{} criterion {index} ({name}): {timing}{}",
        if pass { "PASS" } else { "FAIL" },
        if in_time { "" } else { " [over time limit]" }
    );
    for f in &out.failures {
        println!("    fail: {f}");
    }
    for n in &out.notes {
        println!("    ok:   {n}");
    }
    pass
}

// ---------- criterion 1: stats ----------

/// Two-sided exact p by enumerating every rank subset of size `nx`.
fn enumerated_rank_sum_p(x: &[f64], y: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let w_obs: usize = pooled.iter().enumerate().filter(|(_, p)| p.1).map(|(i, _)| i + 1).sum();
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let w: usize = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
        total += 1;
        if w <= w_obs {
            le += 1;
        }
        if w >= w_obs {
            ge += 1;
        }
    }
    ((2 * le.min(ge)) as f64 / total as f64).min(1.0)
}

/// Monte Carlo permutation p of |W − E[W]|.
fn permutation_rank_sum_p(x: &[f64], y: &[f64], r: &mut ChaCha8Rng) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut rank = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        rank[i] = (k + 1) as f64;
    }
    let mean = x.len() as f64 * (n as f64 + 1.0) / 2.0;
    let obs = (rank[..x.len()].iter().sum::<f64>() - mean).abs();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut hits = 0;
    for _ in 0..PERMUTATION_SAMPLES {
        idx.shuffle(r);
        let w: f64 = idx[..x.len()].iter().map(|&i| rank[i]).sum();
        if (w - mean).abs() >= obs - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / PERMUTATION_SAMPLES as f64
}

fn criterion_stats() -> bool {
    let t = Instant::now();
    let mut out = Outcome::new();
    let mut r = rng(1);

    let mut cases = 0;
    let mut mismatches = 0;
    for n in 4..=10 {
        for nx in 2..=n - 2 {
            for _ in 0..5 {
                let mut vals: Vec<f64> = (0..n).map(|i| i as f64 + r.random::<f64>() * 0.5).collect();
                vals.shuffle(&mut r);
                let (x, y) = vals.split_at(nx);
                let got = rank_sum(x, y).unwrap();
                cases += 1;
                if got.method != TestMethod::RankSumExact || got.p_value != enumerated_rank_sum_p(x, y) {
                    mismatches += 1;
                }
            }
        }
    }
    out.check(mismatches == 0, format!("exact rank-sum equals enumeration on {cases} tie-free cases (n+m <= 10), {mismatches} mismatches"));

    let h = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap().statistic;
    out.check((h - KW_EXPECTED_H).abs() < 1e-12, format!("KW H = {h} (expected {KW_EXPECTED_H})"));

    let mut worst: f64 = 0.0;
    for shift in [0.0, 0.5, 1.0] {
        let x: Vec<f64> = (0..15).map(|_| gauss(&mut r)).collect();
        let y: Vec<f64> = (0..15).map(|_| gauss(&mut r) + shift).collect();
        let p = rank_sum(&x, &y).unwrap();
        let mc = permutation_rank_sum_p(&x, &y, &mut r);
        worst = worst.max((p.p_value - mc).abs());
        out.check(
            p.method == TestMethod::RankSumNormal && (p.p_value - mc).abs() <= PERMUTATION_TOL,
            format!("15v15 shift {shift}: normal p {:.4} vs permutation p {:.4}", p.p_value, mc),
        );
    }
    out.notes.push(format!("largest normal-vs-permutation gap {worst:.4} (limit {PERMUTATION_TOL})"));
    report(1, "stats", &out, t.elapsed(), Some(STATS_LIMIT))
}

// ---------- criterion 2: DSP ----------

fn dtft(taps: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (re, im) = taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &h)| {
        (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
    });
    re.hypot(im)
}

fn integrated(signal: &[f64], fs: f64) -> f64 {
    let psd = welch(signal, fs, 256, 0.5).unwrap();
    psd.power.row(0).sum() * (psd.freqs[1] - psd.freqs[0])
}

fn criterion_dsp() -> bool {
    let t = Instant::now();
    let mut out = Outcome::new();
    let fs = 256.0;

    for (f, amp) in [(10.0, 1.0), (5.0, 2.0), (20.0, 0.5), (37.0, 1.0)] {
        let x: Vec<f64> = (0..1280).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let psd = welch(&x, fs, 256, 0.5).unwrap();
        let row = psd.power.row(0);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        let power = integrated(&x, fs);
        let expected = amp * amp / 2.0;
        out.check(
            psd.freqs[peak] == f && (power / expected - 1.0).abs() <= SINE_PARSEVAL_TOL,
            format!("sine {f} Hz amp {amp}: peak {} Hz, power {power:.4} vs {expected}", psd.freqs[peak]),
        );
    }

    let mut r = rng(2);
    let mean_power: f64 = (0..NOISE_TRIALS)
        .map(|_| {
            let x: Vec<f64> = (0..1280).map(|_| gauss(&mut r)).collect();
            integrated(&x, fs)
        })
        .sum::<f64>()
        / NOISE_TRIALS as f64;
    out.check(
        (mean_power - 1.0).abs() <= NOISE_PARSEVAL_TOL,
        format!("white noise: mean integrated power {mean_power:.4} over {NOISE_TRIALS} trials"),
    );

    let bp = design_bandpass(1.0, 40.0, fs, 513).unwrap();
    let (h20, h0, hny) = (dtft(bp.taps(), 20.0, fs), dtft(bp.taps(), 0.0, fs), dtft(bp.taps(), fs / 2.0, fs));
    out.check(
        (0.95..=1.05).contains(&h20) && h0 <= 0.05 && hny <= 0.1,
        format!("band-pass 1-40: |H(20)| {h20:.4}, |H(0)| {h0:.2e}, |H(fs/2)| {hny:.2e}"),
    );
    let notch = design_notch(50.0, 2.0, fs, 513).unwrap();
    let (n50, n10, n44, n56) = (
        dtft(notch.taps(), 50.0, fs),
        dtft(notch.taps(), 10.0, fs),
        dtft(notch.taps(), 44.0, fs),
        dtft(notch.taps(), 56.0, fs),
    );
    out.check(
        n50 <= 0.05 && n10 >= 0.95 && n44 >= 0.9 && n56 >= 0.9,
        format!("notch 50/2: |H(50)| {n50:.2e}, |H(10)| {n10:.4}, |H(44)| {n44:.4}, |H(56)| {n56:.4}"),
    );
    let symmetric = [bp.taps(), notch.taps()]
        .iter()
        .all(|h| (0..h.len()).all(|i| (h[i] - h[h.len() - 1 - i]).abs() <= 1e-12));
    out.check(symmetric, "kernels are symmetric");

    let x: Vec<f64> = (0..4096).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
    let y = filtfilt(&x, &bp).unwrap();
    let xcorr = |lag: isize| -> f64 {
        (0..x.len() as isize)
            .filter_map(|i| {
                let j = i + lag;
                (j >= 0 && j < y.len() as isize).then(|| x[i as usize] * y[j as usize])
            })
            .sum()
    };
    let best = (-30..=30).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
    out.check(best == 0 && y.len() == x.len(), format!("filtfilt 10 Hz cross-correlation peak at lag {best}"));
    let dc = filtfilt(&vec![1.0; 4096], &bp).unwrap();
    let rms = (dc.iter().map(|v| v * v).sum::<f64>() / dc.len() as f64).sqrt();
    out.check(rms <= 0.05, format!("DC through band-pass: output RMS {rms:.2e}"));

    report(2, "DSP", &out, t.elapsed(), Some(DSP_LIMIT))
}

// ---------- criterion 3: CSP ----------

fn random_spd(d: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d + 3), |_| gauss(r));
    a.dot(&a.t()) / (d + 3) as f64 + Array2::<f64>::eye(d) * 0.05
}

fn off_diagonal_ratio(m: &Array2<f64>) -> f64 {
    let (mut off, mut diag) = (0.0, 0.0);
    for ((i, j), v) in m.indexed_iter() {
        if i == j {
            diag += v * v;
        } else {
            off += v * v;
        }
    }
    (off / diag).sqrt()
}

fn criterion_csp() -> bool {
    let t = Instant::now();
    let mut out = Outcome::new();

    let a = Array2::from_diag(&ndarray::arr1(&[2.0, 1.0]));
    let b = Array2::from_diag(&ndarray::arr1(&[1.0, 2.0]));
    let f = csp_fit(&a, &b, 1).unwrap();
    let w = &f.filters;
    let axis_aligned = (w[[0, 1]] / w[[0, 0]]).abs() <= CSP_HAND_TOL && (w[[1, 0]] / w[[1, 1]]).abs() <= CSP_HAND_TOL;
    out.check(
        (f.eigenvalues[0] - 2.0 / 3.0).abs() <= CSP_HAND_TOL && (f.eigenvalues[1] - 1.0 / 3.0).abs() <= CSP_HAND_TOL && axis_aligned,
        format!("2x2 hand case: eigenvalues {:?}, filters {:?}", f.eigenvalues, w.as_slice().unwrap()),
    );

    let mut r = rng(3);
    let (mut worst_off, mut worst_pair, mut worst_lambda): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..CSP_PAIRS {
        let d = 2 + 2 * (k % 5);
        let (ca, cb) = (random_spd(d, &mut r), random_spd(d, &mut r));
        let f = csp_fit(&ca, &cb, d / 2).unwrap();
        let da = f.filters.dot(&ca).dot(&f.filters.t());
        let db = f.filters.dot(&cb).dot(&f.filters.t());
        worst_off = worst_off.max(off_diagonal_ratio(&da)).max(off_diagonal_ratio(&db));
        for i in 0..d {
            let s = da[[i, i]] + db[[i, i]];
            worst_pair = worst_pair.max((da[[i, i]] / s + db[[i, i]] / s - 1.0).abs());
            worst_lambda = worst_lambda.max((da[[i, i]] / s - f.eigenvalues[i]).abs());
        }
    }
    out.check(
        worst_off <= CSP_DIAG_TOL && worst_pair <= 1e-12 && worst_lambda <= CSP_DIAG_TOL,
        format!(
            "{CSP_PAIRS} random SPD pairs: off-diagonal ratio {worst_off:.2e}, pairing error {worst_pair:.2e}, eigenvalue error {worst_lambda:.2e}"
        ),
    );

    // congruent covariances from raw scatters of mixed epochs
    let d = 6;
    let epochs_a: Vec<Array2<f64>> = (0..8).map(|_| Array2::from_shape_fn((d, 200), |(c, _)| gauss(&mut r) * (1.0 + c as f64))).collect();
    let epochs_b: Vec<Array2<f64>> = (0..8).map(|_| Array2::from_shape_fn((d, 200), |(c, _)| gauss(&mut r) * (d - c) as f64)).collect();
    let mix = Array2::from_shape_fn((d, d), |(i, j)| gauss(&mut r) + if i == j { 3.0 } else { 0.0 });
    let scatter = |eps: &[Array2<f64>], m: Option<&Array2<f64>>| -> Array2<f64> {
        let mut acc = Array2::<f64>::zeros((d, d));
        for e in eps {
            let x = m.map_or(e.clone(), |m| m.dot(e));
            acc += &x.dot(&x.t());
        }
        acc / eps.len() as f64
    };
    let plain = csp_fit(&scatter(&epochs_a, None), &scatter(&epochs_b, None), 2).unwrap();
    let mixed = csp_fit(&scatter(&epochs_a, Some(&mix)), &scatter(&epochs_b, Some(&mix)), 2).unwrap();
    let mut worst: f64 = 0.0;
    for e in epochs_a.iter().chain(&epochs_b) {
        let f0 = csp_features(e.view(), &plain).unwrap();
        let f1 = csp_features(mix.dot(e).view(), &mixed).unwrap();
        worst = f0.iter().zip(&f1).fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    out.check(worst <= MIXING_TOL, format!("log-variance features under a random mixing differ by {worst:.2e}"));

    // trace-normalized class covariances are not congruent under mixing
    let mixed_a: Vec<Array2<f64>> = epochs_a.iter().map(|e| mix.dot(e)).collect();
    let mixed_b: Vec<Array2<f64>> = epochs_b.iter().map(|e| mix.dot(e)).collect();
    let fit = |a: &[Array2<f64>], b: &[Array2<f64>]| {
        csp_fit(
            &class_covariance(a.iter().map(|e| e.view())).unwrap(),
            &class_covariance(b.iter().map(|e| e.view())).unwrap(),
            2,
        )
        .unwrap()
    };
    let (plain, mixed) = (fit(&epochs_a, &epochs_b), fit(&mixed_a, &mixed_b));
    let mut normalized: f64 = 0.0;
    for (e, m) in epochs_a.iter().zip(&mixed_a).chain(epochs_b.iter().zip(&mixed_b)) {
        let f0 = csp_features(e.view(), &plain).unwrap();
        let f1 = csp_features(m.view(), &mixed).unwrap();
        normalized = f0.iter().zip(&f1).fold(normalized, |w, (a, b)| w.max((a - b).abs()));
    }
    out.notes.push(format!("through trace-normalized class covariances the same features differ by {normalized:.2e} (informational)"));

    report(3, "CSP", &out, t.elapsed(), Some(CSP_LIMIT))
}

// ---------- criterion 4: SVM ----------

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}`: `α = clip(v − μy, 0, C)`
/// with `μ` the root of a piecewise-linear decreasing function, located
/// exactly between sorted breakpoints.
fn project(v: &[f64], y: &[f64], c: f64, breaks: &mut Vec<f64>, out: &mut [f64]) {
    let g = |mu: f64| -> f64 { v.iter().zip(y).map(|(&vi, &yi)| yi * (vi - mu * yi).clamp(0.0, c)).sum() };
    breaks.clear();
    for (&vi, &yi) in v.iter().zip(y) {
        breaks.push(yi * vi);
        breaks.push(yi * (vi - c));
    }
    breaks.sort_by(f64::total_cmp);
    let mut mu = breaks[breaks.len() - 1];
    let mut prev = (breaks[0], g(breaks[0]));
    for &b in &breaks[1..] {
        let gb = g(b);
        if gb <= 0.0 {
            mu = if prev.1 == gb { b } else { prev.0 + (b - prev.0) * prev.1 / (prev.1 - gb) };
            break;
        }
        prev = (b, gb);
    }
    for ((o, &vi), &yi) in out.iter_mut().zip(v).zip(y) {
        *o = (vi - mu * yi).clamp(0.0, c);
    }
}

/// Maximizes `Σα − ½αᵀQα` over the box and `yᵀα = 0` by projected gradient.
fn brute_force_dual(q: &Array2<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let lipschitz = (0..n).map(|i| (0..n).map(|j| q[[i, j]].abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let q = q.as_standard_layout();
    let q = q.as_slice().unwrap();
    let mut alpha = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut breaks = Vec::with_capacity(2 * n);
    for _ in 0..QP_STEPS {
        for i in 0..n {
            let qa: f64 = q[i * n..(i + 1) * n].iter().zip(&alpha).map(|(a, b)| a * b).sum();
            v[i] = alpha[i] + step * (1.0 - qa);
        }
        project(&v, y, c, &mut breaks, &mut alpha);
    }
    let q = Array2::from_shape_vec((n, n), q.to_vec()).unwrap();
    let obj = objective(&q, &alpha);
    (alpha, obj)
}

fn objective(q: &Array2<f64>, alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let quad: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| alpha[i] * alpha[j] * q[[i, j]]).sum();
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn is_psd(q: &Array2<f64>) -> bool {
    // Cholesky of Q + tiny ridge
    let n = q.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = q[[i, i]] + 1e-10 - s;
                if d <= 0.0 {
                    return false;
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (q[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    true
}

fn criterion_svm() -> bool {
    let t = Instant::now();
    let mut out = Outcome::new();
    let mut r = rng(4);
    let kernels = [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }, Kernel::Sigmoid { gamma: 0.05, coef0: 0.0 }];
    let mut solved = 0;
    let mut counts = [0usize; 3];
    let (mut worst_gap, mut worst_kkt, mut worst_eq, mut worst_margin): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    while solved < SVM_PROBLEMS {
        let ki = solved % 3;
        let kernel = kernels[ki];
        let n = 6 + r.random_range(0..=6);
        let d = if ki == 2 { n + 2 } else { 2 };
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = Array2::from_shape_fn((n, d), |(i, _)| gauss(&mut r) + 0.8 * y[i]);
        let c = [0.5, 1.0, 5.0, 10.0][r.random_range(0..4)];
        let gram = Array2::from_shape_fn((n, n), |(i, j)| {
            kernel.eval(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap())
        });
        let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * gram[[i, j]]);
        if !is_psd(&q) {
            continue;
        }
        let model = svm_train(x.view(), &y, kernel, c).unwrap();
        let alpha = model.dual_coefficients(n);
        let (_, best) = brute_force_dual(&q, &y, c);
        let gap = (objective(&q, &alpha) - best).abs();
        worst_gap = worst_gap.max(gap);

        // KKT invariants recomputed from scratch
        let box_ok = alpha.iter().all(|&a| (0.0..=c).contains(&a));
        let eq = alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum::<f64>().abs();
        worst_eq = worst_eq.max(eq);
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[[i, j]] * alpha[j]).sum::<f64>() - 1.0).collect();
        let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let v = -y[i] * grad[i];
            if (y[i] > 0.0 && alpha[i] < c) || (y[i] < 0.0 && alpha[i] > 0.0) {
                up = up.max(v);
            }
            if (y[i] > 0.0 && alpha[i] > 0.0) || (y[i] < 0.0 && alpha[i] < c) {
                low = low.min(v);
            }
        }
        let kkt = (up - low).max(0.0);
        worst_kkt = worst_kkt.max(kkt);
        let dec = model.decision(x.view()).unwrap();
        for i in 0..n {
            if alpha[i] > 1e-8 && alpha[i] < c - 1e-8 {
                worst_margin = worst_margin.max((y[i] * dec[i] - 1.0).abs());
            }
        }
        out.check(
            gap <= QP_TOL && box_ok && eq <= 1e-6 && kkt <= 1.5 * DEFAULT_TOLERANCE && model.converged,
            format!("{:?} n={n} C={c}: objective gap {gap:.2e}, KKT {kkt:.2e}", kernel.kind()),
        );
        counts[ki] += 1;
        solved += 1;
    }
    out.notes.clear();
    out.notes.push(format!(
        "{solved} problems (linear {}, rbf {}, sigmoid {}): worst objective gap {worst_gap:.2e}, KKT {worst_kkt:.2e}, |Σαy| {worst_eq:.2e}, free-SV margin error {worst_margin:.2e}",
        counts[0], counts[1], counts[2]
    ));
    out.check(worst_margin <= 2.0 * DEFAULT_TOLERANCE, format!("free support vectors on the margin within {worst_margin:.2e}"));
    report(4, "SVM", &out, t.elapsed(), Some(SVM_LIMIT))
}

// ---------- criteria 5 and 6: end to end and structure ----------

fn perturb_rows(fm: &FeatureMatrix, rows: &[usize], r: &mut ChaCha8Rng) -> FeatureMatrix {
    let mut v = fm.values().clone();
    for &i in rows {
        v.row_mut(i).mapv_inplace(|x| x * (1.0 + 0.5 * gauss(r)) + 0.1 * gauss(r) * x.abs().max(1e-6));
    }
    FeatureMatrix::new(fm.names().to_vec(), v, fm.labels().to_vec(), fm.subject_ids().to_vec()).unwrap()
}

fn perturbed_input(input: &EvalInput<'_>, subjects: &[String], r: &mut ChaCha8Rng) -> EvalInput<'static> {
    let rows: Vec<usize> = (0..input.n_rows()).filter(|&i| subjects.contains(&input.subject_ids()[i])).collect();
    match input {
        EvalInput::Frequency(parts) => EvalInput::Frequency(
            parts
                .iter()
                .map(|p| {
                    let mut moments = p.moments.clone();
                    for band in &mut moments.per_band {
                        for &i in &rows {
                            band[i].scatter.mapv_inplace(|x| x * 3.0);
                            band[i].mean.mapv_inplace(|x| x + 1.0);
                        }
                    }
                    Cow::Owned(FreqTaskData {
                        band_power: perturb_rows(&p.band_power, &rows, r),
                        moments,
                        ..p.as_ref().clone()
                    })
                })
                .collect(),
        ),
        EvalInput::Time(d) => EvalInput::Time(Cow::Owned(TimeTaskData {
            features: perturb_rows(&d.features, &rows, r),
            ..d.as_ref().clone()
        })),
    }
}

fn criteria_end_to_end() -> (bool, bool) {
    let t = Instant::now();
    let mut out = Outcome::new();
    let mut structural = Outcome::new();
    let cfg = RunConfig::default();
    let task = TaskKind::MentalImagery;
    let pair = ClassPair::new(ClassLabel::Nc, ClassLabel::Dem).unwrap();
    let gen = Generator::new(ProfileSet::default_profiles()).unwrap();
    let cohort = Cohort::synthesize(&gen, N_PER_CLASS, &[task], SEED, &[Pipeline::Frequency, Pipeline::Time], &cfg).unwrap();
    let prepared = t.elapsed();

    let freq = cohort.input(Pipeline::Frequency, task).unwrap();
    let time = cohort.input(Pipeline::Time, task).unwrap();
    let mut r = rng(5);
    for (input, floor) in [(&freq, FREQ_MIN_ACC), (&time, TIME_MIN_ACC)] {
        let rep = evaluate_input(input, pair, &cfg).unwrap();
        out.check(
            rep.accuracy.mean >= floor,
            format!(
                "{} pipeline {pair}: accuracy {:.3} ± {:.3} (need >= {floor}), F1 {:.3} ± {:.3}",
                rep.pipeline, rep.accuracy.mean, rep.accuracy.se, rep.f1.mean, rep.f1.se
            ),
        );
        let permuted = input.with_permuted_labels(pair, SEED + 1).unwrap();
        let control = evaluate_input(&permuted, pair, &cfg).unwrap();
        out.check(
            (CHANCE_BAND.0..=CHANCE_BAND.1).contains(&control.accuracy.mean),
            format!("{} pipeline label-permuted control: accuracy {:.3}", rep.pipeline, control.accuracy.mean),
        );

        structural.check(rep.folds.len() == N_PER_CLASS, format!("{} pipeline ran {} folds", rep.pipeline, rep.folds.len()));
        if input.pipeline() == Pipeline::Time {
            structural.check(
                rep.features_pre_selection == 6150,
                format!("time pipeline sees {} features before selection", rep.features_pre_selection),
            );
        }

        // fitted state must not move when test rows change, and must move when train rows do
        let classes = vec![(pair.low, input.subjects_of(pair.low)), (pair.high, input.subjects_of(pair.high))];
        let plan = plan_ltocv(&classes, cfg.seed).unwrap();
        let fold = &plan.folds[0];
        let base = fit_fold(input, fold, pair, &cfg).unwrap();
        let moved_test = fit_fold(&perturbed_input(input, &fold.test_subjects, &mut r), fold, pair, &cfg).unwrap();
        let moved_train = fit_fold(&perturbed_input(input, &fold.train_subjects[..3], &mut r), fold, pair, &cfg).unwrap();
        structural.check(
            base == moved_test && base != moved_train,
            format!("{} pipeline no-leakage canary (test perturbation inert, train perturbation visible)", input.pipeline()),
        );
    }
    out.notes.push(format!("cohort generation and preparation {:.1}s", prepared.as_secs_f64()));
    let e2e = report(5, "end to end", &out, t.elapsed(), Some(E2E_LIMIT));

    let classes = vec![(pair.low, freq.subjects_of(pair.low)), (pair.high, freq.subjects_of(pair.high))];
    let plan = plan_ltocv(&classes, SEED).unwrap();
    let mut tested: Vec<&String> = plan.folds.iter().flat_map(|f| &f.test_subjects).collect();
    tested.sort();
    tested.dedup();
    let splits_ok = plan.folds.iter().all(|f| {
        let mut all: Vec<&String> = f.train_subjects.iter().chain(&f.val_subjects).chain(&f.test_subjects).collect();
        all.sort();
        all.dedup();
        let per_class = |l: ClassLabel, v: &[String]| v.iter().filter(|s| s.starts_with(l.as_str())).count();
        all.len() == 2 * N_PER_CLASS
            && [pair.low, pair.high].iter().all(|&l| {
                per_class(l, &f.train_subjects) == 13 && per_class(l, &f.val_subjects) == 1 && per_class(l, &f.test_subjects) == 1
            })
    });
    structural.check(
        plan.folds.len() == 15 && tested.len() == 2 * N_PER_CLASS && splits_ok,
        format!("{} folds, {} distinct test subjects, 13:1:1 per class and disjoint", plan.folds.len(), tested.len()),
    );
    let n_grid = HyperGrid::standard().candidates().len();
    structural.check(n_grid == 63, format!("standard grid has {n_grid} candidates"));
    let structure = report(6, "structure", &structural, Duration::ZERO, None);
    (e2e, structure)
}

// ---------- criterion 7: determinism ----------

fn criterion_determinism() -> bool {
    let t = Instant::now();
    let mut out = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    for pipeline in ["freq", "time"] {
        let mut bytes = Vec::new();
        let dest = dir.path().join(pipeline);
        for run in 0..2 {
            let status = Command::new(env!("CARGO_BIN_EXE_eegcog"))
                .args(["evaluate", "--pipeline", pipeline, "--tasks", "MI", "--seed", "7"])
                .arg("--out")
                .arg(&dest)
                .args(["--config"])
                .arg(small_config(dir.path()))
                .output()
                .unwrap();
            out.check(status.status.success(), format!("{pipeline} run {run} exit {:?}", status.status.code()));
            bytes.push((
                std::fs::read(dest.join("report.csv")).unwrap_or_default(),
                std::fs::read(dest.join("report.json")).unwrap_or_default(),
            ));
            let _ = std::fs::remove_dir_all(&dest);
        }
        out.check(
            !bytes[0].0.is_empty() && bytes[0] == bytes[1],
            format!("{pipeline}: two evaluate runs give byte-identical report.csv and report.json"),
        );
    }
    report(7, "determinism", &out, t.elapsed(), Some(DETERMINISM_LIMIT))
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    if !path.exists() {
        std::fs::write(&path, "[synth]\nn_per_class = 4\n").unwrap();
    }
    path
}

fn main() {
    let mut all = vec![criterion_stats(), criterion_dsp(), criterion_csp(), criterion_svm()];
    let (e2e, structure) = criteria_end_to_end();
    all.push(e2e);
    all.push(structure);
    all.push(criterion_determinism());
    let passed = all.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", all.len());
    if passed != all.len() {
        std::process::exit(1);
    }
}

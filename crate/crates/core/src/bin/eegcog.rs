use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Axis;

use eegcog::config::{ClassPair, Pipeline, RunConfig};
use eegcog::error::{Error, Result};
use eegcog::eval::{evaluate_all, recorded_tasks, Cohort};
use eegcog::io::{self, Manifest, Sidecar};
use eegcog::pipeline::{freq_epochs, temporal_features, time_epochs};
use eegcog::preprocess::average_consecutive;
use eegcog::report::ReportFile;
use eegcog::signal::{ClassLabel, EpochSet, FeatureMatrix, TaskKind};
use eegcog::spectral::band_power_features;
use eegcog::stats::{feature_rank_sum, kruskal_wallis_columns, significant_intervals};
use eegcog::synth::{subject_specs, Generator, ProfileSet};

/// EEG classification of cognitive decline from task recordings.
#[derive(Parser)]
#[command(name = "eegcog", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `freq` or `time`.
    #[arg(long, global = true)]
    pipeline: Option<Pipeline>,
    /// Comma-separated, e.g. `MI,VERP,ALL`.
    #[arg(long, global = true, value_delimiter = ',')]
    tasks: Option<Vec<TaskKind>>,
    /// Comma-separated, e.g. `NC-DEM,MCI-DEM`.
    #[arg(long, global = true, value_delimiter = ',')]
    pairs: Option<Vec<ClassPair>>,
    /// Fit selection masks on all subjects, test subjects included (leaks; for comparison).
    #[arg(long, global = true)]
    paper_faithful: bool,
    /// Majority-vote each test subject's rows.
    #[arg(long, global = true)]
    subject_vote: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    Synth {
        #[arg(long)]
        n_per_class: Option<usize>,
        /// Class profile TOML; the bundled default otherwise.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Filter and epoch recordings into epoch containers.
    Preprocess {
        /// Directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Band-power or temporal feature CSVs from epoch containers.
    Features {
        /// Directory written by `preprocess`.
        #[arg(long)]
        epochs: PathBuf,
    },
    /// Rank-sum or Kruskal-Wallis tables from feature CSVs.
    Stats {
        /// Directory written by `features`.
        #[arg(long)]
        features: PathBuf,
    },
    /// Cross-validated classification report.
    Evaluate {
        /// Directory written by `synth`; a cohort is generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = c.pipeline {
        cfg.pipeline = p;
    }
    if let Some(t) = &c.tasks {
        cfg.tasks = t.clone();
    }
    if let Some(p) = &c.pairs {
        cfg.pairs = p.clone();
    }
    cfg.paper_faithful |= c.paper_faithful;
    cfg.subject_vote |= c.subject_vote;
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn profile(cfg: &RunConfig, path: Option<&Path>) -> Result<ProfileSet> {
    match path.or(cfg.synth.profile.as_deref()) {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            ProfileSet::from_toml(&text)
        }
        None => Ok(ProfileSet::default_profiles()),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn cmd_synth(cfg: &RunConfig, n_per_class: Option<usize>, profile_path: Option<&Path>) -> Result<()> {
    let profile = profile(cfg, profile_path)?;
    let gen = Generator::new(profile.clone())?;
    let n = n_per_class.unwrap_or(cfg.synth.n_per_class);
    mkdir(&cfg.out)?;
    write_text(&cfg.out.join("profile.toml"), &profile.to_toml())?;
    let mut manifest = Manifest::new("recordings");
    manifest.seed = Some(cfg.seed);
    manifest.fs = Some(profile.fs);
    for spec in subject_specs(n) {
        for task in recorded_tasks(&cfg.tasks) {
            let rec = gen.generate(&spec, task, cfg.seed)?;
            let name = format!("{}_{}.eegr", spec.id, task);
            let sidecar = Sidecar::for_recording(&rec, Some(cfg.seed), "synthetic");
            io::write_recording(&cfg.out.join(&name), &rec, &sidecar)?;
            log::info!("wrote {name}");
            manifest.files.push(name);
        }
    }
    manifest.write(&cfg.out)
}

fn cmd_preprocess(cfg: &RunConfig, data: &Path) -> Result<()> {
    let input = Manifest::read(data, "recordings")?;
    mkdir(&cfg.out)?;
    let mut manifest = Manifest::new("epochs");
    manifest.pipeline = Some(cfg.pipeline);
    manifest.seed = input.seed;
    for (file, path) in input.files.iter().zip(input.paths(data)) {
        let rec = io::read_recording(&path)?;
        let epochs = match cfg.pipeline {
            Pipeline::Frequency => freq_epochs(&rec, cfg)?,
            Pipeline::Time => average_consecutive(&time_epochs(&rec, cfg)?, cfg.preprocess.average_group)?,
        };
        let name = format!("{}.{}.eegx", file.trim_end_matches(".eegr"), cfg.pipeline);
        let sidecar = Sidecar {
            provenance: format!("{} epochs of {file}", cfg.pipeline),
            ..io::read_sidecar(&path)?
        };
        io::write_epochs(&cfg.out.join(&name), &epochs, &sidecar)?;
        manifest.fs = Some(epochs.montage().fs());
        manifest.files.push(name);
    }
    manifest.write(&cfg.out)
}

fn cmd_features(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let input = Manifest::read(dir, "epochs")?;
    let pipeline = input.pipeline.unwrap_or(cfg.pipeline);
    let mut by_task: BTreeMap<TaskKind, Vec<FeatureMatrix>> = BTreeMap::new();
    for path in input.paths(dir) {
        let epochs: EpochSet = io::read_epochs(&path)?;
        let task = epochs.tasks()[0];
        let fm = match pipeline {
            Pipeline::Frequency => band_power_features::<&str>(
                &epochs,
                &cfg.spectral.bands,
                &[],
                cfg.spectral.window_len,
                cfg.spectral.overlap,
            )?,
            Pipeline::Time => temporal_features(&epochs, cfg.preprocess.time_post_ms)?.features,
        };
        by_task.entry(task).or_default().push(fm);
    }
    mkdir(&cfg.out)?;
    let mut manifest = Manifest::new("features");
    manifest.pipeline = Some(pipeline);
    manifest.fs = input.fs;
    for (task, parts) in by_task {
        let refs: Vec<&FeatureMatrix> = parts.iter().collect();
        let fm = FeatureMatrix::vstack(&refs)?;
        let name = format!("{pipeline}_{task}.csv");
        io::write_features(&cfg.out.join(&name), &fm, task)?;
        manifest.files.push(name);
    }
    manifest.write(&cfg.out)
}

fn cmd_stats(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let input = Manifest::read(dir, "features")?;
    let pipeline = input.pipeline.unwrap_or(cfg.pipeline);
    mkdir(&cfg.out)?;
    let mut manifest = Manifest::new("stats");
    manifest.pipeline = Some(pipeline);
    for path in input.paths(dir) {
        let (fm, task) = io::read_features(&path)?;
        match pipeline {
            Pipeline::Frequency => {
                for pair in &cfg.pairs {
                    let rows: Vec<usize> = (0..fm.n_rows()).filter(|&r| pair.contains(fm.labels()[r])).collect();
                    let sub = fm.select_rows(&rows);
                    let results = feature_rank_sum(&sub)?;
                    let mut text = String::from("feature,statistic,p_value,method,selected\n");
                    for (name, r) in sub.names().iter().zip(&results) {
                        text.push_str(&format!(
                            "{name},{:e},{:e},{:?},{}\n",
                            r.statistic,
                            r.p_value,
                            r.method,
                            r.p_value < cfg.stats.alpha_band
                        ));
                    }
                    let name = format!("ranksum_{task}_{pair}.csv");
                    write_text(&cfg.out.join(&name), &text)?;
                    manifest.files.push(name);
                }
            }
            Pipeline::Time => {
                let name = format!("kw_{task}.csv");
                write_text(&cfg.out.join(&name), &time_table(&fm, input.fs.unwrap_or(256.0), cfg)?)?;
                manifest.files.push(name);
            }
        }
    }
    manifest.write(&cfg.out)
}

/// Grand average per class, KW p-value and interval flag per channel and
/// sample.
fn time_table(fm: &FeatureMatrix, fs: f64, cfg: &RunConfig) -> Result<String> {
    let groups: Vec<usize> = fm.labels().iter().map(|l| l.index()).collect();
    let p = kruskal_wallis_columns(fm.values().view(), &groups, ClassLabel::ALL.len())?;
    let means: Vec<Vec<f64>> = ClassLabel::ALL
        .iter()
        .map(|&l| {
            let rows: Vec<usize> = (0..fm.n_rows()).filter(|&r| fm.labels()[r] == l).collect();
            if rows.is_empty() {
                return vec![f64::NAN; fm.n_features()];
            }
            fm.values().select(Axis(0), &rows).mean_axis(Axis(0)).expect("rows").to_vec()
        })
        .collect();
    let mut series: Vec<(String, Vec<usize>)> = Vec::new();
    for (j, name) in fm.names().iter().enumerate() {
        let (ch, _) = name
            .rsplit_once('@')
            .ok_or_else(|| Error::ShapeMismatch(format!("column `{name}` is not CH@sample")))?;
        match series.last_mut() {
            Some((c, cols)) if c == ch => cols.push(j),
            _ => series.push((ch.to_string(), vec![j])),
        }
    }
    let mut text = String::from("channel,sample,time_ms,mean_NC,mean_MCI,mean_DEM,p_value,in_interval\n");
    for (ch, cols) in series {
        let ps: Vec<f64> = cols.iter().map(|&j| p[j]).collect();
        let mask = significant_intervals(&ps, fs, cfg.stats.alpha_time, cfg.stats.min_interval_ms);
        for (i, &j) in cols.iter().enumerate() {
            text.push_str(&format!(
                "{ch},{i},{:.4},{:e},{:e},{:e},{:e},{}\n",
                i as f64 * 1000.0 / fs,
                means[0][j],
                means[1][j],
                means[2][j],
                p[j],
                u8::from(mask.contains(i))
            ));
        }
    }
    Ok(text)
}

fn cmd_evaluate(cfg: &RunConfig, data: Option<&Path>) -> Result<()> {
    let pipelines = [cfg.pipeline];
    let cohort = match data {
        Some(dir) => {
            let m = Manifest::read(dir, "recordings")?;
            let wanted = recorded_tasks(&cfg.tasks);
            let mut paths = Vec::new();
            for p in m.paths(dir) {
                if wanted.contains(&io::read_sidecar(&p)?.task) {
                    paths.push(p);
                }
            }
            Cohort::prepare(paths.len(), |i| io::read_recording(&paths[i]), &pipelines, cfg)?
        }
        None => {
            let gen = Generator::new(profile(cfg, None)?)?;
            Cohort::synthesize(&gen, cfg.synth.n_per_class, &cfg.tasks, cfg.seed, &pipelines, cfg)?
        }
    };
    let reports = evaluate_all(&cohort, cfg)?;
    let file = ReportFile::new(cfg, reports);
    file.write(&cfg.out)?;
    print!("{}", file.to_csv().lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Synth { n_per_class, profile } => cmd_synth(&cfg, n_per_class, profile.as_deref()),
        Command::Preprocess { data } => cmd_preprocess(&cfg, &data),
        Command::Features { epochs } => cmd_features(&cfg, &epochs),
        Command::Stats { features } => cmd_stats(&cfg, &features),
        Command::Evaluate { data } => cmd_evaluate(&cfg, data.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EEGCOG_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dinterp::baselines::BaselineKind;
use dinterp::geometry::Skeleton;
use dinterp::metrics::{self, render_table, MetricsReport, Predictor};
use dinterp::model::{InputDelta, Model, OutputDelta};
use dinterp::motion::{
    load_csv_gapped, normalize_stats, position_stats, save_csv, synth_motion, InbetweenTask, MotionSequence, NormStats,
    NormTransform, Pose, SynthKind, TaskPattern, DEFAULT_FRAME_RATE,
};
use dinterp::par::Exec;
use dinterp::training::{LogLine, Trainer, FINAL_DIR, NORM_STATS_FILE};

use crate::config::{fresh_dir, fresh_file, RunConfig};
use crate::data::{self, Dataset, SKELETON_FILE};
use crate::error::{CliError, CliResult};

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";

/// `biped5`, `chain:N` or a path to a skeleton JSON file.
pub fn parse_skeleton(spec: &str) -> CliResult<Skeleton> {
    if spec == "biped5" {
        return Ok(Skeleton::biped5());
    }
    if let Some(n) = spec.strip_prefix("chain:") {
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Config(format!("bad chain length in `{spec}`")))?;
        if n == 0 {
            return Err(CliError::Config("a chain needs at least one joint".into()));
        }
        return Ok(Skeleton::chain(n));
    }
    Ok(Skeleton::load(Path::new(spec))?)
}

pub struct SynthOpts {
    pub kinds: Vec<SynthKind>,
    pub frames: usize,
    pub seed: u64,
    pub count: usize,
    pub skeleton: Skeleton,
    pub out: PathBuf,
}

/// Writes `count` clips per kind plus the skeleton into a fresh directory.
pub fn synth(o: &SynthOpts) -> CliResult<Vec<PathBuf>> {
    if o.frames < 2 || o.count == 0 || o.kinds.is_empty() {
        return Err(CliError::Config(
            "synth needs at least 2 frames, 1 clip and 1 kind".into(),
        ));
    }
    fresh_dir(&o.out)?;
    let skel = Arc::new(o.skeleton.clone());
    skel.save(&o.out.join(SKELETON_FILE))?;
    let mut written = Vec::new();
    for &kind in &o.kinds {
        for i in 0..o.count as u64 {
            let seed = o.seed + i;
            let seq = synth_motion(kind, skel.clone(), o.frames, seed)?;
            let p = o.out.join(format!("{}_{seed:04}.csv", kind.name()));
            save_csv(&p, &seq)?;
            written.push(p);
        }
    }
    Ok(written)
}

fn motion_data(dir: &Path) -> CliResult<(Arc<Skeleton>, Vec<MotionSequence>)> {
    match data::load(dir)? {
        Dataset::Motion { skeleton, clips } => Ok((skeleton, clips)),
        Dataset::Positions { .. } => Err(dinterp::Error::Unsupported(format!(
            "{} holds position-only data; this command needs joint rotations",
            dir.display()
        ))
        .into()),
    }
}

fn dataset_id(cfg: &RunConfig, dir: &Path) -> String {
    if !cfg.data.dataset_id.is_empty() {
        return cfg.data.dataset_id.clone();
    }
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn write_report(out: &Path, report: &MetricsReport) -> CliResult<()> {
    report.save_json(&out.join(METRICS_JSON))?;
    let p = out.join(METRICS_TABLE);
    fs::write(&p, report.table()).map_err(|e| CliError::io(&p, e))
}

fn train_one(
    cfg: &RunConfig,
    skeleton: Arc<Skeleton>,
    windows: &[MotionSequence],
    stats: &NormStats,
    out: &Path,
) -> CliResult<(Model, Vec<LogLine>)> {
    let exec = cfg.exec();
    let model = Model::new(cfg.model.clone(), skeleton, cfg.train.seed)?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.sampler.clone(), exec)?;
    trainer.norm_stats = Some(stats.clone());
    let log_path = out.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let lines = trainer.train(windows, Some(out), &mut log);
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    Ok((trainer.model, lines?))
}

/// Trains on the windows of the data directory. Returns the final
/// checkpoint directory.
pub fn train(mut cfg: RunConfig, data_flag: Option<&Path>, out: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let dir = cfg.train_dir(data_flag)?;
    let (skeleton, clips) = motion_data(&dir)?;
    cfg.model.joints = skeleton.joint_count();
    cfg.model.validate()?;
    cfg.data.train = Some(dir);
    let windows = data::motion_windows(&clips, cfg.sampler.window_len, cfg.data.window_offset, cfg.exec())?;
    let stats = normalize_stats(&windows)?;

    fresh_dir(out)?;
    cfg.write_resolved(out)?;
    let (_, lines) = train_one(&cfg, skeleton, &windows, &stats, out)?;
    if let Some(last) = lines.last() {
        println!(
            "trained {} epochs on {} windows: lTot {:.6} (lr {:.2e})",
            last.epoch,
            windows.len(),
            last.loss.l_tot,
            last.lr
        );
    }
    Ok(out.join(FINAL_DIR))
}

fn load_stats(path: &Path) -> CliResult<Option<NormStats>> {
    if path.exists() {
        Ok(Some(NormStats::load(path)?))
    } else {
        Ok(None)
    }
}

fn apply_lengths(cfg: &mut RunConfig, lengths: Option<Vec<usize>>) -> CliResult<()> {
    if let Some(l) = lengths {
        cfg.eval.lengths = l;
    }
    cfg.validate()
}

/// Evaluates one checkpoint, or the mean over several.
pub fn eval(
    mut cfg: RunConfig,
    checkpoints: &[PathBuf],
    data_flag: Option<&Path>,
    lengths: Option<Vec<usize>>,
    out: &Path,
) -> CliResult<MetricsReport> {
    if checkpoints.is_empty() {
        return Err(CliError::Config("at least one --checkpoint is required".into()));
    }
    apply_lengths(&mut cfg, lengths)?;
    let models = checkpoints
        .iter()
        .map(|c| Model::load(c))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = cfg.test_dir(data_flag)?;
    let (skeleton, clips) = motion_data(&dir)?;
    if models
        .iter()
        .any(|m| m.skeleton.joint_count() != skeleton.joint_count())
    {
        return Err(CliError::Data("checkpoint and dataset skeletons differ".into()));
    }
    cfg.data.test = Some(dir.clone());
    let windows = data::motion_windows(&clips, cfg.sampler.window_len, cfg.data.eval_window_offset, cfg.exec())?;
    let stats = match load_stats(&checkpoints[0].join(NORM_STATS_FILE))? {
        Some(s) => s,
        None => {
            eprintln!("note: checkpoint has no {NORM_STATS_FILE}; standardizing with evaluation statistics");
            normalize_stats(&windows)?
        }
    };
    let predictors: Vec<Predictor> = models.iter().map(Predictor::Model).collect();
    let mut report = metrics::evaluate(&predictors, &windows, &cfg.eval, &stats, cfg.exec())?;
    report.dataset_id = dataset_id(&cfg, &dir);

    fresh_dir(out)?;
    cfg.write_resolved(out)?;
    write_report(out, &report)?;
    print!("{}", report.table());
    Ok(report)
}

pub struct BaselineOpts {
    pub kind: BaselineKind,
    pub data: Option<PathBuf>,
    /// Training data to standardize against.
    pub train_data: Option<PathBuf>,
    /// Precomputed statistics (overrides `train_data`).
    pub stats: Option<PathBuf>,
    pub lengths: Option<Vec<usize>>,
    pub out: PathBuf,
}

/// Evaluates a zero-parameter baseline.
pub fn baseline(mut cfg: RunConfig, o: &BaselineOpts) -> CliResult<MetricsReport> {
    apply_lengths(&mut cfg, o.lengths.clone())?;
    let dir = cfg.test_dir(o.data.as_deref())?;
    cfg.data.test = Some(dir.clone());
    let len = cfg.sampler.window_len;
    let offset = cfg.data.eval_window_offset;
    let exec = cfg.exec();
    let explicit = match &o.stats {
        Some(p) => Some(NormStats::load(p)?),
        None => None,
    };
    let mut report = match data::load(&dir)? {
        Dataset::Motion { clips, .. } => {
            if o.kind == BaselineKind::PosLerp {
                return Err(dinterp::Error::Unsupported(
                    "lerp runs on position-only data; use zerovel or slerp".into(),
                )
                .into());
            }
            let windows = data::motion_windows(&clips, len, offset, exec)?;
            let stats = match (explicit, &o.train_data) {
                (Some(s), _) => s,
                (None, Some(t)) => {
                    let (_, tc) = motion_data(t)?;
                    normalize_stats(&data::motion_windows(&tc, len, cfg.data.window_offset, exec)?)?
                }
                (None, None) => normalize_stats(&windows)?,
            };
            metrics::evaluate(&[Predictor::Baseline(o.kind)], &windows, &cfg.eval, &stats, exec)?
        }
        Dataset::Positions { clips } => {
            let windows = data::position_windows(&clips, len, offset)?;
            let stats = match (explicit, &o.train_data) {
                (Some(s), _) => s,
                (None, Some(t)) => match data::load(t)? {
                    Dataset::Positions { clips } => {
                        position_stats(&data::position_windows(&clips, len, cfg.data.window_offset)?)?
                    }
                    Dataset::Motion { .. } => return Err(CliError::Data("training data is not position-only".into())),
                },
                (None, None) => position_stats(&windows)?,
            };
            metrics::evaluate_positions(o.kind, &windows, &cfg.eval, &stats, exec)?
        }
    };
    report.dataset_id = dataset_id(&cfg, &dir);

    fresh_dir(&o.out)?;
    cfg.write_resolved(&o.out)?;
    write_report(&o.out, &report)?;
    print!("{}", report.table());
    Ok(report)
}

pub enum Filler {
    Model(PathBuf),
    Baseline { kind: BaselineKind, skeleton: Skeleton },
}

/// Fills the empty rows of a gapped CSV file.
pub fn inbetween(filler: &Filler, input: &Path, out: &Path, exec: Exec) -> CliResult<usize> {
    fresh_file(out)?;
    let (model, skeleton) = match filler {
        Filler::Model(dir) => {
            let m = Model::load(dir)?;
            let s = m.skeleton.clone();
            (Some(m), s)
        }
        Filler::Baseline { skeleton, .. } => (None, Arc::new(skeleton.clone())),
    };
    let gapped = load_csv_gapped(input, skeleton.clone())?;
    let known = gapped.known();
    let n = gapped.frames.len();
    let pattern = TaskPattern::new(n, known.clone())?;
    if let Some(m) = &model {
        if n > m.cfg.max_frame_index {
            return Err(dinterp::Error::Unsupported(format!(
                "{n} frames exceed the model's max_frame_index {}; split the file",
                m.cfg.max_frame_index
            ))
            .into());
        }
    }
    let j = skeleton.joint_count();
    let frames: Vec<Pose> = gapped
        .frames
        .iter()
        .map(|f| f.clone().unwrap_or_else(|| Pose::rest(j)))
        .collect();
    let seq = MotionSequence::new(skeleton, frames, DEFAULT_FRAME_RATE)?;
    let missing = pattern.missing().len();

    let filled = match (filler, &model) {
        (_, _) if missing == 0 => seq,
        (Filler::Model(_), Some(m)) => {
            let norm = NormTransform::fit(&seq, &known)?;
            let task = InbetweenTask::new(norm.apply(&seq)?, pattern)?;
            let pred = m.predict(&[task], exec)?.remove(0);
            norm.invert(&pred)?
        }
        (Filler::Baseline { kind, .. }, _) => {
            let task = InbetweenTask::new(seq, pattern)?;
            dinterp::baselines::run(*kind, &task)?
        }
        (Filler::Model(_), None) => unreachable!("model loaded above"),
    };
    save_csv(out, &filled)?;
    Ok(missing)
}

/// One cell of the delta-mode grid, written as in `Last:I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    pub input: InputDelta,
    pub output: OutputDelta,
}

impl Mode {
    pub fn label(self) -> String {
        let i = match self.input {
            InputDelta::LastFrame => "Last",
            InputDelta::None => "No",
        };
        let o = match self.output {
            OutputDelta::Interp => "I",
            OutputDelta::LastFrame => "Last",
            OutputDelta::None => "No",
        };
        format!("{i}:{o}")
    }

    fn dir_name(self) -> String {
        self.label().replace(':', "_")
    }
}

pub fn parse_modes(spec: &str) -> CliResult<Vec<Mode>> {
    let modes = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|m| {
            let (i, o) = m
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("mode `{m}` is not input:output")))?;
            Ok(Mode {
                input: i.trim().parse()?,
                output: o.trim().parse()?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if modes.is_empty() {
        return Err(CliError::Config("no delta modes given".into()));
    }
    Ok(modes)
}

pub struct AblateOpts {
    pub modes: Vec<Mode>,
    pub recon: bool,
    pub seeds: usize,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: PathBuf,
}

/// Trains and evaluates one model per (mode, seed); one report per mode.
pub fn ablate(mut cfg: RunConfig, o: &AblateOpts) -> CliResult<Vec<MetricsReport>> {
    if o.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    cfg.train.reconstruction_loss = o.recon;
    cfg.validate()?;
    let train_dir = cfg.train_dir(o.data.as_deref())?;
    let test_dir = cfg.test_dir(o.test_data.as_deref())?;
    let (skeleton, train_clips) = motion_data(&train_dir)?;
    let (test_skel, test_clips) = motion_data(&test_dir)?;
    if test_skel.joint_count() != skeleton.joint_count() {
        return Err(CliError::Data("training and test skeletons differ".into()));
    }
    cfg.model.joints = skeleton.joint_count();
    cfg.model.validate()?;
    cfg.data.train = Some(train_dir);
    cfg.data.test = Some(test_dir.clone());
    let exec = cfg.exec();
    let windows = data::motion_windows(&train_clips, cfg.sampler.window_len, cfg.data.window_offset, exec)?;
    let test = data::motion_windows(&test_clips, cfg.sampler.window_len, cfg.data.eval_window_offset, exec)?;
    let stats = normalize_stats(&windows)?;

    fresh_dir(&o.out)?;
    cfg.write_resolved(&o.out)?;
    let mut reports = Vec::with_capacity(o.modes.len());
    for &mode in &o.modes {
        let cell_dir = o.out.join(mode.dir_name());
        let mut cell = cfg.clone();
        cell.model.input_delta = mode.input;
        cell.model.output_delta = mode.output;
        let mut models = Vec::with_capacity(o.seeds);
        for s in 0..o.seeds as u64 {
            cell.train.seed = cfg.train.seed + s;
            let run_dir = cell_dir.join(format!("seed_{}", cell.train.seed));
            fresh_dir(&run_dir)?;
            cell.write_resolved(&run_dir)?;
            models.push(train_one(&cell, skeleton.clone(), &windows, &stats, &run_dir)?.0);
        }
        let predictors: Vec<Predictor> = models.iter().map(Predictor::Model).collect();
        let mut report = metrics::evaluate(&predictors, &test, &cell.eval, &stats, exec)?;
        report.model_id = mode.label();
        report.dataset_id = dataset_id(&cfg, &test_dir);
        write_report(&cell_dir, &report)?;
        eprintln!("{} done", mode.label());
        reports.push(report);
    }
    let table = render_table(&reports);
    let p = o.out.join("ablation.txt");
    fs::write(&p, &table).map_err(|e| CliError::io(&p, e))?;
    let p = o.out.join("ablation.json");
    fs::write(
        &p,
        serde_json::to_string_pretty(&reports).map_err(dinterp::Error::from)?,
    )
    .map_err(|e| CliError::io(&p, e))?;
    print!("{table}");
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_lists_parse() {
        let m = parse_modes("Last:I,Last:Last,No:No,No:I,No:Last").unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(
            m[0],
            Mode {
                input: InputDelta::LastFrame,
                output: OutputDelta::Interp
            }
        );
        assert_eq!(
            m[2],
            Mode {
                input: InputDelta::None,
                output: OutputDelta::None
            }
        );
        assert_eq!(
            m.iter().map(|x| x.label()).collect::<Vec<_>>().join(","),
            "Last:I,Last:Last,No:No,No:I,No:Last"
        );
        assert!(parse_modes("Last").is_err());
        assert!(parse_modes("Up:I").is_err());
    }

    #[test]
    fn skeleton_specs() {
        assert_eq!(parse_skeleton("biped5").unwrap().joint_count(), 5);
        assert_eq!(parse_skeleton("chain:3").unwrap().joint_count(), 3);
        assert!(parse_skeleton("chain:x").is_err());
        assert!(parse_skeleton("/nonexistent/skeleton.json").is_err());
    }
}

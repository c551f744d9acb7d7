//! End-to-end experiment orchestration: dataset and feedback generation,
//! per-method training, RL transfer, reward evaluation, and the composite
//! reproduction pipelines, all writing into a fixed run-directory layout.
//!
//! Layout under `<out>/run-<confighash>-s<seed>/`:
//! `dataset/` (binary containers), `feedback/` (label files),
//! `checkpoints/` (encoder and reward-model files), `curves/` (loss and
//! learning-curve tables), `reports/` (metric tables and correlation
//! exports). Every text artifact starts with a `# config <hash>` header and
//! `report` refuses to merge artifacts whose hashes differ.

mod config;

pub use config::{
    DataConfig, ExperimentConfig, FeedbackConfig, PipelineMethod, RlConfig, Roles, TrainConfig,
    REWARD_METHODS, RL_METHODS,
};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::demogen::{
    build_dataset, build_success_dataset, load_dataset, save_dataset, DatasetQuotas, MqmeDataset,
    SplitKind,
};
use crate::diffnet::{load_checkpoint, save_checkpoint, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_curves, export_correlation, format_curves, kendalls_tau, pairwise_accuracy,
    score_test_set, CurveSummary,
};
use crate::feedback::{
    bucketize, load_feedback, sample_preferences, sample_triplets, save_feedback, FeedbackFile,
};
use crate::replearn::{
    train_goal_classifier, train_representation, train_reward_model, DatasetView, LossReport,
    Method, TrainInputs,
};
use crate::reward::{
    calibrate_kappa, compute_goal_embedding, load_reward_model, save_reward_model, GoalSource,
    RewardModel,
};
use crate::rl::{q_learning_train, GtReward, LearningCurve, RewardFn};
use crate::rng;
use crate::sim::{EmbodimentKind, Env, Frame, ALL_EMBODIMENTS};

/// A resolved run directory with its provenance stamp.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub config_hash: u64,
}

impl RunDir {
    /// `<out>/run-<hash:016x>-s<seed>/` with the fixed subdirectories.
    pub fn create(out: impl AsRef<Path>, cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.config_hash();
        let root = out
            .as_ref()
            .join(format!("run-{hash:016x}-s{}", cfg.master_seed));
        for sub in ["dataset", "feedback", "checkpoints", "curves", "reports"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self {
            root,
            config_hash: hash,
        })
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.root.join("dataset/mqme.xmq")
    }

    pub fn success_dataset_path(&self) -> PathBuf {
        self.root.join("dataset/success.xmq")
    }

    pub fn feedback_path(&self) -> PathBuf {
        self.root.join("feedback/labels.txt")
    }

    pub fn encoder_path(&self, method: PipelineMethod) -> PathBuf {
        self.root.join(format!("checkpoints/{}.enc", method.name()))
    }

    pub fn reward_path(&self, method: PipelineMethod) -> PathBuf {
        self.root.join(format!("checkpoints/{}.rwd", method.name()))
    }

    pub fn loss_curve_path(&self, method: PipelineMethod) -> PathBuf {
        self.root.join(format!("curves/{}.loss.tsv", method.name()))
    }

    pub fn rl_curve_path(&self, method: PipelineMethod) -> PathBuf {
        self.root.join(format!("curves/{}.tsv", method.name()))
    }

    pub fn eval_path(&self, method: PipelineMethod) -> PathBuf {
        self.root.join(format!("reports/eval-{}.tsv", method.name()))
    }

    pub fn header(&self) -> String {
        format!("config {:016x}", self.config_hash)
    }
}

/// Generate and persist the MQME dataset, the success-only dataset, and
/// the shared goal set.
pub fn gen_data(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    cfg.validate()?;
    let quotas = DatasetQuotas {
        train_per_class: cfg.data.train_per_class,
        test_per_class: cfg.data.test_per_class,
    };
    let mut dataset = build_dataset(cfg.env, &cfg.data.noise_schedule, quotas, cfg.master_seed)?;
    dataset.goal_set = crate::demogen::extract_goal_set(
        &cfg.env,
        cfg.data.goal_set_size,
        rng::mix(&[cfg.master_seed, rng::tag("pipeline/goalset")]),
    )?;
    save_dataset(&dataset, run.dataset_path())?;

    // The success-only pipeline trains on pure oracle rollouts.
    let success = build_success_dataset(
        cfg.env,
        cfg.data.success_train_per_embodiment,
        rng::mix(&[cfg.master_seed, rng::tag("pipeline/success")]),
    )?;
    save_dataset(&success, run.success_dataset_path())?;
    Ok(())
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{} is missing; run `{produced_by}` first",
            path.display()
        )));
    }
    Ok(())
}

pub fn load_run_dataset(run: &RunDir) -> Result<MqmeDataset> {
    require(&run.dataset_path(), "gen-data")?;
    load_dataset(run.dataset_path())
}

pub fn load_run_success_dataset(run: &RunDir) -> Result<MqmeDataset> {
    require(&run.success_dataset_path(), "gen-data")?;
    load_dataset(run.success_dataset_path())
}

/// Sample and persist preference, triplet, and bucket labels over the
/// training embodiments.
pub fn gen_feedback(cfg: &ExperimentConfig, run: &RunDir) -> Result<FeedbackFile> {
    let dataset = load_run_dataset(run)?;
    let embs = cfg.roles.training_embodiments();
    let prefs = sample_preferences(
        &dataset,
        &embs,
        cfg.feedback.preferences,
        rng::mix(&[cfg.master_seed, rng::tag("pipeline/prefs")]),
    )?;
    let triplets = sample_triplets(
        &dataset,
        &embs,
        cfg.feedback.triplets,
        rng::mix(&[cfg.master_seed, rng::tag("pipeline/triplets")]),
    )?;
    let buckets = bucketize(
        &dataset,
        &embs,
        cfg.feedback.num_buckets,
        cfg.feedback.bucket_size,
        rng::mix(&[cfg.master_seed, rng::tag("pipeline/buckets")]),
    )?;
    save_feedback(
        run.feedback_path(),
        &prefs,
        &triplets,
        Some(&buckets),
        &run.header(),
    )?;
    Ok(FeedbackFile {
        preferences: prefs,
        triplets,
        buckets: Some(buckets),
        headers: vec![run.header()],
    })
}

pub fn load_run_feedback(run: &RunDir) -> Result<FeedbackFile> {
    require(&run.feedback_path(), "gen-feedback")?;
    let fb = load_feedback(run.feedback_path())?;
    let expect = run.header();
    if !fb.headers.iter().any(|h| h == &expect) {
        return Err(Error::Provenance(format!(
            "feedback file carries {:?}, expected {expect:?}",
            fb.headers
        )));
    }
    Ok(fb)
}

fn write_loss_report(run: &RunDir, method: PipelineMethod, report: &LossReport) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# {} method {}", run.header(), method.name()).unwrap();
    writeln!(out, "iteration\tloss\trefresh").unwrap();
    for (i, &loss) in report.losses.iter().enumerate() {
        let refresh = u8::from(report.refresh_steps.contains(&i));
        writeln!(out, "{i}\t{loss}\t{refresh}").unwrap();
    }
    std::fs::write(run.loss_curve_path(method), out)?;
    Ok(())
}

/// Parse a persisted loss table back into a report (refresh markers only).
pub fn read_loss_report(run: &RunDir, method: PipelineMethod) -> Result<LossReport> {
    let path = run.loss_curve_path(method);
    require(&path, "train-rep")?;
    let text = std::fs::read_to_string(path)?;
    let mut losses = Vec::new();
    let mut refresh_steps = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("iteration") || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let bad = || Error::Usage(format!("bad loss row {line:?}"));
        let iter: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let loss: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let refresh: u8 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        losses.push(loss);
        if refresh == 1 {
            refresh_steps.push(iter);
        }
    }
    Ok(LossReport {
        losses,
        refresh_steps,
        wall_secs: 0.0,
        final_goal: None,
    })
}

/// Train the representation encoder behind `method` and persist the
/// checkpoint and loss curve. Returns the trained encoder and report.
pub fn train_rep(
    cfg: &ExperimentConfig,
    run: &RunDir,
    method: PipelineMethod,
) -> Result<(EncoderParams, LossReport)> {
    let train_method = method
        .train_method(cfg.train.refresh_period)
        .ok_or_else(|| Error::Usage(format!("{} has no trainable encoder", method.name())))?;
    if matches!(train_method, Method::XRlhf | Method::GoalClassifier) {
        return Err(Error::Usage(format!(
            "{} trains end-to-end; use train-reward",
            method.name()
        )));
    }
    let embs = cfg.roles.training_embodiments();
    let spec = cfg.train_spec(train_method);

    let (params, report) = match method {
        PipelineMethod::XirlSuccess => {
            let success = load_run_success_dataset(run)?;
            let view = DatasetView::new(&success, &embs);
            train_representation(&view, &spec, &TrainInputs::default())?
        }
        PipelineMethod::XirlMixed => {
            let dataset = load_run_dataset(run)?;
            let view = DatasetView::new(&dataset, &embs);
            train_representation(&view, &spec, &TrainInputs::default())?
        }
        PipelineMethod::XirlBuckets => {
            let dataset = load_run_dataset(run)?;
            let fb = load_run_feedback(run)?;
            let view = DatasetView::new(&dataset, &embs);
            let inputs = TrainInputs {
                buckets: fb.buckets.as_ref(),
                ..Default::default()
            };
            train_representation(&view, &spec, &inputs)?
        }
        PipelineMethod::XPrefsStatic | PipelineMethod::XPrefsDynamic => {
            let dataset = load_run_dataset(run)?;
            let fb = load_run_feedback(run)?;
            let view = DatasetView::new(&dataset, &embs);
            let inputs = TrainInputs {
                goal_set: Some(&dataset.goal_set),
                preferences: Some(&fb.preferences),
                ..Default::default()
            };
            train_representation(&view, &spec, &inputs)?
        }
        PipelineMethod::XTriplets => {
            let dataset = load_run_dataset(run)?;
            let fb = load_run_feedback(run)?;
            let view = DatasetView::new(&dataset, &embs);
            let inputs = TrainInputs {
                triplets: Some(&fb.triplets),
                ..Default::default()
            };
            train_representation(&view, &spec, &inputs)?
        }
        _ => unreachable!(),
    };
    save_checkpoint(&params, run.encoder_path(method))?;
    write_loss_report(run, method, &report)?;
    Ok((params, report))
}

/// Assemble (training if needed) the reward model behind `method` and
/// persist it.
pub fn train_reward(
    cfg: &ExperimentConfig,
    run: &RunDir,
    method: PipelineMethod,
) -> Result<RewardModel> {
    let embs = cfg.roles.training_embodiments();
    let model = match method {
        PipelineMethod::GtRl => {
            return Err(Error::Usage(
                "gt-rl consumes the environment reward; nothing to train".into(),
            ))
        }
        PipelineMethod::XRlhf => {
            let dataset = load_run_dataset(run)?;
            let fb = load_run_feedback(run)?;
            let view = DatasetView::new(&dataset, &embs);
            let spec = cfg.train_spec(Method::XRlhf);
            let (net, report) = train_reward_model(&view, &fb.preferences, &spec)?;
            write_loss_report(run, method, &report)?;
            RewardModel::DirectNet { net }
        }
        PipelineMethod::GoalClassifier => {
            let dataset = load_run_dataset(run)?;
            let view = DatasetView::new(&dataset, &embs);
            let spec = cfg.train_spec(Method::GoalClassifier);
            let (net, report) = train_goal_classifier(&view, &dataset.goal_set, &spec)?;
            write_loss_report(run, method, &report)?;
            RewardModel::Classifier { net }
        }
        PipelineMethod::XirlSuccess => {
            let encoder = load_encoder(run, method)?;
            let success = load_run_success_dataset(run)?;
            // Success-only runs ground the goal in the final frames of
            // their own demonstrations.
            let finals: Vec<&Frame> = embs
                .iter()
                .flat_map(|&e| success.split(e, SplitKind::Train))
                .map(|t| t.frames.last().unwrap())
                .collect();
            let goal = compute_goal_embedding(&encoder, &finals, GoalSource::FromFinalFrames)?;
            let kappa = calibrate_kappa(&encoder, &goal, &success, &embs)?;
            RewardModel::DistanceToGoal {
                encoder,
                goal,
                kappa,
            }
        }
        PipelineMethod::XirlMixed
        | PipelineMethod::XirlBuckets
        | PipelineMethod::XTriplets
        | PipelineMethod::XPrefsStatic
        | PipelineMethod::XPrefsDynamic => {
            // Every mixed-data distance method grounds its reward in the
            // same privileged goal set under its trained encoder. XPrefs
            // included: the training-time anchor leaves rarely-seen
            // terminal frames miscalibrated, which the absorbing-success
            // return convention would amplify into non-completion.
            let encoder = load_encoder(run, method)?;
            let dataset = load_run_dataset(run)?;
            let frames: Vec<&Frame> = dataset.goal_set.frames.iter().collect();
            let goal = compute_goal_embedding(&encoder, &frames, GoalSource::FromGoalSet)?;
            let kappa = calibrate_kappa(&encoder, &goal, &dataset, &embs)?;
            RewardModel::DistanceToGoal {
                encoder,
                goal,
                kappa,
            }
        }
    };
    save_reward_model(&model, run.config_hash, run.reward_path(method))?;
    Ok(model)
}

fn load_encoder(run: &RunDir, method: PipelineMethod) -> Result<EncoderParams> {
    require(&run.encoder_path(method), "train-rep")?;
    load_checkpoint(run.encoder_path(method))
}

pub fn load_run_reward(run: &RunDir, method: PipelineMethod) -> Result<RewardModel> {
    require(&run.reward_path(method), "train-reward")?;
    let (model, hash) = load_reward_model(run.reward_path(method))?;
    if hash != run.config_hash {
        return Err(Error::Provenance(format!(
            "reward model stamped {hash:016x}, run is {:016x}",
            run.config_hash
        )));
    }
    Ok(model)
}

/// Train tabular Q-learning policies on the held-out embodiment against
/// `method`'s reward across the configured seeds; persist and return the
/// aggregated learning curves.
pub fn train_rl(
    cfg: &ExperimentConfig,
    run: &RunDir,
    method: PipelineMethod,
) -> Result<CurveSummary> {
    let env = Env::new(cfg.env, cfg.roles.held_out)?;
    let spec = cfg.rl.to_spec();
    let model: Option<RewardModel> = match method {
        PipelineMethod::GtRl => None,
        _ => Some(load_run_reward(run, method)?),
    };
    let reward_fn: &dyn RewardFn = match &model {
        Some(m) => m,
        None => &GtReward,
    };

    let seeds: Vec<u64> = (0..cfg.rl.seeds)
        .map(|k| rng::mix(&[cfg.master_seed, k as u64, rng::tag("pipeline/rl-seed")]))
        .collect();
    use rayon::prelude::*;
    let curves: Vec<LearningCurve> = seeds
        .par_iter()
        .map(|&s| q_learning_train(&env, reward_fn, &spec, s).map(|(_, c)| c))
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate_curves(&curves)?;
    let header = format!(
        "{} method {} embodiment {}",
        run.header(),
        method.name(),
        cfg.roles.held_out.name()
    );
    std::fs::write(run.rl_curve_path(method), format_curves(&summary, &header))?;
    Ok(summary)
}

/// One method's reward-alignment row for one embodiment.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub method: PipelineMethod,
    pub embodiment: EmbodimentKind,
    pub tau: f64,
    pub accuracy: f64,
}

/// Score `method`'s reward model on every embodiment's mixed-quality test
/// split; write the metric table and the correlation exports.
pub fn eval_reward(run: &RunDir, method: PipelineMethod) -> Result<Vec<EvalRow>> {
    let model = load_run_reward(run, method)?;
    let dataset = load_run_dataset(run)?;
    let mut rows = Vec::new();
    let mut table = String::new();
    writeln!(table, "# {} method {}", run.header(), method.name()).unwrap();
    writeln!(table, "embodiment\tkendall_tau\tpairwise_accuracy\tpairs").unwrap();
    for emb in ALL_EMBODIMENTS {
        let pairs = score_test_set(&model, &dataset, emb)?;
        let tau = kendalls_tau(&pairs)?;
        let accuracy = pairwise_accuracy(&pairs)?;
        writeln!(
            table,
            "{}\t{}\t{}\t{}",
            emb.name(),
            tau,
            accuracy,
            pairs.len()
        )
        .unwrap();
        let corr_header = format!(
            "{} method {} embodiment {}",
            run.header(),
            method.name(),
            emb.name()
        );
        export_correlation(
            &pairs,
            &corr_header,
            run.root
                .join(format!("reports/corr-{}-{}.tsv", method.name(), emb.name())),
        )?;
        rows.push(EvalRow {
            method,
            embodiment: emb,
            tau,
            accuracy,
        });
    }
    std::fs::write(run.eval_path(method), table)?;
    Ok(rows)
}

fn ensure_data(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    if !run.dataset_path().exists() || !run.success_dataset_path().exists() {
        gen_data(cfg, run)?;
    }
    if !run.feedback_path().exists() {
        gen_feedback(cfg, run)?;
    }
    Ok(())
}

fn ensure_reward(cfg: &ExperimentConfig, run: &RunDir, method: PipelineMethod) -> Result<()> {
    if method == PipelineMethod::GtRl || run.reward_path(method).exists() {
        return Ok(());
    }
    if method
        .train_method(cfg.train.refresh_period)
        .is_some_and(|m| !matches!(m, Method::XRlhf | Method::GoalClassifier))
        && !run.encoder_path(method).exists()
    {
        train_rep(cfg, run, method)?;
    }
    train_reward(cfg, run, method)?;
    Ok(())
}

/// Reward-accuracy table over all reward methods and embodiments (the
/// desk-scale analogue of the headline accuracy table).
pub fn repro_table1(cfg: &ExperimentConfig, run: &RunDir) -> Result<Vec<EvalRow>> {
    ensure_data(cfg, run)?;
    let mut all_rows = Vec::new();
    for method in REWARD_METHODS {
        ensure_reward(cfg, run, method)?;
        all_rows.extend(eval_reward(run, method)?);
    }
    // One row per metric, one column per method x embodiment.
    let mut out = String::new();
    writeln!(out, "# {} table1", run.header()).unwrap();
    let mut header = vec!["metric".to_string()];
    for method in REWARD_METHODS {
        for emb in ALL_EMBODIMENTS {
            header.push(format!("{}/{}", method.name(), emb.name()));
        }
    }
    writeln!(out, "{}", header.join("\t")).unwrap();
    for (metric, pick) in [
        ("kendall_tau", 0usize),
        ("pairwise_accuracy", 1usize),
    ] {
        let mut row = vec![metric.to_string()];
        for method in REWARD_METHODS {
            for emb in ALL_EMBODIMENTS {
                let r = all_rows
                    .iter()
                    .find(|r| r.method == method && r.embodiment == emb)
                    .expect("row exists");
                row.push(if pick == 0 {
                    r.tau.to_string()
                } else {
                    r.accuracy.to_string()
                });
            }
        }
        writeln!(out, "{}", row.join("\t")).unwrap();
    }
    std::fs::write(run.root.join("reports/table1.tsv"), out)?;
    Ok(all_rows)
}

/// Learning curves for the full legend set on the held-out embodiment.
pub fn repro_fig1(
    cfg: &ExperimentConfig,
    run: &RunDir,
) -> Result<Vec<(PipelineMethod, CurveSummary)>> {
    ensure_data(cfg, run)?;
    let mut results = Vec::new();
    for method in RL_METHODS {
        ensure_reward(cfg, run, method)?;
        let summary = train_rl(cfg, run, method)?;
        results.push((method, summary));
    }
    let mut out = String::new();
    writeln!(out, "# {} fig1 final returns", run.header()).unwrap();
    writeln!(out, "method\tfinal_mean\tfinal_stderr").unwrap();
    for (method, summary) in &results {
        writeln!(
            out,
            "{}\t{}\t{}",
            method.name(),
            summary.mean.last().unwrap(),
            summary.stderr.last().unwrap()
        )
        .unwrap();
    }
    std::fs::write(run.root.join("reports/fig1.tsv"), out)?;
    Ok(results)
}

/// Static-vs-dynamic goal-embedding study plus the static-XPrefs RL
/// comparison against the end-to-end preference model.
pub struct AppendixAReport {
    pub static_report: LossReport,
    pub dynamic_report: LossReport,
    pub xprefs_static_rl: CurveSummary,
    pub xrlhf_rl: CurveSummary,
}

pub fn repro_appendix_a(cfg: &ExperimentConfig, run: &RunDir) -> Result<AppendixAReport> {
    ensure_data(cfg, run)?;
    let (_, static_report) = train_rep(cfg, run, PipelineMethod::XPrefsStatic)?;
    let (_, dynamic_report) = train_rep(cfg, run, PipelineMethod::XPrefsDynamic)?;
    train_reward(cfg, run, PipelineMethod::XPrefsStatic)?;
    let xprefs_static_rl = train_rl(cfg, run, PipelineMethod::XPrefsStatic)?;
    ensure_reward(cfg, run, PipelineMethod::XRlhf)?;
    let xrlhf_rl = if run.rl_curve_path(PipelineMethod::XRlhf).exists() {
        // Reuse curves from a prior stage of the same run.
        read_curves(run, PipelineMethod::XRlhf)?
    } else {
        train_rl(cfg, run, PipelineMethod::XRlhf)?
    };

    let mut out = String::new();
    writeln!(out, "# {} appendix-a", run.header()).unwrap();
    let spike = refresh_spike_fraction(&dynamic_report);
    let windows = non_increasing_window_fraction(&static_report.losses, 500);
    writeln!(out, "dynamic_refresh_events\t{}", dynamic_report.refresh_steps.len()).unwrap();
    writeln!(out, "dynamic_spike_fraction\t{spike}").unwrap();
    writeln!(out, "static_non_increasing_window_fraction\t{windows}").unwrap();
    writeln!(
        out,
        "xprefs_static_final_return\t{}\t{}",
        xprefs_static_rl.mean.last().unwrap(),
        xprefs_static_rl.stderr.last().unwrap()
    )
    .unwrap();
    writeln!(
        out,
        "xrlhf_final_return\t{}\t{}",
        xrlhf_rl.mean.last().unwrap(),
        xrlhf_rl.stderr.last().unwrap()
    )
    .unwrap();
    std::fs::write(run.root.join("reports/appendix_a.tsv"), out)?;
    Ok(AppendixAReport {
        static_report,
        dynamic_report,
        xprefs_static_rl,
        xrlhf_rl,
    })
}

/// Fraction of goal refreshes whose loss exceeds the loss one step before.
pub fn refresh_spike_fraction(report: &LossReport) -> f64 {
    let mut spikes = 0usize;
    let mut events = 0usize;
    for &step in &report.refresh_steps {
        if step == 0 || step >= report.losses.len() {
            continue;
        }
        events += 1;
        if report.losses[step] > report.losses[step - 1] {
            spikes += 1;
        }
    }
    if events == 0 {
        0.0
    } else {
        spikes as f64 / events as f64
    }
}

/// Fraction of consecutive fixed-width windows whose mean loss does not
/// increase.
pub fn non_increasing_window_fraction(losses: &[f64], window: usize) -> f64 {
    let means: Vec<f64> = losses
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    if means.len() < 2 {
        return 1.0;
    }
    let good = means.windows(2).filter(|w| w[1] <= w[0]).count();
    good as f64 / (means.len() - 1) as f64
}

/// Parse a persisted RL curve table back into a summary.
pub fn read_curves(run: &RunDir, method: PipelineMethod) -> Result<CurveSummary> {
    let path = run.rl_curve_path(method);
    require(&path, "train-rl")?;
    let text = std::fs::read_to_string(&path)?;
    let expect = run.header();
    let mut steps = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix('#') {
            if !h.trim().starts_with(&expect) {
                return Err(Error::Provenance(format!(
                    "curve file carries {h:?}, expected {expect:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        if line.starts_with("step") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split('\t')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Usage(format!("bad curve row {line:?}")))?;
        steps.push(fields[0] as usize);
        rows.push(fields[1..fields.len() - 2].to_vec());
    }
    if !saw_header {
        return Err(Error::Provenance("curve file missing config header".into()));
    }
    let seeds = rows.first().map(|r| r.len()).unwrap_or(0);
    let curves: Vec<LearningCurve> = (0..seeds)
        .map(|s| LearningCurve {
            steps: steps.clone(),
            returns: rows.iter().map(|r| r[s]).collect(),
        })
        .collect();
    aggregate_curves(&curves)
}

/// Merge the per-method evaluation tables in one run into a comparison
/// report; refuses artifacts stamped with a different configuration.
pub fn report(run: &RunDir) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# {} combined report", run.header()).unwrap();
    writeln!(out, "method\tembodiment\tkendall_tau\tpairwise_accuracy").unwrap();
    let expect = run.header();
    let mut found = 0;
    for method in REWARD_METHODS {
        let path = run.eval_path(method);
        if !path.exists() {
            continue;
        }
        found += 1;
        let text = std::fs::read_to_string(&path)?;
        let mut header_ok = false;
        for line in text.lines() {
            if let Some(h) = line.strip_prefix('#') {
                if h.trim().starts_with(&expect) {
                    header_ok = true;
                } else {
                    return Err(Error::Provenance(format!(
                        "{} carries {h:?}, expected {expect:?}",
                        path.display()
                    )));
                }
                continue;
            }
            if line.starts_with("embodiment") || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                method.name(),
                fields[0],
                fields[1],
                fields[2]
            )
            .unwrap();
        }
        if !header_ok {
            return Err(Error::Provenance(format!(
                "{} missing config header",
                path.display()
            )));
        }
    }
    if found == 0 {
        return Err(Error::Dependency(
            "no evaluation tables found; run `eval-reward` first".into(),
        ));
    }
    std::fs::write(run.root.join("reports/report.tsv"), &out)?;
    Ok(out)
}

//! Config-driven orchestration of the full pipeline:
//! train -> collect counterfactuals -> cluster -> extract rules -> report.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::{make_builtin, make_external_system, Bounds, ParseMode, SystemUnderTest};
use crate::cluster::{kmeans_fit, KMeansModel};
use crate::env::ExplorerEnv;
use crate::error::{Error, Result};
use crate::harness::{
    axis_concentration, clusters_path, emit_cluster_plot_data, recover_thresholds, report_path,
    validate_counterfactuals, GroundTruth, ValidationReport,
};
use crate::rl::{
    format_metrics_log, load_checkpoint, save_checkpoint, train, Checkpoint, EnvSpec, TrainConfig,
};
use crate::rules::{default_feature_names, export_text, extract_rules, tree_fit, TreeNode};
use crate::trajectory::{
    collect_counterfactuals, read_csv, trajectories_path, write_csv, CounterfactualRecord,
};

/// Flat configuration for a whole pipeline run. Defaults reproduce the
/// reference experiment: 20,000 timesteps, 4 envs, lr 0.0003, training
/// episodes of 100 steps, action scale 1.0, 100 analysis episodes of
/// 200 steps, k=4 with 10 restarts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub system: String,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub total_timesteps: usize,
    pub n_envs: usize,
    pub n_steps: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,

    pub action_scale: f64,
    pub train_max_steps: usize,
    pub analysis_episodes: usize,
    pub analysis_max_steps: usize,

    pub k: usize,
    pub n_init: usize,
    pub kmeans_max_iter: usize,
    /// 0 means automatic: max(3, input_dim + 1).
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub threshold_tol: f64,

    // external-adapter spec; used when `system = "external"`
    pub external_cmd: String,
    pub external_args: String,
    pub external_parse: String,
    pub external_dim: usize,
    pub external_low: Vec<f64>,
    pub external_high: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            system: "system_1_threshold".into(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            total_timesteps: 20_000,
            n_envs: 4,
            n_steps: 1024,
            minibatch_size: 64,
            epochs: 10,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: 64,
            action_scale: 1.0,
            train_max_steps: 100,
            analysis_episodes: 100,
            analysis_max_steps: 200,
            k: 4,
            n_init: 10,
            kmeans_max_iter: 300,
            max_depth: 0,
            min_samples_split: 2,
            threshold_tol: 0.25,
            external_cmd: String::new(),
            external_args: "{0}".into(),
            external_parse: "label".into(),
            external_dim: 1,
            external_low: Vec::new(),
            external_high: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::Other(format!("bad config file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            total_timesteps: self.total_timesteps,
            n_envs: self.n_envs,
            n_steps: self.n_steps,
            minibatch_size: self.minibatch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_range: self.clip_range,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            seed: self.seed,
        }
    }

    pub fn make_system(&self) -> Result<Box<dyn SystemUnderTest>> {
        if self.system == "external" {
            let mode = match self.external_parse.as_str() {
                "label" => ParseMode::Label,
                "score" => ParseMode::Score,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "external_parse must be 'label' or 'score', got {other:?}"
                    )))
                }
            };
            let bounds = Bounds::new(self.external_low.clone(), self.external_high.clone())?;
            let sys =
                make_external_system(&self.external_cmd, &self.external_args, mode, self.external_dim, bounds)?;
            Ok(Box::new(sys))
        } else {
            make_builtin(&self.system)
                .ok_or_else(|| Error::InvalidInput(format!("unknown system {:?}", self.system)))
        }
    }

    pub fn effective_max_depth(&self, input_dim: usize) -> usize {
        if self.max_depth == 0 {
            3.max(input_dim + 1)
        } else {
            self.max_depth
        }
    }

    fn analysis_seed(&self) -> u64 {
        // dedicated stream, independent of the training seeds
        self.seed.wrapping_add(0x5EED_0001)
    }

    fn kmeans_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5EED_0002)
    }

    pub fn checkpoint_path(&self, system_name: &str) -> PathBuf {
        self.out_dir.join(format!("{system_name}_model.json"))
    }

    pub fn metrics_path(&self, system_name: &str) -> PathBuf {
        self.out_dir.join(format!("{system_name}_metrics.csv"))
    }

    pub fn rules_txt_path(&self, system_name: &str) -> PathBuf {
        self.out_dir.join(format!("{system_name}_rules.txt"))
    }

    pub fn rules_tsv_path(&self, system_name: &str) -> PathBuf {
        self.out_dir.join(format!("{system_name}_rules.tsv"))
    }
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))
}

/// Trains the agent and writes the checkpoint and metrics log.
pub fn run_train(cfg: &PipelineConfig) -> Result<PathBuf> {
    ensure_out_dir(cfg)?;
    let system = cfg.make_system()?;
    let tcfg = cfg.train_config();
    let env_spec = EnvSpec {
        action_scale: cfg.action_scale,
        max_steps: cfg.train_max_steps,
    };
    let (model, metrics) = train(system.as_ref(), env_spec, &tcfg, cfg.hidden)?;

    let metrics_path = cfg.metrics_path(system.name());
    std::fs::write(&metrics_path, format_metrics_log(&metrics))
        .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;

    let ckpt_path = cfg.checkpoint_path(system.name());
    save_checkpoint(
        &ckpt_path,
        &Checkpoint {
            version: 1,
            system_name: system.name().to_string(),
            seed: cfg.seed,
            config: tcfg,
            model,
        },
    )?;
    Ok(ckpt_path)
}

pub struct AnalysisArtifacts {
    pub trajectories: PathBuf,
    pub records: Vec<CounterfactualRecord>,
    pub kmeans: KMeansModel,
    pub tree: TreeNode,
    pub rules_txt: PathBuf,
    pub clusters_csv: Option<PathBuf>,
}

fn fit_cluster_and_tree(
    cfg: &PipelineConfig,
    records: &[CounterfactualRecord],
    input_dim: usize,
) -> Result<(KMeansModel, TreeNode)> {
    if records.is_empty() {
        return Err(Error::NoCounterfactuals);
    }
    let states: Vec<Vec<f64>> = records.iter().map(|r| r.state.clone()).collect();
    let k = cfg.k.min(states.len());
    let kmeans = kmeans_fit(&states, k, cfg.n_init, cfg.kmeans_max_iter, cfg.kmeans_seed())?;
    let labels: Vec<usize> = states
        .iter()
        .map(|s| kmeans.assign(s))
        .collect::<Result<_>>()?;
    let tree = tree_fit(
        &states,
        &labels,
        cfg.effective_max_depth(input_dim),
        cfg.min_samples_split,
    )?;
    Ok((kmeans, tree))
}

/// Loads the checkpoint, harvests counterfactuals under the deterministic
/// policy, then clusters, fits the tree, and writes all artifacts.
pub fn run_analyze(cfg: &PipelineConfig) -> Result<AnalysisArtifacts> {
    ensure_out_dir(cfg)?;
    let system = cfg.make_system()?;
    let ckpt = load_checkpoint(&cfg.checkpoint_path(system.name()))?;

    let mut env = ExplorerEnv::new(system.as_ref(), cfg.action_scale, cfg.analysis_max_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.analysis_seed());
    let records = collect_counterfactuals(&ckpt.model, &mut env, cfg.analysis_episodes, &mut rng)?;

    let traj_path = trajectories_path(&cfg.out_dir, system.name());
    write_csv(&records, system.input_dim(), &traj_path)?;

    let (kmeans, tree) = fit_cluster_and_tree(cfg, &records, system.input_dim())?;

    let names = default_feature_names(system.input_dim());
    let text = export_text(&tree, &names);
    let rules_txt = cfg.rules_txt_path(system.name());
    std::fs::write(&rules_txt, &text).map_err(|e| Error::io(rules_txt.display().to_string(), e))?;

    let rule_set = extract_rules(&tree, &names);
    let mut tsv = String::from("conditions\tclass\n");
    for line in rule_set.text.lines() {
        // "IF <conds> THEN Cluster_<label>"
        if let Some(rest) = line.strip_prefix("IF ") {
            if let Some((conds, class)) = rest.rsplit_once(" THEN ") {
                tsv.push_str(&format!("{conds}\t{class}\n"));
            }
        }
    }
    let rules_tsv = cfg.rules_tsv_path(system.name());
    std::fs::write(&rules_tsv, tsv).map_err(|e| Error::io(rules_tsv.display().to_string(), e))?;

    let clusters_csv =
        emit_cluster_plot_data(&records, &kmeans, &clusters_path(&cfg.out_dir, system.name()))?;

    Ok(AnalysisArtifacts {
        trajectories: traj_path,
        records,
        kmeans,
        tree,
        rules_txt,
        clusters_csv,
    })
}

/// Rebuilds clustering and the tree from the persisted trajectories
/// (seeded, so it matches the analyze run exactly), validates against
/// ground truth when the system has one, and writes the report file.
pub fn run_report(cfg: &PipelineConfig) -> Result<ValidationReport> {
    ensure_out_dir(cfg)?;
    let system = cfg.make_system()?;
    let traj_path = trajectories_path(&cfg.out_dir, system.name());
    let records = read_csv(&traj_path)?;

    let mut report = ValidationReport {
        system_name: system.name().to_string(),
        counterfactual_count: records.len(),
        ..Default::default()
    };

    match GroundTruth::for_system(system.name()) {
        Some(gt) => {
            report.validation_available = true;
            report.straddle_violations = validate_counterfactuals(&records, &gt).len();
            let (kmeans, tree) = fit_cluster_and_tree(cfg, &records, system.input_dim())?;
            report.thresholds = recover_thresholds(&tree, &gt, cfg.threshold_tol);
            report.axis_concentration =
                gt.axis_band().map(|band| axis_concentration(&records, band));
            report.cluster_plot_path = emit_cluster_plot_data(
                &records,
                &kmeans,
                &clusters_path(&cfg.out_dir, system.name()),
            )?;
        }
        None => {
            report.validation_available = false;
        }
    }

    let path = report_path(&cfg.out_dir, system.name());
    std::fs::write(&path, report.render()).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(report)
}

/// train + analyze + report.
pub fn run_all(cfg: &PipelineConfig) -> Result<ValidationReport> {
    run_train(cfg)?;
    run_analyze(cfg)?;
    run_report(cfg)
}

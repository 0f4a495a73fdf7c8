//! Experiment orchestration and file output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use cccb::harness::{
    aggregate_csv, aggregate_regret, constraint_violations, endurance_time, mean_gap, probe_coverage_flags,
    probe_episode, pseudo_regret, run_batch, selection_counts, summarize_endurance, EnduranceSample, Episode,
    EpisodeConfig, Job, ProbeReport,
};
use cccb::{EnvironmentInstance, PolicyKind};
use log::info;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, PolicySpec};

/// Command-line settings that are not part of the configuration file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed_offset: u64,
    pub workers: usize,
    pub output: PathBuf,
}

/// What a finished run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub episodes: usize,
    pub probes: ProbeReport,
    pub failed_probes: Vec<String>,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.failed_probes.is_empty()
    }
}

#[derive(Serialize)]
struct ProbeFile<'a> {
    episodes: usize,
    all_pass: bool,
    probes: &'a ProbeReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    skipped: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: String,
    config: &'a ExperimentConfig,
    seed_offset: u64,
    workers: usize,
    seeds: Vec<u64>,
    created_unix_secs: u64,
    files: &'a [String],
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    opts: &'a RunOptions,
    probes: ProbeReport,
    coverage: Vec<bool>,
    episodes: usize,
    files: Vec<String>,
}

impl<'a> Runner<'a> {
    fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let path = self.opts.output.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(relative.to_string());
        Ok(())
    }

    fn episode_config(&self, alpha: f64, known_mu0: bool) -> EpisodeConfig {
        let mut c = EpisodeConfig::new(alpha, self.config.horizon).with_delta(self.config.delta);
        c.lambda = self.config.lambda;
        c.known_mu0 = known_mu0;
        c.recompute_mode = self.config.recompute_mode;
        c.track_coverage = self.config.experiment == Experiment::Probes;
        c
    }

    fn instance(&self, seed: u64) -> Result<Arc<EnvironmentInstance>> {
        EnvironmentInstance::generate(self.config.generator(), seed)
            .map(Arc::new)
            .with_context(|| format!("generating instance {seed}"))
    }

    /// Run `jobs` in chunks, probe every episode, write its log under
    /// `logs/<dir>/seed_<instance>[_<episode>].ndjson` and hand it to `visit`.
    fn run(&mut self, dir: &str, jobs: Vec<Job>, mut visit: impl FnMut(&Job, Episode)) -> Result<()> {
        let chunk = self.opts.workers.max(1) * 4;
        for batch in jobs.chunks(chunk) {
            for (job, result) in batch.iter().zip(run_batch(batch, self.opts.workers)) {
                let episode = result.with_context(|| {
                    format!("episode {} on instance {} aborted", job.episode_seed, job.instance.seed)
                })?;
                self.episodes += 1;
                for p in probe_episode(&episode).probes {
                    self.probes.absorb(p);
                }
                if job.config.track_coverage {
                    self.coverage.push(episode.coverage_held);
                }
                if self.config.write_logs {
                    let name = if job.episode_seed == job.instance.seed {
                        format!("logs/{dir}/seed_{}.ndjson", job.instance.seed)
                    } else {
                        format!("logs/{dir}/seed_{}_{}.ndjson", job.instance.seed, job.episode_seed)
                    };
                    self.write(&name, episode.log.to_ndjson().as_bytes())?;
                }
                visit(job, episode);
            }
        }
        Ok(())
    }

    fn jobs(&self, instances: &[Arc<EnvironmentInstance>], kind: PolicyKind, config: &EpisodeConfig) -> Vec<Job> {
        instances
            .iter()
            .map(|inst| Job {
                instance: inst.clone(),
                kind,
                config: config.clone(),
                episode_seed: inst.seed,
            })
            .collect()
    }

    fn regret_curves(&mut self, instances: &[Arc<EnvironmentInstance>]) -> Result<()> {
        let mut rows = Vec::new();
        let mut summary = String::from(
            "policy,episodes,mean_avg_regret,std_avg_regret,mean_violations,mean_optimistic,mean_conservative\n",
        );
        for spec in self.config.policies() {
            let cfg = self.episode_config(self.config.alpha, spec.known_mu0());
            let jobs = self.jobs(instances, spec.kind(), &cfg);
            let mut curves = Vec::new();
            let (mut violations, mut optimistic, mut conservative) = (0.0, 0.0, 0.0);
            let alpha = self.config.alpha;
            self.run(spec.name(), jobs, |_, ep| {
                violations += constraint_violations(&ep.log, alpha, ep.log.meta.mu0_true) as f64;
                let (n, d) = selection_counts(&ep.log);
                optimistic += n as f64;
                conservative += d as f64;
                curves.push(pseudo_regret(&ep.log));
            })?;
            let label = cccb::harness::policy_label(spec.kind(), spec.known_mu0(), alpha);
            let policy_rows = aggregate_regret(&label, &curves)?;
            let last = policy_rows.last().expect("T ≥ 1");
            let k = curves.len() as f64;
            let _ = writeln!(
                summary,
                "{label},{},{},{},{},{},{}",
                curves.len(),
                last.mean_avg_regret,
                last.std_avg_regret,
                violations / k,
                optimistic / k,
                conservative / k
            );
            rows.extend(policy_rows);
        }
        self.write("regret_curves.csv", aggregate_csv(&rows).as_bytes())?;
        self.write("summary.csv", summary.as_bytes())
    }

    fn table1(&mut self, instances: &[Arc<EnvironmentInstance>]) -> Result<()> {
        let grid = self.config.alpha_grid();
        // C²UCB's actions do not depend on α; one run per seed serves the whole grid.
        let cfg = self.episode_config(grid[0], true);
        let jobs = self.jobs(instances, PolicyKind::C2Ucb, &cfg);
        let mut c2_violations = vec![0.0; grid.len()];
        self.run("c2ucb", jobs, |_, ep| {
            for (acc, &a) in c2_violations.iter_mut().zip(&grid) {
                *acc += constraint_violations(&ep.log, a, ep.log.meta.mu0_true) as f64;
            }
        })?;
        let k = instances.len() as f64;
        let mut csv = String::from(
            "alpha,c2ucb_violations,ccconucb_violations,ccconucb_optimistic,ccconucb_conservative,seeds\n",
        );
        for (i, &alpha) in grid.iter().enumerate() {
            let cfg = self.episode_config(alpha, true);
            let jobs = self.jobs(instances, PolicyKind::CcconUcb, &cfg);
            let (mut violations, mut optimistic, mut conservative) = (0.0, 0.0, 0.0);
            self.run(&format!("ccconucb_known_alpha_{alpha}"), jobs, |_, ep| {
                violations += constraint_violations(&ep.log, alpha, ep.log.meta.mu0_true) as f64;
                let (n, d) = selection_counts(&ep.log);
                optimistic += n as f64;
                conservative += d as f64;
            })?;
            let _ = writeln!(
                csv,
                "{alpha},{},{},{},{},{}",
                c2_violations[i] / k,
                violations / k,
                optimistic / k,
                conservative / k,
                instances.len()
            );
        }
        self.write("table1.csv", csv.as_bytes())
    }

    fn endurance(&mut self, instances: &[Arc<EnvironmentInstance>]) -> Result<()> {
        let grid = self.config.alpha_grid();
        let replicates = self.config.replicates as u64;
        let horizon = self.config.horizon;
        let mut samples = Vec::new();
        let mut sample_csv = String::from("instance_seed,alpha,episode_seed,gap,endurance\n");
        for inst in instances {
            let seeds: Vec<u64> = (0..replicates).map(|r| inst.seed * replicates + r).collect();
            let base = self.episode_config(grid[0], true);
            let jobs: Vec<Job> = seeds
                .iter()
                .map(|&e| Job {
                    instance: inst.clone(),
                    kind: PolicyKind::AlwaysConservative,
                    config: base.clone(),
                    episode_seed: e,
                })
                .collect();
            let mut baselines = Vec::new();
            self.run("always_conservative", jobs, |_, ep| baselines.push(ep.log))?;
            let gap = baselines.iter().map(mean_gap).sum::<f64>() / baselines.len() as f64;
            for &alpha in &grid {
                let cfg = self.episode_config(alpha, true);
                let jobs: Vec<Job> = seeds
                    .iter()
                    .map(|&e| Job {
                        instance: inst.clone(),
                        kind: PolicyKind::CcconUcb,
                        config: cfg.clone(),
                        episode_seed: e,
                    })
                    .collect();
                let mut runs = Vec::new();
                self.run(&format!("ccconucb_known_alpha_{alpha}"), jobs, |job, ep| {
                    runs.push((job.episode_seed, ep.log))
                })?;
                for ((episode_seed, log), baseline) in runs.iter().zip(&baselines) {
                    let endurance = endurance_time(log, baseline)?;
                    let _ = writeln!(
                        sample_csv,
                        "{},{alpha},{episode_seed},{gap},{}",
                        inst.seed,
                        endurance.map_or(String::new(), |e| e.to_string())
                    );
                    samples.push(EnduranceSample {
                        instance_seed: inst.seed,
                        alpha,
                        gap,
                        endurance,
                    });
                }
            }
        }
        let mut csv = String::from("alpha,gap_tercile,runs,censored,mean_endurance\n");
        for row in summarize_endurance(&samples, horizon) {
            let tercile = ["low", "medium", "high"][row.tercile];
            let _ = writeln!(csv, "{},{tercile},{},{},{}", row.alpha, row.runs, row.censored, row.mean_endurance);
        }
        self.write("endurance_samples.csv", sample_csv.as_bytes())?;
        self.write("endurance.csv", csv.as_bytes())
    }

    fn probes(&mut self, instances: &[Arc<EnvironmentInstance>]) -> Result<()> {
        let policies = self.config.policies.clone().unwrap_or_else(|| {
            vec![PolicySpec::CcconucbKnown, PolicySpec::CcconucbUnknown, PolicySpec::C2ucb]
        });
        for spec in policies {
            let cfg = self.episode_config(self.config.alpha, spec.known_mu0());
            let jobs = self.jobs(instances, spec.kind(), &cfg);
            self.run(spec.name(), jobs, |_, _| {})?;
        }
        Ok(())
    }
}

/// Run the configured experiment and write every output file.
pub fn cmd_run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    fs::create_dir_all(&opts.output).with_context(|| format!("creating {}", opts.output.display()))?;
    let seeds = config.seeds(opts.seed_offset);
    let mut runner = Runner {
        config,
        opts,
        probes: ProbeReport::default(),
        coverage: Vec::new(),
        episodes: 0,
        files: Vec::new(),
    };
    let instances = seeds.iter().map(|&s| runner.instance(s)).collect::<Result<Vec<_>>>()?;
    info!("running {} on {} instances", config.experiment, instances.len());
    match config.experiment {
        Experiment::RegretCurves => runner.regret_curves(&instances)?,
        Experiment::Table1 => runner.table1(&instances)?,
        Experiment::Endurance => runner.endurance(&instances)?,
        Experiment::Probes => runner.probes(&instances)?,
    }

    let mut skipped = Vec::new();
    if config.experiment == Experiment::Probes {
        match probe_coverage_flags(&runner.coverage, config.delta) {
            Ok(result) => runner.probes.absorb(result),
            Err(e) => skipped.push(format!("confidence_coverage: {e}")),
        }
    }
    let probe_file = ProbeFile {
        episodes: runner.episodes,
        all_pass: runner.probes.all_pass(),
        probes: &runner.probes,
        skipped,
    };
    let json = serde_json::to_vec_pretty(&probe_file)?;
    runner.write("probes.json", &json)?;

    let created_unix_secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut files = runner.files.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment.to_string(),
        config,
        seed_offset: opts.seed_offset,
        workers: opts.workers,
        seeds,
        created_unix_secs,
        files: &files,
    };
    runner.write("manifest.json", &serde_json::to_vec_pretty(&manifest)?)?;

    let failed_probes = runner
        .probes
        .probes
        .iter()
        .filter(|p| !p.pass)
        .map(|p| p.name.clone())
        .collect();
    Ok(RunSummary {
        episodes: runner.episodes,
        probes: runner.probes,
        failed_probes,
        files,
    })
}

/// Output directory: the flag wins over the configuration file.
pub fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", config.experiment)))
}

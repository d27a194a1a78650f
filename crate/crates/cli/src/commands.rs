use std::fs::File;
use std::io::LineWriter;
use std::path::{Path, PathBuf};

use lagrl_autodiff::Checkpoint;
use lagrl_core::diagnostics::{self, eval_start, evaluate_policy, run_episode, visited_states, Population};
use lagrl_core::lyapunov::{mle_batch, MleMode};
use lagrl_core::mbrl::{load_actor, load_spec, Actor, CsvMetrics, EpisodeMetrics, Policy, TrainConfig, TrainObserver, Trainer, ZeroPolicy};
use lagrl_core::models::{load_models, ModelKind};
use lagrl_core::parallel::Workers;
use lagrl_core::physics::{Env, TrajectoryLog};
use lagrl_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CommandConfig, DiagnoseConfig, EvalConfig, MleRunConfig};
use crate::rundir::{sha256_hex, RunDir};
use crate::{Command, CommonArgs, DiagnoseArgs, EvalArgs, MleArgs, TrainArgs, EXIT_RUNTIME, EXIT_USAGE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
    /// Missing or unreadable checkpoint.
    Load(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) | CliError::Load(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
            CliError::Load(m) => write!(f, "{m}"),
        }
    }
}

/// Configuration mistakes are usage errors; everything else is a runtime
/// failure.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> CliResult<PathBuf> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Mle(a) => mle(a),
    }
}

fn apply_common(common: &CommonArgs, seed: &mut u64, workers: &mut usize) {
    if let Some(s) = common.seed {
        *seed = s;
    }
    if let Some(w) = common.workers {
        *workers = w;
    }
}

/// Loads a checkpoint; a missing or corrupt file is a runtime failure.
fn load_checkpoint(path: &str) -> CliResult<Checkpoint> {
    Checkpoint::load(Path::new(path))
        .map_err(|e| CliError::Load(format!("cannot load checkpoint {path}: {e}")))
}

/// Errors after setup are runtime failures whatever their kind.
fn runtime<T>(r: lagrl_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::Runtime)
}

fn check_env(flag: &Option<String>, actual: &str) -> CliResult<()> {
    match flag {
        Some(e) if e != actual => Err(CliError::Usage(format!("--env {e} does not match the checkpoint's environment {actual}"))),
        _ => Ok(()),
    }
}

fn create_run(out: &Path, command: &str, env: &str, model: &str, seed: u64, config_text: &str) -> CliResult<RunDir> {
    let dir = runtime(RunDir::create(out, command, env, model, seed))?;
    runtime(dir.write("config.toml", config_text))?;
    Ok(dir)
}

struct TrainLog<'a> {
    dir: &'a RunDir,
    csv: CsvMetrics<LineWriter<File>>,
    config_hash: String,
    every: usize,
    quiet: bool,
}

impl TrainObserver for TrainLog<'_> {
    fn episode(&mut self, trainer: &Trainer, m: &EpisodeMetrics) -> lagrl_core::Result<()> {
        self.csv.episode(trainer, m)?;
        if !self.quiet {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            eprintln!(
                "episode {} steps {} return {:.2} dyn {} actor {} eval {}",
                m.episode,
                m.env_steps,
                m.ret,
                f(m.dyn_loss),
                f(m.actor_loss),
                f(m.eval_return)
            );
        }
        if self.every > 0 && m.episode % self.every == 0 && !trainer.config.oracle_model {
            trainer
                .checkpoint(&self.config_hash)?
                .save(&self.dir.file(&format!("checkpoints/ep{:05}.ckpt", m.episode)))?;
        }
        Ok(())
    }
}

fn train(a: TrainArgs) -> CliResult<PathBuf> {
    let mut c = <TrainConfig as CommandConfig>::base(a.common.config.as_deref())?;
    apply_common(&a.common, &mut c.seed, &mut c.workers);
    if let Some(e) = a.env {
        c.env = e;
    }
    if let Some(m) = a.model {
        c.model = m.parse::<ModelKind>()?;
    }
    if let Some(n) = a.episodes {
        c.episodes = n;
    }
    c.validate()?;
    let text = c.to_toml()?;
    let config_hash = sha256_hex(text.as_bytes());
    let model = if c.oracle_model { "oracle" } else { c.model.name() };
    let dir = create_run(&a.common.out, "train", &c.env, model, c.seed, &text)?;
    std::fs::create_dir_all(dir.file("checkpoints")).map_err(|e| CliError::Runtime(e.into()))?;

    let mut trainer = runtime(Trainer::new(c))?;
    let file = runtime(File::create(dir.file("metrics.csv")).map_err(Error::from))?;
    let mut log = TrainLog {
        dir: &dir,
        csv: runtime(CsvMetrics::new(LineWriter::new(file)))?,
        config_hash: config_hash.clone(),
        every: trainer.config.checkpoint_every,
        quiet: a.common.quiet,
    };
    let outcome = trainer.run(&mut log);
    drop(log);
    let save_final = |name: &str| -> lagrl_core::Result<()> {
        if trainer.config.oracle_model {
            return Ok(());
        }
        trainer.checkpoint(&config_hash)?.save(&dir.file(name))?;
        Ok(())
    };
    match outcome {
        Ok(summary) => {
            runtime(save_final("final.ckpt"))?;
            runtime(dir.write_json("summary.json", &summary))?;
            runtime(dir.write_manifest())?;
            Ok(dir.path)
        }
        Err(e) => {
            if let Err(ck) = save_final("failure.ckpt") {
                eprintln!("could not write failure checkpoint: {ck}");
            }
            let _ = dir.write_manifest();
            Err(CliError::Runtime(e))
        }
    }
}

fn checkpoint_model(ck: &Checkpoint) -> String {
    ck.meta("model").unwrap_or("actor").to_string()
}

fn eval(a: EvalArgs) -> CliResult<PathBuf> {
    let mut c = EvalConfig::base(a.common.config.as_deref())?;
    apply_common(&a.common, &mut c.seed, &mut c.workers);
    if let Some(p) = a.policy {
        c.policy = p;
    }
    if let Some(n) = a.episodes {
        c.episodes = n;
    }
    c.validate()?;
    let ck = load_checkpoint(&c.policy)?;
    let spec = runtime(load_spec(&ck))?;
    check_env(&a.env, &spec.name)?;
    let actor = runtime(load_actor(&ck))?;
    let env = runtime(Env::new(spec))?;
    let dir = create_run(&a.common.out, "eval", &env.spec().name, &checkpoint_model(&ck), c.seed, &c.to_toml()?)?;

    let workers = Workers::new(c.workers);
    let mut report = runtime(evaluate_policy(&env, &actor, c.episodes, c.seed, &workers))?;
    report.policy = c.policy.clone();
    runtime(dir.write_json("report.json", &report))?;

    let s0 = eval_start(&env, c.seed, 0);
    let mut traj = TrajectoryLog::start(&env, &s0);
    runtime(run_episode(&env, &actor, s0, Some(&mut traj)))?;
    let mut buf = Vec::new();
    runtime(traj.write_csv(&mut buf))?;
    runtime(dir.write("trajectory.csv", buf))?;
    runtime(dir.write_manifest())?;
    if !a.common.quiet {
        eprintln!("mean return {:.2} ± {:.2} over {} episodes, solved {}", report.mean, report.std, report.episodes, report.solved);
    }
    Ok(dir.path)
}

fn diagnose(a: DiagnoseArgs) -> CliResult<PathBuf> {
    let mut c = DiagnoseConfig::base(a.common.config.as_deref())?;
    apply_common(&a.common, &mut c.seed, &mut c.workers);
    if let Some(p) = a.policy {
        c.policy = p;
    }
    if let Some(n) = a.population {
        c.population = n;
    }
    if let Some(h) = a.horizon {
        c.horizon = h;
    }
    if let Some(r) = a.work_rule {
        c.work_rule = r.parse()?;
    }
    c.validate()?;
    let ck = load_checkpoint(&c.policy)?;
    let spec = runtime(load_spec(&ck))?;
    check_env(&a.env, &spec.name)?;
    let (model, _, _) = runtime(load_models(&ck))?;
    let actor = runtime(load_actor(&ck))?;
    let env = runtime(Env::new(spec))?;
    let dir = create_run(&a.common.out, "diagnose", &env.spec().name, model.name(), c.seed, &c.to_toml()?)?;

    let workers = Workers::new(c.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let starts = runtime(visited_states(&env, &actor, c.visit_episodes, c.population, &mut rng))?;
    let pop = runtime(Population::from_policy(&env, &actor, starts, c.horizon))?;
    let report = runtime(diagnostics::diagnose(&model, &env, &pop, c.work_rule, &workers))?;

    let csv = |series: &diagnostics::ErrorSeries| -> CliResult<Vec<u8>> {
        let mut buf = Vec::new();
        runtime(series.write_csv(&mut buf))?;
        Ok(buf)
    };
    runtime(dir.write("state_error.csv", csv(&report.state_error)?))?;
    runtime(dir.write("energy_error.csv", csv(&report.energy_error)?))?;
    if let Some(l) = &report.learned_energy_error {
        runtime(dir.write("learned_energy_error.csv", csv(l)?))?;
    }
    runtime(dir.write_json("report.json", &report))?;
    runtime(dir.write_manifest())?;
    if !a.common.quiet {
        eprintln!(
            "trajectory error {:.6e}, final energy error {:.6e}",
            report.trajectory_error,
            report.energy_error.last()
        );
    }
    Ok(dir.path)
}

fn mle(a: MleArgs) -> CliResult<PathBuf> {
    let mut c = MleRunConfig::base(a.common.config.as_deref())?;
    apply_common(&a.common, &mut c.seed, &mut c.workers);
    if let Some(e) = a.env {
        c.env = e;
    }
    if !a.policy.is_empty() {
        c.policies = a.policy;
    }
    if let Some(m) = a.mode {
        c.mle.mode = m.parse::<MleMode>()?;
    }
    if let Some(n) = a.starts {
        c.starts = n;
    }
    c.validate()?;

    let env = runtime(Env::preset(&c.env))?;
    if c.mle.mode == MleMode::FiniteTime && (env.spec().goal_hold_steps == 0 || env.spec().goal_tolerance <= 0.0) {
        return Err(CliError::Usage(format!("finite-time mode needs a goal predicate; {} has none", c.env)));
    }
    let mut actors: Vec<(String, Option<Actor>)> = Vec::new();
    let mut label = "zero".to_string();
    for p in &c.policies {
        if p == "zero" {
            actors.push((p.clone(), None));
            continue;
        }
        let ck = load_checkpoint(p)?;
        let spec = runtime(load_spec(&ck))?;
        if spec.name != c.env {
            return Err(CliError::Usage(format!("checkpoint {p} is for {}, not {}", spec.name, c.env)));
        }
        if label == "zero" {
            label = checkpoint_model(&ck);
        }
        actors.push((p.clone(), Some(runtime(load_actor(&ck))?)));
    }
    let dir = create_run(&a.common.out, "mle", &c.env, &label, c.seed, &c.to_toml()?)?;

    let zero = ZeroPolicy {
        action_dim: env.spec().action_dim(),
    };
    let policies: Vec<(String, &dyn Policy)> = actors
        .iter()
        .map(|(id, act)| (id.clone(), act.as_ref().map_or(&zero as &dyn Policy, |x| x as &dyn Policy)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let starts: Vec<_> = (0..c.starts).map(|_| env.reset(&mut rng)).collect();
    let workers = Workers::new(c.workers);
    let report = runtime(mle_batch(&env, &policies, &starts, &c.mle, c.seed, &workers))?;
    runtime(dir.write_json("mle.json", &report))?;
    runtime(dir.write_manifest())?;
    if !a.common.quiet {
        eprintln!("mle {:.6} ± {:.6} 1/s over {} runs", report.mle, report.std, report.runs.len());
    }
    Ok(dir.path)
}

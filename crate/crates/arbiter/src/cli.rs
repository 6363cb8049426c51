//! Command-line interface and the command implementations behind it.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use arbiter_core::agent::{pretrain, Agent, PretrainReport};
use arbiter_core::evaluation::{eval_seed, evaluate, summarize, Arbiter, Assistance, EpisodeRecord, EvalSummary};
use arbiter_core::training::{run_training, trailing_success, EpisodeMetrics};
use arbiter_core::users::UserMode;
use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::metrics::{MetricsWriter, TRAILING_WINDOW};
use crate::report::EvalReport;
use crate::server::{serve, AppState};
use crate::session::InputSource;
use crate::trace::save_trace;

#[derive(Debug, Parser)]
#[command(name = "arbiter", version, about = "Shared-control arbitration testbed")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// shared or direct
    #[arg(long, global = true)]
    pub assistance: Option<Assistance>,
    /// straight, noisy<sigma> (e.g. noisy0.5) or biased[<scale>]
    #[arg(long, global = true)]
    pub user: Option<UserMode>,
    /// Training episodes for `train`, evaluation episodes for `eval` and `trace`.
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub port: Option<u16>,
    /// Output file, or directory for `train`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the goal head and the actor to the analytic sub-policies.
    Pretrain(#[command(flatten)] Common),
    /// Run the training loop with a simulated user.
    Train(#[command(flatten)] Common),
    /// Evaluate shared or direct control over matched episodes.
    Eval(#[command(flatten)] Common),
    /// Export per-step arbitration traces as CSV.
    Trace(#[command(flatten)] Common),
    /// Serve live teleoperation sessions over WebSocket.
    Serve(#[command(flatten)] Common),
    /// Write or show the run configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the default configuration, or write it to --output.
    Init(#[command(flatten)] Common),
    /// Print the resolved configuration after flags are applied.
    Show(#[command(flatten)] Common),
}

/// Loads the config and applies the flags that override it.
pub fn resolve(common: &Common, episodes_are_training: bool) -> CliResult<RunConfig> {
    let mut config = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if let Some(user) = common.user {
        config.user.mode = user;
    }
    if let Some(n) = common.episodes {
        if episodes_are_training {
            config.agent.episodes = n;
        } else {
            config.run.eval_episodes = n;
        }
    }
    if let Some(port) = common.port {
        config.serve.port = port;
    }
    if let Some(a) = common.assistance {
        config.serve.assistance = a;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Pretrain(c) => {
            let config = resolve(&c, true)?;
            let path = c
                .output
                .unwrap_or_else(|| config.run.output_dir.join("pretrained.ckpt"));
            let (_, report) = cmd_pretrain(&config, &path)?;
            println!(
                "pretrained: head error {:.5}, actor error {:.5} ({} head / {} actor epochs) -> {}",
                report.head_error,
                report.actor_error,
                report.head_epochs,
                report.actor_epochs,
                path.display()
            );
            Ok(())
        }
        Command::Train(c) => {
            let config = resolve(&c, true)?;
            let dir = c.output.unwrap_or_else(|| {
                config
                    .run
                    .output_dir
                    .join(format!("train-{}-s{}", reward_label(&config), config.run.seed))
            });
            let out = cmd_train(&config, c.checkpoint.as_deref(), &dir)?;
            let last = out.metrics.last();
            println!(
                "trained {} episodes, trailing-{TRAILING_WINDOW} success {:.2}, return {:.2} -> {}",
                out.metrics.len(),
                trailing_success(&out.metrics, TRAILING_WINDOW),
                last.map_or(0.0, |m| m.return_total),
                dir.display()
            );
            Ok(())
        }
        Command::Eval(c) => {
            let config = resolve(&c, false)?;
            let assistance = c.assistance.unwrap_or_default();
            let agent = load_for(assistance, &config, c.checkpoint.as_deref())?;
            let records = cmd_eval_records(&config, agent.as_ref(), assistance)?;
            let report = EvalReport::new(
                &config,
                c.checkpoint.as_deref().filter(|_| assistance == Assistance::Shared),
                assistance,
                config.run.seed,
                eval_seed(config.run.seed),
                &records,
            );
            let path = c.output.unwrap_or_else(|| {
                config
                    .run
                    .output_dir
                    .join(format!("eval-{assistance}-{}-s{}.json", config.user.mode, config.run.seed))
            });
            ensure_parent(&path)?;
            report.save(&path)?;
            println!("{} -> {}", summary_line(assistance, config.user.mode, &report.summary), path.display());
            Ok(())
        }
        Command::Trace(c) => {
            let config = resolve(&c, false)?;
            let assistance = c.assistance.unwrap_or_default();
            let agent = load_for(assistance, &config, c.checkpoint.as_deref())?;
            let records = cmd_eval_records(&config, agent.as_ref(), assistance)?;
            let path = c.output.unwrap_or_else(|| {
                config
                    .run
                    .output_dir
                    .join(format!("trace-{assistance}-{}-s{}.csv", config.user.mode, config.run.seed))
            });
            ensure_parent(&path)?;
            save_trace(&path, config.env.goal_count, &records)?;
            let rows: usize = records.iter().map(|r| r.steps).sum();
            println!("{} episodes, {rows} rows -> {}", records.len(), path.display());
            Ok(())
        }
        Command::Serve(c) => {
            let config = resolve(&c, false)?;
            let agent = load_for(config.serve.assistance, &config, c.checkpoint.as_deref())?;
            let source = match c.user {
                Some(mode) => InputSource::Simulated(mode),
                None => InputSource::Remote,
            };
            cmd_serve(config, agent, source)
        }
        Command::Config { action } => match action {
            ConfigAction::Init(c) => {
                let text = RunConfig::default().to_toml();
                match c.output {
                    Some(path) => {
                        ensure_parent(&path)?;
                        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
                    }
                    None => {
                        print!("{text}");
                        Ok(())
                    }
                }
            }
            ConfigAction::Show(c) => {
                print!("{}", resolve(&c, false)?.to_toml());
                Ok(())
            }
        },
    }
}

fn reward_label(config: &RunConfig) -> &'static str {
    match config.reward.mode {
        arbiter_core::reward::RewardMode::Combined => "combined",
        arbiter_core::reward::RewardMode::EnvOnly => "env-only",
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        None => Ok(()),
    }
}

fn load_for(assistance: Assistance, config: &RunConfig, checkpoint: Option<&Path>) -> CliResult<Option<Agent>> {
    match (assistance, checkpoint) {
        (Assistance::Direct, _) => Ok(None),
        (Assistance::Shared, Some(path)) => Ok(Some(checkpoint::load(path, &config.agent)?)),
        (Assistance::Shared, None) => Err(CliError::Usage(
            "shared assistance needs --checkpoint (or use --assistance direct)".into(),
        )),
    }
}

pub fn summary_line(assistance: Assistance, user: UserMode, s: &EvalSummary) -> String {
    format!(
        "{assistance} / {user}: success {}/{}, travel {:.1} ± {:.1} cm, collisions {}/{}",
        s.successes, s.episodes, s.travel_mean_cm, s.travel_std_cm, s.collision_episodes, s.episodes
    )
}

/// Fresh agent from the run seed, pretrained with the same seed. Writes the
/// checkpoint and a JSON report next to it.
pub fn cmd_pretrain(config: &RunConfig, path: &Path) -> CliResult<(Agent, PretrainReport)> {
    let env = &config.env;
    let seed = config.run.seed;
    let mut agent = Agent::new(config.agent.clone(), env.goal_count, env.max_speed, seed)?;
    log::info!("pretraining with seed {seed}");
    let report = pretrain(&mut agent, env, &config.intent, &config.pretrain, seed)?;
    ensure_parent(path)?;
    checkpoint::save(&agent, path)?;
    let report_path = path.with_extension("pretrain.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&report_path, json + "\n").map_err(|e| CliError::io(&report_path, e))?;
    Ok((agent, report))
}

#[derive(Debug)]
pub struct TrainOutput {
    pub agent: Agent,
    pub metrics: Vec<EpisodeMetrics>,
    pub best_episode: usize,
}

/// Trains from `checkpoint`, or from an in-process pretraining run when none
/// is given. Writes `metrics.jsonl`, `final.ckpt` and `best.ckpt` (highest
/// trailing success, earliest on ties) into `dir`.
pub fn cmd_train(config: &RunConfig, checkpoint: Option<&Path>, dir: &Path) -> CliResult<TrainOutput> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let agent = match checkpoint {
        Some(path) => checkpoint::load(path, &config.agent)?,
        None => cmd_pretrain(config, &dir.join("pretrained.ckpt"))?.0,
    };
    let mut writer = MetricsWriter::create(&dir.join("metrics.jsonl"))?;
    let best_path = dir.join("best.ckpt");
    let mut best: Option<(f64, usize)> = None;
    let mut failure = None;
    let (agent, metrics) = run_training(agent, config.training(), config.run.seed, |m, agent| {
        let line = match writer.write(m) {
            Ok(l) => l,
            Err(e) => {
                failure = Some(e);
                return Err(arbiter_core::Error::State("metrics write failed".into()));
            }
        };
        if best.is_none_or(|(score, _)| line.trailing_success > score) {
            best = Some((line.trailing_success, m.episode));
            if let Err(e) = checkpoint::save(agent, &best_path) {
                failure = Some(e);
                return Err(arbiter_core::Error::State("checkpoint write failed".into()));
            }
        }
        if (m.episode + 1) % 20 == 0 {
            log::info!(
                "episode {}: trailing success {:.2}, return {:.2}",
                m.episode + 1,
                line.trailing_success,
                m.return_total
            );
        }
        Ok(())
    })
    .map_err(|e| failure.take().unwrap_or(CliError::Core(e)))?;
    checkpoint::save(&agent, &dir.join("final.ckpt"))?;
    Ok(TrainOutput {
        agent,
        metrics,
        best_episode: best.map_or(0, |(_, e)| e),
    })
}

/// Noise-free evaluation episodes on the run's evaluation stream.
pub fn cmd_eval_records(config: &RunConfig, agent: Option<&Agent>, assistance: Assistance) -> CliResult<Vec<EpisodeRecord>> {
    let arbiter = match (assistance, agent) {
        (Assistance::Direct, _) => Arbiter::Direct,
        (Assistance::Shared, Some(a)) => Arbiter::Shared(a),
        (Assistance::Shared, None) => return Err(CliError::Usage("shared assistance needs an agent".into())),
    };
    Ok(evaluate(
        arbiter,
        &config.eval_settings(),
        eval_seed(config.run.seed),
        config.run.eval_episodes,
    )?)
}

pub fn eval_summary(config: &RunConfig, agent: Option<&Agent>, assistance: Assistance) -> CliResult<EvalSummary> {
    Ok(summarize(&cmd_eval_records(config, agent, assistance)?))
}

pub fn cmd_serve(config: RunConfig, agent: Option<Agent>, source: InputSource) -> CliResult<()> {
    let port = config.serve.port;
    let state = AppState::new(config, agent, source).map_err(CliError::Usage)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    let addr = SocketAddr::from((Ipv4Addr::UNSPECIFIED, port));
    runtime
        .block_on(serve(state, addr, |bound| {
            println!("listening on {bound}");
            log::info!("serving /session, /health and /config on {bound}");
        }))
        .map_err(|e| CliError::Runtime(format!("cannot serve on port {port}: {e}")))
}

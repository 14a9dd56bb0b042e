use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ranbench::config::BenchConfig;
use ranbench::dynamic::{run_dynamic, write_intervals, write_run};
use ranbench::hpo::{default_space, parse_space, run_hpo, HpoOptions};
use ranbench::offline::{powers_of, run_offline, trial_score, Method};
use ranbench::rl::{
    checkpoint_metadata, evaluate_into_store, load_agent, median_record, save_agent, train_agent,
    trajectory_of, write_curve, write_trajectory,
};
use ranbench::scenarios::{manifest_text, resolve, resolve_list, select};
use ranbench::scorecard::Scorecard;
use ranbench_core::envproto::serve_stdio;
use ranbench_core::ransim::Simulator;
use ranbench_core::rlagent::median_trial;
use ranbench_core::study::StudyStore;

#[derive(Parser)]
#[command(name = "ranbench", version, about = "Benchmark RL and offline optimizers on eNB power tuning")]
struct Cli {
    /// Study store (JSON-lines record log).
    #[arg(long, global = true, default_value = "ranbench-store.jsonl")]
    store: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding any of the default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan sampling seeds for scenarios whose equal-power attachment leaves an eNB idle.
    SampleScenarios {
        #[arg(long, default_value_t = 6)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 10_000)]
        max_seed: u64,
        /// Write ts<k>.toml manifests here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Hold static powers and print the score over time.
    Simulate {
        #[arg(long, default_value = "TS1")]
        scenario: String,
        /// Comma-separated dBm per eNB.
        #[arg(long, default_value = "30,30,30")]
        powers: String,
        #[arg(long)]
        duration_ms: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        every_ms: u64,
    },
    /// Run an offline optimizer study on each scenario.
    Optimize {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value = "all")]
        scenarios: String,
        /// Trial budget for tpe and random; grid and baseline have a fixed size.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads for grid and random studies.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train one agent on the given scenarios and write a checkpoint.
    TrainRl {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timesteps: Option<u64>,
        #[arg(long, default_value = "all")]
        scenarios: String,
        /// Learning curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate a checkpoint from random initial powers and record the runs.
    EvalRl {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "all")]
        scenarios: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        duration_s: Option<f64>,
        /// Write the median run's power trajectory per scenario here.
        #[arg(long)]
        trajectory_dir: Option<PathBuf>,
    },
    /// TPE search over environment and agent hyperparameters.
    TuneHparams {
        /// Search space TOML; defaults to the bundled priors.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        timesteps: Option<u64>,
        #[arg(long, default_value = "all")]
        scenarios: String,
        #[arg(long, default_value = "hpo")]
        study: String,
        /// Three trials of 2000 timesteps with short evaluations.
        #[arg(long)]
        smoke: bool,
    },
    /// Let UEs cycle through the route scenarios while the agent adapts.
    DynamicTrial {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cycles: Option<usize>,
        /// Time series CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dwell intervals CSV.
        #[arg(long)]
        intervals: Option<PathBuf>,
    },
    /// Compare baseline, grid, TPE and RL per scenario.
    Scorecard {
        #[arg(long, default_value = "all")]
        scenarios: String,
        /// Require exactly this many RL runs per scenario.
        #[arg(long)]
        rl_trials: Option<usize>,
        /// Also print every RL run.
        #[arg(long)]
        points: bool,
    },
    /// Serve environment episodes over stdin/stdout.
    ServeEnv {
        #[arg(long, default_value = "TS1")]
        scenario: String,
        /// First episode seed; defaults to --seed.
        #[arg(long)]
        episode_seed: Option<u64>,
    },
    /// Write a study as CSV, list studies, or export the median RL trajectory.
    Export {
        #[arg(long, required_unless_present = "list")]
        study: Option<String>,
        #[arg(long)]
        list: bool,
        /// For RL studies: the median run's trajectory instead of the trial table.
        #[arg(long)]
        median_trajectory: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_powers(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse::<f64>().with_context(|| format!("bad power '{p}'"))).collect()
}

fn names(list: &str) -> anyhow::Result<Vec<String>> {
    Ok(resolve_list(list)?.into_iter().map(|s| s.name).collect())
}

fn agent(cfg: &mut BenchConfig, path: &Path) -> anyhow::Result<ranbench_core::ActorCritic> {
    let (policy, env) = load_agent(path)?;
    if let Some(env) = env {
        cfg.env = env;
    }
    Ok(policy)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    let seed = cli.seed;
    let open_store = || StudyStore::open(&cli.store).with_context(|| format!("opening store {}", cli.store.display()));
    let mut out = io::stdout().lock();

    match cli.command {
        Command::SampleScenarios { count, start, max_seed, out_dir } => {
            writeln!(out, "name\tseed\tserving_enbs\tbaseline\tgrid_best\tgrid_best_powers")?;
            for (spec, s) in select(&cfg, start, count, max_seed)? {
                let p: Vec<String> = s.grid_best_powers.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}\t{}\t{}\t{:.6}\t{:.6}\t{}", spec.name, s.seed, s.enbs_used, s.baseline, s.grid_best, p.join(","))?;
                if let Some(dir) = &out_dir {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{}.toml", spec.name.to_lowercase()));
                    std::fs::write(&path, manifest_text(&spec, &s.note()))?;
                }
            }
        }
        Command::Simulate { scenario, powers, duration_ms, every_ms } => {
            let spec = resolve(&scenario)?;
            let powers = parse_powers(&powers)?;
            let duration = duration_ms.unwrap_or(cfg.offline.trial_duration_ms);
            anyhow::ensure!(every_ms > 0 && duration % every_ms == 0, "--every-ms must divide the duration");
            let mut sim = Simulator::new(&spec, cfg.radio.clone(), cfg.env.default_power_dbm)?;
            for (b, &p) in powers.iter().enumerate() {
                sim.set_tx_power(b, p)?;
            }
            sim.advance(cfg.env.warmup_ms)?;
            writeln!(out, "t_ms\tscore")?;
            for k in 1..=duration / every_ms {
                sim.advance(every_ms)?;
                writeln!(out, "{}\t{:.6}", k * every_ms, sim.score_now(&cfg.score)?.value)?;
            }
        }
        Command::Optimize { method, scenarios, trials, jobs } => {
            let mut store = open_store()?;
            let n = trials.unwrap_or(cfg.offline.n_trials);
            writeln!(out, "study\ttrials\tbest_score\tbest_powers")?;
            for spec in resolve_list(&scenarios)? {
                let name = run_offline(&mut store, &cfg, &spec, method, n, seed, jobs)?;
                let best = store.best_trial(&name)?;
                let p: Vec<String> = powers_of(&best.params)?.iter().map(|x| x.to_string()).collect();
                writeln!(out, "{name}\t{}\t{:.6}\t{}", store.trials(&name).count(), best.score.unwrap_or(f64::NAN), p.join(","))?;
            }
        }
        Command::TrainRl { out: path, timesteps, scenarios, curve } => {
            let specs = resolve_list(&scenarios)?;
            let total = timesteps.unwrap_or(cfg.rl.total_timesteps);
            let meta = checkpoint_metadata(&cfg, &specs, total, seed);
            let every = cfg.rl.checkpoint_every;
            let n_updates = total / cfg.hyper.rollout_len() as u64;
            let mut save_err = None;
            let trained = train_agent(&cfg, &specs, total, seed, |s, net| {
                let score = s.mean_episode_score.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
                eprintln!(
                    "update {}/{n_updates} timesteps {} episodes {} mean_score {score} value_loss {:.4e} entropy {:.4} kl {:.2e}",
                    s.update, s.timesteps, s.episodes, s.value_loss, s.entropy, s.approx_kl
                );
                if every > 0 && s.update % every == 0 && save_err.is_none() {
                    save_err = save_agent(&path, net, meta.clone()).err();
                }
            })?;
            if let Some(e) = save_err {
                return Err(e.context("periodic checkpoint"));
            }
            save_agent(&path, &trained.policy, meta)?;
            if let Some(c) = curve {
                write_curve(output(Some(&c))?, &trained.curve)?;
            }
            writeln!(out, "checkpoint\t{}\nupdates\t{}", path.display(), trained.curve.len())?;
        }
        Command::EvalRl { checkpoint, scenarios, trials, duration_s, trajectory_dir } => {
            let policy = agent(&mut cfg, &checkpoint)?;
            let mut store = open_store()?;
            let n = trials.unwrap_or(cfg.rl.eval_trials);
            let duration = duration_s.map_or(cfg.rl.eval_duration_ms, |s| (s * 1000.0).round() as u64);
            writeln!(out, "study\ttrials\tmin\tmedian\tmax")?;
            for spec in resolve_list(&scenarios)? {
                let (name, runs) = evaluate_into_store(&mut store, &cfg, &policy, &spec, n, duration, seed)?;
                let mut s: Vec<f64> = runs.iter().map(|t| t.final_score).collect();
                s.sort_by(f64::total_cmp);
                let m = median_trial(&runs).context("no evaluation runs")?;
                writeln!(out, "{name}\t{}\t{:.6}\t{:.6}\t{:.6}", s.len(), s[0], runs[m].final_score, s[s.len() - 1])?;
                if let Some(dir) = &trajectory_dir {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("{}_median.csv", spec.name.to_lowercase()));
                    write_trajectory(output(Some(&path))?, &runs[m].trajectory)?;
                }
            }
        }
        Command::TuneHparams { space, trials, timesteps, scenarios, study, smoke } => {
            let space = match space {
                Some(p) => parse_space(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => default_space(),
            };
            let mut opts = HpoOptions { study, ..HpoOptions::from_config(&cfg) };
            if smoke {
                (opts.n_trials, opts.timesteps_per_trial, opts.eval_trials, opts.eval_duration_ms) = (3, 2000, 1, 2000);
            }
            opts.n_trials = trials.unwrap_or(opts.n_trials);
            opts.timesteps_per_trial = timesteps.unwrap_or(opts.timesteps_per_trial);
            let specs = resolve_list(&scenarios)?;
            let mut store = open_store()?;
            writeln!(out, "trial_id\tstate\tscore\twall_time_s")?;
            out.flush()?;
            run_hpo(&mut store, &cfg, &space, &specs, &opts, seed, |t| {
                let score = t.score.map_or_else(|| "-".into(), |s| format!("{s:.6}"));
                println!("{}\t{}\t{score}\t{:.1}", t.trial_id, t.state, t.metadata.wall_time_s);
            })?;
            match store.best_trial(&opts.study) {
                Ok(best) => {
                    let p: Vec<String> = best.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    println!("best\t{}\t{:.6}\t{}", best.trial_id, best.score.unwrap_or(f64::NAN), p.join(" "));
                }
                Err(_) => println!("best\t-\tno complete trials"),
            }
        }
        Command::DynamicTrial { checkpoint, cycles, out: path, intervals } => {
            let policy = agent(&mut cfg, &checkpoint)?;
            let route: Vec<_> = cfg.dynamic.route.iter().map(|n| resolve(n)).collect::<anyhow::Result<_>>()?;
            let run = run_dynamic(&cfg, &policy, &route, cycles.unwrap_or(cfg.dynamic.cycles))?;
            if let Some(p) = path {
                write_run(output(Some(&p))?, &run)?;
            }
            writeln!(out, "scenario\tstart_ms\tend_ms\tfinal_5s_mean\tbaseline")?;
            for i in &run.intervals {
                let spec = route.iter().find(|s| s.name == i.scenario).expect("interval of a route stop");
                let p0 = cfg.env.default_power_dbm;
                let base = trial_score(&cfg, spec, &[p0; 3])?;
                let tail = run.tail_mean(i, 5000).unwrap_or(f64::NAN);
                writeln!(out, "{}\t{}\t{}\t{tail:.6}\t{base:.6}", i.scenario, i.start_ms, i.end_ms)?;
            }
            if let Some(p) = intervals {
                write_intervals(output(Some(&p))?, &run)?;
            }
        }
        Command::Scorecard { scenarios, rl_trials, points } => {
            let store = open_store()?;
            let card = Scorecard::assemble(&store, &names(&scenarios)?, seed, rl_trials)?;
            write!(out, "{}", card.render())?;
            if points {
                write!(out, "{}", card.render_points())?;
            }
        }
        Command::ServeEnv { scenario, episode_seed } => {
            let env_cfg = cfg.env_config(resolve(&scenario)?);
            drop(out);
            serve_stdio(env_cfg, episode_seed.unwrap_or(seed), io::stdin().lock(), io::stdout().lock())?;
            return Ok(());
        }
        Command::Export { study, list, median_trajectory, out: path } => {
            let store = open_store()?;
            drop(out);
            let mut w = output(path.as_deref())?;
            if list {
                for s in store.studies() {
                    writeln!(w, "{s}\t{}", store.trials(s).count())?;
                }
            } else {
                let study = study.expect("clap requires --study");
                if median_trajectory {
                    let rec = median_record(&store, &study).with_context(|| format!("no complete runs in '{study}'"))?;
                    let traj = trajectory_of(rec).with_context(|| format!("'{study}' records carry no trajectory"))?;
                    write_trajectory(w, &traj)?;
                    return Ok(());
                } else {
                    if store.space(&study).is_none() {
                        bail!("missing study '{study}'");
                    }
                    store.export_csv(&study, &mut w)?;
                }
            }
            w.flush()?;
            return Ok(());
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

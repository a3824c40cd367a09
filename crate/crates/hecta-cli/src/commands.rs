//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use hecta_core::learning::{
    evaluate_policy, metrics_from_csv, metrics_to_csv, robustness_sweep, rollout, run_training,
    trace_to_csv, CoopVariant, EvalPolicy, EvalStats, ExecMode, FixedScenario, MetricsRow,
    RolloutOptions, RolloutPolicy, TraceRow, TrainConfig, TRACE_HEADER,
};
use hecta_core::mixing::NetBundle;
use hecta_core::scenario::{
    generate_scenario, load_scenario, preset_params, save_scenario, AttrSpec, DistributionKind,
    EntityCountSpec, GenerationParams, GridDims, ScenarioSpec, VariationKind, ZHONGFU_SCN,
};
use hecta_core::world::World;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{sha256_hex, RunManifest};
use crate::OutArg;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn read_scenario(path: &Path) -> Result<(Arc<ScenarioSpec>, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let spec = load_scenario(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok((Arc::new(spec), sha256_hex(&bytes)))
}

fn read_checkpoint(path: &Path) -> Result<NetBundle> {
    let file = fs::File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    NetBundle::load_checkpoint(std::io::BufReader::new(file))
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

fn parse_attr(s: &str) -> Result<AttrSpec> {
    if let Some((lo, hi)) = s.split_once("..") {
        Ok(AttrSpec::Range(lo.trim().parse()?, hi.trim().parse()?))
    } else {
        Ok(AttrSpec::Fixed(s.trim().parse()?))
    }
}

fn parse_triple(s: &str, what: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("{what} wants three comma-separated counts, got `{s}`");
    }
    Ok((
        parts[0].trim().parse()?,
        parts[1].trim().parse()?,
        parts[2].trim().parse()?,
    ))
}

fn parse_durations(s: &str) -> Result<Vec<(u32, usize)>> {
    s.split(',')
        .map(|pair| {
            let (d, n) = pair
                .split_once(':')
                .with_context(|| format!("duration mix entries look like `1:96`, got `{pair}`"))?;
            Ok((d.trim().parse()?, n.trim().parse()?))
        })
        .collect()
}

fn parse_distribution(s: &str, grid: GridDims) -> Result<DistributionKind> {
    match s {
        "random" => Ok(DistributionKind::UniformRandom),
        "same" => Ok(DistributionKind::SinglePoint),
        "checkin" => Ok(DistributionKind::checkin_default(grid)),
        other => bail!("unknown distribution `{other}` (random | same | checkin)"),
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Named parameterization: sce1..sce10, or zhongfu for the bundled
    /// case-study file.
    #[arg(long, conflicts_with_all = ["grid", "tasks", "entities"])]
    preset: Option<String>,
    /// Grid as HxW, e.g. 16x16.
    #[arg(long)]
    grid: Option<String>,
    /// Task counts as aerial,ground,detailed.
    #[arg(long)]
    tasks: Option<String>,
    /// Entity counts as uav,worker,ugv.
    #[arg(long)]
    entities: Option<String>,
    /// Obstacle density in [0, 1].
    #[arg(long, default_value_t = 0.15)]
    density: f64,
    #[arg(long, default_value_t = 12)]
    time_limit: u32,
    /// Duration mix as duration:count pairs, e.g. 1:96,2:24.
    #[arg(long, default_value = "1:96,2:24")]
    durations: String,
    /// Task placement: random | checkin.
    #[arg(long, default_value = "random")]
    task_dist: String,
    /// Entity placement: random | same | checkin.
    #[arg(long, default_value = "random")]
    entity_dist: String,
    /// Fixed value or lo..hi range.
    #[arg(long, default_value = "8")]
    uav_radius: String,
    #[arg(long, default_value = "3")]
    worker_radius: String,
    #[arg(long, default_value = "5")]
    ugv_radius: String,
    #[arg(long, default_value = "0.3")]
    uav_consumption: String,
    #[arg(long, default_value = "10")]
    detect_radius: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

fn custom_params(args: &GenArgs) -> Result<GenerationParams> {
    let grid_str = args
        .grid
        .as_deref()
        .context("custom generation needs --grid HxW (or use --preset)")?;
    let (h, w) = grid_str
        .split_once('x')
        .with_context(|| format!("--grid wants HxW, got `{grid_str}`"))?;
    let grid = GridDims {
        height: h.trim().parse()?,
        width: w.trim().parse()?,
    };
    let tasks = parse_triple(
        args.tasks.as_deref().context("custom generation needs --tasks a,g,d")?,
        "--tasks",
    )?;
    let (u, wk, g) = parse_triple(
        args.entities
            .as_deref()
            .context("custom generation needs --entities u,w,g")?,
        "--entities",
    )?;
    Ok(GenerationParams {
        grid,
        time_limit: args.time_limit,
        obstacle_density: args.density,
        task_counts: tasks,
        duration_mix: parse_durations(&args.durations)?,
        task_distribution: parse_distribution(&args.task_dist, grid)?,
        entities: EntityCountSpec::Explicit {
            uav: u,
            worker: wk,
            ugv: g,
        },
        entity_distribution: parse_distribution(&args.entity_dist, grid)?,
        uav_radius: parse_attr(&args.uav_radius)?,
        worker_radius: parse_attr(&args.worker_radius)?,
        ugv_radius: parse_attr(&args.ugv_radius)?,
        uav_consumption: parse_attr(&args.uav_consumption)?,
        ugv_detect_radius: parse_attr(&args.detect_radius)?,
    })
}

pub fn run_gen(args: GenArgs) -> Result<()> {
    let dir = args.out.resolve("gen");
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();

    let labelled: Vec<(String, Vec<u8>)> = match args.preset.as_deref() {
        Some("zhongfu") => vec![("zhongfu".to_string(), ZHONGFU_SCN.as_bytes().to_vec())],
        Some(name) => preset_params(name)?
            .into_iter()
            .map(|(label, params)| {
                let spec = generate_scenario(&params, args.seed)?;
                Ok((label, save_scenario(&spec)))
            })
            .collect::<Result<Vec<_>>>()?,
        None => {
            let params = custom_params(&args)?;
            let spec = generate_scenario(&params, args.seed)?;
            vec![("scenario".to_string(), save_scenario(&spec))]
        }
    };

    for (label, bytes) in &labelled {
        let name = format!("{label}.scn");
        fs::write(dir.join(&name), bytes)?;
        let spec = load_scenario(bytes)?;
        println!(
            "{name}: {}x{} grid, {} tasks, {} entities, {} obstacles{}",
            spec.grid.height,
            spec.grid.width,
            spec.task_count(),
            spec.entity_count(),
            spec.obstacles.len(),
            if spec.has_unreachable_tasks() {
                " (has unreachable tasks)"
            } else {
                ""
            }
        );
        outputs.push(name);
    }

    let mut manifest = RunManifest::new(
        json!({
            "preset": args.preset,
            "seed": args.seed,
        }),
        vec![args.seed],
    );
    manifest.outputs = outputs;
    manifest.write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 3000)]
    episodes: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's time limit.
    #[arg(long)]
    time_limit: Option<u32>,
    #[arg(long, default_value_t = 0.7)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    lr0: f64,
    #[arg(long, default_value_t = 0.9)]
    lr_decay_rate: f64,
    #[arg(long, default_value_t = 1000)]
    lr_decay_interval: u32,
    #[arg(long, default_value_t = 1.0)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon_end: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon_anneal_frac: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5000)]
    buffer: usize,
    #[arg(long, default_value_t = 200)]
    target_sync: u32,
    #[arg(long, default_value_t = 1.0)]
    lambda_opt: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_nopt: f64,
    #[arg(long, default_value_t = 0.2)]
    clip: f64,
    /// Cooperation variant: hard | voluntary.
    #[arg(long, default_value = "hard")]
    variant: String,
    /// Ablate a module: eiem (conv replaced by flatten) or sedm (GRU
    /// replaced by feed-forward). Repeatable.
    #[arg(long, action = clap::ArgAction::Append)]
    ablate: Vec<String>,
    #[arg(long, default_value_t = 1)]
    updates_per_episode: u32,
    /// Keep hidden/q snapshots in the replay buffer.
    #[arg(long)]
    snapshots: bool,
    /// Let the state-value head's gradient reach the feature extractors.
    #[arg(long)]
    v_grad_to_inputs: bool,
    /// Also write checkpoint-ep<N>.bin every K episodes.
    #[arg(long)]
    checkpoint_every: Option<u32>,
    #[command(flatten)]
    out: OutArg,
}

fn parse_variant(s: &str) -> Result<CoopVariant> {
    match s {
        "hard" => Ok(CoopVariant::Hard),
        "voluntary" => Ok(CoopVariant::Voluntary),
        other => bail!("unknown variant `{other}` (hard | voluntary)"),
    }
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut ablate_eiem = false;
    let mut ablate_sedm = false;
    for a in &args.ablate {
        match a.as_str() {
            "eiem" => ablate_eiem = true,
            "sedm" => ablate_sedm = true,
            other => bail!("unknown ablation `{other}` (eiem | sedm)"),
        }
    }
    Ok(TrainConfig {
        episodes: args.episodes,
        time_limit: args.time_limit,
        gamma: args.gamma,
        lr0: args.lr0,
        lr_decay_rate: args.lr_decay_rate,
        lr_decay_interval: args.lr_decay_interval,
        epsilon_start: args.epsilon_start,
        epsilon_end: args.epsilon_end,
        epsilon_anneal_frac: args.epsilon_anneal_frac,
        batch_size: args.batch,
        buffer_capacity: args.buffer,
        target_sync: args.target_sync,
        lambda_opt: args.lambda_opt,
        lambda_nopt: args.lambda_nopt,
        clip: args.clip,
        seed: args.seed,
        variant: parse_variant(&args.variant)?,
        ablate_eiem,
        ablate_sedm,
        v_grad_to_inputs: args.v_grad_to_inputs,
        store_snapshots: args.snapshots,
        updates_per_episode: args.updates_per_episode,
    })
}

pub fn run_train(args: TrainArgs) -> Result<()> {
    let dir = args.out.resolve("train");
    ensure_dir(&dir)?;
    let (spec, scenario_hash) = read_scenario(&args.scenario)?;
    let cfg = train_config(&args)?;
    let mut source = FixedScenario(spec);

    let report_every = (cfg.episodes / 20).max(1);
    let checkpoint_every = args.checkpoint_every;
    let dir_cb = dir.clone();
    let mut periodic: Vec<String> = Vec::new();
    let output = run_training(&mut source, &cfg, |row: &MetricsRow, bundle: &NetBundle| {
        if row.episode % report_every == 0 {
            eprintln!(
                "episode {:>6}  loss {:>10.5}  return {:>7.2}  tcr {:.3}  eps {:.3}",
                row.episode, row.loss, row.ret, row.tcr, row.epsilon
            );
        }
        if let Some(k) = checkpoint_every {
            if k > 0 && row.episode % k == 0 {
                let name = format!("checkpoint-ep{}.bin", row.episode);
                if let Ok(file) = fs::File::create(dir_cb.join(&name)) {
                    let _ = bundle.save_checkpoint(std::io::BufWriter::new(file));
                    periodic.push(name);
                }
            }
        }
    });

    let output = match output {
        Ok(out) => out,
        Err(err) => {
            // Numerical aborts leave a diagnostic dump next to the manifest.
            if let hecta_core::learning::LearnError::NumericalAbort { episode, detail } = &err {
                let dump = json!({ "episode": episode, "detail": detail });
                let _ = fs::write(
                    dir.join("abort-dump.json"),
                    serde_json::to_string_pretty(&dump).unwrap_or_default(),
                );
            }
            return Err(err.into());
        }
    };

    fs::write(dir.join("metrics.csv"), metrics_to_csv(&output.metrics))?;
    let file = fs::File::create(dir.join("checkpoint.bin"))?;
    output.bundle.save_checkpoint(std::io::BufWriter::new(file))?;
    if output.skipped_updates > 0 {
        eprintln!("warning: {} optimizer steps skipped (non-finite gradients)", output.skipped_updates);
    }
    if let Some(last) = output.metrics.last() {
        println!(
            "trained {} episodes: final tcr {:.3}, loss {:.5}",
            last.episode, last.tcr, last.loss
        );
    } else {
        println!("trained 0 episodes");
    }

    let mut manifest = RunManifest::new(serde_json::to_value(&cfg)?, vec![cfg.seed]);
    manifest.scenario_hash = Some(scenario_hash);
    manifest.outputs = vec!["metrics.csv".into(), "checkpoint.bin".into()];
    manifest.outputs.extend(periodic);
    manifest.write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// greedy | random | checkpoint.
    #[arg(long, default_value = "checkpoint")]
    policy: String,
    #[arg(long, required_if_eq("policy", "checkpoint"))]
    checkpoint: Option<PathBuf>,
    /// Evaluation rollouts per setting.
    #[arg(long, default_value_t = 10)]
    seeds: u32,
    /// Comma-separated list of sensing time limits; empty = scenario's own.
    #[arg(long)]
    time_limits: Option<String>,
    /// Exploration rate during evaluation (0 = decentralized greedy).
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value = "hard")]
    variant: String,
    #[arg(long, default_value_t = 1000)]
    eval_seed: u64,
    #[command(flatten)]
    out: OutArg,
}

pub const EVAL_HEADER: &str = "label,mean,std,ci95_half,n";

fn eval_csv(rows: &[(String, EvalStats)]) -> String {
    let mut out = String::from(EVAL_HEADER);
    out.push('\n');
    for (label, stats) in rows {
        out.push_str(&format!(
            "{label},{},{},{},{}\n",
            stats.mean,
            stats.std,
            stats.ci95_half,
            stats.runs.len()
        ));
    }
    out
}

pub fn run_eval(args: EvalArgs) -> Result<()> {
    let dir = args.out.resolve("eval");
    ensure_dir(&dir)?;
    let (spec, scenario_hash) = read_scenario(&args.scenario)?;
    let variant = parse_variant(&args.variant)?;
    let bundle = match args.policy.as_str() {
        "checkpoint" => Some(read_checkpoint(args.checkpoint.as_ref().expect("required by clap"))?),
        "greedy" | "random" => None,
        other => bail!("unknown policy `{other}` (greedy | random | checkpoint)"),
    };
    let policy = match (&bundle, args.policy.as_str()) {
        (Some(b), _) => EvalPolicy::Learned(b),
        (None, "greedy") => EvalPolicy::Greedy,
        _ => EvalPolicy::Random,
    };
    let mode = if args.epsilon > 0.0 {
        ExecMode::Stochastic(args.epsilon)
    } else {
        ExecMode::GreedyExec
    };

    let limits: Vec<Option<u32>> = match &args.time_limits {
        None => vec![None],
        Some(list) => list
            .split(',')
            .map(|t| Ok(Some(t.trim().parse()?)))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut rows = Vec::new();
    for limit in limits {
        let stats = evaluate_policy(
            &policy,
            &spec,
            limit,
            args.seeds,
            mode,
            variant.hard_coop(),
            args.eval_seed,
        )?;
        let label = match limit {
            Some(t) => format!("T={t}"),
            None => format!("T={}", spec.time_limit),
        };
        println!(
            "{label}: tcr {:.4} +/- {:.4} (95% CI, n={})",
            stats.mean,
            stats.ci95_half,
            stats.runs.len()
        );
        rows.push((label, stats));
    }
    fs::write(dir.join("eval.csv"), eval_csv(&rows))?;

    let mut manifest = RunManifest::new(
        json!({
            "policy": args.policy,
            "seeds": args.seeds,
            "epsilon": args.epsilon,
            "variant": args.variant,
            "eval_seed": args.eval_seed,
            "time_limits": args.time_limits,
        }),
        vec![args.eval_seed],
    );
    manifest.scenario_hash = Some(scenario_hash);
    manifest.outputs = vec!["eval.csv".into()];
    manifest.write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// robust
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RobustArgs {
    /// Base scenario the checkpoint was trained on.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// all, or a comma-separated subset of: task-execution-time, task-type,
    /// obstacle-position, entity-position.
    #[arg(long, default_value = "all")]
    kinds: String,
    /// Fresh perturbed scenarios per kind.
    #[arg(long, default_value_t = 50)]
    variants: u32,
    #[arg(long)]
    time_limit: Option<u32>,
    #[arg(long, default_value = "hard")]
    variant: String,
    #[arg(long, default_value_t = 2000)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

pub fn run_robust(args: RobustArgs) -> Result<()> {
    let dir = args.out.resolve("robust");
    ensure_dir(&dir)?;
    let (spec, scenario_hash) = read_scenario(&args.scenario)?;
    let bundle = read_checkpoint(&args.checkpoint)?;
    let coop = parse_variant(&args.variant)?;
    let kinds: Vec<VariationKind> = if args.kinds == "all" {
        VariationKind::ALL.to_vec()
    } else {
        args.kinds
            .split(',')
            .map(|s| VariationKind::from_str(s.trim()).map_err(Into::into))
            .collect::<Result<Vec<_>>>()?
    };

    let rows = robustness_sweep(
        &bundle,
        &spec,
        &kinds,
        args.variants,
        args.time_limit,
        coop.hard_coop(),
        args.seed,
    )?;

    // Table-shaped grid: one column per variation kind.
    let mut table = rows
        .iter()
        .map(|r| r.kind.label())
        .collect::<Vec<_>>()
        .join(",");
    table.push('\n');
    table.push_str(
        &rows
            .iter()
            .map(|r| r.mean_tcr.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    table.push('\n');
    fs::write(dir.join("robustness.csv"), &table)?;

    // Long form with every variant's TCR.
    let mut long = String::from("kind,variant,tcr\n");
    for row in &rows {
        for (i, tcr) in row.runs.iter().enumerate() {
            long.push_str(&format!("{},{},{}\n", row.kind.label(), i, tcr));
        }
    }
    fs::write(dir.join("robustness-runs.csv"), long)?;

    for row in &rows {
        println!("{}: mean tcr {:.4} over {} variants", row.kind.label(), row.mean_tcr, row.runs.len());
    }

    let mut manifest = RunManifest::new(
        json!({
            "kinds": kinds.iter().map(|k| k.label()).collect::<Vec<_>>(),
            "variants": args.variants,
            "variant": args.variant,
            "seed": args.seed,
        }),
        vec![args.seed],
    );
    manifest.scenario_hash = Some(scenario_hash);
    manifest.outputs = vec!["robustness.csv".into(), "robustness-runs.csv".into()];
    manifest.write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// greedy | random | checkpoint.
    #[arg(long, default_value = "greedy")]
    policy: String,
    #[arg(long, required_if_eq("policy", "checkpoint"))]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    time_limit: Option<u32>,
    #[arg(long, default_value = "hard")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

pub fn run_trace(args: TraceArgs) -> Result<()> {
    use rand::SeedableRng;
    let dir = args.out.resolve("trace");
    ensure_dir(&dir)?;
    let (spec, scenario_hash) = read_scenario(&args.scenario)?;
    let coop = parse_variant(&args.variant)?;
    let spec = match args.time_limit {
        Some(t) => {
            let mut s = (*spec).clone();
            s.time_limit = t;
            Arc::new(s)
        }
        None => spec,
    };
    let bundle = match args.policy.as_str() {
        "checkpoint" => Some(read_checkpoint(args.checkpoint.as_ref().expect("required by clap"))?),
        "greedy" | "random" => None,
        other => bail!("unknown policy `{other}` (greedy | random | checkpoint)"),
    };
    let policy = match (&bundle, args.policy.as_str()) {
        (Some(b), _) => RolloutPolicy::Learned { bundle: b, epsilon: 0.0 },
        (None, "greedy") => RolloutPolicy::Greedy,
        _ => RolloutPolicy::Random,
    };

    let mut world = World::new(Arc::clone(&spec), coop.hard_coop())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let result = rollout(
        &mut world,
        &policy,
        &mut rng,
        &RolloutOptions {
            trace: true,
            ..Default::default()
        },
    )?;
    fs::write(dir.join("trajectory.csv"), trace_to_csv(&result.trace))?;
    println!(
        "{} steps, final tcr {:.4}, trajectory rows {}",
        result.steps,
        result.tcr,
        result.trace.len()
    );

    let mut manifest = RunManifest::new(
        json!({
            "policy": args.policy,
            "variant": args.variant,
            "seed": args.seed,
            "time_limit": args.time_limit,
        }),
        vec![args.seed],
    );
    manifest.scenario_hash = Some(scenario_hash);
    manifest.outputs = vec!["trajectory.csv".into()];
    manifest.write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// curve (metrics.csv) | bars (eval.csv) | trajectory (trajectory.csv).
    #[arg(long)]
    kind: String,
    #[arg(long)]
    input: PathBuf,
    /// Scenario file, required for trajectory overlays.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        _ => bail!("missing trajectory header"),
    }
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            bail!("trajectory row has {} fields", f.len());
        }
        rows.push(TraceRow {
            step: f[0].parse()?,
            entity_id: f[1].parse()?,
            class: match f[2] {
                "worker" => "worker",
                "uav" => "uav",
                "ugv" => "ugv",
                other => bail!("unknown class `{other}`"),
            },
            row: f[3].parse()?,
            col: f[4].parse()?,
            power: if f[5].is_empty() { None } else { Some(f[5].parse()?) },
            acting_task_id: if f[6].is_empty() { None } else { Some(f[6].parse()?) },
            reward: f[7].parse()?,
            completed_cumulative: f[8].parse()?,
        });
    }
    Ok(rows)
}

pub fn run_plot(args: PlotArgs) -> Result<()> {
    let dir = args.out.resolve("plot");
    ensure_dir(&dir)?;
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;

    let (name, svg) = match args.kind.as_str() {
        "curve" => {
            let rows = metrics_from_csv(&text)?;
            if rows.is_empty() {
                bail!("metrics file has no rows");
            }
            ("training-curve.svg", crate::plot::training_curve(&rows))
        }
        "bars" => {
            let mut lines = text.lines();
            match lines.next() {
                Some(h) if h == EVAL_HEADER => {}
                _ => bail!("missing evaluation header"),
            }
            let mut rows = Vec::new();
            for line in lines {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    bail!("evaluation row has {} fields", f.len());
                }
                rows.push((f[0].to_string(), f[1].parse()?, f[3].parse()?));
            }
            if rows.is_empty() {
                bail!("evaluation file has no rows");
            }
            ("tcr-bars.svg", crate::plot::bar_chart(&rows))
        }
        "trajectory" => {
            let rows = parse_trace_csv(&text)?;
            if rows.is_empty() {
                bail!("trajectory file has no rows");
            }
            let scenario_path = args
                .scenario
                .as_ref()
                .context("trajectory plots need --scenario")?;
            let (spec, _) = read_scenario(scenario_path)?;
            ("trajectory.svg", crate::plot::trajectory_overlay(&spec, &rows))
        }
        other => bail!("unknown plot kind `{other}` (curve | bars | trajectory)"),
    };

    fs::write(dir.join(name), &svg)?;
    println!("wrote {}", dir.join(name).display());

    let mut manifest = RunManifest::new(
        json!({ "kind": args.kind, "input": args.input.display().to_string() }),
        vec![],
    );
    manifest.outputs = vec![name.to_string()];
    manifest.write(&dir)?;
    Ok(())
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::Common;
use crate::error::{Error, Result};
use crate::eval::{
    build_id, run_benchmark, BehaviorCloning, EvalConfig, GaussianDiffusion, GaussianRrt, HeatDiffusion, MetricsTable,
    Planner, Report, TrainedDiffusion,
};
use crate::field_io::FieldDump;
use crate::grid::{generate_scenario, load_map, save_map, Scenario, ScenarioFile, ScenarioKind};
use crate::kernel::GoalSubset;
use crate::par::Exec;
use crate::render::{render, Overlay};
use crate::sampler::{initial_state, sample_trajectory, write_jsonl, ScoreStack, TrajectoryRecord};
use crate::score::{score_field, State};
use crate::scorematch::{train, TrainConfig};
use crate::seed::hash64;

pub enum Job {
    Genmap,
    Kernel,
    Sample,
    Train,
    Eval,
    Render {
        field: Option<PathBuf>,
        trajectories: Option<PathBuf>,
    },
    Bench,
}

impl Job {
    fn name(&self) -> &'static str {
        match self {
            Job::Genmap => "genmap",
            Job::Kernel => "kernel",
            Job::Sample => "sample",
            Job::Train => "train",
            Job::Eval => "eval",
            Job::Render { .. } => "render",
            Job::Bench => "bench",
        }
    }
}

const SAMPLE_STREAM: u64 = 0x5341_4d50;

pub fn execute(job: &Job, common: &Common, cfg: &RunConfig) -> Result<()> {
    let out = &common.out;
    if !matches!(job, Job::Bench) {
        write_json(out, "run.json", &json!({ "build": build_id(), "command": job.name(), "config": cfg }))?;
    }
    match job {
        Job::Genmap => genmap(out, cfg),
        Job::Kernel => kernel(out, &scenario(common, cfg)?, cfg),
        Job::Sample => sample(out, &scenario(common, cfg)?, cfg),
        Job::Train => train_model(out, &scenario(common, cfg)?, cfg),
        Job::Eval => eval(out, cfg),
        Job::Render { field, trajectories } => {
            render_files(out, &scenario(common, cfg)?, field.as_deref(), trajectories.as_deref())
        }
        Job::Bench => bench(cfg),
    }
}

fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(dir, name, text.as_bytes())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// The `--scenario` directory if given, else a fresh scenario from the config and seed.
fn scenario(common: &Common, cfg: &RunConfig) -> Result<Scenario> {
    let Some(dir) = &common.scenario else {
        return generate_scenario(&cfg.mapgen, cfg.seed);
    };
    let map = load_map(&read_bytes(&dir.join("map.pgm"))?)?;
    let path = dir.join("scenario.json");
    let meta: serde_json::Value = serde_json::from_slice(&read_bytes(&path)?)?;
    let file: ScenarioFile = serde_json::from_value(meta.get("scenario").cloned().unwrap_or(meta))?;
    Scenario::from_sidecar(map, &file)
}

fn genmap(out: &Path, cfg: &RunConfig) -> Result<()> {
    let s = generate_scenario(&cfg.mapgen, cfg.seed)?;
    write_bytes(out, "map.pgm", &save_map(&s.map))?;
    write_json(
        out,
        "scenario.json",
        &json!({ "build": build_id(), "config": cfg, "scenario": s.sidecar() }),
    )
}

fn level_name(prefix: &str, t: usize) -> String {
    format!("{prefix}_t{t:02}.hkf")
}

fn kernel(out: &Path, s: &Scenario, cfg: &RunConfig) -> Result<()> {
    let b = cfg.kernel_setup().builder(&s.map)?;
    let (w, h) = (s.map.width(), s.map.height());
    let p0 = b.goal_distribution(s, GoalSubset::All)?;
    write_bytes(out, "p0.hkf", &FieldDump::scalar(w, h, p0.values()).encode())?;
    let stack = b.perturbed_stack(&p0)?;
    let mut files = vec!["p0.hkf".to_string()];
    for (i, p) in stack.iter().enumerate() {
        let t = i + 1;
        write_bytes(out, &level_name("p", t), &FieldDump::scalar(w, h, p.values()).encode())?;
        let sf = score_field(p);
        write_bytes(out, &level_name("score", t), &FieldDump::vectors(w, h, sf.vectors()).encode())?;
        files.push(level_name("p", t));
        files.push(level_name("score", t));
    }
    let ks: Vec<f64> = (1..=cfg.schedule.levels).map(|t| cfg.schedule.k(t)).collect::<Result<_>>()?;
    write_json(
        out,
        "kernel.json",
        &json!({
            "build": build_id(),
            "config": cfg,
            "width": w,
            "height": h,
            "levels": cfg.schedule.levels,
            "k": ks,
            "files": files,
        }),
    )
}

fn sample(out: &Path, s: &Scenario, cfg: &RunConfig) -> Result<()> {
    let stack = cfg.kernel_setup().score_stack(s)?;
    let records = sample_records(s, &stack, cfg, cfg.sample.n_samples)?;
    write_bytes(out, "trajectories.jsonl", write_jsonl(&records)?.as_bytes())?;
    let goals: Vec<State> = s.reachable_goals().map(|g| State::center_of(g.cell)).collect();
    let successes = records
        .iter()
        .filter(|r| {
            let f = *r.states.last().expect("trajectory holds its initial state");
            goals.iter().any(|g| f.distance(*g) <= cfg.eval.success_radius)
        })
        .count();
    write_json(
        out,
        "sample.json",
        &json!({
            "build": build_id(),
            "config": cfg,
            "scenario": s.sidecar(),
            "n_samples": records.len(),
            "successes": successes,
            "frozen": records.iter().filter(|r| r.frozen).count(),
        }),
    )
}

fn sample_records(s: &Scenario, stack: &ScoreStack, cfg: &RunConfig, n: usize) -> Result<Vec<TrajectoryRecord>> {
    Exec::default()
        .map_range(n, |i| {
            let seed = hash64(&[cfg.seed, SAMPLE_STREAM, i as u64]);
            let x = initial_state(s, seed);
            sample_trajectory(s, stack, x, &cfg.schedule, &cfg.sampler, seed).map(|t| t.record())
        })
        .into_iter()
        .collect()
}

fn train_model(out: &Path, s: &Scenario, cfg: &RunConfig) -> Result<()> {
    let b = cfg.kernel_setup().builder(&s.map)?;
    let tc = TrainConfig {
        seed: hash64(&[cfg.seed, cfg.train.seed]),
        ..cfg.train
    };
    let outcome = train(s, &b, &tc)?;
    let dir = out.join("model");
    let (w, h) = (s.map.width(), s.map.height());
    let mut files = Vec::new();
    for t in 1..=outcome.model.n_levels() {
        let name = format!("level_{t:02}.hkf");
        write_bytes(&dir, &name, &FieldDump::vectors(w, h, outcome.model.level(t)).encode())?;
        files.push(name);
    }
    write_json(
        &dir,
        "manifest.json",
        &json!({
            "T": outcome.model.n_levels(),
            "width": w,
            "height": h,
            "schedule": cfg.schedule,
            "files": files,
            "sources": outcome.sources,
            "build": build_id(),
            "config": cfg,
        }),
    )?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_bytes(out, "losses.csv", csv.as_bytes())
}

pub const MODEL_NAMES: [&str; 5] = ["ours", "ours-trained", "gaussian", "gaussian+rrt", "bc"];

fn planner(name: &str, cfg: &RunConfig) -> Result<Box<dyn Planner>> {
    let kernel = cfg.kernel_setup();
    let sampler = cfg.sampler;
    Ok(match name {
        "ours" => Box::new(HeatDiffusion { kernel, sampler }),
        "ours-trained" => Box::new(TrainedDiffusion {
            kernel,
            sampler,
            train: TrainConfig {
                seed: hash64(&[cfg.seed, cfg.train.seed]),
                ..cfg.train
            },
        }),
        "gaussian" => Box::new(GaussianDiffusion {
            schedule: cfg.schedule,
            sampler,
        }),
        "gaussian+rrt" => Box::new(GaussianRrt {
            schedule: cfg.schedule,
            sampler,
            rrt: cfg.rrt,
        }),
        "bc" => Box::new(BehaviorCloning {
            kernel,
            sampler,
            experts_per_goal: cfg.bc.experts_per_goal,
            expert_noise: cfg.bc.expert_noise,
            rollout_steps: cfg.bc.rollout_steps,
            expert_cutoff: cfg.bc.expert_cutoff,
            horizon: cfg.bc.horizon,
        }),
        other => {
            return Err(Error::Config(format!(
                "unknown model `{other}`; expected one of {}",
                MODEL_NAMES.join(", ")
            )))
        }
    })
}

fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        base_seed: hash64(&[cfg.seed, cfg.eval.base_seed]),
        ..cfg.eval
    }
}

fn eval(out: &Path, cfg: &RunConfig) -> Result<()> {
    let planners = cfg.models.iter().map(|m| planner(m, cfg)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn Planner> = planners.iter().map(|p| p.as_ref()).collect();
    let table = run_benchmark(&refs, &cfg.kinds, &cfg.mapgen, &cfg.kernel_setup(), &eval_config(cfg))?;
    write_bytes(out, "metrics.csv", table.to_csv().as_bytes())?;
    write_json(
        out,
        "metrics.json",
        &Report {
            build: build_id(),
            config: cfg,
            metrics: &table,
        },
    )
}

fn render_files(out: &Path, s: &Scenario, field: Option<&Path>, trajectories: Option<&Path>) -> Result<()> {
    let dump = match field {
        Some(p) => {
            let d = FieldDump::decode(&read_bytes(p)?)?;
            if d.channels != 1 {
                return Err(Error::Config(format!(
                    "{}: expected a scalar field, found {} channels",
                    p.display(),
                    d.channels
                )));
            }
            Some(d)
        }
        None => None,
    };
    let mut paths = Vec::new();
    if let Some(p) = trajectories {
        let text = String::from_utf8_lossy(&read_bytes(p)?).into_owned();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: TrajectoryRecord = serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("{} line {}: {e}", p.display(), i + 1)))?;
            paths.push(r.states);
        }
    }
    let ppm = render(
        s,
        &Overlay {
            field: dump.as_ref().map(|d| (d.width, d.height, d.values.as_slice())),
            trajectories: &paths,
            goals: true,
        },
    )?;
    write_bytes(out, "render.ppm", &ppm)
}

fn bench(cfg: &RunConfig) -> Result<()> {
    let s = generate_scenario(&cfg.mapgen.clone().with_kind(ScenarioKind::Unimodal), cfg.seed)?;
    let setup = cfg.kernel_setup();

    let t0 = Instant::now();
    let b = setup.builder(&s.map)?;
    let p0 = b.goal_distribution(&s, GoalSubset::All)?;
    let fields = b.perturbed_stack(&p0)?;
    let kernel_ms = ms(t0);

    let stack = ScoreStack::from_fields(&fields);
    let t1 = Instant::now();
    let recs = sample_records(&s, &stack, cfg, 10_000)?;
    let sample_ms = ms(t1);

    let t2 = Instant::now();
    let ours = HeatDiffusion {
        kernel: setup,
        sampler: cfg.sampler,
    };
    let table: MetricsTable = run_benchmark(&[&ours], &[ScenarioKind::Unimodal], &cfg.mapgen, &setup, &eval_config(cfg))?;
    let eval_ms = ms(t2);

    println!("threads            {}", crate::par::current_threads());
    println!("kernel_stack_ms    {kernel_ms:.1}");
    println!("sample_10k_ms      {sample_ms:.1}  ({} trajectories)", recs.len());
    println!("eval_row_ms        {eval_ms:.1}  (success {:.2}%)", table.rows[0].success_rate);
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

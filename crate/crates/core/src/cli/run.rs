use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{Command, GradcheckConfig, RunConfig};
use crate::baseline::BaselineDnn;
use crate::data::{swiss_roll, write_points_csv, SwissRollManifold};
use crate::ddpm::{train_with_progress, NoiseSchedule, Snapshot, TrainOutcome};
use crate::error::{Error, Result};
use crate::eval::{hwi_sweep, snapshot_grid, snr_sweep, train_baselines, write_point_sets, BaselineSet, ReceiverKind};
use crate::modem::QamSpec;
use crate::neural::{check_gradients, ConditionalMlp, EmbeddingMode, GradCheckReport, MlpConfig};
use crate::numerics::{sample_standard_normal, RngStream, Tensor2};
use crate::output::write_atomic;
use crate::snapshot::{load_mlp, save_baseline, save_mlp};

/// Process exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidSchedule(_) => 2,
        Error::MissingArtifact(_) | Error::MissingModel(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 1,
    }
}

pub fn ddpm_model_path(dir: &Path, order: u32) -> PathBuf {
    dir.join(format!("ddpm_qam{order}.dfx"))
}

pub fn swissroll_snapshot_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join("swissroll").join(format!("snapshot_e{epoch}.dfx"))
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    elapsed_secs: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    results: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Meta<'a> {
    run: RunInfo<'a>,
    config: &'a RunConfig,
}

fn write_meta(path: &Path, cfg: &RunConfig, command: Command, started: Instant, results: BTreeMap<String, f64>) -> Result<()> {
    let meta = Meta {
        run: RunInfo {
            command: command.as_str(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            elapsed_secs: started.elapsed().as_secs_f64(),
            results,
        },
        config: cfg,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

fn loss_csv(losses: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn train_logged(model: ConditionalMlp, data: &Tensor2, sched: &NoiseSchedule, cfg: &RunConfig, rng: &mut RngStream, tag: &str) -> Result<TrainOutcome> {
    let every = (cfg.train.epochs / 20).max(1);
    train_with_progress(model, data, sched, &cfg.train, rng, |epoch, loss| {
        if epoch % every == 0 || epoch == 1 {
            eprintln!("[{tag}] epoch {epoch}/{} loss {loss:.5}", cfg.train.epochs);
        }
    })
}

/// Runs `command` and returns the paths it wrote.
///
/// `model.steps` follows `schedule.steps` and experiments use 2-D inputs;
/// the echoed configuration reflects both.
pub fn execute(cfg: &RunConfig, command: Command) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    cfg.command = Some(command);
    cfg.model.steps = cfg.schedule.steps;
    cfg.model.input_dim = 2;
    let cfg = &cfg;
    cfg.schedule.build()?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out)?;
    let root = RngStream::new(cfg.seed);
    let mut written = Vec::new();
    let mut results = BTreeMap::new();
    match command {
        Command::TrainSwissroll => {
            let sched = cfg.schedule.build()?;
            let model_cfg = cfg.model;
            let data = swiss_roll(&cfg.swiss_roll, &mut root.substream("swissroll-data"))?;
            let model = ConditionalMlp::new(&model_cfg, &mut root.substream("swissroll-init"))?;
            let outcome = train_logged(model, &data, &sched, cfg, &mut root.substream("swissroll-train"), "swissroll")?;
            let dir = out.join("swissroll");
            let p = dir.join("data.csv");
            write_points_csv(&p, &data)?;
            written.push(p);
            let p = dir.join("loss.csv");
            write_atomic(&p, &loss_csv(&outcome.epoch_losses)?)?;
            written.push(p);
            for snap in &outcome.snapshots {
                let p = swissroll_snapshot_path(cfg.model_dir(), snap.epoch);
                save_mlp(&p, &snap.model, snap.epoch as u64)?;
                written.push(p);
            }
            let p = cfg.model_dir().join("swissroll").join("model.dfx");
            save_mlp(&p, &outcome.model, cfg.train.epochs as u64)?;
            written.push(p);
            results.insert("first_epoch_loss".into(), outcome.epoch_losses[0]);
            results.insert("final_epoch_loss".into(), *outcome.epoch_losses.last().unwrap());
        }
        Command::TrainLink => {
            let sched = cfg.schedule.build()?;
            let model_cfg = cfg.model;
            for &m in &cfg.link.orders {
                let spec = QamSpec::new(m).map_err(|e| Error::Config(e.to_string()))?;
                let rng = root.substream(&format!("link-qam{m}"));
                let data = constellation_dataset(&spec, cfg.link.dataset_size, cfg.link.power, &mut rng.substream("data"))?;
                let model = ConditionalMlp::new(&model_cfg, &mut rng.substream("init"))?;
                let outcome = train_logged(model, &data, &sched, cfg, &mut rng.substream("train"), &format!("qam{m}"))?;
                let p = ddpm_model_path(cfg.model_dir(), m);
                save_mlp(&p, &outcome.model, cfg.train.epochs as u64)?;
                written.push(p);
                let p = out.join(format!("loss_qam{m}.csv"));
                write_atomic(&p, &loss_csv(&outcome.epoch_losses)?)?;
                written.push(p);
                results.insert(format!("final_epoch_loss_qam{m}"), *outcome.epoch_losses.last().unwrap());
            }
        }
        Command::SnrSweep => {
            let sweep = &cfg.snr_sweep;
            let sched = cfg.schedule.build()?;
            let mut ddpm = BTreeMap::new();
            if sweep.receivers.contains(&ReceiverKind::Ddpm) {
                for &m in &sweep.orders {
                    ddpm.insert(m, load_ddpm(cfg, m, &sched)?);
                }
            }
            let baselines = if sweep.receivers.contains(&ReceiverKind::Dnn) {
                eprintln!("[snr-sweep] training {} baselines", sweep.orders.len() * sweep.snr_db.len() * sweep.noise_kinds.len());
                train_baselines(sweep, &cfg.baseline, cfg.seed)?
            } else {
                BaselineSet::default()
            };
            for (m, snr, noise, model) in baselines.iter() {
                let p = cfg
                    .model_dir()
                    .join("baselines")
                    .join(format!("dnn_qam{m}_snr{snr}_{}.dfx", noise.as_str()));
                save_baseline(&p, model, cfg.baseline.iterations_for(&QamSpec::new(m)?) as u64)?;
            }
            let report = snr_sweep(sweep, &sched, &ddpm, &baselines, cfg.seed)?;
            let p = out.join("snr_sweep.csv");
            report.write_csv(&p)?;
            written.push(p);
        }
        Command::HwiSweep => {
            let sched = cfg.schedule.build()?;
            let model = load_ddpm(cfg, cfg.hwi_sweep.order, &sched)?;
            let report = hwi_sweep(&cfg.hwi_sweep, &model, &sched, cfg.seed)?;
            let (b, r) = (out.join("hwi_boxplot.csv"), out.join("hwi_realizations.csv"));
            report.write(&b, &r)?;
            written.extend([b, r]);
            results.insert("median_spread_db".into(), report.median_spread_db());
        }
        Command::SnapshotGrid => {
            let sched = cfg.schedule.build()?;
            let snapshots = load_swissroll_snapshots(cfg.model_dir(), &sched)?;
            let g = &cfg.snapshot_grid;
            let sets = snapshot_grid(&snapshots, &sched, &g.t_grid, g.n_points, g.sampler_variance, &root.substream("snapshot-grid"))?;
            let dir = out.join("snapshot_grid");
            written.extend(write_point_sets(&dir, &sets)?);
            let manifold = SwissRollManifold::new(cfg.swiss_roll.scale, g.manifold_segments);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["epoch", "t", "n_points", "mean_distance"])?;
            for s in &sets {
                w.write_record([
                    s.epoch.to_string(),
                    s.t.to_string(),
                    s.points.rows().to_string(),
                    manifold.mean_distance(&s.points).to_string(),
                ])?;
            }
            let p = dir.join("summary.csv");
            write_atomic(&p, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
            written.push(p);
        }
        Command::Gradcheck => {
            let gc = &cfg.gradcheck;
            let mut worst: f64 = 0.0;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["network", "probes", "max_relative_error"])?;
            let mut record = |name: &str, rep: &GradCheckReport| -> Result<()> {
                println!("{name}: max relative error {:.3e} over {} probes", rep.max_relative_error, rep.probes);
                worst = worst.max(rep.max_relative_error);
                w.write_record([name.to_string(), rep.probes.to_string(), rep.max_relative_error.to_string()])?;
                Ok(())
            };
            for mode in [EmbeddingMode::Pre, EmbeddingMode::Post] {
                let mlp_cfg = MlpConfig { embedding: mode, ..cfg.model };
                let name = format!("conditional-mlp-{}", if mode == EmbeddingMode::Pre { "pre" } else { "post" });
                record(&name, &gradcheck_mlp(&mlp_cfg, gc, &mut root.substream(&name))?)?;
            }
            let rep = gradcheck_baseline(cfg.baseline.hidden_dim, gc, &mut root.substream("baseline"))?;
            record("baseline-dnn", &rep)?;
            println!("max relative error {worst:.3e}");
            let p = out.join("gradcheck.csv");
            write_atomic(&p, &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
            written.push(p);
            results.insert("max_relative_error".into(), worst);
            write_meta(&out.join("gradcheck.meta.toml"), cfg, command, started, results)?;
            if worst >= gc.tolerance {
                return Err(Error::InvalidArgument(format!(
                    "gradient check failed: {worst:.3e} >= {:.1e}",
                    gc.tolerance
                )));
            }
            return Ok(written);
        }
    }
    let p = out.join(format!("{}.meta.toml", command.as_str().replace('-', "_")));
    write_meta(&p, cfg, command, started, results)?;
    written.push(p);
    Ok(written)
}

/// `n` uniformly drawn constellation points scaled by `sqrt(power)`.
pub fn constellation_dataset(spec: &QamSpec, n: usize, power: f64, rng: &mut RngStream) -> Result<Tensor2> {
    if n == 0 || !(power > 0.0) {
        return Err(Error::InvalidArgument("dataset size and power must be positive".into()));
    }
    let pts = spec.constellation();
    let a = power.sqrt();
    let mut data = Tensor2::zeros(n, 2);
    for r in 0..n {
        let s = pts[rng.index(pts.len())] * a;
        data.set(r, 0, s.re);
        data.set(r, 1, s.im);
    }
    Ok(data)
}

fn load_ddpm(cfg: &RunConfig, order: u32, sched: &NoiseSchedule) -> Result<ConditionalMlp> {
    let (model, _) = load_mlp(&ddpm_model_path(cfg.model_dir(), order))?;
    check_steps(&model, sched)?;
    Ok(model)
}

fn check_steps(model: &ConditionalMlp, sched: &NoiseSchedule) -> Result<()> {
    if model.steps() != sched.steps() {
        return Err(Error::Config(format!(
            "model was trained with {} steps but the schedule has {}",
            model.steps(),
            sched.steps()
        )));
    }
    Ok(())
}

/// Snapshots saved by `train-swissroll`, in epoch order.
pub fn load_swissroll_snapshots(model_dir: &Path, sched: &NoiseSchedule) -> Result<Vec<Snapshot>> {
    let dir = model_dir.join("swissroll");
    let entries = fs::read_dir(&dir).map_err(|_| Error::MissingArtifact(dir.clone()))?;
    let mut snaps = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("snapshot_e") && name.ends_with(".dfx") {
            let (model, epoch) = load_mlp(&path)?;
            check_steps(&model, sched)?;
            snaps.push(Snapshot { epoch: epoch as usize, model });
        }
    }
    if snaps.is_empty() {
        return Err(Error::MissingArtifact(dir.join("snapshot_e*.dfx")));
    }
    snaps.sort_by_key(|s| s.epoch);
    Ok(snaps)
}

/// Gradient of `sum(f(x, t) * r)` for random `x`, `t` and `r`.
pub fn gradcheck_mlp(cfg: &MlpConfig, gc: &GradcheckConfig, rng: &mut RngStream) -> Result<GradCheckReport> {
    let mut model = ConditionalMlp::new(cfg, &mut rng.substream("init"))?;
    // Move the embeddings away from their all-ones start so they matter.
    for table in model.embeddings_mut() {
        for v in table.data_mut() {
            *v = 1.0 + 0.5 * rng.standard_normal();
        }
    }
    let x = sample_standard_normal(rng, gc.batch, cfg.input_dim);
    let r = sample_standard_normal(rng, gc.batch, cfg.input_dim);
    let steps: Vec<usize> = (0..gc.batch).map(|_| 1 + rng.index(cfg.steps)).collect();
    let grads = model.backward(&x, &steps, &r)?;
    let loss = |m: &ConditionalMlp| -> Result<f64> { Ok(dot(&m.forward(&x, &steps)?, &r)) };
    check_gradients(&model, &grads, loss, gc.probes, gc.h, rng)
}

pub fn gradcheck_baseline(hidden: usize, gc: &GradcheckConfig, rng: &mut RngStream) -> Result<GradCheckReport> {
    let model = BaselineDnn::new(2, hidden, &mut rng.substream("init"));
    let x = sample_standard_normal(rng, gc.batch, 2);
    let r = sample_standard_normal(rng, gc.batch, 2);
    let grads = model.backward(&x, &r)?;
    let loss = |m: &BaselineDnn| -> Result<f64> { Ok(dot(&m.forward(&x)?, &r)) };
    check_gradients(&model, &grads, loss, gc.probes, gc.h, rng)
}

fn dot(a: &Tensor2, b: &Tensor2) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

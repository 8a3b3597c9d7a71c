use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;

use heap_models::{Mode, ModelConfig, Variant};
use heap_pipeline::config::KvConfig;
use heap_pipeline::evaluate::{metrics_report, rollout_states, RolloutOutcome};
use heap_pipeline::metrics::{spatial_spectrum, Channel};
use heap_pipeline::persist::{
    read_checkpoint, read_dataset, read_embedding_store, write_ae_checkpoint, write_dataset,
    write_embedding_store, write_predictor_checkpoint, CheckpointKind, DatasetWriter,
};
use heap_pipeline::report::{study_summary_csv, write_metrics_report};
use heap_pipeline::study::{run_study, PlanEntry, StudyPlan};
use heap_pipeline::train::precompute_embeddings;
use heap_pipeline::{
    make_split, train_autoencoder, train_predictor, Scale, TrainConfig,
};
use heap_solver::{simulate_with, total_energy, SolverParams, Spectral, SystemState, Trajectory};
use heap_tensor::no_grad;

use crate::render::{log_spaced_steps, write_field_png, write_pair_png};
use crate::TrainFlags;

/// Missing input files are usage errors (exit 2), not runtime failures.
fn require_input(path: &Path, what: &str) -> Result<(), ExitCode> {
    if path.exists() {
        Ok(())
    } else {
        eprintln!("error: {what} '{}' does not exist", path.display());
        Err(ExitCode::from(2))
    }
}

macro_rules! input {
    ($path:expr, $what:expr) => {
        if let Err(code) = require_input($path, $what) {
            return Ok(code);
        }
    };
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<KvConfig> {
    match path {
        Some(p) => Ok(KvConfig::load(p)?),
        None => Ok(KvConfig::default()),
    }
}

fn default_workers() -> usize {
    std::env::var("HEAP_THREADS").ok().and_then(|s| s.parse().ok()).unwrap_or(1)
}

pub struct SimulateArgs {
    pub out: PathBuf,
    pub scale: String,
    pub config: Option<PathBuf>,
    pub nx: Option<usize>,
    pub outputs: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub diffusion: Option<f64>,
    pub box_length: Option<f64>,
    pub dt: Option<f64>,
    pub stride: Option<usize>,
}

pub fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&args.config)?;
    let scale = Scale::parse(cfg.get("scale").unwrap_or(&args.scale))?;
    let proto = scale.params();

    let nx = args.nx.or(cfg.get_usize("nx")?).unwrap_or(proto.nx);
    let outputs = args.outputs.or(cfg.get_usize("outputs")?).unwrap_or(proto.n_outputs);
    let defaults = SolverParams::default();
    let d_default = args.diffusion.or(cfg.get_f64("diffusion")?);
    let params = SolverParams {
        alpha: args.alpha.or(cfg.get_f64("alpha")?).unwrap_or(defaults.alpha),
        kappa: args.kappa.or(cfg.get_f64("kappa")?).unwrap_or(defaults.kappa),
        d_n: d_default.unwrap_or(defaults.d_n),
        d_p: d_default.unwrap_or(defaults.d_p),
        nx,
        ny: nx,
        box_length: args.box_length.or(cfg.get_f64("box_length")?).unwrap_or(defaults.box_length),
        dt_internal: args.dt.or(cfg.get_f64("dt")?).unwrap_or(defaults.dt_internal),
        output_stride: args.stride.or(cfg.get_usize("stride")?).unwrap_or(defaults.output_stride),
        seed: args.seed.or(cfg.get_u64("seed")?).unwrap_or(defaults.seed),
    };

    eprintln!(
        "simulate: {nx}x{nx}, {outputs} outputs, alpha={}, kappa={}, D={}, seed={}",
        params.alpha, params.kappa, params.d_n, params.seed
    );
    let sp = Spectral::new(params.nx, params.ny, params.box_length)?;
    let mut writer = DatasetWriter::create(&args.out, &params, params.dt_output())?;
    let start = std::time::Instant::now();
    let mut push_err = None;
    let blowup = simulate_with(&params, outputs, |idx, state| {
        if push_err.is_some() {
            return;
        }
        if let Err(e) = writer.push(&state.to_system_state()) {
            push_err = Some(e);
            return;
        }
        if idx % 100 == 0 {
            eprintln!(
                "[{:7.1}s] output {idx}/{outputs}  E = {:.4e}",
                start.elapsed().as_secs_f64(),
                total_energy(state, &sp)
            );
        }
    })?;
    if let Some(e) = push_err {
        return Err(e.into());
    }
    writer.finish()?;
    if let Some(b) = blowup {
        eprintln!(
            "numerical blowup at internal step {}; last valid output {} (partial dataset kept)",
            b.internal_step, b.last_valid_output
        );
        return Ok(ExitCode::from(1));
    }
    eprintln!("wrote {} ({:.1}s)", args.out.display(), start.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn train_config_from(flags: &TrainFlags, cfg: &KvConfig, base: TrainConfig) -> anyhow::Result<TrainConfig> {
    Ok(TrainConfig {
        batch_size: flags.batch.or(cfg.get_usize("batch")?).unwrap_or(base.batch_size),
        lr: flags.lr.or(cfg.get_f64("lr")?).unwrap_or(base.lr),
        max_epochs: flags.epochs.or(cfg.get_usize("epochs")?).unwrap_or(base.max_epochs),
        early_stop_patience: flags
            .patience
            .or(cfg.get_usize("patience")?)
            .unwrap_or(base.early_stop_patience),
        ..base
    })
}

pub fn train_ae(
    data: PathBuf,
    out: PathBuf,
    scale: String,
    config: Option<PathBuf>,
    split_seed: Option<u64>,
    flags: TrainFlags,
) -> anyhow::Result<ExitCode> {
    input!(&data, "dataset");
    let cfg = load_config(&config)?;
    let scale = Scale::parse(cfg.get("scale").unwrap_or(&scale))?;
    let traj = read_dataset(&data)?;
    let split = make_split(traj.len(), &scale.params(), split_seed.or(cfg.get_u64("split_seed")?).unwrap_or(0))?;

    let variant = Variant::parse(cfg.get("variant").unwrap_or(&flags.variant))?;
    let mut model_cfg = ModelConfig::new(variant, flags.seed);
    model_cfg.input_size = traj.nx();
    let tc = train_config_from(&flags, &cfg, TrainConfig::autoencoder())?;

    eprintln!("train-ae: {variant} seed {} on {} steps", flags.seed, traj.len());
    let t0 = std::time::Instant::now();
    let (model, norm, history) = train_autoencoder(&traj, &split, &model_cfg, &tc)?;
    let hash = write_ae_checkpoint(&out, &model, &norm, None)?;
    std::fs::write(out.with_extension("history.csv"), history.to_csv())?;
    eprintln!(
        "wrote {} (hash {hash:016x}): best dev {:.4e} at epoch {}/{} in {:.0}s{}",
        out.display(),
        history.best_dev_loss,
        history.best_epoch,
        history.epochs.len(),
        t0.elapsed().as_secs_f64(),
        if history.failed { " [flagged: no improvement]" } else { "" },
    );
    Ok(ExitCode::SUCCESS)
}

pub struct TrainPredArgs {
    pub data: PathBuf,
    pub ae: PathBuf,
    pub out: PathBuf,
    pub store: Option<PathBuf>,
    pub scale: String,
    pub config: Option<PathBuf>,
    pub split_seed: Option<u64>,
    pub no_interaction: bool,
    pub internal_steps: Option<usize>,
    pub train: TrainFlags,
}

pub fn train_pred(args: TrainPredArgs) -> anyhow::Result<ExitCode> {
    input!(&args.data, "dataset");
    input!(&args.ae, "AE checkpoint");
    let cfg = load_config(&args.config)?;
    let scale = Scale::parse(cfg.get("scale").unwrap_or(&args.scale))?;
    let traj = read_dataset(&args.data)?;
    let proto = scale.params();
    let split = make_split(
        traj.len(),
        &proto,
        args.split_seed.or(cfg.get_u64("split_seed")?).unwrap_or(0),
    )?;

    let ae_file = read_checkpoint(&args.ae)?;
    anyhow::ensure!(
        ae_file.kind == CheckpointKind::Autoencoder,
        "{} is not an autoencoder checkpoint",
        args.ae.display()
    );
    let norm = ae_file.norm.context("AE checkpoint lacks normalization stats")?;
    let ae_hash = heap_pipeline::persist::hash_file(&args.ae)?;

    // Embedding store: reuse the cache when it matches this AE.
    let store = match &args.store {
        Some(p) if p.exists() => read_embedding_store(p, Some(ae_hash))?,
        other => {
            eprintln!("encoding {} non-transient steps", traj.len() - proto.transient_cutoff);
            let ae_model = ae_file.instantiate()?;
            let store =
                precompute_embeddings(&ae_model, &traj, proto.transient_cutoff, &norm, ae_hash)?;
            if let Some(p) = other {
                write_embedding_store(p, &store)?;
                eprintln!("cached embeddings at {}", p.display());
            }
            store
        }
    };

    let variant = Variant::parse(cfg.get("variant").unwrap_or(&args.train.variant))?;
    anyhow::ensure!(
        variant == ae_file.config.variant,
        "predictor variant {variant} does not match AE variant {}",
        ae_file.config.variant
    );
    let mut model_cfg = ModelConfig::new(variant, args.train.seed);
    model_cfg.input_size = traj.nx();
    model_cfg.interaction = !args.no_interaction;
    if let Some(n) = args.internal_steps.or(cfg.get_usize("internal_steps")?) {
        model_cfg.internal_steps = n;
    }
    let tc = train_config_from(&args.train, &cfg, TrainConfig::predictor(variant))?;

    eprintln!(
        "train-pred: {variant}{} seed {} (N={})",
        if model_cfg.interaction { "" } else { "-noint" },
        args.train.seed,
        model_cfg.internal_steps
    );
    let t0 = std::time::Instant::now();
    let (model, history) = train_predictor(&store, &split, &model_cfg, &tc)?;
    let hash = write_predictor_checkpoint(&args.out, &model, ae_hash, None)?;
    std::fs::write(args.out.with_extension("history.csv"), history.to_csv())?;
    let status = if let Some(ep) = history.diverged_at {
        format!(" [diverged at epoch {ep}]")
    } else if history.failed {
        " [flagged: no improvement]".into()
    } else {
        String::new()
    };
    eprintln!(
        "wrote {} (hash {hash:016x}): best dev {:.4e} at epoch {}/{} in {:.0}s{status}",
        args.out.display(),
        history.best_dev_loss,
        history.best_epoch,
        history.epochs.len(),
        t0.elapsed().as_secs_f64(),
    );
    Ok(if history.diverged_at.is_some() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

/// Loads the AE + predictor pair into one model, verifying they belong
/// together.
fn load_pair(ae: &Path, pred: &Path) -> anyhow::Result<(heap_models::Model<f32>, heap_pipeline::NormStats)> {
    let ae_file = read_checkpoint(ae)?;
    anyhow::ensure!(
        ae_file.kind == CheckpointKind::Autoencoder,
        "{} is not an autoencoder checkpoint",
        ae.display()
    );
    let pred_file = read_checkpoint(pred)?;
    anyhow::ensure!(
        pred_file.kind == CheckpointKind::Predictor,
        "{} is not a predictor checkpoint",
        pred.display()
    );
    let ae_hash = heap_pipeline::persist::hash_file(ae)?;
    anyhow::ensure!(
        pred_file.ae_hash == ae_hash,
        "predictor was trained on AE {:016x}, got {:016x}",
        pred_file.ae_hash,
        ae_hash
    );
    let norm = ae_file.norm.context("AE checkpoint lacks normalization stats")?;
    let model = pred_file.instantiate()?;
    ae_file.apply(&model.ae_params(), &model.buffers())?;
    Ok((model, norm))
}

pub fn rollout(
    ae: PathBuf,
    pred: PathBuf,
    data: PathBuf,
    out: PathBuf,
    start: Option<usize>,
    steps: usize,
) -> anyhow::Result<ExitCode> {
    input!(&data, "dataset");
    input!(&ae, "AE checkpoint");
    input!(&pred, "predictor checkpoint");
    let traj = read_dataset(&data)?;
    let (model, norm) = load_pair(&ae, &pred)?;
    anyhow::ensure!(
        model.config.input_size == traj.nx(),
        "model was built for {}^2, dataset is {}^2",
        model.config.input_size,
        traj.nx()
    );
    let start = start.unwrap_or_else(|| traj.len().saturating_sub(steps + 1));
    anyhow::ensure!(start < traj.len(), "start index {start} outside trajectory");

    std::fs::create_dir_all(&out)?;
    eprintln!("rollout: {} steps from state {start}", steps);
    let outcome = rollout_states(&model, &norm, &traj, start, steps)?;
    let (states, diverged) = match outcome {
        RolloutOutcome::Complete(s) => (s, None),
        RolloutOutcome::Diverged { states, step } => (states, Some(step)),
    };

    let generated = Trajectory {
        states: states.clone(),
        dt_output: traj.dt_output,
        params: traj.params.clone(),
    };
    let gen_path = out.join("generated.hwds");
    write_dataset(&gen_path, &generated)?;

    // Side-by-side snapshots against stored truth where it exists.
    let snap_dir = out.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for s in log_spaced_steps(states.len()) {
        let gen_state = &states[s - 1];
        let truth_idx = start + s;
        for (name, gf, tf) in [
            ("n", &gen_state.n, traj.states.get(truth_idx).map(|t| &t.n)),
            ("phi", &gen_state.phi, traj.states.get(truth_idx).map(|t| &t.phi)),
        ] {
            let path = snap_dir.join(format!("step{s:05}_{name}.png"));
            match tf {
                Some(truth_field) => write_pair_png(gf, truth_field, &path)?,
                None => write_field_png(gf, &path)?,
            }
        }
    }

    eprintln!("wrote {} ({} states) and {}", gen_path.display(), states.len(), snap_dir.display());
    if let Some(step) = diverged {
        eprintln!("rollout diverged at step {step}; partial output kept");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn evaluate(generated: PathBuf, truth: PathBuf, out: PathBuf) -> anyhow::Result<ExitCode> {
    input!(&generated, "generated dataset");
    input!(&truth, "truth dataset");
    let gen = read_dataset(&generated)?;
    let tru = read_dataset(&truth)?;
    anyhow::ensure!(
        gen.nx() == tru.nx() && gen.ny() == tru.ny(),
        "grid mismatch: {}x{} vs {}x{}",
        gen.nx(),
        gen.ny(),
        tru.nx(),
        tru.ny()
    );
    // Statistical comparison over equal-length windows: all generated states
    // against the last matching stretch of the truth.
    let n = gen.len().min(tru.len());
    let gen_window: &[SystemState] = &gen.states[gen.len() - n..];
    let truth_window: &[SystemState] = &tru.states[tru.len() - n..];
    let report = metrics_report(gen_window, truth_window)?;
    write_metrics_report(&out, &report)?;
    eprintln!(
        "spatial [{:.3e} {:.3e}] temporal [{:.3e} {:.3e}] autocorr [{:.3e} {:.3e}] extrema {:.3e}",
        report.errors.spatial[0],
        report.errors.spatial[1],
        report.errors.temporal[0],
        report.errors.temporal[1],
        report.errors.autocorr[0],
        report.errors.autocorr[1],
        report.errors.extrema,
    );
    eprintln!("worst primary metric: {:.4e}; report in {}", report.errors.worst_primary(), out.display());
    Ok(ExitCode::SUCCESS)
}

pub struct StudyArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub variants: String,
    pub realizations: usize,
    pub rollout_steps: Option<usize>,
    pub scale: String,
    pub config: Option<PathBuf>,
    pub workers: Option<usize>,
    pub ae_epochs: Option<usize>,
    pub pred_epochs: Option<usize>,
    pub top_k: Option<usize>,
}

fn parse_entries(spec: &str) -> anyhow::Result<Vec<PlanEntry>> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let (name, noint) = match tok.strip_suffix(":noint") {
                Some(base) => (base, true),
                None => (tok, false),
            };
            Ok(PlanEntry { variant: Variant::parse(name)?, interaction: !noint })
        })
        .collect()
}

pub fn study(args: StudyArgs) -> anyhow::Result<ExitCode> {
    input!(&args.data, "dataset");
    let cfg = load_config(&args.config)?;
    let scale = Scale::parse(cfg.get("scale").unwrap_or(&args.scale))?;
    let proto = scale.params();
    let traj = read_dataset(&args.data)?;

    let entries = parse_entries(cfg.get("variants").unwrap_or(&args.variants))?;
    let realizations = cfg.get_usize("realizations")?.unwrap_or(args.realizations);
    let rollout_steps = args
        .rollout_steps
        .or(cfg.get_usize("rollout_steps")?)
        .unwrap_or(proto.rollout_steps);

    let mut plan = StudyPlan::new(entries, realizations, rollout_steps);
    plan.workers = args.workers.or(cfg.get_usize("workers")?).unwrap_or_else(default_workers);
    plan.verbose = true;
    if let Some(k) = args.top_k.or(cfg.get_usize("top_k")?) {
        plan.top_k = k;
    }
    if let Some(e) = args.ae_epochs.or(cfg.get_usize("ae_epochs")?) {
        plan.ae_train.max_epochs = e;
    }
    if let Some(e) = args.pred_epochs.or(cfg.get_usize("pred_epochs")?) {
        let mut t = TrainConfig::autoencoder();
        t.lr = 3e-4;
        t.max_epochs = e;
        plan.pred_train = Some(t);
    }

    let result = run_study(&plan, &traj, &proto, &args.out)?;
    let csv = study_summary_csv(&result);
    std::fs::write(args.out.join("summary.csv"), &csv)?;
    eprintln!("study complete; manifest hash {:016x}", result.manifest_hash);
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

pub fn decode_levels(
    ae: PathBuf,
    data: PathBuf,
    step: usize,
    out: PathBuf,
) -> anyhow::Result<ExitCode> {
    input!(&data, "dataset");
    input!(&ae, "AE checkpoint");
    let traj = read_dataset(&data)?;
    anyhow::ensure!(step < traj.len(), "step {step} outside trajectory of {}", traj.len());
    let ae_file = read_checkpoint(&ae)?;
    let norm = ae_file.norm.context("AE checkpoint lacks normalization stats")?;
    let model = ae_file.instantiate()?;

    std::fs::create_dir_all(&out)?;
    let state = &traj.states[step];
    let input =
        heap_tensor::Tensor::from_vec(&[1, 2, traj.ny(), traj.nx()], norm.state_to_f32(state));
    let emb = no_grad(|| model.encoder.encode(&input, Mode::Eval))?;

    let mut centroids = String::from("level,stage,spectral_centroid_n\n");
    for (i, spec) in model.config.level_specs().iter().enumerate() {
        let decoded = no_grad(|| model.decoder.decode_single_level(&emb, spec.stage, Mode::Eval))?;
        let per = traj.nx() * traj.ny();
        let v = decoded.values();
        let n_field = heap_solver::Field2D::from_values(
            traj.nx(),
            traj.ny(),
            v[..per].iter().map(|&x| norm.denorm_channel(0, x)).collect(),
        )?;
        let phi_field = heap_solver::Field2D::from_values(
            traj.nx(),
            traj.ny(),
            v[per..2 * per].iter().map(|&x| norm.denorm_channel(1, x)).collect(),
        )?;
        drop(v);
        write_field_png(&n_field, out.join(format!("level{}_n.png", i + 1)))?;
        write_field_png(&phi_field, out.join(format!("level{}_phi.png", i + 1)))?;

        // Spectral centroid of the single-level decode: coarser levels should
        // concentrate power at lower radial wavenumbers.
        let single = SystemState { n: n_field, phi: phi_field };
        let curve = spatial_spectrum(std::slice::from_ref(&single), Channel::Density)?;
        let total: f64 = curve.power.iter().sum();
        let centroid: f64 = curve
            .power
            .iter()
            .enumerate()
            .map(|(r, p)| r as f64 * p)
            .sum::<f64>()
            / total.max(1e-300);
        centroids.push_str(&format!("{},{},{:.4}\n", i + 1, spec.stage, centroid));
    }
    // Full reconstruction alongside, for reference.
    let full = no_grad(|| model.decoder.decode(&emb, Mode::Eval))?;
    let per = traj.nx() * traj.ny();
    let v = full.values();
    let full_n = heap_solver::Field2D::from_values(
        traj.nx(),
        traj.ny(),
        v[..per].iter().map(|&x| norm.denorm_channel(0, x)).collect(),
    )?;
    write_field_png(&full_n, out.join("full_n.png"))?;
    write_field_png(&state.n, out.join("input_n.png"))?;
    std::fs::write(out.join("spectral_centroids.csv"), &centroids)?;
    eprintln!("wrote {} level decodes to {}", model.config.level_specs().len(), out.display());
    Ok(ExitCode::SUCCESS)
}

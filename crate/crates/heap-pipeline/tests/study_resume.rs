//! Study harness: a micro study end-to-end, then resume equivalence — an
//! interrupted-and-resumed study must reproduce the same checkpoints (by
//! hash) and the same manifest content hash as an uninterrupted one.

use heap_models::Variant;
use heap_pipeline::persist::hash_file;
use heap_pipeline::report::study_summary_csv;
use heap_pipeline::study::{run_study, PlanEntry, StudyPlan};
use heap_pipeline::{ProtocolParams, TrainConfig};
use heap_solver::{Field2D, SolverParams, SystemState, Trajectory};

fn synthetic_trajectory(nx: usize, n_steps: usize) -> Trajectory {
    let params = SolverParams { nx, ny: nx, ..Default::default() };
    let k = 2.0 * std::f64::consts::PI / nx as f64;
    let states: Vec<SystemState> = (0..n_steps)
        .map(|t| {
            let tt = t as f64;
            let n = Field2D::from_fn(nx, nx, |x, y| {
                (k * (x as f64 + 2.0 * y as f64) + 0.09 * tt).sin()
            });
            let phi = Field2D::from_fn(nx, nx, |x, y| {
                0.7 * (k * (2.0 * x as f64 - y as f64) - 0.06 * tt).cos()
            });
            SystemState { n, phi }
        })
        .collect();
    Trajectory { states, dt_output: 1.0, params }
}

fn micro_protocol() -> ProtocolParams {
    ProtocolParams {
        nx: 32,
        n_outputs: 50,
        transient_cutoff: 4,
        ae_train: 32,
        ae_dev: 8,
        pair_train: 32,
        pair_dev: 8,
        rollout_steps: 6,
    }
}

fn micro_plan(entries: Vec<PlanEntry>, realizations: usize) -> StudyPlan {
    let mut plan = StudyPlan::new(entries, realizations, 6);
    plan.ae_train = TrainConfig { max_epochs: 2, batch_size: 16, ..TrainConfig::autoencoder() };
    plan.pred_train =
        Some(TrainConfig { max_epochs: 2, batch_size: 16, ..TrainConfig::autoencoder() });
    plan
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("heap-study-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn micro_study_end_to_end() {
    let traj = synthetic_trajectory(32, 50);
    let protocol = micro_protocol();
    let entries = vec![PlanEntry { variant: Variant::H(1), interaction: true }];
    let plan = micro_plan(entries, 2);
    let dir = tmp_dir("e2e");

    let result = run_study(&plan, &traj, &protocol, &dir).unwrap();
    assert_eq!(result.entries.len(), 1);
    let summary = &result.entries[0];
    assert_eq!(summary.outcomes.len(), 2);
    // Two realizations, seeds 2 and 12, each evaluated with a metrics dir.
    assert!(summary.best_outcome().is_some());
    assert!(dir.join("ae-H1.ckpt").exists());
    assert!(dir.join("emb-H1.bin").exists());
    assert!(dir.join("pred-H1-s2.ckpt").exists());
    assert!(dir.join("pred-H1-s12.ckpt").exists());
    assert!(dir.join("metrics-H1-s2/summary.csv").exists());
    assert!(dir.join("manifest.txt").exists());

    let csv = study_summary_csv(&result);
    assert_eq!(csv.lines().count(), 2, "one header + one row: {csv}");

    // Ranking uses the worst primary metric.
    let best = summary.best_outcome().unwrap();
    for o in &summary.outcomes {
        if let Some(w) = o.worst {
            assert!(best.worst.unwrap() <= w);
        }
    }
}

#[test]
fn interrupted_study_resumes_to_identical_artifacts() {
    let traj = synthetic_trajectory(32, 50);
    let protocol = micro_protocol();
    let entries = vec![PlanEntry { variant: Variant::H(1), interaction: true }];

    // Uninterrupted reference run.
    let full_dir = tmp_dir("full");
    let full = run_study(&micro_plan(entries.clone(), 2), &traj, &protocol, &full_dir).unwrap();

    // "Interrupted": first run only one realization, then rerun with two.
    let resume_dir = tmp_dir("resume");
    run_study(&micro_plan(entries.clone(), 1), &traj, &protocol, &resume_dir).unwrap();
    let resumed = run_study(&micro_plan(entries, 2), &traj, &protocol, &resume_dir).unwrap();

    for name in ["ae-H1.ckpt", "emb-H1.bin", "pred-H1-s2.ckpt", "pred-H1-s12.ckpt"] {
        let a = hash_file(full_dir.join(name)).unwrap();
        let b = hash_file(resume_dir.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between full and resumed runs");
    }
    assert_eq!(full.manifest_hash, resumed.manifest_hash);
}

/// Two variants x two seeds produce a 2-row comparison table and share
/// nothing but the protocol.
#[test]
fn two_variant_study_summary() {
    let traj = synthetic_trajectory(32, 50);
    let protocol = micro_protocol();
    let entries = vec![
        PlanEntry { variant: Variant::H(1), interaction: true },
        PlanEntry { variant: Variant::H(2), interaction: false },
    ];
    let plan = micro_plan(entries, 2);
    let dir = tmp_dir("two");
    let result = run_study(&plan, &traj, &protocol, &dir).unwrap();
    let csv = study_summary_csv(&result);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("H1,"));
    assert!(csv.contains("H2-noint,"));
    assert!(dir.join("ae-H2.ckpt").exists());
    assert!(dir.join("pred-H2-noint-s12.ckpt").exists());
}

use std::path::PathBuf;

use geodesic_nets::geometry::{straight_line, Path};
use geodesic_nets::io::{
    dual_task_csv, epochs_csv, load_checkpoint, load_path, path_csv, save_checkpoint, save_path,
    write_atomic, write_csv, write_summary, BaselineSection, RunConfig,
};
use geodesic_nets::nn::{loss_and_accuracy, sgd_train, Dataset, SgdConfig, WeightVector};
use geodesic_nets::search::{best_of_walks, walk};
use geodesic_nets::tasks::{
    evaluate_dual_task, forgetting_walk, make_sparsity_plane, prune_train_baseline,
    PruneTrainConfig, TaskData, TwoTaskSetup,
};
use geodesic_nets::{Error, Result};
use serde_json::json;

use crate::Outcome;

const DEFAULT_BASELINE: BaselineSection = BaselineSection {
    units_per_cycle: 1,
    epochs_per_cycle: 1,
    lr: 0.1,
    batch_size: 16,
};

fn out(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

/// Writes the resolved configuration, with input hashes, next to the outputs.
fn write_manifest(config: &RunConfig) -> Result<()> {
    let resolved = config.clone().with_provenance()?;
    write_atomic(
        &out(config, "manifest.toml"),
        resolved.to_toml_string()?.as_bytes(),
    )
}

fn load_data(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("`data` is required".into()))?;
    data.load(config.seed()?)
}

fn min_accuracy(path: &Path) -> Option<f64> {
    path.records()
        .iter()
        .filter_map(|r| r.eval.map(|e| e.accuracy))
        .reduce(f64::min)
}

fn final_accuracy(path: &Path) -> Option<f64> {
    path.records()
        .last()
        .and_then(|r| r.eval.map(|e| e.accuracy))
}

pub fn train(config: &RunConfig) -> Result<Outcome> {
    let seed = config.seed()?;
    let spec = config.network.as_ref().expect("validated").spec()?;
    let section = config.train.as_ref().expect("validated");
    let (train, test) = load_data(config)?;
    let w0 = WeightVector::glorot_seeded(&spec, seed);
    let sgd = SgdConfig::new(section.lr, section.epochs, section.batch_size, seed);
    let outcome = sgd_train(&spec, &w0, &train, &sgd)?;
    let test_eval = loss_and_accuracy(&spec, &outcome.weights, &test)?;
    let last = outcome.epochs.last().expect("at least one epoch");

    save_checkpoint(&out(config, "network.gwck"), &spec, &outcome.weights)?;
    write_csv(&out(config, "epochs.csv"), &epochs_csv(&outcome.epochs)?)?;
    write_summary(
        &out(config, "summary.json"),
        &json!({
            "task": "train",
            "network": spec.to_string(),
            "parameters": spec.num_params(),
            "epochs": outcome.epochs.len(),
            "gradient_evals": outcome.gradient_evals,
            "train_loss": last.loss,
            "train_accuracy": last.accuracy,
            "test_loss": test_eval.loss,
            "test_accuracy": test_eval.accuracy,
        }),
    )?;
    write_manifest(config)?;
    Ok(Outcome::Done)
}

pub fn sparsify(mut config: RunConfig, baseline: bool) -> Result<Outcome> {
    if baseline {
        let section = config.sparsify.as_mut().expect("validated");
        section.baseline.get_or_insert(DEFAULT_BASELINE);
    }
    let config = config;
    let seed = config.seed()?;
    let section = config.sparsify.as_ref().expect("validated");
    let (spec, w) = load_checkpoint(config.checkpoint.as_deref().expect("validated"))?;
    let (train, test) = load_data(&config)?;
    let plane = make_sparsity_plane(&spec, &w, section.level, section.selection_rule())?;
    let walk_cfg = config.walk.clone().unwrap_or_default();
    let dense = loss_and_accuracy(&spec, &w, &test)?;

    let (outcome, leaderboard) = match &section.beta_grid {
        Some(grid) => {
            let best = best_of_walks(
                &spec,
                &w,
                plane.field(),
                &walk_cfg.beta_grid(grid),
                &train,
                Some(&test),
            )?;
            (
                best.best,
                Some((best.best_index, best.leaderboard, best.total_work)),
            )
        }
        None => (
            walk(&spec, &w, plane.field(), &walk_cfg, &train, Some(&test))?,
            None,
        ),
    };
    let path = &outcome.path;
    let end = path.last();
    let zero_fraction = end.iter().filter(|&&x| x == 0.0).count() as f64 / end.len() as f64;

    save_path(&out(&config, "path.gwpt"), path)?;
    write_csv(&out(&config, "path.csv"), &path_csv(path)?)?;
    save_checkpoint(&out(&config, "sparse.gwck"), &spec, end)?;

    let mut summary = json!({
        "task": "sparsify",
        "network": spec.to_string(),
        "rule": plane.rule().tag(),
        "level": plane.level(),
        "masked_coordinates": plane.zero_count(),
        "final_zero_fraction": zero_fraction,
        "on_plane": plane.contains(end),
        "converged": outcome.converged,
        "steps": outcome.steps,
        "checkpoints": path.len(),
        "work": outcome.work,
        "epsilon": outcome.epsilon,
        "energy": path.cumulative_energy(),
        "length": path.cumulative_length(),
        "dense_accuracy": dense.accuracy,
        "final_accuracy": final_accuracy(path),
        "min_accuracy": min_accuracy(path),
    });
    if let Some((best_index, board, total_work)) = leaderboard {
        summary["best_index"] = json!(best_index);
        summary["leaderboard"] = json!(board);
        summary["total_work"] = json!(total_work);
    }
    if let Some(b) = &section.baseline {
        let cfg = PruneTrainConfig {
            units_per_cycle: b.units_per_cycle,
            epochs_per_cycle: b.epochs_per_cycle,
            lr: b.lr,
            batch_size: b.batch_size,
            seed,
        };
        let base = prune_train_baseline(
            &spec,
            &w,
            &plane,
            &train,
            Some(&test),
            &cfg,
            &walk_cfg.batch,
        )?;
        save_path(&out(&config, "baseline.gwpt"), &base.path)?;
        write_csv(&out(&config, "baseline.csv"), &path_csv(&base.path)?)?;
        summary["baseline"] = json!({
            "cycles": base.cycles,
            "epochs": base.epochs,
            "gradient_evals": base.gradient_evals,
            "final_accuracy": final_accuracy(&base.path),
            "min_accuracy": min_accuracy(&base.path),
        });
    }
    write_summary(&out(&config, "summary.json"), &summary)?;
    write_manifest(&config)?;
    Ok(if outcome.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

pub fn merge(config: &RunConfig) -> Result<Outcome> {
    let seed = config.seed()?;
    let (spec, w1) = load_checkpoint(config.checkpoint.as_deref().expect("validated"))?;
    let (spec2, w2) = load_checkpoint(config.checkpoint2.as_deref().expect("validated"))?;
    if spec != spec2 {
        return Err(Error::SpecMismatch(format!(
            "task networks differ: {spec} vs {spec2}"
        )));
    }
    let (train1, test1) = load_data(config)?;
    let (train2, test2) = config.data2.as_ref().expect("validated").load(seed)?;
    let manifold = config
        .merge
        .as_ref()
        .map(|m| m.manifold)
        .unwrap_or_default();
    let setup = TwoTaskSetup::new(
        spec.clone(),
        w1.clone(),
        w2.clone(),
        TaskData {
            train: train1,
            test: test1,
        },
        TaskData {
            train: train2,
            test: test2,
        },
        manifold,
    )?;
    let walk_cfg = config.walk.clone().unwrap_or_default();
    let outcome = forgetting_walk(&setup, &walk_cfg)?;
    let path = &outcome.path;
    let table = evaluate_dual_task(&setup, path.checkpoints())?;
    let line_best = if path.len() >= 2 {
        let line = straight_line(&w1, &w2, path.len())?;
        let t = evaluate_dual_task(&setup, &line)?;
        Some(
            json!({ "index": t.recommended, "acc_task1": t.best().acc1, "acc_task2": t.best().acc2 }),
        )
    } else {
        None
    };
    let best = table.best();

    save_path(&out(config, "path.gwpt"), path)?;
    write_csv(&out(config, "dual.csv"), &dual_task_csv(path, &table)?)?;
    save_checkpoint(
        &out(config, "merged.gwck"),
        &spec,
        &path.checkpoints()[table.recommended],
    )?;
    write_summary(
        &out(config, "summary.json"),
        &json!({
            "task": "merge",
            "network": spec.to_string(),
            "manifold": manifold,
            "converged": outcome.converged,
            "steps": outcome.steps,
            "checkpoints": path.len(),
            "work": outcome.work,
            "energy": path.cumulative_energy(),
            "length": path.cumulative_length(),
            "recommended": table.recommended,
            "recommended_acc_task1": best.acc1,
            "recommended_acc_task2": best.acc2,
            "start_acc_task1": table.rows[0].acc1,
            "start_acc_task2": table.rows[0].acc2,
            "end_acc_task1": table.rows[table.rows.len() - 1].acc1,
            "end_acc_task2": table.rows[table.rows.len() - 1].acc2,
            "straight_line_best": line_best,
        }),
    )?;
    write_manifest(config)?;
    Ok(if outcome.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn stored_path(config: &RunConfig) -> Result<Path> {
    load_path(config.path_file.as_deref().expect("validated"), None)
}

pub fn evaluate(config: &RunConfig) -> Result<Outcome> {
    let mut path = stored_path(config)?;
    let (_, test) = load_data(config)?;
    let spec = path.spec().clone();
    let evals = path
        .checkpoints()
        .iter()
        .map(|c| loss_and_accuracy(&spec, c, &test))
        .collect::<Result<Vec<_>>>()?;
    for (r, e) in path.records_mut().iter_mut().zip(evals) {
        r.eval = Some(e);
    }
    write_csv(&out(config, "evaluation.csv"), &path_csv(&path)?)?;
    write_summary(
        &out(config, "summary.json"),
        &json!({
            "task": "evaluate",
            "network": spec.to_string(),
            "checkpoints": path.len(),
            "test_examples": test.len(),
            "first_accuracy": path.records()[0].eval.map(|e| e.accuracy),
            "final_accuracy": final_accuracy(&path),
            "min_accuracy": min_accuracy(&path),
        }),
    )?;
    write_manifest(config)?;
    Ok(Outcome::Done)
}

pub fn emit_plot_data(config: &RunConfig) -> Result<Outcome> {
    let path = stored_path(config)?;
    write_csv(&out(config, "plot.csv"), &path_csv(&path)?)?;
    write_manifest(config)?;
    Ok(Outcome::Done)
}

//! Plot-ready CSV tables and JSON summaries.

use std::path::Path as FsPath;

use serde::Serialize;

use super::files::write_atomic;
use crate::error::Result;
use crate::geometry::Path;
use crate::nn::EpochMetrics;
use crate::tasks::DualTaskTable;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()).into())
}

/// One row per checkpoint: index, t, loss, accuracy, distance to goal and
/// running energy and length. Loss and accuracy are blank where unevaluated.
pub fn path_csv(path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "t",
        "loss",
        "accuracy",
        "distance_to_goal",
        "cumulative_energy",
        "cumulative_length",
    ])?;
    for (i, (rec, (e, l))) in path.records().iter().zip(path.running_totals()).enumerate() {
        w.write_record([
            i.to_string(),
            path.t(i).to_string(),
            opt(rec.eval.map(|e| e.loss)),
            opt(rec.eval.map(|e| e.accuracy)),
            rec.distance_to_goal.to_string(),
            e.to_string(),
            l.to_string(),
        ])?;
    }
    finish(w)
}

/// Both tasks' loss and accuracy for every checkpoint of `path`.
pub fn dual_task_csv(path: &Path, table: &DualTaskTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "t",
        "distance_to_goal",
        "loss_task1",
        "acc_task1",
        "loss_task2",
        "acc_task2",
        "cumulative_energy",
        "cumulative_length",
    ])?;
    for (row, (e, l)) in table.rows.iter().zip(path.running_totals()) {
        w.write_record([
            row.index.to_string(),
            path.t(row.index).to_string(),
            row.distance_to_t2.to_string(),
            row.loss1.to_string(),
            row.acc1.to_string(),
            row.loss2.to_string(),
            row.acc2.to_string(),
            e.to_string(),
            l.to_string(),
        ])?;
    }
    finish(w)
}

pub fn epochs_csv(epochs: &[EpochMetrics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in epochs {
        w.serialize(e)?;
    }
    finish(w)
}

pub fn write_csv(file: &FsPath, bytes: &[u8]) -> Result<()> {
    write_atomic(file, bytes)
}

/// Pretty JSON with a trailing newline.
pub fn write_summary<T: Serialize>(file: &FsPath, summary: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(summary).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(file, &bytes)
}

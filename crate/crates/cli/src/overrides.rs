use geodesic_nets::io::{RunConfig, TaskKind, SCHEMA_VERSION};
use geodesic_nets::{Error, Result};
use toml::{Table, Value};

use crate::Common;

/// Builds the run configuration from `--config` (if any), then applies the
/// flag overrides in order.
pub fn resolve(task: TaskKind, common: &Common) -> Result<RunConfig> {
    let mut table = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::MissingFile(p.clone())
                } else {
                    e.into()
                }
            })?;
            text.parse::<Table>()
                .map_err(|e| Error::Config(e.to_string()))?
        }
        None => {
            let mut t = Table::new();
            t.insert(
                "schema_version".into(),
                Value::Integer(SCHEMA_VERSION as i64),
            );
            t
        }
    };
    let task_name = match task {
        TaskKind::Train => "train",
        TaskKind::Sparsify => "sparsify",
        TaskKind::Merge => "merge",
        TaskKind::Evaluate => "evaluate",
    };
    match table.get("task") {
        Some(Value::String(t)) if t != task_name => {
            return Err(Error::Config(format!(
                "configuration is for task `{t}`, not `{task_name}`"
            )));
        }
        _ => {
            table.insert("task".into(), Value::String(task_name.into()));
        }
    }
    if let Some(seed) = common.seed {
        table.insert("seed".into(), Value::Integer(seed as i64));
    }
    for (key, p) in [
        ("output_dir", &common.output_dir),
        ("checkpoint", &common.checkpoint),
        ("checkpoint2", &common.checkpoint2),
        ("path_file", &common.path_file),
    ] {
        if let Some(p) = p {
            table.insert(key.into(), Value::String(p.display().to_string()));
        }
    }
    for item in &common.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    // Inputs changed on the command line invalidate recorded hashes for them.
    if let Some(Value::Table(prov)) = table.get_mut("provenance") {
        for key in ["checkpoint", "checkpoint2", "path_file"] {
            if common_overrides(common, key) {
                prov.remove(key);
            }
        }
    }
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn common_overrides(common: &Common, key: &str) -> bool {
    match key {
        "checkpoint" => common.checkpoint.is_some(),
        "checkpoint2" => common.checkpoint2.is_some(),
        _ => common.path_file.is_some(),
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("`{part}` in `{key}` is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

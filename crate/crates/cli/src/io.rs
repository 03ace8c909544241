//! File helpers shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use optlist::TaskConfig;

use crate::{CliError, CliResult};

pub const STORE_ENV: &str = "OPTLIST_STORE";

pub fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

/// `--store`, falling back to `$OPTLIST_STORE`.
pub fn store_dir(flag: Option<PathBuf>) -> CliResult<PathBuf> {
    flag.or_else(|| std::env::var_os(STORE_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("missing --store (or ${STORE_ENV})")))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parse every non-blank line; the first failure names its line.
pub fn read_jsonl<T>(path: &Path, parse: impl Fn(&str) -> optlist::Result<T>) -> CliResult<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse(l).map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Task ids from a file of task configs (JSONL) or bare ids, one per line.
pub fn read_task_ids(path: &Path) -> CliResult<Vec<String>> {
    let text = read_text(path)?;
    let mut ids = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let c = TaskConfig::from_json(line)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
            ids.push(c.task_id().to_string());
        } else {
            ids.push(line.to_string());
        }
    }
    Ok(ids)
}

pub fn write_text(path: &Path, body: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Usage(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, body).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> CliResult<()> {
    let mut body = String::new();
    for l in lines {
        body.push_str(&l);
        body.push('\n');
    }
    write_text(path, &body)
}

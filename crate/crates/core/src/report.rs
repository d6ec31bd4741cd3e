//! Merges experiment records from an output tree into one summary and
//! writes plot-ready `(x, y, ci)` files.

use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::runner::{status_code, ExperimentRecord, Verdict, RECORD_FILE};

#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub path: String,
    pub kind: String,
    pub version: String,
    pub config_hash: String,
    pub kernel_hash: String,
    /// Other sections run with the same kernel.
    pub same_kernel: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub plot_files: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub sections: Vec<Section>,
    pub skipped: Vec<String>,
    pub exit_code: i32,
}

/// Record files in `dir` and its immediate subdirectories, sorted.
fn find_records(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let top = dir.join(RECORD_FILE);
    if top.is_file() {
        found.push(top);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for s in subdirs {
        let f = s.join(RECORD_FILE);
        if f.is_file() {
            found.push(f);
        }
    }
    Ok(found)
}

fn slug(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c.to_ascii_lowercase() } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

/// Writes `summary.json` and `plots/*.csv` under `dir`. Returns `None` when
/// the directory holds no record files at all.
pub fn report(dir: &Path) -> Result<Option<Summary>> {
    let files = find_records(dir)?;
    if files.is_empty() {
        return Ok(None);
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for f in &files {
        let rel = f
            .parent()
            .and_then(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        match fs::read_to_string(f).map_err(|e| e.to_string()).and_then(|t| {
            serde_json::from_str::<ExperimentRecord>(&t).map_err(|e| e.to_string())
        }) {
            Ok(r) => records.push((rel, r)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", f.display());
                skipped.push(f.display().to_string());
            }
        }
    }
    let plots = dir.join("plots");
    let mut sections = Vec::new();
    for (i, (rel, r)) in records.iter().enumerate() {
        let mut plot_files = Vec::new();
        for s in &r.series {
            if plot_files.is_empty() {
                fs::create_dir_all(&plots)?;
            }
            let name = format!("{}-{}.csv", slug(&format!("{rel}-{}", r.kind_name())), slug(&s.name));
            let mut csv = format!("# {} vs {}\nx,y,ci\n", s.y_label, s.x_label);
            for ((x, y), c) in s.x.iter().zip(&s.y).zip(&s.ci) {
                let _ = writeln!(csv, "{x},{y},{c}");
            }
            fs::write(plots.join(&name), csv)?;
            plot_files.push(format!("plots/{name}"));
        }
        let same_kernel = records
            .iter()
            .enumerate()
            .filter(|(j, (_, o))| *j != i && o.kernel_hash == r.kernel_hash)
            .map(|(_, (p, _))| p.clone())
            .collect();
        sections.push(Section {
            path: rel.clone(),
            kind: r.kind_name().into(),
            version: r.version.clone(),
            config_hash: r.config_hash.clone(),
            kernel_hash: r.kernel_hash.clone(),
            same_kernel,
            verdicts: r.verdicts.clone(),
            plot_files,
        });
    }
    let mut exit_code = status_code(records.iter().flat_map(|(_, r)| r.verdicts.iter().map(|v| v.status)));
    if !skipped.is_empty() && exit_code == 0 {
        exit_code = 3;
    }
    let summary = Summary {
        sections,
        skipped,
        exit_code,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(Some(summary))
}

impl ExperimentRecord {
    fn kind_name(&self) -> &'static str {
        self.kind.name()
    }
}

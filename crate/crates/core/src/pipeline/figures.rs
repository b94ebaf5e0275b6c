//! Plot-ready data for each figure, assembled from stage artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::MANIFEST_FILE;
use crate::corpus::io_create;
use crate::econometrics::ModelReport;
use crate::{Error, Result};

/// Figure id → (stage, artifact). Ids reading `results.json` filter models
/// by name prefix instead of copying the file.
pub const FIGURES: [(&str, &str, &str); 9] = [
    ("fig2b", "jobs", "mask_table.csv"),
    ("fig3a", "vectors", "shares.csv"),
    ("fig3b", "econ", "entry_bins.csv"),
    ("fig3c", "econ", "results.json"),
    ("fig3d", "econ", "results.json"),
    ("fig4a", "structure", "task_language.csv"),
    ("fig4b", "structure", "top_language_series.csv"),
    ("fig4c", "structure", "footprint.csv"),
    ("appF", "structure", "dominance.csv"),
];

fn model_prefixes(id: &str) -> &'static [&'static str] {
    match id {
        "fig3c" => &["voting_", "placebo_"],
        "fig3d" => &["entry_"],
        _ => &[],
    }
}

#[derive(Deserialize)]
struct Results {
    models: Vec<ModelReport>,
}

fn write_coefficients(source: &Path, target: &Path, prefixes: &[&str]) -> Result<()> {
    let text = std::fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    let results: Results = serde_json::from_str(&text)?;
    let mut w = io_create(target)?;
    let io = |e| Error::io(target, e);
    writeln!(w, "model,term,estimate,se,ci_lo,ci_hi,p_value,n").map_err(io)?;
    for m in results.models.iter().filter(|m| prefixes.iter().any(|p| m.name.starts_with(p))) {
        for c in &m.coefficients {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                m.name,
                c.name,
                c.estimate,
                c.se,
                c.estimate - 1.96 * c.se,
                c.estimate + 1.96 * c.se,
                c.p_value,
                m.n
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes `<out>/figures/<id>.csv` and returns its path.
pub fn emit_figure_data(id: &str, out: &Path) -> Result<PathBuf> {
    let &(_, stage, artifact) = FIGURES
        .iter()
        .find(|(fid, _, _)| *fid == id)
        .ok_or_else(|| Error::Config(format!("unknown figure id `{id}`")))?;
    let stage_dir = out.join(stage);
    if !stage_dir.join(MANIFEST_FILE).is_file() {
        return Err(Error::MissingArtifact {
            stage: stage.to_string(),
            path: stage_dir.join(MANIFEST_FILE),
        });
    }
    let source = stage_dir.join(artifact);
    let dir = out.join("figures");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let target = dir.join(format!("{id}.csv"));
    let prefixes = model_prefixes(id);
    if prefixes.is_empty() {
        std::fs::copy(&source, &target).map_err(|e| Error::io(&source, e))?;
    } else {
        write_coefficients(&source, &target, prefixes)?;
    }
    Ok(target)
}

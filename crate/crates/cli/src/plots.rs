//! Gnuplot-ready whitespace-separated tables from the JSON reports of a run.

use std::path::{Path, PathBuf};

use fkverify::correspondence::{CorrespondenceReport, MollificationReport};
use fkverify::pde::SweepReport;
use serde::de::DeserializeOwned;

use crate::checks::{PicardReport, RefinementReport};
use crate::error::{CliError, Result};

/// Reports `emit-plots` knows how to turn into tables.
pub const KNOWN_REPORTS: [&str; 5] = [
    "viscosity.json",
    "refinement.json",
    "picard.json",
    "correspondence.json",
    "mollification.json",
];

fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn table(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("# {header}\n");
    for r in rows {
        let cols: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cols.join(" "));
        s.push('\n');
    }
    s
}

/// Writes one `.dat` file per report found in `dir`; errors when there are
/// none.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, String)> = Vec::new();
    if let Some(r) = read::<SweepReport>(dir, "viscosity.json")? {
        files.push((
            "viscosity.dat".into(),
            table("epsilon W12_gap", r.gaps.iter().map(|g| vec![g.eps_from, g.w12])),
        ));
    }
    if let Some(r) = read::<RefinementReport>(dir, "refinement.json")? {
        files.push((
            "refinement.dat".into(),
            table("h error", r.levels.iter().map(|l| vec![l.h, l.error])),
        ));
    }
    if let Some(r) = read::<PicardReport>(dir, "picard.json")? {
        let rows =
            |v: &[f64]| -> Vec<Vec<f64>> { v.iter().enumerate().map(|(i, r)| vec![(i + 1) as f64, *r]).collect() };
        files.push(("picard_pde.dat".into(), table("iteration ratio", rows(&r.pde_ratios))));
        files.push(("picard_bsde.dat".into(), table("iteration ratio", rows(&r.bsde_ratios))));
    }
    if let Some(r) = read::<CorrespondenceReport>(dir, "correspondence.json")? {
        let d = r.xs.first().map_or(1, Vec::len);
        let header = if d == 1 {
            "t x u_pde u_mc".to_string()
        } else {
            format!(
                "t {} u_pde u_mc",
                (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(" ")
            )
        };
        let rows = r.points.iter().map(|p| {
            let mut row = vec![p.t];
            row.extend(&p.x);
            row.extend([p.u_pde, p.u_mc]);
            row
        });
        files.push(("correspondence.dat".into(), table(&header, rows)));
    }
    if let Some(r) = read::<MollificationReport>(dir, "mollification.json")? {
        files.push((
            "mollification.dat".into(),
            table("epsilon gap", r.epsilons.iter().zip(&r.gaps).map(|(e, g)| vec![*e, *g])),
        ));
    }
    if files.is_empty() {
        return Err(CliError::MissingReports {
            dir: dir.display().to_string(),
            expected: KNOWN_REPORTS.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

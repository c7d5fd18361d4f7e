//! Gnuplot data and scripts for the sweep figures.
//!
//! One `.dat` file per (scenario, architecture) series, with columns
//! `epsilon fim_bob crb`. No-eve series are flat and span the ε-grid.
//! `fim.gp` plots Bob's trace-FIM against ε, `crb.gp` the CRB on a log
//! y-axis. Eve-constrained curves are solid, no-eve references dashed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{ResultTable, Scenario};
use crate::model::Architecture;

struct Series {
    file: String,
    title: String,
    dash: u8,
    color: usize,
}

fn data_file(table: &ResultTable, scenario: Scenario, arch: Architecture) -> Option<String> {
    let rows: Vec<_> = table.rows_for(scenario, arch).collect();
    if rows.is_empty() {
        return None;
    }
    let mut out = String::from("# epsilon fim_bob crb\n");
    match scenario {
        Scenario::Eve => {
            for r in rows {
                let _ = writeln!(out, "{} {} {}", r.epsilon.unwrap_or(f64::NAN), r.fim_bob, r.crb);
            }
        }
        Scenario::NoEve => {
            let r = rows[0];
            let (lo, hi) = match (table.epsilon_grid.first(), table.epsilon_grid.last()) {
                (Some(&lo), Some(&hi)) => (lo, hi),
                _ => {
                    let e = r.fim_eve.unwrap_or(1.0);
                    (0.5 * e, 2.0 * e)
                }
            };
            for x in [lo, hi] {
                let _ = writeln!(out, "{x} {} {}", r.fim_bob, r.crb);
            }
        }
    }
    Some(out)
}

fn script(series: &[Series], column: usize, ylabel: &str, log_y: bool, output: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{output}'");
    let _ = writeln!(s, "set logscale x");
    if log_y {
        let _ = writeln!(s, "set logscale y");
    }
    let _ = writeln!(s, "set xlabel 'Eve trace-FIM limit'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    let _ = writeln!(s, "set key outside right");
    let parts: Vec<String> = series
        .iter()
        .map(|p| {
            format!(
                "'{}' using 1:{column} with linespoints dt {} lc {} title '{}'",
                p.file, p.dash, p.color, p.title
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

/// Writes the series and both scripts into `dir`. An empty table only
/// logs a warning.
pub fn emit_plots(table: &ResultTable, dir: impl AsRef<Path>) -> Result<()> {
    if table.rows.is_empty() {
        log::warn!("empty result table; no plots written");
        return Ok(());
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut series = Vec::new();
    for (color, arch) in Architecture::ALL.into_iter().enumerate() {
        for scenario in [Scenario::Eve, Scenario::NoEve] {
            let Some(body) = data_file(table, scenario, arch) else { continue };
            let file = format!("{scenario}_{arch}.dat");
            let path = dir.join(&file);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            series.push(Series {
                file,
                title: format!("{arch} ({scenario})"),
                dash: if scenario == Scenario::Eve { 1 } else { 2 },
                color: color + 1,
            });
        }
    }
    for (name, column, ylabel, log_y) in [("fim", 2, "Bob trace-FIM", false), ("crb", 3, "CRB", true)] {
        let path = dir.join(format!("{name}.gp"));
        let body = script(&series, column, ylabel, log_y, &format!("{name}.png"));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

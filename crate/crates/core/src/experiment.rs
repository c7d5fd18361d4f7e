//! ε-grid sweeps over architectures and scenarios.
//!
//! Unconstrained designs are computed once per architecture; they supply
//! the no-eve rows, the default grid scale and the warm starts of every
//! Eve-constrained cell. Constrained cells run on the rayon pool and are
//! gathered in a fixed order, so identical specs give identical CSV bytes
//! unless wall-clock timing is requested.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagonal::{solve_diagonal_constrained, solve_diagonal_unconstrained, DiagForms, DiagSettings};
use crate::error::{Error, Result};
use crate::model::{
    build_forms, crb_trace, fim_matrix, generate_channels, simulate_mle_mse, trace_fim, Architecture,
    ChannelSet, QuadraticForms, RisMatrix, SystemConfig, Target,
};
use crate::pdd::{solve_pdd_from, PddSettings};
use crate::report::SolveReport;
use crate::spectral::{solve_nonreciprocal, solve_reciprocal_ao, AoSettings};
use crate::tolerances::EVE_CAP_SLACK;
use crate::{CVec, C64};

/// Column order of `results.csv`.
pub const CSV_HEADER: &str = "scenario,architecture,epsilon,fim_bob,fim_eve,crb,mse_mc,iters,converged,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    NoEve,
    Eve,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::NoEve, Scenario::Eve];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NoEve => "no-eve",
            Scenario::Eve => "eve",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no-eve" | "noeve" | "none" => Ok(Scenario::NoEve),
            "eve" => Ok(Scenario::Eve),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

fn default_grid_points() -> usize {
    20
}

/// Everything a sweep depends on. `pdd.epsilon_eve` is ignored; each cell
/// sets its own cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub cfg: SystemConfig,
    /// Eve caps. `None` means `grid_points` log-spaced values over
    /// `[1e-2, 1]` times the non-reciprocal no-eve optimum.
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    pub architectures: Vec<Architecture>,
    pub scenarios: Vec<Scenario>,
    /// Monte-Carlo trials of the MLE per row; 0 disables the column.
    pub mc_trials: usize,
    pub output_path: PathBuf,
    /// Fill `wall_ms`. Off by default because it breaks byte-identical
    /// reruns.
    #[serde(default)]
    pub record_timing: bool,
    /// Load channels from a fixture instead of generating them from
    /// `cfg.seed`.
    #[serde(default)]
    pub channels_path: Option<PathBuf>,
    #[serde(default)]
    pub ao: AoSettings,
    #[serde(default)]
    pub pdd: PddSettings,
    #[serde(default)]
    pub diagonal: DiagSettings,
}

impl ExperimentSpec {
    /// All architectures and scenarios on the default grid, no Monte-Carlo.
    pub fn new(cfg: SystemConfig, output_path: impl Into<PathBuf>) -> Self {
        let diagonal = DiagSettings { seed: cfg.seed, ..DiagSettings::default() };
        Self {
            cfg,
            epsilon_grid: None,
            grid_points: default_grid_points(),
            architectures: Architecture::ALL.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            mc_trials: 0,
            output_path: output_path.into(),
            record_timing: false,
            channels_path: None,
            ao: AoSettings::default(),
            pdd: PddSettings::default(),
            diagonal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.architectures.is_empty() || self.scenarios.is_empty() {
            return Err(Error::Config("architectures and scenarios must be non-empty".into()));
        }
        if let Some(grid) = &self.epsilon_grid {
            if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(Error::Config("epsilon grid must be non-empty, positive and finite".into()));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("epsilon grid must be strictly increasing".into()));
            }
        } else if self.grid_points == 0 {
            return Err(Error::Config("grid_points must be positive".into()));
        }
        if self.scenarios.contains(&Scenario::Eve) && !self.cfg.eve_present {
            return Err(Error::Config("eve scenario requested but eve_present is false".into()));
        }
        self.ao.validate()?;
        self.pdd.validate()?;
        self.diagonal.validate()
    }
}

/// Fractions `10^{-2(1 - i/(n-1))}`, i.e. log-spaced from `1e-2` to 1.
pub fn default_grid(scale: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![scale];
    }
    (0..points)
        .map(|i| scale * 10f64.powf(-2.0 * (1.0 - i as f64 / (points - 1) as f64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub architecture: Architecture,
    /// Eve's cap; `None` on no-eve rows.
    pub epsilon: Option<f64>,
    pub fim_bob: f64,
    pub fim_eve: Option<f64>,
    pub crb: f64,
    pub mse_mc: Option<f64>,
    pub iters: usize,
    /// Solver converged and, on eve rows, Eve's FIM is within the cap up to
    /// a relative `1e-3`.
    pub converged: bool,
    pub wall_ms: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.architecture,
            opt(self.epsilon),
            self.fim_bob,
            opt(self.fim_eve),
            self.crb,
            opt(self.mse_mc),
            self.iters,
            self.converged,
            opt(self.wall_ms)
        )
    }

    /// Stable file stem for the row's JSON report; `grid` locates the ε
    /// of eve rows.
    pub fn report_name(&self, grid: &[f64]) -> String {
        match self.epsilon {
            None => format!("{}_{}", self.scenario, self.architecture),
            Some(eps) => {
                let i = grid.iter().position(|&g| g == eps).unwrap_or(grid.len());
                format!("{}_{}_{i:03}", self.scenario, self.architecture)
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// One report per row, same order.
    pub reports: Vec<SolveReport>,
    /// Caps used for the eve rows.
    pub epsilon_grid: Vec<f64>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.converged)
    }

    pub fn rows_for(&self, scenario: Scenario, architecture: Architecture) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.scenario == scenario && r.architecture == architecture)
    }
}

struct Unconstrained {
    ris: RisMatrix,
    report: SolveReport,
}

fn unconstrained(forms: &QuadraticForms, spec: &ExperimentSpec, arch: Architecture) -> Result<Unconstrained> {
    let (ris, report) = match arch {
        Architecture::NonReciprocal => solve_nonreciprocal(forms)?,
        Architecture::Reciprocal => solve_reciprocal_ao(forms, &spec.ao)?,
        Architecture::Diagonal => solve_diagonal_unconstrained(&DiagForms::from_forms(forms)?, &spec.diagonal)?,
    };
    Ok(Unconstrained { ris, report })
}

fn constrained(
    forms: &QuadraticForms,
    spec: &ExperimentSpec,
    arch: Architecture,
    eps: f64,
    warm: &RisMatrix,
) -> Result<(RisMatrix, SolveReport)> {
    let pdd = PddSettings { epsilon_eve: eps, ..spec.pdd };
    match arch {
        Architecture::NonReciprocal => solve_pdd_from(forms, &pdd, false, warm.matrix()),
        Architecture::Reciprocal => solve_pdd_from(forms, &pdd, true, warm.matrix()),
        Architecture::Diagonal => solve_diagonal_constrained(&DiagForms::from_forms(forms)?, eps, &spec.diagonal),
    }
}

struct Cell {
    scenario: Scenario,
    architecture: Architecture,
    epsilon: Option<f64>,
    index: usize,
}

/// Seed of the Monte-Carlo stream of row `index`.
fn mc_seed(cfg: &SystemConfig, index: usize) -> u64 {
    cfg.seed.wrapping_mul(0x100_0000).wrapping_add(index as u64)
}

fn evaluate(
    ch: &ChannelSet,
    forms: &QuadraticForms,
    spec: &ExperimentSpec,
    cell: &Cell,
    solved: Result<(RisMatrix, SolveReport)>,
    wall_ms: f64,
) -> Result<(ResultRow, SolveReport)> {
    let (ris, mut report) = match solved {
        Ok(x) => x,
        Err(e) => {
            log::warn!("{} {} eps={:?} failed: {e}", cell.scenario, cell.architecture, cell.epsilon);
            let report = SolveReport { notes: vec![format!("solver error: {e}")], ..Default::default() };
            let row = ResultRow {
                scenario: cell.scenario,
                architecture: cell.architecture,
                epsilon: cell.epsilon,
                fim_bob: f64::NAN,
                fim_eve: None,
                crb: f64::NAN,
                mse_mc: None,
                iters: 0,
                converged: false,
                wall_ms: spec.record_timing.then_some(wall_ms),
            };
            return Ok((row, report));
        }
    };
    let fim_bob = trace_fim(forms, &ris, Target::Bob)?;
    let fim_eve = forms.e_e.as_ref().map(|_| trace_fim(forms, &ris, Target::Eve)).transpose()?;
    let crb = crb_trace(&fim_matrix(ch, &ris, Target::Bob)?)?;
    let mse_mc = if spec.mc_trials > 0 && !crb.singular {
        let theta = CVec::from_element(ch.k(), C64::new(1.0, 0.0));
        match simulate_mle_mse(ch, &ris, &theta, spec.mc_trials, mc_seed(&spec.cfg, cell.index)) {
            Ok(v) => Some(v),
            Err(Error::IllPosed(msg)) => {
                report.notes.push(format!("Monte-Carlo skipped: {msg}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let within_cap = match (cell.epsilon, fim_eve) {
        (Some(eps), Some(g)) => g <= eps * (1.0 + EVE_CAP_SLACK),
        _ => true,
    };
    if !within_cap {
        report.notes.push("Eve cap violated".into());
    }
    let row = ResultRow {
        scenario: cell.scenario,
        architecture: cell.architecture,
        epsilon: cell.epsilon,
        fim_bob,
        fim_eve,
        crb: crb.trace,
        mse_mc,
        iters: report.iterations,
        converged: report.converged && within_cap,
        wall_ms: spec.record_timing.then_some(wall_ms),
    };
    Ok((row, report))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64() * 1e3)
}

/// Runs the sweep. Rows are ordered by scenario (no-eve first), then
/// architecture as listed in [`Architecture::ALL`], then ascending ε.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let ch = match &spec.channels_path {
        Some(p) => crate::model::load_channels(p)?,
        None => generate_channels(&spec.cfg)?,
    };
    let mut forms = build_forms(&ch)?;
    if !spec.cfg.eve_present {
        forms.e_e = None;
    }
    let mut archs = spec.architectures.clone();
    archs.sort();
    archs.dedup();
    let mut scenarios = spec.scenarios.clone();
    scenarios.sort();
    scenarios.dedup();

    // Unconstrained designs double as warm starts; the non-reciprocal one
    // also fixes the default grid scale.
    let needed: Vec<Architecture> = Architecture::ALL
        .into_iter()
        .filter(|a| archs.contains(a) || (*a == Architecture::NonReciprocal && spec.epsilon_grid.is_none()))
        .collect();
    let free: Vec<(Architecture, Result<Unconstrained>, f64)> = needed
        .par_iter()
        .map(|&a| {
            let (res, ms) = timed(|| unconstrained(&forms, spec, a));
            (a, res, ms)
        })
        .collect();

    let grid = match &spec.epsilon_grid {
        Some(g) => g.clone(),
        None => {
            let nr = free
                .iter()
                .find(|(a, _, _)| *a == Architecture::NonReciprocal)
                .expect("non-reciprocal design requested for the grid");
            match &nr.1 {
                Ok(u) => default_grid(u.report.objective, spec.grid_points),
                Err(e) => return Err(Error::Numerical { context: "default epsilon grid", detail: e.to_string() }),
            }
        }
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut push = |(row, report): (ResultRow, SolveReport)| {
        rows.push(row);
        reports.push(report);
    };

    if scenarios.contains(&Scenario::NoEve) {
        for (a, res, ms) in &free {
            if !archs.contains(a) {
                continue;
            }
            let cell = Cell { scenario: Scenario::NoEve, architecture: *a, epsilon: None, index: *a as usize };
            let solved = match res {
                Ok(u) => Ok((u.ris.clone(), u.report.clone())),
                Err(e) => Err(Error::Numerical { context: "unconstrained design", detail: e.to_string() }),
            };
            push(evaluate(&ch, &forms, spec, &cell, solved, *ms)?);
        }
    }

    if scenarios.contains(&Scenario::Eve) {
        let mut cells = Vec::with_capacity(archs.len() * grid.len());
        for (ai, &a) in archs.iter().enumerate() {
            for (i, &eps) in grid.iter().enumerate() {
                cells.push(Cell {
                    scenario: Scenario::Eve,
                    architecture: a,
                    epsilon: Some(eps),
                    index: 16 + ai * grid.len() + i,
                });
            }
        }
        let done: Vec<Result<(ResultRow, SolveReport)>> = cells
            .par_iter()
            .map(|cell| {
                let warm = free.iter().find(|(a, _, _)| *a == cell.architecture).map(|(_, r, _)| r);
                let (solved, ms) = timed(|| match warm {
                    Some(Ok(u)) => constrained(&forms, spec, cell.architecture, cell.epsilon.unwrap(), &u.ris),
                    _ => Err(Error::Numerical {
                        context: "warm start",
                        detail: "unconstrained design unavailable".into(),
                    }),
                });
                evaluate(&ch, &forms, spec, cell, solved, ms)
            })
            .collect();
        for d in done {
            push(d?);
        }
    }

    Ok(ResultTable { rows, reports, epsilon_grid: grid })
}

/// Writes `results.csv`, `reports/*.json` and `plots/` under `dir`.
pub fn write_outputs(table: &ResultTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let reports_dir = dir.join("reports");
    fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    let csv = dir.join("results.csv");
    fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    for (row, report) in table.rows.iter().zip(&table.reports) {
        let name = row.report_name(&table.epsilon_grid);
        let path = reports_dir.join(format!("{name}.json"));
        let mut body = report.to_json()?;
        body.push('\n');
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    crate::plots::emit_plots(table, dir.join("plots"))
}

/// Plain-text summary for logs: one line per row.
pub fn summary(table: &ResultTable) -> String {
    let mut s = String::new();
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{:<7} {:<14} eps={:<12} bob={:.6e} eve={} crb={:.4e} conv={}",
            r.scenario.as_str(),
            r.architecture.as_str(),
            r.epsilon.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into()),
            r.fim_bob,
            r.fim_eve.map(|e| format!("{e:.6e}")).unwrap_or_else(|| "-".into()),
            r.crb,
            r.converged
        );
    }
    s
}

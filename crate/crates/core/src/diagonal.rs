//! Conventional (diagonal) RIS baseline.
//!
//! With `Ω = diag(ω)` the trace-FIM collapses to `ω^H (E ⊙ M^T) ω`. The
//! unit-modulus problem is attacked by coordinate ascent; the
//! Eve-constrained problem is relaxed to `|ω_i| ≤ 1` and solved through a
//! Lagrangian weight `ν` on Eve's form, bisected until the cap holds.
//! Both are local heuristics, so every solve runs several seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, hermitian_residual};
use crate::model::{QuadraticForms, RisMatrix};
use crate::report::SolveReport;
use crate::tolerances::EVE_CAP_SLACK;
use crate::{CMat, CVec, C64};

const FORM_HERMITIAN_TOL: f64 = 1e-10;

/// Tenfold `β` increases in the penalty stage.
const PENALTY_STAGES: usize = 6;

/// Keeps modulus draws independent of the phase draws of the same restart.
const MODULUS_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Hadamard-reduced forms `C = E ⊙ M^T` for Bob and, optionally, Eve.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagForms {
    pub c_b: CMat,
    pub c_e: Option<CMat>,
}

fn hadamard_form(e: &CMat, m: &CMat) -> Result<CMat> {
    let c = e.component_mul(&m.transpose());
    let scale = c.norm().max(1.0);
    let res = hermitian_residual(&c);
    if res > FORM_HERMITIAN_TOL * scale {
        return Err(Error::Contract {
            what: "Hadamard form Hermitian",
            residual: res,
            tolerance: FORM_HERMITIAN_TOL * scale,
        });
    }
    Ok((&c + c.adjoint()) * C64::from(0.5))
}

impl DiagForms {
    pub fn from_forms(forms: &QuadraticForms) -> Result<Self> {
        Ok(Self {
            c_b: hadamard_form(&forms.e_b, &forms.m)?,
            c_e: forms.e_e.as_ref().map(|e| hadamard_form(e, &forms.m)).transpose()?,
        })
    }

    pub fn r(&self) -> usize {
        self.c_b.nrows()
    }
}

/// `ω^H C ω` (real for Hermitian `C`).
pub fn diag_objective(c: &CMat, omega: &CVec) -> f64 {
    omega.dotc(&(c * omega)).re
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagSettings {
    pub restarts: usize,
    pub seed: u64,
    /// Coordinate sweeps per ascent run.
    pub max_passes: usize,
    /// A sweep improving the objective by less than this times
    /// `r·‖D‖_F` ends the run.
    pub tol: f64,
    /// Bisection steps on the Eve weight `ν`.
    pub max_bisections: usize,
}

impl Default for DiagSettings {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 0,
            max_passes: 500,
            tol: 1e-10,
            max_bisections: 60,
        }
    }
}

impl DiagSettings {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_passes == 0 || !(self.tol > 0.0) {
            return Err(Error::Config(format!("invalid diagonal settings {self:?}")));
        }
        Ok(())
    }
}

struct Ascent {
    omega: CVec,
    trace: Vec<f64>,
    passes: usize,
    converged: bool,
}

/// Exact coordinate maximization of `ω^H D ω` over `|ω_i| ≤ 1`, or over
/// `|ω_i| = 1` when `unit` is set. Each update cannot lower the objective.
fn coordinate_ascent(d: &CMat, mut omega: CVec, unit: bool, settings: &DiagSettings) -> Ascent {
    let r = d.nrows();
    // Bounds |ω^H D ω| on the polydisc; gains are measured against it
    // since Lagrangian costs can sit near zero.
    let scale = d.norm() * r as f64;
    let mut cost = diag_objective(d, &omega);
    let mut trace = vec![cost];
    for pass in 1..=settings.max_passes {
        for i in 0..r {
            let mut c = C64::new(0.0, 0.0);
            for j in 0..r {
                if j != i {
                    c += d[(i, j)] * omega[j];
                }
            }
            let a = d[(i, i)].re;
            let cn = c.norm();
            if a < 0.0 && !unit {
                // Concave in ω_i: interior stationary point unless it
                // leaves the disc.
                let w = -c / a;
                omega[i] = if w.norm() <= 1.0 { w } else { c / cn };
            } else if cn > 0.0 {
                omega[i] = c / cn;
            }
        }
        let next = diag_objective(d, &omega);
        trace.push(next);
        let gain = next - cost;
        cost = next;
        if gain <= settings.tol * scale {
            return Ascent { omega, trace, passes: pass, converged: true };
        }
    }
    Ascent { omega, trace, passes: settings.max_passes, converged: false }
}

fn principal_phases(c: &CMat) -> Result<CVec> {
    let eig = hermitian_eig(c)?;
    Ok(eig.vectors.column(0).map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) }))
}

fn random_phases(r: usize, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CVec::from_fn(r, |_, _| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
}

/// Starting point of restart `index`: principal-eigenvector phases for the
/// first, seeded uniform phases for the rest.
fn start(c: &CMat, settings: &DiagSettings, index: usize) -> Result<CVec> {
    if index == 0 {
        principal_phases(c)
    } else {
        Ok(random_phases(c.nrows(), settings.seed.wrapping_add(index as u64)))
    }
}

/// As [`start`], but odd restarts also draw moduli uniformly from `[0, 1]`
/// so the interior of the polydisc is sampled.
fn relaxed_start(c: &CMat, settings: &DiagSettings, index: usize) -> Result<CVec> {
    let w = start(c, settings, index)?;
    if index % 2 == 0 {
        return Ok(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(index as u64) ^ MODULUS_STREAM);
    Ok(w.map(|z| z * rng.random_range(0.0..1.0)))
}

/// Unit-modulus diagonal maximizing Bob's trace-FIM. Returns the best of
/// `settings.restarts` coordinate-ascent runs.
pub fn solve_diagonal_unconstrained(dforms: &DiagForms, settings: &DiagSettings) -> Result<(RisMatrix, SolveReport)> {
    settings.validate()?;
    let runs = (0..settings.restarts)
        .into_par_iter()
        .map(|i| Ok(coordinate_ascent(&dforms.c_b, start(&dforms.c_b, settings, i)?, true, settings)))
        .collect::<Result<Vec<_>>>()?;
    let iterations = runs.iter().map(|a| a.passes).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.trace.last() > a.trace.last() { b } else { a })
        .expect("at least one restart");
    let objective = diag_objective(&dforms.c_b, &best.omega);
    let mut report = SolveReport {
        objective,
        bound: hermitian_eig(&dforms.c_b)?.values[0] * dforms.r() as f64,
        iterations,
        cost_trace: best.trace,
        converged: best.converged,
        ..Default::default()
    };
    if let Some(c_e) = &dforms.c_e {
        report.set("eve_fim", diag_objective(c_e, &best.omega));
    }
    if !best.converged {
        report.notes.push("coordinate ascent hit the pass limit".into());
    }
    Ok((RisMatrix::diagonal(&best.omega)?, report))
}

/// Candidate after shrinking `ω` onto Eve's cap: `f·min(1, ε/g)`.
fn capped_value(f: f64, g: f64, eps: f64) -> f64 {
    if g > eps {
        f * eps / g
    } else {
        f
    }
}

struct PathResult {
    omega: CVec,
    value: f64,
    passes: usize,
    trace: Vec<f64>,
    stalled: bool,
}

struct Problem<'a> {
    c_b: &'a CMat,
    c_e: &'a CMat,
    eps: f64,
    settings: &'a DiagSettings,
}

impl Problem<'_> {
    fn weighted(&self, nu: f64) -> CMat {
        self.c_b - self.c_e * C64::from(nu)
    }

    /// Ascends `C_b − ν C_e` from `omega`, keeps the result if it beats
    /// `best` once rescaled onto the cap, and returns it with Eve's value.
    fn ascend(&self, nu: f64, omega: CVec, best: &mut PathResult) -> (CVec, f64) {
        let asc = coordinate_ascent(&self.weighted(nu), omega, false, self.settings);
        let f = diag_objective(self.c_b, &asc.omega);
        let g = diag_objective(self.c_e, &asc.omega);
        let v = capped_value(f, g, self.eps);
        best.passes += asc.passes;
        best.trace.push(v);
        if v > best.value {
            best.value = v;
            best.stalled = !asc.converged;
            best.omega = if g > self.eps { &asc.omega * C64::from((self.eps / g).sqrt()) } else { asc.omega.clone() };
        }
        (asc.omega, g)
    }

    /// On the cap the value is `ε·f/g`; Dinkelbach steps raise that ratio
    /// monotonically from `omega`.
    fn polish(&self, mut omega: CVec, best: &mut PathResult) {
        for _ in 0..self.settings.max_bisections {
            let g = diag_objective(self.c_e, &omega);
            if g <= 0.0 {
                return;
            }
            let t = diag_objective(self.c_b, &omega) / g;
            let (next, g) = self.ascend(t, omega, best);
            if g <= 0.0 || diag_objective(self.c_b, &next) / g <= t * (1.0 + self.settings.tol) {
                return;
            }
            omega = next;
        }
    }

    /// Backtracking projected gradient on `f − (β/2)·max(0, g − ε)²` over
    /// the polydisc for a growing `β`. Reaches points where the cap and only
    /// part of the box are active, which neither `ν`-ascent nor ratio
    /// steps settle on.
    fn penalty_polish(&self, mut omega: CVec, best: &mut PathResult) {
        let f0 = diag_objective(self.c_b, &omega).max(f64::MIN_POSITIVE);
        let lipschitz = self.c_b.norm().max(f64::MIN_POSITIVE);
        let merit = |w: &CVec, beta: f64| {
            let over = (diag_objective(self.c_e, w) - self.eps).max(0.0);
            diag_objective(self.c_b, w) - 0.5 * beta * over * over
        };
        let mut step = 1.0 / lipschitz;
        let mut beta = f0 / (self.eps * self.eps);
        for _ in 0..PENALTY_STAGES {
            for _ in 0..self.settings.max_passes {
                best.passes += 1;
                let over = (diag_objective(self.c_e, &omega) - self.eps).max(0.0);
                let grad = self.c_b * &omega - self.c_e * &omega * C64::from(beta * over);
                let here = merit(&omega, beta);
                let mut moved = false;
                while step * lipschitz > 1e-12 {
                    let cand = (&omega + &grad * C64::from(step)).map(|z| if z.norm() > 1.0 { z / z.norm() } else { z });
                    let there = merit(&cand, beta);
                    if there > here {
                        omega = cand;
                        step *= 1.5;
                        moved = there - here > self.settings.tol * f0;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    step = 1.0 / lipschitz;
                    break;
                }
            }
            beta *= 10.0;
        }
        let f = diag_objective(self.c_b, &omega);
        let g = diag_objective(self.c_e, &omega);
        let v = capped_value(f, g, self.eps);
        best.trace.push(v);
        if v > best.value {
            best.value = v;
            best.stalled = false;
            best.omega = if g > self.eps { &omega * C64::from((self.eps / g).sqrt()) } else { omega };
        }
    }

    /// One restart: ratio polishing from `omega0`, then bisection on `ν`
    /// with warm-started ascents, then ratio and penalty polishing of the
    /// best point so far.
    fn path(&self, omega0: CVec) -> PathResult {
        let mut best = PathResult { omega: CVec::zeros(self.c_b.nrows()), value: 0.0, passes: 0, trace: Vec::new(), stalled: false };
        self.polish(omega0.clone(), &mut best);
        let (mut omega, g0) = self.ascend(0.0, omega0, &mut best);
        if g0 <= self.eps {
            return best;
        }
        let mut lo = 0.0;
        let mut hi = diag_objective(self.c_b, &omega) / g0;
        for _ in 0..self.settings.max_bisections {
            let (next, g) = self.ascend(hi, omega, &mut best);
            omega = next;
            if g <= self.eps {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..self.settings.max_bisections {
            if hi - lo <= 1e-9 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (next, g) = self.ascend(mid, omega, &mut best);
            omega = next;
            if g > self.eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.polish(best.omega.clone(), &mut best);
        self.penalty_polish(best.omega.clone(), &mut best);
        best
    }
}

/// Eve-constrained diagonal design over the relaxed set `|ω_i| ≤ 1`.
///
/// Entries above unit modulus are clipped afterwards. The report keeps the
/// pre-clip values as `bob_pre_clip` and `eve_pre_clip`, and the post-clip
/// ones as `objective` and `eve_fim`. `converged` is false if the
/// post-clip point breaks the cap or an ascent run stalled.
pub fn solve_diagonal_constrained(
    dforms: &DiagForms,
    epsilon_eve: f64,
    settings: &DiagSettings,
) -> Result<(RisMatrix, SolveReport)> {
    settings.validate()?;
    if !(epsilon_eve > 0.0) || !epsilon_eve.is_finite() {
        return Err(Error::Domain(format!("epsilon_eve must be positive, got {epsilon_eve}")));
    }
    let c_e = dforms.c_e.as_ref().ok_or(Error::MissingEve)?;
    let c_b = &dforms.c_b;
    let problem = Problem { c_b, c_e, eps: epsilon_eve, settings };
    let runs = (0..settings.restarts)
        .into_par_iter()
        .map(|i| Ok(problem.path(relaxed_start(c_b, settings, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let iterations = runs.iter().map(|p| p.passes).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one restart");
    let stalled = best.stalled;

    let bob_pre = diag_objective(c_b, &best.omega);
    let eve_pre = diag_objective(c_e, &best.omega);
    let clipped = best.omega.map(|z| if z.norm() > 1.0 { z / z.norm() } else { z });
    let objective = diag_objective(c_b, &clipped);
    let eve = diag_objective(c_e, &clipped);
    let feasible = eve <= epsilon_eve * (1.0 + EVE_CAP_SLACK);

    let mut report = SolveReport {
        objective,
        bound: hermitian_eig(c_b)?.values[0] * dforms.r() as f64,
        iterations,
        cost_trace: best.trace,
        converged: feasible && !stalled,
        ..Default::default()
    };
    report.set("bob_pre_clip", bob_pre);
    report.set("eve_pre_clip", eve_pre);
    report.set("eve_fim", eve);
    report.set("eve_cap", epsilon_eve);
    report.set("eve_feasible", if feasible { 1.0 } else { 0.0 });
    report.set("max_modulus", clipped.iter().map(|z| z.norm()).fold(0.0, f64::max));
    if !feasible {
        report.notes.push("clipped point violates the Eve cap".into());
    }
    if stalled {
        report.notes.push("the ascent behind the returned point hit the pass limit".into());
    }
    Ok((RisMatrix::diagonal(&clipped)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_gaussian;
    use crate::model::{build_forms, generate_channels, trace_fim, SystemConfig, Target};

    fn psd(rng: &mut ChaCha8Rng, r: usize) -> CMat {
        let g = random_gaussian(rng, r, r + 1);
        &g * g.adjoint()
    }

    fn random_forms(seed: u64, r: usize) -> DiagForms {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (eb, ee, m) = (psd(&mut rng, r), psd(&mut rng, r), psd(&mut rng, r));
        DiagForms::from_forms(&QuadraticForms::from_parts(eb, Some(ee), m).unwrap()).unwrap()
    }

    #[test]
    fn hadamard_reduction_matches_trace_fim() {
        let cfg = SystemConfig::reference(3, 8, 11);
        let forms = build_forms(&generate_channels(&cfg).unwrap()).unwrap();
        let d = DiagForms::from_forms(&forms).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = CVec::from_fn(8, |_, _| C64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..6.3)));
            let ris = RisMatrix::diagonal(&w).unwrap();
            for (c, t) in [(&d.c_b, Target::Bob), (d.c_e.as_ref().unwrap(), Target::Eve)] {
                let want = trace_fim(&forms, &ris, t).unwrap();
                assert!((diag_objective(c, &w) - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn diagonal_form_is_phase_invariant() {
        let c = CMat::from_diagonal(&CVec::from_vec(vec![C64::from(1.0), C64::from(2.5), C64::from(0.5)]));
        let d = DiagForms { c_b: c, c_e: None };
        let (_, rep) = solve_diagonal_unconstrained(&d, &DiagSettings::default()).unwrap();
        assert!((rep.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_form_aligns_phases() {
        let c = CMat::from_element(2, 2, C64::from(1.0));
        let d = DiagForms { c_b: c, c_e: None };
        let (ris, rep) = solve_diagonal_unconstrained(&d, &DiagSettings::default()).unwrap();
        assert!((rep.objective - 4.0).abs() < 1e-12);
        let w = ris.matrix();
        assert!((w[(0, 0)] - w[(1, 1)]).norm() < 1e-9);
        assert!((w[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coordinate_ascent_trace_is_monotone() {
        let d = random_forms(5, 10);
        for i in 0..5 {
            let s = DiagSettings::default();
            let asc = coordinate_ascent(&d.c_b, start(&d.c_b, &s, i).unwrap(), true, &s);
            assert!(asc.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
            assert!(asc.omega.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn beats_phase_grid_search_at_r6() {
        let d = random_forms(21, 6);
        let (_, rep) = solve_diagonal_unconstrained(&d, &DiagSettings::default()).unwrap();
        // ω_0 = 1 fixes the global phase; 16 levels on the other five.
        let levels: Vec<C64> = (0..16).map(|l| C64::from_polar(1.0, l as f64 * std::f64::consts::TAU / 16.0)).collect();
        let mut best = 0.0f64;
        let mut w = CVec::from_element(6, C64::from(1.0));
        for code in 0..16usize.pow(5) {
            let mut c = code;
            for i in 1..6 {
                w[i] = levels[c % 16];
                c /= 16;
            }
            best = best.max(diag_objective(&d.c_b, &w));
        }
        assert!(rep.objective >= 0.999 * best, "{} vs grid {best}", rep.objective);
    }

    #[test]
    fn slack_cap_matches_unconstrained() {
        let d = random_forms(8, 6);
        let s = DiagSettings::default();
        let (_, free) = solve_diagonal_unconstrained(&d, &s).unwrap();
        let eps = free.constraint("eve_fim").unwrap();
        let (_, cons) = solve_diagonal_constrained(&d, eps, &s).unwrap();
        assert!(cons.objective >= 0.99 * free.objective);
        assert!(cons.converged);
    }

    #[test]
    fn coincident_forms_cap_bob() {
        let d0 = random_forms(9, 5);
        let d = DiagForms { c_e: Some(d0.c_b.clone()), ..d0 };
        let s = DiagSettings::default();
        let (_, free) = solve_diagonal_unconstrained(&d, &s).unwrap();
        let eps = 0.5 * free.objective;
        let (_, cons) = solve_diagonal_constrained(&d, eps, &s).unwrap();
        assert!(cons.objective <= eps * (1.0 + 1e-2));
        assert!(cons.objective >= 0.99 * eps);
    }

    #[test]
    fn constrained_rejects_bad_input() {
        let d = random_forms(1, 3);
        let s = DiagSettings::default();
        assert!(matches!(solve_diagonal_constrained(&d, 0.0, &s), Err(Error::Domain(_))));
        let no_eve = DiagForms { c_e: None, ..d };
        assert!(matches!(solve_diagonal_constrained(&no_eve, 1.0, &s), Err(Error::MissingEve)));
    }
}

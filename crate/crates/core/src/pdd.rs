//! Eavesdropper-constrained design by penalty dual decomposition (PDD).
//!
//! The problem `max tr(Ω^H E_b Ω M)` over unitary (optionally symmetric)
//! `Ω` with `tr(Ω^H E_e Ω M) ≤ ε` is split with a copy `Ψ = Ω` that carries
//! the Eve constraint. The augmented Lagrangian
//!
//! ```text
//! L(Ω, Ψ, Λ) = −Re tr(Ω^H E_b Ψ M) + ‖Ω − Ψ‖²_F / (2ρ) + Re tr(Λ^H (Ω − Ψ))
//! ```
//!
//! is minimized block-wise: `Ω` by a unitary (or symmetric unitary)
//! projection, `Ψ` by a quadratically constrained least-squares problem
//! solved in the eigenbasis of `A = M^T ⊗ E_e`. The outer layer either
//! takes a dual step on `Λ` or shrinks `ρ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eig, kron, nearest_symmetric_unitary, symmetry_residual, unitarity_residual,
    unitary_procrustes, unvec, vec, HermEig,
};
use crate::model::{real_quad_trace, Architecture, QuadraticForms, RisMatrix, Target};
use crate::report::SolveReport;
use crate::spectral::{solve_nonreciprocal, solve_reciprocal_ao, von_neumann_bound, von_neumann_floor, AoSettings};
use crate::tolerances::EVE_CAP_SLACK;
use crate::{CMat, CVec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PddSettings {
    /// Cap on Eve's trace-FIM.
    pub epsilon_eve: f64,
    pub rho0: f64,
    pub rho_shrink: f64,
    /// Initial max-entry violation below which the outer layer takes a dual
    /// step instead of shrinking `ρ`.
    pub viol_tol: f64,
    /// Factor applied to `viol_tol` after every outer round.
    pub viol_tol_shrink: f64,
    pub inner_tol: f64,
    /// Required `‖Ω − Ψ‖_F` at termination.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative tolerance of the KKT multiplier search.
    pub bisect_tol: f64,
}

/// Unit cap; callers are expected to set `epsilon_eve`.
impl Default for PddSettings {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl PddSettings {
    pub fn new(epsilon_eve: f64) -> Self {
        Self {
            epsilon_eve,
            rho0: 1.0,
            rho_shrink: 0.7,
            viol_tol: 1e-2,
            viol_tol_shrink: 0.5,
            inner_tol: 1e-7,
            outer_tol: 1e-5,
            max_outer: 50,
            max_inner: 200,
            bisect_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_eve > 0.0) {
            return Err(Error::Domain(format!(
                "Eve's cap must be positive, got {}",
                self.epsilon_eve
            )));
        }
        let positive = [
            self.rho0,
            self.rho_shrink,
            self.viol_tol,
            self.viol_tol_shrink,
            self.inner_tol,
            self.outer_tol,
            self.bisect_tol,
        ]
        .iter()
        .all(|v| *v > 0.0);
        if !positive || self.rho_shrink >= 1.0 || self.viol_tol_shrink > 1.0 || self.max_outer == 0 || self.max_inner == 0
        {
            return Err(Error::Config(format!("invalid PDD settings {self:?}")));
        }
        Ok(())
    }
}

/// Iterate of the PDD method.
#[derive(Debug, Clone, PartialEq)]
pub struct PddState {
    pub omega: CMat,
    pub psi: CMat,
    pub lambda: CMat,
    pub rho: f64,
    /// Current dual-vs-penalty branching threshold.
    pub viol_tol: f64,
}

impl PddState {
    /// `Ω = Ψ = init`, `Λ = 0`.
    pub fn new(init: CMat, settings: &PddSettings) -> Self {
        let r = init.nrows();
        Self {
            psi: init.clone(),
            omega: init,
            lambda: CMat::zeros(r, r),
            rho: settings.rho0,
            viol_tol: settings.viol_tol,
        }
    }
}

fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Direct evaluation of the augmented Lagrangian at `state`.
pub fn augmented_lagrangian(state: &PddState, forms: &QuadraticForms) -> f64 {
    let coupling = crate::linalg::trace_of_product(
        &(state.omega.adjoint() * &forms.e_b * &state.psi),
        &forms.m,
    );
    let diff = &state.omega - &state.psi;
    -coupling.re + diff.norm_squared() / (2.0 * state.rho) + re_inner(&state.lambda, &diff)
}

/// Minimizes the augmented Lagrangian over `Ω`: the projection of
/// `Ψ + ρ E_b Ψ M − ρ Λ` onto the unitary group, or onto the symmetric
/// unitary matrices when `reciprocal`.
pub fn update_omega(state: &PddState, forms: &QuadraticForms, reciprocal: bool) -> Result<PddState> {
    let rho = C64::from(state.rho);
    let target = &state.psi + (&forms.e_b * &state.psi * &forms.m - &state.lambda) * rho;
    let omega = if reciprocal {
        nearest_symmetric_unitary(&target)?
    } else {
        unitary_procrustes(&target)?.matrix
    };
    Ok(PddState {
        omega,
        ..state.clone()
    })
}

/// Solution of `min ‖x − b‖² s.t. x^H A x ≤ ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    pub x: CVec,
    /// KKT multiplier of the constraint.
    pub mu: f64,
    /// `x^H A x` at the returned point.
    pub constraint: f64,
}

/// Finds the KKT multiplier for weights `(λ_i, |u_i^H b|²)`.
///
/// `h(μ) = Σ λ_i |c_i|² / (1 + μ λ_i)²` is strictly decreasing wherever it
/// is positive. If `h(0) ≤ ε` the multiplier is zero; otherwise `μ` is
/// bracketed by doubling from 1 and bisected, keeping the feasible end,
/// until both `ε − h(μ)` and `μ (ε − h(μ))` are within `tol · ε`.
fn kkt_multiplier(weights: &[(f64, f64)], epsilon: f64, tol: f64) -> (f64, f64) {
    let h = |mu: f64| -> f64 {
        weights
            .iter()
            .map(|&(l, c2)| {
                let d = 1.0 + mu * l;
                l * c2 / (d * d)
            })
            .sum()
    };
    let h0 = h(0.0);
    if h0 <= epsilon {
        return (0.0, h0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut h_hi = h(hi);
    while h_hi > epsilon {
        lo = hi;
        hi *= 2.0;
        h_hi = h(hi);
    }
    loop {
        let slack = epsilon - h_hi;
        if slack <= tol * epsilon && hi * slack <= tol * epsilon {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let h_mid = h(mid);
        if h_mid > epsilon {
            lo = mid;
        } else {
            hi = mid;
            h_hi = h_mid;
        }
    }
    (hi, h_hi)
}

/// `min ‖x − b‖²` subject to `x^H A x ≤ ε`, with `A = Σ λ_i u_i u_i^H`
/// given by its eigendecomposition.
///
/// The minimizer is `x = Σ_i |u_i^H b| / (1 + μ λ_i) · e^{j∠(u_i^H b)} u_i`,
/// with `μ = 0` when `b` is already feasible.
pub fn qcqp_spectral(b: &CVec, eig_a: &HermEig, epsilon: f64, bisect_tol: f64) -> Result<QcqpSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("QCQP cap must be positive, got {epsilon}")));
    }
    let n = eig_a.dim();
    if b.len() != n {
        return Err(Error::dim("qcqp_spectral", n, b.len()));
    }
    let coef = eig_a.vectors.adjoint() * b;
    let lambda: Vec<f64> = eig_a.values.iter().map(|l| l.max(0.0)).collect();
    let weights: Vec<(f64, f64)> = lambda.iter().zip(coef.iter()).map(|(&l, c)| (l, c.norm_sqr())).collect();
    let (mu, constraint) = kkt_multiplier(&weights, epsilon, bisect_tol);
    if mu == 0.0 {
        return Ok(QcqpSolution {
            x: b.clone(),
            mu,
            constraint,
        });
    }
    let scaled = CVec::from_fn(n, |i, _| coef[i] / (1.0 + mu * lambda[i]));
    Ok(QcqpSolution {
        x: &eig_a.vectors * scaled,
        mu,
        constraint,
    })
}

/// Ψ-update in the eigenbasis of `A = M^T ⊗ E_e` without forming `A`.
///
/// With `E_e = V_E D_E V_E^H` and `M = V_M D_M V_M^H`, the eigenpairs of
/// `A` are `δ_{M,i} δ_{E,j}` with vectors `v_{M,i}^* ⊗ v_{E,j}`, and the
/// coefficients of `vec(B)` in that basis are the entries of
/// `V_E^H B V_M`.
#[derive(Debug, Clone)]
pub struct PsiSolver {
    ve: CMat,
    de: Vec<f64>,
    vm: CMat,
    dm: Vec<f64>,
}

/// Result of one Ψ-update.
#[derive(Debug, Clone)]
pub struct PsiUpdate {
    pub psi: CMat,
    pub mu: f64,
    pub constraint: f64,
}

impl PsiSolver {
    pub fn new(forms: &QuadraticForms) -> Result<Self> {
        let ee = hermitian_eig(forms.e(Target::Eve)?)?;
        let em = hermitian_eig(&forms.m)?;
        Ok(Self {
            ve: ee.vectors,
            de: ee.values.iter().map(|v| v.max(0.0)).collect(),
            vm: em.vectors,
            dm: em.values.iter().map(|v| v.max(0.0)).collect(),
        })
    }

    /// Minimizer of `‖Ψ − B‖²_F` over `tr(Ψ^H E_e Ψ M) ≤ ε`.
    pub fn project(&self, target: &CMat, epsilon: f64, bisect_tol: f64) -> Result<PsiUpdate> {
        if !(epsilon > 0.0) {
            return Err(Error::Domain(format!("QCQP cap must be positive, got {epsilon}")));
        }
        let r = self.de.len();
        let coef = self.ve.adjoint() * target * &self.vm;
        let mut weights = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                weights.push((self.de[j] * self.dm[i], coef[(j, i)].norm_sqr()));
            }
        }
        let (mu, constraint) = kkt_multiplier(&weights, epsilon, bisect_tol);
        if mu == 0.0 {
            return Ok(PsiUpdate {
                psi: target.clone(),
                mu,
                constraint,
            });
        }
        let scaled = CMat::from_fn(r, r, |j, i| coef[(j, i)] / (1.0 + mu * self.de[j] * self.dm[i]));
        Ok(PsiUpdate {
            psi: &self.ve * scaled * self.vm.adjoint(),
            mu,
            constraint,
        })
    }

    pub fn update(&self, state: &PddState, forms: &QuadraticForms, settings: &PddSettings) -> Result<PsiUpdate> {
        self.project(&psi_target(state, forms), settings.epsilon_eve, settings.bisect_tol)
    }
}

/// `Ω + ρ E_b^H Ω M^H + ρ Λ`.
pub fn psi_target(state: &PddState, forms: &QuadraticForms) -> CMat {
    let rho = C64::from(state.rho);
    &state.omega + (forms.e_b.adjoint() * &state.omega * forms.m.adjoint() + &state.lambda) * rho
}

/// Minimizes the augmented Lagrangian over `Ψ` subject to Eve's cap.
pub fn update_psi(state: &PddState, forms: &QuadraticForms, settings: &PddSettings) -> Result<PddState> {
    let up = PsiSolver::new(forms)?.update(state, forms, settings)?;
    Ok(PddState {
        psi: up.psi,
        ..state.clone()
    })
}

/// Same as [`update_psi`] but through the explicit `r² x r²` matrix
/// `M^T ⊗ E_e`. Only practical for small `r`; kept as a cross-check.
pub fn update_psi_explicit(state: &PddState, forms: &QuadraticForms, settings: &PddSettings) -> Result<PddState> {
    let r = forms.r();
    let a = kron(&forms.m.transpose(), forms.e(Target::Eve)?);
    let eig = hermitian_eig(&a)?;
    let b = vec(&psi_target(state, forms));
    let sol = qcqp_spectral(&b, &eig, settings.epsilon_eve, settings.bisect_tol)?;
    Ok(PddState {
        psi: unvec(&sol.x, r, r)?,
        ..state.clone()
    })
}

/// Outer PDD step: dual ascent on `Λ` when the max-entry violation is
/// within the current threshold, otherwise `ρ ← rho_shrink · ρ`. The
/// threshold shrinks geometrically either way.
pub fn outer_update(state: &PddState, settings: &PddSettings) -> PddState {
    let diff = &state.omega - &state.psi;
    let viol = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut next = state.clone();
    if viol <= state.viol_tol {
        next.lambda += diff * C64::from(1.0 / state.rho);
    } else {
        next.rho *= settings.rho_shrink;
    }
    next.viol_tol *= settings.viol_tol_shrink;
    next
}

fn largest_eigenvalue(a: &CMat) -> Result<f64> {
    let v = hermitian_eig(a)?.values[0];
    Ok(if v > 0.0 { v } else { 1.0 })
}

/// Solves the Eve-constrained design, warm-started from the matching
/// unconstrained optimum.
pub fn solve_pdd(forms: &QuadraticForms, settings: &PddSettings, reciprocal: bool) -> Result<(RisMatrix, SolveReport)> {
    let init = if reciprocal {
        solve_reciprocal_ao(forms, &AoSettings::default())?.0
    } else {
        solve_nonreciprocal(forms)?.0
    };
    solve_pdd_from(forms, settings, reciprocal, init.matrix())
}

/// [`solve_pdd`] from a caller-supplied starting response.
///
/// Internally `E_b`, `E_e` and `M` are divided by their largest
/// eigenvalues (and `ε` accordingly) so that the default penalty and
/// violation thresholds are meaningful regardless of channel scale; the
/// maximizer is unchanged by this scaling.
///
/// Terminates once `‖Ω − Ψ‖_F ≤ outer_tol` and `Ω` meets the cap within
/// a relative slack of `1e-3`. If `max_outer` runs out first, the report
/// has `converged = false` and the best cap-satisfying unitary iterate seen
/// (or the last one, if none) is returned.
pub fn solve_pdd_from(
    forms: &QuadraticForms,
    settings: &PddSettings,
    reciprocal: bool,
    init: &CMat,
) -> Result<(RisMatrix, SolveReport)> {
    settings.validate()?;
    let r = forms.r();
    if init.shape() != (r, r) {
        return Err(Error::dim("PDD initial point", format!("{r}x{r}"), format!("{:?}", init.shape())));
    }
    let e_e = forms.e(Target::Eve)?;
    let (sb, se, sm) = (
        largest_eigenvalue(&forms.e_b)?,
        largest_eigenvalue(e_e)?,
        largest_eigenvalue(&forms.m)?,
    );
    let scaled = QuadraticForms::from_parts(
        &forms.e_b / C64::from(sb),
        Some(e_e / C64::from(se)),
        &forms.m / C64::from(sm),
    )?;
    let scaled_settings = PddSettings {
        epsilon_eve: settings.epsilon_eve / (se * sm),
        ..*settings
    };
    let psi_solver = PsiSolver::new(&scaled)?;
    let cap = settings.epsilon_eve * (1.0 + EVE_CAP_SLACK);
    let sqrt_r = (r as f64).sqrt();

    let mut state = PddState::new(init.clone(), &scaled_settings);
    let mut report = SolveReport {
        bound: von_neumann_bound(forms, Target::Bob)?,
        ..Default::default()
    };
    let floor = von_neumann_floor(forms, Target::Eve)?;
    report.set("eve_floor", floor);
    if settings.epsilon_eve < floor {
        report.notes.push(format!(
            "cap {:.6e} is below the smallest Eve trace-FIM of any unitary response ({floor:.6e}); infeasible",
            settings.epsilon_eve
        ));
    }
    let mut best: Option<(f64, CMat)> = None;
    let mut inner_total = 0usize;
    let mut last_mu = 0.0;
    let mut converged = false;
    let mut rounds = 0;

    for _ in 0..settings.max_outer {
        rounds += 1;
        for _ in 0..settings.max_inner {
            inner_total += 1;
            let next = update_omega(&state, &scaled, reciprocal)?;
            let up = psi_solver.update(&next, &scaled, &scaled_settings)?;
            last_mu = up.mu;
            let d_omega = (&next.omega - &state.omega).norm() / sqrt_r;
            let d_psi = (&up.psi - &state.psi).norm() / up.psi.norm().max(1.0);
            state = PddState { psi: up.psi, ..next };
            if d_omega.max(d_psi) <= settings.inner_tol {
                break;
            }
        }
        let gap = (&state.omega - &state.psi).norm();
        let bob = real_quad_trace(&forms.e_b, &state.omega, &forms.m)?;
        let eve = real_quad_trace(e_e, &state.omega, &forms.m)?;
        report.violation_trace.push(gap);
        report.eve_trace.push(eve);
        report.cost_trace.push(bob);
        if eve <= cap && best.as_ref().is_none_or(|(b, _)| bob > *b) {
            best = Some((bob, state.omega.clone()));
        }
        if gap <= settings.outer_tol && eve <= cap {
            converged = true;
            break;
        }
        state = outer_update(&state, &scaled_settings);
    }

    let mut omega = if converged {
        state.omega.clone()
    } else {
        report.notes.push(format!(
            "PDD stopped after {rounds} outer rounds with ‖Ω−Ψ‖_F = {:.3e}; infeasibility suspected",
            report.violation_trace.last().copied().unwrap_or(f64::NAN)
        ));
        match best {
            Some((_, o)) => o,
            None => state.omega.clone(),
        }
    };
    if reciprocal {
        omega = (&omega + omega.transpose()) * C64::from(0.5);
    }
    let arch = if reciprocal {
        Architecture::Reciprocal
    } else {
        Architecture::NonReciprocal
    };
    report.objective = real_quad_trace(&forms.e_b, &omega, &forms.m)?;
    let eve = real_quad_trace(e_e, &omega, &forms.m)?;
    report.iterations = rounds;
    report.converged = converged;
    report.set("eve_fim", eve);
    report.set("eve_cap", settings.epsilon_eve);
    report.set("eve_feasible", f64::from(u8::from(eve <= cap)));
    report.set("omega_psi_gap", (&state.omega - &state.psi).norm());
    report.set("unitarity", unitarity_residual(&omega));
    report.set("inner_iterations", inner_total as f64);
    report.set("final_rho", state.rho);
    report.set("kkt_mu", last_mu);
    if reciprocal {
        report.set("symmetry", symmetry_residual(&omega));
    }
    Ok((RisMatrix::new(omega, arch)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_gaussian, random_unitary};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn identity_eig(values: &[f64]) -> HermEig {
        HermEig {
            values: DVector::from_vec(values.to_vec()),
            vectors: CMat::identity(values.len(), values.len()),
        }
    }

    fn random_forms(rng: &mut ChaCha8Rng, r: usize, k: usize) -> QuadraticForms {
        let hb = random_gaussian(rng, r, r);
        let he = random_gaussian(rng, r, r);
        let h = random_gaussian(rng, r, k);
        QuadraticForms::from_parts(hb.adjoint() * &hb, Some(he.adjoint() * &he), &h * h.adjoint()).unwrap()
    }

    #[test]
    fn qcqp_scalar_kkt() {
        let b = CVec::from_vec(vec![c(2.0), c(0.0)]);
        let s = qcqp_spectral(&b, &identity_eig(&[1.0, 1.0]), 1.0, 1e-12).unwrap();
        assert!((s.x[0] - c(1.0)).norm() < 1e-10);
        assert!(s.x[1].norm() < 1e-15);
        assert!((s.mu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qcqp_zero_eigenvalue_direction_is_free() {
        let b = CVec::from_vec(vec![c(5.0), c(5.0)]);
        let s = qcqp_spectral(&b, &identity_eig(&[0.0, 1.0]), 25.0, 1e-12).unwrap();
        assert_eq!(s.x, b);
        assert_eq!(s.mu, 0.0);
    }

    #[test]
    fn qcqp_feasible_input_returned_unchanged() {
        let b = CVec::from_vec(vec![c(0.1), C64::new(0.0, 0.2)]);
        let s = qcqp_spectral(&b, &identity_eig(&[3.0, 2.0]), 1.0, 1e-12).unwrap();
        assert_eq!(s.x, b);
    }

    #[test]
    fn qcqp_rejects_non_positive_cap() {
        let b = CVec::from_vec(vec![c(1.0)]);
        assert!(matches!(
            qcqp_spectral(&b, &identity_eig(&[1.0]), 0.0, 1e-12),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn qcqp_identity_is_ball_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_gaussian(&mut rng, 6, 1).column(0).into_owned();
        let eps = 0.5;
        let s = qcqp_spectral(&b, &identity_eig(&[1.0; 6]), eps, 1e-13).unwrap();
        let want = &b * c((eps.sqrt() / b.norm()).min(1.0));
        assert!((s.x - want).norm() < 1e-9);
    }

    #[test]
    fn qcqp_complementary_slackness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let g = random_gaussian(&mut rng, 5, 5);
            let eig = hermitian_eig(&(&g * g.adjoint())).unwrap();
            let b = random_gaussian(&mut rng, 5, 1).column(0).into_owned();
            let eps = 0.05;
            let s = qcqp_spectral(&b, &eig, eps, 1e-10).unwrap();
            assert!(s.constraint <= eps * (1.0 + 1e-10));
            assert!((s.mu * (s.constraint - eps)).abs() <= eps * 1e-10);
        }
    }

    #[test]
    fn omega_update_fixed_point_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let forms = random_forms(&mut rng, 3, 2);
        let psi = random_unitary(&mut rng, 3);
        let state = PddState {
            omega: CMat::identity(3, 3),
            psi: psi.clone(),
            lambda: random_gaussian(&mut rng, 3, 3),
            rho: 0.0,
            viol_tol: 1.0,
        };
        let next = update_omega(&state, &forms, false).unwrap();
        assert!((next.omega - &psi).norm() < 1e-12);

        let v = random_unitary(&mut rng, 3);
        let sym = &v * v.transpose();
        let state = PddState {
            psi: sym,
            rho: 0.3,
            lambda: CMat::zeros(3, 3),
            ..state
        };
        let forms_sym = QuadraticForms::from_parts(CMat::identity(3, 3), forms.e_e.clone(), CMat::identity(3, 3)).unwrap();
        let next = update_omega(&state, &forms_sym, true).unwrap();
        assert!(symmetry_residual(&next.omega) < 1e-9);
        assert!(unitarity_residual(&next.omega) < 1e-9);
    }

    #[test]
    fn block_updates_do_not_increase_lagrangian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let forms = random_forms(&mut rng, 4, 2);
            let settings = PddSettings::new(1.0);
            let omega = random_unitary(&mut rng, 4);
            let solver = PsiSolver::new(&forms).unwrap();
            // Feasible Ψ: scale a random matrix onto the cap.
            let raw = random_gaussian(&mut rng, 4, 4);
            let val = real_quad_trace(forms.e_e.as_ref().unwrap(), &raw, &forms.m).unwrap();
            let psi = raw * c((0.5 / val).sqrt());
            let state = PddState {
                omega,
                psi,
                lambda: random_gaussian(&mut rng, 4, 4) * c(0.1),
                rho: 0.05 + 0.1 * trial as f64,
                viol_tol: 1e-2,
            };
            let l0 = augmented_lagrangian(&state, &forms);
            let s1 = update_omega(&state, &forms, false).unwrap();
            let l1 = augmented_lagrangian(&s1, &forms);
            assert!(l1 <= l0 + 1e-10 * l0.abs().max(1.0), "omega step {l0} -> {l1}");
            let up = solver.update(&s1, &forms, &settings).unwrap();
            let s2 = PddState { psi: up.psi, ..s1 };
            let l2 = augmented_lagrangian(&s2, &forms);
            assert!(l2 <= l1 + 1e-10 * l1.abs().max(1.0), "psi step {l1} -> {l2}");
        }
    }

    #[test]
    fn psi_update_keeps_feasible_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let forms = random_forms(&mut rng, 3, 2);
        let state = PddState::new(random_unitary(&mut rng, 3), &PddSettings::new(1.0));
        let target = psi_target(&state, &forms);
        let val = real_quad_trace(forms.e_e.as_ref().unwrap(), &target, &forms.m).unwrap();
        let settings = PddSettings::new(val * 2.0);
        let next = update_psi(&state, &forms, &settings).unwrap();
        assert_eq!(next.psi, target);
    }

    #[test]
    fn shortcut_matches_explicit_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for r in 2..=4 {
            let forms = random_forms(&mut rng, r, 2);
            let mut state = PddState::new(random_unitary(&mut rng, r), &PddSettings::new(1.0));
            state.lambda = random_gaussian(&mut rng, r, r);
            let settings = PddSettings::new(0.3);
            let a = update_psi(&state, &forms, &settings).unwrap();
            let b = update_psi_explicit(&state, &forms, &settings).unwrap();
            let err = a.psi.iter().zip(b.psi.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "r={r}: {err}");
        }
    }

    #[test]
    fn outer_update_branches() {
        let settings = PddSettings::new(1.0);
        let omega = CMat::identity(2, 2);
        let state = PddState::new(omega.clone(), &settings);
        let next = outer_update(&state, &settings);
        assert_eq!(next.lambda, state.lambda);
        assert_eq!(next.rho, state.rho);
        assert_eq!(next.viol_tol, 0.5 * state.viol_tol);

        let far = PddState {
            psi: CMat::zeros(2, 2),
            ..state.clone()
        };
        let next = outer_update(&far, &settings);
        assert!((next.rho - 0.7).abs() < 1e-15);
        assert_eq!(next.lambda, far.lambda);

        let near = PddState {
            psi: &omega * c(1.0 - 1e-3),
            ..state
        };
        let next = outer_update(&near, &settings);
        assert_eq!(next.rho, 1.0);
        assert!((next.lambda[(0, 0)] - c(1e-3)).norm() < 1e-12);
    }

    #[test]
    fn settings_validation() {
        assert!(PddSettings::new(1.0).validate().is_ok());
        assert!(matches!(PddSettings::new(0.0).validate(), Err(Error::Domain(_))));
        let bad = PddSettings {
            rho_shrink: 1.0,
            ..PddSettings::new(1.0)
        };
        assert!(bad.validate().is_err());
    }
}

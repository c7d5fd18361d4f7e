//! Designs without an eavesdropper.
//!
//! The non-reciprocal optimum aligns the eigenbases of `E_b` and `M`
//! (both sorted descending) and attains the Von Neumann trace bound. The
//! reciprocal case starts from the closest symmetric unitary to that
//! optimum and climbs with exponential-map steps `U ← U exp(μ S)`, keeping
//! `Ω = U U^T` symmetric unitary throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_skew, hermitian_eig, symmetry_residual, takagi, unitarity_residual};
use crate::model::{real_quad_trace, Architecture, QuadraticForms, RisMatrix, Target};
use crate::report::SolveReport;
use crate::{CMat, C64};

/// Step-size and stopping rules for the reciprocal ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AoSettings {
    /// Stop once an accepted step improves the cost by less than this,
    /// relative to the cost.
    pub epsilon_conv: f64,
    pub mu0: f64,
    pub mu_up: f64,
    pub mu_down: f64,
    pub max_iters: usize,
}

impl Default for AoSettings {
    fn default() -> Self {
        Self {
            epsilon_conv: 1e-8,
            mu0: 1e-2,
            mu_up: 2.0,
            mu_down: 0.5,
            max_iters: 5000,
        }
    }
}

impl AoSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon_conv > 0.0
            && self.mu0 > 0.0
            && self.mu_down > 0.0
            && self.mu_down < 1.0
            && self.mu_up > 1.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid AO settings {self:?}")))
        }
    }
}

/// Steps whose size `μ‖S‖_F` falls below this cannot change the iterate in
/// double precision; the ascent is then stationary.
const MIN_STEP: f64 = 1e-13;

/// `V_E V_M^H` with both eigenbases sorted by descending eigenvalue.
pub fn aligned_unitary(e: &CMat, m: &CMat) -> Result<CMat> {
    let ee = hermitian_eig(e)?;
    let em = hermitian_eig(m)?;
    Ok(&ee.vectors * em.vectors.adjoint())
}

fn check_forms(forms: &QuadraticForms) -> Result<()> {
    let r = forms.r();
    if forms.m.ncols() != r || forms.e_b.shape() != (r, r) {
        return Err(Error::dim(
            "quadratic forms",
            format!("{r}x{r}"),
            format!("E_b {:?}, M {:?}", forms.e_b.shape(), forms.m.shape()),
        ));
    }
    Ok(())
}

/// `Σ_i δ_{E,i} δ_{M,i}` over both spectra sorted descending: the largest
/// trace-FIM any unitary response can reach at `target`.
pub fn von_neumann_bound(forms: &QuadraticForms, target: Target) -> Result<f64> {
    check_forms(forms)?;
    let de = hermitian_eig(forms.e(target)?)?.values;
    let dm = hermitian_eig(&forms.m)?.values;
    Ok(de.iter().zip(dm.iter()).map(|(a, b)| a * b).sum())
}

/// `Σ_i δ_{E,i} δ_{M,r-1-i}`: the smallest trace-FIM any unitary response
/// can give at `target`. Caps below this are infeasible.
pub fn von_neumann_floor(forms: &QuadraticForms, target: Target) -> Result<f64> {
    check_forms(forms)?;
    let de = hermitian_eig(forms.e(target)?)?.values;
    let dm = hermitian_eig(&forms.m)?.values;
    Ok(de.iter().zip(dm.iter().rev()).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

/// Closed-form optimum over all unitary responses: `Ω = V_E V_M^H`.
pub fn solve_nonreciprocal(forms: &QuadraticForms) -> Result<(RisMatrix, SolveReport)> {
    check_forms(forms)?;
    let omega = aligned_unitary(&forms.e_b, &forms.m)?;
    let objective = real_quad_trace(&forms.e_b, &omega, &forms.m)?;
    let mut report = SolveReport {
        objective,
        bound: von_neumann_bound(forms, Target::Bob)?,
        iterations: 0,
        cost_trace: vec![objective],
        converged: true,
        ..Default::default()
    };
    report.set("unitarity", unitarity_residual(&omega));
    if let Some(e_e) = &forms.e_e {
        report.set("eve_fim", real_quad_trace(e_e, &omega, &forms.m)?);
    }
    Ok((RisMatrix::new(omega, Architecture::NonReciprocal)?, report))
}

/// Takagi factor `U` of `V_E V_M^H + V_M^* V_E^T`; `U U^T` is the closest
/// symmetric unitary to the non-reciprocal optimum.
pub fn takagi_initialization(forms: &QuadraticForms) -> Result<CMat> {
    check_forms(forms)?;
    let aligned = aligned_unitary(&forms.e_b, &forms.m)?;
    let sym = &aligned + aligned.transpose();
    Ok(takagi(&sym)?.unitary)
}

fn reciprocal_cost(forms: &QuadraticForms, u: &CMat) -> Result<f64> {
    real_quad_trace(&forms.e_b, &(u * u.transpose()), &forms.m)
}

/// Reciprocal (symmetric unitary) design by alternating ascent on `U` with
/// `Ω = U U^T`.
///
/// Each iteration forms `Z = E_b U U^T M U^*`, the skew-Hermitian
/// direction `S = (U^H Z − Z^H U)/2` and the candidate `U exp(μ S)`. A
/// candidate is accepted only if it raises the cost, after which `μ` grows
/// by `mu_up`; otherwise `μ` shrinks by `mu_down`. Running out of
/// iterations is reported through `converged = false`.
pub fn solve_reciprocal_ao(
    forms: &QuadraticForms,
    settings: &AoSettings,
) -> Result<(RisMatrix, SolveReport)> {
    settings.validate()?;
    let u0 = takagi_initialization(forms)?;
    let (u, mut report) = ascend(forms, settings, u0)?;
    let omega = &u * u.transpose();
    // U U^T is symmetric up to rounding; remove the residue exactly.
    let omega = (&omega + omega.transpose()) * C64::from(0.5);
    report.bound = von_neumann_bound(forms, Target::Bob)?;
    report.set("unitarity", unitarity_residual(&omega));
    report.set("symmetry", symmetry_residual(&omega));
    if let Some(e_e) = &forms.e_e {
        report.set("eve_fim", real_quad_trace(e_e, &omega, &forms.m)?);
    }
    Ok((RisMatrix::new(omega, Architecture::Reciprocal)?, report))
}

/// The ascent loop from a given unitary `U`. Returns the final `U`.
pub fn ascend(forms: &QuadraticForms, settings: &AoSettings, mut u: CMat) -> Result<(CMat, SolveReport)> {
    settings.validate()?;
    let mut cost = reciprocal_cost(forms, &u)?;
    let mut mu = settings.mu0;
    let mut report = SolveReport {
        cost_trace: vec![cost],
        ..Default::default()
    };
    let mut max_unitarity: f64 = unitarity_residual(&u);
    let mut converged = false;
    let mut iters = 0;
    while iters < settings.max_iters {
        iters += 1;
        let z = &forms.e_b * &u * u.transpose() * &forms.m * u.conjugate();
        let uhz = u.adjoint() * &z;
        let s = (&uhz - uhz.adjoint()) * C64::from(0.5);
        let snorm = s.norm();
        if snorm == 0.0 || mu * snorm < MIN_STEP {
            converged = true;
            break;
        }
        let candidate = &u * expm_skew(&s, mu)?;
        let c = reciprocal_cost(forms, &candidate)?;
        if c > cost {
            let gain = c - cost;
            u = candidate;
            cost = c;
            mu *= settings.mu_up;
            report.cost_trace.push(cost);
            max_unitarity = max_unitarity.max(unitarity_residual(&u));
            if gain <= settings.epsilon_conv * cost.abs() {
                converged = true;
                break;
            }
        } else {
            mu *= settings.mu_down;
        }
    }
    report.objective = cost;
    report.iterations = iters;
    report.converged = converged;
    report.set("max_step_unitarity", max_unitarity);
    if !converged {
        report.notes.push(format!(
            "AO stopped after {} iterations without meeting the improvement threshold",
            settings.max_iters
        ));
    }
    Ok((u, report))
}

//! Physical model: channels, noise, power allocation and the Fisher
//! information they induce.
//!
//! Measurements follow `y = (H_rb Ω H_ar) P θ + η` with `η ~ CN(0, Σ)`.
//! The complex FIM is `G^H Σ^{-1} G` for `G = H_rb Ω H_ar P`; its trace
//! reduces to `tr(Ω^H E Ω M)` with `E = H_rb^H Σ^{-1} H_rb` and
//! `M = H H^H`, `H = H_ar P`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, trace_of_product, unitarity_residual, symmetry_residual};
use crate::tolerances::{
    FIM_CONDITION_LIMIT, RIS_MODULUS_TOL, RIS_SYMMETRY_TOL, RIS_UNITARY_TOL, TRACE_IMAG_TOL,
};
use crate::{CMat, CVec, C64};

/// Half-width of the uniform distribution for channel real/imag parts.
pub const CHANNEL_HALF_WIDTH: f64 = 0.1;

/// Trials per independent generator stream in [`simulate_mle_mse`].
pub const MC_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of complex parameters.
    pub k: usize,
    /// Number of RIS elements.
    pub r: usize,
    pub n_b: usize,
    pub n_e: usize,
    pub total_power: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub eve_present: bool,
}

impl SystemConfig {
    /// Setup used for the reference experiments: `n_b = n_e = 2k`, total
    /// power 30, noise variance `1e-5`.
    pub fn reference(k: usize, r: usize, seed: u64) -> Self {
        Self {
            k,
            r,
            n_b: 2 * k,
            n_e: 2 * k,
            total_power: 30.0,
            noise_variance: 1e-5,
            seed,
            eve_present: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 || self.r == 0 || self.n_b == 0 {
            return fail("k, r and n_b must be at least 1");
        }
        if self.eve_present && self.n_e == 0 {
            return fail("n_e must be at least 1 when an eavesdropper is present");
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return fail("total_power must be positive");
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return fail("noise_variance must be positive");
        }
        Ok(())
    }

    /// Per-parameter amplitude `sqrt(total_power / k)` of equal power
    /// allocation.
    pub fn equal_power_amplitude(&self) -> f64 {
        (self.total_power / self.k as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Bob,
    Eve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    NonReciprocal,
    Reciprocal,
    Diagonal,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::NonReciprocal,
        Architecture::Reciprocal,
        Architecture::Diagonal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::NonReciprocal => "non-reciprocal",
            Architecture::Reciprocal => "reciprocal",
            Architecture::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-reciprocal" | "nonreciprocal" | "nr" => Ok(Architecture::NonReciprocal),
            "reciprocal" | "rec" => Ok(Architecture::Reciprocal),
            "diagonal" | "diag" => Ok(Architecture::Diagonal),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Channel realization plus noise covariances and power allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Transmitter to RIS, `r x k`.
    pub h_ar: CMat,
    /// RIS to Bob, `n_b x r`.
    pub h_rb: CMat,
    /// RIS to Eve, `n_e x r`.
    pub h_re: Option<CMat>,
    pub sigma_b: CMat,
    pub sigma_e: Option<CMat>,
    /// Diagonal of `P` (amplitudes `sqrt(p_i)`).
    pub power: DVector<f64>,
}

impl ChannelSet {
    pub fn k(&self) -> usize {
        self.h_ar.ncols()
    }

    pub fn r(&self) -> usize {
        self.h_ar.nrows()
    }

    /// `H = H_ar P`.
    pub fn effective_transmit(&self) -> CMat {
        let mut h = self.h_ar.clone();
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col *= C64::from(self.power[j]);
        }
        h
    }

    fn link(&self, target: Target) -> Result<(&CMat, &CMat, &'static str)> {
        match target {
            Target::Bob => Ok((&self.h_rb, &self.sigma_b, "Sigma_b")),
            Target::Eve => match (&self.h_re, &self.sigma_e) {
                (Some(h), Some(s)) => Ok((h, s, "Sigma_e")),
                _ => Err(Error::MissingEve),
            },
        }
    }

    fn check(&self) -> Result<()> {
        let (r, k) = self.h_ar.shape();
        if self.h_rb.ncols() != r {
            return Err(Error::dim("H_rb columns", r, self.h_rb.ncols()));
        }
        if self.sigma_b.shape() != (self.h_rb.nrows(), self.h_rb.nrows()) {
            return Err(Error::dim("Sigma_b", self.h_rb.nrows(), format!("{:?}", self.sigma_b.shape())));
        }
        if self.power.len() != k {
            return Err(Error::dim("power allocation", k, self.power.len()));
        }
        if self.power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Domain("power allocation entries must be non-negative".into()));
        }
        match (&self.h_re, &self.sigma_e) {
            (Some(h), Some(s)) => {
                if h.ncols() != r {
                    return Err(Error::dim("H_re columns", r, h.ncols()));
                }
                if s.shape() != (h.nrows(), h.nrows()) {
                    return Err(Error::dim("Sigma_e", h.nrows(), format!("{:?}", s.shape())));
                }
            }
            (None, None) => {}
            _ => return Err(Error::Config("H_re and Sigma_e must be given together".into())),
        }
        Ok(())
    }
}

/// Quadratic forms entering every objective: `tr(Ω^H E Ω M)`.
#[derive(Debug, Clone)]
pub struct QuadraticForms {
    pub e_b: CMat,
    pub e_e: Option<CMat>,
    pub m: CMat,
    /// `H = H_ar P`, when the forms were built from channels.
    pub h: Option<CMat>,
}

impl QuadraticForms {
    /// Forms supplied directly (no channel behind them).
    pub fn from_parts(e_b: CMat, e_e: Option<CMat>, m: CMat) -> Result<Self> {
        let r = e_b.nrows();
        for (name, mat) in [("E_b", Some(&e_b)), ("E_e", e_e.as_ref()), ("M", Some(&m))] {
            if let Some(mat) = mat {
                if mat.shape() != (r, r) {
                    return Err(Error::dim(
                        "quadratic form",
                        format!("{r}x{r}"),
                        format!("{name} {:?}", mat.shape()),
                    ));
                }
            }
        }
        Ok(Self { e_b, e_e, m, h: None })
    }

    pub fn r(&self) -> usize {
        self.m.nrows()
    }

    pub fn e(&self, target: Target) -> Result<&CMat> {
        match target {
            Target::Bob => Ok(&self.e_b),
            Target::Eve => self.e_e.as_ref().ok_or(Error::MissingEve),
        }
    }

    /// Forms with Bob's and Eve's roles swapped.
    pub fn eve_as_bob(&self) -> Result<Self> {
        Ok(Self {
            e_b: self.e(Target::Eve)?.clone(),
            e_e: Some(self.e_b.clone()),
            m: self.m.clone(),
            h: self.h.clone(),
        })
    }
}

/// RIS response matrix tagged with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct RisMatrix {
    matrix: CMat,
    architecture: Architecture,
}

impl RisMatrix {
    pub fn new(matrix: CMat, architecture: Architecture) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::dim("RIS matrix", "square", format!("{:?}", matrix.shape())));
        }
        match architecture {
            Architecture::NonReciprocal | Architecture::Reciprocal => {
                let u = unitarity_residual(&matrix);
                if u > RIS_UNITARY_TOL {
                    return Err(Error::Contract {
                        what: "RIS matrix unitarity",
                        residual: u,
                        tolerance: RIS_UNITARY_TOL,
                    });
                }
                if architecture == Architecture::Reciprocal {
                    let s = symmetry_residual(&matrix);
                    if s > RIS_SYMMETRY_TOL {
                        return Err(Error::Contract {
                            what: "reciprocal RIS symmetry",
                            residual: s,
                            tolerance: RIS_SYMMETRY_TOL,
                        });
                    }
                }
            }
            Architecture::Diagonal => {
                for i in 0..matrix.nrows() {
                    for j in 0..matrix.ncols() {
                        if i != j && matrix[(i, j)] != C64::new(0.0, 0.0) {
                            return Err(Error::Contract {
                                what: "diagonal RIS off-diagonal entry",
                                residual: matrix[(i, j)].norm(),
                                tolerance: 0.0,
                            });
                        }
                    }
                    let m = matrix[(i, i)].norm();
                    if m > 1.0 + RIS_MODULUS_TOL {
                        return Err(Error::Contract {
                            what: "diagonal RIS entry modulus",
                            residual: m - 1.0,
                            tolerance: RIS_MODULUS_TOL,
                        });
                    }
                }
            }
        }
        Ok(Self { matrix, architecture })
    }

    pub fn diagonal(omega: &CVec) -> Result<Self> {
        Self::new(CMat::from_diagonal(omega), Architecture::Diagonal)
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn into_inner(self) -> CMat {
        self.matrix
    }
}

/// Uniform sample on `[-half, half)` from the top 53 bits of one `u64`.
fn uniform_symmetric<R: RngCore>(rng: &mut R, half: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    half * (2.0 * u - 1.0)
}

fn uniform_channel<R: RngCore>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    // Row-major fill, real part first.
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = uniform_symmetric(rng, CHANNEL_HALF_WIDTH);
        let im = uniform_symmetric(rng, CHANNEL_HALF_WIDTH);
        data.push(C64::new(re, im));
    }
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Draws a channel realization.
///
/// The stream is ChaCha20 seeded with `cfg.seed` (`seed_from_u64`). Each
/// complex entry consumes two `u64` words, real part first, mapped to
/// `[-0.1, 0.1)` through their top 53 bits. Matrices are filled row-major
/// in the order `H_ar`, `H_rb`, `H_re`.
pub fn generate_channels(cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let h_ar = uniform_channel(&mut rng, cfg.r, cfg.k);
    let h_rb = uniform_channel(&mut rng, cfg.n_b, cfg.r);
    let (h_re, sigma_e) = if cfg.eve_present {
        (
            Some(uniform_channel(&mut rng, cfg.n_e, cfg.r)),
            Some(CMat::identity(cfg.n_e, cfg.n_e) * C64::from(cfg.noise_variance)),
        )
    } else {
        (None, None)
    };
    Ok(ChannelSet {
        h_ar,
        h_rb,
        h_re,
        sigma_b: CMat::identity(cfg.n_b, cfg.n_b) * C64::from(cfg.noise_variance),
        sigma_e,
        power: DVector::from_element(cfg.k, cfg.equal_power_amplitude()),
    })
}

/// Lower Cholesky factor, or the positive-definiteness error naming `which`.
fn cholesky_lower(sigma: &CMat, which: &'static str) -> Result<CMat> {
    checked_cholesky(sigma).ok_or(Error::NotPositiveDefinite(which))
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
///
/// The complex factorization in nalgebra takes complex square roots and so
/// "succeeds" on indefinite input; a genuine factor has a real positive
/// diagonal.
pub(crate) fn checked_cholesky(a: &CMat) -> Option<CMat> {
    let l = a.clone().cholesky()?.l();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(l)
}

/// `L^{-1} X` for lower-triangular `L`.
fn whiten(l: &CMat, x: &CMat, which: &'static str) -> Result<CMat> {
    l.solve_lower_triangular(x)
        .ok_or(Error::NotPositiveDefinite(which))
}

/// `H^H Σ^{-1} H` through a Cholesky solve.
fn precision_form(h: &CMat, sigma: &CMat, which: &'static str) -> Result<CMat> {
    let l = cholesky_lower(sigma, which)?;
    let w = whiten(&l, h, which)?;
    Ok(w.adjoint() * w)
}

pub fn build_forms(ch: &ChannelSet) -> Result<QuadraticForms> {
    ch.check()?;
    let e_b = precision_form(&ch.h_rb, &ch.sigma_b, "Sigma_b")?;
    let e_e = match (&ch.h_re, &ch.sigma_e) {
        (Some(h), Some(s)) => Some(precision_form(h, s, "Sigma_e")?),
        _ => None,
    };
    let h = ch.effective_transmit();
    let m = &h * h.adjoint();
    Ok(QuadraticForms {
        e_b,
        e_e,
        m,
        h: Some(h),
    })
}

/// `tr(Ω^H E Ω M)` as a complex number (imaginary part is round-off).
pub fn quad_trace(e: &CMat, omega: &CMat, m: &CMat) -> C64 {
    let left = omega.adjoint() * (e * omega);
    trace_of_product(&left, m)
}

/// Real part of [`quad_trace`] after checking the imaginary residue.
pub fn real_quad_trace(e: &CMat, omega: &CMat, m: &CMat) -> Result<f64> {
    let t = quad_trace(e, omega, m);
    let scale = e.norm() * m.norm() * omega.norm().powi(2).max(1.0);
    if t.im.abs() > TRACE_IMAG_TOL * scale.max(t.re.abs()) {
        return Err(Error::Numerical {
            context: "trace_fim",
            detail: format!("imaginary residue {:.3e} on trace {:.3e}", t.im, t.re),
        });
    }
    Ok(t.re)
}

/// Trace of the Fisher information at `target` for response `ris`.
pub fn trace_fim(forms: &QuadraticForms, ris: &RisMatrix, target: Target) -> Result<f64> {
    let r = forms.r();
    if ris.matrix().nrows() != r {
        return Err(Error::dim("trace_fim", r, ris.matrix().nrows()));
    }
    real_quad_trace(forms.e(target)?, ris.matrix(), &forms.m)
}

/// Full `k x k` Fisher information `G^H Σ^{-1} G`, `G = H_x Ω H_ar P`.
pub fn fim_matrix(ch: &ChannelSet, ris: &RisMatrix, target: Target) -> Result<CMat> {
    ch.check()?;
    if ris.matrix().nrows() != ch.r() {
        return Err(Error::dim("fim_matrix", ch.r(), ris.matrix().nrows()));
    }
    let (h, sigma, which) = ch.link(target)?;
    let g = h * ris.matrix() * ch.effective_transmit();
    let f = precision_form(&g, sigma, which)?;
    Ok((&f + f.adjoint()) * C64::from(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crb {
    /// `tr(FIM^{-1})`; `+inf` when the FIM is singular.
    pub trace: f64,
    /// Spectral condition number of the FIM.
    pub condition: f64,
    pub singular: bool,
}

/// Cramér-Rao bound `tr(FIM^{-1})`.
///
/// A FIM whose condition number exceeds `FIM_CONDITION_LIMIT`, or whose
/// Cholesky factorization fails, yields `trace = +inf` and
/// `singular = true` rather than an error.
pub fn crb_trace(fim: &CMat) -> Result<Crb> {
    let k = fim.nrows();
    if fim.ncols() != k {
        return Err(Error::dim("crb_trace", "square", format!("{:?}", fim.shape())));
    }
    let eig = hermitian_eig(fim)?;
    let (lmax, lmin) = (eig.values[0], eig.values[k - 1]);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let singular_crb = Crb {
        trace: f64::INFINITY,
        condition,
        singular: true,
    };
    if !(condition <= FIM_CONDITION_LIMIT) {
        log::warn!("FIM singular (condition {condition:.3e}); CRB reported as infinite");
        return Ok(singular_crb);
    }
    let Some(l) = checked_cholesky(fim) else {
        log::warn!("FIM Cholesky failed; CRB reported as infinite");
        return Ok(singular_crb);
    };
    let l_inv = l
        .solve_lower_triangular(&CMat::identity(k, k))
        .expect("Cholesky factor is invertible");
    // tr(F^{-1}) = tr(L^{-H} L^{-1}) = ‖L^{-1}‖_F².
    Ok(Crb {
        trace: l_inv.norm_squared(),
        condition,
        singular: false,
    })
}

/// Monte-Carlo mean-squared error of the maximum-likelihood (weighted
/// least-squares) estimate of `theta` at Bob.
///
/// Trials are split into blocks of [`MC_BLOCK`]; block `b` draws its noise
/// from ChaCha8 seeded with `seed + b`, so the result does not depend on
/// how blocks are scheduled across threads.
pub fn simulate_mle_mse(
    ch: &ChannelSet,
    ris: &RisMatrix,
    theta: &CVec,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    ch.check()?;
    let k = ch.k();
    if theta.len() != k {
        return Err(Error::dim("simulate_mle_mse theta", k, theta.len()));
    }
    if trials == 0 {
        return Err(Error::Domain("simulate_mle_mse needs at least one trial".into()));
    }
    let g = &ch.h_rb * ris.matrix() * ch.effective_transmit();
    let n = g.nrows();
    if n < k {
        return Err(Error::IllPosed(format!(
            "{n} measurements cannot identify {k} parameters"
        )));
    }
    let l = cholesky_lower(&ch.sigma_b, "Sigma_b")?;
    let gw = whiten(&l, &g, "Sigma_b")?;
    let qr = gw.qr();
    let q = qr.q();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    let rmin = (0..k).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(rmin > 1e-12 * rmax) {
        return Err(Error::IllPosed(
            "effective channel G = H_rb Ω H_ar P is rank deficient".into(),
        ));
    }
    let clean = &g * theta;
    let blocks = trials.div_ceil(MC_BLOCK);
    let sums: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            let count = MC_BLOCK.min(trials - b * MC_BLOCK);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut acc = 0.0;
            for _ in 0..count {
                let z = CVec::from_fn(n, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re * s, im * s)
                });
                let y = &clean + &l * z;
                let yw = l.solve_lower_triangular(&y).expect("checked invertible");
                let rhs = q.adjoint() * yw;
                let est = r.solve_upper_triangular(&rhs).expect("checked full rank");
                acc += (est - theta).norm_squared();
            }
            acc
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / trials as f64)
}

/// Matrix in the fixture format: dimensions plus row-major `[re, im]`
/// pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixRecord {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::dim("matrix record", self.rows * self.cols, self.data.len()));
        }
        let entries: Vec<C64> = self.data.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &entries))
    }
}

pub const CHANNEL_FORMAT: &str = "bdris-channels/1";

/// JSON container for a [`ChannelSet`], used for cross-language fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub format: String,
    pub k: usize,
    pub r: usize,
    pub n_b: usize,
    pub n_e: Option<usize>,
    /// Diagonal of `P`.
    pub power: Vec<f64>,
    pub h_ar: MatrixRecord,
    pub h_rb: MatrixRecord,
    pub h_re: Option<MatrixRecord>,
    pub sigma_b: MatrixRecord,
    pub sigma_e: Option<MatrixRecord>,
}

impl From<&ChannelSet> for ChannelFile {
    fn from(ch: &ChannelSet) -> Self {
        Self {
            format: CHANNEL_FORMAT.to_string(),
            k: ch.k(),
            r: ch.r(),
            n_b: ch.h_rb.nrows(),
            n_e: ch.h_re.as_ref().map(|h| h.nrows()),
            power: ch.power.iter().copied().collect(),
            h_ar: (&ch.h_ar).into(),
            h_rb: (&ch.h_rb).into(),
            h_re: ch.h_re.as_ref().map(Into::into),
            sigma_b: (&ch.sigma_b).into(),
            sigma_e: ch.sigma_e.as_ref().map(Into::into),
        }
    }
}

impl ChannelFile {
    pub fn into_channels(self) -> Result<ChannelSet> {
        if self.format != CHANNEL_FORMAT {
            return Err(Error::Config(format!("unsupported channel format `{}`", self.format)));
        }
        let ch = ChannelSet {
            h_ar: self.h_ar.to_matrix()?,
            h_rb: self.h_rb.to_matrix()?,
            h_re: self.h_re.as_ref().map(MatrixRecord::to_matrix).transpose()?,
            sigma_b: self.sigma_b.to_matrix()?,
            sigma_e: self.sigma_e.as_ref().map(MatrixRecord::to_matrix).transpose()?,
            power: DVector::from_vec(self.power),
        };
        if ch.k() != self.k || ch.r() != self.r || ch.h_rb.nrows() != self.n_b {
            return Err(Error::dim(
                "channel file header",
                format!("k={} r={} n_b={}", self.k, self.r, self.n_b),
                format!("k={} r={} n_b={}", ch.k(), ch.r(), ch.h_rb.nrows()),
            ));
        }
        if ch.h_re.as_ref().map(|h| h.nrows()) != self.n_e {
            return Err(Error::dim("channel file n_e", format!("{:?}", self.n_e), "mismatch"));
        }
        ch.check()?;
        Ok(ch)
    }
}

pub fn save_channels(ch: &ChannelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&ChannelFile::from(ch))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_channels(path: impl AsRef<Path>) -> Result<ChannelSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<ChannelFile>(&text)?.into_channels()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_gaussian, random_unitary};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn small_channels(seed: u64, r: usize, k: usize, n: usize) -> ChannelSet {
        let mut cfg = SystemConfig::reference(k, r, seed);
        cfg.n_b = n;
        cfg.n_e = n;
        generate_channels(&cfg).unwrap()
    }

    #[test]
    fn reference_power_is_sqrt3() {
        let cfg = SystemConfig::reference(10, 36, 1);
        assert_eq!((cfg.n_b, cfg.n_e), (20, 20));
        let ch = generate_channels(&cfg).unwrap();
        for p in ch.power.iter() {
            assert!((p - 3f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(ch.h_ar.shape(), (36, 10));
        assert_eq!(ch.h_rb.shape(), (20, 36));
        assert_eq!(ch.h_re.as_ref().unwrap().shape(), (20, 36));
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = SystemConfig::reference(3, 5, 77);
        let a = generate_channels(&cfg).unwrap();
        let b = generate_channels(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_channels(&SystemConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a, other);
        for z in a.h_ar.iter().chain(a.h_rb.iter()) {
            assert!(z.re.abs() <= 0.1 && z.im.abs() <= 0.1);
        }
    }

    #[test]
    fn generator_mean_is_centered() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let m = uniform_channel(&mut rng, 1000, 1000);
        let mean = m.iter().map(|z| z.re).sum::<f64>() / 1e6;
        assert!(mean.abs() < 1e-3, "mean {mean}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SystemConfig::reference(2, 4, 0);
        for bad in [
            SystemConfig { k: 0, ..base.clone() },
            SystemConfig { n_e: 0, ..base.clone() },
            SystemConfig { noise_variance: 0.0, ..base.clone() },
            SystemConfig { total_power: -1.0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        assert!(SystemConfig { n_e: 0, eve_present: false, ..base }.validate().is_ok());
    }

    #[test]
    fn forms_identity_and_scalar_covariance() {
        let ch = ChannelSet {
            h_ar: CMat::identity(2, 2),
            h_rb: CMat::identity(2, 2),
            h_re: None,
            sigma_b: CMat::identity(2, 2),
            sigma_e: None,
            power: DVector::from_element(2, 1.0),
        };
        let f = build_forms(&ch).unwrap();
        assert!((&f.e_b - CMat::identity(2, 2)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h_rb = random_gaussian(&mut rng, 3, 2);
        let s2 = 0.25;
        let ch = ChannelSet {
            h_rb: h_rb.clone(),
            sigma_b: CMat::identity(3, 3) * c(s2),
            ..ch
        };
        let f = build_forms(&ch).unwrap();
        let want = h_rb.adjoint() * &h_rb * c(1.0 / s2);
        assert!((&f.e_b - want).norm() < 1e-12);
    }

    #[test]
    fn forms_match_direct_formula_with_correlated_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h_rb = random_gaussian(&mut rng, 3, 2);
        let a = random_gaussian(&mut rng, 3, 3);
        let sigma = &a * a.adjoint() + CMat::identity(3, 3);
        let ch = ChannelSet {
            h_ar: random_gaussian(&mut rng, 2, 2),
            h_rb: h_rb.clone(),
            h_re: None,
            sigma_b: sigma.clone(),
            sigma_e: None,
            power: DVector::from_vec(vec![1.0, 0.5]),
        };
        let f = build_forms(&ch).unwrap();
        // Direct-formula oracle with an explicit inverse (test only).
        let want = h_rb.adjoint() * sigma.try_inverse().unwrap() * &h_rb;
        for (x, y) in f.e_b.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        let h = f.h.as_ref().unwrap();
        assert!((&f.m - h * h.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn forms_reject_indefinite_covariance() {
        let mut ch = small_channels(1, 3, 2, 2);
        ch.sigma_e = Some(CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1.0)])));
        match build_forms(&ch) {
            Err(Error::NotPositiveDefinite(name)) => assert_eq!(name, "Sigma_e"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_trace_fim() {
        let f = QuadraticForms::from_parts(
            CMat::from_element(1, 1, c(1.0)),
            None,
            CMat::from_element(1, 1, c(1.0)),
        )
        .unwrap();
        let ris = RisMatrix::new(CMat::from_element(1, 1, c(1.0)), Architecture::NonReciprocal).unwrap();
        assert_eq!(trace_fim(&f, &ris, Target::Bob).unwrap(), 1.0);
        assert!(matches!(trace_fim(&f, &ris, Target::Eve), Err(Error::MissingEve)));
    }

    #[test]
    fn trace_fim_unitary_invariance_and_direct_oracle() {
        let ch = small_channels(4, 4, 2, 3);
        let forms = build_forms(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let omega = random_unitary(&mut rng, 4);
        let ris = RisMatrix::new(omega.clone(), Architecture::NonReciprocal).unwrap();
        let got = trace_fim(&forms, &ris, Target::Bob).unwrap();
        // Direct oracle from raw channels.
        let g = &ch.h_rb * &omega * ch.effective_transmit();
        let direct = (g.adjoint() * ch.sigma_b.clone().try_inverse().unwrap() * &g).trace().re;
        assert!((got - direct).abs() <= 1e-9 * direct);
        // E = I: value is tr(M) for every unitary.
        let f_id = QuadraticForms::from_parts(CMat::identity(4, 4), None, forms.m.clone()).unwrap();
        let v = trace_fim(&f_id, &ris, Target::Bob).unwrap();
        assert!((v - forms.m.trace().re).abs() < 1e-9 * v);
    }

    #[test]
    fn fim_matrix_trace_consistency() {
        let ch = small_channels(12, 4, 3, 4);
        let forms = build_forms(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ris = RisMatrix::new(random_unitary(&mut rng, 4), Architecture::NonReciprocal).unwrap();
        for target in [Target::Bob, Target::Eve] {
            let fim = fim_matrix(&ch, &ris, target).unwrap();
            let t = trace_fim(&forms, &ris, target).unwrap();
            assert!((fim.trace().re - t).abs() <= 1e-9 * t);
            assert!(crate::linalg::hermitian_residual(&fim) < 1e-12 * fim.norm());
        }
        let mut zero = ch.clone();
        zero.h_rb = CMat::zeros(4, 4);
        assert_eq!(fim_matrix(&zero, &ris, Target::Bob).unwrap().norm(), 0.0);
    }

    #[test]
    fn crb_closed_forms() {
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0), c(4.0)]));
        assert!((crb_trace(&d).unwrap().trace - 0.75).abs() < 1e-15);
        let s = CMat::identity(3, 3) * c(5.0);
        assert!((crb_trace(&s).unwrap().trace - 0.6).abs() < 1e-15);
    }

    #[test]
    fn crb_matches_spectral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_gaussian(&mut rng, 5, 5);
        let fim = &a * a.adjoint() + CMat::identity(5, 5) * c(0.1);
        let eig = fim.clone().symmetric_eigen();
        let oracle: f64 = eig.eigenvalues.iter().map(|l| 1.0 / l).sum();
        let got = crb_trace(&fim).unwrap();
        assert!(!got.singular);
        assert!((got.trace - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn crb_singular_is_infinite() {
        let fim = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(0.0)]));
        let crb = crb_trace(&fim).unwrap();
        assert!(crb.singular && crb.trace.is_infinite());
    }

    #[test]
    fn mle_noiseless_recovery() {
        let mut cfg = SystemConfig::reference(2, 4, 3);
        cfg.noise_variance = 1e-20;
        let ch = generate_channels(&cfg).unwrap();
        let ris = RisMatrix::new(CMat::identity(4, 4), Architecture::NonReciprocal).unwrap();
        let theta = CVec::from_element(2, c(1.0));
        let mse = simulate_mle_mse(&ch, &ris, &theta, 100, 0).unwrap();
        assert!(mse < 1e-12, "{mse}");
    }

    #[test]
    fn mle_scalar_gaussian() {
        let s2 = 0.3;
        let ch = ChannelSet {
            h_ar: CMat::identity(1, 1),
            h_rb: CMat::identity(1, 1),
            h_re: None,
            sigma_b: CMat::from_element(1, 1, c(s2)),
            sigma_e: None,
            power: DVector::from_element(1, 1.0),
        };
        let ris = RisMatrix::new(CMat::identity(1, 1), Architecture::NonReciprocal).unwrap();
        let theta = CVec::from_element(1, c(1.0));
        let mse = simulate_mle_mse(&ch, &ris, &theta, 100_000, 99).unwrap();
        assert!((mse - s2).abs() < 0.05 * s2, "{mse}");
        // Reproducible.
        assert_eq!(mse, simulate_mle_mse(&ch, &ris, &theta, 100_000, 99).unwrap());
    }

    #[test]
    fn mle_rank_deficient_is_ill_posed() {
        let ch = small_channels(5, 4, 2, 4);
        let ris = RisMatrix::new(CMat::zeros(4, 4), Architecture::Diagonal).unwrap();
        let theta = CVec::from_element(2, c(1.0));
        assert!(matches!(
            simulate_mle_mse(&ch, &ris, &theta, 10, 0),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn ris_matrix_invariants() {
        let mut bad = CMat::identity(2, 2);
        bad[(0, 1)] = c(0.5);
        assert!(RisMatrix::new(bad.clone(), Architecture::NonReciprocal).is_err());
        assert!(RisMatrix::new(bad, Architecture::Diagonal).is_err());
        let big = CMat::identity(2, 2) * c(1.5);
        assert!(RisMatrix::new(big, Architecture::Diagonal).is_err());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let nonsym = CMat::from_row_slice(2, 2, &[c(s), c(s), c(-s), c(s)]);
        assert!(RisMatrix::new(nonsym.clone(), Architecture::NonReciprocal).is_ok());
        assert!(RisMatrix::new(nonsym, Architecture::Reciprocal).is_err());
    }

    #[test]
    fn channel_file_round_trip() {
        let ch = small_channels(31, 3, 2, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch.json");
        save_channels(&ch, &path).unwrap();
        assert_eq!(load_channels(&path).unwrap(), ch);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"format\": \"bdris-channels/1\""));
    }
}

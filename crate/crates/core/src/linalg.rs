//! Dense complex linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs. Eigen- and singular
//! value decompositions come from `nalgebra`; the Takagi factorization,
//! skew-Hermitian exponential and the two unitary projections are built on
//! top of them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tolerances::{
    HERMITIAN_TOL, RANK_TOL, SIMULTANEOUS_DIAG_TOL, SKEW_TOL, SYMMETRY_TOL, TAKAGI_CLUSTER_TOL,
};
use crate::{CMat, CVec, C64};

/// Eigendecomposition `A = V diag(values) V^H` of a Hermitian matrix with
/// eigenvalues sorted non-increasing.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: DVector<f64>,
    /// Columns are eigenvectors aligned with `values`.
    pub vectors: CMat,
}

impl HermEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= C64::from(self.values[j]);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Takagi factorization `A = U diag(sigma) U^T` of a complex symmetric
/// matrix, `sigma` non-negative and non-increasing.
#[derive(Debug, Clone)]
pub struct TakagiFactor {
    pub unitary: CMat,
    pub sigma: DVector<f64>,
}

impl TakagiFactor {
    pub fn reconstruct(&self) -> CMat {
        let mut scaled = self.unitary.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= C64::from(self.sigma[j]);
        }
        scaled * self.unitary.transpose()
    }
}

/// Result of projecting onto the unitary group.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: CMat,
    /// False when the target is (numerically) rank deficient and the
    /// minimizer is not unique.
    pub unique: bool,
}

/// Singular value decomposition `A = U diag(sigma) V^H` with `sigma`
/// sorted non-increasing. Returns `V`, not `V^H`.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

fn check_square(a: &CMat, context: &'static str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(
            context,
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(a.nrows())
}

/// `‖A^H A − I‖_F`.
pub fn unitarity_residual(a: &CMat) -> f64 {
    let n = a.ncols();
    (a.adjoint() * a - CMat::identity(n, n)).norm()
}

/// `‖A − A^T‖_F`.
pub fn symmetry_residual(a: &CMat) -> f64 {
    (a - a.transpose()).norm()
}

/// `‖A − A^H‖_F`.
pub fn hermitian_residual(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

/// Column-major vectorization.
pub fn vec(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for an `rows x cols` matrix.
pub fn unvec(x: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if x.len() != rows * cols {
        return Err(Error::dim("unvec", rows * cols, x.len()));
    }
    Ok(CMat::from_column_slice(rows, cols, x.as_slice()))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            out.view_mut((i * br, j * bc), (br, bc))
                .zip_apply(b, |o, bv| *o = aij * bv);
        }
    }
    out
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn svd_sorted(a: &CMat) -> SortedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = CMat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = CMat::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)].conj());
    SortedSvd { u, sigma, v }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues non-increasing.
///
/// The input is symmetrized as `(A + A^H)/2` before factoring. Ties keep
/// the order the backend produced them in.
pub fn hermitian_eig(a: &CMat) -> Result<HermEig> {
    let n = check_square(a, "hermitian_eig")?;
    let scale = a.norm();
    let residual = hermitian_residual(a);
    if residual > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(Error::Contract {
            what: "hermitian_eig input (not Hermitian)",
            residual: residual / scale,
            tolerance: HERMITIAN_TOL,
        });
    }
    if n == 0 {
        return Ok(HermEig {
            values: DVector::zeros(0),
            vectors: CMat::zeros(0, 0),
        });
    }
    let sym = (a + a.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal eigenvalues keep backend order.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermEig { values, vectors })
}

/// Symmetric unitary square root of a (numerically) symmetric unitary
/// matrix `z`.
///
/// Real and imaginary parts of a symmetric unitary matrix are commuting
/// real symmetric matrices, so a real orthogonal `Q` diagonalizes both:
/// `z = Q D Q^T` with unimodular `D`, and `Q D^{1/2} Q^T` is the root.
/// `Q` comes from a generic real combination `Re z + t Im z`; a few values
/// of `t` are tried in case one happens to merge distinct eigenvalues.
fn symmetric_unitary_sqrt(z: &CMat) -> CMat {
    let n = z.nrows();
    if n == 1 {
        let w = z[(0, 0)];
        let phase = if w.norm() > 0.0 { w.arg() } else { 0.0 };
        return CMat::from_element(1, 1, C64::from_polar(1.0, 0.5 * phase));
    }
    let zs = (z + z.transpose()) * C64::from(0.5);
    let re = zs.map(|c| c.re);
    let im = zs.map(|c| c.im);
    let mut best: Option<(f64, CMat)> = None;
    for t in [0.577_215_664_901_532_9, 1.414_213_562_373_095, -2.718_281_828_459_045, 0.318_309_886_183_791] {
        let q = SymmetricEigen::new(&re + &im * t).eigenvectors;
        let qc = q.map(C64::from);
        let d = qc.transpose() * &zs * &qc;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += d[(i, j)].norm_sqr();
                }
            }
        }
        let off = off.sqrt();
        let mut root = CMat::zeros(n, n);
        for k in 0..n {
            let w = d[(k, k)];
            let phase = if w.norm() > 0.0 { w.arg() } else { 0.0 };
            let s = C64::from_polar(1.0, 0.5 * phase);
            let qk = qc.column(k);
            root += &qk * qk.transpose() * s;
        }
        if off <= SIMULTANEOUS_DIAG_TOL * n as f64 {
            return root;
        }
        if best.as_ref().is_none_or(|(b, _)| off < *b) {
            best = Some((off, root));
        }
    }
    best.expect("at least one attempt").1
}

/// Takagi factorization `A = U Σ U^T` of a complex symmetric matrix.
///
/// From the SVD `A = V Σ W^H`, the matrix `Z = V^H W^*` is block diagonal
/// over clusters of equal singular values and symmetric unitary on every
/// cluster with a non-zero singular value. Taking a symmetric unitary
/// square root `S` of each such block gives `U = V S`. Zero clusters keep
/// `S = I`.
pub fn takagi(a: &CMat) -> Result<TakagiFactor> {
    let n = check_square(a, "takagi")?;
    let scale = a.norm();
    let residual = symmetry_residual(a);
    if residual > SYMMETRY_TOL * scale {
        return Err(Error::Contract {
            what: "takagi input (not symmetric)",
            residual: residual / scale,
            tolerance: SYMMETRY_TOL,
        });
    }
    if n == 0 {
        return Ok(TakagiFactor {
            unitary: CMat::zeros(0, 0),
            sigma: DVector::zeros(0),
        });
    }
    let sym = (a + a.transpose()) * C64::from(0.5);
    let SortedSvd { u: v, sigma, v: w } = svd_sorted(&sym);
    let smax = sigma[0];
    if smax == 0.0 {
        return Ok(TakagiFactor {
            unitary: CMat::identity(n, n),
            sigma: DVector::zeros(n),
        });
    }
    let z = v.adjoint() * w.conjugate();
    let gap = TAKAGI_CLUSTER_TOL * smax;
    let mut root = CMat::identity(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sigma[end - 1] - sigma[end] <= gap {
            end += 1;
        }
        if sigma[start] > gap {
            let len = end - start;
            let block = z.view((start, start), (len, len)).into_owned();
            root.view_mut((start, start), (len, len))
                .copy_from(&symmetric_unitary_sqrt(&block));
        }
        start = end;
    }
    Ok(TakagiFactor {
        unitary: v * root,
        sigma: DVector::from_vec(sigma),
    })
}

/// `exp(step · S)` for skew-Hermitian `S`, computed from the eigenpairs of
/// the Hermitian matrix `−iS` so the result is unitary to eigensolver
/// accuracy.
pub fn expm_skew(s: &CMat, step: f64) -> Result<CMat> {
    let n = check_square(s, "expm_skew")?;
    if !(step > 0.0) {
        return Err(Error::Domain(format!("expm_skew step must be positive, got {step}")));
    }
    let scale = s.norm();
    let residual = (s + s.adjoint()).norm();
    if residual > SKEW_TOL * scale {
        return Err(Error::Contract {
            what: "expm_skew input (not skew-Hermitian)",
            residual: residual / scale,
            tolerance: SKEW_TOL,
        });
    }
    if scale == 0.0 {
        return Ok(CMat::identity(n, n));
    }
    let herm = s * C64::new(0.0, -1.0);
    let eig = hermitian_eig(&herm)?;
    let mut scaled = eig.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= C64::from_polar(1.0, step * eig.values[j]);
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Unitary matrix closest to `t` in Frobenius norm: `P Q^H` from
/// `t = P Σ Q^H`.
pub fn unitary_procrustes(t: &CMat) -> Result<Projection> {
    let n = check_square(t, "unitary_procrustes")?;
    if n == 0 {
        return Ok(Projection {
            matrix: CMat::zeros(0, 0),
            unique: true,
        });
    }
    let svd = svd_sorted(t);
    let smax = svd.sigma[0];
    let smin = svd.sigma[n - 1];
    let unique = smax > 0.0 && smin > RANK_TOL * smax;
    Ok(Projection {
        matrix: &svd.u * svd.v.adjoint(),
        unique,
    })
}

/// Symmetric unitary matrix closest to `t` in Frobenius norm: `U U^T` with
/// `U` from the Takagi factorization of `t + t^T`.
pub fn nearest_symmetric_unitary(t: &CMat) -> Result<CMat> {
    check_square(t, "nearest_symmetric_unitary")?;
    let factor = takagi(&(t + t.transpose()))?;
    Ok(&factor.unitary * factor.unitary.transpose())
}

/// Haar-distributed random unitary (QR of a complex Gaussian matrix with
/// the phases of `R`'s diagonal absorbed into `Q`).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_gaussian(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            col *= d / d.norm();
        }
    }
    q
}

/// Matrix with i.i.d. standard circular complex Gaussian entries
/// (`E|x|² = 1`).
pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

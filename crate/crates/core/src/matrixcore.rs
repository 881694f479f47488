//! Dense complex matrix primitives.
//!
//! Every superoperator in the crate uses column-stacking vectorization:
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. Since nalgebra stores matrices column-major,
//! `vec` is a reshape of the underlying storage.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Numerical thresholds shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative residual bound for algebraic identities.
    pub algebraic: f64,
    /// Multiplier on `eps * dim * sigma_max` for rank and nullspace decisions.
    pub rank_cutoff_factor: f64,
    /// Permitted negative eigenvalue, relative to the largest eigenvalue magnitude.
    pub psd_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: 1e-9,
            rank_cutoff_factor: 64.0,
            psd_slack: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn new(algebraic: f64, rank_cutoff_factor: f64, psd_slack: f64) -> Result<Self> {
        let tol = Self {
            algebraic,
            rank_cutoff_factor,
            psd_slack,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.algebraic) {
            return Err(Error::InvalidTolerance { field: "algebraic" });
        }
        if !positive(self.rank_cutoff_factor) {
            return Err(Error::InvalidTolerance {
                field: "rank_cutoff_factor",
            });
        }
        if !positive(self.psd_slack) {
            return Err(Error::InvalidTolerance { field: "psd_slack" });
        }
        Ok(())
    }

    /// Singular values at or below this are treated as zero.
    pub fn rank_threshold(&self, dim: usize, sigma_max: f64) -> f64 {
        self.rank_cutoff_factor * f64::EPSILON * (dim.max(1) as f64) * sigma_max
    }
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// Matrix unit `|a><b|` in dimension `d`.
pub fn matrix_unit(d: usize, a: usize, b: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(a, b)] = ONE;
    m
}

/// All `d²` matrix units, ordered to match column-stacking (`a + d*b`).
pub fn matrix_units(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    for b in 0..d {
        for a in 0..d {
            out.push(matrix_unit(d, a, b));
        }
    }
    out
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn vec_of(x: &CMat) -> CVec {
    CVec::from_column_slice(x.as_slice())
}

pub fn unvec(v: &[C64], d: usize) -> CMat {
    CMat::from_column_slice(d, d, v)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// Trace norm `||a||_1`.
pub fn trace_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).into_iter().sum()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    a.singular_values().iter().copied().collect()
}

pub fn ensure_square(a: &CMat) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub fn ensure_finite(a: &CMat, what: &str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string() })
    }
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigen(a).0.first().copied().unwrap_or(0.0)
}

/// Eigenvalues of a general square matrix via complex Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    ensure_square(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if let Some(schur) = Schur::try_new(a.clone(), f64::EPSILON, 10_000) {
        return Ok(schur_diagonal(schur));
    }
    // The QR iteration can stall on exactly structured input (for example
    // zero diagonal blocks). A unitary similarity keeps the spectrum and
    // breaks the structure.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4u64);
    for _ in 0..4 {
        let (q, _) = random_matrix(&mut rng, a.nrows(), a.nrows()).qr().unpack();
        let rotated = q.adjoint() * a * &q;
        if let Some(schur) = Schur::try_new(rotated, f64::EPSILON, 10_000) {
            return Ok(schur_diagonal(schur));
        }
    }
    Err(Error::Numerical("Schur iteration did not converge".into()))
}

fn schur_diagonal(schur: Schur<C64, nalgebra::Dyn>) -> Vec<C64> {
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// `exp(a)` by Padé approximation with scaling and squaring.
pub fn matrix_exp(a: &CMat) -> Result<CMat> {
    ensure_square(a)?;
    ensure_finite(a, "matrix_exp input")?;
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    Ok(a.exp())
}

/// Spectral power of a Hermitian PSD matrix. Slightly negative eigenvalues
/// (within `psd_slack`) are clamped to zero.
pub fn psd_power(a: &CMat, p: f64, tol: &Tolerances) -> Result<CMat> {
    let n = ensure_square(a)?;
    ensure_finite(a, "psd_power input")?;
    let herm = hermiticity_residual(a);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if herm > tol.algebraic * scale.max(1.0) {
        return Err(Error::NotHermitian {
            what: "psd_power input".into(),
            residual: herm,
        });
    }
    let (values, vectors) = hermitian_eigen(a);
    let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = tol.psd_slack * lmax;
    let cutoff = tol.rank_threshold(n, lmax);
    let mut scaled = vectors.clone();
    for (k, &lambda) in values.iter().enumerate() {
        if lambda < -floor {
            return Err(Error::NotPositive {
                what: "psd_power input".into(),
                eigenvalue: lambda,
            });
        }
        let lambda = lambda.max(0.0);
        let f = if p < 0.0 {
            if lambda <= cutoff {
                return Err(Error::SingularPower { smallest: lambda });
            }
            lambda.powf(p)
        } else if p == 0.0 {
            1.0
        } else {
            lambda.powf(p)
        };
        scaled.column_mut(k).scale_mut(f);
    }
    Ok(&scaled * vectors.adjoint())
}

/// Orthonormal basis (as columns) of the numerical kernel of `a`.
pub fn nullspace(a: &CMat, tol: &Tolerances) -> CMat {
    let (r, c) = a.shape();
    if c == 0 {
        return CMat::zeros(0, 0);
    }
    if r == 0 {
        return identity(c);
    }
    let svd = full_svd(a);
    let sigma_max = svd.0.iter().fold(0.0f64, |m, &s| m.max(s));
    let threshold = tol.rank_threshold(r.max(c), sigma_max);
    kernel_from_svd(&svd, threshold)
}

/// Kernel with the rank cutoff taken relative to `max(σ_max, scale)`, for
/// matrices that are differences of nearly equal maps and may vanish up to
/// roundoff.
pub fn nullspace_scaled(a: &CMat, scale: f64, tol: &Tolerances) -> CMat {
    let (r, c) = a.shape();
    if c == 0 {
        return CMat::zeros(0, 0);
    }
    if r == 0 {
        return identity(c);
    }
    let svd = full_svd(a);
    let sigma_max = svd.0.iter().fold(0.0f64, |m, &s| m.max(s));
    let threshold = tol.rank_threshold(r.max(c), sigma_max.max(scale));
    kernel_from_svd(&svd, threshold)
}

/// Kernel with an explicit absolute singular-value threshold.
pub fn nullspace_below(a: &CMat, threshold: f64) -> CMat {
    let (r, c) = a.shape();
    if c == 0 {
        return CMat::zeros(0, 0);
    }
    if r == 0 {
        return identity(c);
    }
    kernel_from_svd(&full_svd(a), threshold)
}

fn kernel_from_svd(svd: &(Vec<f64>, CMat), threshold: f64) -> CMat {
    let (sigma, v) = svd;
    let cols: Vec<usize> = (0..v.ncols()).filter(|&k| sigma[k] <= threshold).collect();
    let mut out = CMat::zeros(v.nrows(), cols.len());
    for (j, &k) in cols.iter().enumerate() {
        out.set_column(j, &v.column(k));
    }
    out
}

/// Singular values and the full right-singular basis `V` (columns). Wide
/// matrices are padded with zero rows so that `V` is square.
fn full_svd(a: &CMat) -> (Vec<f64>, CMat) {
    let (r, c) = a.shape();
    let padded = if r < c {
        let mut m = CMat::zeros(c, c);
        m.view_mut((0, 0), (r, c)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V");
    (svd.singular_values.iter().copied().collect(), v_t.adjoint())
}

/// Orthonormal basis of the column space of `a`.
pub fn range_basis(a: &CMat, tol: &Tolerances) -> CMat {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return CMat::zeros(r, 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("requested U");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let threshold = tol.rank_threshold(r.max(c), sigma_max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > threshold)
        .collect();
    let mut out = CMat::zeros(r, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &u.column(k));
    }
    out
}

/// Orthonormal basis of the span of the given column vectors, dropping
/// directions whose singular value falls below `rel * sigma_max`.
pub fn span_basis(cols: &[CVec], n: usize, rel: f64) -> CMat {
    if cols.is_empty() {
        return CMat::zeros(n, 0);
    }
    let mut m = CMat::zeros(n, cols.len());
    for (j, v) in cols.iter().enumerate() {
        m.set_column(j, v);
    }
    let svd = SVD::new(m, true, false);
    let u = svd.u.expect("requested U");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > rel * sigma_max && sigma_max > 0.0)
        .collect();
    let mut out = CMat::zeros(n, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &u.column(k));
    }
    out
}

/// Rank-revealed GNS quotient of a PSD Gram matrix.
#[derive(Debug, Clone)]
pub struct GramQuotient {
    /// `dim × n` map sending the i-th family member to its image in `C^dim`;
    /// `embedding* · embedding` reproduces the Gram matrix on the quotient.
    pub embedding: CMat,
    /// Moore-Penrose inverse of `embedding` (`n × dim`).
    pub pseudo_inverse: CMat,
    pub dim: usize,
}

pub fn gram_quotient(g: &CMat, tol: &Tolerances) -> Result<GramQuotient> {
    ensure_square(g)?;
    ensure_finite(g, "Gram matrix")?;
    let scale = g.norm().max(f64::MIN_POSITIVE);
    let herm = hermiticity_residual(g);
    if herm > tol.algebraic * scale.max(1.0) {
        return Err(Error::NotHermitian {
            what: "Gram matrix".into(),
            residual: herm,
        });
    }
    let (values, vectors) = hermitian_eigen(g);
    gram_quotient_from_eigen(&values, &vectors, tol)
}

/// [`gram_quotient`] from an already computed ascending eigendecomposition.
pub fn gram_quotient_from_eigen(values: &[f64], vectors: &CMat, tol: &Tolerances) -> Result<GramQuotient> {
    let n = values.len();
    let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&lmin) = values.first() {
        if lmin < -tol.psd_slack * lmax.max(1.0) {
            return Err(Error::NotPositive {
                what: "Gram matrix".into(),
                eigenvalue: lmin,
            });
        }
    }
    let cutoff = tol.rank_threshold(n, lmax);
    let keep: Vec<usize> = (0..n).filter(|&k| values[k] > cutoff).collect();
    let dim = keep.len();
    let mut embedding = CMat::zeros(dim, n);
    let mut pseudo_inverse = CMat::zeros(n, dim);
    for (j, &k) in keep.iter().enumerate() {
        let s = values[k].sqrt();
        let col = vectors.column(k);
        for i in 0..n {
            embedding[(j, i)] = col[i].conj() * s;
            pseudo_inverse[(i, j)] = col[i] / s;
        }
    }
    Ok(GramQuotient {
        embedding,
        pseudo_inverse,
        dim,
    })
}

/// Orthogonal projector onto the column span of an orthonormal `basis`.
pub fn projector(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

/// Dense random complex matrix with entries uniform in the unit square.
pub fn random_matrix<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian<R: rand::Rng>(rng: &mut R, d: usize) -> CMat {
    hermitian_part(&random_matrix(rng, d, d))
}

/// Random density matrix `G G* / tr(G G*)`.
pub fn random_density<R: rand::Rng>(rng: &mut R, d: usize) -> CMat {
    let g = random_matrix(rng, d, d);
    let m = &g * g.adjoint();
    let t = m.trace();
    m / t
}

pub fn pauli_x() -> CMat {
    from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMat {
    from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

/// Lowering operator `|0><1|`.
pub fn sigma_minus() -> CMat {
    from_real(2, 2, &[0.0, 1.0, 0.0, 0.0])
}

/// Raising operator `|1><0|`.
pub fn sigma_plus() -> CMat {
    from_real(2, 2, &[0.0, 0.0, 1.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&zeros(3, 3)).unwrap();
        assert!((e - identity(3)).norm() < 1e-15);
    }

    #[test]
    fn exp_of_diagonal_phase() {
        let mut a = zeros(2, 2);
        a[(0, 0)] = c(0.0, std::f64::consts::PI);
        let e = matrix_exp(&a).unwrap();
        let expected = from_real(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!((e - expected).norm() < 1e-14);
    }

    #[test]
    fn exp_half_squared_matches_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 4, 4);
            let full = matrix_exp(&a).unwrap();
            let half = matrix_exp(&(&a * c(0.5, 0.0))).unwrap();
            assert!((&half * &half - &full).norm() <= 1e-10 * full.norm());
        }
    }

    #[test]
    fn exp_inverse_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 4, 4);
            let a = &a * c(10.0 / op_norm(&a), 0.0);
            let prod = matrix_exp(&a).unwrap() * matrix_exp(&(-&a)).unwrap();
            assert!((prod - identity(4)).norm() < 1e-9);
        }
    }

    #[test]
    fn exp_rejects_non_square() {
        assert!(matches!(matrix_exp(&zeros(2, 3)), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn psd_power_examples() {
        let id = identity(3);
        let p = psd_power(&id, -0.5, &tol()).unwrap();
        assert!((p - identity(3)).norm() < 1e-14);

        let a = from_real(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let r = psd_power(&a, 0.5, &tol()).unwrap();
        assert!((r - from_real(2, 2, &[2.0, 0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 4, 4);
        let a = &g * g.adjoint();
        let b = psd_power(&a, 0.5, &tol()).unwrap();
        assert!((&b * &b - &a).norm() <= 1e-9 * a.norm());
    }

    #[test]
    fn psd_power_errors() {
        let neg = from_real(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_power(&neg, 0.5, &tol()), Err(Error::NotPositive { .. })));
        let singular = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            psd_power(&singular, -0.5, &tol()),
            Err(Error::SingularPower { .. })
        ));
        // slightly negative eigenvalue is clamped
        let tiny = from_real(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        assert!(psd_power(&tiny, 0.5, &tol()).is_ok());
    }

    #[test]
    fn nullspace_examples() {
        assert_eq!(nullspace(&identity(3), &tol()).ncols(), 0);
        let p = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let k = nullspace(&p, &tol());
        assert_eq!(k.ncols(), 1);
        assert!((&p * &k).norm() < 1e-14);

        // three vectors in C^2 are dependent
        let vs = from_real(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let g = vs.adjoint() * &vs;
        let k = nullspace(&g, &tol());
        assert!(k.ncols() >= 1);
        assert!((&g * &k).norm() < 1e-12);
        // orthonormal
        assert!((k.adjoint() * &k - identity(k.ncols())).norm() < 1e-12);
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = from_real(1, 3, &[1.0, 1.0, 0.0]);
        let k = nullspace(&a, &tol());
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-14);
    }

    #[test]
    fn gram_quotient_examples() {
        let q = gram_quotient(&identity(3), &tol()).unwrap();
        assert_eq!(q.dim, 3);
        assert!((q.embedding.adjoint() * &q.embedding - identity(3)).norm() < 1e-13);

        let ones = from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let q = gram_quotient(&ones, &tol()).unwrap();
        assert_eq!(q.dim, 1);
        assert!((q.embedding.adjoint() * &q.embedding - ones).norm() < 1e-13);

        let bad = from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(gram_quotient(&bad, &tol()).is_err());
    }

    #[test]
    fn hermitian_eigen_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(&mut rng, 5);
        let (vals, vecs) = hermitian_eigen(&a);
        for (k, &l) in vals.iter().enumerate() {
            let v = vecs.column(k).into_owned();
            assert!((&a * &v - &v * c(l, 0.0)).norm() <= 1e-10 * a.norm());
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn general_eigenvalues_of_rotation() {
        let a = from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn vectorization_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let x = random_matrix(&mut rng, 3, 3);
        let lhs = vec_of(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec_of(&x);
        assert!((lhs - rhs).norm() < 1e-12);
        let units = matrix_units(3);
        for (k, u) in units.iter().enumerate() {
            assert_eq!(vec_of(u)[k], ONE);
        }
    }

    #[test]
    fn tolerances_must_be_positive() {
        assert!(Tolerances::new(0.0, 64.0, 1e-10).is_err());
        assert!(Tolerances::new(1e-9, -1.0, 1e-10).is_err());
        assert!(Tolerances::new(1e-9, 64.0, f64::NAN).is_err());
        assert!(Tolerances::new(1e-9, 64.0, 1e-10).is_ok());
    }
}

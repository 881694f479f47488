//! Linear maps on `d×d` matrices, stored as `d²×d²` matrices acting on
//! column-stacked vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{hermitian_eigen, identity, kron, matrix_units, unvec, vec_of, CMat, Tolerances, ONE};

#[derive(Debug, Clone, PartialEq)]
pub struct SuperOp {
    mat: CMat,
    dim: usize,
}

impl SuperOp {
    pub fn new(mat: CMat, dim: usize) -> Result<Self> {
        let n = dim * dim;
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: mat.nrows().max(mat.ncols()),
            });
        }
        Ok(Self { mat, dim })
    }

    pub(crate) fn from_mat_unchecked(mat: CMat, dim: usize) -> Self {
        debug_assert_eq!(mat.nrows(), dim * dim);
        Self { mat, dim }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: identity(dim * dim),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            mat: CMat::zeros(dim * dim, dim * dim),
            dim,
        }
    }

    /// Tabulates an arbitrary linear map by its action on matrix units.
    pub fn from_fn(dim: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let n = dim * dim;
        let mut mat = CMat::zeros(n, n);
        for (k, unit) in matrix_units(dim).iter().enumerate() {
            mat.set_column(k, &vec_of(&f(unit)));
        }
        Self { mat, dim }
    }

    /// `x ↦ a x b`.
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        let dim = a.nrows();
        Self {
            mat: kron(&b.transpose(), a),
            dim,
        }
    }

    /// `x ↦ a* x a`.
    pub fn conjugation(a: &CMat) -> Self {
        Self::sandwich(&a.adjoint(), a)
    }

    /// `x ↦ a x`.
    pub fn left_mul(a: &CMat) -> Self {
        let d = a.nrows();
        Self::sandwich(a, &identity(d))
    }

    /// `x ↦ x a`.
    pub fn right_mul(a: &CMat) -> Self {
        let d = a.nrows();
        Self::sandwich(&identity(d), a)
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        let v = &self.mat * vec_of(x);
        unvec(v.as_slice(), self.dim)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SuperOp) -> SuperOp {
        Self {
            mat: &self.mat * &other.mat,
            dim: self.dim,
        }
    }

    pub fn add(&self, other: &SuperOp) -> SuperOp {
        Self {
            mat: &self.mat + &other.mat,
            dim: self.dim,
        }
    }

    pub fn sub(&self, other: &SuperOp) -> SuperOp {
        Self {
            mat: &self.mat - &other.mat,
            dim: self.dim,
        }
    }

    pub fn scale(&self, s: f64) -> SuperOp {
        Self {
            mat: &self.mat * crate::matrixcore::c(s, 0.0),
            dim: self.dim,
        }
    }

    /// Frobenius distance between the matrices of two maps.
    pub fn distance(&self, other: &SuperOp) -> f64 {
        (&self.mat - &other.mat).norm()
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    /// Trace-dual map: `tr(predual(ρ) x) = tr(ρ self(x))`.
    pub fn predual(&self) -> SuperOp {
        let t = transpose_permutation(self.dim);
        Self {
            mat: &t * self.mat.transpose() * &t,
            dim: self.dim,
        }
    }

    /// Adjoint for the Hilbert-Schmidt inner product `tr(a* b)`.
    pub fn hs_adjoint(&self) -> SuperOp {
        Self {
            mat: self.mat.adjoint(),
            dim: self.dim,
        }
    }

    /// Choi matrix with block `(a, b)` equal to `self(|a><b|)`.
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let block = self.apply(&crate::matrixcore::matrix_unit(d, a, b));
                out.view_mut((a * d, b * d), (d, d)).copy_from(&block);
            }
        }
        out
    }

    /// Operators `K_j` with `self(x) = Σ K_j* x K_j`, read off the Choi
    /// matrix. Fails if the map is not completely positive.
    pub fn kraus(&self, tol: &Tolerances) -> Result<Vec<CMat>> {
        let choi = self.choi();
        let (values, vectors) = hermitian_eigen(&choi);
        let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(&lmin) = values.first() {
            if lmin < -tol.psd_slack * lmax.max(1.0) {
                return Err(Error::NotPositive {
                    what: "Choi matrix".into(),
                    eigenvalue: lmin,
                });
            }
        }
        let cutoff = tol.rank_threshold(choi.nrows(), lmax);
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > cutoff)
            .map(|(k, &l)| {
                let v = vectors.column(k) * crate::matrixcore::c(l.sqrt(), 0.0);
                unvec(v.as_slice(), self.dim).adjoint()
            })
            .collect())
    }

    /// `|| self(x*) - self(x)* ||` maximized over matrix units.
    pub fn hermiticity_defect(&self) -> f64 {
        matrix_units(self.dim)
            .iter()
            .map(|u| (self.apply(&u.adjoint()) - self.apply(u).adjoint()).norm())
            .fold(0.0, f64::max)
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, n: u64) -> SuperOp {
        let mut result = SuperOp::identity(self.dim);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.compose(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.compose(&base);
            }
        }
        result
    }
}

/// Permutation `P` with `P vec(X) = vec(Xᵀ)`.
pub fn transpose_permutation(d: usize) -> CMat {
    let n = d * d;
    let mut p = CMat::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            // X[i,j] sits at i + d*j; Xᵀ[j,i] = X[i,j] sits at j + d*i
            p[(j + d * i, i + d * j)] = ONE;
        }
    }
    p
}

/// Verdict of the complete-positivity and unitality gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpVerdict {
    pub passed: bool,
    pub unital: bool,
    pub completely_positive: bool,
    /// `||Φ(I) - I||`.
    pub unital_residual: f64,
    pub choi_min_eigenvalue: f64,
    pub choi_norm: f64,
}

pub fn is_cp_unital(s: &SuperOp, tol: &Tolerances) -> CpVerdict {
    let d = s.dim();
    let unital_residual = (s.apply(&identity(d)) - identity(d)).norm();
    let choi = s.choi();
    let (values, _) = hermitian_eigen(&choi);
    let choi_min_eigenvalue = values.first().copied().unwrap_or(0.0);
    let choi_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let unital = unital_residual <= tol.algebraic * (d as f64).sqrt();
    let completely_positive = choi_min_eigenvalue >= -tol.psd_slack * choi_norm.max(1.0);
    CpVerdict {
        passed: unital && completely_positive,
        unital,
        completely_positive,
        unital_residual,
        choi_min_eigenvalue,
        choi_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::{c, random_matrix, trace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn predual_satisfies_trace_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let s = SuperOp::sandwich(&a, &b).add(&SuperOp::left_mul(&a));
        let pre = s.predual();
        for rho in matrix_units(3) {
            for x in matrix_units(3) {
                let lhs = trace(&(pre.apply(&rho) * &x));
                let rhs = trace(&(&rho * s.apply(&x)));
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn predual_of_identity_and_conjugation() {
        assert_eq!(SuperOp::identity(2).predual(), SuperOp::identity(2));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_matrix(&mut rng, 2, 2);
        let u = crate::matrixcore::matrix_exp(&((&g - g.adjoint()) * c(0.5, 0.0))).unwrap();
        let heis = SuperOp::conjugation(&u);
        let schr = SuperOp::sandwich(&u, &u.adjoint());
        assert!(heis.predual().distance(&schr) < 1e-12);
    }

    #[test]
    fn identity_map_choi_is_maximally_entangled() {
        let v = is_cp_unital(&SuperOp::identity(2), &Tolerances::default());
        assert!(v.passed);
        let choi = SuperOp::identity(2).choi();
        // d * |Ω><Ω| has eigenvalues {2, 0, 0, 0}
        let (vals, _) = hermitian_eigen(&choi);
        assert!((vals[3] - 2.0).abs() < 1e-12);
        assert!(vals[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let t = SuperOp::from_fn(2, |x| x.transpose());
        let v = is_cp_unital(&t, &Tolerances::default());
        assert!(v.unital);
        assert!(!v.completely_positive);
        assert!((v.choi_min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kraus_reconstructs_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k1 = random_matrix(&mut rng, 3, 3);
        let k2 = random_matrix(&mut rng, 3, 3);
        let s = SuperOp::conjugation(&k1).add(&SuperOp::conjugation(&k2));
        let ks = s.kraus(&Tolerances::default()).unwrap();
        assert_eq!(ks.len(), 2);
        let rebuilt = ks
            .iter()
            .fold(SuperOp::zero(3), |acc, k| acc.add(&SuperOp::conjugation(k)));
        assert!(rebuilt.distance(&s) < 1e-10);
    }

    #[test]
    fn pow_matches_repeated_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_matrix(&mut rng, 2, 2) * c(0.5, 0.0);
        let s = SuperOp::conjugation(&a);
        let p5 = s.compose(&s).compose(&s).compose(&s).compose(&s);
        assert!(s.pow(5).distance(&p5) < 1e-12 * p5.norm().max(1.0));
        assert_eq!(s.pow(0), SuperOp::identity(2));
    }
}

//! Unital *-subalgebras of `M_d`: generated algebras, commutants,
//! state-preserving conditional expectations and block structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{
    c, hermitian_eigen, hermitian_part, identity, kron, matrix_exp, nullspace_scaled, psd_power, random_matrix,
    span_basis, unvec, vec_of, CMat, CVec, Tolerances, I,
};
use crate::states::DensityState;
use crate::superop::{is_cp_unital, SuperOp};

/// A subspace of `M_d` closed under products and adjoints, stored as a
/// Hilbert–Schmidt orthonormal basis (columns of a `d² × m` matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct StarSubalgebra {
    dim: usize,
    basis: CMat,
}

/// How far a span is from being a unital *-algebra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureResiduals {
    pub identity: f64,
    pub adjoint: f64,
    pub product: f64,
}

impl ClosureResiduals {
    pub fn max(&self) -> f64 {
        self.identity.max(self.adjoint).max(self.product)
    }
}

/// Relative singular-value cutoff used when orthonormalizing spans.
const SPAN_REL: f64 = 1e-9;

impl StarSubalgebra {
    /// Orthonormalizes an arbitrary spanning set of vectorized matrices.
    /// No closure is imposed; see [`StarSubalgebra::closure_residuals`].
    pub fn from_span(dim: usize, vectors: &[CVec]) -> Self {
        Self {
            dim,
            basis: span_basis(vectors, dim * dim, SPAN_REL),
        }
    }

    pub fn from_matrices(dim: usize, mats: &[CMat]) -> Self {
        let vecs: Vec<CVec> = mats.iter().map(vec_of).collect();
        Self::from_span(dim, &vecs)
    }

    /// Wraps columns already known to be orthonormal.
    pub(crate) fn from_orthonormal(dim: usize, basis: CMat) -> Self {
        Self { dim, basis }
    }

    pub fn scalars(dim: usize) -> Self {
        Self::from_matrices(dim, &[identity(dim)])
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            basis: identity(dim * dim),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the subalgebra as a vector space.
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis_matrix(&self) -> &CMat {
        &self.basis
    }

    pub fn basis(&self) -> Vec<CMat> {
        (0..self.basis.ncols())
            .map(|k| unvec(self.basis.column(k).clone_owned().as_slice(), self.dim))
            .collect()
    }

    pub fn is_scalar(&self) -> bool {
        self.dimension() == 1
    }

    /// HS-orthogonal projector onto the span, as a superoperator.
    pub fn projector(&self) -> SuperOp {
        SuperOp::from_mat_unchecked(&self.basis * self.basis.adjoint(), self.dim)
    }

    /// `||x - P x||` for the HS-orthogonal projection `P`.
    pub fn membership_residual(&self, x: &CMat) -> f64 {
        let v = vec_of(x);
        let proj = &self.basis * (self.basis.adjoint() * &v);
        (v - proj).norm()
    }

    pub fn closure_residuals(&self) -> ClosureResiduals {
        let basis = self.basis();
        let identity_res = self.membership_residual(&identity(self.dim)) / (self.dim as f64).sqrt();
        let adjoint = basis
            .iter()
            .map(|b| self.membership_residual(&b.adjoint()))
            .fold(0.0, f64::max);
        let mut product = 0.0f64;
        for a in &basis {
            for b in &basis {
                product = product.max(self.membership_residual(&(a * b)));
            }
        }
        ClosureResiduals {
            identity: identity_res,
            adjoint,
            product,
        }
    }

    /// `max_k ||(I - P_other) b_k||` over this basis: zero iff `self ⊆ other`.
    pub fn containment_residual(&self, other: &StarSubalgebra) -> f64 {
        let outside = &self.basis - &other.basis * (other.basis.adjoint() * &self.basis);
        (0..outside.ncols())
            .map(|k| outside.column(k).norm())
            .fold(0.0, f64::max)
    }

    /// Mutual containment residual; infinite when dimensions differ.
    pub fn equality_residual(&self, other: &StarSubalgebra) -> f64 {
        if self.dimension() != other.dimension() {
            return f64::INFINITY;
        }
        self.containment_residual(other).max(other.containment_residual(self))
    }

    /// Intersection of two subspaces.
    pub fn intersect(&self, other: &StarSubalgebra, tol: &Tolerances) -> StarSubalgebra {
        let n = self.dim * self.dim;
        let mut stacked = CMat::zeros(2 * n, n);
        let id = identity(n);
        stacked
            .view_mut((0, 0), (n, n))
            .copy_from(&(&id - &self.basis * self.basis.adjoint()));
        stacked
            .view_mut((n, 0), (n, n))
            .copy_from(&(&id - &other.basis * other.basis.adjoint()));
        Self {
            dim: self.dim,
            basis: nullspace_scaled(&stacked, 1.0, tol),
        }
    }

    /// A Hermitian element that is generic for this algebra (fixed seed).
    pub fn generic_hermitian(&self, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_matrix(&mut rng, self.dimension(), 1);
        let v = &self.basis * coeffs;
        hermitian_part(&unvec(v.as_slice(), self.dim))
    }
}

/// Smallest unital *-algebra containing the generators.
pub fn generated_algebra(dim: usize, gens: &[CMat]) -> StarSubalgebra {
    let mut mats = vec![identity(dim)];
    for g in gens {
        mats.push(g.clone());
        mats.push(g.adjoint());
    }
    let mut alg = StarSubalgebra::from_matrices(dim, &mats);
    loop {
        let basis = alg.basis();
        let mut vecs: Vec<CVec> = basis.iter().map(vec_of).collect();
        for a in &basis {
            for b in &basis {
                vecs.push(vec_of(&(a * b)));
            }
        }
        let next = StarSubalgebra::from_span(dim, &vecs);
        if next.dimension() == alg.dimension() {
            return next;
        }
        alg = next;
    }
}

/// `{x : x b = b x}` for every basis element `b`.
pub fn commutant(alg: &StarSubalgebra, tol: &Tolerances) -> StarSubalgebra {
    let d = alg.ambient_dim();
    let basis = alg.basis();
    let n = d * d;
    let mut stacked = CMat::zeros(n * basis.len().max(1), n);
    for (k, b) in basis.iter().enumerate() {
        let comm = SuperOp::left_mul(b).sub(&SuperOp::right_mul(b));
        stacked.view_mut((k * n, 0), (n, n)).copy_from(comm.mat());
    }
    StarSubalgebra::from_orthonormal(d, nullspace_scaled(&stacked, 1.0, tol))
}

/// `{x : [x, g] = 0}` for each listed operator (no adjoints added).
pub fn commuting_set(dim: usize, ops: &[CMat], tol: &Tolerances) -> StarSubalgebra {
    if ops.is_empty() {
        return StarSubalgebra::full(dim);
    }
    let n = dim * dim;
    let mut stacked = CMat::zeros(n * ops.len(), n);
    for (k, g) in ops.iter().enumerate() {
        let comm = SuperOp::left_mul(g).sub(&SuperOp::right_mul(g));
        stacked.view_mut((k * n, 0), (n, n)).copy_from(comm.mat());
    }
    StarSubalgebra::from_orthonormal(dim, nullspace_scaled(&stacked, 1.0, tol))
}

/// Times at which modular invariance `ρ^{it} A ρ^{-it} ⊆ A` is sampled.
const MODULAR_TIMES: [f64; 3] = [0.37, 1.0, 2.9];

/// Largest membership residual of `ρ^{it} b ρ^{-it}` and `ρ b ρ^{-1}` over
/// the basis.
pub fn modular_invariance_residual(alg: &StarSubalgebra, state: &DensityState, tol: &Tolerances) -> Result<f64> {
    state.require_faithful()?;
    let rho = state.rho();
    let d = alg.ambient_dim();
    let rho_inv = psd_power(rho, -1.0, tol)?;
    let (values, vectors) = hermitian_eigen(rho);
    let log_rho = {
        let mut m = CMat::zeros(d, d);
        for (k, &l) in values.iter().enumerate() {
            let v = vectors.column(k);
            m += v * v.adjoint() * c(l.ln(), 0.0);
        }
        m
    };
    let mut worst = 0.0f64;
    let basis = alg.basis();
    for b in &basis {
        worst = worst.max(alg.membership_residual(&(rho * b * &rho_inv)) / op_scale(rho, &rho_inv));
    }
    for t in MODULAR_TIMES {
        let u = matrix_exp(&(&log_rho * (I * t)))?;
        for b in &basis {
            worst = worst.max(alg.membership_residual(&(&u * b * u.adjoint())));
        }
    }
    Ok(worst)
}

fn op_scale(a: &CMat, b: &CMat) -> f64 {
    (crate::matrixcore::op_norm(a) * crate::matrixcore::op_norm(b)).max(1.0)
}

/// Checks returned alongside a conditional expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationChecks {
    pub idempotence: f64,
    pub unital: f64,
    pub state_preservation: f64,
    pub choi_min_eigenvalue: f64,
    pub modular_invariance: f64,
}

/// The `φ_0`-preserving conditional expectation onto `alg`, realized as the
/// orthogonal projection for `<a, b> = tr(ρ a* b)`.
pub fn conditional_expectation(
    alg: &StarSubalgebra,
    state: &DensityState,
    tol: &Tolerances,
) -> Result<(SuperOp, ExpectationChecks)> {
    state.require_faithful()?;
    let d = alg.ambient_dim();
    let modular = modular_invariance_residual(alg, state, tol)?;
    if modular > 1e3 * tol.algebraic {
        return Err(Error::ModularInvariance { residual: modular });
    }
    let b = alg.basis_matrix();
    // x ↦ x ρ realizes the GNS metric on vectorized matrices
    let w = kron(&state.rho().transpose(), &identity(d));
    let gram = b.adjoint() * &w * b;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular GNS Gram on subalgebra".into()))?;
    let e = SuperOp::from_mat_unchecked(b * gram_inv * b.adjoint() * &w, d);

    let idempotence = e.compose(&e).distance(&e);
    let unital = (e.apply(&identity(d)) - identity(d)).norm();
    let mut state_preservation = 0.0f64;
    for x in crate::matrixcore::matrix_units(d) {
        let lhs = state.expect(&e.apply(&x));
        let rhs = state.expect(&x);
        state_preservation = state_preservation.max((lhs - rhs).norm());
    }
    let verdict = is_cp_unital(&e, tol);
    let checks = ExpectationChecks {
        idempotence,
        unital,
        state_preservation,
        choi_min_eigenvalue: verdict.choi_min_eigenvalue,
        modular_invariance: modular,
    };
    Ok((e, checks))
}

/// One Wedderburn summand `M_n ⊗ I_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub size: usize,
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct BlockStructure {
    pub blocks: Vec<Block>,
    /// Unitary whose columns are ordered block by block, `(k, j)` with the
    /// multiplicity index `j` running fastest.
    pub unitary: CMat,
    /// Largest deviation of `W* b W` from the block form over the basis.
    pub residual: f64,
}

/// Artin–Wedderburn decomposition of a finite-dimensional *-algebra.
pub fn block_structure(alg: &StarSubalgebra, tol: &Tolerances) -> Result<BlockStructure> {
    let d = alg.ambient_dim();
    let center = alg.intersect(&commutant(alg, tol), tol);
    let z = center.generic_hermitian(0xb10c);
    let central = eigen_clusters(&z);
    let mut blocks = Vec::new();
    let mut columns: Vec<CVec> = Vec::new();
    for q_basis in central {
        let q = &q_basis * q_basis.adjoint();
        let rank = q_basis.ncols();
        // the corner q·A is a full matrix algebra tensored with I_m
        let corner: Vec<CMat> = alg.basis().iter().map(|b| b * &q).collect();
        let corner_alg = StarSubalgebra::from_matrices(d, &corner);
        let n2 = corner_alg.dimension();
        let n = (n2 as f64).sqrt().round() as usize;
        if n * n != n2 || n == 0 || rank % n != 0 {
            return Err(Error::Numerical(format!(
                "corner of dimension {n2} and rank {rank} is not a matrix block"
            )));
        }
        let m = rank / n;
        // minimal projections of the corner: eigenspaces of a generic element
        let h = corner_alg.generic_hermitian(0xb10c + blocks.len() as u64);
        let h_restricted = q_basis.adjoint() * &h * &q_basis;
        let minimal: Vec<CMat> = eigen_clusters(&h_restricted)
            .into_iter()
            .map(|v| &q_basis * v)
            .collect();
        if minimal.len() != n || minimal.iter().any(|e| e.ncols() != m) {
            return Err(Error::Numerical("minimal projections have unexpected ranks".into()));
        }
        let e0 = &minimal[0];
        let generic = unvec(
            (corner_alg.basis_matrix() * random_matrix(&mut ChaCha8Rng::seed_from_u64(0x5eed), n2, 1)).as_slice(),
            d,
        );
        for (k, ek) in minimal.iter().enumerate() {
            // partial isometry from range(e0) onto range(ek) inside the algebra
            let map = if k == 0 {
                e0.clone()
            } else {
                let v = ek * ek.adjoint() * &generic * e0 * e0.adjoint();
                let vv = v.adjoint() * &v;
                let scale = (vv.trace().re / m as f64).sqrt();
                if scale < 1e-8 {
                    return Err(Error::Numerical(
                        "generic element failed to connect minimal projections".into(),
                    ));
                }
                v * e0 / c(scale, 0.0)
            };
            for j in 0..m {
                columns.push(map.column(j).clone_owned());
            }
        }
        blocks.push(Block {
            size: n,
            multiplicity: m,
        });
    }
    let mut unitary = CMat::zeros(d, columns.len());
    for (j, col) in columns.iter().enumerate() {
        unitary.set_column(j, col);
    }
    if unitary.ncols() != d {
        return Err(Error::Numerical("blocks do not exhaust the space".into()));
    }
    let residual = block_form_residual(alg, &unitary, &blocks);
    Ok(BlockStructure {
        blocks,
        unitary,
        residual,
    })
}

/// Orthonormal eigenvector groups of a Hermitian matrix, clustered by value.
fn eigen_clusters(h: &CMat) -> Vec<CMat> {
    let (values, vectors) = hermitian_eigen(h);
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..values.len() {
        match groups.last_mut() {
            Some(g) if (values[k] - values[*g.last().unwrap()]).abs() <= 1e-7 * scale => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let mut m = CMat::zeros(h.nrows(), g.len());
            for (j, &k) in g.iter().enumerate() {
                m.set_column(j, &vectors.column(k));
            }
            m
        })
        .collect()
}

fn block_form_residual(alg: &StarSubalgebra, w: &CMat, blocks: &[Block]) -> f64 {
    let d = w.nrows();
    let unitarity = (w.adjoint() * w - identity(d)).norm();
    let mut worst = unitarity;
    for b in alg.basis() {
        let t = w.adjoint() * &b * w;
        let mut expected = CMat::zeros(d, d);
        let mut offset = 0;
        for blk in blocks {
            let size = blk.size * blk.multiplicity;
            // average over the multiplicity to extract the M_n factor
            let sub = t.view((offset, offset), (size, size)).clone_owned();
            let mut small = CMat::zeros(blk.size, blk.size);
            for a in 0..blk.size {
                for bb in 0..blk.size {
                    let mut acc = c(0.0, 0.0);
                    for j in 0..blk.multiplicity {
                        acc += sub[(a * blk.multiplicity + j, bb * blk.multiplicity + j)];
                    }
                    small[(a, bb)] = acc / c(blk.multiplicity as f64, 0.0);
                }
            }
            let rebuilt = kron(&small, &identity(blk.multiplicity));
            expected.view_mut((offset, offset), (size, size)).copy_from(&rebuilt);
            offset += size;
        }
        worst = worst.max((t - expected).norm());
    }
    worst
}

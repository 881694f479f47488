//! Modular data of a faithful state, the KMS (Petz) adjoint semigroup,
//! detailed balance and the `J`-twisted correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{c, matrix_units, psd_power, vec_of, CMat, Tolerances, C64, I};
use crate::semigroup::{Kind, Qms};
use crate::states::DensityState;
use crate::superop::{is_cp_unital, SuperOp};

/// Placement of the analytically continued modular group in the KMS
/// duality: `σ_{1/2}(x) = ρ^{-1/2} x ρ^{1/2}` and
/// `σ_{-1/2}(y) = ρ^{1/2} y ρ^{-1/2}`.
pub const MODULAR_SIGN_CONVENTION: &str = "sigma_half(x) = rho^-1/2 x rho^1/2";

/// Tomita–Takesaki data of a faithful state on the Hilbert–Schmidt GNS
/// space (cyclic vector `ρ^{1/2}`).
#[derive(Debug, Clone)]
pub struct ModularData {
    state: DensityState,
    rho_half: CMat,
    rho_half_inv: CMat,
    rho_inv: CMat,
    delta: SuperOp,
}

impl ModularData {
    pub fn state(&self) -> &DensityState {
        &self.state
    }

    pub fn rho_half(&self) -> &CMat {
        &self.rho_half
    }

    pub fn rho_half_inv(&self) -> &CMat {
        &self.rho_half_inv
    }

    /// `Δ: a ↦ ρ a ρ^{-1}`.
    pub fn delta(&self) -> &SuperOp {
        &self.delta
    }

    /// `J: a ↦ a*` (anti-linear).
    pub fn apply_j(&self, a: &CMat) -> CMat {
        a.adjoint()
    }

    /// `Δ^{1/2}: a ↦ ρ^{1/2} a ρ^{-1/2}`.
    pub fn delta_half(&self, a: &CMat) -> CMat {
        &self.rho_half * a * &self.rho_half_inv
    }

    /// `σ_{1/2}` in the convention pinned by [`MODULAR_SIGN_CONVENTION`].
    pub fn sigma_half(&self, x: &CMat) -> CMat {
        &self.rho_half_inv * x * &self.rho_half
    }

    pub fn sigma_minus_half(&self, x: &CMat) -> CMat {
        &self.rho_half * x * &self.rho_half_inv
    }

    /// `max ||J Δ^{1/2}(x ρ^{1/2}) - x* ρ^{1/2}||` over matrix units.
    pub fn tomita_residual(&self) -> f64 {
        let d = self.state.dim();
        matrix_units(d)
            .iter()
            .map(|x| {
                let s = self.apply_j(&self.delta_half(&(x * &self.rho_half)));
                (s - x.adjoint() * &self.rho_half).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `||J²ξ - ξ||` and the anti-linearity defect `||J(iξ) + iJ(ξ)||`
    /// over matrix units, plus `||Δ ρ^{1/2} - ρ^{1/2}||` and `||Jρ^{1/2} - ρ^{1/2}||`.
    pub fn structure_residual(&self) -> f64 {
        let d = self.state.dim();
        let mut worst = 0.0f64;
        for u in matrix_units(d) {
            worst = worst.max((self.apply_j(&self.apply_j(&u)) - &u).norm());
            let iu = &u * I;
            worst = worst.max((self.apply_j(&iu) + self.apply_j(&u) * I).norm());
        }
        worst = worst.max((self.delta.apply(&self.rho_half) - &self.rho_half).norm());
        worst.max((self.apply_j(&self.rho_half) - &self.rho_half).norm())
    }

    /// `||Δ^{-1}||`-type scale used to judge residuals.
    pub fn condition(&self) -> f64 {
        crate::matrixcore::op_norm(&self.rho_inv)
    }
}

pub fn modular_data(state: &DensityState, tol: &Tolerances) -> Result<ModularData> {
    state.require_faithful()?;
    let rho = state.rho();
    let rho_half = psd_power(rho, 0.5, tol)?;
    let rho_half_inv = psd_power(rho, -0.5, tol)?;
    let rho_inv = psd_power(rho, -1.0, tol)?;
    let delta = SuperOp::sandwich(rho, &rho_inv);
    Ok(ModularData {
        state: state.clone(),
        rho_half,
        rho_half_inv,
        rho_inv,
        delta,
    })
}

/// `x ↦ ρ^{-1/2} M_*(ρ^{1/2} x ρ^{1/2}) ρ^{-1/2}` for the generator or step
/// map `M`.
fn kms_dual(map: &SuperOp, modular: &ModularData) -> SuperOp {
    let inner = SuperOp::sandwich(&modular.rho_half, &modular.rho_half);
    let outer = SuperOp::sandwich(&modular.rho_half_inv, &modular.rho_half_inv);
    outer.compose(&map.predual()).compose(&inner)
}

/// `max |φ_0(σ_{1/2}(x) τ_t(y)) - φ_0(τ̃_t(x) σ_{-1/2}(y))|` over matrix
/// units at time `t`.
pub fn kms_residual(qms: &Qms, adjoint: &Qms, modular: &ModularData, t: f64) -> Result<f64> {
    let tau = qms.evolve(t)?;
    let tilde = adjoint.evolve(t)?;
    let state = modular.state();
    let units = matrix_units(qms.dim());
    let mut worst = 0.0f64;
    for x in &units {
        let lhs_left = modular.sigma_half(x);
        let rhs_left = tilde.apply(x);
        for y in &units {
            let lhs = state.expect(&(&lhs_left * tau.apply(y)));
            let rhs = state.expect(&(&rhs_left * modular.sigma_minus_half(y)));
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

/// Witnesses attached to a KMS adjoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointChecks {
    /// Largest duality residual over matrix units and sampled times.
    pub kms_residual: f64,
    pub unital_residual: f64,
    pub choi_min_eigenvalue: f64,
    pub invariance_residual: f64,
    /// `||(τ̃)~ - τ||` on the defining maps.
    pub involution_residual: f64,
}

/// The KMS adjoint semigroup of `qms` with respect to a faithful invariant
/// state.
pub fn kms_adjoint(qms: &Qms, state: &DensityState, tol: &Tolerances) -> Result<(Qms, ModularData, AdjointChecks)> {
    state.require_faithful()?;
    state.require_invariant(qms, tol)?;
    let modular = modular_data(state, tol)?;
    let dual = kms_dual(qms.defining_map(), &modular);
    let adjoint = match qms.kind() {
        Kind::Continuous => Qms::continuous(dual, tol),
        Kind::Discrete => Qms::discrete(dual, tol),
    }?;
    let mut kms = 0.0f64;
    let times = [qms.admissible_time(0.5), 1.0, 2.0];
    for t in times {
        kms = kms.max(kms_residual(qms, &adjoint, &modular, t)?);
    }
    let step = adjoint.evolve(1.0)?;
    let verdict = is_cp_unital(&step, tol);
    let back = kms_dual(adjoint.defining_map(), &modular);
    let checks = AdjointChecks {
        kms_residual: kms,
        unital_residual: verdict.unital_residual,
        choi_min_eigenvalue: verdict.choi_min_eigenvalue,
        invariance_residual: state.invariance_residual(&adjoint),
        involution_residual: back.distance(qms.defining_map()),
    };
    let scale = qms.defining_map().norm().max(1.0) * modular.condition();
    if checks.kms_residual > 1e-8 * scale.max(1.0) {
        return Err(Error::AdjointMismatch {
            residual: checks.kms_residual,
        });
    }
    Ok((adjoint, modular, checks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedBalance {
    pub is_normal: bool,
    /// `max ||τ_t τ̃_s - τ̃_s τ_t||` over sampled pairs.
    pub commutator_residual: f64,
    /// Least-squares Hamiltonian part `K` (traceless Hermitian), stored as
    /// row-major `[re, im]` pairs; absent for discrete semigroups.
    pub hamiltonian_part: Option<Vec<Vec<[f64; 2]>>>,
    /// `||(ℒ̃ - ℒ) - 2i[K, ·]||`, or `||Φ̃ - Φ||` for discrete semigroups.
    pub residual: f64,
    pub detailed_balance: bool,
}

/// Orthonormal basis of traceless Hermitian `d × d` matrices.
pub fn traceless_hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = Vec::new();
    let s = 1.0 / 2f64.sqrt();
    for a in 0..d {
        for b in (a + 1)..d {
            let mut x = CMat::zeros(d, d);
            x[(a, b)] = c(s, 0.0);
            x[(b, a)] = c(s, 0.0);
            out.push(x);
            let mut y = CMat::zeros(d, d);
            y[(a, b)] = c(0.0, -s);
            y[(b, a)] = c(0.0, s);
            out.push(y);
        }
    }
    for k in 1..d {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut z = CMat::zeros(d, d);
        for a in 0..k {
            z[(a, a)] = c(1.0 / norm, 0.0);
        }
        z[(k, k)] = c(-(k as f64) / norm, 0.0);
        out.push(z);
    }
    out
}

pub(crate) fn to_pairs(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub(crate) fn from_pairs(rows: &[Vec<[f64; 2]>]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, |row| row.len());
    CMat::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1]))
}

/// Least-squares `K` for `ℒ̃ - ℒ ≈ 2i[K, ·]` over traceless Hermitian `K`.
pub fn hamiltonian_part(difference: &SuperOp) -> (CMat, f64) {
    let d = difference.dim();
    let basis = traceless_hermitian_basis(d);
    let n4 = d.pow(4);
    let mut a = DMatrix::<f64>::zeros(2 * n4, basis.len());
    for (j, b) in basis.iter().enumerate() {
        let col = SuperOp::left_mul(b).sub(&SuperOp::right_mul(b)).into_mat() * c(0.0, 2.0);
        for (k, z) in col.iter().enumerate() {
            a[(k, j)] = z.re;
            a[(n4 + k, j)] = z.im;
        }
    }
    let mut rhs = DVector::<f64>::zeros(2 * n4);
    for (k, z) in difference.mat().iter().enumerate() {
        rhs[k] = z.re;
        rhs[n4 + k] = z.im;
    }
    if basis.is_empty() {
        return (CMat::zeros(d, d), rhs.norm());
    }
    let svd = a.clone().svd(true, true);
    let coeffs = svd.solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(basis.len()));
    let residual = (&a * &coeffs - &rhs).norm();
    let k = basis
        .iter()
        .zip(coeffs.iter())
        .fold(CMat::zeros(d, d), |acc, (b, &w)| acc + b * c(w, 0.0));
    (k, residual)
}

pub fn detailed_balance_decomposition(qms: &Qms, adjoint: &Qms) -> Result<DetailedBalance> {
    let times: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&t| qms.admissible_time(t)).collect();
    let mut commutator_residual = 0.0f64;
    for &t in &times {
        let tau = qms.evolve(t)?;
        for &s in &times {
            let tilde = adjoint.evolve(s)?;
            commutator_residual = commutator_residual.max(tau.compose(&tilde).distance(&tilde.compose(&tau)));
        }
    }
    let scale = qms.defining_map().norm().max(1.0);
    let is_normal = commutator_residual <= 1e-8 * scale;
    let difference = adjoint.defining_map().sub(qms.defining_map());
    let (hamiltonian_part, residual) = match qms.kind() {
        Kind::Continuous => {
            let (k, residual) = hamiltonian_part(&difference);
            (Some(to_pairs(&k)), residual)
        }
        Kind::Discrete => (None, difference.norm()),
    };
    let detailed_balance = is_normal && residual <= 1e-8 * scale.max(1.0);
    Ok(DetailedBalance {
        is_normal,
        commutator_residual,
        hamiltonian_part,
        residual,
        detailed_balance,
    })
}

/// `φ_0(J τ_t(x) J τ_t(y)) = tr(ρ^{1/2} τ_t(y) ρ^{1/2} τ_t(x)*)`.
pub fn j_correlation(qms: &Qms, modular: &ModularData, x: &CMat, y: &CMat, t: f64) -> Result<C64> {
    let tau = qms.evolve(t)?;
    let tx = tau.apply(x);
    let ty = tau.apply(y);
    let r = modular.rho_half();
    Ok((r * ty * r * tx.adjoint()).trace())
}

/// The same quantity through the GNS pairing: `<ξ, R(a*) L(b) ξ>` with
/// `ξ = vec(ρ^{1/2})`, `L` left and `R` right multiplication.
pub fn j_correlation_gns(qms: &Qms, modular: &ModularData, x: &CMat, y: &CMat, t: f64) -> Result<C64> {
    let tau = qms.evolve(t)?;
    let a = tau.apply(x);
    let b = tau.apply(y);
    let xi = vec_of(modular.rho_half());
    let op = SuperOp::right_mul(&a.adjoint()).compose(&SuperOp::left_mul(&b));
    Ok(xi.dotc(&(op.mat() * &xi)))
}

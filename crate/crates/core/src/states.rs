//! Invariant states, support projections, sub-harmonic projections, their
//! long-time limits and the reachability tower.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{
    c, ensure_square, hermitian_eigen, hermitian_part, hermiticity_residual, identity, min_eigenvalue,
    nullspace_scaled, op_norm, span_basis, unvec, CMat, CVec, Tolerances,
};
use crate::semigroup::{stationary_projection, Kind, OpenSystemModel, Qms};

/// A density matrix together with its support projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    rho: CMat,
    support: CMat,
    faithful: bool,
}

impl DensityState {
    pub fn new(rho: CMat, tol: &Tolerances) -> Result<Self> {
        let d = ensure_square(&rho)?;
        crate::matrixcore::ensure_finite(&rho, "density matrix")?;
        let herm = hermiticity_residual(&rho);
        if herm > tol.algebraic {
            return Err(Error::NotHermitian {
                what: "density matrix".into(),
                residual: herm,
            });
        }
        let rho = hermitian_part(&rho);
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > 1e-12 * (d as f64).max(1.0) {
            return Err(Error::InvalidArgument(format!("density matrix has trace {tr}")));
        }
        let (values, vectors) = hermitian_eigen(&rho);
        let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if values[0] < -tol.psd_slack * lmax.max(1.0) {
            return Err(Error::NotPositive {
                what: "density matrix".into(),
                eigenvalue: values[0],
            });
        }
        let cutoff = support_cutoff(d, lmax, tol);
        let mut support = CMat::zeros(d, d);
        let mut rank = 0;
        for (k, &l) in values.iter().enumerate() {
            if l > cutoff {
                let v = vectors.column(k);
                support += v * v.adjoint();
                rank += 1;
            }
        }
        Ok(Self {
            rho,
            support,
            faithful: rank == d,
        })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            rho: identity(d) * c(1.0 / d as f64, 0.0),
            support: identity(d),
            faithful: true,
        }
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn support(&self) -> &CMat {
        &self.support
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    /// `φ_0(x) = tr(ρ x)`.
    pub fn expect(&self, x: &CMat) -> crate::matrixcore::C64 {
        (&self.rho * x).trace()
    }

    /// Smallest eigenvalue of `ρ` (useful as a faithfulness witness).
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho)
    }

    /// `||σ(ρ) - ρ||` for the predual of the semigroup's defining map.
    pub fn invariance_residual(&self, qms: &Qms) -> f64 {
        let pre = qms.defining_map().predual();
        let out = pre.apply(&self.rho);
        match qms.kind() {
            Kind::Continuous => out.norm(),
            Kind::Discrete => (out - &self.rho).norm(),
        }
    }

    pub fn require_faithful(&self) -> Result<()> {
        if self.faithful {
            Ok(())
        } else {
            Err(Error::NotFaithful {
                smallest: self.min_eigenvalue(),
            })
        }
    }

    pub fn require_invariant(&self, qms: &Qms, tol: &Tolerances) -> Result<()> {
        let residual = self.invariance_residual(qms);
        if residual > tol.algebraic * qms.defining_map().norm().max(1.0) {
            return Err(Error::NotInvariant { residual });
        }
        Ok(())
    }
}

/// Eigenvalues of a state at or below this count as outside its support.
/// The rank cutoff is floored by the PSD slack so that rounding noise in a
/// numerically computed invariant state does not inflate its support.
fn support_cutoff(d: usize, lmax: f64, tol: &Tolerances) -> f64 {
    tol.rank_threshold(d, lmax).max(tol.psd_slack * lmax)
}

/// `p = p* = p²` residual.
pub fn projection_residual(p: &CMat) -> f64 {
    hermiticity_residual(p).max((p * p - p).norm())
}

pub fn check_projection(p: &CMat, what: &str, tol: &Tolerances) -> Result<()> {
    ensure_square(p)?;
    let residual = projection_residual(p);
    if residual > tol.algebraic * (p.nrows() as f64).sqrt().max(1.0) {
        return Err(Error::NotProjection {
            what: what.into(),
            residual,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct InvariantStates {
    /// Basis of the fixed space of the predual.
    pub kernel_basis: Vec<CMat>,
    /// Stationary projection of `I/d`, renormalized.
    pub canonical: DensityState,
}

pub fn invariant_states(qms: &Qms, tol: &Tolerances) -> Result<InvariantStates> {
    let d = qms.dim();
    let pre = qms.defining_map().predual();
    let m = match qms.kind() {
        Kind::Continuous => pre.mat().clone(),
        Kind::Discrete => pre.mat() - identity(d * d),
    };
    let scale = op_norm(qms.defining_map().mat()).max(1.0);
    let kernel = nullspace_scaled(&m, scale, tol);
    let kernel_basis = (0..kernel.ncols())
        .map(|k| unvec(kernel.column(k).clone_owned().as_slice(), d))
        .collect();
    let projection = stationary_projection(qms, tol)?.predual();
    let raw = hermitian_part(&projection.apply(&(identity(d) * c(1.0 / d as f64, 0.0))));
    let (values, vectors) = hermitian_eigen(&raw);
    let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if values[0] < -tol.psd_slack.max(1e3 * f64::EPSILON) * lmax.max(1.0) {
        return Err(Error::NotPositive {
            what: "canonical invariant state".into(),
            eigenvalue: values[0],
        });
    }
    let mut clamped = CMat::zeros(d, d);
    for (k, &l) in values.iter().enumerate() {
        if l > 0.0 {
            let v = vectors.column(k);
            clamped += v * v.adjoint() * c(l, 0.0);
        }
    }
    let tr = clamped.trace().re;
    let canonical = DensityState::new(clamped / c(tr, 0.0), tol)?;
    Ok(InvariantStates {
        kernel_basis,
        canonical,
    })
}

/// Projection onto the eigenvectors of `ρ` above the rank cutoff.
pub fn support_projection(state: &DensityState) -> CMat {
    state.support().clone()
}

/// Operators whose words drive the reachability tower and whose
/// off-diagonal corners certify sub-harmonicity: `{Y, L_1, …}` for a
/// generator, Kraus operators for a step map.
pub fn certificate_alphabet(qms: &Qms, model: Option<&OpenSystemModel>, tol: &Tolerances) -> Result<Vec<CMat>> {
    match qms.kind() {
        Kind::Continuous => {
            let model = model.ok_or_else(|| {
                Error::InvalidArgument("continuous semigroups need their GKSL operators for this check".into())
            })?;
            let mut out = vec![model.drift().clone()];
            out.extend(model.lindblads().iter().cloned());
            Ok(out)
        }
        Kind::Discrete => qms.defining_map().kraus(tol),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicVerdict {
    /// `max ||(1-p) A p||` over the certificate alphabet.
    pub algebraic_residual: f64,
    /// Smallest eigenvalue of `τ_t(p) - p` over the sampled times.
    #[serde(with = "crate::floats::extended")]
    pub dynamic_min_eigenvalue: f64,
    /// `max ||p τ_t(p) - p||, ||τ_t(p) p - p||` over the sampled times.
    pub absorption_residual: f64,
    pub algebraic_pass: bool,
    pub dynamic_pass: bool,
    pub is_subharmonic: bool,
}

pub fn is_subharmonic(p: &CMat, qms: &Qms, alphabet: &[CMat], tol: &Tolerances) -> Result<SubharmonicVerdict> {
    check_projection(p, "candidate sub-harmonic projection", tol)?;
    let d = qms.dim();
    if p.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: p.nrows(),
        });
    }
    let q = identity(d) - p;
    let mut algebraic_residual = 0.0f64;
    let mut scale = 1.0f64;
    for a in alphabet {
        algebraic_residual = algebraic_residual.max(op_norm(&(&q * a * p)));
        scale = scale.max(op_norm(a));
    }
    let mut dynamic_min_eigenvalue = f64::INFINITY;
    let mut absorption_residual = 0.0f64;
    for t in qms.sample_times() {
        let tp = qms.evolve(t)?.apply(p);
        dynamic_min_eigenvalue = dynamic_min_eigenvalue.min(min_eigenvalue(&hermitian_part(&(&tp - p))));
        absorption_residual = absorption_residual.max((p * &tp - p).norm()).max((&tp * p - p).norm());
    }
    let algebraic_pass = algebraic_residual <= tol.algebraic * scale;
    let dynamic_pass = dynamic_min_eigenvalue >= -tol.algebraic;
    Ok(SubharmonicVerdict {
        algebraic_residual,
        dynamic_min_eigenvalue,
        absorption_residual,
        algebraic_pass,
        dynamic_pass,
        is_subharmonic: algebraic_pass && dynamic_pass,
    })
}

/// `y = lim τ_t(p)` with the checks that accompany it.
#[derive(Debug, Clone)]
pub struct SubharmonicLimit {
    pub y: CMat,
    /// Most negative eigenvalue among `y - p` and `I - y` (zero if none).
    pub order_violation: f64,
    /// Most negative eigenvalue of `τ_{t'}(p) - τ_t(p)` over consecutive sampled times.
    pub monotonicity_violation: f64,
    /// `||τ_T(p) - y||` at the largest sampled time.
    pub tail_distance: f64,
    /// `max ||p y - p||, ||y p - p||`.
    pub absorption_residual: f64,
}

pub fn subharmonic_limit(p: &CMat, qms: &Qms, alphabet: &[CMat], tol: &Tolerances) -> Result<SubharmonicLimit> {
    let verdict = is_subharmonic(p, qms, alphabet, tol)?;
    if !verdict.is_subharmonic {
        return Err(Error::NotSubharmonic {
            algebraic: verdict.algebraic_residual,
            dynamic: verdict.dynamic_min_eigenvalue,
        });
    }
    let d = qms.dim();
    let y = hermitian_part(&stationary_projection(qms, tol)?.apply(p));
    let order_violation = min_eigenvalue(&(&y - p))
        .min(min_eigenvalue(&(identity(d) - &y)))
        .min(0.0);
    let mut monotonicity_violation = 0.0f64;
    let mut previous = p.clone();
    let mut last = p.clone();
    for t in qms.sample_times() {
        let current = hermitian_part(&qms.evolve(t)?.apply(p));
        monotonicity_violation = monotonicity_violation.min(min_eigenvalue(&(&current - &previous)));
        previous = current.clone();
        last = current;
    }
    let tail_distance = (&last - &y).norm();
    let absorption_residual = (p * &y - p).norm().max((&y * p - p).norm());
    Ok(SubharmonicLimit {
        y,
        order_violation,
        monotonicity_violation,
        tail_distance,
        absorption_residual,
    })
}

#[derive(Debug, Clone)]
pub struct ReachabilityTower {
    /// Orthonormal columns spanning the closure.
    pub basis: CMat,
    pub dimension: usize,
    pub spans_all: bool,
    /// Word length at which the span stopped growing.
    pub stabilized_at: usize,
}

/// Smallest subspace containing the ranges of `p` and of `A_{i_n}* ⋯ A_{i_1}* p`
/// for every word over the alphabet. Its orthogonal complement is exactly
/// `{z : p z = 0, p A_{i_1} ⋯ A_{i_n} z = 0}`.
pub fn reachability_tower(p: &CMat, alphabet: &[CMat], max_len: usize) -> ReachabilityTower {
    let d = p.nrows();
    let rel = 1e-10;
    let columns = |m: &CMat| -> Vec<CVec> { (0..m.ncols()).map(|k| m.column(k).clone_owned()).collect() };
    let mut basis = span_basis(&columns(p), d, rel);
    let mut stabilized_at = 0;
    for len in 1..=max_len.max(1) {
        let mut cols = columns(&basis);
        for a in alphabet {
            cols.extend(columns(&(a.adjoint() * &basis)));
        }
        let next = span_basis(&cols, d, rel);
        let grew = next.ncols() > basis.ncols();
        basis = next;
        if !grew {
            stabilized_at = len - 1;
            break;
        }
        stabilized_at = len;
        if basis.ncols() == d {
            break;
        }
    }
    let dimension = basis.ncols();
    ReachabilityTower {
        basis,
        dimension,
        spans_all: dimension == d,
        stabilized_at,
    }
}

/// Numerical rank of a Hermitian PSD matrix relative to its norm.
pub fn is_injective(y: &CMat, tol: &Tolerances) -> bool {
    let d = y.nrows();
    let (values, _) = hermitian_eigen(&hermitian_part(y));
    let lmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values[0] > tol.rank_threshold(d, lmax).max(tol.algebraic * lmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::{from_real, matrix_unit, pauli_z, sigma_minus, sigma_plus, zeros};
    use crate::semigroup::build_generator;
    use crate::superop::SuperOp;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn model(h: CMat, ls: Vec<CMat>) -> (OpenSystemModel, Qms) {
        let m = OpenSystemModel::new(h, ls, &tol()).unwrap();
        let q = build_generator(&m, &tol()).unwrap();
        (m, q)
    }

    fn damping() -> (OpenSystemModel, Qms) {
        model(zeros(2, 2), vec![sigma_minus()])
    }

    fn thermal() -> (OpenSystemModel, Qms) {
        model(zeros(2, 2), vec![sigma_minus() * c(2f64.sqrt(), 0.0), sigma_plus()])
    }

    fn dephasing() -> (OpenSystemModel, Qms) {
        model(zeros(2, 2), vec![pauli_z() * c(0.5f64.sqrt(), 0.0)])
    }

    /// Heisenberg map of a classical chain with Schur damping on coherences.
    fn chain(p: &[f64], n: usize) -> Qms {
        let mut kraus = Vec::new();
        let diag = CMat::from_fn(n, n, |i, j| {
            if i == j {
                c(p[i * n + i].sqrt(), 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        kraus.push(diag);
        for i in 0..n {
            for j in 0..n {
                if i != j && p[i * n + j] > 0.0 {
                    kraus.push(matrix_unit(n, j, i) * c(p[i * n + j].sqrt(), 0.0));
                }
            }
        }
        let phi = kraus
            .iter()
            .fold(SuperOp::zero(n), |acc, k| acc.add(&SuperOp::conjugation(k)));
        Qms::discrete(phi, &tol()).unwrap()
    }

    #[test]
    fn unitary_dynamics_canonical_state_is_maximally_mixed() {
        let (_, q) = model(pauli_z(), vec![]);
        let inv = invariant_states(&q, &tol()).unwrap();
        assert!((inv.canonical.rho() - identity(2) * c(0.5, 0.0)).norm() < 1e-12);
        assert_eq!(inv.kernel_basis.len(), 2);
        // every kernel element is diagonal
        for k in &inv.kernel_basis {
            assert!(k[(0, 1)].norm() < 1e-12 && k[(1, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn thermal_qubit_invariant_state() {
        let (_, q) = thermal();
        let inv = invariant_states(&q, &tol()).unwrap();
        let expected = from_real(2, 2, &[2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]);
        assert!((inv.canonical.rho() - expected).norm() < 1e-12);
        assert!(inv.canonical.is_faithful());
        assert_eq!(inv.kernel_basis.len(), 1);
    }

    #[test]
    fn damping_invariant_state_is_ground_state() {
        let (_, q) = damping();
        let inv = invariant_states(&q, &tol()).unwrap();
        assert!((inv.canonical.rho() - matrix_unit(2, 0, 0)).norm() < 1e-12);
        assert!(!inv.canonical.is_faithful());
        assert!((support_projection(&inv.canonical) - matrix_unit(2, 0, 0)).norm() < 1e-12);
    }

    #[test]
    fn support_examples() {
        assert_eq!(support_projection(&DensityState::maximally_mixed(3)), identity(3));
        let s = DensityState::new(from_real(2, 2, &[2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]), &tol()).unwrap();
        assert!((support_projection(&s) - identity(2)).norm() < 1e-12);
        assert!(DensityState::new(from_real(2, 2, &[0.5, 0.0, 0.0, 0.6]), &tol()).is_err());
        assert!(DensityState::new(from_real(2, 2, &[1.5, 0.0, 0.0, -0.5]), &tol()).is_err());
    }

    #[test]
    fn subharmonic_examples() {
        let (m, q) = damping();
        let alpha = certificate_alphabet(&q, Some(&m), &tol()).unwrap();
        let v = is_subharmonic(&identity(2), &q, &alpha, &tol()).unwrap();
        assert!(v.is_subharmonic);
        let p = matrix_unit(2, 0, 0);
        let v = is_subharmonic(&p, &q, &alpha, &tol()).unwrap();
        assert!(v.is_subharmonic && v.absorption_residual < 1e-12);

        let (m, q) = dephasing();
        let alpha = certificate_alphabet(&q, Some(&m), &tol()).unwrap();
        let plus = CMat::from_element(2, 2, c(0.5, 0.0));
        let v = is_subharmonic(&plus, &q, &alpha, &tol()).unwrap();
        assert!(!v.algebraic_pass && !v.dynamic_pass && !v.is_subharmonic);
        assert!(is_subharmonic(&pauli_z(), &q, &alpha, &tol()).is_err());
    }

    #[test]
    fn damping_limit_is_identity_and_tower_spans() {
        let (m, q) = damping();
        let alpha = certificate_alphabet(&q, Some(&m), &tol()).unwrap();
        let p = matrix_unit(2, 0, 0);
        let lim = subharmonic_limit(&p, &q, &alpha, &tol()).unwrap();
        assert!((&lim.y - identity(2)).norm() < 1e-12);
        assert!(lim.monotonicity_violation > -1e-12);
        let t: f64 = 0.8;
        let expected = &p + (identity(2) - &p) * c(1.0 - (-t).exp(), 0.0);
        assert!((q.evolve(t).unwrap().apply(&p) - expected).norm() < 1e-12);
        let tower = reachability_tower(&p, &alpha, 4);
        assert!(tower.spans_all);
        assert!(is_injective(&lim.y, &tol()));
    }

    #[test]
    fn three_state_chain_limit() {
        let q = chain(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0], 3);
        let alpha = certificate_alphabet(&q, None, &tol()).unwrap();
        let p = matrix_unit(3, 0, 0);
        let lim = subharmonic_limit(&p, &q, &alpha, &tol()).unwrap();
        let expected = from_real(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        assert!((&lim.y - expected).norm() < 1e-12);
        let tower = reachability_tower(&p, &alpha, 9);
        assert!(!tower.spans_all);
        assert_eq!(tower.dimension, 2);
        assert!(!is_injective(&lim.y, &tol()));
    }

    #[test]
    fn identity_tower_spans_immediately() {
        let tower = reachability_tower(&identity(3), &[], 5);
        assert!(tower.spans_all);
        assert_eq!(tower.stabilized_at, 0);
    }

    #[test]
    fn support_of_invariant_states_is_subharmonic() {
        for (m, q) in [damping(), thermal(), dephasing()] {
            let inv = invariant_states(&q, &tol()).unwrap();
            let alpha = certificate_alphabet(&q, Some(&m), &tol()).unwrap();
            let v = is_subharmonic(inv.canonical.support(), &q, &alpha, &tol()).unwrap();
            assert!(v.is_subharmonic);
        }
    }
}

//! Fixed-point algebra `𝒩`, multiplicative domain `ℱ`, the algebra `𝒢` of
//! elements fixed by `τ̃_t τ_t`, irreducibility and convergence verdicts.

use serde::{Deserialize, Serialize};

use crate::algebra::{commuting_set, conditional_expectation, ClosureResiduals, StarSubalgebra};
use crate::error::{Error, Result};
use crate::matrixcore::{
    hermitian_eigen, identity, matrix_units, nullspace_scaled, range_basis, vec_of, CMat, CVec, Tolerances,
};
use crate::semigroup::{compress, stationary_projection, Kind, OpenSystemModel, Qms};
use crate::states::{subharmonic_limit, DensityState};
use crate::superop::SuperOp;

/// Residual below which two computed subspaces are reported equal.
pub const SUBSPACE_TOL: f64 = 1e-7;

/// Gram matrix of `Q(x, y) = tr(W D(x, y))` over matrix units, where `D` is
/// the dissipation of a CP map or generator.
#[derive(Debug, Clone)]
pub struct DissipationForm {
    /// Time at which the form was taken; `None` for the generator-level form.
    pub t: Option<f64>,
    pub gram: CMat,
}

impl DissipationForm {
    /// Smallest eigenvalue of the Gram matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::matrixcore::min_eigenvalue(&crate::matrixcore::hermitian_part(&self.gram))
    }

    /// Value `Q(x, y)`.
    pub fn pair(&self, x: &CMat, y: &CMat) -> crate::matrixcore::C64 {
        vec_of(x).dotc(&(&self.gram * vec_of(y)))
    }
}

enum Dissipation<'a> {
    /// `ℒ(x*y) - x*ℒ(y) - ℒ(x*)y`
    Generator(&'a SuperOp),
    /// `Φ(x*y) - Φ(x*)Φ(y)`
    Map(&'a SuperOp),
}

fn dissipation_gram(kind: Dissipation<'_>, weight: &CMat) -> CMat {
    let (map, generator) = match kind {
        Dissipation::Generator(m) => (m, true),
        Dissipation::Map(m) => (m, false),
    };
    let d = map.dim();
    let units = matrix_units(d);
    let images: Vec<CMat> = units.iter().map(|u| map.apply(u)).collect();
    let n = d * d;
    let index = |a: usize, b: usize| a + d * b;
    let mut gram = CMat::zeros(n, n);
    for alpha in 0..n {
        let (a, b) = (alpha % d, alpha / d);
        let adj = index(b, a);
        for beta in 0..n {
            let (cc, dd) = (beta % d, beta / d);
            let mut m = if a == cc {
                images[index(b, dd)].clone()
            } else {
                CMat::zeros(d, d)
            };
            if generator {
                m -= &units[adj] * &images[beta];
                m -= &images[adj] * &units[beta];
            } else {
                m -= &images[adj] * &images[beta];
            }
            gram[(alpha, beta)] = (weight * m).trace();
        }
    }
    gram
}

/// `Q_t(x, y) = φ_0(τ_t(x*y) - τ_t(x*)τ_t(y))`.
pub fn dissipation_form(qms: &Qms, state: &DensityState, t: f64) -> Result<DissipationForm> {
    let tau = qms.evolve(t)?;
    Ok(DissipationForm {
        t: Some(t),
        gram: dissipation_gram(Dissipation::Map(&tau), state.rho()),
    })
}

/// Generator-level (or one-step) dissipation with trace weight.
fn infinitesimal_gram(qms: &Qms) -> CMat {
    let d = qms.dim();
    let w = identity(d);
    match qms.kind() {
        Kind::Continuous => dissipation_gram(Dissipation::Generator(qms.defining_map()), &w),
        Kind::Discrete => dissipation_gram(Dissipation::Map(qms.defining_map()), &w),
    }
}

/// `{x : D(x, x) = 0 = D(x*, x*)}` at generator (or step) level.
pub fn infinitesimal_kernel(qms: &Qms, tol: &Tolerances) -> StarSubalgebra {
    let d = qms.dim();
    let gram = crate::matrixcore::hermitian_part(&infinitesimal_gram(qms));
    let scale = crate::matrixcore::op_norm(qms.defining_map().mat()).max(1.0);
    let kernel = nullspace_scaled(&gram, scale, tol);
    let adjoints: Vec<CVec> = (0..kernel.ncols())
        .map(|k| {
            let m = crate::matrixcore::unvec(kernel.column(k).clone_owned().as_slice(), d);
            vec_of(&m.adjoint())
        })
        .collect();
    let k1 = StarSubalgebra::from_orthonormal(d, kernel);
    let k2 = StarSubalgebra::from_span(d, &adjoints);
    k1.intersect(&k2, tol)
}

/// Fixed space of the semigroup as a plain subspace.
pub fn fixed_space(qms: &Qms, tol: &Tolerances) -> StarSubalgebra {
    let d = qms.dim();
    let m = match qms.kind() {
        Kind::Continuous => qms.defining_map().mat().clone(),
        Kind::Discrete => qms.defining_map().mat() - identity(d * d),
    };
    let scale = crate::matrixcore::op_norm(qms.defining_map().mat()).max(1.0);
    StarSubalgebra::from_orthonormal(d, nullspace_scaled(&m, scale, tol))
}

#[derive(Debug, Clone)]
pub struct FixedPoints {
    pub algebra: StarSubalgebra,
    pub closure: ClosureResiduals,
    /// `true` when the literal conditions (fixed `x*x` and `xx*`) were
    /// imposed because the state is not faithful.
    pub literal: bool,
}

pub fn fixed_point_set(qms: &Qms, state: &DensityState, tol: &Tolerances) -> Result<FixedPoints> {
    state.require_invariant(qms, tol)?;
    let kernel = fixed_space(qms, tol);
    let (algebra, literal) = if state.is_faithful() {
        (kernel, false)
    } else {
        (kernel.intersect(&infinitesimal_kernel(qms, tol), tol), true)
    };
    let closure = algebra.closure_residuals();
    Ok(FixedPoints {
        algebra,
        closure,
        literal,
    })
}

/// Largest subspace of `space` mapped into itself by `map`.
fn largest_invariant_subspace(space: StarSubalgebra, map: &SuperOp, tol: &Tolerances) -> StarSubalgebra {
    let d = space.ambient_dim();
    let n = d * d;
    let scale = crate::matrixcore::op_norm(map.mat()).max(1.0);
    let mut current = space;
    for _ in 0..=n {
        if current.dimension() == 0 {
            return current;
        }
        let v = current.basis_matrix();
        let image = map.mat() * v;
        let outside = &image - v * (v.adjoint() * &image);
        let keep = nullspace_scaled(&outside, scale, tol);
        if keep.ncols() == current.dimension() {
            return current;
        }
        let next = StarSubalgebra::from_orthonormal(d, v * keep);
        current = next;
    }
    current
}

#[derive(Debug, Clone)]
pub struct MultiplicativeDomain {
    pub algebra: StarSubalgebra,
    pub closure: ClosureResiduals,
    /// `max ||τ_t(x*x) - τ_t(x*)τ_t(x)||` (both orders) over the basis and
    /// sampled times.
    pub saturation_residual: f64,
}

pub fn multiplicative_domain_algebra(
    qms: &Qms,
    state: &DensityState,
    tol: &Tolerances,
) -> Result<MultiplicativeDomain> {
    state.require_faithful()?;
    state.require_invariant(qms, tol)?;
    let k0 = infinitesimal_kernel(qms, tol);
    let algebra = largest_invariant_subspace(k0, qms.defining_map(), tol);
    let closure = algebra.closure_residuals();
    let basis = algebra.basis();
    let mut saturation_residual = 0.0f64;
    for t in qms.sample_times() {
        let tau = qms.evolve(t)?;
        for x in &basis {
            let xs = x.adjoint();
            let tx = tau.apply(x);
            let txs = tau.apply(&xs);
            saturation_residual = saturation_residual
                .max((tau.apply(&(&xs * x)) - &txs * &tx).norm())
                .max((tau.apply(&(x * &xs)) - &tx * &txs).norm());
        }
    }
    Ok(MultiplicativeDomain {
        algebra,
        closure,
        saturation_residual,
    })
}

#[derive(Debug, Clone)]
pub struct GAlgebra {
    pub per_time: Vec<(f64, StarSubalgebra)>,
    pub algebra: StarSubalgebra,
}

pub fn g_algebra(qms: &Qms, adjoint: &Qms, times: &[f64], tol: &Tolerances) -> Result<GAlgebra> {
    let d = qms.dim();
    let mut per_time = Vec::new();
    let mut algebra = StarSubalgebra::full(d);
    for &t in times {
        let composed = adjoint.evolve(t)?.compose(&qms.evolve(t)?);
        let m = composed.mat() - identity(d * d);
        let gs = StarSubalgebra::from_orthonormal(d, nullspace_scaled(&m, 1.0, tol));
        algebra = algebra.intersect(&gs, tol);
        per_time.push((t, gs));
    }
    Ok(GAlgebra { per_time, algebra })
}

/// Containment residuals of the chain `𝒩 ⊆ 𝒢 ⊆ ℱ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionChain {
    pub n_in_g: f64,
    pub g_in_f: f64,
    pub holds: bool,
}

pub fn inclusion_chain(n: &StarSubalgebra, g: &StarSubalgebra, f: &StarSubalgebra) -> InclusionChain {
    let n_in_g = n.containment_residual(g);
    let g_in_f = g.containment_residual(f);
    InclusionChain {
        n_in_g,
        g_in_f,
        holds: n_in_g <= SUBSPACE_TOL && g_in_f <= SUBSPACE_TOL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub fixed_dimension: usize,
    pub fixed_is_scalar: bool,
    /// `dim {x : [x, H] = 0, [x, L_k] = 0}`.
    pub literal_commutant_dimension: Option<usize>,
    /// `dim {H, L_k, L_k*}'`.
    pub star_commutant_dimension: Option<usize>,
    /// The two sets above differ.
    pub literal_disagrees: Option<bool>,
    /// Nontrivial invariant projections found inside `𝒩`, row-major pairs.
    pub invariant_projections: Vec<Vec<Vec<[f64; 2]>>>,
    /// `𝒩` equals `{H, L_k, L_k*}'` (only meaningful with a faithful state).
    pub fixed_equals_commutant: Option<bool>,
    #[serde(with = "crate::floats::extended_opt")]
    pub fixed_commutant_residual: Option<f64>,
}

pub fn irreducibility_report(
    model: Option<&OpenSystemModel>,
    qms: &Qms,
    state: &DensityState,
    tol: &Tolerances,
) -> Result<IrreducibilityReport> {
    let d = qms.dim();
    let fixed = fixed_point_set(qms, state, tol)?;
    let n = &fixed.algebra;
    let mut literal_commutant_dimension = None;
    let mut star_commutant_dimension = None;
    let mut literal_disagrees = None;
    let mut fixed_equals_commutant = None;
    let mut fixed_commutant_residual = None;
    if let Some(m) = model {
        let mut literal_ops = vec![m.hamiltonian().clone()];
        literal_ops.extend(m.lindblads().iter().cloned());
        let literal = commuting_set(d, &literal_ops, tol);
        let mut star_ops = literal_ops.clone();
        star_ops.extend(m.lindblads().iter().map(|l| l.adjoint()));
        let star = commuting_set(d, &star_ops, tol);
        literal_disagrees = Some(literal.equality_residual(&star) > SUBSPACE_TOL);
        literal_commutant_dimension = Some(literal.dimension());
        star_commutant_dimension = Some(star.dimension());
        if state.is_faithful() {
            let r = n.equality_residual(&star);
            fixed_commutant_residual = Some(r);
            fixed_equals_commutant = Some(r <= SUBSPACE_TOL);
        }
    }
    let mut invariant_projections = Vec::new();
    if n.dimension() > 1 {
        let h = n.generic_hermitian(0x1ee7);
        let (values, vectors) = hermitian_eigen(&h);
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut start = 0;
        for k in 1..=values.len() {
            if k == values.len() || (values[k] - values[start]).abs() > 1e-7 * scale {
                let cols = vectors.columns(start, k - start).clone_owned();
                let p = &cols * cols.adjoint();
                let residual = (qms.evolve(1.0)?.apply(&p) - &p).norm();
                if residual <= 1e-8 {
                    invariant_projections.push(crate::adjoint::to_pairs(&p));
                }
                start = k;
            }
        }
    }
    Ok(IrreducibilityReport {
        fixed_dimension: n.dimension(),
        fixed_is_scalar: n.is_scalar(),
        literal_commutant_dimension,
        star_commutant_dimension,
        literal_disagrees,
        invariant_projections,
        fixed_equals_commutant,
        fixed_commutant_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedLimit {
    /// `τ_t(x) → E(x)` with `E` the expectation onto `𝒩`.
    ConditionalExpectation,
    /// `τ_t(x) → φ_0(x) I` via the support-projection route.
    StateTimesIdentity,
    /// No sufficient condition holds.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub n_equals_f: Option<bool>,
    pub n_equals_g: Option<bool>,
    /// `lim τ_t(p) = I` for the support `p` of the state.
    pub support_limit_is_identity: bool,
    /// Fixed points of the corner semigroup on `p𝒜p` are scalars.
    pub reduced_fixed_trivial: Option<bool>,
    /// Multiplicative domain of the corner semigroup is scalars.
    pub reduced_multiplicative_trivial: Option<bool>,
    pub predicted: PredictedLimit,
    pub horizon: f64,
    /// `max ||τ_T(x) - target(x)||` over matrix units.
    pub max_deviation: Option<f64>,
    /// `max ||P_0(x) - φ_0(x) I||` for the stationary projection `P_0`,
    /// when the Abel-mean conclusion is predicted.
    pub abel_deviation: Option<f64>,
    pub consistent: bool,
}

/// Tolerance for numerically confirming a predicted limit at the horizon.
pub const LIMIT_TOL: f64 = 1e-6;

/// Inputs to [`convergence_verdict`] that depend on the faithful route.
pub struct FaithfulAlgebras<'a> {
    pub n: &'a StarSubalgebra,
    pub f: &'a StarSubalgebra,
    pub g: Option<&'a StarSubalgebra>,
}

pub fn convergence_verdict(
    qms: &Qms,
    state: &DensityState,
    algebras: Option<FaithfulAlgebras<'_>>,
    alphabet: &[CMat],
    horizon: f64,
    tol: &Tolerances,
) -> Result<ConvergenceVerdict> {
    let d = qms.dim();
    let p = state.support().clone();
    let limit = subharmonic_limit(&p, qms, alphabet, tol)?;
    let support_limit_is_identity = (&limit.y - identity(d)).norm() <= 1e-8;
    let horizon = qms.admissible_time(horizon);
    let tau_t = qms.evolve(horizon)?;
    let units = matrix_units(d);

    let mut n_equals_f = None;
    let mut n_equals_g = None;
    let mut reduced_fixed_trivial = None;
    let mut reduced_multiplicative_trivial = None;
    let mut predicted = PredictedLimit::None;
    let mut target: Option<SuperOp> = None;
    let mut abel_deviation = None;

    if let Some(alg) = algebras {
        state.require_faithful()?;
        let nf = alg.n.equality_residual(alg.f) <= SUBSPACE_TOL;
        n_equals_f = Some(nf);
        let ng = alg.g.map(|g| alg.n.equality_residual(g) <= SUBSPACE_TOL);
        n_equals_g = ng;
        if nf || ng == Some(true) {
            predicted = PredictedLimit::ConditionalExpectation;
            target = Some(conditional_expectation(alg.n, state, tol)?.0);
        }
    } else if support_limit_is_identity {
        let v = range_basis(&p, tol);
        let reduced = compress(qms, &v, tol)?;
        let reduced_state = DensityState::new(v.adjoint() * state.rho() * &v, tol)?;
        let rf = fixed_point_set(&reduced, &reduced_state, tol)?;
        reduced_fixed_trivial = Some(rf.algebra.is_scalar());
        let rm = multiplicative_domain_algebra(&reduced, &reduced_state, tol)?;
        let trivial = rm.algebra.is_scalar();
        reduced_multiplicative_trivial = Some(trivial);
        let phi = state_times_identity(state);
        if rf.algebra.is_scalar() {
            let p0 = stationary_projection(qms, tol)?;
            abel_deviation = Some(
                units
                    .iter()
                    .map(|x| (p0.apply(x) - phi.apply(x)).norm())
                    .fold(0.0, f64::max),
            );
        }
        if trivial {
            predicted = PredictedLimit::StateTimesIdentity;
            target = Some(phi);
        }
    }

    let max_deviation = target.as_ref().map(|e| {
        units
            .iter()
            .map(|x| (tau_t.apply(x) - e.apply(x)).norm())
            .fold(0.0, f64::max)
    });
    let consistent = max_deviation.is_none_or(|m| m <= LIMIT_TOL) && abel_deviation.is_none_or(|m| m <= LIMIT_TOL);
    Ok(ConvergenceVerdict {
        n_equals_f,
        n_equals_g,
        support_limit_is_identity,
        reduced_fixed_trivial,
        reduced_multiplicative_trivial,
        predicted,
        horizon,
        max_deviation,
        abel_deviation,
        consistent,
    })
}

/// `x ↦ φ_0(x) I`.
pub fn state_times_identity(state: &DensityState) -> SuperOp {
    let d = state.dim();
    let rho = state.rho().clone();
    SuperOp::from_fn(d, move |x| identity(d) * (&rho * x).trace())
}

#[derive(Debug, Clone)]
pub struct CalE {
    pub map: SuperOp,
    /// `||τ̃_T τ_T - τ̃_{2T} τ_{2T}||`.
    pub convergence_residual: f64,
    pub converged: bool,
    pub commuting: bool,
    /// `||ℰ² - ℰ||` when the two semigroups commute.
    pub idempotence_residual: Option<f64>,
    /// `||ℰ - E||` when they commute and `𝒩 = 𝒢`.
    pub expectation_residual: Option<f64>,
}

pub fn cal_e_map(
    qms: &Qms,
    adjoint: &Qms,
    horizon: f64,
    expectation_onto_n: Option<&SuperOp>,
    commuting: bool,
) -> Result<CalE> {
    let t = qms.admissible_time(horizon);
    let at = |s: f64| -> Result<SuperOp> { Ok(adjoint.evolve(s)?.compose(&qms.evolve(s)?)) };
    let map = at(t)?;
    let convergence_residual = map.distance(&at(2.0 * t)?);
    let converged = convergence_residual <= LIMIT_TOL;
    let idempotence_residual = commuting.then(|| map.compose(&map).distance(&map));
    let expectation_residual = if commuting {
        expectation_onto_n.map(|e| map.distance(e))
    } else {
        None
    };
    Ok(CalE {
        map,
        convergence_residual,
        converged,
        commuting,
        idempotence_residual,
        expectation_residual,
    })
}

/// Rejects inputs whose algebra lives in a different dimension.
pub fn check_same_dim(a: &StarSubalgebra, qms: &Qms) -> Result<()> {
    if a.ambient_dim() != qms.dim() {
        return Err(Error::DimensionMismatch {
            expected: qms.dim(),
            actual: a.ambient_dim(),
        });
    }
    Ok(())
}

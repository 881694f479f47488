//! GKSL generators, semigroup evaluation and the minimal-semigroup
//! (Picard) iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{
    c, ensure_finite, ensure_square, hermiticity_residual, identity, matrix_exp, min_eigenvalue, nullspace_scaled,
    op_norm, CMat, Tolerances, I,
};
use crate::superop::{is_cp_unital, CpVerdict, SuperOp};

/// Data `(H, {L_k}, Y)` of a bounded GKSL generator
/// `ℒ(x) = Y*x + xY + Σ L_k* x L_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystemModel {
    dim: usize,
    hamiltonian: CMat,
    lindblads: Vec<CMat>,
    drift: CMat,
}

impl OpenSystemModel {
    /// Builds the model with `Y = -iH - ½ Σ L_k* L_k`.
    pub fn new(hamiltonian: CMat, lindblads: Vec<CMat>, tol: &Tolerances) -> Result<Self> {
        let dim = ensure_square(&hamiltonian)?;
        ensure_finite(&hamiltonian, "hamiltonian")?;
        let herm = hermiticity_residual(&hamiltonian);
        if herm > tol.algebraic * hamiltonian.norm().max(1.0) {
            return Err(Error::NotHermitian {
                what: "hamiltonian".into(),
                residual: herm,
            });
        }
        for l in &lindblads {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: l.nrows().max(l.ncols()),
                });
            }
            ensure_finite(l, "lindblad operator")?;
        }
        let dissipative = lindblads
            .iter()
            .fold(CMat::zeros(dim, dim), |acc, l| acc + l.adjoint() * l);
        let drift = &hamiltonian * (-I) - dissipative * c(0.5, 0.0);
        let model = Self {
            dim,
            hamiltonian,
            lindblads,
            drift,
        };
        model.check_unitality(tol)?;
        Ok(model)
    }

    /// Builds the model from an explicit drift `Y`. The Hamiltonian is
    /// recovered as the Hermitian part of `iY` and is kept for reporting.
    pub fn with_drift(drift: CMat, lindblads: Vec<CMat>, tol: &Tolerances) -> Result<Self> {
        let dim = ensure_square(&drift)?;
        ensure_finite(&drift, "drift")?;
        for l in &lindblads {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: l.nrows().max(l.ncols()),
                });
            }
            ensure_finite(l, "lindblad operator")?;
        }
        let iy = &drift * I;
        let hamiltonian = (&iy + iy.adjoint()) * c(0.5, 0.0);
        let model = Self {
            dim,
            hamiltonian,
            lindblads,
            drift,
        };
        model.check_unitality(tol)?;
        Ok(model)
    }

    /// `||Y + Y* + Σ L_k* L_k||`.
    pub fn unitality_residual(&self) -> f64 {
        let sum = self
            .lindblads
            .iter()
            .fold(&self.drift + self.drift.adjoint(), |acc, l| acc + l.adjoint() * l);
        sum.norm()
    }

    fn check_unitality(&self, tol: &Tolerances) -> Result<()> {
        let scale = self
            .lindblads
            .iter()
            .fold(self.drift.norm(), |m, l| m + l.norm() * l.norm())
            .max(1.0);
        let residual = self.unitality_residual();
        if residual > tol.algebraic * scale {
            return Err(Error::NotUnital { residual });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.hamiltonian
    }

    pub fn lindblads(&self) -> &[CMat] {
        &self.lindblads
    }

    pub fn drift(&self) -> &CMat {
        &self.drift
    }

    /// `Φ(x) = Σ L_k* x L_k`.
    pub fn jump_map(&self) -> SuperOp {
        self.lindblads
            .iter()
            .fold(SuperOp::zero(self.dim), |acc, l| acc.add(&SuperOp::conjugation(l)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Discrete,
}

/// A Markov semigroup: either `τ_t = exp(tℒ)` or `τ_n = Φⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Qms {
    kind: Kind,
    map: SuperOp,
}

impl Qms {
    /// Continuous semigroup from a generator matrix; checks `ℒ(I) = 0`.
    pub fn continuous(generator: SuperOp, tol: &Tolerances) -> Result<Self> {
        let d = generator.dim();
        let residual = generator.apply(&identity(d)).norm();
        if residual > tol.algebraic * generator.norm().max(1.0) {
            return Err(Error::NotUnital { residual });
        }
        Ok(Self {
            kind: Kind::Continuous,
            map: generator,
        })
    }

    /// Discrete semigroup from one CP unital step map.
    pub fn discrete(step: SuperOp, tol: &Tolerances) -> Result<Self> {
        let verdict = is_cp_unital(&step, tol);
        if !verdict.unital {
            return Err(Error::NotUnital {
                residual: verdict.unital_residual,
            });
        }
        if !verdict.completely_positive {
            return Err(Error::NotPositive {
                what: "Choi matrix of step map".into(),
                eigenvalue: verdict.choi_min_eigenvalue,
            });
        }
        Ok(Self {
            kind: Kind::Discrete,
            map: step,
        })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn generator(&self) -> Option<&SuperOp> {
        match self.kind {
            Kind::Continuous => Some(&self.map),
            Kind::Discrete => None,
        }
    }

    pub fn step_map(&self) -> Option<&SuperOp> {
        match self.kind {
            Kind::Discrete => Some(&self.map),
            Kind::Continuous => None,
        }
    }

    /// Generator or step map, whichever defines the semigroup.
    pub fn defining_map(&self) -> &SuperOp {
        &self.map
    }

    /// `τ_t`. Discrete semigroups require a non-negative integer `t`.
    pub fn evolve(&self, t: f64) -> Result<SuperOp> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidTime {
                time: t,
                reason: "time must be finite and non-negative",
            });
        }
        match self.kind {
            Kind::Continuous => {
                if t == 0.0 {
                    return Ok(SuperOp::identity(self.dim()));
                }
                let m = matrix_exp(&(self.map.mat() * c(t, 0.0)))?;
                Ok(SuperOp::from_mat_unchecked(m, self.dim()))
            }
            Kind::Discrete => {
                if t.fract() != 0.0 {
                    return Err(Error::InvalidTime {
                        time: t,
                        reason: "discrete semigroups take integer times",
                    });
                }
                Ok(self.map.pow(t as u64))
            }
        }
    }

    /// Default sample times: `{2^k : k = -3..5}` for continuous semigroups,
    /// `{1, 2, 3, 4, 8, 16, 32}` steps for discrete ones.
    pub fn sample_times(&self) -> Vec<f64> {
        match self.kind {
            Kind::Continuous => (-3..=5).map(|k| 2f64.powi(k)).collect(),
            Kind::Discrete => vec![1.0, 2.0, 3.0, 4.0, 8.0, 16.0, 32.0],
        }
    }

    /// Rounds a time to what the semigroup kind accepts.
    pub fn admissible_time(&self, t: f64) -> f64 {
        match self.kind {
            Kind::Continuous => t.max(0.0),
            Kind::Discrete => t.max(0.0).ceil(),
        }
    }
}

/// Projection onto the fixed space of the semigroup along the range of its
/// generator (or of `Φ - id`): the spectral projection at rest, which is
/// also the Abel/Cesàro mean `lim τ_t` on the fixed space.
pub fn stationary_projection(qms: &Qms, tol: &Tolerances) -> Result<SuperOp> {
    let d = qms.dim();
    let m = match qms.kind() {
        Kind::Continuous => qms.defining_map().mat().clone(),
        Kind::Discrete => qms.defining_map().mat() - identity(d * d),
    };
    let scale = op_norm(qms.defining_map().mat()).max(1.0);
    let right = nullspace_scaled(&m, scale, tol);
    let left = nullspace_scaled(&m.adjoint(), scale, tol);
    if right.ncols() != left.ncols() || right.ncols() == 0 {
        return Err(Error::Numerical(format!(
            "left and right fixed spaces disagree ({} vs {})",
            left.ncols(),
            right.ncols()
        )));
    }
    let overlap = left.adjoint() * &right;
    let sv = crate::matrixcore::singular_values(&overlap);
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < 1e-8 {
        return Err(Error::NotSemisimple { eigenvalue: smallest });
    }
    let inv = overlap
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular fixed-space overlap".into()))?;
    Ok(SuperOp::from_mat_unchecked(right * inv * left.adjoint(), d))
}

/// The semigroup compressed to the corner `p𝒜p`, with `p = v v*` for an
/// isometry `v` (`d × k`). Requires `p` sub-harmonic for the result to be
/// Markov; the compressed map is `x ↦ v* M(v x v*) v`.
pub fn compress(qms: &Qms, v: &CMat, tol: &Tolerances) -> Result<Qms> {
    let k = v.ncols();
    let inner = SuperOp::sandwich(v, &v.adjoint());
    let outer = SuperOp::sandwich(&v.adjoint(), v);
    let mid = SuperOp::from_mat_unchecked(outer.mat() * qms.defining_map().mat() * inner.mat(), k);
    match qms.kind() {
        Kind::Continuous => Qms::continuous(mid, tol),
        Kind::Discrete => Qms::discrete(mid, tol),
    }
}

/// Builds `ℒ(x) = Y*x + xY + Σ L_k* x L_k` as a superoperator.
pub fn build_generator(model: &OpenSystemModel, tol: &Tolerances) -> Result<Qms> {
    let d = model.dim();
    let id = identity(d);
    let y = model.drift();
    let mut mat = crate::matrixcore::kron(&id, &y.adjoint()) + crate::matrixcore::kron(&y.transpose(), &id);
    for l in model.lindblads() {
        mat += crate::matrixcore::kron(&l.transpose(), &l.adjoint());
    }
    Qms::continuous(SuperOp::from_mat_unchecked(mat, d), tol)
}

pub fn evolve(qms: &Qms, t: f64) -> Result<SuperOp> {
    qms.evolve(t)
}

pub fn predual(s: &SuperOp) -> SuperOp {
    s.predual()
}

pub fn is_cp_unital_map(s: &SuperOp, tol: &Tolerances) -> CpVerdict {
    is_cp_unital(s, tol)
}

/// `||τ_{s+t} - τ_s τ_t||`.
pub fn semigroup_law_residual(qms: &Qms, s: f64, t: f64) -> Result<f64> {
    let lhs = qms.evolve(s + t)?;
    let rhs = qms.evolve(s)?.compose(&qms.evolve(t)?);
    Ok(lhs.distance(&rhs))
}

/// Smallest eigenvalue of `τ_t(y*y) - τ_t(y*)τ_t(y)`; non-negative by the
/// Schwarz inequality for unital CP maps.
pub fn schwarz_gap(map: &SuperOp, y: &CMat) -> f64 {
    let lhs = map.apply(&(y.adjoint() * y));
    let ty = map.apply(y);
    let rhs = map.apply(&y.adjoint()) * &ty;
    min_eigenvalue(&crate::matrixcore::hermitian_part(&(lhs - rhs)))
}

/// Output of the minimal-semigroup iteration.
#[derive(Debug, Clone)]
pub struct PicardIterates {
    /// `τ^{(0)}_t(x), …, τ^{(n_max)}_t(x)`.
    pub iterates: Vec<CMat>,
    pub steps: usize,
    pub step_size: f64,
    /// Most negative eigenvalue of `τ^{(n)}_t(x) - τ^{(n-1)}_t(x)` over `n`
    /// (zero when monotone); only meaningful for PSD `x`.
    pub monotonicity_violation: f64,
    /// Most negative eigenvalue of `||x|| I - τ^{(n)}_t(x)` over `n`.
    pub bound_violation: f64,
    /// Rounding-level bound used to judge the two violations above.
    pub discretization_bound: f64,
    /// The mesh is coarse relative to the generator scale.
    pub mesh_too_coarse: bool,
}

impl PicardIterates {
    pub fn last(&self) -> &CMat {
        self.iterates.last().expect("at least the zeroth iterate")
    }

    pub fn is_monotone(&self) -> bool {
        self.monotonicity_violation >= -self.discretization_bound && self.bound_violation >= -self.discretization_bound
    }
}

/// Iterates
/// `τ^{(n)}_t(x) = e^{tY*} x e^{tY} + ∫_0^t e^{(t-s)Y*} Φ(τ^{(n-1)}_s(x)) e^{(t-s)Y} ds`
/// with the integral discretized by the composite trapezoid rule on a
/// uniform mesh of width at most `mesh`.
///
/// When `verify_monotone` is set, `x` must be Hermitian PSD.
pub fn minimal_semigroup_iterate(
    model: &OpenSystemModel,
    x: &CMat,
    t: f64,
    n_max: usize,
    mesh: f64,
    verify_monotone: bool,
    tol: &Tolerances,
) -> Result<PicardIterates> {
    let d = model.dim();
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.nrows(),
        });
    }
    ensure_finite(x, "Picard input")?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidTime {
            time: t,
            reason: "time must be finite and non-negative",
        });
    }
    if !(mesh.is_finite() && mesh > 0.0) {
        return Err(Error::InvalidArgument("mesh must be positive".into()));
    }
    let x_norm = op_norm(x);
    if verify_monotone {
        let herm = hermiticity_residual(x);
        if herm > tol.algebraic * x.norm().max(1.0) {
            return Err(Error::NotHermitian {
                what: "Picard input".into(),
                residual: herm,
            });
        }
        let lmin = min_eigenvalue(x);
        if lmin < -tol.psd_slack * x_norm.max(1.0) {
            return Err(Error::NotPositive {
                what: "Picard input".into(),
                eigenvalue: lmin,
            });
        }
    }

    let steps = ((t / mesh).ceil() as usize).max(1);
    let h = t / steps as f64;
    let y = model.drift();
    let jump = model.jump_map();
    let scale = op_norm(y) + op_norm(jump.mat());
    let mesh_too_coarse = h * scale > 0.05;

    // e^{s_j Y} on the mesh
    let step_exp = matrix_exp(&(y * c(h, 0.0)))?;
    let mut powers = Vec::with_capacity(steps + 1);
    powers.push(identity(d));
    for j in 1..=steps {
        let next = &powers[j - 1] * &step_exp;
        powers.push(next);
    }
    let free: Vec<CMat> = powers.iter().map(|e| e.adjoint() * x * e).collect();

    let mut iterates = vec![free[steps].clone()];
    let mut current = free.clone();
    let e1 = &step_exp;
    let e1_adj = step_exp.adjoint();
    for _ in 1..=n_max {
        let forcing: Vec<CMat> = current.iter().map(|m| jump.apply(m)).collect();
        let mut next = Vec::with_capacity(steps + 1);
        next.push(free[0].clone());
        // running[j] = Σ_{i≤j} E_{j-i}* F_i E_{j-i}
        let mut running = forcing[0].clone();
        for j in 1..=steps {
            running = &e1_adj * &running * e1 + &forcing[j];
            let edge = powers[j].adjoint() * &forcing[0] * &powers[j];
            let integral = (&running - (edge + &forcing[j]) * c(0.5, 0.0)) * c(h, 0.0);
            next.push(&free[j] + integral);
        }
        iterates.push(next[steps].clone());
        current = next;
    }

    let mut monotonicity_violation = 0.0f64;
    let mut bound_violation = 0.0f64;
    if verify_monotone {
        for w in iterates.windows(2) {
            let diff = crate::matrixcore::hermitian_part(&(&w[1] - &w[0]));
            monotonicity_violation = monotonicity_violation.min(min_eigenvalue(&diff));
        }
        for it in &iterates {
            let gap = identity(d) * c(x_norm, 0.0) - crate::matrixcore::hermitian_part(it);
            bound_violation = bound_violation.min(min_eigenvalue(&gap));
        }
    }
    // trapezoid error on the bound side; rounding on monotonicity
    let discretization_bound =
        x_norm.max(1.0) * ((steps as f64) * f64::EPSILON * 64.0 + (h * scale).powi(2) * t * scale);

    Ok(PicardIterates {
        iterates,
        steps,
        step_size: h,
        monotonicity_violation,
        bound_violation,
        discretization_bound,
        mesh_too_coarse,
    })
}

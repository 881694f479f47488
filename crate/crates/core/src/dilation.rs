//! Finite time-grid truncations of the weak Markov dilation.
//!
//! A grid `r_1 < … < r_n` carries one copy of `M_d` per point. Elementary
//! tuples `(x_1, …, x_n)` of matrix units span the pre-Hilbert space; their
//! coefficient vectors live in `C^{(d²)^n}` with slot `k` at stride
//! `(d²)^{k-1}`, so the earliest time varies fastest. The kernel is
//!
//! `L(x, y) = φ_0(x_1* τ_{r_2-r_1}(x_2* ⋯ τ_{r_n-r_{n-1}}(x_n* y_n) ⋯ y_2) y_1)`
//!
//! with the latest time innermost, and the Hilbert space is its GNS
//! quotient `C^D`.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{default_horizon, k_property_test, spectral_data, CORRELATION_TOL};
use crate::error::{Error, Result};
use crate::matrixcore::{
    gram_quotient, gram_quotient_from_eigen, hermitian_eigen, hermitian_part, identity, kron, matrix_units,
    random_matrix, range_basis, vec_of, CMat, CVec, GramQuotient, Tolerances, C64,
};
use crate::semigroup::{Kind, Qms};
use crate::states::DensityState;
use crate::superop::SuperOp;

/// Default bound on the number of spanning tuples `(d²)^n`.
pub const DEFAULT_CAP: usize = 4096;

/// Permitted negative eigenvalue of the kernel Gram matrix.
pub const GRAM_PSD_SLACK: f64 = 1e-8;

/// `δ(T)` at the most negative tail below which a run counts as K-shift
/// evidence. `δ` is a norm, so this matches the squared two-point tolerance.
pub const K_SHIFT_THRESHOLD: f64 = 1e-3;

/// `δ` values below this are treated as roundoff when fitting a rate.
pub const RATE_FLOOR: f64 = 1e-9;

const GRID_EQ: f64 = 1e-12;

/// Strictly increasing list of grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Grid("a grid needs at least one point".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Grid(format!("grid point {p} is not finite")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!("grid {points:?} is not strictly increasing")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p - t).abs() <= GRID_EQ)
    }

    /// Every point translated by `-t`.
    pub fn shifted_back(&self, t: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|p| p - t).collect())
    }

    /// The grid with `t` added (must be below every point).
    pub fn with_earlier(&self, t: f64) -> Result<Self> {
        let mut points = vec![t];
        points.extend_from_slice(&self.points);
        Self::new(points)
    }
}

/// GNS space of the kernel on one grid.
#[derive(Debug, Clone)]
pub struct DilationSpace {
    qms: Qms,
    rho: CMat,
    grid: TimeGrid,
    d: usize,
    /// `τ` over each consecutive gap.
    gaps: Vec<SuperOp>,
    gram: CMat,
    quotient: GramQuotient,
    /// `C_k P` for every slot `k`: the collapse onto times `≤ r_k` composed
    /// with the pseudo-inverse of the embedding (`P` itself for the last slot).
    collapsed: Vec<CMat>,
    /// `j_{r_k}(e_{ab})` for every slot, filled on first use.
    unit_reps: Vec<OnceLock<Vec<CMat>>>,
    omega: CVec,
    gram_min_eigenvalue: f64,
}

fn unit_pair(u: usize, d: usize) -> (usize, usize) {
    (u % d, u / d)
}

fn stride(d: usize, k: usize) -> usize {
    (d * d).pow(k as u32)
}

/// Slot-unit digits of a tuple index.
fn digits(mut alpha: usize, d: usize, n: usize) -> Vec<usize> {
    let base = d * d;
    (0..n)
        .map(|_| {
            let u = alpha % base;
            alpha /= base;
            u
        })
        .collect()
}

/// Coefficient vector of the elementary tensor `(x_1, …, x_n)`.
pub fn tuple_coefficients(slots: &[CMat]) -> CVec {
    let mut out = CVec::from_element(1, C64::new(1.0, 0.0));
    for x in slots {
        let v = vec_of(x);
        let len = out.len();
        out = CVec::from_fn(v.len() * len, |i, _| v[i / len] * out[i % len]);
    }
    out
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Gram matrix of the kernel on the elementary tuples of `grid`.
pub fn kernel_gram(qms: &Qms, state: &DensityState, grid: &TimeGrid, cap: usize, tol: &Tolerances) -> Result<CMat> {
    state.require_invariant(qms, tol)?;
    let d = qms.dim();
    let n = grid.len();
    let tuples = (d * d)
        .checked_pow(n as u32)
        .filter(|&t| t <= cap)
        .ok_or(Error::CapExceeded {
            tuples: (d * d).saturating_pow(n as u32),
            cap,
        })?;
    if qms.kind() == Kind::Discrete {
        if let Some(p) = grid.points().iter().find(|p| p.fract() != 0.0) {
            return Err(Error::Grid(format!(
                "discrete semigroups need integer grid points, got {p}"
            )));
        }
    }
    let images: Vec<Vec<CMat>> = grid
        .points()
        .windows(2)
        .map(|w| {
            let g = qms.evolve(w[1] - w[0])?;
            Ok(matrix_units(d).iter().map(|u| g.apply(u)).collect())
        })
        .collect::<Result<_>>()?;
    let rho = state.rho();
    let all_digits: Vec<Vec<usize>> = (0..tuples).map(|a| digits(a, d, n)).collect();
    let mut gram = CMat::zeros(tuples, tuples);
    for (alpha, xa) in all_digits.iter().enumerate() {
        for (beta, yb) in all_digits.iter().enumerate() {
            gram[(alpha, beta)] = kernel_entry(xa, yb, d, &images, rho);
        }
    }
    Ok(gram)
}

pub fn build_dilation_space(
    qms: &Qms,
    state: &DensityState,
    grid: &TimeGrid,
    cap: usize,
    tol: &Tolerances,
) -> Result<DilationSpace> {
    let gram = kernel_gram(qms, state, grid, cap, tol)?;
    let d = qms.dim();
    let n = grid.len();
    let gaps = grid
        .points()
        .windows(2)
        .map(|w| qms.evolve(w[1] - w[0]))
        .collect::<Result<Vec<_>>>()?;
    let (values, vectors) = hermitian_eigen(&hermitian_part(&gram));
    let gram_min_eigenvalue = values.first().copied().unwrap_or(0.0);
    let lmax = gram.norm().max(1.0);
    if gram_min_eigenvalue < -GRAM_PSD_SLACK * lmax {
        return Err(Error::NotPositive {
            what: "dilation Gram matrix".into(),
            eigenvalue: gram_min_eigenvalue,
        });
    }
    let loose = Tolerances {
        psd_slack: GRAM_PSD_SLACK,
        ..*tol
    };
    let quotient = gram_quotient_from_eigen(&values, &vectors, &loose)?;
    let omega_coef = tuple_coefficients(&vec![identity(d); n]);
    let omega = &quotient.embedding * omega_coef;
    let mut space = DilationSpace {
        qms: qms.clone(),
        rho: state.rho().clone(),
        grid: grid.clone(),
        d,
        gaps,
        gram,
        quotient,
        collapsed: Vec::new(),
        unit_reps: (0..n).map(|_| OnceLock::new()).collect(),
        omega,
        gram_min_eigenvalue,
    };
    space.collapsed = (0..n)
        .map(|k| {
            if k + 1 == n {
                space.quotient.pseudo_inverse.clone()
            } else {
                space.collapse_matrix(k) * &space.quotient.pseudo_inverse
            }
        })
        .collect();
    Ok(space)
}

/// `L(e_x, e_y)` for elementary tuples given by their unit digits.
fn kernel_entry(x: &[usize], y: &[usize], d: usize, images: &[Vec<CMat>], rho: &CMat) -> C64 {
    let n = x.len();
    let (a, b) = unit_pair(x[n - 1], d);
    let (c, dd) = unit_pair(y[n - 1], d);
    if a != c {
        return C64::new(0.0, 0.0);
    }
    let (mut inner_b, mut inner_d) = (b, dd);
    let mut value = C64::new(1.0, 0.0);
    for k in (0..n - 1).rev() {
        let (a, b) = unit_pair(x[k], d);
        let (c, dd) = unit_pair(y[k], d);
        value *= images[k][inner_b + d * inner_d][(a, c)];
        if value == C64::new(0.0, 0.0) {
            return value;
        }
        inner_b = b;
        inner_d = dd;
    }
    value * rho[(inner_d, inner_b)]
}

impl DilationSpace {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Dimension `D` of the quotient.
    pub fn dim(&self) -> usize {
        self.quotient.dim
    }

    pub fn model_dim(&self) -> usize {
        self.d
    }

    pub fn tuples(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn gram_min_eigenvalue(&self) -> f64 {
        self.gram_min_eigenvalue
    }

    pub fn omega(&self) -> &CVec {
        &self.omega
    }

    /// `max |⟨λ(e_α), λ(e_β)⟩ - L(e_α, e_β)|` over elementary tuples.
    pub fn reproduction_residual(&self) -> f64 {
        let e = &self.quotient.embedding;
        max_abs(&(e.adjoint() * e - &self.gram))
    }

    /// Image of a coefficient vector in `C^D`.
    pub fn embed(&self, coefficients: &CVec) -> CVec {
        &self.quotient.embedding * coefficients
    }

    /// Image `λ(x_1, …, x_n)` of an elementary tuple.
    pub fn lambda(&self, slots: &[CMat]) -> Result<CVec> {
        if slots.len() != self.grid.len() {
            return Err(Error::Grid(format!(
                "tuple has {} slots, grid has {} points",
                slots.len(),
                self.grid.len()
            )));
        }
        Ok(self.embed(&tuple_coefficients(slots)))
    }

    /// Image of the tuple with `x` at time `t` and `I` elsewhere.
    pub fn lambda_at(&self, t: f64, x: &CMat) -> Result<CVec> {
        let k = self.slot(t)?;
        let mut slots = vec![identity(self.d); self.grid.len()];
        slots[k] = x.clone();
        self.lambda(&slots)
    }

    fn slot(&self, t: f64) -> Result<usize> {
        self.grid
            .index_of(t)
            .ok_or_else(|| Error::Grid(format!("{t} is not a grid point")))
    }

    /// Index of the last grid point `≤ t`, or `None` below the grid.
    fn last_slot_at_or_before(&self, t: f64) -> Option<usize> {
        self.grid.points().iter().rposition(|&p| p <= t + GRID_EQ)
    }

    /// Coefficient-space collapse onto tuples supported at times `≤ r_k`:
    /// later slots become `I` and slot `k` holds `τ(Z_{k+1}) x_k`, where
    /// `Z_n = x_n` and `Z_j = τ(Z_{j+1}) x_j`.
    fn collapse_matrix(&self, k: usize) -> CMat {
        let d = self.d;
        let n = self.grid.len();
        let units = matrix_units(d);
        let tuples = self.tuples();
        let tail = tuple_coefficients(&vec![identity(d); n - 1 - k]);
        let mut out = CMat::zeros(tuples, tuples);
        for beta in 0..tuples {
            let u = digits(beta, d, n);
            let mut z = units[u[n - 1]].clone();
            for j in (k..n - 1).rev() {
                z = self.gaps[j].apply(&z) * &units[u[j]];
            }
            let head: usize = (0..k).map(|j| u[j] * stride(d, j)).sum();
            let zv = vec_of(&z);
            for (w, zw) in zv.iter().enumerate() {
                if *zw == C64::new(0.0, 0.0) {
                    continue;
                }
                for (t_idx, tv) in tail.iter().enumerate() {
                    if *tv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let alpha = head + w * stride(d, k) + t_idx * stride(d, k + 1);
                    out[(alpha, beta)] += zw * tv;
                }
            }
        }
        out
    }

    /// Coefficient-space injection of tuples supported at times `≤ r_k`
    /// (identity in the later slots).
    fn support_injection(&self, k: usize) -> CMat {
        let d = self.d;
        let n = self.grid.len();
        let head = stride(d, k + 1);
        let tail = tuple_coefficients(&vec![identity(d); n - 1 - k]);
        let mut out = CMat::zeros(self.tuples(), head);
        for h in 0..head {
            for (t_idx, tv) in tail.iter().enumerate() {
                if *tv != C64::new(0.0, 0.0) {
                    out[(h + t_idx * head, h)] = *tv;
                }
            }
        }
        out
    }

    /// Orthogonal projection `F_{t]}` onto the closed span of tuples
    /// supported at times `≤ t`.
    pub fn filtration_projection(&self, t: f64, tol: &Tolerances) -> CMat {
        match self.last_slot_at_or_before(t) {
            None => &self.omega * self.omega.adjoint(),
            Some(k) if k + 1 == self.grid.len() => identity(self.dim()),
            Some(k) => {
                let spanning = &self.quotient.embedding * self.support_injection(k);
                let basis = range_basis(&spanning, tol);
                &basis * basis.adjoint()
            }
        }
    }

    /// `F_{t]}` from the collapse formula instead of the span.
    pub fn filtration_closed_form(&self, t: f64) -> CMat {
        match self.last_slot_at_or_before(t) {
            None => {
                let omega_row = self.omega.adjoint() * &self.quotient.embedding * &self.collapsed[0];
                &self.omega * omega_row
            }
            Some(k) if k + 1 == self.grid.len() => identity(self.dim()),
            Some(k) => &self.quotient.embedding * &self.collapsed[k],
        }
    }

    /// `j_t(x) = j_t(x) F_{t]}`: collapse onto `≤ t`, then multiply the slot
    /// at `t` from the left.
    pub fn represent_j(&self, t: f64, x: &CMat) -> Result<CMat> {
        let k = self.slot(t)?;
        if x.shape() != (self.d, self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.nrows(),
            });
        }
        let reps = self.unit_representations(k);
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (u, rep) in reps.iter().enumerate() {
            let (a, b) = unit_pair(u, self.d);
            let coef = x[(a, b)];
            if coef != C64::new(0.0, 0.0) {
                out += rep * coef;
            }
        }
        Ok(out)
    }

    /// `j_{r_k}(e_{ab})` for the matrix units, indexed by `a + d b`.
    fn unit_representations(&self, k: usize) -> &[CMat] {
        self.unit_reps[k].get_or_init(|| {
            matrix_units(self.d)
                .iter()
                .map(|u| &self.quotient.embedding * self.left_multiply_slot(k, u, &self.collapsed[k]))
                .collect()
        })
    }

    /// Rows of `m` (indexed by tuple coefficients) transformed by left
    /// multiplication with `x` in slot `k`.
    fn left_multiply_slot(&self, k: usize, x: &CMat, m: &CMat) -> CMat {
        let d = self.d;
        let lo = stride(d, k);
        let mut out = CMat::zeros(m.nrows(), m.ncols());
        for alpha in 0..m.nrows() {
            let low = alpha % lo;
            let w = (alpha / lo) % (d * d);
            let high = alpha / (lo * d * d);
            let (a, b) = unit_pair(w, d);
            for c in 0..d {
                let coef = x[(a, c)];
                if coef == C64::new(0.0, 0.0) {
                    continue;
                }
                let source = low + lo * (c + d * b + d * d * high);
                for col in 0..m.ncols() {
                    out[(alpha, col)] += coef * m[(source, col)];
                }
            }
        }
        out
    }
}

/// `‖F_{s]} j_t(x) F_{s]} - j_s(τ_{t-s}(x))‖` for grid points `s ≤ t`.
pub fn markov_property_check(space: &DilationSpace, s: f64, t: f64, x: &CMat, tol: &Tolerances) -> Result<f64> {
    if s > t {
        return Err(Error::Grid(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let f = space.filtration_projection(s, tol);
    let lhs = &f * space.represent_j(t, x)? * &f;
    let evolved = space.qms.evolve(t - s)?.apply(x);
    let rhs = space.represent_j(s, &evolved)?;
    Ok((lhs - rhs).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionCheck {
    /// `max |⟨V_+z, V_+y⟩ - φ_0(z*y)|`.
    pub isometry_residual: f64,
    /// `max |⟨V_+z, j_t(x) V_+y⟩ - φ_0(z* τ_t(x) y)|` over grid `t ≥ 0`.
    pub compression_residual: f64,
    /// `max |⟨V_+y, j_t(x) Ω⟩ - φ_0(y* τ_t(x))|`, the vacuum form of
    /// `P^0_t = V_+* S V_+`.
    pub vacuum_residual: f64,
}

impl CompressionCheck {
    pub fn max(&self) -> f64 {
        self.isometry_residual
            .max(self.compression_residual)
            .max(self.vacuum_residual)
    }
}

pub fn compression_check(space: &DilationSpace) -> Result<CompressionCheck> {
    space.slot(0.0)?;
    let d = space.d;
    let units = matrix_units(d);
    let expect = |m: &CMat| (&space.rho * m).trace();
    let v: Vec<CVec> = units.iter().map(|u| space.lambda_at(0.0, u)).collect::<Result<_>>()?;
    let mut isometry_residual = 0.0f64;
    for (zi, z) in units.iter().enumerate() {
        for (yi, y) in units.iter().enumerate() {
            let r = v[zi].dotc(&v[yi]) - expect(&(z.adjoint() * y));
            isometry_residual = isometry_residual.max(r.norm());
        }
    }
    let mut compression_residual = 0.0f64;
    let mut vacuum_residual = 0.0f64;
    for &t in space.grid.points().iter().filter(|&&t| t >= 0.0) {
        let tau = space.qms.evolve(t)?;
        for x in &units {
            let j = space.represent_j(t, x)?;
            let tx = tau.apply(x);
            let jo = &j * &space.omega;
            for (zi, z) in units.iter().enumerate() {
                let vac = v[zi].dotc(&jo) - expect(&(z.adjoint() * &tx));
                vacuum_residual = vacuum_residual.max(vac.norm());
                let jz = j.adjoint() * &v[zi];
                for (yi, y) in units.iter().enumerate() {
                    let r = jz.dotc(&v[yi]) - expect(&(z.adjoint() * &tx * y));
                    compression_residual = compression_residual.max(r.norm());
                }
            }
        }
    }
    Ok(CompressionCheck {
        isometry_residual,
        compression_residual,
        vacuum_residual,
    })
}

/// Largest entrywise difference between the Gram matrices on `grid` and on
/// `grid - t`.
pub fn shift_isometry_check(
    qms: &Qms,
    state: &DensityState,
    grid: &TimeGrid,
    t: f64,
    cap: usize,
    tol: &Tolerances,
) -> Result<f64> {
    let a = kernel_gram(qms, state, grid, cap, tol)?;
    let b = kernel_gram(qms, state, &grid.shifted_back(t)?, cap, tol)?;
    Ok(max_abs(&(a - b)))
}

/// `max ‖F_{s]} F_{t]} - F_{s]}‖` over grid pairs `s ≤ t`, including a
/// point below the grid.
pub fn monotonicity_residual(space: &DilationSpace, tol: &Tolerances) -> f64 {
    let mut times = vec![space.grid.points()[0] - 1.0];
    times.extend_from_slice(space.grid.points());
    let projections: Vec<CMat> = times.iter().map(|&t| space.filtration_projection(t, tol)).collect();
    let mut worst = 0.0f64;
    for i in 0..projections.len() {
        for j in i..projections.len() {
            let r = (&projections[i] * &projections[j] - &projections[i]).norm();
            worst = worst.max(r);
        }
    }
    worst
}

/// `max ‖F_{t]}(orthogonal) - F_{t]}(collapse)‖` over the grid and a point
/// below it.
pub fn filtration_closed_form_residual(space: &DilationSpace, tol: &Tolerances) -> f64 {
    let mut times = vec![space.grid.points()[0] - 1.0];
    times.extend_from_slice(space.grid.points());
    times
        .iter()
        .map(|&t| (space.filtration_projection(t, tol) - space.filtration_closed_form(t)).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomomorphismCheck {
    /// `max ‖j_t(x) j_t(y) - j_t(xy)‖ / (‖x‖‖y‖)` over the product pairs.
    pub product: f64,
    /// `max ‖j_t(x*) - j_t(x)*‖`.
    pub adjoint: f64,
    /// `‖(j_t(u)F)*(j_t(u)F) - F‖` for the unitaries `σ_x`-type swaps and
    /// diagonal phases.
    pub unitary_isometry: f64,
    /// `j_t(I) = F_{t]}`.
    pub unit: f64,
}

impl HomomorphismCheck {
    pub fn max(&self) -> f64 {
        self.product.max(self.adjoint).max(self.unitary_isometry).max(self.unit)
    }
}

fn test_unitaries(d: usize) -> Vec<CMat> {
    let mut shift = CMat::zeros(d, d);
    for a in 0..d {
        shift[((a + 1) % d, a)] = C64::new(1.0, 0.0);
    }
    let phase = CMat::from_diagonal(&CVec::from_iterator(
        d,
        (0..d).map(|a| C64::from_polar(1.0, 0.7 * (a as f64 + 1.0))),
    ));
    vec![shift, phase]
}

/// Product pairs for the multiplicativity check: every pair of matrix units
/// for qubits, otherwise a fixed set of seeded random pairs (a nonzero
/// bilinear defect cannot vanish on generic pairs).
fn product_pairs(d: usize) -> Vec<(CMat, CMat)> {
    let units = matrix_units(d);
    if d <= 2 {
        return units
            .iter()
            .flat_map(|x| units.iter().map(move |y| (x.clone(), y.clone())))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a0f);
    (0..8)
        .map(|_| (random_matrix(&mut rng, d, d), random_matrix(&mut rng, d, d)))
        .collect()
}

pub fn homomorphism_check(space: &DilationSpace, tol: &Tolerances) -> Result<HomomorphismCheck> {
    let d = space.d;
    let units = matrix_units(d);
    let pairs = product_pairs(d);
    let mut out = HomomorphismCheck {
        product: 0.0,
        adjoint: 0.0,
        unitary_isometry: 0.0,
        unit: 0.0,
    };
    for &t in space.grid.points() {
        let f = space.filtration_projection(t, tol);
        out.unit = out.unit.max((space.represent_j(t, &identity(d))? - &f).norm());
        for x in &units {
            let adj = space.represent_j(t, &x.adjoint())?;
            out.adjoint = out.adjoint.max((adj - space.represent_j(t, x)?.adjoint()).norm());
        }
        for (x, y) in &pairs {
            let scale = x.norm() * y.norm();
            let lhs = space.represent_j(t, x)? * space.represent_j(t, y)?;
            let prod = space.represent_j(t, &(x * y))?;
            out.product = out.product.max((lhs - prod).norm() / scale);
        }
        for u in test_unitaries(d) {
            let ju = space.represent_j(t, &u)? * &f;
            out.unitary_isometry = out.unitary_isometry.max((ju.adjoint() * &ju - &f).norm());
        }
    }
    Ok(out)
}

/// `‖j_{r_n}(y_n) ⋯ j_{r_1}(y_1) Ω - λ(y)‖`, the latest time acting last.
pub fn cyclic_residual(space: &DilationSpace, slots: &[CMat]) -> Result<f64> {
    let target = space.lambda(slots)?;
    let mut v = space.omega.clone();
    for (k, y) in slots.iter().enumerate() {
        v = space.represent_j(space.grid.points()[k], y)? * v;
    }
    Ok((v - target).norm())
}

/// Cyclic reconstruction over every elementary tuple of matrix units.
pub fn cyclic_sweep(space: &DilationSpace) -> Result<f64> {
    let d = space.d;
    let n = space.grid.len();
    let units = matrix_units(d);
    let reps: Vec<Vec<CMat>> = space
        .grid
        .points()
        .iter()
        .map(|&t| units.iter().map(|u| space.represent_j(t, u)).collect())
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for alpha in 0..space.tuples() {
        let u = digits(alpha, d, n);
        let mut v = space.omega.clone();
        for k in 0..n {
            v = &reps[k][u[k]] * v;
        }
        let target = space.embed(&CVec::from_fn(space.tuples(), |i, _| {
            if i == alpha {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }));
        worst = worst.max((v - target).norm());
    }
    Ok(worst)
}

/// All identity residuals of one dilation space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationChecks {
    pub tuples: usize,
    pub dimension: usize,
    pub gram_min_eigenvalue: f64,
    pub reproduction_residual: f64,
    pub omega_norm_defect: f64,
    /// Over all grid pairs `s ≤ t` and matrix units.
    pub markov_residual: f64,
    pub compression: Option<CompressionCheck>,
    pub monotonicity_residual: f64,
    pub filtration_closed_form_residual: f64,
    pub homomorphism: HomomorphismCheck,
    pub cyclic_residual: f64,
}

pub fn run_dilation_checks(space: &DilationSpace, tol: &Tolerances) -> Result<DilationChecks> {
    let units = matrix_units(space.d);
    let points = space.grid.points().to_vec();
    let filtrations: Vec<CMat> = points.iter().map(|&s| space.filtration_projection(s, tol)).collect();
    let mut markov_residual = 0.0f64;
    for (i, &s) in points.iter().enumerate() {
        let f = &filtrations[i];
        for &t in &points[i..] {
            let tau = space.qms.evolve(t - s)?;
            for x in &units {
                let lhs = f * space.represent_j(t, x)? * f;
                let rhs = space.represent_j(s, &tau.apply(x))?;
                markov_residual = markov_residual.max((lhs - rhs).norm());
            }
        }
    }
    let compression = if space.grid.index_of(0.0).is_some() {
        Some(compression_check(space)?)
    } else {
        None
    };
    Ok(DilationChecks {
        tuples: space.tuples(),
        dimension: space.dim(),
        gram_min_eigenvalue: space.gram_min_eigenvalue,
        reproduction_residual: space.reproduction_residual(),
        omega_norm_defect: (space.omega.norm() - 1.0).abs(),
        markov_residual,
        compression,
        monotonicity_residual: monotonicity_residual(space, tol),
        filtration_closed_form_residual: filtration_closed_form_residual(space, tol),
        homomorphism: homomorphism_check(space, tol)?,
        cyclic_residual: cyclic_sweep(space)?,
    })
}

/// Default tails `{-h/8, -h/4, -h/2, -h}` below `base_min`, rounded down to
/// integers for discrete semigroups.
pub fn default_tails(qms: &Qms, base_min: f64, horizon: f64) -> Vec<f64> {
    [8.0, 4.0, 2.0, 1.0]
        .iter()
        .map(|f| {
            let t = base_min - horizon / f;
            match qms.kind() {
                Kind::Continuous => t,
                Kind::Discrete => t.floor(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KShiftProbe {
    /// `(T, δ(T))` in the order the tails were given.
    pub rows: Vec<(f64, f64)>,
    /// Decay rate from the two most negative tails with `δ` above the floor.
    pub rate: Option<f64>,
    /// `δ` at the most negative tail is at most [`K_SHIFT_THRESHOLD`].
    pub evidence: bool,
    /// `max |⟨w, j_T(x) v⟩ - φ_0(x)⟨w,Ω⟩⟨Ω,v⟩| / (‖v‖‖w‖)` at the most
    /// negative tail, over base vectors and matrix units.
    pub j_tail_deviation: f64,
    pub k_property: bool,
    pub k_property_horizon: f64,
    /// The deepest tail reaches the correlation horizon below the base, or
    /// `δ` is already below the threshold. Shorter tails cannot rule the
    /// K-property out.
    pub conclusive: bool,
    pub agree: bool,
}

/// Spanning base vectors: elementary tuples with `I` in slot 0.
fn base_vectors(space: &DilationSpace) -> Vec<CVec> {
    let d = space.d;
    let n = space.grid.len();
    let units = matrix_units(d);
    let base_count = stride(d, n - 1);
    let mut out = Vec::new();
    for beta in 0..base_count {
        let u = digits(beta, d, n - 1);
        let mut slots = vec![identity(d)];
        slots.extend(u.iter().map(|&k| units[k].clone()));
        out.push(space.embed(&tuple_coefficients(&slots)));
    }
    let scale = out.iter().map(|v| v.norm()).fold(0.0, f64::max);
    out.retain(|v| v.norm() > 1e-8 * scale);
    out
}

fn delta_and_tail(space: &DilationSpace, t: f64, with_j: bool, tol: &Tolerances) -> Result<(f64, f64)> {
    let f = space.filtration_projection(t, tol);
    let omega = space.omega();
    let vs = base_vectors(space);
    let mut delta = 0.0f64;
    for v in &vs {
        let r = &f * v - omega * omega.dotc(v);
        delta = delta.max(r.norm() / v.norm());
    }
    let mut j_dev = 0.0f64;
    if with_j {
        for x in matrix_units(space.d) {
            let phi = (&space.rho * &x).trace();
            let j = space.represent_j(t, &x)?;
            for v in &vs {
                let jv = &j * v;
                let ov = omega.dotc(v);
                for w in &vs {
                    let r = w.dotc(&jv) - phi * w.dotc(omega) * ov;
                    j_dev = j_dev.max(r.norm() / (v.norm() * w.norm()));
                }
            }
        }
    }
    Ok((delta, j_dev))
}

pub fn k_shift_probe(
    qms: &Qms,
    state: &DensityState,
    base: &TimeGrid,
    tails: &[f64],
    cap: usize,
    tol: &Tolerances,
) -> Result<KShiftProbe> {
    if tails.is_empty() {
        return Err(Error::Grid("k-shift probe needs at least one tail time".into()));
    }
    let most_negative = tails.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::new();
    let mut j_tail_deviation = 0.0;
    for &t in tails {
        let grid = base.with_earlier(t)?;
        let space = build_dilation_space(qms, state, &grid, cap, tol)?;
        let last = t == most_negative;
        let (delta, j_dev) = delta_and_tail(&space, t, last, tol)?;
        if last {
            j_tail_deviation = j_dev;
        }
        rows.push((t, delta));
    }
    let mut usable: Vec<(f64, f64)> = rows.iter().copied().filter(|r| r.1 > RATE_FLOOR).collect();
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rate = (usable.len() >= 2 && usable[1].0 > usable[0].0)
        .then(|| (usable[1].1.ln() - usable[0].1.ln()) / (usable[1].0 - usable[0].0));
    let delta_last = rows
        .iter()
        .find(|r| r.0 == most_negative)
        .map_or(f64::INFINITY, |r| r.1);
    let evidence = delta_last <= K_SHIFT_THRESHOLD;
    let spectrum = spectral_data(qms)?;
    let horizon = default_horizon(qms, &spectrum);
    let k = k_property_test(qms, state, horizon, CORRELATION_TOL)?;
    let depth = base.points()[0] - most_negative;
    let conclusive = evidence || depth >= horizon * (1.0 - 1e-9);
    Ok(KShiftProbe {
        rows,
        rate,
        evidence,
        j_tail_deviation,
        k_property: k.holds,
        k_property_horizon: horizon,
        conclusive,
        agree: evidence == k.holds,
    })
}

/// Matrix of left multiplication by `x` on the GNS space of `ρ` in the
/// matrix-unit spanning family, for comparison with a one-point grid.
pub fn gns_left_multiplication(rho: &CMat, x: &CMat, tol: &Tolerances) -> Result<(CMat, CMat)> {
    let d = rho.nrows();
    let units = matrix_units(d);
    let n = d * d;
    let gram = CMat::from_fn(n, n, |i, j| (rho * units[i].adjoint() * &units[j]).trace());
    let q = gram_quotient(&gram, tol)?;
    let left = kron(&identity(d), x);
    Ok((&q.embedding * left * &q.pseudo_inverse, gram))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::{c, matrix_unit, op_norm, pauli_x, random_matrix};
    use crate::models::builtin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn space(name: &str, points: &[f64]) -> DilationSpace {
        let m = builtin(name, &tol()).unwrap();
        build_dilation_space(
            &m.qms,
            &m.state,
            &TimeGrid::new(points.to_vec()).unwrap(),
            DEFAULT_CAP,
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![1.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![f64::NAN]).is_err());
        let m = builtin("three_state_chain", &tol()).unwrap();
        let g = TimeGrid::new(vec![0.0, 0.5]).unwrap();
        assert!(matches!(
            build_dilation_space(&m.qms, &m.state, &g, DEFAULT_CAP, &tol()),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn one_point_grids_are_gns_spaces() {
        assert_eq!(space("thermal_qubit(2,1)", &[0.0]).dim(), 4);
        assert_eq!(space("amplitude_damping(1)", &[0.0]).dim(), 2);
        let s = space("thermal_qubit(2,1)", &[0.0]);
        assert!((s.omega().norm() - 1.0).abs() < 1e-10);
        let x = pauli_x() + matrix_unit(2, 0, 1) * c(0.0, 2.0);
        let j = s.represent_j(0.0, &x).unwrap();
        let (left, gram) = gns_left_multiplication(&s.rho, &x, &tol()).unwrap();
        assert!(max_abs(&(s.gram() - gram)) < 1e-15);
        // Both are matrices of the same operator in possibly different
        // orthonormal bases; compare invariants.
        assert!((op_norm(&j) - op_norm(&left)).abs() < 1e-10);
        assert!(((j.adjoint() * &j).trace() - (left.adjoint() * &left).trace()).norm() < 1e-10);
    }

    #[test]
    fn cap_is_enforced() {
        let m = builtin("dephasing(0.5)", &tol()).unwrap();
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            build_dilation_space(&m.qms, &m.state, &g, 32, &tol()),
            Err(Error::CapExceeded { tuples: 64, cap: 32 })
        ));
    }

    #[test]
    fn filtration_examples() {
        let s = space("dephasing(0.5)", &[0.0, 1.0]);
        let f0 = s.filtration_projection(0.0, &tol());
        assert!((f0.trace().re - 4.0).abs() < 1e-9);
        assert!((s.filtration_projection(5.0, &tol()) - identity(s.dim())).norm() < 1e-12);
        let below = s.filtration_projection(-1.0, &tol());
        assert!((below.trace().re - 1.0).abs() < 1e-12);
        assert!(filtration_closed_form_residual(&s, &tol()) < 1e-8);
        assert!(monotonicity_residual(&s, &tol()) < 1e-9);
    }

    #[test]
    fn markov_property_examples() {
        let s = space("amplitude_damping(1)", &[0.0, 1.0]);
        let x = matrix_unit(2, 1, 1);
        assert!(markov_property_check(&s, 0.0, 1.0, &x, &tol()).unwrap() < 1e-8);
        assert!(markov_property_check(&s, 1.0, 1.0, &x, &tol()).unwrap() < 1e-12);
        assert!(markov_property_check(&s, 1.0, 0.0, &x, &tol()).is_err());
        let s = space("thermal_qubit(2,1)", &[0.0, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 2, 2);
        assert!(markov_property_check(&s, 0.0, 2.0, &x, &tol()).unwrap() < 1e-8 * x.norm());
    }

    #[test]
    fn compression_and_shift() {
        let s = space("thermal_qubit(2,1)", &[0.0, 1.0]);
        assert!(compression_check(&s).unwrap().max() < 1e-8);
        let s = space("dephasing(0.5)", &[-1.0, 0.0, 1.0]);
        assert!(compression_check(&s).unwrap().max() < 1e-8);
        assert!(compression_check(&space("dephasing(0.5)", &[1.0])).is_err());
        let m = builtin("thermal_qubit(2,1)", &tol()).unwrap();
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        assert!(shift_isometry_check(&m.qms, &m.state, &g, 5.0, DEFAULT_CAP, &tol()).unwrap() < 1e-12);
        assert_eq!(
            shift_isometry_check(&m.qms, &m.state, &g, 0.0, DEFAULT_CAP, &tol()).unwrap(),
            0.0
        );
        let m = builtin("dephasing(0.5)", &tol()).unwrap();
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(shift_isometry_check(&m.qms, &m.state, &g, -3.0, DEFAULT_CAP, &tol()).unwrap() < 1e-10);
    }

    #[test]
    fn all_checks_on_a_three_point_grid() {
        let s = space("thermal_qubit(2,1)", &[0.0, 0.5, 1.0]);
        let c = run_dilation_checks(&s, &tol()).unwrap();
        assert!(c.gram_min_eigenvalue > -1e-8);
        assert!(c.reproduction_residual < 1e-8);
        assert!(c.markov_residual < 1e-8);
        assert!(c.compression.unwrap().max() < 1e-8);
        assert!(c.monotonicity_residual < 1e-9);
        assert!(c.homomorphism.max() < 1e-8, "{:?}", c.homomorphism);
        assert!(c.cyclic_residual < 1e-8);
    }

    #[test]
    fn k_shift_examples() {
        let m = builtin("thermal_qubit(2,1)", &tol()).unwrap();
        let base = TimeGrid::new(vec![0.0]).unwrap();
        let p = k_shift_probe(&m.qms, &m.state, &base, &[-1.0, -2.0, -4.0, -8.0], DEFAULT_CAP, &tol()).unwrap();
        assert!(p.evidence && p.k_property && p.agree);
        let rate = p.rate.unwrap();
        assert!((rate - 1.5).abs() < 0.3, "rate {rate}");
        assert!(p.j_tail_deviation < 1e-3);

        let short = k_shift_probe(&m.qms, &m.state, &base, &[-1.0, -2.0], DEFAULT_CAP, &tol()).unwrap();
        assert!(!short.evidence && !short.conclusive);

        for name in ["dephasing(0.5)", "unitary(1)"] {
            let m = builtin(name, &tol()).unwrap();
            let p = k_shift_probe(&m.qms, &m.state, &base, &[-1.0, -2.0, -4.0, -8.0], DEFAULT_CAP, &tol()).unwrap();
            assert!(!p.evidence && !p.k_property && p.agree, "{name}: {p:?}");
            assert!(p.rows.iter().all(|r| r.1 > 0.1));
        }
    }
}

//! Ergodicity, mixing and the Kolmogorov property, decided from the spectrum
//! of the semigroup and cross-checked against correlation decay.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoints::{g_algebra, multiplicative_domain_algebra};
use crate::matrixcore::{
    eigenvalues, identity, matrix_units, op_norm, random_density, trace_norm, CMat, Tolerances, C64,
};
use crate::semigroup::{stationary_projection, Kind, Qms};
use crate::states::DensityState;
use crate::superop::SuperOp;

/// Tolerance for correlation-based verdicts at the horizon.
pub const CORRELATION_TOL: f64 = 1e-6;

/// Relative threshold for deciding that an eigenvalue is peripheral.
pub const PERIPHERAL_TOL: f64 = 1e-7;

/// Horizon multiplier: correlation tests run at `HORIZON_FACTOR / gap`.
pub const HORIZON_FACTOR: f64 = 50.0;

/// Abel parameters used as a numerical witness for the spectral projection.
pub const ABEL_LAMBDAS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// `φ_0(x τ_t(y))`
    pub plain: C64,
    /// `φ_0(τ_t(x) τ_t(y))`
    pub twopoint: C64,
}

pub fn correlation(qms: &Qms, state: &DensityState, x: &CMat, y: &CMat, t: f64) -> Result<Correlation> {
    let tau = qms.evolve(t)?;
    Ok(correlation_with(&tau, state, x, y))
}

fn correlation_with(tau: &SuperOp, state: &DensityState, x: &CMat, y: &CMat) -> Correlation {
    let ty = tau.apply(y);
    Correlation {
        plain: state.expect(&(x * &ty)),
        twopoint: state.expect(&(tau.apply(x) * ty)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    /// Quantity the verdict was decided on (smaller means closer to holding).
    #[serde(with = "crate::floats::extended")]
    pub witness: f64,
    pub method: String,
}

impl Verdict {
    fn new(holds: bool, witness: f64, method: &str) -> Self {
        Self {
            holds,
            witness,
            method: method.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    pub peripheral: Vec<C64>,
    /// `-max Re λ` over the non-peripheral spectrum (continuous) or
    /// `-ln max |λ|` over it (discrete). Zero when some nonzero eigenvalue
    /// lies on the peripheral circle or axis.
    #[serde(with = "crate::floats::extended")]
    pub gap: f64,
    /// The non-peripheral part is nilpotent (discrete only).
    pub nilpotent_rest: bool,
}

pub fn spectral_data(qms: &Qms) -> Result<SpectralData> {
    let m = qms.defining_map().mat();
    let eigs = eigenvalues(m)?;
    let scale = op_norm(m).max(1.0);
    let thr = PERIPHERAL_TOL * scale;
    let (mut peripheral, mut rest) = (Vec::new(), Vec::new());
    for &l in &eigs {
        let on_edge = match qms.kind() {
            Kind::Continuous => l.re.abs() <= thr,
            Kind::Discrete => (l.norm() - 1.0).abs() <= thr,
        };
        if on_edge {
            peripheral.push(l);
        } else {
            rest.push(l);
        }
    }
    let (gap, nilpotent_rest) = match qms.kind() {
        Kind::Continuous => {
            let nonzero_edge = peripheral.iter().any(|l| l.norm() > thr);
            let rest_max = rest.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            let gap = if nonzero_edge {
                0.0
            } else if rest.is_empty() {
                f64::INFINITY
            } else {
                -rest_max
            };
            (gap, false)
        }
        Kind::Discrete => {
            let nontrivial_edge = peripheral.iter().any(|l| (l - 1.0).norm() > thr);
            let modulus = rest.iter().map(|l| l.norm()).fold(0.0, f64::max);
            if nontrivial_edge {
                (0.0, false)
            } else if modulus <= thr {
                (f64::INFINITY, true)
            } else {
                (-modulus.ln(), false)
            }
        }
    };
    Ok(SpectralData {
        eigenvalues: eigs,
        peripheral,
        gap,
        nilpotent_rest,
    })
}

/// `50 / gap`, rounded for discrete semigroups. Without a gap, the largest
/// sample time; with a nilpotent transient, `d²` steps.
pub fn default_horizon(qms: &Qms, spectrum: &SpectralData) -> f64 {
    let d = qms.dim();
    let fallback = qms.sample_times().into_iter().fold(0.0, f64::max);
    let t = if spectrum.gap == 0.0 {
        fallback
    } else if spectrum.gap.is_infinite() {
        match qms.kind() {
            Kind::Continuous => fallback,
            Kind::Discrete => (d * d) as f64,
        }
    } else {
        HORIZON_FACTOR / spectrum.gap
    };
    let t = qms.admissible_time(t);
    if spectrum.nilpotent_rest {
        t.max((d * d) as f64)
    } else {
        t
    }
}

/// `max |φ_0(x A(y)) - φ_0(x) φ_0(y)|` over matrix units.
fn product_deviation(a: &SuperOp, state: &DensityState, twopoint: bool) -> f64 {
    let units = matrix_units(state.dim());
    let means: Vec<C64> = units.iter().map(|u| state.expect(u)).collect();
    let images: Vec<CMat> = units.iter().map(|u| a.apply(u)).collect();
    let mut worst = 0.0f64;
    for (i, x) in units.iter().enumerate() {
        let left = if twopoint { &images[i] } else { x };
        for (j, ay) in images.iter().enumerate() {
            let v = state.expect(&(left * ay)) - means[i] * means[j];
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// Abel mean `λ (λ - ℒ)^{-1}` (continuous) or `λ/(1+λ) Σ (1+λ)^{-n} Φ^n`
/// (discrete).
pub fn abel_mean(qms: &Qms, lambda: f64) -> Result<SuperOp> {
    let d = qms.dim();
    let n = d * d;
    let m = qms.defining_map().mat();
    let (resolvent, factor) = match qms.kind() {
        Kind::Continuous => (identity(n) * C64::new(lambda, 0.0) - m, lambda),
        Kind::Discrete => (identity(n) * C64::new(1.0 + lambda, 0.0) - m, lambda),
    };
    let inv = resolvent
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("resolvent singular at {lambda}")))?;
    Ok(SuperOp::from_mat_unchecked(inv * C64::new(factor, 0.0), d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbelSample {
    pub lambda: f64,
    /// `||A_λ - P_0||` against the spectral projection at rest.
    pub distance_to_projection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPropertyTest {
    pub holds: bool,
    pub horizon: f64,
    /// `max |φ_0(τ_T(x)τ_T(y)) - φ_0(x)φ_0(y)|` over matrix units.
    pub twopoint_deviation: f64,
    /// `max ||τ_T(x - φ_0(x))||_φ0` over matrix units.
    pub polarization_norm: f64,
    pub polarization_holds: bool,
    pub agree: bool,
}

pub fn k_property_test(qms: &Qms, state: &DensityState, horizon: f64, tol: f64) -> Result<KPropertyTest> {
    let horizon = qms.admissible_time(horizon);
    let tau = qms.evolve(horizon)?;
    let twopoint_deviation = product_deviation(&tau, state, true);
    let d = state.dim();
    let mut polarization_norm = 0.0f64;
    for u in matrix_units(d) {
        let centered = &u - identity(d) * state.expect(&u);
        let image = tau.apply(&centered);
        let sq = state.expect(&(image.adjoint() * &image)).re.max(0.0);
        polarization_norm = polarization_norm.max(sq.sqrt());
    }
    let holds = twopoint_deviation <= tol;
    let polarization_holds = polarization_norm * polarization_norm <= tol;
    Ok(KPropertyTest {
        holds,
        horizon,
        twopoint_deviation,
        polarization_norm,
        polarization_holds,
        agree: holds == polarization_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub ergodic: Verdict,
    pub weak_mixing: Verdict,
    pub strong_mixing: Verdict,
    pub k_property: Verdict,
    #[serde(with = "crate::floats::extended")]
    pub spectral_gap: f64,
    pub peripheral_spectrum: Vec<C64>,
    pub adjoint_k_property: Option<bool>,
    pub horizon: f64,
    /// Strong-mixing verdict read off plain correlation decay at the
    /// horizon; `None` when the horizon is not informative (no gap).
    pub correlation_strong_mixing: Option<bool>,
    pub correlation_inconclusive: bool,
    pub abel_samples: Vec<AbelSample>,
    pub k_test: KPropertyTest,
    pub implication_chain_holds: bool,
    /// Spectral and correlation verdicts disagree, or the implication chain
    /// is broken.
    pub flagged: bool,
}

/// Time average `(1/T) ∫_0^T max |φ_0(x τ_t(y)) - φ_0(x)φ_0(y)| dt` by the
/// trapezoid rule.
pub fn time_averaged_deviation(qms: &Qms, state: &DensityState, horizon: f64, samples: usize) -> Result<f64> {
    let samples = samples.max(2);
    let ts: Vec<f64> = match qms.kind() {
        Kind::Continuous => (0..=samples).map(|k| horizon * k as f64 / samples as f64).collect(),
        Kind::Discrete => (0..=horizon.ceil() as usize).map(|k| k as f64).collect(),
    };
    let values = ts
        .iter()
        .map(|&t| Ok(product_deviation(&qms.evolve(t)?, state, false)))
        .collect::<Result<Vec<f64>>>()?;
    if ts.len() < 2 || horizon <= 0.0 {
        return Ok(values.first().copied().unwrap_or(0.0));
    }
    let total: f64 = ts
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(total / (ts[ts.len() - 1] - ts[0]))
}

pub fn spectral_classification(qms: &Qms, state: &DensityState, tol: &Tolerances) -> Result<AsymptoticsReport> {
    spectral_classification_at(qms, state, None, tol)
}

/// As [`spectral_classification`], with correlation limits read at
/// `horizon` instead of the spectral default.
pub fn spectral_classification_at(
    qms: &Qms,
    state: &DensityState,
    horizon: Option<f64>,
    tol: &Tolerances,
) -> Result<AsymptoticsReport> {
    state.require_invariant(qms, tol)?;
    let spectrum = spectral_data(qms)?;
    let horizon = match horizon {
        Some(h) if h.is_finite() && h > 0.0 => qms.admissible_time(h),
        Some(h) => {
            return Err(Error::InvalidTime {
                time: h,
                reason: "horizon must be positive",
            })
        }
        None => default_horizon(qms, &spectrum),
    };
    let p0 = stationary_projection(qms, tol)?;

    let ergodic_dev = product_deviation(&p0, state, false);
    let ergodic = Verdict::new(
        ergodic_dev <= 1e3 * tol.algebraic,
        ergodic_dev,
        "Abel mean through the spectral projection at rest",
    );
    let abel_samples = ABEL_LAMBDAS
        .iter()
        .map(|&lambda| {
            Ok(AbelSample {
                lambda,
                distance_to_projection: abel_mean(qms, lambda)?.distance(&p0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let simple_rest = spectrum.peripheral.len() == 1;
    let correlation_inconclusive = spectrum.gap == 0.0;
    let tau_t = qms.evolve(horizon)?;
    let plain_dev = product_deviation(&tau_t, state, false);
    let correlation_strong_mixing = (!correlation_inconclusive).then_some(plain_dev <= CORRELATION_TOL);
    let strong_mixing = if state.is_faithful() || correlation_inconclusive {
        Verdict::new(
            simple_rest,
            spectrum.peripheral.len() as f64 - 1.0,
            "peripheral spectrum is the simple rest eigenvalue",
        )
    } else {
        Verdict::new(
            plain_dev <= CORRELATION_TOL,
            plain_dev,
            "plain correlation decay at the horizon",
        )
    };
    let averaged = time_averaged_deviation(qms, state, horizon, 400)?;
    let weak_mixing = Verdict::new(
        strong_mixing.holds,
        averaged,
        "finite dimension: equal to strong mixing; witness is the time-averaged deviation",
    );
    let k_test = k_property_test(qms, state, horizon, CORRELATION_TOL)?;
    let k_property = Verdict::new(
        k_test.holds,
        k_test.twopoint_deviation,
        "two-point correlation at the horizon",
    );
    let implication_chain_holds = (!k_property.holds || strong_mixing.holds)
        && (!strong_mixing.holds || weak_mixing.holds)
        && (!weak_mixing.holds || ergodic.holds);
    let disagreement = correlation_strong_mixing.is_some_and(|c| c != strong_mixing.holds);
    Ok(AsymptoticsReport {
        ergodic,
        weak_mixing,
        strong_mixing,
        k_property,
        spectral_gap: spectrum.gap,
        peripheral_spectrum: spectrum.peripheral,
        adjoint_k_property: None,
        horizon,
        correlation_strong_mixing,
        correlation_inconclusive,
        abel_samples,
        flagged: !implication_chain_holds || disagreement || !k_test.agree,
        k_test,
        implication_chain_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeICrossCheck {
    /// `max ||σ_T(ψ) - ρ||_1` over seeded random states.
    pub state_convergence: Verdict,
    pub multiplicative_domain_trivial: bool,
    pub g_trivial: bool,
    pub strong_mixing: bool,
    pub k_property: bool,
    pub all_agree: bool,
}

pub fn cross_check_type_i(qms: &Qms, state: &DensityState, adjoint: &Qms, tol: &Tolerances) -> Result<TypeICrossCheck> {
    state.require_faithful()?;
    let report = spectral_classification(qms, state, tol)?;
    let tau = qms.evolve(report.horizon)?.predual();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let psi = random_density(&mut rng, state.dim());
        worst = worst.max(trace_norm(&(tau.apply(&psi) - state.rho())));
    }
    let state_convergence = Verdict::new(
        worst <= CORRELATION_TOL,
        worst,
        "trace distance of evolved random states to the invariant state",
    );
    let f = multiplicative_domain_algebra(qms, state, tol)?;
    let g = g_algebra(qms, adjoint, &qms.sample_times(), tol)?;
    let multiplicative_domain_trivial = f.algebra.is_scalar();
    let g_trivial = g.algebra.is_scalar();
    let flags = [
        state_convergence.holds,
        multiplicative_domain_trivial,
        g_trivial,
        report.strong_mixing.holds,
        report.k_property.holds,
    ];
    Ok(TypeICrossCheck {
        all_agree: flags.iter().all(|&b| b == flags[0]),
        state_convergence,
        multiplicative_domain_trivial,
        g_trivial,
        strong_mixing: report.strong_mixing.holds,
        k_property: report.k_property.holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRecord {
    pub forward_k: bool,
    pub adjoint_k: bool,
    pub forward_deviation: f64,
    pub adjoint_deviation: f64,
    pub horizon: f64,
    /// `(true, false)` or `(false, true)`.
    pub disagree: bool,
}

/// Runs the K-property test on a semigroup and on its KMS adjoint at a
/// common horizon. The outcome is evidence only.
pub fn conjecture_probe(qms: &Qms, state: &DensityState, adjoint: &Qms) -> Result<ConjectureRecord> {
    state.require_faithful()?;
    let forward_spec = spectral_data(qms)?;
    let adjoint_spec = spectral_data(adjoint)?;
    let horizon = default_horizon(qms, &forward_spec).max(default_horizon(adjoint, &adjoint_spec));
    let f = k_property_test(qms, state, horizon, CORRELATION_TOL)?;
    let a = k_property_test(adjoint, state, horizon, CORRELATION_TOL)?;
    Ok(ConjectureRecord {
        forward_k: f.holds,
        adjoint_k: a.holds,
        forward_deviation: f.twopoint_deviation,
        adjoint_deviation: a.twopoint_deviation,
        horizon,
        disagree: f.holds != a.holds,
    })
}

/// Rows `(t, max |φ_0(x τ_t(y)) - φ_0(x)φ_0(y)|)` over matrix units.
pub fn decay_table(qms: &Qms, state: &DensityState, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| {
            let t = qms.admissible_time(t);
            Ok((t, product_deviation(&qms.evolve(t)?, state, false)))
        })
        .collect()
}

/// CSV text with header `t,value`.
pub fn to_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in rows {
        out.push_str(&format!("{t},{v:e}\n"));
    }
    out
}

/// Evenly spaced sample times on `[0, horizon]`.
pub fn decay_times(horizon: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|k| horizon * k as f64 / (count - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::kms_adjoint;
    use crate::matrixcore::{c, matrix_unit, pauli_z, sigma_minus, sigma_plus, zeros};
    use crate::models::{classical_chain_embed, three_state_chain};
    use crate::semigroup::{build_generator, OpenSystemModel};
    use crate::states::invariant_states;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn gen(h: CMat, ls: Vec<CMat>) -> Qms {
        build_generator(&OpenSystemModel::new(h, ls, &tol()).unwrap(), &tol()).unwrap()
    }

    fn thermal() -> Qms {
        gen(zeros(2, 2), vec![sigma_minus() * c(2f64.sqrt(), 0.0), sigma_plus()])
    }

    fn dephasing() -> Qms {
        gen(zeros(2, 2), vec![pauli_z() * c(0.5f64.sqrt(), 0.0)])
    }

    fn canonical(q: &Qms) -> DensityState {
        invariant_states(q, &tol()).unwrap().canonical
    }

    #[test]
    fn identity_correlation_is_one() {
        let q = thermal();
        let s = canonical(&q);
        for t in [0.0, 0.5, 3.0] {
            let r = correlation(&q, &s, &identity(2), &identity(2), t).unwrap();
            assert!((r.plain - 1.0).norm() < 1e-12 && (r.twopoint - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn dephasing_twopoint_does_not_decay() {
        let q = dephasing();
        let s = DensityState::maximally_mixed(2);
        let x = matrix_unit(2, 0, 0) - identity(2) * c(0.5, 0.0);
        for t in [1.0, 10.0, 40.0] {
            let r = correlation(&q, &s, &x, &x, t).unwrap();
            assert!((r.twopoint - 0.25).norm() < 1e-12);
        }
    }

    #[test]
    fn thermal_classification() {
        let q = thermal();
        let s = canonical(&q);
        let r = spectral_classification(&q, &s, &tol()).unwrap();
        assert!(r.ergodic.holds && r.weak_mixing.holds && r.strong_mixing.holds && r.k_property.holds);
        assert!((r.spectral_gap - 1.5).abs() < 1e-9);
        assert_eq!(r.correlation_strong_mixing, Some(true));
        assert!(!r.flagged);
        let d: Vec<f64> = r.abel_samples.iter().map(|a| a.distance_to_projection).collect();
        assert!(d[0] > d[1] && d[1] > d[2]);
    }

    #[test]
    fn dephasing_and_unitary_classification() {
        let q = dephasing();
        let s = DensityState::maximally_mixed(2);
        let r = spectral_classification(&q, &s, &tol()).unwrap();
        assert!(!r.ergodic.holds && !r.strong_mixing.holds && !r.k_property.holds);
        assert!(!r.flagged);

        let q = gen(pauli_z(), vec![]);
        let r = spectral_classification(&q, &s, &tol()).unwrap();
        assert!(!r.strong_mixing.holds && r.correlation_inconclusive);
        assert_eq!(r.spectral_gap, 0.0);
        let mut imag: Vec<f64> = r.peripheral_spectrum.iter().map(|l| l.im).collect();
        imag.sort_by(f64::total_cmp);
        assert!((imag[0] + 2.0).abs() < 1e-9 && (imag[3] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn three_state_chain_is_not_k() {
        let q = classical_chain_embed(&three_state_chain(), &tol()).unwrap();
        let s = canonical(&q);
        let spectrum = spectral_data(&q).unwrap();
        let h = default_horizon(&q, &spectrum);
        assert!(!k_property_test(&q, &s, h, CORRELATION_TOL).unwrap().holds);
        assert!(!spectral_classification(&q, &s, &tol()).unwrap().ergodic.holds);
    }

    #[test]
    fn type_i_cross_checks() {
        let q = thermal();
        let s = canonical(&q);
        let (adj, _, _) = kms_adjoint(&q, &s, &tol()).unwrap();
        let r = cross_check_type_i(&q, &s, &adj, &tol()).unwrap();
        assert!(r.all_agree && r.strong_mixing);
        let p = conjecture_probe(&q, &s, &adj).unwrap();
        assert!(p.forward_k && p.adjoint_k);

        let q = dephasing();
        let s = DensityState::maximally_mixed(2);
        let (adj, _, _) = kms_adjoint(&q, &s, &tol()).unwrap();
        let r = cross_check_type_i(&q, &s, &adj, &tol()).unwrap();
        assert!(r.all_agree && !r.strong_mixing);
        let p = conjecture_probe(&q, &s, &adj).unwrap();
        assert!(!p.forward_k && !p.adjoint_k);

        let q = gen(zeros(2, 2), vec![sigma_minus()]);
        let s = canonical(&q);
        assert!(matches!(
            cross_check_type_i(&q, &s, &q, &tol()),
            Err(Error::NotFaithful { .. })
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let q = thermal();
        let s = canonical(&q);
        let rows = decay_table(&q, &s, &decay_times(10.0, 5)).unwrap();
        let csv = to_csv(&rows);
        assert!(csv.starts_with("t,value\n"));
        assert_eq!(csv.lines().count(), 6);
        assert!(rows[4].1 < rows[0].1);
    }
}

//! The full analysis pipeline and its serializable report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{
    detailed_balance_decomposition, j_correlation, kms_adjoint, to_pairs, AdjointChecks, DetailedBalance,
    MODULAR_SIGN_CONVENTION,
};
use crate::algebra::{conditional_expectation, ClosureResiduals, StarSubalgebra};
use crate::asymptotics::{
    conjecture_probe, cross_check_type_i, default_horizon, k_property_test, spectral_classification_at, spectral_data,
    AsymptoticsReport, ConjectureRecord, KPropertyTest, TypeICrossCheck, CORRELATION_TOL, PERIPHERAL_TOL,
};
use crate::dilation::{
    build_dilation_space, default_tails, k_shift_probe, run_dilation_checks, shift_isometry_check, DilationChecks,
    KShiftProbe, TimeGrid, DEFAULT_CAP, GRAM_PSD_SLACK,
};
use crate::error::Result;
use crate::fixedpoints::{
    cal_e_map, convergence_verdict, fixed_point_set, g_algebra, inclusion_chain, irreducibility_report,
    multiplicative_domain_algebra, ConvergenceVerdict, FaithfulAlgebras, InclusionChain, IrreducibilityReport,
    SUBSPACE_TOL,
};
use crate::matrixcore::{hermitian_eigen, matrix_units, random_matrix, Tolerances};
use crate::models::LoadedModel;
use crate::semigroup::{minimal_semigroup_iterate, schwarz_gap, semigroup_law_residual, Kind};
use crate::states::{
    certificate_alphabet, invariant_states, is_injective, is_subharmonic, reachability_tower, subharmonic_limit,
    SubharmonicVerdict,
};
use crate::superop::is_cp_unital;

pub const SCHEMA: &str = "qsemigroup-report/1";

type Pairs = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub vectorization: String,
    pub kraus_form: String,
    pub modular_sign: String,
    pub dilation_tuple_order: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            vectorization: "column-stacking: vec(A X B) = (B^T kron A) vec(X)".into(),
            kraus_form: "Heisenberg picture: Phi(x) = sum_k K_k^* x K_k".into(),
            modular_sign: MODULAR_SIGN_CONVENTION.into(),
            dilation_tuple_order:
                "earliest grid time is the fastest-varying slot; latest time is innermost in the kernel".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportTolerances {
    pub algebraic: f64,
    pub rank_cutoff_factor: f64,
    pub psd_slack: f64,
    pub subspace_equality: f64,
    pub correlation: f64,
    pub peripheral: f64,
    pub gram_psd_slack: f64,
}

impl ReportTolerances {
    fn from(tol: &Tolerances) -> Self {
        Self {
            algebraic: tol.algebraic,
            rank_cutoff_factor: tol.rank_cutoff_factor,
            psd_slack: tol.psd_slack,
            subspace_equality: SUBSPACE_TOL,
            correlation: CORRELATION_TOL,
            peripheral: PERIPHERAL_TOL,
            gram_psd_slack: GRAM_PSD_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub name: String,
    pub kind: Kind,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hamiltonian: Option<Pairs>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub lindblads: Vec<Pairs>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stochastic_matrix: Option<Vec<Vec<f64>>>,
}

/// Complete positivity, unitality, the semigroup law and the Schwarz
/// inequality at the sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSection {
    pub times: Vec<f64>,
    pub max_unital_residual: f64,
    pub min_choi_eigenvalue: f64,
    pub max_semigroup_law_residual: f64,
    pub min_schwarz_eigenvalue: f64,
    pub passed: bool,
}

pub const GATE_UNITAL: f64 = 1e-10;
pub const GATE_CHOI: f64 = -1e-10;
pub const GATE_LAW: f64 = 1e-9;
pub const GATE_SCHWARZ: f64 = -1e-9;

pub fn structural_gates(model: &LoadedModel, schwarz_samples: usize, tol: &Tolerances) -> Result<GateSection> {
    let qms = &model.qms;
    let times = qms.sample_times();
    let d = qms.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a7e);
    let mut out = GateSection {
        times: times.clone(),
        max_unital_residual: 0.0,
        min_choi_eigenvalue: f64::INFINITY,
        max_semigroup_law_residual: 0.0,
        min_schwarz_eigenvalue: f64::INFINITY,
        passed: false,
    };
    for &t in &times {
        let tau = qms.evolve(t)?;
        let v = is_cp_unital(&tau, tol);
        out.max_unital_residual = out.max_unital_residual.max(v.unital_residual);
        out.min_choi_eigenvalue = out.min_choi_eigenvalue.min(v.choi_min_eigenvalue);
        for &s in &times {
            out.max_semigroup_law_residual = out.max_semigroup_law_residual.max(semigroup_law_residual(qms, s, t)?);
        }
        for _ in 0..schwarz_samples {
            let y = random_matrix(&mut rng, d, d);
            out.min_schwarz_eigenvalue = out.min_schwarz_eigenvalue.min(schwarz_gap(&tau, &y));
        }
    }
    out.passed = out.max_unital_residual <= GATE_UNITAL
        && out.min_choi_eigenvalue >= GATE_CHOI
        && out.max_semigroup_law_residual <= GATE_LAW
        && out.min_schwarz_eigenvalue >= GATE_SCHWARZ;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSummary {
    pub dimension: usize,
    pub spans_all: bool,
    pub stabilized_at: usize,
    /// The tower spans everything exactly when `lim τ_t(p)` is injective.
    pub consistent_with_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSection {
    pub state: Pairs,
    pub eigenvalues: Vec<f64>,
    pub faithful: bool,
    pub rank: usize,
    pub invariance_residual: f64,
    /// Dimension of the space of invariant functionals.
    pub kernel_dimension: usize,
    pub support: Pairs,
    pub support_subharmonic: Option<SubharmonicVerdict>,
    /// `lim τ_t(p)` for the support `p`.
    pub support_limit: Option<Pairs>,
    pub tower: Option<TowerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraSummary {
    pub dimension: usize,
    pub basis: Vec<Pairs>,
    pub closure: ClosureResiduals,
}

impl AlgebraSummary {
    fn of(a: &StarSubalgebra) -> Self {
        Self {
            dimension: a.dimension(),
            basis: a.basis().iter().map(to_pairs).collect(),
            closure: a.closure_residuals(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSection {
    pub fixed: AlgebraSummary,
    /// Literal fixed-square conditions were imposed (non-faithful state).
    pub literal: bool,
    pub multiplicative_domain: Option<AlgebraSummary>,
    pub multiplicative_saturation_residual: Option<f64>,
    pub g_algebra: Option<AlgebraSummary>,
    pub inclusion: Option<InclusionChain>,
    pub irreducibility: IrreducibilityReport,
    pub convergence: ConvergenceVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalESummary {
    pub convergence_residual: f64,
    pub converged: bool,
    pub commuting: bool,
    pub idempotence_residual: Option<f64>,
    pub expectation_residual: Option<f64>,
}

/// J-twisted correlation against the two-point correlation at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistedCorrelation {
    /// `max |φ_0(J τ_T(x) J τ_T(y)) - conj(φ_0(x)) φ_0(y)|` over matrix units.
    pub twisted_deviation: f64,
    pub twisted_decays: bool,
    pub twopoint_decays: bool,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointSection {
    pub checks: AdjointChecks,
    pub detailed_balance: DetailedBalance,
    pub cal_e: CalESummary,
    pub adjoint_k: KPropertyTest,
    pub twisted_correlation: TwistedCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationSection {
    pub grid: Vec<f64>,
    pub checks: DilationChecks,
    pub shift_by: f64,
    pub shift_residual: f64,
    pub k_shift_base: Vec<f64>,
    pub k_shift: KShiftProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub conventions: Conventions,
    pub tolerances: ReportTolerances,
    pub model: ModelSection,
    pub gates: GateSection,
    pub invariant: InvariantSection,
    pub fixed_points: Option<FixedPointSection>,
    pub adjoint: Option<AdjointSection>,
    pub asymptotics: Option<AsymptoticsReport>,
    pub type_i: Option<TypeICrossCheck>,
    pub conjecture: Option<ConjectureRecord>,
    pub dilation: Option<DilationSection>,
    /// Verdict-level problems: failed gates, disagreeing cross-checks,
    /// residuals above their bounds, or sections that could not be computed.
    pub findings: Vec<String>,
}

impl Report {
    /// 0 when every gate passes and nothing was flagged, otherwise 2.
    pub fn exit_code(&self) -> i32 {
        if self.findings.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))
    }
}

/// Which parts of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub fixed_points: bool,
    pub adjoint: bool,
    pub asymptotics: bool,
    pub dilation: bool,
}

impl Sections {
    pub const ALL: Self = Self {
        fixed_points: true,
        adjoint: true,
        asymptotics: true,
        dilation: true,
    };
    pub const NONE: Self = Self {
        fixed_points: false,
        adjoint: false,
        asymptotics: false,
        dilation: false,
    };
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub tol: Tolerances,
    /// Overrides the `50 / gap` horizon.
    pub horizon: Option<f64>,
    pub grid: Option<TimeGrid>,
    pub tails: Option<Vec<f64>>,
    pub cap: usize,
    pub schwarz_samples: usize,
    pub sections: Sections,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            horizon: None,
            grid: None,
            tails: None,
            cap: DEFAULT_CAP,
            schwarz_samples: 100,
            sections: Sections::ALL,
        }
    }
}

/// Bounds applied to dilation residuals when collecting findings.
pub const DILATION_BOUND: f64 = 1e-8;
pub const MONOTONICITY_BOUND: f64 = 1e-9;
pub const SHIFT_BOUND: f64 = 1e-10;

fn model_section(model: &LoadedModel) -> ModelSection {
    ModelSection {
        name: model.name.clone(),
        kind: model.qms.kind(),
        dim: model.qms.dim(),
        hamiltonian: model.gksl.as_ref().map(|m| to_pairs(m.hamiltonian())),
        lindblads: model
            .gksl
            .as_ref()
            .map(|m| m.lindblads().iter().map(to_pairs).collect())
            .unwrap_or_default(),
        stochastic_matrix: model.stochastic.clone(),
    }
}

fn invariant_section(model: &LoadedModel, tol: &Tolerances, findings: &mut Vec<String>) -> Result<InvariantSection> {
    let qms = &model.qms;
    let state = &model.state;
    let inv = invariant_states(qms, tol)?;
    let (eigenvalues, _) = hermitian_eigen(state.rho());
    let p = state.support().clone();
    let rank = p.trace().re.round() as usize;
    let mut out = InvariantSection {
        state: to_pairs(state.rho()),
        eigenvalues,
        faithful: state.is_faithful(),
        rank,
        invariance_residual: state.invariance_residual(qms),
        kernel_dimension: inv.kernel_basis.len(),
        support: to_pairs(&p),
        support_subharmonic: None,
        support_limit: None,
        tower: None,
    };
    let alphabet = match certificate_alphabet(qms, model.gksl.as_ref(), tol) {
        Ok(a) => a,
        Err(e) => {
            findings.push(format!("support certificates unavailable: {e}"));
            return Ok(out);
        }
    };
    let verdict = is_subharmonic(&p, qms, &alphabet, tol)?;
    out.support_subharmonic = Some(verdict);
    if verdict.algebraic_pass != verdict.dynamic_pass {
        findings.push("support projection: algebraic and dynamic sub-harmonic certificates disagree".into());
    }
    if verdict.is_subharmonic {
        let limit = subharmonic_limit(&p, qms, &alphabet, tol)?;
        let d = qms.dim();
        let tower = reachability_tower(&p, &alphabet, d * d);
        let injective = is_injective(&limit.y, tol);
        let consistent = tower.spans_all == injective;
        if !consistent {
            findings.push("reachability tower disagrees with injectivity of lim τ_t(p)".into());
        }
        out.support_limit = Some(to_pairs(&limit.y));
        out.tower = Some(TowerSummary {
            dimension: tower.dimension,
            spans_all: tower.spans_all,
            stabilized_at: tower.stabilized_at,
            consistent_with_limit: consistent,
        });
    } else {
        findings.push("support of the invariant state is not sub-harmonic".into());
    }
    Ok(out)
}

fn horizon_for(model: &LoadedModel, options: &AnalysisOptions) -> Result<f64> {
    match options.horizon {
        Some(h) => Ok(model.qms.admissible_time(h)),
        None => Ok(default_horizon(&model.qms, &spectral_data(&model.qms)?)),
    }
}

struct FixedPointOutputs {
    section: FixedPointSection,
    n: StarSubalgebra,
    g: Option<StarSubalgebra>,
}

fn fixed_point_section(
    model: &LoadedModel,
    horizon: f64,
    adjoint: Option<&crate::semigroup::Qms>,
    tol: &Tolerances,
    findings: &mut Vec<String>,
) -> Result<FixedPointOutputs> {
    let qms = &model.qms;
    let state = &model.state;
    let fixed = fixed_point_set(qms, state, tol)?;
    let irreducibility = irreducibility_report(model.gksl.as_ref(), qms, state, tol)?;
    let alphabet = certificate_alphabet(qms, model.gksl.as_ref(), tol)?;
    let (f, g, convergence) = if state.is_faithful() {
        let f = multiplicative_domain_algebra(qms, state, tol)?;
        let g = match adjoint {
            Some(adj) => Some(g_algebra(qms, adj, &qms.sample_times(), tol)?.algebra),
            None => None,
        };
        let verdict = convergence_verdict(
            qms,
            state,
            Some(FaithfulAlgebras {
                n: &fixed.algebra,
                f: &f.algebra,
                g: g.as_ref(),
            }),
            &alphabet,
            horizon,
            tol,
        )?;
        (Some(f), g, verdict)
    } else {
        let verdict = convergence_verdict(qms, state, None, &alphabet, horizon, tol)?;
        (None, None, verdict)
    };
    if !convergence.consistent {
        findings.push(format!(
            "predicted limit not reached at T = {}: deviation {:?}, Abel deviation {:?}",
            convergence.horizon, convergence.max_deviation, convergence.abel_deviation
        ));
    }
    let inclusion = match (&f, &g) {
        (Some(f), Some(g)) => {
            let chain = inclusion_chain(&fixed.algebra, g, &f.algebra);
            if !chain.holds {
                findings.push(format!("inclusion chain N ⊆ G ⊆ F fails: {chain:?}"));
            }
            Some(chain)
        }
        _ => None,
    };
    if fixed.closure.max() > SUBSPACE_TOL {
        findings.push(format!("fixed-point set is not a *-algebra: {:?}", fixed.closure));
    }
    let section = FixedPointSection {
        fixed: AlgebraSummary::of(&fixed.algebra),
        literal: fixed.literal,
        multiplicative_domain: f.as_ref().map(|f| AlgebraSummary::of(&f.algebra)),
        multiplicative_saturation_residual: f.as_ref().map(|f| f.saturation_residual),
        g_algebra: g.as_ref().map(AlgebraSummary::of),
        inclusion,
        irreducibility,
        convergence,
    };
    Ok(FixedPointOutputs {
        section,
        n: fixed.algebra,
        g,
    })
}

fn twisted_correlation(
    model: &LoadedModel,
    modular: &crate::adjoint::ModularData,
    horizon: f64,
) -> Result<TwistedCorrelation> {
    let state = &model.state;
    let units = matrix_units(model.qms.dim());
    let mut worst = 0.0f64;
    for x in &units {
        let px = state.expect(x).conj();
        for y in &units {
            let v = j_correlation(&model.qms, modular, x, y, horizon)?;
            worst = worst.max((v - px * state.expect(y)).norm());
        }
    }
    let k = k_property_test(&model.qms, state, horizon, CORRELATION_TOL)?;
    let twisted_decays = worst <= CORRELATION_TOL;
    Ok(TwistedCorrelation {
        twisted_deviation: worst,
        twisted_decays,
        twopoint_decays: k.holds,
        agree: twisted_decays == k.holds,
    })
}

fn dilation_section(
    model: &LoadedModel,
    options: &AnalysisOptions,
    findings: &mut Vec<String>,
) -> Result<DilationSection> {
    let qms = &model.qms;
    let tol = &options.tol;
    let grid = match &options.grid {
        Some(g) => g.clone(),
        None => TimeGrid::new(vec![0.0, 1.0])?,
    };
    let space = build_dilation_space(qms, &model.state, &grid, options.cap, tol)?;
    let checks = run_dilation_checks(&space, tol)?;
    let shift_by = 1.0;
    let shift_residual = shift_isometry_check(qms, &model.state, &grid, shift_by, options.cap, tol)?;
    let base = match &options.grid {
        Some(g) => g.clone(),
        None => TimeGrid::new(vec![0.0])?,
    };
    let horizon = horizon_for(model, options)?;
    let tails = options
        .tails
        .clone()
        .unwrap_or_else(|| default_tails(qms, base.points()[0], horizon));
    let k_shift = k_shift_probe(qms, &model.state, &base, &tails, options.cap, tol)?;

    if checks.gram_min_eigenvalue < -GRAM_PSD_SLACK {
        findings.push(format!("dilation Gram matrix not PSD: {}", checks.gram_min_eigenvalue));
    }
    for (what, value, bound) in [
        ("kernel reproduction", checks.reproduction_residual, DILATION_BOUND),
        ("Markov property", checks.markov_residual, DILATION_BOUND),
        (
            "filtration monotonicity",
            checks.monotonicity_residual,
            MONOTONICITY_BOUND,
        ),
        (
            "filtration closed form",
            checks.filtration_closed_form_residual,
            DILATION_BOUND,
        ),
        ("homomorphism", checks.homomorphism.max(), DILATION_BOUND),
        ("cyclic reconstruction", checks.cyclic_residual, DILATION_BOUND),
        ("shift stationarity", shift_residual, SHIFT_BOUND),
        (
            "compression",
            checks.compression.map_or(0.0, |c| c.max()),
            DILATION_BOUND,
        ),
    ] {
        if value > bound {
            findings.push(format!("dilation {what} residual {value:e} exceeds {bound:e}"));
        }
    }
    if k_shift.conclusive && !k_shift.agree {
        findings.push(format!(
            "K-shift probe ({}) disagrees with the two-point K-property test ({})",
            k_shift.evidence, k_shift.k_property
        ));
    }
    Ok(DilationSection {
        grid: grid.points().to_vec(),
        checks,
        shift_by,
        shift_residual,
        k_shift_base: base.points().to_vec(),
        k_shift,
    })
}

fn record<T>(what: &str, r: Result<T>, findings: &mut Vec<String>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            findings.push(format!("{what} could not be computed: {e}"));
            None
        }
    }
}

/// Runs the selected sections. Errors in the model itself propagate;
/// failures inside a section are recorded as findings.
pub fn analyze(model: &LoadedModel, options: &AnalysisOptions) -> Result<Report> {
    let tol = &options.tol;
    let mut findings = Vec::new();
    let gates = structural_gates(model, options.schwarz_samples, tol)?;
    if !gates.passed {
        findings.push(format!("structural gates failed: {gates:?}"));
    }
    let invariant = invariant_section(model, tol, &mut findings)?;
    let horizon = horizon_for(model, options)?;
    let faithful = model.state.is_faithful();
    let s = options.sections;

    let adjoint_parts = if faithful && (s.adjoint || s.fixed_points || s.asymptotics) {
        record("KMS adjoint", kms_adjoint(&model.qms, &model.state, tol), &mut findings)
    } else {
        None
    };

    let fixed = if s.fixed_points {
        record(
            "fixed-point analysis",
            fixed_point_section(model, horizon, adjoint_parts.as_ref().map(|a| &a.0), tol, &mut findings),
            &mut findings,
        )
    } else {
        None
    };

    let adjoint = match (&adjoint_parts, s.adjoint) {
        (Some((adj, modular, checks)), true) => record(
            "adjoint analysis",
            (|| -> Result<AdjointSection> {
                let db = detailed_balance_decomposition(&model.qms, adj)?;
                let expectation = match &fixed {
                    Some(f) if f.g.as_ref().is_some_and(|g| f.n.equality_residual(g) <= SUBSPACE_TOL) => {
                        Some(conditional_expectation(&f.n, &model.state, tol)?.0)
                    }
                    _ => None,
                };
                let cal = cal_e_map(&model.qms, adj, horizon, expectation.as_ref(), db.is_normal)?;
                let adjoint_k = k_property_test(adj, &model.state, horizon, CORRELATION_TOL)?;
                let twisted = twisted_correlation(model, modular, horizon)?;
                Ok(AdjointSection {
                    checks: *checks,
                    detailed_balance: db,
                    cal_e: CalESummary {
                        convergence_residual: cal.convergence_residual,
                        converged: cal.converged,
                        commuting: cal.commuting,
                        idempotence_residual: cal.idempotence_residual,
                        expectation_residual: cal.expectation_residual,
                    },
                    adjoint_k,
                    twisted_correlation: twisted,
                })
            })(),
            &mut findings,
        ),
        _ => None,
    };
    if let Some(a) = &adjoint {
        if !a.twisted_correlation.agree {
            findings.push("J-twisted and two-point correlation limits disagree".into());
        }
    }

    let mut asymptotics = None;
    let mut type_i = None;
    let mut conjecture = None;
    if s.asymptotics {
        asymptotics = record(
            "asymptotics",
            spectral_classification_at(&model.qms, &model.state, options.horizon, tol),
            &mut findings,
        );
        if let Some(a) = asymptotics.as_mut() {
            if a.flagged {
                findings.push(format!(
                    "asymptotic verdicts inconsistent: chain holds = {}, spectral/correlation = {:?} vs {}, K tests agree = {}",
                    a.implication_chain_holds, a.correlation_strong_mixing, a.strong_mixing.holds, a.k_test.agree
                ));
            }
            if let Some((adj, _, _)) = &adjoint_parts {
                if let Some(r) = record(
                    "type I cross-check",
                    cross_check_type_i(&model.qms, &model.state, adj, tol),
                    &mut findings,
                ) {
                    if !r.all_agree {
                        findings.push(format!("equivalent mixing conditions disagree: {r:?}"));
                    }
                    type_i = Some(r);
                }
                if let Some(r) = record(
                    "adjoint K-property probe",
                    conjecture_probe(&model.qms, &model.state, adj),
                    &mut findings,
                ) {
                    a.adjoint_k_property = Some(r.adjoint_k);
                    if r.disagree {
                        findings.push(format!(
                            "forward and adjoint K-property verdicts differ: ({}, {})",
                            r.forward_k, r.adjoint_k
                        ));
                    }
                    conjecture = Some(r);
                }
            }
        }
    }

    let dilation = if s.dilation {
        let r = dilation_section(model, options, &mut findings);
        record("dilation", r, &mut findings)
    } else {
        None
    };

    Ok(Report {
        schema: SCHEMA.into(),
        conventions: Conventions::default(),
        tolerances: ReportTolerances::from(tol),
        model: model_section(model),
        gates,
        invariant,
        fixed_points: fixed.map(|f| f.section),
        adjoint,
        asymptotics,
        type_i,
        conjecture,
        dilation,
        findings,
    })
}

/// One entry of a forward/adjoint K-property batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureEntry {
    pub model: String,
    pub record: ConjectureRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureBatch {
    pub entries: Vec<ConjectureEntry>,
    /// Models whose forward and adjoint verdicts differ.
    pub disagreements: Vec<String>,
    /// Models skipped because no faithful invariant state was found.
    pub skipped: Vec<String>,
}

impl ConjectureBatch {
    pub fn exit_code(&self) -> i32 {
        if self.disagreements.is_empty() {
            0
        } else {
            2
        }
    }

    /// Counts of `(forward K, adjoint K)` pairs.
    pub fn counts(&self) -> [((bool, bool), usize); 4] {
        let mut out = [
            ((true, true), 0),
            ((true, false), 0),
            ((false, true), 0),
            ((false, false), 0),
        ];
        for e in &self.entries {
            for slot in out.iter_mut() {
                if slot.0 == (e.record.forward_k, e.record.adjoint_k) {
                    slot.1 += 1;
                }
            }
        }
        out
    }
}

/// Model used for seed `s` in a conjecture batch: generic random models
/// on even seeds, structured models with nontrivial fixed points on odd ones.
pub fn conjecture_batch_model(seed: u64, tol: &Tolerances) -> Result<LoadedModel> {
    if seed.is_multiple_of(2) {
        crate::models::builtin(&format!("random({seed})"), tol)
    } else {
        crate::models::builtin(&format!("random_structured({seed})"), tol)
    }
}

fn probe_one(seed: u64, tol: &Tolerances) -> Result<std::result::Result<ConjectureEntry, String>> {
    let m = conjecture_batch_model(seed, tol)?;
    if !m.state.is_faithful() {
        return Ok(Err(m.name));
    }
    let (adj, _, _) = kms_adjoint(&m.qms, &m.state, tol)?;
    let record = conjecture_probe(&m.qms, &m.state, &adj)?;
    Ok(Ok(ConjectureEntry { model: m.name, record }))
}

/// Probes seeds `start..start + count`, spread over the available cores.
pub fn conjecture_batch(start: u64, count: u64, tol: &Tolerances) -> Result<ConjectureBatch> {
    let seeds: Vec<u64> = (start..start + count).collect();
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len().max(1));
    let results: Vec<Result<std::result::Result<ConjectureEntry, String>>> = if threads <= 1 {
        seeds.iter().map(|&s| probe_one(s, tol)).collect()
    } else {
        let chunk = seeds.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&s| probe_one(s, tol)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("probe worker panicked"))
                .collect()
        })
    };
    let mut batch = ConjectureBatch {
        entries: Vec::new(),
        disagreements: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r? {
            Ok(entry) => {
                if entry.record.disagree {
                    batch.disagreements.push(entry.model.clone());
                }
                batch.entries.push(entry);
            }
            Err(name) => batch.skipped.push(name),
        }
    }
    Ok(batch)
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Human-readable summary of a report.
/// Comparison of the minimal-semigroup iterates with the exponential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalCheck {
    pub model: String,
    pub time: f64,
    pub steps: usize,
    pub mesh: f64,
    /// `max ||τ^(n)_t(x) - τ_t(x)||` over matrix units `x`.
    pub max_error: f64,
    /// Iterates are nondecreasing and bounded for every diagonal unit.
    pub monotone: bool,
    pub mesh_too_coarse: bool,
    pub error_bound: f64,
}

impl MinimalCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.error_bound && self.monotone
    }
}

/// Largest accepted gap between the last Picard iterate and `τ_t`.
pub const MINIMAL_ERROR_BOUND: f64 = 1e-6;

/// Runs the minimal-semigroup iteration on every matrix unit.
pub fn minimal_check(
    model: &LoadedModel,
    time: f64,
    steps: usize,
    mesh: f64,
    tol: &Tolerances,
) -> Result<MinimalCheck> {
    let gksl = model.gksl.as_ref().ok_or_else(|| {
        crate::error::Error::InvalidArgument("the minimal-semigroup iteration needs a GKSL model".into())
    })?;
    let d = model.qms.dim();
    let tau = model.qms.evolve(time)?;
    let mut max_error = 0.0f64;
    let mut monotone = true;
    let mut coarse = false;
    for a in 0..d {
        for b in 0..d {
            let x = crate::matrixcore::matrix_unit(d, a, b);
            let psd = a == b;
            let it = minimal_semigroup_iterate(gksl, &x, time, steps, mesh, psd, tol)?;
            max_error = max_error.max((it.last() - tau.apply(&x)).norm());
            coarse |= it.mesh_too_coarse;
            if psd {
                monotone &= it.is_monotone();
            }
        }
    }
    Ok(MinimalCheck {
        model: model.name.clone(),
        time,
        steps,
        mesh,
        max_error,
        monotone,
        mesh_too_coarse: coarse,
        error_bound: MINIMAL_ERROR_BOUND,
    })
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!(
        "model: {} ({:?}, d = {})",
        r.model.name, r.model.kind, r.model.dim
    ));
    line(format!(
        "gates: {} (unital {:.1e}, choi {:.1e}, law {:.1e}, schwarz {:.1e})",
        if r.gates.passed { "pass" } else { "FAIL" },
        r.gates.max_unital_residual,
        r.gates.min_choi_eigenvalue,
        r.gates.max_semigroup_law_residual,
        r.gates.min_schwarz_eigenvalue
    ));
    let inv = &r.invariant;
    line(format!(
        "invariant state: eigenvalues {:?}, faithful {}, invariant functionals {}",
        inv.eigenvalues.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
        yes(inv.faithful),
        inv.kernel_dimension
    ));
    if let Some(v) = &inv.support_subharmonic {
        line(format!(
            "support sub-harmonic: {} (algebraic {:.1e}, dynamic min-eig {:.1e})",
            yes(v.is_subharmonic),
            v.algebraic_residual,
            v.dynamic_min_eigenvalue
        ));
    }
    if let Some(t) = &inv.tower {
        line(format!(
            "reachability tower: dim {}, spans all {}, consistent {}",
            t.dimension,
            yes(t.spans_all),
            yes(t.consistent_with_limit)
        ));
    }
    if let Some(f) = &r.fixed_points {
        line(format!(
            "fixed points N: dim {}{}; irreducible {}",
            f.fixed.dimension,
            if f.literal { " (literal conditions)" } else { "" },
            yes(f.irreducibility.fixed_is_scalar)
        ));
        if let Some(m) = &f.multiplicative_domain {
            line(format!("multiplicative domain F: dim {}", m.dimension));
        }
        if let Some(g) = &f.g_algebra {
            line(format!("G algebra: dim {}", g.dimension));
        }
        let c = &f.convergence;
        line(format!(
            "convergence: predicted {:?}, deviation {:?} at T = {}, consistent {}",
            c.predicted,
            c.max_deviation,
            c.horizon,
            yes(c.consistent)
        ));
    }
    if let Some(a) = &r.adjoint {
        line(format!(
            "KMS adjoint: residual {:.1e}; detailed balance {} (residual {:.1e}, commuting {})",
            a.checks.kms_residual,
            yes(a.detailed_balance.detailed_balance),
            a.detailed_balance.residual,
            yes(a.detailed_balance.is_normal)
        ));
    }
    if let Some(a) = &r.asymptotics {
        line(format!(
            "ergodic {} | weak mixing {} | strong mixing {} | K-property {} | gap {} | horizon {}",
            yes(a.ergodic.holds),
            yes(a.weak_mixing.holds),
            yes(a.strong_mixing.holds),
            yes(a.k_property.holds),
            a.spectral_gap,
            a.horizon
        ));
    }
    if let Some(t) = &r.type_i {
        line(format!("mixing equivalences agree: {}", yes(t.all_agree)));
    }
    if let Some(c) = &r.conjecture {
        line(format!("(forward K, adjoint K) = ({}, {})", c.forward_k, c.adjoint_k));
    }
    if let Some(d) = &r.dilation {
        let c = &d.checks;
        line(format!(
            "dilation grid {:?}: D = {} of {} tuples; markov {:.1e}, compression {:.1e}, monotone {:.1e}, shift {:.1e}",
            d.grid,
            c.dimension,
            c.tuples,
            c.markov_residual,
            c.compression.map_or(0.0, |x| x.max()),
            c.monotonicity_residual,
            d.shift_residual
        ));
        line(format!(
            "K-shift probe: evidence {}, rate {:?}, agrees with two-point test {}{}",
            yes(d.k_shift.evidence),
            d.k_shift.rate,
            yes(d.k_shift.agree),
            if d.k_shift.conclusive {
                ""
            } else {
                " (tails too short to decide)"
            }
        ));
    }
    if r.findings.is_empty() {
        line("findings: none".into());
    } else {
        line("findings:".into());
        for f in &r.findings {
            line(format!("  - {f}"));
        }
    }
    out
}

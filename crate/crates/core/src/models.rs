//! Builtin model catalog, classical Markov chain embedding and model files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{from_pairs, to_pairs};
use crate::error::{Error, Result};
use crate::matrixcore::{
    c, ensure_finite, hermiticity_residual, identity, kron, matrix_unit, pauli_z, random_hermitian, random_matrix,
    sigma_minus, sigma_plus, zeros, CMat, Tolerances,
};
use crate::semigroup::{build_generator, Kind, OpenSystemModel, Qms};
use crate::states::{invariant_states, DensityState};
use crate::superop::SuperOp;

/// A semigroup together with the data it was built from and a reference
/// invariant state.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub name: String,
    pub qms: Qms,
    /// GKSL data for continuous models.
    pub gksl: Option<OpenSystemModel>,
    /// Transition matrix for embedded classical chains.
    pub stochastic: Option<Vec<Vec<f64>>>,
    pub state: DensityState,
}

impl LoadedModel {
    fn from_gksl(name: String, model: OpenSystemModel, tol: &Tolerances) -> Result<Self> {
        let qms = build_generator(&model, tol)?;
        let state = invariant_states(&qms, tol)?.canonical;
        Ok(Self {
            name,
            qms,
            gksl: Some(model),
            stochastic: None,
            state,
        })
    }

    fn from_chain(name: String, p: Vec<Vec<f64>>, tol: &Tolerances) -> Result<Self> {
        let qms = classical_chain_embed(&p, tol)?;
        let state = invariant_states(&qms, tol)?.canonical;
        Ok(Self {
            name,
            qms,
            gksl: None,
            stochastic: Some(p),
            state,
        })
    }
}

/// Checks that `p` is square, nonnegative and row-stochastic within 1e-12.
pub fn check_stochastic(p: &[Vec<f64>]) -> Result<usize> {
    let n = p.len();
    if n == 0 {
        return Err(Error::NotStochastic("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotStochastic(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NotStochastic(format!("row {i} has entry {v}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(n)
}

/// Kraus operators `diag(√P_ii)` and `√P_ij |j⟩⟨i|` (`i ≠ j`) of the
/// embedded chain, so that `Φ(x) = Σ K* x K`.
pub fn classical_kraus(p: &[Vec<f64>]) -> Result<Vec<CMat>> {
    let n = check_stochastic(p)?;
    let mut out = vec![CMat::from_diagonal(&crate::matrixcore::CVec::from_iterator(
        n,
        (0..n).map(|i| c(p[i][i].sqrt(), 0.0)),
    ))];
    for (i, row) in p.iter().enumerate() {
        for (j, &pij) in row.iter().enumerate() {
            if i != j && pij > 0.0 {
                out.push(matrix_unit(n, j, i) * c(pij.sqrt(), 0.0));
            }
        }
    }
    Ok(out)
}

/// Discrete semigroup acting on diagonal matrices by `(Φf)(i) = Σ_j P_ij f(j)`
/// and on matrix units off the diagonal by the factor `√(P_ii P_jj)`.
pub fn classical_chain_embed(p: &[Vec<f64>], tol: &Tolerances) -> Result<Qms> {
    let kraus = classical_kraus(p)?;
    let n = p.len();
    let mut step = SuperOp::zero(n);
    for k in &kraus {
        step = step.add(&SuperOp::conjugation(k));
    }
    Qms::discrete(step, tol)
}

pub fn dephasing(gamma: f64, tol: &Tolerances) -> Result<OpenSystemModel> {
    OpenSystemModel::new(zeros(2, 2), vec![pauli_z() * c(gamma.sqrt(), 0.0)], tol)
}

pub fn amplitude_damping(gamma: f64, tol: &Tolerances) -> Result<OpenSystemModel> {
    OpenSystemModel::new(zeros(2, 2), vec![sigma_minus() * c(gamma.sqrt(), 0.0)], tol)
}

pub fn thermal_qubit(down: f64, up: f64, tol: &Tolerances) -> Result<OpenSystemModel> {
    OpenSystemModel::new(
        zeros(2, 2),
        vec![sigma_minus() * c(down.sqrt(), 0.0), sigma_plus() * c(up.sqrt(), 0.0)],
        tol,
    )
}

pub fn unitary(omega: f64, tol: &Tolerances) -> Result<OpenSystemModel> {
    OpenSystemModel::new(pauli_z() * c(omega, 0.0), vec![], tol)
}

pub fn three_state_chain() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.5, 0.5, 0.0]]
}

pub fn two_state_symmetric_chain() -> Vec<Vec<f64>> {
    vec![vec![0.5, 0.5], vec![0.5, 0.5]]
}

/// Random GKSL model of dimension 2 or 3 with two jump operators. Generic
/// draws have a unique faithful invariant state.
pub fn random_model(seed: u64, tol: &Tolerances) -> Result<OpenSystemModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=3);
    let h = random_hermitian(&mut rng, d);
    let ls = (0..2).map(|_| random_matrix(&mut rng, d, d) * c(0.7, 0.0)).collect();
    OpenSystemModel::new(h, ls, tol)
}

/// Random three-level model in which every jump feeds `|0⟩`, which is also
/// isolated by the Hamiltonian, so the unique invariant state is `|0⟩⟨0|`.
pub fn random_nonfaithful_model(seed: u64, tol: &Tolerances) -> Result<OpenSystemModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let block = random_hermitian(&mut rng, 2);
    let mut h = zeros(d, d);
    h[(0, 0)] = c(rng.gen_range(-1.0..1.0), 0.0);
    h.view_mut((1, 1), (2, 2)).copy_from(&block);
    let a: f64 = rng.gen_range(0.5..1.5);
    let b: f64 = rng.gen_range(0.5..1.5);
    let mut inner = zeros(d, d);
    inner
        .view_mut((1, 1), (2, 2))
        .copy_from(&(random_matrix(&mut rng, 2, 2) * c(0.5, 0.0)));
    let ls = vec![
        matrix_unit(d, 0, 1) * c(a, 0.0),
        matrix_unit(d, 0, 2) * c(b, 0.0),
        inner,
    ];
    OpenSystemModel::new(h, ls, tol)
}

/// Random unitary: the `Q` factor of a random complex matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, d: usize) -> CMat {
    random_matrix(rng, d, d).qr().q()
}

fn block_hermitian<R: Rng>(rng: &mut R, sizes: &[usize]) -> CMat {
    let d: usize = sizes.iter().sum();
    let mut out = zeros(d, d);
    let mut at = 0;
    for &s in sizes {
        out.view_mut((at, at), (s, s)).copy_from(&random_hermitian(rng, s));
        at += s;
    }
    out
}

/// Random GKSL model with Hermitian jump operators, so `I/d` is a faithful
/// invariant state, and a nontrivial fixed-point algebra. Even seeds give
/// block-diagonal data in a randomly rotated basis (abelian fixed points
/// spanned by the block projections); odd seeds give data of the form
/// `A ⊗ I` on `C² ⊗ C²` (fixed points `I ⊗ M_2`).
pub fn random_structured_model(seed: u64, tol: &Tolerances) -> Result<OpenSystemModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    if seed.is_multiple_of(2) {
        let layouts: [&[usize]; 4] = [&[1, 2], &[2, 2], &[1, 1, 2], &[1, 3]];
        let sizes = layouts[rng.gen_range(0..layouts.len())];
        let d: usize = sizes.iter().sum();
        let u = random_unitary(&mut rng, d);
        let h = &u * block_hermitian(&mut rng, sizes) * u.adjoint();
        let ls = (0..2)
            .map(|_| &u * block_hermitian(&mut rng, sizes) * u.adjoint() * c(0.7, 0.0))
            .collect();
        OpenSystemModel::new(h, ls, tol)
    } else {
        let i2 = identity(2);
        let h = kron(&random_hermitian(&mut rng, 2), &i2);
        let ls = (0..2)
            .map(|_| kron(&random_hermitian(&mut rng, 2), &i2) * c(0.7, 0.0))
            .collect();
        OpenSystemModel::new(h, ls, tol)
    }
}

/// Canonical spellings of the builtin catalog at default parameters.
pub const CATALOG: [&str; 8] = [
    "dephasing(0.5)",
    "amplitude_damping(1)",
    "thermal_qubit(2,1)",
    "unitary(1)",
    "three_state_chain",
    "two_state_symmetric_chain",
    "random(1)",
    "random_nonfaithful(1)",
];

fn parse_call(spec: &str) -> Result<(String, Vec<f64>)> {
    let spec = spec.trim();
    let spec = spec.strip_prefix("builtin:").unwrap_or(spec);
    let Some(open) = spec.find('(') else {
        return Ok((spec.to_string(), Vec::new()));
    };
    let name = spec[..open].trim().to_string();
    let inner = spec[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::UnknownModel(spec.to_string()))?;
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("bad model parameter `{s}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((name, args))
}

fn arg(args: &[f64], k: usize, default: f64) -> f64 {
    args.get(k).copied().unwrap_or(default)
}

fn seed(args: &[f64]) -> Result<u64> {
    let s = arg(args, 0, 0.0);
    if s < 0.0 || s.fract() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "seed must be a nonnegative integer, got {s}"
        )));
    }
    Ok(s as u64)
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
    }
}

/// Builds a builtin model from a name such as `thermal_qubit(2,1)`; the
/// `builtin:` prefix is optional.
pub fn builtin(spec: &str, tol: &Tolerances) -> Result<LoadedModel> {
    let (name, args) = parse_call(spec)?;
    match name.as_str() {
        "dephasing" => {
            let g = positive(arg(&args, 0, 0.5), "gamma")?;
            LoadedModel::from_gksl(format!("dephasing({g})"), dephasing(g, tol)?, tol)
        }
        "amplitude_damping" => {
            let g = positive(arg(&args, 0, 1.0), "gamma")?;
            LoadedModel::from_gksl(format!("amplitude_damping({g})"), amplitude_damping(g, tol)?, tol)
        }
        "thermal_qubit" => {
            let down = positive(arg(&args, 0, 2.0), "gamma_down")?;
            let up = positive(arg(&args, 1, 1.0), "gamma_up")?;
            LoadedModel::from_gksl(
                format!("thermal_qubit({down},{up})"),
                thermal_qubit(down, up, tol)?,
                tol,
            )
        }
        "unitary" => {
            let w = arg(&args, 0, 1.0);
            LoadedModel::from_gksl(format!("unitary({w})"), unitary(w, tol)?, tol)
        }
        "three_state_chain" => LoadedModel::from_chain(name, three_state_chain(), tol),
        "two_state_symmetric_chain" => LoadedModel::from_chain(name, two_state_symmetric_chain(), tol),
        "random" => {
            let s = seed(&args)?;
            LoadedModel::from_gksl(format!("random({s})"), random_model(s, tol)?, tol)
        }
        "random_structured" => {
            let s = seed(&args)?;
            LoadedModel::from_gksl(format!("random_structured({s})"), random_structured_model(s, tol)?, tol)
        }
        "random_nonfaithful" => {
            let s = seed(&args)?;
            LoadedModel::from_gksl(
                format!("random_nonfaithful({s})"),
                random_nonfaithful_model(s, tol)?,
                tol,
            )
        }
        _ => Err(Error::UnknownModel(spec.to_string())),
    }
}

type PairMatrix = Vec<Vec<[f64; 2]>>;

/// On-disk model description. Complex matrices are row-major arrays of
/// `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<PairMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lindblads: Vec<PairMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_hint: Option<PairMatrix>,
}

fn checked_matrix(m: &PairMatrix, dim: usize, what: &str) -> Result<CMat> {
    if m.len() != dim || m.iter().any(|r| r.len() != dim) {
        return Err(Error::ModelFile(format!("{what} must be {dim}x{dim}")));
    }
    let out = from_pairs(m);
    ensure_finite(&out, what).map_err(|_| Error::ModelFile(format!("{what} has non-finite entries")))?;
    Ok(out)
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }

    pub fn from_gksl(model: &OpenSystemModel) -> Self {
        Self {
            dim: model.dim(),
            kind: Kind::Continuous,
            hamiltonian: Some(to_pairs(model.hamiltonian())),
            lindblads: model.lindblads().iter().map(to_pairs).collect(),
            stochastic_matrix: None,
            state_hint: None,
        }
    }

    pub fn from_chain(p: &[Vec<f64>]) -> Self {
        Self {
            dim: p.len(),
            kind: Kind::Discrete,
            hamiltonian: None,
            lindblads: Vec::new(),
            stochastic_matrix: Some(p.to_vec()),
            state_hint: None,
        }
    }

    pub fn load(&self, name: &str, tol: &Tolerances) -> Result<LoadedModel> {
        if self.dim == 0 {
            return Err(Error::ModelFile("dim must be positive".into()));
        }
        let mut loaded = match self.kind {
            Kind::Continuous => {
                if self.stochastic_matrix.is_some() {
                    return Err(Error::ModelFile(
                        "stochastic_matrix is only valid for discrete models".into(),
                    ));
                }
                let h = match &self.hamiltonian {
                    Some(h) => checked_matrix(h, self.dim, "hamiltonian")?,
                    None => zeros(self.dim, self.dim),
                };
                let herm = hermiticity_residual(&h);
                if herm > 1e-10 {
                    return Err(Error::NotHermitian {
                        what: "hamiltonian".into(),
                        residual: herm,
                    });
                }
                let ls = self
                    .lindblads
                    .iter()
                    .enumerate()
                    .map(|(k, l)| checked_matrix(l, self.dim, &format!("lindblads[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                LoadedModel::from_gksl(name.to_string(), OpenSystemModel::new(h, ls, tol)?, tol)?
            }
            Kind::Discrete => {
                if self.hamiltonian.is_some() || !self.lindblads.is_empty() {
                    return Err(Error::ModelFile(
                        "discrete models are given by stochastic_matrix only".into(),
                    ));
                }
                let p = self
                    .stochastic_matrix
                    .clone()
                    .ok_or_else(|| Error::ModelFile("discrete model needs stochastic_matrix".into()))?;
                if p.len() != self.dim {
                    return Err(Error::ModelFile(format!(
                        "stochastic_matrix has {} rows, dim is {}",
                        p.len(),
                        self.dim
                    )));
                }
                LoadedModel::from_chain(name.to_string(), p, tol)?
            }
        };
        if let Some(hint) = &self.state_hint {
            let state = DensityState::new(checked_matrix(hint, self.dim, "state_hint")?, tol)?;
            state.require_invariant(&loaded.qms, tol)?;
            loaded.state = state;
        }
        Ok(loaded)
    }
}

/// Resolves `builtin:NAME` or reads a model file from disk.
pub fn resolve(spec: &str, tol: &Tolerances) -> Result<LoadedModel> {
    if let Some(rest) = spec.strip_prefix("builtin:") {
        return builtin(rest, tol);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Error::ModelFile(format!("cannot read `{spec}`: {e}")))?;
    ModelFile::parse(&text)?.load(spec, tol)
}

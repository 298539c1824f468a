//! Run configuration, read from and written to TOML.
//!
//! Complex numbers are `[re, im]` pairs and matrices are lists of rows.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{check_density_matrix, product_state_expand, OccupationIndex, SymBasis, SymState};
use crate::error::{Error, Result};
use crate::evolution::{Method, PropagationSpec, DEFAULT_TOL};
use crate::lambda::LambdaParams;
use crate::liouville::{gell_mann_basis, Operator, SindipModel, SuperMatrix};

pub type Complex = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    LambdaAnalytic,
    Validate,
    Dims,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "lambda-analytic" => Ok(Mode::LambdaAnalytic),
            "validate" => Ok(Mode::Validate),
            "dims" => Ok(Mode::Dims),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisSelector {
    #[default]
    GellMann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub op: Vec<Vec<Complex>>,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Hamiltonian coefficients `h_j` and Kossakowski matrix `a_jk` in an
    /// orthonormal traceless basis.
    Sindip {
        #[serde(rename = "M")]
        m: usize,
        h: Vec<Complex>,
        a: Vec<Vec<Complex>>,
        #[serde(default)]
        basis: BasisSelector,
    },
    /// Hamiltonian matrix plus jump operators with rates.
    Lindblad {
        #[serde(rename = "M")]
        m: usize,
        hamiltonian: Vec<Vec<Complex>>,
        jumps: Vec<JumpSpec>,
    },
    Lambda {
        gamma20: f64,
        gamma21: f64,
        #[serde(rename = "N0")]
        n0: f64,
        #[serde(rename = "E0")]
        e0: f64,
        #[serde(rename = "E1")]
        e1: f64,
        #[serde(rename = "E2")]
        e2: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub occupation: Vec<u32>,
    pub coeff: Complex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    /// `ρ₁^{⊗N}`.
    Product { rho: Vec<Vec<Complex>> },
    /// Explicit coefficients on symmetric basis vectors.
    Basis { entries: Vec<BasisEntry> },
    /// Product of a random single-system density matrix drawn from `seed`.
    Random,
    /// A state previously written with [`SymState::to_json`].
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub name: String,
    /// `|i⟩⟨j|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyad: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<Complex>>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<TimeGrid>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    pub output: OutputSpec,
    /// Directory against which relative paths are resolved; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn complex(z: &Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn matrix(rows: &[Vec<Complex>], what: &str) -> Result<DMatrix<C64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("{what} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| complex(&rows[i][j])))
}

fn operator(rows: &[Vec<Complex>], m: usize, what: &str) -> Result<Operator> {
    let mat = matrix(rows, what)?;
    if mat.nrows() != m {
        return Err(Error::DimensionMismatch(format!("{what} is {0}x{0}, expected {m}x{m}", mat.nrows())));
    }
    Operator::new(mat)
}

impl ModelSpec {
    pub fn levels(&self) -> usize {
        match self {
            ModelSpec::Sindip { m, .. } | ModelSpec::Lindblad { m, .. } => *m,
            ModelSpec::Lambda { .. } => 3,
        }
    }

    pub fn lambda_params(&self, n: usize) -> Option<LambdaParams> {
        match *self {
            ModelSpec::Lambda { gamma20, gamma21, n0, e0, e1, e2 } => {
                Some(LambdaParams { n, gamma20, gamma21, n0, e0, e1, e2 })
            }
            _ => None,
        }
    }

    /// Single-system generator after all model invariants have been checked.
    pub fn single_liouvillian(&self, n: usize) -> Result<SuperMatrix> {
        match self {
            ModelSpec::Sindip { m, h, a, basis: BasisSelector::GellMann } => {
                let h = h.iter().map(complex).collect();
                let model = SindipModel::new(h, gell_mann_basis(*m)?, matrix(a, "Kossakowski matrix")?)?;
                Ok(model.liouvillian())
            }
            ModelSpec::Lindblad { m, hamiltonian, jumps } => {
                let h = operator(hamiltonian, *m, "hamiltonian")?;
                let jumps = jumps
                    .iter()
                    .map(|j| Ok((operator(&j.op, *m, "jump operator")?, j.rate)))
                    .collect::<Result<Vec<_>>>()?;
                // the structured form enforces Hermiticity and a PSD Kossakowski matrix
                Ok(SindipModel::from_lindblad(&h, &jumps)?.liouvillian())
            }
            ModelSpec::Lambda { .. } => crate::lambda::lambda_single_liouvillian(&self.lambda_params(n).unwrap()),
        }
    }
}

impl ObservableSpec {
    pub fn operator(&self, m: usize) -> Result<Operator> {
        match (&self.dyad, &self.matrix) {
            (Some([i, j]), None) => {
                if *i >= m || *j >= m {
                    return Err(Error::InvalidArgument(format!(
                        "observable `{}` indexes outside {m} levels",
                        self.name
                    )));
                }
                Ok(Operator::dyad(m, *i, *j))
            }
            (None, Some(rows)) => operator(rows, m, &format!("observable `{}`", self.name)),
            _ => Err(Error::InvalidArgument(format!(
                "observable `{}` needs exactly one of `dyad` or `matrix`",
                self.name
            ))),
        }
    }
}

/// Random density matrix `G G† / Tr(G G†)` with uniform entries.
pub fn random_density(rng: &mut ChaCha8Rng, m: usize) -> Operator {
    let g = DMatrix::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let p = &g * g.adjoint();
    let tr = p.trace();
    Operator::from_matrix_unchecked(p / tr)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn levels(&self) -> usize {
        self.model.levels()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::InvalidArgument(format!("tolerance {} outside (0, 1e-2]", self.tol)));
        }
        if self.levels() < 2 {
            return Err(Error::InvalidModel("need at least two levels".into()));
        }
        self.model.single_liouvillian(self.n)?;
        if let Some(InitialState::File { path }) = &self.initial_state {
            let p = self.resolve(path);
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!("initial state file {} does not exist", p.display())));
            }
        }
        if matches!(self.mode, Mode::Simulate | Mode::LambdaAnalytic) {
            if self.initial_state.is_none() {
                return Err(Error::InvalidArgument("mode needs an `initial_state`".into()));
            }
            self.spec()?;
            for o in &self.observables {
                o.operator(self.levels())?;
            }
            let mut names: Vec<&str> = self.observables.iter().map(|o| o.name.as_str()).collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument("observable names must be unique".into()));
            }
        }
        if self.mode == Mode::LambdaAnalytic && self.model.lambda_params(self.n).is_none() {
            return Err(Error::InvalidArgument("lambda-analytic mode needs a `lambda` model".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<PropagationSpec> {
        let g = self.t_grid.ok_or_else(|| Error::InvalidArgument("mode needs a `t_grid`".into()))?;
        PropagationSpec::linspace(g.start, g.stop, g.count, self.method, self.tol)
    }

    pub fn observables(&self) -> Result<Vec<(String, Operator)>> {
        self.observables.iter().map(|o| Ok((o.name.clone(), o.operator(self.levels())?))).collect()
    }

    pub fn initial_state(&self, basis: std::sync::Arc<SymBasis>) -> Result<SymState> {
        let m = self.levels();
        let init = self
            .initial_state
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("mode needs an `initial_state`".into()))?;
        match init {
            InitialState::Product { rho } => {
                let rho = operator(rho, m, "initial density matrix")?;
                check_density_matrix(&rho)?;
                product_state_expand(&rho, basis)
            }
            InitialState::Basis { entries } => {
                let mut s = SymState::zeros(basis.clone());
                for e in entries {
                    let idx = OccupationIndex::new(m, e.occupation.clone())?;
                    let k = basis.rank(&idx)?;
                    s.coeffs_mut()[k] += complex(&e.coeff);
                }
                Ok(s)
            }
            InitialState::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                product_state_expand(&random_density(&mut rng, m), basis)
            }
            InitialState::File { path } => {
                let s = SymState::from_json(&fs::read_to_string(self.resolve(path))?)?;
                if **s.basis() != *basis {
                    return Err(Error::DimensionMismatch(format!(
                        "state file has M={} N={}, config has M={} N={}",
                        s.basis().levels(),
                        s.basis().n(),
                        m,
                        basis.n()
                    )));
                }
                SymState::from_coeffs(basis, s.into_coeffs())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: &str = r#"
mode = "simulate"
N = 3
method = "krylov-expmv"
tol = 1e-11
seed = 7

[model]
kind = "lambda"
gamma20 = 0.7
gamma21 = 1.3e0
N0 = 0.5
E0 = 0.0
E1 = 0.4
E2 = 1.5

[initial_state]
kind = "basis"
entries = [{ occupation = [0, 0, 0, 0, 0, 0, 0, 0, 3], coeff = [1.0, 0.0] }]

[t_grid]
start = 0.0
stop = 2.0
count = 5

[[observables]]
name = "p2"
dyad = [2, 2]

[[observables]]
name = "coh"
matrix = [[[0, 0], [1, 0], [0, 0]], [[0, 0], [0, 0], [0, 0]], [[0, 0], [0, 0], [0, 0]]]

[output]
path = "out.csv"
"#;

    #[test]
    fn parse_and_round_trip() {
        let cfg = RunConfig::from_toml(LAMBDA).unwrap();
        assert_eq!(cfg.method, Method::KrylovExpmv);
        assert_eq!(cfg.output.format, OutputFormat::Csv);
        assert_eq!(cfg.model.lambda_params(3).unwrap().gamma21, 1.3);
        cfg.validate().unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        let basis = SymBasis::shared(3, 3).unwrap();
        assert_eq!(cfg.initial_state(basis).unwrap().trace(), C64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_obs = LAMBDA.replace("dyad = [2, 2]", "dyad = [2, 3]");
        assert!(RunConfig::from_toml(&bad_obs).unwrap().validate().is_err());
        let bad_model = LAMBDA.replace("gamma20 = 0.7", "gamma20 = -0.7");
        assert!(RunConfig::from_toml(&bad_model).unwrap().validate().is_err());
        let missing = LAMBDA.replace("kind = \"basis\"", "kind = \"file\"\npath = \"nowhere.json\"");
        let missing =
            missing.replace("entries = [{ occupation = [0, 0, 0, 0, 0, 0, 0, 0, 3], coeff = [1.0, 0.0] }]", "");
        assert!(RunConfig::from_toml(&missing).unwrap().validate().is_err());
        assert!(RunConfig::from_toml("mode = \"fly\"").is_err());
    }

    #[test]
    fn lindblad_and_sindip_models() {
        let amp = r#"
kind = "lindblad"
M = 2
hamiltonian = [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]]
jumps = [{ op = [[[0, 0], [1, 0]], [[0, 0], [0, 0]]], rate = 0.3 }]
"#;
        let m: ModelSpec = toml::from_str(amp).unwrap();
        let l1 = m.single_liouvillian(1).unwrap();
        let model =
            SindipModel::from_lindblad(&Operator::diagonal(&[0.5, -0.5]).unwrap(), &[(Operator::dyad(2, 0, 1), 0.3)])
                .unwrap();
        let sindip = ModelSpec::Sindip {
            m: 2,
            h: model.hamiltonian_coefficients().iter().map(|z| [z.re, z.im]).collect(),
            a: (0..3)
                .map(|i| (0..3).map(|j| [model.kossakowski()[(i, j)].re, model.kossakowski()[(i, j)].im]).collect())
                .collect(),
            basis: BasisSelector::GellMann,
        };
        assert!(sindip.single_liouvillian(1).unwrap().max_abs_diff(&l1) < 1e-12);
        let negative = ModelSpec::Sindip {
            m: 2,
            h: vec![[0.0; 2]; 3],
            a: vec![vec![[-1.0, 0.0]; 3]; 3],
            basis: BasisSelector::GellMann,
        };
        assert!(negative.single_liouvillian(1).is_err());
    }
}

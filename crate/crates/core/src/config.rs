//! JSON run configuration shared by the `qmf` subcommands.

use std::collections::BTreeMap;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, LocalOperator, ProductState, SiteDims};
use crate::field::{FieldError, FieldSpec, TeSource};
use crate::graph::{make_graph, GraphError, GraphSpec, Region, VertexId};
use crate::linalg::{self, Mat, C64};
use crate::tessellation::{Enumeration, Tessellation, TessellationError};
use crate::tolerances::{Tolerances, DEFAULT_MAX_DIM};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tessellation(#[from] TessellationError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A complex matrix written as rows of entries, each entry either a real
/// number or a `[re, im]` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec(pub Mat);

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl<'de> Deserialize<'de> for MatrixSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<Entry>> = Vec::deserialize(d)?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(de::Error::custom("matrix must be square and non-empty"));
        }
        let m = Mat::from_fn(n, n, |i, j| match rows[i][j] {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        });
        Ok(MatrixSpec(m))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteDimsConfig {
    #[serde(default = "default_dim")]
    pub default: usize,
    #[serde(default)]
    pub overrides: Vec<SiteDimOverride>,
}

fn default_dim() -> usize {
    2
}

impl Default for SiteDimsConfig {
    fn default() -> Self {
        SiteDimsConfig { default: 2, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteDimOverride {
    pub site: VertexId,
    pub dim: usize,
}

/// A single-site density: `"maximally_mixed"`, `"zero"` (the projector on the
/// first basis vector) or an explicit matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DensitySpec {
    Named(String),
    Matrix(MatrixSpec),
}

impl DensitySpec {
    fn resolve(&self, d: usize) -> Result<Mat, ConfigError> {
        match self {
            DensitySpec::Named(name) => match name.as_str() {
                "maximally_mixed" => Ok(linalg::identity(d).unscale(d as f64)),
                "zero" => {
                    let mut m = Mat::zeros(d, d);
                    m[(0, 0)] = linalg::ONE;
                    Ok(m)
                }
                other => Err(ConfigError::Invalid(format!("unknown density {other:?}"))),
            },
            DensitySpec::Matrix(m) => Ok(m.0.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub default: DensitySpec,
    #[serde(default)]
    pub overrides: Vec<DensityOverride>,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { default: DensitySpec::Named("maximally_mixed".into()), overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityOverride {
    pub site: VertexId,
    pub density: DensitySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Product,
    Isometry { seed: u64 },
    UnrepairedIsometry { seed: u64 },
    Transpose,
}

impl Generator {
    fn source(self) -> TeSource {
        match self {
            Generator::Product => TeSource::Product,
            Generator::Isometry { seed } => TeSource::Isometry { seed },
            Generator::UnrepairedIsometry { seed } => TeSource::UnrepairedIsometry { seed },
            Generator::Transpose => TeSource::Transpose,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TeOverride {
    Explicit {
        site: VertexId,
        np: Vec<VertexId>,
        ns: Vec<VertexId>,
        kraus: Vec<MatrixOrRect>,
    },
    Generated {
        site: VertexId,
        #[serde(flatten)]
        generator: Generator,
    },
}

impl TeOverride {
    fn site(&self) -> &VertexId {
        match self {
            TeOverride::Explicit { site, .. } | TeOverride::Generated { site, .. } => site,
        }
    }
}

/// A possibly rectangular matrix in the same entry format as [`MatrixSpec`].
#[derive(Debug, Clone)]
pub struct MatrixOrRect(pub Mat);

impl<'de> Deserialize<'de> for MatrixOrRect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<Entry>> = Vec::deserialize(d)?;
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
            return Err(de::Error::custom("matrix rows must be non-empty and of equal length"));
        }
        Ok(MatrixOrRect(Mat::from_fn(r, c, |i, j| match rows[i][j] {
            Entry::Real(x) => C64::new(x, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        })))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeConfig {
    pub default: Generator,
    #[serde(default)]
    pub overrides: Vec<TeOverride>,
}

impl Default for TeConfig {
    fn default() -> Self {
        TeConfig { default: Generator::Product, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub site: VertexId,
    pub op: OpSpec,
}

/// A single-site operator: one of `"I"`, `"X"`, `"Y"`, `"Z"` or a matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OpSpec {
    Named(String),
    Matrix(MatrixSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Factors { name: String, factors: Vec<FactorSpec> },
    Dense { name: String, support: Vec<VertexId>, matrix: MatrixSpec },
}

impl ObservableSpec {
    pub fn name(&self) -> &str {
        match self {
            ObservableSpec::Factors { name, .. } | ObservableSpec::Dense { name, .. } => name,
        }
    }

    /// Dense operator; the matrix of a dense observable is read in the order
    /// its `support` lists the sites.
    pub fn build(&self, dims: &SiteDims) -> Result<LocalOperator, ConfigError> {
        match self {
            ObservableSpec::Factors { factors, .. } => {
                let mut acc = LocalOperator::scalar(linalg::ONE);
                for f in factors {
                    let op = match &f.op {
                        OpSpec::Named(n) => LocalOperator::named(f.site.clone(), n)?,
                        OpSpec::Matrix(m) => LocalOperator::single_site(f.site.clone(), m.0.clone())?,
                    };
                    if op.dim() != dims.dim(&f.site)? {
                        return Err(AlgebraError::LegDimensionMismatch(f.site.clone()).into());
                    }
                    acc = acc.tensor(&op, dims.max_dim())?;
                }
                Ok(acc)
            }
            ObservableSpec::Dense { support, matrix, .. } => {
                let leg_dims: Vec<usize> = support.iter().map(|v| dims.dim(v)).collect::<Result<_, _>>()?;
                Ok(LocalOperator::from_ordered(support, &leg_dims, matrix.0.clone())?)
            }
        }
    }
}

/// Everything a run needs; identical configs give identical reports.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    pub root: VertexId,
    pub depth: usize,
    #[serde(default)]
    pub site_dims: SiteDimsConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub transition_expectations: TeConfig,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub enum_seed: Option<u64>,
    #[serde(default)]
    pub max_dim: Option<usize>,
    /// Seed of the random inputs drawn by `verify`.
    #[serde(default)]
    pub verify_seed: u64,
    /// Random inputs per level for the level checks of `verify`.
    #[serde(default = "default_samples")]
    pub verify_samples: usize,
}

fn default_samples() -> usize {
    25
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn enumeration(&self) -> Enumeration {
        match self.enum_seed {
            Some(seed) => Enumeration::Seeded { seed },
            None => Enumeration::Canonical,
        }
    }

    pub fn tessellation(&self) -> Result<Tessellation, ConfigError> {
        let g = make_graph(&self.graph)?;
        Ok(Tessellation::build_with(&g, self.root.clone(), self.depth, self.enumeration())?)
    }

    pub fn site_dims(&self) -> Result<SiteDims, ConfigError> {
        let mut dims = SiteDims::uniform(self.site_dims.default)?.with_max_dim(self.max_dim.unwrap_or(DEFAULT_MAX_DIM));
        for o in &self.site_dims.overrides {
            dims = dims.with_site(o.site.clone(), o.dim)?;
        }
        Ok(dims)
    }

    pub fn state(&self) -> Result<ProductState, ConfigError> {
        let mut state = ProductState::uniform(self.state.default.resolve(self.site_dims.default)?);
        let dims = self.site_dims()?;
        for o in &self.state.overrides {
            state = state.with_site(o.site.clone(), o.density.resolve(dims.dim(&o.site)?)?);
        }
        Ok(state)
    }

    pub fn observables(&self) -> Result<Vec<(String, LocalOperator)>, ConfigError> {
        let dims = self.site_dims()?;
        self.observables.iter().map(|o| Ok((o.name().to_string(), o.build(&dims)?))).collect()
    }

    /// Assembles the field. Tessellation and map errors keep their
    /// [`FieldError`] form so callers can tell failed conditions and caps
    /// apart from malformed input.
    pub fn field(&self) -> Result<FieldSpec, RunError> {
        let tess = self.tessellation()?;
        let dims = self.site_dims()?;
        let phi0 = self.state()?;
        let mut overrides: BTreeMap<VertexId, TeSource> = BTreeMap::new();
        for o in &self.transition_expectations.overrides {
            let source = match o {
                TeOverride::Generated { generator, .. } => generator.source(),
                TeOverride::Explicit { np, ns, kraus, .. } => TeSource::Kraus {
                    np: np.iter().cloned().collect::<Region>(),
                    ns: ns.iter().cloned().collect::<Region>(),
                    kraus: kraus.iter().map(|k| k.0.clone()).collect(),
                },
            };
            if overrides.insert(o.site().clone(), source).is_some() {
                return Err(ConfigError::Invalid(format!("duplicate override for site {}", o.site())).into());
            }
        }
        for site in overrides.keys() {
            if tess.classification_of(site).is_none() {
                return Err(ConfigError::Invalid(format!("override for {site}, which is not a classified site")).into());
            }
        }
        let default = self.transition_expectations.default.source();
        Ok(FieldSpec::new(tess, dims, phi0, self.tolerances, |c| {
            overrides.get(&c.vertex).cloned().unwrap_or_else(|| default.clone())
        })?)
    }
}

/// Failure while assembling a run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

//! Config documents: one JSON object per invocation, tagged by `"command"`.

use std::sync::Arc;

use effbound_core::models::{
    build_density_model, build_mean_model, Bump, DensityModelSpec, MeanModelSpec, ModelFamily,
    DEFAULT_T_VALUES,
};
use effbound_core::ratelab::{truth_for, Estimator, ExperimentKind, RateExperiment, Sampler};
use effbound_core::{
    serde_float, Density, GradientFunctional, GridMeasure, InfoProblem, NormSpec, ScoreOperator,
    Tolerances, Weighting,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Config {
    Info(ModelConfig),
    Refine(RefineConfig),
    Rates(RatesConfig),
    Msd(MsdConfig),
    Quotient(ModelConfig),
}

impl Config {
    pub fn command(&self) -> &'static str {
        match self {
            Config::Info(_) => "info",
            Config::Refine(_) => "refine",
            Config::Rates(_) => "rates",
            Config::Msd(_) => "msd",
            Config::Quotient(_) => "quotient",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_zero_tol: Option<f64>,
}

impl ToleranceConfig {
    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            rank_tol: self.rank_tol.unwrap_or(d.rank_tol),
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
            info_zero_tol: self.info_zero_tol.unwrap_or(d.info_zero_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelSpecConfig,
    /// Operator columns to replace by zeros.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_columns: Vec<usize>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpecConfig {
    Mean {
        grid: GridConfig,
        #[serde(default)]
        density: DensityConfig,
        g: FunctionConfig,
        #[serde(default = "two")]
        q: f64,
        #[serde(default)]
        centered: bool,
    },
    Density {
        grid: GridConfig,
        #[serde(default)]
        density: DensityConfig,
        /// Evaluation point; the nearest grid point is used.
        x: f64,
        #[serde(default = "ramp")]
        bump: Bump,
    },
    Custom {
        grid: GridConfig,
        #[serde(default)]
        density: DensityConfig,
        operator: OperatorConfig,
        gradient: Vec<f64>,
        #[serde(default)]
        centered: bool,
        #[serde(default)]
        domain_norm: NormConfig,
    },
}

fn two() -> f64 {
    2.0
}

fn ramp() -> Bump {
    Bump::Ramp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    /// Right endpoints of `m` equal cells of `(a, b]`, each weighted by its length.
    UniformGrid {
        a: f64,
        b: f64,
        m: usize,
    },
    Explicit {
        points: Vec<f64>,
        weights: Vec<f64>,
    },
    Counting {
        points: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityConfig {
    #[default]
    Uniform,
    /// Values that must integrate to one.
    Values(Vec<f64>),
    /// Values rescaled to integrate to one.
    Unnormalized(Vec<f64>),
}

/// Grid functions given literally or by a named generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    Values(Vec<f64>),
    /// `x^(-gamma)`.
    Power {
        gamma: f64,
    },
    /// `amplitude * cos(frequency * x)`.
    Cosine {
        frequency: f64,
        #[serde(default = "unit")]
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorConfig {
    /// Row-major.
    Dense(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(with = "serde_float")]
    pub exponent: f64,
    #[serde(default = "unweighted")]
    pub weighting: Weighting,
}

fn unweighted() -> Weighting {
    Weighting::Unweighted
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            exponent: 2.0,
            weighting: Weighting::Unweighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub family: FamilyConfig,
    pub m_values: Vec<usize>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    MeanPower {
        gamma: f64,
        #[serde(default = "two")]
        q: f64,
        #[serde(default)]
        centered: bool,
    },
    DensityAtPoint {
        x: f64,
        #[serde(default = "ramp")]
        bump: Bump,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub kind: ExperimentKind,
    pub sampler: Sampler,
    pub estimator: Estimator,
    pub n_values: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the analytic truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdConfig {
    pub model: ModelSpecConfig,
    pub direction: FunctionConfig,
    #[serde(default = "default_steps")]
    pub t_values: Vec<f64>,
}

fn default_steps() -> Vec<f64> {
    DEFAULT_T_VALUES.to_vec()
}

/// A validated model ready to solve.
pub enum Built {
    Mean(MeanModelSpec),
    Density(DensityModelSpec),
    Custom(InfoProblem),
}

impl Built {
    pub fn kind(&self) -> &'static str {
        match self {
            Built::Mean(_) => "mean",
            Built::Density(_) => "density",
            Built::Custom(_) => "custom",
        }
    }

    pub fn problem(&self) -> effbound_core::Result<InfoProblem> {
        match self {
            Built::Mean(s) => build_mean_model(s),
            Built::Density(s) => build_density_model(s),
            Built::Custom(p) => Ok(p.clone()),
        }
    }
}

type Res<T> = std::result::Result<T, String>;

fn err(e: effbound_core::Error) -> String {
    e.to_string()
}

impl GridConfig {
    pub fn build(&self) -> Res<Arc<GridMeasure>> {
        let g = match self {
            GridConfig::UniformGrid { a, b, m } => GridMeasure::uniform(*a, *b, *m),
            GridConfig::Explicit { points, weights } => {
                GridMeasure::new(points.clone(), weights.clone())
            }
            GridConfig::Counting { points } => GridMeasure::counting(points.clone()),
        };
        g.map(Arc::new).map_err(err)
    }
}

impl DensityConfig {
    pub fn build(&self, grid: Arc<GridMeasure>) -> Res<Density> {
        match self {
            DensityConfig::Uniform => Density::uniform(grid),
            DensityConfig::Values(v) => Density::new(v.clone(), grid),
            DensityConfig::Unnormalized(v) => Density::normalized(v.clone(), grid),
        }
        .map_err(err)
    }
}

impl FunctionConfig {
    pub fn build(&self, grid: &GridMeasure) -> Res<Vec<f64>> {
        let v: Vec<f64> = match self {
            FunctionConfig::Values(v) => {
                if v.len() != grid.len() {
                    return Err(format!(
                        "function has {} values but the grid has {} points",
                        v.len(),
                        grid.len()
                    ));
                }
                v.clone()
            }
            FunctionConfig::Power { gamma } => {
                grid.points().iter().map(|x| x.powf(-gamma)).collect()
            }
            FunctionConfig::Cosine {
                frequency,
                amplitude,
            } => grid
                .points()
                .iter()
                .map(|x| amplitude * (frequency * x).cos())
                .collect(),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err("function has non-finite values on the grid".into());
        }
        Ok(v)
    }
}

impl ModelSpecConfig {
    pub fn build(&self) -> Res<Built> {
        match self {
            ModelSpecConfig::Mean {
                grid,
                density,
                g,
                q,
                centered,
            } => {
                let grid = grid.build()?;
                let g = g.build(&grid)?;
                let p0 = density.build(grid)?;
                MeanModelSpec::new(p0, g, *q, *centered)
                    .map(Built::Mean)
                    .map_err(err)
            }
            ModelSpecConfig::Density {
                grid,
                density,
                x,
                bump,
            } => {
                let grid = grid.build()?;
                if !x.is_finite() {
                    return Err("evaluation point must be finite".into());
                }
                let idx = grid.nearest_index(*x);
                let p0 = density.build(grid)?;
                match bump {
                    Bump::Flat => DensityModelSpec::flat(p0, idx),
                    Bump::Ramp => DensityModelSpec::ramp(p0, idx),
                }
                .map(Built::Density)
                .map_err(err)
            }
            ModelSpecConfig::Custom {
                grid,
                density,
                operator,
                gradient,
                centered,
                domain_norm,
            } => {
                let grid = grid.build()?;
                let p0 = density.build(grid)?;
                let norm =
                    NormSpec::new(domain_norm.exponent, domain_norm.weighting).map_err(err)?;
                let op = match operator {
                    OperatorConfig::Dense(rows) => {
                        let ncols = rows.first().map_or(0, Vec::len);
                        if rows.iter().any(|r| r.len() != ncols) {
                            return Err("operator rows have different lengths".into());
                        }
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        let a = DMatrix::from_row_slice(rows.len(), ncols, &flat);
                        ScoreOperator::dense(a, p0, norm)
                    }
                    OperatorConfig::Diagonal(d) => ScoreOperator::diagonal(d.clone(), p0, norm),
                }
                .map_err(err)?;
                if gradient.len() != op.ncols() {
                    return Err(format!(
                        "gradient has {} coefficients but the operator has {} columns",
                        gradient.len(),
                        op.ncols()
                    ));
                }
                let g = GradientFunctional::new(gradient.clone(), "custom").map_err(err)?;
                InfoProblem::new(op, g, *centered)
                    .map(Built::Custom)
                    .map_err(err)
            }
        }
    }
}

impl ModelConfig {
    /// The information problem with zero columns and tolerances applied.
    pub fn problem(&self) -> Res<(Built, InfoProblem)> {
        let built = self.model.build()?;
        let mut p = built.problem().map_err(err)?;
        if !self.zero_columns.is_empty() {
            let op = p
                .operator()
                .clone()
                .with_zero_columns(&self.zero_columns)
                .map_err(err)?;
            p = p.with_operator(op).map_err(err)?;
        }
        let p = p.with_tolerances(self.tolerances.resolve()).map_err(err)?;
        Ok((built, p))
    }
}

impl FamilyConfig {
    pub fn family(&self) -> ModelFamily {
        match *self {
            FamilyConfig::MeanPower { gamma, q, centered } => {
                ModelFamily::MeanPower { gamma, q, centered }
            }
            FamilyConfig::DensityAtPoint { x, bump } => ModelFamily::DensityAtPoint { x, bump },
        }
    }
}

impl RefineConfig {
    pub fn family(&self) -> Res<ModelFamily> {
        let base = self.family.family();
        // fail early on a bad descriptor rather than inside the parallel sweep
        if let Some(&m) = self.m_values.first() {
            base.build(m).map_err(err)?;
        }
        if self.tolerances == ToleranceConfig::default() {
            return Ok(base);
        }
        let tol = self.tolerances.resolve();
        Ok(ModelFamily::Custom(Arc::new(move |m| {
            base.build(m)?.with_tolerances(tol)
        })))
    }
}

impl RatesConfig {
    pub fn experiment(&self) -> Res<RateExperiment> {
        let truth = match self.truth {
            Some(t) => t,
            None => truth_for(&self.sampler, &self.kind).map_err(err)?,
        };
        let e = RateExperiment {
            kind: self.kind,
            sampler: self.sampler,
            truth,
            n_values: self.n_values.clone(),
            replications: self.replications,
            seed: self.seed,
            estimator: self.estimator,
        };
        e.validate().map_err(err)?;
        Ok(e)
    }
}

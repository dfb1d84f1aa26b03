//! The two worked models, discretized.
//!
//! *Average of a known transformation.* Densities `p0 (1 + lambda)` with `lambda` in
//! `L_{q'}(P0)`; the score operator is the inclusion into `L2(P0)` and the gradient of
//! `E[g]` pairs `alpha` with `g`.
//!
//! *Density at a point.* Densities `p0 + u lambda` with `lambda` continuous on a compact
//! neighborhood `K` of `x` and `u` a bump equal to one on `C` and vanishing off `U`
//! (`x in C ⊆ U ⊆ K`). The score operator is `alpha -> u alpha / p0` and the gradient is
//! evaluation at `x`, whose pairing representer has mass `1 / (p0(x) mu({x}))` at `x`.
//!
//! Refinement studies rebuild a model family on finer grids and record how the information and
//! the representer norm evolve; msd studies evaluate the mean-square differentiability
//! remainder along straight paths `lambda_t = t alpha`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fit::loglog_slope;
use crate::information::{compute_information, GradientFunctional, InfoProblem};
use crate::operators::ScoreOperator;
use crate::spaces::{dual_exponent, sup_norm, Density, GridMeasure, NormSpec, Weighting};

/// Default msd step sizes: four decades, ratio 10.
pub const DEFAULT_T_VALUES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct MeanModelSpec {
    p0: Density,
    g: Vec<f64>,
    q: f64,
    centered: bool,
}

impl MeanModelSpec {
    pub fn new(p0: Density, g: Vec<f64>, q: f64, centered: bool) -> Result<Self> {
        check_len("transformation", p0.len(), g.len())?;
        if !(1.0..=2.0).contains(&q) {
            return Err(Error::InvalidSpec(format!("q = {q} must lie in [1, 2]")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "transformation has non-finite values".into(),
            ));
        }
        Ok(Self { p0, g, q, centered })
    }

    pub fn p0(&self) -> &Density {
        &self.p0
    }

    pub fn grid(&self) -> &Arc<GridMeasure> {
        self.p0.measure()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    /// `beta0 = E0[g]`.
    pub fn estimand(&self) -> f64 {
        self.p0
            .expect(&self.g)
            .expect("lengths checked at construction")
    }

    /// `E0[|g|^r]`.
    pub fn moment(&self, r: f64) -> f64 {
        self.g
            .iter()
            .zip(self.p0.mass())
            .map(|(g, w)| g.abs().powf(r) * w)
            .sum()
    }
}

/// Identity score on `L_{q'}(P0)` and gradient coefficients `g`.
pub fn build_mean_model(spec: &MeanModelSpec) -> Result<InfoProblem> {
    let norm = NormSpec::new(dual_exponent(spec.q)?, Weighting::P0)?;
    let op = ScoreOperator::identity(spec.p0.clone(), norm)?;
    let gradient = GradientFunctional::new(spec.g.clone(), "mean of g")?;
    Ok(InfoProblem::new(op, gradient, spec.centered)?.with_estimand(spec.estimand()))
}

/// `1 / Var0(g)` when centered, `1 / E0[g^2]` otherwise.
pub fn mean_model_closed_form(spec: &MeanModelSpec) -> Result<f64> {
    let w = spec.p0.mass();
    let shift = if spec.centered { spec.estimand() } else { 0.0 };
    let denom: f64 = spec
        .g
        .iter()
        .zip(w)
        .map(|(g, w)| (g - shift).powi(2) * w)
        .sum();
    if denom > 0.0 {
        Ok(1.0 / denom)
    } else {
        Err(Error::DegenerateGradient)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModelSpec {
    p0: Density,
    x_index: usize,
    u: Vec<f64>,
    c_set: Range<usize>,
    u_set: Range<usize>,
    k_set: Range<usize>,
    p_star: f64,
}

impl DensityModelSpec {
    pub fn new(
        p0: Density,
        x_index: usize,
        u: Vec<f64>,
        c_set: Range<usize>,
        u_set: Range<usize>,
        k_set: Range<usize>,
    ) -> Result<Self> {
        let m = p0.len();
        check_len("bump", m, u.len())?;
        let within = |inner: &Range<usize>, outer: &Range<usize>| {
            inner.start >= outer.start && inner.end <= outer.end && inner.start < inner.end
        };
        if !(within(&k_set, &(0..m)) && within(&u_set, &k_set) && within(&c_set, &u_set)) {
            return Err(Error::InvalidSpec(format!(
                "need nonempty C ⊆ U ⊆ K within the grid (C={c_set:?}, U={u_set:?}, K={k_set:?}, m={m})"
            )));
        }
        if !c_set.contains(&x_index) {
            return Err(Error::InvalidSpec(format!(
                "x index {x_index} is not in C = {c_set:?}"
            )));
        }
        for (i, &ui) in u.iter().enumerate() {
            let ok = if c_set.contains(&i) {
                ui == 1.0
            } else if u_set.contains(&i) {
                (0.0..=1.0).contains(&ui)
            } else {
                ui == 0.0
            };
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "bump value {ui} at index {i} violates u = 1 on C, u = 0 off U, 0 <= u <= 1"
                )));
            }
        }
        let p = p0.values();
        let p_star = k_set.clone().map(|i| p[i]).fold(f64::INFINITY, f64::min);
        if !(p_star > 0.0) {
            return Err(Error::InvalidSpec("p0 must be positive on K".into()));
        }
        Ok(Self {
            p0,
            x_index,
            u,
            c_set,
            u_set,
            k_set,
            p_star,
        })
    }

    /// `u = 1` on the whole grid (`C = U = K = grid`).
    pub fn flat(p0: Density, x_index: usize) -> Result<Self> {
        let m = p0.len();
        Self::new(p0, x_index, vec![1.0; m], 0..m, 0..m, 0..m)
    }

    /// Discrete bump centred at `x`: `C` spans about a third of the grid, `U` about two
    /// thirds, with linear ramps in between; `K` is the whole grid. For `x` in the middle
    /// these are the middle third and middle two thirds of the indices.
    pub fn ramp(p0: Density, x_index: usize) -> Result<Self> {
        let m = p0.len();
        if x_index >= m {
            return Err(Error::InvalidSpec(format!(
                "x index {x_index} out of range"
            )));
        }
        let hc = m / 6;
        let hu = (m / 3).max(hc);
        let c_set = x_index.saturating_sub(hc)..(x_index + hc + 1).min(m);
        let u_set = x_index.saturating_sub(hu)..(x_index + hu + 1).min(m);
        let mut u = vec![0.0; m];
        let left = (c_set.start - u_set.start) as f64;
        let right = (u_set.end - c_set.end) as f64;
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = if c_set.contains(&i) {
                1.0
            } else if u_set.contains(&i) && i < c_set.start {
                (i - u_set.start + 1) as f64 / (left + 1.0)
            } else if u_set.contains(&i) {
                (u_set.end - i) as f64 / (right + 1.0)
            } else {
                0.0
            };
        }
        Self::new(p0, x_index, u, c_set, u_set, 0..m)
    }

    pub fn p0(&self) -> &Density {
        &self.p0
    }

    pub fn grid(&self) -> &Arc<GridMeasure> {
        self.p0.measure()
    }

    pub fn x_index(&self) -> usize {
        self.x_index
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn c_set(&self) -> Range<usize> {
        self.c_set.clone()
    }

    pub fn u_set(&self) -> Range<usize> {
        self.u_set.clone()
    }

    pub fn k_set(&self) -> Range<usize> {
        self.k_set.clone()
    }

    /// `min_K p0`.
    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// `mu(U)`.
    pub fn u_mass(&self) -> f64 {
        self.grid().weights()[self.u_set.clone()].iter().sum()
    }

    /// `beta0 = p0(x)`.
    pub fn estimand(&self) -> f64 {
        self.p0.values()[self.x_index]
    }
}

/// Diagonal score `u / p0` on `K` with the sup norm; gradient is evaluation at `x`.
pub fn build_density_model(spec: &DensityModelSpec) -> Result<InfoProblem> {
    let m = spec.p0.len();
    let p = spec.p0.values();
    let diag = (0..m)
        .map(|i| {
            if spec.k_set.contains(&i) {
                spec.u[i] / p[i]
            } else {
                0.0
            }
        })
        .collect();
    let op = ScoreOperator::diagonal(diag, spec.p0.clone(), NormSpec::sup())?;
    let x = spec.x_index;
    let mass = spec.p0.mass()[x];
    if !(mass > 0.0) {
        return Err(Error::ZeroMassAtPoint { index: x });
    }
    let mut d = vec![0.0; m];
    d[x] = 1.0 / mass;
    let gradient = GradientFunctional::new(d, "density at x")?;
    Ok(InfoProblem::new(op, gradient, false)?.with_estimand(spec.estimand()))
}

/// `mu({x}) u(x)^2 / p0(x)`.
pub fn density_model_closed_form(spec: &DensityModelSpec) -> f64 {
    let x = spec.x_index;
    spec.grid().weights()[x] * spec.u[x].powi(2) / spec.p0.values()[x]
}

/// `C = sqrt(mu(U) / p*)`, the constant with `|u alpha / p0|_2 <= C |alpha|_inf`.
pub fn density_continuity_constant(spec: &DensityModelSpec) -> f64 {
    (spec.u_mass() / spec.p_star).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdStudy {
    pub t_values: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Log-log slope of the remainder against `t`; absent when some remainder is zero.
    pub fitted_slope: Option<f64>,
}

fn check_steps(t_values: &[f64]) -> Result<()> {
    if t_values.is_empty() {
        return Err(Error::InvalidSpec("no step sizes".into()));
    }
    if t_values.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::InvalidSpec("step sizes must lie in (0, 1)".into()));
    }
    if t_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSpec(
            "step sizes must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn finish_study(t_values: &[f64], remainders: Vec<f64>) -> MsdStudy {
    let fitted_slope = if t_values.len() >= 2 && remainders.iter().all(|r| *r > 0.0) {
        loglog_slope(t_values, &remainders).ok().map(|(s, _)| s)
    } else {
        None
    };
    MsdStudy {
        t_values: t_values.to_vec(),
        remainders,
        fitted_slope,
    }
}

/// Remainder `sum_i ((sqrt(p_i (1 + t a_i)) - sqrt(p_i)) / t - a_i sqrt(p_i) / 2)^2 mu_i`
/// along `lambda_t = t alpha` in the mean model.
pub fn msd_remainder_mean(
    spec: &MeanModelSpec,
    alpha: &[f64],
    t_values: &[f64],
) -> Result<MsdStudy> {
    check_len("direction", spec.p0.len(), alpha.len())?;
    check_steps(t_values)?;
    let p = spec.p0.values();
    let mu = spec.grid().weights();
    let mut remainders = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let mut r = 0.0;
        for i in 0..alpha.len() {
            let ratio = 1.0 + t * alpha[i];
            if !(ratio > 0.0) {
                return Err(Error::PathLeavesModel { t, index: i });
            }
            // conjugate form: the bracket equals -t a^2 sqrt(p) / (2 (1 + sqrt(1 + t a))^2)
            let s = ratio.sqrt();
            let term = -t * alpha[i] * alpha[i] * p[i].sqrt() / (2.0 * (1.0 + s).powi(2));
            r += term * term * mu[i];
        }
        remainders.push(r);
    }
    Ok(finish_study(t_values, remainders))
}

/// Remainder `sum_i ((sqrt(p_i + t u_i a_i) - sqrt(p_i)) / t - u_i a_i / (2 sqrt(p_i)))^2 mu_i`
/// along `lambda_t = t alpha` in the density model.
pub fn msd_remainder_density(
    spec: &DensityModelSpec,
    alpha: &[f64],
    t_values: &[f64],
) -> Result<MsdStudy> {
    check_len("direction", spec.p0.len(), alpha.len())?;
    check_steps(t_values)?;
    let p = spec.p0.values();
    let mu = spec.grid().weights();
    let mut remainders = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let mut r = 0.0;
        for i in spec.k_set.clone() {
            let shift = t * spec.u[i] * alpha[i];
            let moved = p[i] + shift;
            if !(moved > 0.0) {
                return Err(Error::PathLeavesModel { t, index: i });
            }
            if shift == 0.0 {
                continue;
            }
            let (a, b) = (moved.sqrt(), p[i].sqrt());
            // conjugate form of the bracket
            let term = -spec.u[i] * alpha[i] * shift / (2.0 * b * (a + b).powi(2));
            r += term * term * mu[i];
        }
        remainders.push(r);
    }
    Ok(finish_study(t_values, remainders))
}

/// Upper bound on the density-model remainder for a path with value `lambda_t` at step `t`
/// and limiting direction `alpha`:
/// `2 mu(U)/p* |lambda_t/t - alpha|_inf^2 + 2 |alpha|_inf^2 mu(U) / (4 p*^3) |lambda_t|_inf^2`.
/// The factor 2 comes from `(a + b)^2 <= 2 a^2 + 2 b^2`.
pub fn density_msd_bound(
    spec: &DensityModelSpec,
    alpha: &[f64],
    lambda_t: &[f64],
    t: f64,
) -> Result<f64> {
    check_len("direction", spec.p0.len(), alpha.len())?;
    check_len("path value", spec.p0.len(), lambda_t.len())?;
    let mu_u = spec.u_mass();
    let ps = spec.p_star;
    let drift: Vec<f64> = lambda_t.iter().zip(alpha).map(|(l, a)| l / t - a).collect();
    let a_inf = sup_norm(alpha);
    let l_inf = sup_norm(lambda_t);
    Ok(2.0 * mu_u / ps * sup_norm(&drift).powi(2)
        + 2.0 * a_inf * a_inf * mu_u / (4.0 * ps.powi(3)) * l_inf * l_inf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bump {
    Flat,
    Ramp,
}

/// Families of models indexed by the grid size `m`.
#[derive(Clone)]
pub enum ModelFamily {
    /// Mean model with `g(x) = x^(-gamma)` and uniform `p0` on the right-endpoint grid of `(0, 1]`.
    MeanPower { gamma: f64, q: f64, centered: bool },
    /// Density at the grid point nearest `x`, uniform `p0` on `(0, 1]`.
    DensityAtPoint { x: f64, bump: Bump },
    /// Any user-supplied generator.
    Custom(Arc<dyn Fn(usize) -> Result<InfoProblem> + Send + Sync>),
}

impl fmt::Debug for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MeanPower { gamma, q, centered } => f
                .debug_struct("MeanPower")
                .field("gamma", gamma)
                .field("q", q)
                .field("centered", centered)
                .finish(),
            Self::DensityAtPoint { x, bump } => f
                .debug_struct("DensityAtPoint")
                .field("x", x)
                .field("bump", bump)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ModelFamily {
    pub fn mean_spec(gamma: f64, q: f64, centered: bool, m: usize) -> Result<MeanModelSpec> {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, m)?);
        let g = grid.points().iter().map(|x| x.powf(-gamma)).collect();
        let p0 = Density::uniform(grid)?;
        MeanModelSpec::new(p0, g, q, centered)
    }

    pub fn density_spec(x: f64, bump: Bump, m: usize) -> Result<DensityModelSpec> {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, m)?);
        let idx = grid.nearest_index(x);
        let p0 = Density::uniform(grid)?;
        match bump {
            Bump::Flat => DensityModelSpec::flat(p0, idx),
            Bump::Ramp => DensityModelSpec::ramp(p0, idx),
        }
    }

    pub fn build(&self, m: usize) -> Result<InfoProblem> {
        match self {
            Self::MeanPower { gamma, q, centered } => {
                build_mean_model(&Self::mean_spec(*gamma, *q, *centered, m)?)
            }
            Self::DensityAtPoint { x, bump } => {
                build_density_model(&Self::density_spec(*x, *bump, m)?)
            }
            Self::Custom(f) => f(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub m_values: Vec<usize>,
    #[serde(with = "crate::serde_float::vec")]
    pub info_values: Vec<f64>,
    pub representer_norms: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Log-log slope of information against `m`; absent when some value is zero or infinite.
    pub decay_slope: Option<f64>,
}

/// Builds the family at each grid size and records information and representer norms.
/// Levels are solved in parallel and merged by index.
pub fn refinement_study(family: &ModelFamily, m_values: &[usize]) -> Result<RefinementReport> {
    if m_values.is_empty() {
        return Err(Error::InvalidSpec("no grid sizes".into()));
    }
    if m_values.windows(2).any(|w| w[1] <= w[0]) || m_values[0] == 0 {
        return Err(Error::InvalidSpec(
            "grid sizes must be positive and increasing".into(),
        ));
    }
    let rows = m_values
        .par_iter()
        .map(|&m| {
            let report = compute_information(&family.build(m)?)?;
            Ok((report.info, report.representer_norm, report.residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let info_values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let xs: Vec<f64> = m_values.iter().map(|&m| m as f64).collect();
    let decay_slope = if m_values.len() >= 2 {
        loglog_slope(&xs, &info_values).ok().map(|(s, _)| s)
    } else {
        None
    };
    Ok(RefinementReport {
        m_values: m_values.to_vec(),
        info_values,
        representer_norms: rows.iter().map(|r| r.1).collect(),
        residuals: rows.iter().map(|r| r.2).collect(),
        decay_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::information::verify_theorem;
    use crate::operators::l2_norm;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point_mean(g: Vec<f64>, centered: bool) -> MeanModelSpec {
        let grid = Arc::new(GridMeasure::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap());
        let p0 = Density::new(vec![0.5, 0.5], grid).unwrap();
        MeanModelSpec::new(p0, g, 2.0, centered).unwrap()
    }

    #[test]
    fn mean_model_examples() {
        let spec = two_point_mean(vec![0.0, 2.0], true);
        let r = compute_information(&build_mean_model(&spec).unwrap()).unwrap();
        assert_relative_eq!(r.info, 1.0, epsilon = 1e-12);
        assert_relative_eq!(mean_model_closed_form(&spec).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(spec.estimand(), 1.0);

        let spec = two_point_mean(vec![0.0, 2.0], false);
        let r = compute_information(&build_mean_model(&spec).unwrap()).unwrap();
        assert_relative_eq!(r.info, 0.5, epsilon = 1e-12);
        assert_relative_eq!(mean_model_closed_form(&spec).unwrap(), 0.5, epsilon = 1e-15);

        let spec = two_point_mean(vec![3.0, 3.0], true);
        let r = compute_information(&build_mean_model(&spec).unwrap()).unwrap();
        assert!(r.info.is_infinite() && r.locally_constant);
        assert!(matches!(
            mean_model_closed_form(&spec),
            Err(Error::DegenerateGradient)
        ));

        let spec = two_point_mean(vec![3.0, 3.0], false);
        assert_relative_eq!(
            mean_model_closed_form(&spec).unwrap(),
            1.0 / 9.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mean_model_operator_shape() {
        let spec = two_point_mean(vec![0.0, 2.0], false);
        let p = build_mean_model(&spec).unwrap();
        assert_eq!(p.operator().apply(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(p.operator().domain_norm().exponent, 2.0);
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 4).unwrap());
        let p0 = Density::uniform(grid).unwrap();
        let q1 = MeanModelSpec::new(p0, vec![1.0; 4], 1.0, false).unwrap();
        assert!(build_mean_model(&q1)
            .unwrap()
            .operator()
            .domain_norm()
            .exponent
            .is_infinite());
    }

    #[test]
    fn mean_spec_validation() {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 4).unwrap());
        let p0 = Density::uniform(grid).unwrap();
        assert!(MeanModelSpec::new(p0.clone(), vec![1.0; 3], 2.0, false).is_err());
        assert!(MeanModelSpec::new(p0.clone(), vec![1.0; 4], 2.5, false).is_err());
        assert!(MeanModelSpec::new(p0, vec![1.0; 4], 0.5, false).is_err());
    }

    #[test]
    fn mean_oracle_agreement_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let m = rng.random_range(2..200);
            let grid = Arc::new(
                GridMeasure::new(
                    (0..m).map(|i| i as f64).collect(),
                    (0..m).map(|_| rng.random_range(0.1..1.0)).collect(),
                )
                .unwrap(),
            );
            let p0 =
                Density::normalized((0..m).map(|_| rng.random_range(0.01..1.0)).collect(), grid)
                    .unwrap();
            let g = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let spec = MeanModelSpec::new(p0, g, rng.random_range(1.0..2.0), rng.random_bool(0.5))
                .unwrap();
            let r = compute_information(&build_mean_model(&spec).unwrap()).unwrap();
            let oracle = mean_model_closed_form(&spec).unwrap();
            assert_relative_eq!(r.info, oracle, max_relative = 1e-10);
            assert_relative_eq!(
                r.info * r.representer_norm.powi(2),
                1.0,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn density_model_examples() {
        for (m, expected) in [(10, 0.1), (100, 0.01)] {
            let spec = ModelFamily::density_spec(0.5, Bump::Flat, m).unwrap();
            assert_relative_eq!(spec.grid().points()[spec.x_index()], 0.5, epsilon = 1e-15);
            let r = compute_information(&build_density_model(&spec).unwrap()).unwrap();
            assert_relative_eq!(r.info, expected, max_relative = 1e-13);
            assert_relative_eq!(
                density_model_closed_form(&spec),
                expected,
                max_relative = 1e-13
            );
        }
        // counting measure on two points
        let grid = Arc::new(GridMeasure::counting(vec![0.0, 1.0]).unwrap());
        let p0 = Density::new(vec![0.5, 0.5], grid).unwrap();
        let spec = DensityModelSpec::flat(p0, 0).unwrap();
        let r = compute_information(&build_density_model(&spec).unwrap()).unwrap();
        assert_relative_eq!(r.info, 2.0, max_relative = 1e-14);
        assert_relative_eq!(spec.estimand(), 0.5);
    }

    #[test]
    fn ramp_bump_shape() {
        let spec = ModelFamily::density_spec(0.5, Bump::Ramp, 30).unwrap();
        let u = spec.u();
        let x = spec.x_index();
        assert_eq!(x, 14);
        assert_eq!(spec.c_set(), 9..20);
        assert_eq!(spec.u_set(), 4..25);
        assert!(u[..4].iter().all(|v| *v == 0.0) && u[25..].iter().all(|v| *v == 0.0));
        assert!(u[9..20].iter().all(|v| *v == 1.0));
        assert!(u[4..9].windows(2).all(|w| w[0] < w[1]));
        assert!(u[20..25].windows(2).all(|w| w[0] > w[1]));
        let r = compute_information(&build_density_model(&spec).unwrap()).unwrap();
        assert_relative_eq!(r.info, 1.0 / 30.0, max_relative = 1e-13);
        assert!(r.identifiable);
    }

    #[test]
    fn density_spec_validation() {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 6).unwrap());
        let p0 = Density::uniform(grid.clone()).unwrap();
        // x outside C
        assert!(DensityModelSpec::new(
            p0.clone(),
            0,
            vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            2..4,
            1..5,
            0..6
        )
        .is_err());
        // u not 1 on C
        assert!(DensityModelSpec::new(
            p0.clone(),
            2,
            vec![0.0, 0.0, 0.5, 1.0, 0.0, 0.0],
            2..4,
            1..5,
            0..6
        )
        .is_err());
        // u nonzero off U
        assert!(DensityModelSpec::new(
            p0.clone(),
            2,
            vec![0.3, 0.0, 1.0, 1.0, 0.0, 0.0],
            2..4,
            1..5,
            0..6
        )
        .is_err());
        // p0 vanishing on K
        let p = Density::normalized(vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0], grid).unwrap();
        assert!(DensityModelSpec::flat(p.clone(), 3).is_err());
        assert!(
            DensityModelSpec::new(p, 3, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0], 2..4, 2..4, 1..6)
                .is_ok()
        );
    }

    #[test]
    fn density_oracle_agreement_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let m = rng.random_range(3..200);
            let grid = Arc::new(
                GridMeasure::new(
                    (0..m).map(|i| i as f64).collect(),
                    (0..m).map(|_| rng.random_range(0.01..1.0)).collect(),
                )
                .unwrap(),
            );
            let p0 =
                Density::normalized((0..m).map(|_| rng.random_range(0.05..1.0)).collect(), grid)
                    .unwrap();
            let x = rng.random_range(0..m);
            let spec = DensityModelSpec::ramp(p0, x).unwrap();
            let p = build_density_model(&spec).unwrap();
            let r = compute_information(&p).unwrap();
            assert_relative_eq!(
                r.info,
                density_model_closed_form(&spec),
                max_relative = 1e-10
            );
            assert!(verify_theorem(&p).unwrap().passed);
        }
    }

    #[test]
    fn density_score_continuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..50 {
            let m = rng.random_range(3..60);
            let grid = Arc::new(
                GridMeasure::new(
                    (0..m).map(|i| i as f64).collect(),
                    (0..m).map(|_| rng.random_range(0.01..1.0)).collect(),
                )
                .unwrap(),
            );
            let p0 =
                Density::normalized((0..m).map(|_| rng.random_range(0.05..1.0)).collect(), grid)
                    .unwrap();
            let spec = DensityModelSpec::ramp(p0, rng.random_range(0..m)).unwrap();
            let c = density_continuity_constant(&spec);
            let p = build_density_model(&spec).unwrap();
            let op = p.operator().clone().with_continuity_bound(c).unwrap();
            for _ in 0..20 {
                let a: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lhs = l2_norm(&op.apply(&a).unwrap(), spec.p0()).unwrap();
                assert!(lhs <= c * sup_norm(&a) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn zero_mass_point() {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 4).unwrap());
        let p0 = Density::normalized(vec![1.0, 0.0, 1.0, 1.0], grid).unwrap();
        let spec =
            DensityModelSpec::new(p0, 2, vec![0.0, 0.0, 1.0, 0.0], 2..3, 2..3, 2..4).unwrap();
        assert!(build_density_model(&spec).is_ok());
        // a spec is never built around a zero-mass point: p0 > 0 on K is enforced
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 4).unwrap());
        let p0 = Density::normalized(vec![1.0, 0.0, 1.0, 1.0], grid).unwrap();
        assert!(DensityModelSpec::new(p0, 1, vec![0.0, 1.0, 0.0, 0.0], 1..2, 1..2, 1..2).is_err());
    }

    fn naive_mean_remainder(spec: &MeanModelSpec, a: &[f64], t: f64) -> f64 {
        let p = spec.p0().values();
        let mu = spec.grid().weights();
        (0..a.len())
            .map(|i| {
                let b =
                    ((p[i] * (1.0 + t * a[i])).sqrt() - p[i].sqrt()) / t - a[i] / 2.0 * p[i].sqrt();
                b * b * mu[i]
            })
            .sum()
    }

    fn naive_density_remainder(spec: &DensityModelSpec, a: &[f64], t: f64) -> f64 {
        let p = spec.p0().values();
        let mu = spec.grid().weights();
        let u = spec.u();
        (0..a.len())
            .map(|i| {
                let b = ((p[i] + t * u[i] * a[i]).sqrt() - p[i].sqrt()) / t
                    - u[i] * a[i] / (2.0 * p[i].sqrt());
                b * b * mu[i]
            })
            .sum()
    }

    #[test]
    fn mean_msd_slope_two() {
        let spec = ModelFamily::mean_spec(-1.0, 2.0, false, 200).unwrap();
        let a: Vec<f64> = spec
            .grid()
            .points()
            .iter()
            .map(|x| (6.0 * x).sin())
            .collect();
        let study = msd_remainder_mean(&spec, &a, &DEFAULT_T_VALUES).unwrap();
        let s = study.fitted_slope.unwrap();
        assert!((s - 2.0).abs() <= 0.2, "slope {s}");
        for (t, r) in study.t_values.iter().zip(&study.remainders) {
            let naive = naive_mean_remainder(&spec, &a, *t);
            assert_relative_eq!(*r, naive, max_relative = 1e-5);
        }
        // leading term t^2 a^4 p mu / 64
        let t = 1e-4;
        let lead: f64 = (0..a.len())
            .map(|i| t * t * a[i].powi(4) * spec.p0().values()[i] * spec.grid().weights()[i] / 64.0)
            .sum();
        assert_relative_eq!(study.remainders[3], lead, max_relative = 1e-3);
    }

    #[test]
    fn mean_msd_quartic_in_direction() {
        let spec = ModelFamily::mean_spec(-1.0, 2.0, false, 50).unwrap();
        let base: Vec<f64> = spec.grid().points().iter().map(|x| 1.0 - 2.0 * x).collect();
        let t = [0.1];
        let r1 = msd_remainder_mean(
            &spec,
            &base.iter().map(|v| v * 1e-2).collect::<Vec<_>>(),
            &t,
        )
        .unwrap()
        .remainders[0];
        let r2 = msd_remainder_mean(
            &spec,
            &base.iter().map(|v| v * 2e-2).collect::<Vec<_>>(),
            &t,
        )
        .unwrap()
        .remainders[0];
        assert_relative_eq!(r2 / r1, 16.0, max_relative = 1e-2);
    }

    #[test]
    fn msd_zero_direction_and_errors() {
        let spec = ModelFamily::mean_spec(-1.0, 2.0, false, 20).unwrap();
        let study = msd_remainder_mean(&spec, &[0.0; 20], &DEFAULT_T_VALUES).unwrap();
        assert!(study.remainders.iter().all(|r| *r == 0.0));
        assert!(study.fitted_slope.is_none());
        let mut a = vec![0.0; 20];
        a[3] = -20.0;
        assert!(matches!(
            msd_remainder_mean(&spec, &a, &DEFAULT_T_VALUES),
            Err(Error::PathLeavesModel { index: 3, .. })
        ));
        assert!(msd_remainder_mean(&spec, &[0.0; 20], &[0.01, 0.1]).is_err());
        assert!(msd_remainder_mean(&spec, &[0.0; 20], &[1.5]).is_err());

        let dspec = ModelFamily::density_spec(0.5, Bump::Ramp, 20).unwrap();
        let study = msd_remainder_density(&dspec, &[0.0; 20], &DEFAULT_T_VALUES).unwrap();
        assert!(study.remainders.iter().all(|r| *r == 0.0));
        let mut a = vec![0.0; 20];
        a[9] = -50.0;
        assert!(matches!(
            msd_remainder_density(&dspec, &a, &DEFAULT_T_VALUES),
            Err(Error::PathLeavesModel { .. })
        ));
    }

    #[test]
    fn density_msd_slope_and_bound() {
        let grid = Arc::new(GridMeasure::uniform(0.0, 1.0, 120).unwrap());
        let p0 = Density::from_fn(grid, |x| 6.0 * x * (1.0 - x) + 0.2).unwrap();
        let spec = DensityModelSpec::ramp(p0, 60).unwrap();
        let a: Vec<f64> = spec
            .grid()
            .points()
            .iter()
            .map(|x| (9.0 * x).cos())
            .collect();
        let study = msd_remainder_density(&spec, &a, &DEFAULT_T_VALUES).unwrap();
        let s = study.fitted_slope.unwrap();
        assert!((s - 2.0).abs() <= 0.2, "slope {s}");
        for (t, r) in study.t_values.iter().zip(&study.remainders) {
            assert_relative_eq!(
                *r,
                naive_density_remainder(&spec, &a, *t),
                max_relative = 1e-5
            );
            let lambda: Vec<f64> = a.iter().map(|v| t * v).collect();
            let bound = density_msd_bound(&spec, &a, &lambda, *t).unwrap();
            assert!(*r <= bound, "{r} > {bound}");
        }
    }

    #[test]
    fn refinement_density_exact() {
        let family = ModelFamily::DensityAtPoint {
            x: 0.5,
            bump: Bump::Flat,
        };
        let rep = refinement_study(&family, &[10, 100, 1000]).unwrap();
        for (m, (i, n)) in rep
            .m_values
            .iter()
            .zip(rep.info_values.iter().zip(&rep.representer_norms))
        {
            assert_relative_eq!(*i, 1.0 / *m as f64, max_relative = 1e-12);
            // |delta*|^2 = m p0(x) / u(x)^2
            assert_relative_eq!(n * n, *m as f64, max_relative = 1e-12);
        }
        assert!((rep.decay_slope.unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn refinement_rejects_bad_sizes() {
        let family = ModelFamily::DensityAtPoint {
            x: 0.5,
            bump: Bump::Flat,
        };
        assert!(refinement_study(&family, &[]).is_err());
        assert!(refinement_study(&family, &[100, 10]).is_err());
    }

    #[test]
    fn refinement_custom_family() {
        let family = ModelFamily::Custom(Arc::new(|m| {
            let spec = ModelFamily::mean_spec(-1.0, 2.0, true, m)?;
            build_mean_model(&spec)
        }));
        let rep = refinement_study(&family, &[10, 20, 40]).unwrap();
        for (m, i) in rep.m_values.iter().zip(&rep.info_values) {
            let spec = ModelFamily::mean_spec(-1.0, 2.0, true, *m).unwrap();
            assert_relative_eq!(
                *i,
                mean_model_closed_form(&spec).unwrap(),
                max_relative = 1e-12
            );
        }
        assert!(format!("{family:?}").contains("Custom"));
    }

    fn summed_moment(gamma: f64, q: f64, m: usize) -> f64 {
        // independent brute-force sum (1/m) sum_i (i/m)^(-gamma q)
        (1..=m)
            .map(|i| (i as f64 / m as f64).powf(-gamma * q))
            .sum::<f64>()
            / m as f64
    }

    #[test]
    fn duality_sanity() {
        for gamma in [0.3, 0.6] {
            for q in [1.2f64, 5.0 / 3.0, 2.0] {
                let lo = ModelFamily::mean_spec(gamma, q, false, 1_000).unwrap();
                let hi = ModelFamily::mean_spec(gamma, q, false, 100_000).unwrap();
                let (a, b) = (lo.moment(q), hi.moment(q));
                assert_relative_eq!(a, summed_moment(gamma, q, 1_000), max_relative = 1e-10);
                let bounded = b / a < 1.25;
                assert_eq!(
                    bounded,
                    gamma * q < 1.0 - 1e-12,
                    "gamma {gamma} q {q}: {a} -> {b}"
                );
            }
            let family = ModelFamily::MeanPower {
                gamma,
                q: 1.2,
                centered: false,
            };
            let rep = refinement_study(&family, &[1_000, 100_000]).unwrap();
            let away_from_zero = rep.info_values[1] / rep.info_values[0] > 0.8;
            assert_eq!(away_from_zero, 2.0 * gamma < 1.0);
        }
    }
}

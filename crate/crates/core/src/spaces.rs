//! Weighted `L_q` spaces on finite grids.
//!
//! A model lives on a [`GridMeasure`] (support points with dominating-measure masses `mu_i`)
//! and a [`Density`] `p_i` with respect to it. Functions on the grid are plain coefficient
//! vectors; the `L_q(P0)` norm, the sup norm and the dual pairing
//! `<v, d> = sum_i v_i d_i p_i mu_i` are computed directly from the weights.

use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Tolerance on `|sum_i p_i mu_i - 1|` accepted by [`Density::new`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Finite support points with positive dominating-measure weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid(
                "grid must have at least one point".into(),
            ));
        }
        check_len("grid weights", points.len(), weights.len())?;
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "weight {} at index {i} is not strictly positive and finite",
                weights[i]
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("grid points must be finite".into()));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing (index {i})"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Right-endpoint grid on `(a, b]`: points `a + (b - a) i / m` for `i = 1..=m`, each with
    /// mass `(b - a) / m`. The left endpoint is never a grid point.
    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if m == 0 || !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs a < b and m > 0 (got a={a}, b={b}, m={m})"
            )));
        }
        let h = (b - a) / m as f64;
        let points = (1..=m)
            .map(|i| a + (b - a) * (i as f64 / m as f64))
            .collect();
        Self::new(points, vec![h; m])
    }

    /// Counting measure on the given points.
    pub fn counting(points: Vec<f64>) -> Result<Self> {
        let m = points.len();
        Self::new(points, vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the grid point closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = self.points.partition_point(|&p| p < x);
        if i == 0 {
            0
        } else if i == self.points.len() {
            i - 1
        } else if (self.points[i] - x).abs() < (x - self.points[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }
}

/// Density of `P0` with respect to a [`GridMeasure`].
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: Vec<f64>,
    measure: Arc<GridMeasure>,
    /// `p_i * mu_i`, the point masses of `P0`.
    mass: Vec<f64>,
}

impl Density {
    /// Validates nonnegativity and normalization within [`NORMALIZATION_TOL`].
    pub fn new(values: Vec<f64>, measure: Arc<GridMeasure>) -> Result<Self> {
        let d = Self::unchecked(values, measure)?;
        let total: f64 = d.mass.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDensity(format!(
                "total mass {total} differs from 1 by more than {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(d)
    }

    /// Rescales `values` so that the total mass is one.
    pub fn normalized(values: Vec<f64>, measure: Arc<GridMeasure>) -> Result<Self> {
        let d = Self::unchecked(values, measure)?;
        let total: f64 = d.mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDensity(format!(
                "cannot renormalize a density with total mass {total}"
            )));
        }
        let values = d.values.iter().map(|p| p / total).collect();
        Self::unchecked(values, d.measure)
    }

    /// Samples `f` at the grid points and renormalizes.
    pub fn from_fn(measure: Arc<GridMeasure>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = measure.points().iter().map(|&x| f(x)).collect();
        Self::normalized(values, measure)
    }

    /// Constant density `1 / mu(X)`.
    pub fn uniform(measure: Arc<GridMeasure>) -> Result<Self> {
        let c = 1.0 / measure.total_mass();
        Self::normalized(vec![c; measure.len()], measure)
    }

    fn unchecked(values: Vec<f64>, measure: Arc<GridMeasure>) -> Result<Self> {
        check_len("density values", measure.len(), values.len())?;
        if let Some(i) = values.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDensity(format!(
                "value {} at index {i} is not a finite nonnegative number",
                values[i]
            )));
        }
        let mass = values
            .iter()
            .zip(measure.weights())
            .map(|(p, w)| p * w)
            .collect();
        Ok(Self {
            values,
            measure,
            mass,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn measure(&self) -> &Arc<GridMeasure> {
        &self.measure
    }

    /// Point masses `p_i * mu_i`; these are the pairing weights.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `E0[f] = sum_i f_i p_i mu_i`.
    pub fn expect(&self, f: &[f64]) -> Result<f64> {
        check_len("integrand", self.len(), f.len())?;
        Ok(f.iter().zip(&self.mass).map(|(f, w)| f * w).sum())
    }

    /// Indices with `p_i > 0`.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    P0,
    Mu,
    Unweighted,
}

/// The `L_q` norm a tangent space carries. `exponent == f64::INFINITY` is the sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub exponent: f64,
    pub weighting: Weighting,
}

impl NormSpec {
    pub fn new(exponent: f64, weighting: Weighting) -> Result<Self> {
        if !(exponent >= 1.0) {
            return Err(Error::Domain(format!(
                "norm exponent {exponent} is below 1"
            )));
        }
        Ok(Self {
            exponent,
            weighting,
        })
    }

    pub fn sup() -> Self {
        Self {
            exponent: f64::INFINITY,
            weighting: Weighting::Unweighted,
        }
    }

    pub fn euclidean() -> Self {
        Self {
            exponent: 2.0,
            weighting: Weighting::Unweighted,
        }
    }

    pub fn p0(exponent: f64) -> Result<Self> {
        Self::new(exponent, Weighting::P0)
    }

    /// Evaluates the norm of `v`. Weighted sup norms ignore zero-weight coordinates.
    pub fn eval(&self, v: &[f64], density: &Density) -> Result<f64> {
        check_len("vector", density.len(), v.len())?;
        let ones;
        let weights: &[f64] = match self.weighting {
            Weighting::P0 => density.mass(),
            Weighting::Mu => density.measure().weights(),
            Weighting::Unweighted => {
                ones = vec![1.0; v.len()];
                &ones
            }
        };
        if self.exponent.is_infinite() {
            Ok(v.iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .fold(0.0, |m, (x, _)| m.max(x.abs())))
        } else {
            weighted_lq(v, weights, self.exponent)
        }
    }
}

/// A tangent direction: one coefficient per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub coefficients: Vec<f64>,
    pub norm: NormSpec,
}

impl TangentVector {
    pub fn new(coefficients: Vec<f64>, norm: NormSpec) -> Self {
        Self { coefficients, norm }
    }

    pub fn euclidean(coefficients: Vec<f64>) -> Self {
        Self::new(coefficients, NormSpec::euclidean())
    }

    pub fn norm(&self, density: &Density) -> Result<f64> {
        self.norm.eval(&self.coefficients, density)
    }
}

impl Deref for TangentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.coefficients
    }
}

/// Conjugate exponent `q'` with `1/q + 1/q' = 1`.
pub fn dual_exponent(q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("exponent {q} is below 1")));
    }
    Ok(if q == 1.0 {
        f64::INFINITY
    } else if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    })
}

/// `(sum_i |v_i|^q p_i mu_i)^(1/q)` for finite `q >= 1`.
pub fn lp_norm(v: &[f64], q: f64, density: &Density) -> Result<f64> {
    if !(q >= 1.0) || q.is_infinite() {
        return Err(Error::Domain(format!(
            "lp_norm needs a finite exponent q >= 1 (got {q}); use sup_norm for q = inf"
        )));
    }
    check_len("vector", density.len(), v.len())?;
    weighted_lq(v, density.mass(), q)
}

fn weighted_lq(v: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    // scale by the largest entry on the support so large q does not overflow
    let scale = v
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .fold(0.0_f64, |m, (x, _)| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = v
        .iter()
        .zip(weights)
        .map(|(x, w)| (x.abs() / scale).powf(q) * w)
        .sum();
    Ok(scale * sum.powf(1.0 / q))
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `sum_i v_i d_i p_i mu_i`.
pub fn dual_pairing(v: &[f64], d: &[f64], density: &Density) -> Result<f64> {
    check_len("vector", density.len(), v.len())?;
    check_len("dual coefficients", density.len(), d.len())?;
    Ok(v.iter()
        .zip(d)
        .zip(density.mass())
        .map(|((v, d), w)| v * d * w)
        .sum())
}

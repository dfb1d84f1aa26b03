//! Semiparametric Fisher information on a discretized model.
//!
//! For a score operator `A` and a gradient `psi'`, the information along a direction `alpha`
//! is `|A alpha|_2^2 / |psi' alpha|^2` and the information of the model is its infimum over
//! the tangent space. On a grid the infimum is an equality-constrained least-squares problem
//!
//! ```text
//!     minimize |A alpha|_{L2(P0)}^2   subject to   psi' alpha = 1   (and E0[alpha] = 0 if centered)
//! ```
//!
//! which is solved exactly by the null-space method. Independently, the least-norm solution of
//! `A* delta = psi'` is computed; positive information holds exactly when that system is
//! solvable, and then `info * |delta*|_2^2 = 1`. [`verify_theorem`] checks both sides.
//!
//! All linear algebra runs in Euclidean coordinates: a grid functional with pairing
//! coefficients `d` has coefficients `c = d * p * mu`, and `|A alpha|_2 = |W^{1/2} A alpha|`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::operators::{self, OperatorMatrix, Quotient, ScoreOperator};
use crate::serde_float;
use crate::spaces::{dual_pairing, Density};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cutoff and identifiability threshold.
    pub rank_tol: f64,
    /// Relative distance of the gradient from the adjoint range counted as membership.
    pub residual_tol: f64,
    /// Information at or below this value counts as zero.
    pub info_zero_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: operators::DEFAULT_RANK_TOL,
            residual_tol: 1e-8,
            info_zero_tol: 1e-12,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_tol", self.rank_tol),
            ("residual_tol", self.residual_tol),
            ("info_zero_tol", self.info_zero_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "tolerance {name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// The gradient `psi'` as pairing coefficients: `psi' alpha = sum_i alpha_i d_i p_i mu_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientFunctional {
    pub coefficients: Vec<f64>,
    pub label: String,
}

impl GradientFunctional {
    pub fn new(coefficients: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if coefficients.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(
                "gradient has non-finite coefficients".into(),
            ));
        }
        Ok(Self {
            coefficients,
            label: label.into(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|d| d * factor).collect(),
            label: self.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoProblem {
    operator: ScoreOperator,
    gradient: GradientFunctional,
    centered: bool,
    tolerances: Tolerances,
    estimand: Option<f64>,
}

impl InfoProblem {
    /// The operator must map grid functions to grid functions on the density's grid.
    pub fn new(
        operator: ScoreOperator,
        gradient: GradientFunctional,
        centered: bool,
    ) -> Result<Self> {
        let m = operator.density().len();
        check_len("operator columns", m, operator.ncols())?;
        check_len("gradient coefficients", m, gradient.coefficients.len())?;
        Ok(Self {
            operator,
            gradient,
            centered,
            tolerances: Tolerances::default(),
            estimand: None,
        })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Result<Self> {
        tolerances.validate()?;
        self.tolerances = tolerances;
        Ok(self)
    }

    /// Records the value of the estimand at `P0`; not used by the solver.
    pub fn with_estimand(mut self, value: f64) -> Self {
        self.estimand = Some(value);
        self
    }

    pub fn with_gradient(mut self, gradient: GradientFunctional) -> Result<Self> {
        check_len(
            "gradient coefficients",
            self.dim(),
            gradient.coefficients.len(),
        )?;
        self.gradient = gradient;
        Ok(self)
    }

    pub fn with_operator(mut self, operator: ScoreOperator) -> Result<Self> {
        check_len("operator columns", self.dim(), operator.ncols())?;
        check_len("operator rows", self.dim(), operator.nrows())?;
        self.operator = operator;
        Ok(self)
    }

    pub fn operator(&self) -> &ScoreOperator {
        &self.operator
    }

    pub fn gradient(&self) -> &GradientFunctional {
        &self.gradient
    }

    pub fn density(&self) -> &Density {
        self.operator.density()
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }

    pub fn estimand(&self) -> Option<f64> {
        self.estimand
    }

    pub fn dim(&self) -> usize {
        self.operator.ncols()
    }

    /// `psi' alpha`.
    pub fn evaluate_gradient(&self, alpha: &[f64]) -> Result<f64> {
        dual_pairing(alpha, &self.gradient.coefficients, self.density())
    }

    fn canonical(&self) -> Canonical {
        let w = self.density().mass();
        let c = DVector::from_iterator(
            w.len(),
            self.gradient.coefficients.iter().zip(w).map(|(d, w)| d * w),
        );
        Canonical {
            weighted: self.operator.weighted_matrix(),
            functional: c,
            centering: self.centered.then(|| DVector::from_column_slice(w)),
            tol: self.tolerances,
        }
    }
}

/// Outcome of [`compute_information`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    /// The information `I`; `+inf` when the gradient vanishes on the tangent space.
    #[serde(with = "serde_float")]
    pub info: f64,
    /// Set when `psi'` is identically zero on the tangent space.
    pub locally_constant: bool,
    pub centered: bool,
    /// A direction attaining the infimum, normalized so `psi' alpha* = 1`.
    pub minimizer: Option<Vec<f64>>,
    /// Least-norm `delta*` (as an `L2(P0)` grid function) minimizing the distance of
    /// `A* delta` from `psi'`.
    pub representer: Vec<f64>,
    pub representer_norm: f64,
    /// Distance of `psi'` from the range of `A*`, in Euclidean functional coordinates.
    pub residual: f64,
    /// `residual / |psi'|` (zero when `psi'` vanishes on the tangent space).
    pub relative_residual: f64,
    /// Whether `N(A) (within the tangent space) is contained in N(psi')`.
    pub identifiable: bool,
    /// A unit direction in `N(A)` with `psi' alpha > 0`, present when identifiability fails.
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representer {
    pub delta: Vec<f64>,
    pub norm: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identifiability {
    pub identifiable: bool,
    pub certificate: Option<Vec<f64>>,
}

/// Both sides of the equivalence `I > 0  <=>  psi' in R(A*)`, evaluated independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    #[serde(with = "serde_float")]
    pub info: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub representer_norm: f64,
    /// `info * |delta*|_2^2`, reported when information is positive and finite.
    pub info_times_norm_sq: Option<f64>,
    pub positive_information: bool,
    pub in_adjoint_range: bool,
    pub passed: bool,
}

/// Information along one direction, `|A alpha|_2^2 / |psi' alpha|^2`.
pub fn directional_information(p: &InfoProblem, alpha: &[f64]) -> Result<f64> {
    check_len("tangent vector", p.dim(), alpha.len())?;
    let canon = p.canonical();
    let a = DVector::from_column_slice(alpha);
    let anorm = a.norm();
    if let Some(w) = &canon.centering {
        let violation = w.dot(&a);
        if violation.abs() > p.tolerances.rank_tol * w.norm() * anorm {
            return Err(Error::NotInTangentSpace { violation });
        }
    }
    let slope = canon.functional.dot(&a);
    if slope.abs() <= p.tolerances.rank_tol * canon.functional.norm() * anorm {
        return Err(Error::ZeroGradientDirection);
    }
    let score = canon.weighted.mul_vec(alpha);
    let num: f64 = score.iter().map(|x| x * x).sum();
    Ok(num / (slope * slope))
}

/// Infimal information by exact equality-constrained least squares.
pub fn compute_information(p: &InfoProblem) -> Result<InfoReport> {
    let canon = p.canonical();
    let sol = canon.solve();
    let rep = canon.representer();
    let delta = to_grid_function(&rep.e, p.density());
    Ok(InfoReport {
        info: sol.info,
        locally_constant: sol.locally_constant,
        centered: p.centered,
        minimizer: sol.minimizer,
        representer_norm: rep.e.norm(),
        representer: delta,
        residual: rep.residual,
        relative_residual: rep.relative_residual(),
        identifiable: sol.identifiable,
        certificate: sol.certificate,
    })
}

/// Least-norm `delta` minimizing the distance between `A* delta` and `psi'` on the tangent
/// space.
pub fn least_norm_representer(p: &InfoProblem) -> Result<Representer> {
    let canon = p.canonical();
    let rep = canon.representer();
    Ok(Representer {
        delta: to_grid_function(&rep.e, p.density()),
        norm: rep.e.norm(),
        residual: rep.residual,
        relative_residual: rep.relative_residual(),
    })
}

/// Checks `N(A) ⊆ N(psi')` on the tangent space. When it fails, the certificate is the unit
/// vector of the null space on which `psi'` is largest.
pub fn check_local_identifiability(p: &InfoProblem) -> Result<Identifiability> {
    let canon = p.canonical();
    let (identifiable, certificate) = canon.identifiability();
    Ok(Identifiability {
        identifiable,
        certificate,
    })
}

/// Evaluates both sides of the positive-information / range-membership equivalence and
/// cross-checks `info * |delta*|^2 = 1` when both hold.
///
/// Returns [`Error::InconsistentVerdict`] (carrying the verdict) when the sides disagree at
/// the configured tolerances.
pub fn verify_theorem(p: &InfoProblem) -> Result<TheoremVerdict> {
    let report = compute_information(p)?;
    let verdict = verdict_from_report(&report, p.tolerances);
    if verdict.passed {
        Ok(verdict)
    } else {
        Err(Error::InconsistentVerdict(Box::new(verdict)))
    }
}

/// Builds the verdict for an already computed report without failing.
pub fn verdict_from_report(report: &InfoReport, tol: Tolerances) -> TheoremVerdict {
    let positive = report.info > tol.info_zero_tol;
    let in_range = report.relative_residual <= tol.residual_tol;
    let product = (positive && report.info.is_finite())
        .then_some(report.info * report.representer_norm * report.representer_norm);
    let product_ok = match product {
        Some(v) if in_range => (v - 1.0).abs() <= 1e-6,
        _ => true,
    };
    TheoremVerdict {
        info: report.info,
        residual: report.residual,
        relative_residual: report.relative_residual,
        representer_norm: report.representer_norm,
        info_times_norm_sq: product,
        positive_information: positive,
        in_adjoint_range: in_range,
        passed: positive == in_range && product_ok,
    }
}

/// Information recomputed on the quotient of the tangent space by `N(A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientCheck {
    pub nullity: usize,
    pub rank: usize,
    pub identifiable: bool,
    pub certificate: Option<Vec<f64>>,
    #[serde(with = "serde_float")]
    pub original_info: f64,
    /// Information of the reduced problem; absent when `psi'` does not pass to the quotient.
    #[serde(with = "serde_float::option")]
    pub reduced_info: Option<f64>,
    pub difference: Option<f64>,
}

/// Solves the problem again after quotienting out `N(A)` (restricted to the tangent space).
/// Centered problems are first parametrized by an orthonormal basis of the centered subspace,
/// so this path is dense and meant for moderate grids.
pub fn quotient_information(p: &InfoProblem) -> Result<QuotientCheck> {
    let original = compute_information(p)?;
    let canon = p.canonical();
    let m = p.dim();
    let a = p.operator.matrix().to_dense();
    let (a_t, c_t, basis) = match &canon.centering {
        Some(w) => {
            let t = linalg::orthogonal_complement(w);
            (&a * &t, t.tr_mul(&canon.functional), Some(t))
        }
        None => (a, canon.functional.clone(), None),
    };
    let op_t = ScoreOperator::dense(a_t, p.density().clone(), p.operator.domain_norm())?;
    let quotient = operators::quotient_reduce_with_tol(&op_t, p.tolerances.rank_tol);
    let lift = |v: DVector<f64>| -> Vec<f64> {
        match &basis {
            Some(t) => (t * v).as_slice().to_vec(),
            None => v.as_slice().to_vec(),
        }
    };
    let (null_basis, reduced_info) = match &quotient {
        Quotient::Trivial { null_basis } => (null_basis.clone(), None),
        Quotient::Reduced(q) => {
            let red = Canonical {
                weighted: q.reduced_operator.weighted_matrix(),
                functional: q.complement_basis.tr_mul(&c_t),
                centering: None,
                tol: p.tolerances,
            };
            (q.null_basis.clone(), Some(red.solve().info))
        }
    };
    // psi' passes to the quotient iff it vanishes on the null basis
    let proj = null_basis.basis.tr_mul(&c_t);
    let gnorm = c_t.norm();
    let identifiable = proj.norm() <= p.tolerances.rank_tol * gnorm;
    let certificate = (!identifiable).then(|| {
        let v = &null_basis.basis * &proj;
        let n = v.norm();
        lift(v / n)
    });
    let reduced_info = if identifiable {
        reduced_info.or(Some(f64::INFINITY))
    } else {
        None
    };
    let difference = reduced_info.map(|r| {
        if r.is_infinite() && original.info.is_infinite() {
            0.0
        } else {
            (r - original.info).abs()
        }
    });
    debug_assert_eq!(m, p.dim());
    Ok(QuotientCheck {
        nullity: null_basis.nullity(),
        rank: null_basis.rank,
        identifiable,
        certificate,
        original_info: original.info,
        reduced_info,
        difference,
    })
}

fn to_grid_function(e: &DVector<f64>, density: &Density) -> Vec<f64> {
    e.iter()
        .zip(density.mass())
        .map(|(e, w)| if *w > 0.0 { e / w.sqrt() } else { 0.0 })
        .collect()
}

/// The problem in Euclidean coordinates: minimize `|M alpha|^2` subject to `c.alpha = 1` and
/// optionally `w.alpha = 0`.
struct Canonical {
    weighted: OperatorMatrix,
    functional: DVector<f64>,
    centering: Option<DVector<f64>>,
    tol: Tolerances,
}

struct Solution {
    info: f64,
    locally_constant: bool,
    minimizer: Option<Vec<f64>>,
    identifiable: bool,
    certificate: Option<Vec<f64>>,
}

struct RepresenterSolution {
    /// Representer in weighted coordinates, `e = W^{1/2} delta`.
    e: DVector<f64>,
    residual: f64,
    gradient_norm: f64,
}

impl RepresenterSolution {
    fn relative_residual(&self) -> f64 {
        if self.gradient_norm > 0.0 {
            self.residual / self.gradient_norm
        } else {
            0.0
        }
    }
}

impl Canonical {
    /// Orthogonal projection of `v` onto the tangent space.
    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.centering {
            Some(w) => v - w * (w.dot(v) / w.norm_squared()),
            None => v.clone(),
        }
    }

    fn gradient_vanishes(&self) -> bool {
        let g = self.project(&self.functional).norm();
        g == 0.0 || g <= self.tol.rank_tol * self.functional.norm()
    }

    fn solve(&self) -> Solution {
        if self.gradient_vanishes() {
            return Solution {
                info: f64::INFINITY,
                locally_constant: true,
                minimizer: None,
                identifiable: true,
                certificate: None,
            };
        }
        let (identifiable, certificate) = self.identifiability();
        if !identifiable {
            return Solution {
                info: 0.0,
                locally_constant: false,
                minimizer: None,
                identifiable,
                certificate,
            };
        }
        let (info, alpha) = match &self.weighted {
            OperatorMatrix::Diagonal(s) => self.solve_diagonal(s),
            OperatorMatrix::Dense(m) => self.solve_dense(m),
        };
        Solution {
            info,
            locally_constant: false,
            minimizer: Some(alpha),
            identifiable,
            certificate: None,
        }
    }

    fn identifiability(&self) -> (bool, Option<Vec<f64>>) {
        let gnorm = self.project(&self.functional).norm();
        if gnorm == 0.0 {
            return (true, None);
        }
        let thr = self.tol.rank_tol * gnorm;
        match &self.weighted {
            OperatorMatrix::Diagonal(s) => {
                let (dead, _) = split_diagonal(s, self.tol.rank_tol);
                let mut r = DVector::zeros(s.len());
                for &i in &dead {
                    r[i] = self.functional[i];
                }
                if let Some(w) = &self.centering {
                    let mut wz = DVector::zeros(s.len());
                    for &i in &dead {
                        wz[i] = w[i];
                    }
                    let wn = wz.norm_squared();
                    if wn > 0.0 {
                        r -= &wz * (wz.dot(&r) / wn);
                    }
                }
                certificate_from(r, thr)
            }
            OperatorMatrix::Dense(m) => {
                let (mt, ct, basis) = self.tangent_coordinates(m);
                let dec = operators::decompose(&OperatorMatrix::Dense(mt), self.tol.rank_tol);
                let n = &dec.null.basis;
                let proj = n * n.tr_mul(&ct);
                let lifted = match basis {
                    Some(t) => t * proj,
                    None => proj,
                };
                certificate_from(lifted, thr)
            }
        }
    }

    /// `M T`, `T^T c` and `T` for an orthonormal tangent basis `T` (`None` means identity).
    fn tangent_coordinates(
        &self,
        m: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, Option<DMatrix<f64>>) {
        match &self.centering {
            Some(w) => {
                let t = linalg::orthogonal_complement(w);
                (m * &t, t.tr_mul(&self.functional), Some(t))
            }
            None => (m.clone(), self.functional.clone(), None),
        }
    }

    /// Null-space method: a particular solution of the gradient constraint plus the
    /// least-squares correction within the constraint's null space.
    fn solve_dense(&self, m: &DMatrix<f64>) -> (f64, Vec<f64>) {
        let (mt, gt, basis) = self.tangent_coordinates(m);
        let particular = &gt / gt.norm_squared();
        let beta = if gt.len() > 1 {
            let z = linalg::orthogonal_complement(&gt);
            let k = &mt * &z;
            let rhs = -(&mt * &particular);
            let y = linalg::min_norm_lstsq_scaled(&k, &rhs, self.tol.rank_tol, mt.norm());
            &particular + z * y
        } else {
            particular
        };
        let info = (&mt * &beta).norm_squared();
        let alpha = match basis {
            Some(t) => t * beta,
            None => beta,
        };
        (info, alpha.as_slice().to_vec())
    }

    /// Diagonal `M`: the minimizer is explicit. With centering, the gradient is first
    /// projected off the centering vector in the `1/q` inner product of the live coordinates
    /// (or by the free shift available on dead coordinates, if the centering vector charges
    /// them).
    fn solve_diagonal(&self, s: &DVector<f64>) -> (f64, Vec<f64>) {
        let n = s.len();
        let c = &self.functional;
        let (dead, live) = split_diagonal(s, self.tol.rank_tol);
        let q = |i: usize| s[i] * s[i];
        let mut alpha = vec![0.0; n];
        let Some(w) = &self.centering else {
            let total: f64 = live.iter().map(|&i| c[i] * c[i] / q(i)).sum();
            for &i in &live {
                alpha[i] = c[i] / (q(i) * total);
            }
            return (1.0 / total, alpha);
        };
        let wz2: f64 = dead.iter().map(|&i| w[i] * w[i]).sum();
        let kappa = if wz2 > 0.0 {
            dead.iter().map(|&i| c[i] * w[i]).sum::<f64>() / wz2
        } else {
            let cw: f64 = live.iter().map(|&i| c[i] * w[i] / q(i)).sum();
            let ww: f64 = live.iter().map(|&i| w[i] * w[i] / q(i)).sum();
            cw / ww
        };
        let reduced = |i: usize| c[i] - kappa * w[i];
        let total: f64 = live.iter().map(|&i| reduced(i).powi(2) / q(i)).sum();
        for &i in &live {
            alpha[i] = reduced(i) / (q(i) * total);
        }
        if wz2 > 0.0 {
            let shift = -live.iter().map(|&i| w[i] * alpha[i]).sum::<f64>();
            for &i in &dead {
                alpha[i] = shift * w[i] / wz2;
            }
        }
        (1.0 / total, alpha)
    }

    /// Least-norm `e` minimizing `|P_T (M^T e - c)|`.
    fn representer(&self) -> RepresenterSolution {
        let b = self.project(&self.functional);
        let gradient_norm = b.norm();
        match &self.weighted {
            OperatorMatrix::Dense(m) => {
                let mut k = m.transpose();
                if let Some(w) = &self.centering {
                    // P_T M^T, column by column
                    let wn = w.norm_squared();
                    for mut col in k.column_iter_mut() {
                        let f = w.dot(&col) / wn;
                        col.axpy(-f, w, 1.0);
                    }
                }
                let e = linalg::min_norm_lstsq(&k, &b, self.tol.rank_tol);
                let residual = (&k * &e - &b).norm();
                RepresenterSolution {
                    e,
                    residual,
                    gradient_norm,
                }
            }
            OperatorMatrix::Diagonal(s) => {
                let c = &self.functional;
                let (dead, live) = split_diagonal(s, self.tol.rank_tol);
                // M^T e must equal c + kappa w for some kappa (kappa = 0 without centering)
                let kappa = match &self.centering {
                    None => 0.0,
                    Some(w) => {
                        let wz2: f64 = dead.iter().map(|&i| w[i] * w[i]).sum();
                        if wz2 > 0.0 {
                            -dead.iter().map(|&i| c[i] * w[i]).sum::<f64>() / wz2
                        } else {
                            let q = |i: usize| s[i] * s[i];
                            let cw: f64 = live.iter().map(|&i| c[i] * w[i] / q(i)).sum();
                            let ww: f64 = live.iter().map(|&i| w[i] * w[i] / q(i)).sum();
                            -cw / ww
                        }
                    }
                };
                let target = |i: usize| match &self.centering {
                    Some(w) => c[i] + kappa * w[i],
                    None => c[i],
                };
                let mut e = DVector::zeros(s.len());
                for &i in &live {
                    e[i] = target(i) / s[i];
                }
                // `+ 0.0` turns the empty sum's -0.0 into 0.0
                let residual = (dead.iter().map(|&i| target(i).powi(2)).sum::<f64>() + 0.0).sqrt();
                RepresenterSolution {
                    e,
                    residual,
                    gradient_norm,
                }
            }
        }
    }
}

fn split_diagonal(s: &DVector<f64>, tol: f64) -> (Vec<usize>, Vec<usize>) {
    let smax = s.amax();
    (0..s.len()).partition(|&i| !(smax > 0.0 && s[i].abs() > tol * smax))
}

fn certificate_from(v: DVector<f64>, threshold: f64) -> (bool, Option<Vec<f64>>) {
    let n = v.norm();
    if n <= threshold {
        (true, None)
    } else {
        (false, Some((v / n).as_slice().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::operators::l2_norm;
    use crate::spaces::{GridMeasure, NormSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> Density {
        let grid = Arc::new(GridMeasure::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap());
        Density::new(vec![0.5, 0.5], grid).unwrap()
    }

    fn mean_problem(g: Vec<f64>, centered: bool) -> InfoProblem {
        let d = two_point();
        let op = ScoreOperator::identity(d, NormSpec::p0(2.0).unwrap()).unwrap();
        InfoProblem::new(op, GradientFunctional::new(g, "mean").unwrap(), centered).unwrap()
    }

    fn dense_version(p: &InfoProblem) -> InfoProblem {
        let op = ScoreOperator::dense(
            p.operator().matrix().to_dense(),
            p.density().clone(),
            p.operator().domain_norm(),
        )
        .unwrap();
        p.clone().with_operator(op).unwrap()
    }

    #[test]
    fn directional_examples() {
        let p = mean_problem(vec![0.0, 2.0], true);
        assert_relative_eq!(
            directional_information(&p, &[1.0, -1.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            directional_information(&p, &[2.0, -2.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let flat = mean_problem(vec![1.0, 1.0], true);
        assert!(matches!(
            directional_information(&flat, &[1.0, -1.0]),
            Err(Error::ZeroGradientDirection)
        ));
        assert!(matches!(
            directional_information(&p, &[1.0, 0.0]),
            Err(Error::NotInTangentSpace { .. })
        ));
        assert!(directional_information(&p, &[1.0]).is_err());
    }

    #[test]
    fn brute_force_direction_search_matches_centered_info() {
        // centered two-point problem: alpha = (a, -a); search also uncentered directions
        let p = mean_problem(vec![0.0, 2.0], true);
        let best = (1..1000)
            .map(|k| k as f64 / 100.0)
            .filter_map(|a| directional_information(&p, &[a, -a]).ok())
            .fold(f64::INFINITY, f64::min);
        let r = compute_information(&p).unwrap();
        assert_relative_eq!(r.info, best, epsilon = 1e-12);
        assert_relative_eq!(r.info, 1.0, epsilon = 1e-12);

        let u = mean_problem(vec![0.0, 2.0], false);
        let mut best = f64::INFINITY;
        for i in -100..=100 {
            for j in -100..=100 {
                if let Ok(v) = directional_information(&u, &[i as f64 / 10.0, j as f64 / 10.0]) {
                    best = best.min(v);
                }
            }
        }
        let r = compute_information(&u).unwrap();
        assert_relative_eq!(r.info, 0.5, epsilon = 1e-12);
        assert!(r.info <= best + 1e-12);
    }

    #[test]
    fn compute_examples_diagonal_and_dense() {
        for dense in [false, true] {
            let prep = |p: InfoProblem| if dense { dense_version(&p) } else { p };
            let r = compute_information(&prep(mean_problem(vec![0.0, 2.0], true))).unwrap();
            assert_relative_eq!(r.info, 1.0, epsilon = 1e-12);
            assert!(r.identifiable && r.certificate.is_none());
            let a = r.minimizer.unwrap();
            assert_relative_eq!(a[0] * 0.5 + a[1] * 0.5, 0.0, epsilon = 1e-12);

            let r = compute_information(&prep(mean_problem(vec![0.0, 2.0], false))).unwrap();
            assert_relative_eq!(r.info, 0.5, epsilon = 1e-12);
            let a = r.minimizer.unwrap();
            // optimum is proportional to g with psi' alpha = 1
            assert_relative_eq!(a[0], 0.0, epsilon = 1e-12);
            assert_relative_eq!(a[1], 1.0, epsilon = 1e-12);

            let r = compute_information(&prep(mean_problem(vec![3.0, 3.0], true))).unwrap();
            assert!(r.info.is_infinite() && r.locally_constant);
        }
    }

    #[test]
    fn zero_column_gives_certificate() {
        let grid = Arc::new(GridMeasure::counting(vec![0.0, 1.0, 2.0]).unwrap());
        let d = Density::uniform(grid).unwrap();
        for dense in [false, true] {
            let op = ScoreOperator::identity(d.clone(), NormSpec::euclidean())
                .unwrap()
                .with_zero_columns(&[1])
                .unwrap();
            let op = if dense {
                ScoreOperator::dense(op.matrix().to_dense(), d.clone(), NormSpec::euclidean())
                    .unwrap()
            } else {
                op
            };
            let p = InfoProblem::new(
                op,
                GradientFunctional::new(vec![0.0, 1.0, 0.0], "e1").unwrap(),
                false,
            )
            .unwrap();
            let r = compute_information(&p).unwrap();
            assert_eq!(r.info, 0.0);
            assert!(!r.identifiable);
            let cert = r.certificate.unwrap();
            assert!(
                (cert[1].abs() - 1.0).abs() < 1e-12
                    && cert[0].abs() < 1e-12
                    && cert[2].abs() < 1e-12
            );
            let id = check_local_identifiability(&p).unwrap();
            assert!(!id.identifiable);
            let v = verify_theorem(&p).unwrap();
            assert!(v.passed && !v.positive_information && !v.in_adjoint_range);
        }
    }

    #[test]
    fn identifiability_examples() {
        let grid = Arc::new(GridMeasure::counting(vec![0.0, 1.0, 2.0]).unwrap());
        let d = Density::uniform(grid).unwrap();
        let id = ScoreOperator::identity(d.clone(), NormSpec::euclidean()).unwrap();
        let p = InfoProblem::new(
            id,
            GradientFunctional::new(vec![1.0, -2.0, 5.0], "g").unwrap(),
            false,
        )
        .unwrap();
        assert!(check_local_identifiability(&p).unwrap().identifiable);

        // two equal columns and equal gradient weights: psi' kills e_0 - e_2
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 1.0, 0.5, -1.0, 0.5, 3.0, 1.0, 3.0]);
        let op = ScoreOperator::dense(a, d, NormSpec::euclidean()).unwrap();
        let p = InfoProblem::new(
            op,
            GradientFunctional::new(vec![1.0, 0.3, 1.0], "g").unwrap(),
            false,
        )
        .unwrap();
        // brute force: psi'(e_0 - e_2) = 0
        assert_eq!(p.evaluate_gradient(&[1.0, 0.0, -1.0]).unwrap(), 0.0);
        assert!(check_local_identifiability(&p).unwrap().identifiable);
        let p2 = p
            .clone()
            .with_gradient(GradientFunctional::new(vec![1.0, 0.3, 0.0], "g").unwrap())
            .unwrap();
        let id = check_local_identifiability(&p2).unwrap();
        assert!(!id.identifiable);
        let c = id.certificate.unwrap();
        assert!((c[0] + c[2]).abs() < 1e-12 && c[1].abs() < 1e-12);
    }

    #[test]
    fn representer_examples() {
        let r = least_norm_representer(&mean_problem(vec![0.0, 2.0], false)).unwrap();
        assert_relative_eq!(r.delta[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(r.delta[1], 2.0, epsilon = 1e-14);
        assert_relative_eq!(r.norm * r.norm, 2.0, epsilon = 1e-14);
        assert!(r.residual < 1e-15);

        for p in [
            mean_problem(vec![0.0, 2.0], true),
            dense_version(&mean_problem(vec![0.0, 2.0], true)),
        ] {
            let r = least_norm_representer(&p).unwrap();
            assert_relative_eq!(r.delta[0], -1.0, epsilon = 1e-12);
            assert_relative_eq!(r.delta[1], 1.0, epsilon = 1e-12);
            assert_relative_eq!(r.norm * r.norm, 1.0, epsilon = 1e-12);
            assert!(r.residual < 1e-14);
        }

        let r = least_norm_representer(&mean_problem(vec![0.0, 0.0], false)).unwrap();
        assert_eq!(r.delta, vec![0.0, 0.0]);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn verify_examples() {
        let v = verify_theorem(&mean_problem(vec![0.0, 2.0], true)).unwrap();
        assert!(v.passed && v.positive_information && v.in_adjoint_range);
        assert_relative_eq!(v.info_times_norm_sq.unwrap(), 1.0, epsilon = 1e-12);
        let v = verify_theorem(&mean_problem(vec![1.0, 1.0], true)).unwrap();
        assert!(v.passed && v.info.is_infinite());
    }

    #[test]
    fn inconsistent_verdict_is_reported() {
        // an absurd residual tolerance makes a non-identifiable instance look in-range
        let grid = Arc::new(GridMeasure::counting(vec![0.0, 1.0]).unwrap());
        let d = Density::uniform(grid).unwrap();
        let op = ScoreOperator::diagonal(vec![1.0, 0.0], d, NormSpec::sup()).unwrap();
        let tol = Tolerances {
            residual_tol: 10.0,
            ..Tolerances::default()
        };
        let p = InfoProblem::new(
            op,
            GradientFunctional::new(vec![0.0, 1.0], "x").unwrap(),
            false,
        )
        .unwrap()
        .with_tolerances(tol)
        .unwrap();
        match verify_theorem(&p) {
            Err(Error::InconsistentVerdict(v)) => assert!(!v.passed && v.info == 0.0),
            other => panic!("expected inconsistent verdict, got {other:?}"),
        }
    }

    #[test]
    fn tolerances_must_be_positive() {
        let p = mean_problem(vec![0.0, 2.0], false);
        let bad = Tolerances {
            rank_tol: 0.0,
            ..Tolerances::default()
        };
        assert!(p.with_tolerances(bad).is_err());
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> InfoProblem {
        let m = rng.random_range(2..16);
        let points = (0..m).map(|i| i as f64).collect();
        let weights = (0..m).map(|_| rng.random_range(0.2..2.0)).collect();
        let grid = Arc::new(GridMeasure::new(points, weights).unwrap());
        let values = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let d = Density::normalized(values, grid).unwrap();
        let r = rng.random_range(1..=m);
        let a = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0))
            * DMatrix::from_fn(r, m, |_, _| rng.random_range(-1.0..1.0));
        let op = ScoreOperator::dense(a, d.clone(), NormSpec::euclidean()).unwrap();
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let centered = rng.random_bool(0.5);
        InfoProblem::new(op, GradientFunctional::new(g, "g").unwrap(), centered).unwrap()
    }

    fn random_feasible_direction(p: &InfoProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let m = p.dim();
        let mut a: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        if p.centered() {
            let mean = p.density().expect(&a).unwrap();
            a.iter_mut().for_each(|x| *x -= mean);
        }
        a
    }

    #[test]
    fn scale_invariance_and_infimum_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let p = random_problem(&mut rng);
            let r = compute_information(&p).unwrap();
            for _ in 0..1000 {
                let a = random_feasible_direction(&p, &mut rng);
                let Ok(i1) = directional_information(&p, &a) else {
                    continue;
                };
                let c = rng.random_range(-5.0f64..5.0);
                if c.abs() < 1e-3 {
                    continue;
                }
                let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
                let i2 = directional_information(&p, &scaled).unwrap();
                assert!(
                    (i1 - i2).abs() <= 1e-12 * i1.max(1e-300) * 10.0,
                    "{i1} vs {i2}"
                );
                assert!(r.info <= i1 + 1e-9);
            }
        }
    }

    #[test]
    fn minimizer_attains_the_reported_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let p = random_problem(&mut rng);
            let r = compute_information(&p).unwrap();
            if let Some(a) = &r.minimizer {
                assert_relative_eq!(p.evaluate_gradient(a).unwrap(), 1.0, epsilon = 1e-9);
                if p.centered() {
                    assert!(
                        p.density().expect(a).unwrap().abs()
                            < 1e-9 * (1.0 + a.iter().map(|x| x.abs()).sum::<f64>())
                    );
                }
                let s = l2_norm(&p.operator().apply(a).unwrap(), p.density()).unwrap();
                assert_relative_eq!(s * s, r.info, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn gradient_scaling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let p = random_problem(&mut rng);
            let base = compute_information(&p).unwrap();
            if !(base.info > 0.0 && base.info.is_finite()) {
                continue;
            }
            let c = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let scaled = p.clone().with_gradient(p.gradient().scaled(c)).unwrap();
            let r = compute_information(&scaled).unwrap();
            assert_relative_eq!(r.info, base.info / (c * c), max_relative = 1e-10);
        }
    }

    #[test]
    fn identifiable_implies_positive_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut seen = 0;
        for _ in 0..200 {
            let p = random_problem(&mut rng);
            // push the gradient into the row space so the instance is identifiable
            let a = p.operator().matrix().to_dense();
            let delta: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = p.operator().adjoint_apply(&delta).unwrap();
            let _ = a;
            let p = p
                .with_gradient(GradientFunctional::new(d, "range").unwrap())
                .unwrap();
            let id = check_local_identifiability(&p).unwrap();
            if id.identifiable {
                seen += 1;
                let r = compute_information(&p).unwrap();
                assert!(r.info > p.tolerances().info_zero_tol);
            }
        }
        assert!(seen > 150);
    }

    #[test]
    fn quotient_information_matches_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..100 {
            let p = random_problem(&mut rng);
            let delta: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = p.operator().adjoint_apply(&delta).unwrap();
            let p = p
                .with_gradient(GradientFunctional::new(d, "range").unwrap())
                .unwrap();
            let q = quotient_information(&p).unwrap();
            if q.identifiable {
                let r = q.reduced_info.unwrap();
                if r.is_finite() {
                    assert!(
                        (r - q.original_info).abs() <= 1e-9 * q.original_info.max(1.0),
                        "{r} vs {}",
                        q.original_info
                    );
                }
            }
        }
    }

    #[test]
    fn theorem_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..300 {
            let p = random_problem(&mut rng);
            let v = verify_theorem(&p).expect("theorem verdict");
            assert!(v.passed);
        }
    }

    #[test]
    fn diagonal_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let m = rng.random_range(2..12);
            let points = (0..m).map(|i| i as f64).collect();
            let weights = (0..m).map(|_| rng.random_range(0.2..2.0)).collect();
            let grid = Arc::new(GridMeasure::new(points, weights).unwrap());
            let values = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let d = Density::normalized(values, grid).unwrap();
            let diag: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random_bool(0.25) {
                        0.0
                    } else {
                        rng.random_range(-2.0..2.0)
                    }
                })
                .collect();
            let mut g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            // keep roughly half identifiable
            if rng.random_bool(0.5) {
                for i in 0..m {
                    if diag[i] == 0.0 {
                        g[i] = 0.0;
                    }
                }
            }
            let centered = rng.random_bool(0.5);
            let op = ScoreOperator::diagonal(diag, d.clone(), NormSpec::sup()).unwrap();
            let p =
                InfoProblem::new(op, GradientFunctional::new(g, "g").unwrap(), centered).unwrap();
            let pd = dense_version(&p);
            let a = compute_information(&p).unwrap();
            let b = compute_information(&pd).unwrap();
            assert_eq!(a.identifiable, b.identifiable);
            assert_eq!(a.locally_constant, b.locally_constant);
            if a.info.is_finite() {
                assert!(
                    (a.info - b.info).abs() <= 1e-9 * a.info.max(1e-3),
                    "{} vs {}",
                    a.info,
                    b.info
                );
                assert!(
                    (a.residual - b.residual).abs() <= 1e-9,
                    "{} vs {}",
                    a.residual,
                    b.residual
                );
            }
            assert!(verify_theorem(&p).unwrap().passed);
        }
    }
}

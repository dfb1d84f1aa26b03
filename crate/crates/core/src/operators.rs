//! Score operators, their adjoints under the grid pairing, null spaces and the quotient
//! reduction that makes a score operator one-to-one.
//!
//! Rows of a score operator are indexed by the `L2(P0)` grid and columns by tangent
//! coordinates. Everything that depends on "being zero in `L2(P0)`" (null spaces, operator
//! norms) is computed on the row-weighted matrix `W^{1/2} A` with `W = diag(p_i mu_i)`, which
//! coincides with `A` itself whenever `P0` charges every grid point.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::spaces::{Density, NormSpec};

/// Default singular-value cutoff, relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const CONTINUITY_SEED: u64 = 0x5eed_c0de;
const CONTINUITY_TRIALS: usize = 100;

/// Matrix of a score operator. Diagonal operators (both worked examples) are kept in O(m)
/// storage so refinement studies can reach large grids.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorMatrix {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl OperatorMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            Self::Dense(a) => a.nrows(),
            Self::Diagonal(d) => d.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Self::Dense(a) => a.ncols(),
            Self::Diagonal(d) => d.len(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(a) => a.clone(),
            Self::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Self::Dense(a) => a.iter().all(|x| x.is_finite()),
            Self::Diagonal(d) => d.iter().all(|x| x.is_finite()),
        }
    }

    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(a) => (a * DVector::from_column_slice(x)).as_slice().to_vec(),
            Self::Diagonal(d) => d.iter().zip(x).map(|(a, x)| a * x).collect(),
        }
    }

    pub(crate) fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(a) => (a.tr_mul(&DVector::from_column_slice(y)))
                .as_slice()
                .to_vec(),
            Self::Diagonal(d) => d.iter().zip(y).map(|(a, y)| a * y).collect(),
        }
    }

    pub(crate) fn scale_rows(&self, s: &[f64]) -> Self {
        match self {
            Self::Dense(a) => {
                let mut b = a.clone();
                for (i, mut row) in b.row_iter_mut().enumerate() {
                    row *= s[i];
                }
                Self::Dense(b)
            }
            Self::Diagonal(d) => Self::Diagonal(d.component_mul(&DVector::from_column_slice(s))),
        }
    }
}

/// Continuous linear map from the tangent space into `L2(P0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOperator {
    matrix: OperatorMatrix,
    domain_norm: NormSpec,
    density: Density,
    continuity_bound: Option<f64>,
}

impl ScoreOperator {
    pub fn new(matrix: OperatorMatrix, density: Density, domain_norm: NormSpec) -> Result<Self> {
        check_len("operator rows", density.len(), matrix.nrows())?;
        if !matrix.is_finite() {
            return Err(Error::InvalidSpec("operator has non-finite entries".into()));
        }
        Ok(Self {
            matrix,
            domain_norm,
            density,
            continuity_bound: None,
        })
    }

    pub fn dense(matrix: DMatrix<f64>, density: Density, domain_norm: NormSpec) -> Result<Self> {
        Self::new(OperatorMatrix::Dense(matrix), density, domain_norm)
    }

    pub fn diagonal(diag: Vec<f64>, density: Density, domain_norm: NormSpec) -> Result<Self> {
        Self::new(
            OperatorMatrix::Diagonal(DVector::from_vec(diag)),
            density,
            domain_norm,
        )
    }

    /// The inclusion map of a grid function space into `L2(P0)`.
    pub fn identity(density: Density, domain_norm: NormSpec) -> Result<Self> {
        let m = density.len();
        Self::diagonal(vec![1.0; m], density, domain_norm)
    }

    /// Attaches a constant `C` with `|A a|_2 <= C |a|_domain` after checking it on
    /// random dense and sparse directions. Only meaningful when the domain is the grid.
    pub fn with_continuity_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Domain(format!(
                "continuity bound {bound} is invalid"
            )));
        }
        check_len("operator columns", self.density.len(), self.ncols())?;
        let m = self.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(CONTINUITY_SEED);
        for trial in 0..2 * CONTINUITY_TRIALS {
            let alpha: Vec<f64> = if trial < CONTINUITY_TRIALS {
                (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
            } else {
                let mut a = vec![0.0; m];
                a[rng.random_range(0..m)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                a
            };
            let lhs = l2_norm(&self.apply(&alpha)?, &self.density)?;
            let rhs = bound * self.domain_norm.eval(&alpha, &self.density)?;
            if lhs > rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                return Err(Error::InvalidSpec(format!(
                    "continuity bound {bound} violated: |A a|_2 = {lhs} > {rhs}"
                )));
            }
        }
        self.continuity_bound = Some(bound);
        Ok(self)
    }

    /// Replaces the given columns by zeros; used to inject non-identifiable directions.
    pub fn with_zero_columns(self, cols: &[usize]) -> Result<Self> {
        let n = self.ncols();
        if let Some(&j) = cols.iter().find(|&&j| j >= n) {
            return Err(Error::InvalidSpec(format!(
                "column {j} out of range (n = {n})"
            )));
        }
        let matrix = match self.matrix {
            OperatorMatrix::Dense(mut a) => {
                for &j in cols {
                    a.column_mut(j).fill(0.0);
                }
                OperatorMatrix::Dense(a)
            }
            OperatorMatrix::Diagonal(mut d) => {
                for &j in cols {
                    d[j] = 0.0;
                }
                OperatorMatrix::Diagonal(d)
            }
        };
        Ok(Self {
            matrix,
            continuity_bound: None,
            ..self
        })
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn domain_norm(&self) -> NormSpec {
        self.domain_norm
    }

    pub fn continuity_bound(&self) -> Option<f64> {
        self.continuity_bound
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// The score `A alpha`.
    pub fn apply(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        check_len("tangent vector", self.ncols(), alpha.len())?;
        Ok(self.matrix.mul_vec(alpha))
    }

    /// Coefficients of the functional `alpha -> <A alpha, delta>_{L2(P0)}` in plain Euclidean
    /// coordinates, i.e. `A^T W delta`.
    pub fn adjoint_functional(&self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("L2 vector", self.nrows(), delta.len())?;
        let wd: Vec<f64> = delta
            .iter()
            .zip(self.density.mass())
            .map(|(d, w)| d * w)
            .collect();
        Ok(self.matrix.tr_mul_vec(&wd))
    }

    /// `A* delta` as pairing coefficients `d`, so that
    /// `dual_pairing(alpha, d) = <A alpha, delta>_{L2(P0)}` for every `alpha`.
    ///
    /// Requires the tangent coordinates to live on the same grid as the density. Coordinates
    /// with zero pairing weight get `d_j = 0` when the adjoint has no mass there and are an
    /// error otherwise.
    pub fn adjoint_apply(&self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("operator columns", self.density.len(), self.ncols())?;
        let f = self.adjoint_functional(delta)?;
        let scale = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        f.iter()
            .zip(self.density.mass())
            .enumerate()
            .map(|(j, (fj, w))| {
                if *w > 0.0 {
                    Ok(fj / w)
                } else if fj.abs() <= 1e-14 * scale {
                    Ok(0.0)
                } else {
                    Err(Error::DegenerateWeight { index: j })
                }
            })
            .collect()
    }

    /// `W^{1/2} A`: the matrix whose Euclidean norm of `M alpha` is `|A alpha|_{L2(P0)}`.
    pub fn weighted_matrix(&self) -> OperatorMatrix {
        let s: Vec<f64> = self.density.mass().iter().map(|w| w.sqrt()).collect();
        self.matrix.scale_rows(&s)
    }
}

/// `(sum_i v_i^2 p_i mu_i)^(1/2)`.
pub fn l2_norm(v: &[f64], density: &Density) -> Result<f64> {
    check_len("L2 vector", density.len(), v.len())?;
    Ok(v.iter()
        .zip(density.mass())
        .map(|(x, w)| x * x * w)
        .sum::<f64>()
        .sqrt())
}

/// Orthonormal basis of the numerical null space.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis {
    /// Basis vectors as columns (`m_in x nullity`).
    pub basis: DMatrix<f64>,
    pub rank: usize,
    pub tolerance: f64,
}

impl NullSpaceBasis {
    pub fn nullity(&self) -> usize {
        self.basis.ncols()
    }

    pub fn vectors(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.basis
            .column_iter()
            .map(|c| c.iter().copied().collect())
    }
}

pub(crate) struct Decomposition {
    pub null: NullSpaceBasis,
    /// Orthonormal basis of the complement of the null space (`m_in x rank`).
    pub complement: DMatrix<f64>,
}

pub(crate) fn decompose(m: &OperatorMatrix, tol: f64) -> Decomposition {
    let n = m.ncols();
    match m {
        OperatorMatrix::Diagonal(d) => {
            let smax = d.amax();
            let live = |x: f64| smax > 0.0 && x.abs() > tol * smax;
            let keep: Vec<usize> = (0..n).filter(|&j| live(d[j])).collect();
            let dead: Vec<usize> = (0..n).filter(|&j| !live(d[j])).collect();
            let unit_cols = |idx: &[usize]| {
                DMatrix::from_fn(n, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 })
            };
            Decomposition {
                null: NullSpaceBasis {
                    basis: unit_cols(&dead),
                    rank: keep.len(),
                    tolerance: tol,
                },
                complement: unit_cols(&keep),
            }
        }
        OperatorMatrix::Dense(a) => {
            let (sigma, v) = linalg::right_singular_system(a);
            let rank = linalg::numerical_rank(&sigma, tol);
            Decomposition {
                null: NullSpaceBasis {
                    basis: v.columns(rank, n - rank).into_owned(),
                    rank,
                    tolerance: tol,
                },
                complement: v.columns(0, rank).into_owned(),
            }
        }
    }
}

/// Null space of `A` as a map into `L2(P0)`, with singular values below `tol * sigma_max`
/// treated as zero.
pub fn null_space(op: &ScoreOperator, tol: f64) -> NullSpaceBasis {
    decompose(&op.weighted_matrix(), tol).null
}

/// `A` restricted to the orthogonal complement of its null space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientReduction {
    /// `A V` where the columns of `V` are `complement_basis`; one-to-one by construction.
    pub reduced_operator: ScoreOperator,
    pub complement_basis: DMatrix<f64>,
    pub null_basis: NullSpaceBasis,
}

impl QuotientReduction {
    /// Lifts reduced coordinates back to the original tangent coordinates.
    pub fn lift(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        check_len(
            "reduced vector",
            self.complement_basis.ncols(),
            reduced.len(),
        )?;
        Ok(
            (&self.complement_basis * DVector::from_column_slice(reduced))
                .as_slice()
                .to_vec(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quotient {
    Reduced(QuotientReduction),
    /// `A = 0`: every direction is in the null space and the quotient is the zero space.
    Trivial {
        null_basis: NullSpaceBasis,
    },
}

pub fn quotient_reduce(op: &ScoreOperator) -> Quotient {
    quotient_reduce_with_tol(op, DEFAULT_RANK_TOL)
}

pub fn quotient_reduce_with_tol(op: &ScoreOperator, tol: f64) -> Quotient {
    let dec = decompose(&op.weighted_matrix(), tol);
    if dec.null.rank == 0 {
        return Quotient::Trivial {
            null_basis: dec.null,
        };
    }
    let reduced = op.matrix.to_dense() * &dec.complement;
    let reduced_operator = ScoreOperator {
        matrix: OperatorMatrix::Dense(reduced),
        domain_norm: NormSpec::euclidean(),
        density: op.density.clone(),
        continuity_bound: None,
    };
    Quotient::Reduced(QuotientReduction {
        reduced_operator,
        complement_basis: dec.complement,
        null_basis: dec.null,
    })
}

//! The soft-absolute Hessian metric `G = Psi g(Lambda) Psiᵀ`, with
//! `g(lambda) = sqrt(kappa^2 + lambda^2)`, and the cached matrices that turn
//! its derivatives into two trace contractions against `dH/dq_i`.
//!
//! With `T` from [`t_matrix`] and `b = Psiᵀ p / g`:
//!
//! ```text
//! pᵀ G⁻¹ (dG/dq_i) G⁻¹ p = tr(W1 dH/dq_i),   W1 = Psi (b bᵀ ⊙ T) Psiᵀ
//! tr(G⁻¹ dG/dq_i)        = tr(W2 dH/dq_i),   W2 = Psi diag(g'/g) Psiᵀ
//! ```
//!
//! `W2` does not depend on the momentum, so it is built once per position.

mod jacobi;

pub use jacobi::{
    modified_gram_schmidt, off_norm, orthogonality_error, static_eigendecompose, warm_eigendecompose, Eigen,
    JacobiConfig,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

/// `sqrt(kappa^2 + lambda^2)`.
pub fn softabs(lambda: f64, kappa: f64) -> f64 {
    kappa.hypot(lambda)
}

/// `d/dlambda softabs = lambda / g`.
pub fn softabs_derivative(lambda: f64, kappa: f64) -> f64 {
    lambda / softabs(lambda, kappa)
}

/// Divided differences of `g` over eigenvalue pairs, with `g'` on the
/// diagonal and for pairs closer than `kappa * 1e-10`.
pub fn t_matrix(lambda: ArrayView1<'_, f64>, kappa: f64) -> Array2<f64> {
    let d = lambda.len();
    let g: Vec<f64> = lambda.iter().map(|&l| softabs(l, kappa)).collect();
    let close = kappa * 1e-10;
    let mut t = Array2::zeros((d, d));
    for j in 0..d {
        for l in j..d {
            let diff = lambda[j] - lambda[l];
            let v = if diff.abs() <= close {
                softabs_derivative(0.5 * (lambda[j] + lambda[l]), kappa)
            } else {
                (g[j] - g[l]) / diff
            };
            t[[j, l]] = v;
            t[[l, j]] = v;
        }
    }
    t
}

/// The metric at one position.
#[derive(Debug, Clone)]
pub struct MetricState {
    pub eigenvalues: Array1<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: Array2<f64>,
    /// `g(lambda_i)`.
    pub softabs: Array1<f64>,
    pub log_det: f64,
    pub kappa: f64,
    /// Jacobi sweeps used by the decomposition that produced this state.
    pub sweeps: usize,
    /// Warm-started decompositions since the last re-orthonormalization.
    pub steps_since_orthogonalization: usize,
    t: Array2<f64>,
    w2: Array2<f64>,
}

impl MetricState {
    pub fn from_eigen(eigen: Eigen, kappa: f64, steps_since_orthogonalization: usize) -> Self {
        let Eigen {
            values,
            vectors,
            sweeps,
        } = eigen;
        let g = values.mapv(|l| softabs(l, kappa));
        let log_det = g.iter().map(|v| v.ln()).sum();
        let t = t_matrix(values.view(), kappa);
        let ratio = Array1::from_shape_fn(values.len(), |i| t[[i, i]] / g[i]);
        let w2 = (&vectors * &ratio).dot(&vectors.t());
        Self {
            eigenvalues: values,
            eigenvectors: vectors,
            softabs: g,
            log_det,
            kappa,
            sweeps,
            steps_since_orthogonalization,
            t,
            w2,
        }
    }

    /// Cold-start decomposition of `h`.
    pub fn from_hessian(h: ArrayView2<'_, f64>, kappa: f64, jacobi: JacobiConfig) -> Result<Self> {
        Ok(Self::from_eigen(static_eigendecompose(h, jacobi)?, kappa, 0))
    }

    /// Decomposition of `h` warm-started from this state's eigenvectors.
    /// Every `gs_interval`-th call re-orthonormalizes them first.
    pub fn rebuild_dynamic(&self, h: ArrayView2<'_, f64>, jacobi: JacobiConfig, gs_interval: usize) -> Result<Self> {
        let steps = self.steps_since_orthogonalization + 1;
        if gs_interval > 0 && steps >= gs_interval {
            let mut psi = self.eigenvectors.clone();
            modified_gram_schmidt(&mut psi);
            let eigen = warm_eigendecompose(h, psi.view(), jacobi)?;
            Ok(Self::from_eigen(eigen, self.kappa, 0))
        } else {
            let eigen = warm_eigendecompose(h, self.eigenvectors.view(), jacobi)?;
            Ok(Self::from_eigen(eigen, self.kappa, steps))
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `G v`.
    pub fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let coords = self.eigenvectors.t().dot(&v) * &self.softabs;
        self.eigenvectors.dot(&coords)
    }

    /// `G⁻¹ v`.
    pub fn apply_inverse(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let coords = self.eigenvectors.t().dot(&v) / &self.softabs;
        self.eigenvectors.dot(&coords)
    }

    /// `G = Psi g(Lambda) Psiᵀ` as a dense matrix.
    pub fn matrix(&self) -> Array2<f64> {
        (&self.eigenvectors * &self.softabs).dot(&self.eigenvectors.t())
    }

    /// A draw from `N(0, G)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let z = Array1::from_shape_fn(self.dim(), |i| rng.sample::<f64, _>(StandardNormal) * self.softabs[i].sqrt());
        self.eigenvectors.dot(&z)
    }

    pub fn t(&self) -> ArrayView2<'_, f64> {
        self.t.view()
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        self.w2.view()
    }

    /// `W1 = Psi (b bᵀ ⊙ T) Psiᵀ` with `b = Psiᵀ p / g`.
    pub fn w1(&self, p: ArrayView1<'_, f64>) -> Array2<f64> {
        let b = self.eigenvectors.t().dot(&p) / &self.softabs;
        let mut inner = self.t.clone();
        Zip::indexed(&mut inner).for_each(|(j, l), v| *v *= b[j] * b[l]);
        let half = self.eigenvectors.dot(&inner);
        let mut w1 = half.dot(&self.eigenvectors.t());
        symmetrize(&mut w1);
        w1
    }

    pub fn build_cache(&self, p: ArrayView1<'_, f64>) -> BetancourtCache {
        let b = self.eigenvectors.t().dot(&p) / &self.softabs;
        BetancourtCache {
            t: self.t.clone(),
            b,
            r: self.softabs.mapv(f64::recip),
            w1: self.w1(p),
            w2: self.w2.clone(),
        }
    }
}

fn symmetrize(w: &mut Array2<f64>) {
    let d = w.nrows();
    for i in 0..d {
        for j in i + 1..d {
            let v = 0.5 * (w[[i, j]] + w[[j, i]]);
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
}

/// Momentum-dependent quantities for one `(q, p)`.
#[derive(Debug, Clone)]
pub struct BetancourtCache {
    pub t: Array2<f64>,
    /// Diagonal of `B`: `(Psiᵀ p)_i / g_i`.
    pub b: Array1<f64>,
    /// Diagonal of `R`: `1 / g_i`.
    pub r: Array1<f64>,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

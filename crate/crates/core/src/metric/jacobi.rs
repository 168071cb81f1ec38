use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Stopping rule for the cyclic Jacobi method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiConfig {
    /// Converged when the off-diagonal Frobenius norm is at most
    /// `zeta * ||H||_F`.
    pub zeta: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        Self {
            zeta: 1e-13,
            max_sweeps: 30,
        }
    }
}

/// Eigenpairs in Jacobi's natural (unsorted) order; column `i` of
/// `vectors` belongs to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

/// Cold-start cyclic-by-row Jacobi.
pub fn static_eigendecompose(h: ArrayView2<'_, f64>, config: JacobiConfig) -> Result<Eigen> {
    let d = check_square(h)?;
    let mut a: Vec<f64> = h.iter().copied().collect();
    symmetrize(&mut a, d);
    let mut vt = vec![0.0; d * d];
    for i in 0..d {
        vt[i * d + i] = 1.0;
    }
    let norm = frobenius(&a);
    let sweeps = jacobi(&mut a, &mut vt, d, norm, config)?;
    Ok(finish(a, vt, d, sweeps))
}

/// Warm-started Jacobi: diagonalizes `Psiᵀ H Psi` and accumulates the
/// rotations onto `Psi`. When `psi` came from a nearby matrix the rotated
/// problem is almost diagonal and converges in one or two sweeps.
pub fn warm_eigendecompose(
    h: ArrayView2<'_, f64>,
    psi: ArrayView2<'_, f64>,
    config: JacobiConfig,
) -> Result<Eigen> {
    let d = check_square(h)?;
    if psi.dim() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: psi.nrows(),
        });
    }
    let rotated = psi.t().dot(&h.dot(&psi));
    let mut a: Vec<f64> = rotated.iter().copied().collect();
    symmetrize(&mut a, d);
    let mut vt: Vec<f64> = psi.t().iter().copied().collect();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sweeps = jacobi(&mut a, &mut vt, d, norm, config)?;
    Ok(finish(a, vt, d, sweeps))
}

/// Re-orthonormalizes the columns of `psi` in place (modified Gram–Schmidt).
pub fn modified_gram_schmidt(psi: &mut Array2<f64>) {
    let d = psi.ncols();
    let mut cols: Vec<Array1<f64>> = psi.columns().into_iter().map(|c| c.to_owned()).collect();
    for i in 0..d {
        let (done, rest) = cols.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            let r = v.dot(u);
            v.scaled_add(-r, u);
        }
        let n = v.dot(v).sqrt();
        if n > 0.0 {
            *v /= n;
        }
    }
    for (i, c) in cols.into_iter().enumerate() {
        psi.column_mut(i).assign(&c);
    }
}

/// `max |Psiᵀ Psi - I|`.
pub fn orthogonality_error(psi: ArrayView2<'_, f64>) -> f64 {
    let gram = psi.t().dot(&psi);
    gram.indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Off-diagonal Frobenius norm.
pub fn off_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt()
}

fn check_square(h: ArrayView2<'_, f64>) -> Result<usize> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: h.ncols(),
        });
    }
    Ok(h.nrows())
}

fn symmetrize(a: &mut [f64], d: usize) {
    for i in 0..d {
        for j in i + 1..d {
            let v = 0.5 * (a[i * d + j] + a[j * d + i]);
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
    }
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_norm_flat(a: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j] * a[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic-by-row sweeps on the row-major symmetric `a`, accumulating the
/// rotations into the rows of `vt` (the transposed eigenvector matrix).
/// Returns the number of sweeps run.
fn jacobi(a: &mut [f64], vt: &mut [f64], d: usize, norm: f64, config: JacobiConfig) -> Result<usize> {
    let target = config.zeta * norm;
    // rotations this small cannot keep the off-norm above target
    let skip = if d > 1 { target / d as f64 } else { 0.0 };
    let mut sweeps = 0;
    loop {
        if off_norm_flat(a, d) <= target {
            return Ok(sweeps);
        }
        if sweeps == config.max_sweeps {
            return Err(Error::NonConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                if 100.0 * apq.abs() + app.abs() == app.abs() && 100.0 * apq.abs() + aqq.abs() == aqq.abs() {
                    a[p * d + q] = 0.0;
                    a[q * d + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for r in 0..d {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * d + p];
                    let arq = a[r * d + q];
                    let np = c * arp - s * arq;
                    let nq = s * arp + c * arq;
                    a[r * d + p] = np;
                    a[p * d + r] = np;
                    a[r * d + q] = nq;
                    a[q * d + r] = nq;
                }
                let (head, tail) = vt.split_at_mut(q * d);
                let rp = &mut head[p * d..p * d + d];
                let rq = &mut tail[..d];
                for (vp, vq) in rp.iter_mut().zip(rq.iter_mut()) {
                    let (x, y) = (*vp, *vq);
                    *vp = c * x - s * y;
                    *vq = s * x + c * y;
                }
            }
        }
    }
}

fn finish(a: Vec<f64>, vt: Vec<f64>, d: usize, sweeps: usize) -> Eigen {
    let values = Array1::from_shape_fn(d, |i| a[i * d + i]);
    let vt = Array2::from_shape_vec((d, d), vt).expect("square buffer");
    Eigen {
        values,
        vectors: vt.t().as_standard_layout().into_owned(),
        sweeps,
    }
}

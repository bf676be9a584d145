use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

/// Principal-component basis fitted to a set of row vectors.
///
/// `components` holds one unit-length principal axis per row, ordered by
/// decreasing explained variance. Projection subtracts `mean` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k × d, row i = i-th principal axis.
    pub components: Matrix,
    /// Eigenvalue (variance along axis) per component.
    pub explained_variance: Vec<f64>,
    /// Eigenvalue divided by total variance (trace of the covariance).
    pub explained_ratio: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Sweeps rotate away off-diagonal mass until it drops below 1e-14 of the
/// initial Frobenius norm (or 64 sweeps, whichever comes first — far more
/// than the handful a well-conditioned covariance needs). Returns
/// (eigenvalues, eigenvectors) unordered; eigenvector i is column i,
/// returned here as row i of the matrix.
pub fn jacobi_eigen(sym: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = sym.rows();
    if n != sym.cols() {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            sym.rows(),
            sym.cols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (sym.get(i, j) - sym.get(j, i)).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    sym.get(i, j),
                    sym.get(j, i)
                )));
            }
        }
    }

    let mut a = sym.clone();
    // v starts as identity; accumulates the product of all rotations so its
    // columns end up as eigenvectors.
    let mut v = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s
    };

    let tol = off(&a).max(1e-300) * 1e-28;
    for _sweep in 0..64 {
        if off(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Classic stable rotation angle computation.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    // Hand back eigenvectors as rows for easy projection.
    Ok((eigenvalues, v.transpose()))
}

/// Fit a PCA basis to `data` (one observation per row), keeping the top
/// `k` components.
///
/// Covariance uses the n−1 divisor. Components are ordered by decreasing
/// eigenvalue; exact ties keep their relative order from the decomposition.
/// Each axis is sign-normalised so its largest-magnitude entry is
/// non-negative (firstmost on magnitude ties), making the basis reproducible
/// regardless of rotation history.
pub fn pca_fit(data: &Matrix, k: usize) -> Result<PcaModel> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 2 observations, got {n}"
        )));
    }
    if k == 0 || k > d {
        return Err(Error::invalid(format!(
            "cannot keep {k} of {d} components"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = Matrix::zeros(d, d);
    for row in data.iter_rows() {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        cov.add_outer(&centered, &centered);
    }
    cov.scale(1.0 / (n as f64 - 1.0));

    let (eigenvalues, axes) = jacobi_eigen(&cov)?;
    let total: f64 = eigenvalues.iter().sum();

    // Stable sort by descending eigenvalue; ties resolve to the lower
    // original index so the ordering is deterministic.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .partial_cmp(&eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    let mut explained_ratio = Vec::with_capacity(k);
    for (rank, &idx) in order.iter().take(k).enumerate() {
        let axis = axes.row(idx);
        let mut pivot = 0;
        for (j, x) in axis.iter().enumerate() {
            if x.abs() > axis[pivot].abs() {
                pivot = j;
            }
        }
        let flip = if axis[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (j, x) in axis.iter().enumerate() {
            components.set(rank, j, flip * x);
        }
        let ev = eigenvalues[idx].max(0.0);
        explained_variance.push(ev);
        explained_ratio.push(if total > 0.0 { ev / total } else { 0.0 });
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_ratio,
    })
}

/// Project observations (rows of `data`) into the fitted component space.
pub fn pca_project(model: &PcaModel, data: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if data.cols() != d {
        return Err(Error::shape(format!(
            "projection expects {d}-dim rows, got {}",
            data.cols()
        )));
    }
    let k = model.components.rows();
    let mut out = Matrix::zeros(data.rows(), k);
    for (i, row) in data.iter_rows().enumerate() {
        let centered: Vec<f64> = row.iter().zip(&model.mean).map(|(x, m)| x - m).collect();
        for c in 0..k {
            let mut acc = 0.0;
            for (a, b) in model.components.row(c).iter().zip(&centered) {
                acc += a * b;
            }
            out.set(i, c, acc);
        }
    }
    Ok(out)
}

/// Map projected coordinates back into the original space (lossy when
/// k < d): `mean + coordsᵀ · components`.
pub fn pca_reconstruct(model: &PcaModel, coords: &Matrix) -> Result<Matrix> {
    let k = model.components.rows();
    if coords.cols() != k {
        return Err(Error::shape(format!(
            "reconstruction expects {k}-dim coordinates, got {}",
            coords.cols()
        )));
    }
    let d = model.mean.len();
    let mut out = Matrix::zeros(coords.rows(), d);
    for (i, row) in coords.iter_rows().enumerate() {
        let dest = out.row_mut(i);
        dest.copy_from_slice(&model.mean);
        for (c, &w) in row.iter().enumerate() {
            for (o, a) in dest.iter_mut().zip(model.components.row(c)) {
                *o += w * a;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (ev, vecs) = jacobi_eigen(&m).unwrap();
        let mut sorted = ev.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sorted[0] - 3.0).abs() < 1e-12);
        assert!((sorted[1] - 1.0).abs() < 1e-12);
        // eigenvectors of a diagonal matrix are the coordinate axes
        for i in 0..2 {
            let r = vecs.row(i);
            let norm: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1, axes (1,1)/√2 and (1,−1)/√2.
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (ev, vecs) = jacobi_eigen(&m).unwrap();
        let (hi, lo) = if ev[0] > ev[1] { (0, 1) } else { (1, 0) };
        assert!((ev[hi] - 3.0).abs() < 1e-12);
        assert!((ev[lo] - 1.0).abs() < 1e-12);
        let r = vecs.row(hi);
        let s = 1.0 / 2.0_f64.sqrt();
        assert!((r[0].abs() - s).abs() < 1e-12);
        assert!((r[1].abs() - s).abs() < 1e-12);
        assert!((r[0] - r[1]).abs() < 1e-12, "axis must be along (1,1)");
    }

    #[test]
    fn jacobi_rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(jacobi_eigen(&m).is_err());
    }

    #[test]
    fn pca_fit_symmetric_cross() {
        // Four points at (±1, ±1): covariance is (4/3)·I, so both axes carry
        // exactly half the variance.
        let data = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
        ])
        .unwrap();
        let model = pca_fit(&data, 2).unwrap();
        assert!((model.explained_ratio[0] - 0.5).abs() < 1e-12);
        assert!((model.explained_ratio[1] - 0.5).abs() < 1e-12);
        assert!((model.explained_variance[0] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pca_finds_dominant_direction() {
        // Points spread along (1, 1) with a tiny orthogonal wobble.
        let data = Matrix::from_rows(&[
            vec![2.0, 2.1],
            vec![1.0, 0.9],
            vec![-1.0, -1.1],
            vec![-2.0, -1.9],
            vec![0.5, 0.5],
            vec![-0.5, -0.5],
        ])
        .unwrap();
        let model = pca_fit(&data, 1).unwrap();
        let axis = model.components.row(0);
        let s = 1.0 / 2.0_f64.sqrt();
        assert!((axis[0] - s).abs() < 0.05, "axis {axis:?}");
        assert!((axis[1] - s).abs() < 0.05, "axis {axis:?}");
        assert!(model.explained_ratio[0] > 0.99);
    }

    #[test]
    fn sign_convention_pins_orientation() {
        // Data along (0, -1)-ish direction: the dominant axis is vertical,
        // and the convention must flip it so the big entry is positive.
        let data = Matrix::from_rows(&[
            vec![0.1, -3.0],
            vec![-0.1, 3.0],
            vec![0.05, -1.0],
            vec![-0.05, 1.0],
        ])
        .unwrap();
        let model = pca_fit(&data, 1).unwrap();
        let axis = model.components.row(0);
        assert!(axis[1] > 0.0, "largest-magnitude entry must be non-negative");
    }

    #[test]
    fn project_then_reconstruct_full_rank_round_trips() {
        let data = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.5, 2.0],
            vec![0.3, -0.7, 1.0],
            vec![2.0, 1.0, -1.0],
        ])
        .unwrap();
        let model = pca_fit(&data, 3).unwrap();
        let proj = pca_project(&model, &data).unwrap();
        let back = pca_reconstruct(&model, &proj).unwrap();
        for i in 0..data.rows() {
            for j in 0..data.cols() {
                assert!((back.get(i, j) - data.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_is_centered() {
        let data = Matrix::from_rows(&[
            vec![10.0, 20.0],
            vec![11.0, 19.0],
            vec![9.0, 21.0],
            vec![10.5, 20.5],
        ])
        .unwrap();
        let model = pca_fit(&data, 2).unwrap();
        let proj = pca_project(&model, &data).unwrap();
        for c in 0..2 {
            let mean: f64 =
                (0..proj.rows()).map(|i| proj.get(i, c)).sum::<f64>() / proj.rows() as f64;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn pca_rejects_degenerate_inputs() {
        let one = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(pca_fit(&one, 1).is_err());
        let data = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(pca_fit(&data, 0).is_err());
        assert!(pca_fit(&data, 3).is_err());
    }
}

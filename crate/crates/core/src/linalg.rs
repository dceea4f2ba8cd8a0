//! Small dense helpers on `&[f64]` vectors; matrix work goes through nalgebra.

use nalgebra::DMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: &[f64]) -> Vec<f64> {
    let r = norm(a);
    a.iter().map(|x| x / r).collect()
}

/// Angle between two nonzero vectors, stable for small angles.
pub(crate) fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (ua, ub) = (normalize(a), normalize(b));
    let diff: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x - y).collect();
    let sum: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x + y).collect();
    2.0 * norm(&diff).atan2(norm(&sum))
}

/// Orthonormal basis of the vectors supported on `indices` and orthogonal to
/// `theta`, by Gram–Schmidt on the coordinate vectors.
pub(crate) fn tangent_frame(theta: &[f64], indices: &[usize]) -> Vec<Vec<f64>> {
    let n = theta.len();
    let mut basis: Vec<Vec<f64>> = vec![normalize(theta)];
    for &i in indices {
        if basis.len() == indices.len() {
            break;
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        // Two passes keep the frame orthogonal to rounding level.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let r = norm(&v);
        if r > 1e-8 {
            basis.push(v.iter().map(|x| x / r).collect());
        }
    }
    basis.remove(0);
    basis
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Smallest singular value of a square matrix given by rows.
pub(crate) fn sigma_min(rows: &[Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return f64::INFINITY;
    }
    to_matrix(rows)
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares solve of `A x = b` via SVD.
pub(crate) fn solve(rows: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let a = to_matrix(rows);
    let rhs = nalgebra::DVector::from_column_slice(b);
    let svd = a.svd(true, true);
    svd.solve(&rhs, 1e-14).ok().map(|x| x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal_and_tangent() {
        let theta = normalize(&[1.0, 2.0, 3.0]);
        let f = tangent_frame(&theta, &[0, 1, 2]);
        assert_eq!(f.len(), 2);
        for (i, a) in f.iter().enumerate() {
            assert!(dot(a, &theta).abs() < 1e-14);
            assert!((norm(a) - 1.0).abs() < 1e-14);
            for b in &f[i + 1..] {
                assert!(dot(a, b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn frame_stays_in_face() {
        let theta = normalize(&[1.0, 0.0, 1.0]);
        let f = tangent_frame(&theta, &[0, 2]);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0][1], 0.0);
    }

    #[test]
    fn small_angles_are_accurate() {
        let a = [1.0, 0.0];
        let b = [1.0, 1e-10];
        assert!((angle(&a, &b) - 1e-10).abs() < 1e-20);
    }
}

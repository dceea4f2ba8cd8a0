//! Meshes on the spherical simplex and lattice-ball iteration.

use crate::linalg::normalize;

/// All vectors of `parts` nonnegative integers summing to `total`
/// (strictly positive entries when `positive`).
pub(crate) fn compositions(parts: usize, total: usize, positive: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; parts];
    fn rec(i: usize, left: usize, positive: bool, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let parts = cur.len();
        if i + 1 == parts {
            if !positive || left > 0 {
                cur[i] = left;
                out.push(cur.clone());
            }
            return;
        }
        let lo = usize::from(positive);
        let reserve = if positive { parts - i - 1 } else { 0 };
        if left < lo + reserve {
            return;
        }
        for k in lo..=left - reserve {
            cur[i] = k;
            rec(i + 1, left - k, positive, cur, out);
        }
    }
    if parts == 0 {
        return out;
    }
    rec(0, total, positive, &mut cur, &mut out);
    out
}

/// Unit vectors of ℝⁿ supported on `indices`, one per composition of `res`
/// over the face. With `open = true` only relative-interior points are kept.
pub(crate) fn face_grid(n: usize, indices: &[usize], res: usize, open: bool) -> Vec<Vec<f64>> {
    compositions(indices.len(), res, open)
        .into_iter()
        .map(|k| {
            let mut v = vec![0.0; n];
            for (&i, &ki) in indices.iter().zip(&k) {
                v[i] = ki as f64;
            }
            normalize(&v)
        })
        .collect()
}

/// Index pairs of grid points that differ by `e_i − e_j` in composition space.
pub(crate) fn grid_neighbors(parts: usize, total: usize, positive: bool) -> Vec<(usize, usize)> {
    let comps = compositions(parts, total, positive);
    let index: std::collections::HashMap<Vec<usize>, usize> =
        comps.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let mut out = Vec::new();
    for (a, c) in comps.iter().enumerate() {
        for i in 0..parts {
            for j in 0..parts {
                if i == j || c[j] == 0 {
                    continue;
                }
                let mut d = c.clone();
                d[i] += 1;
                d[j] -= 1;
                if let Some(&b) = index.get(&d) {
                    if a < b {
                        out.push((a, b));
                    }
                }
            }
        }
    }
    out
}

/// Calls `f` on every nonzero `p ∈ ℤ^d` with `‖p‖ ≤ radius`, in
/// lexicographic order.
pub(crate) fn for_each_lattice_point<F: FnMut(&[i64])>(d: usize, radius: f64, mut f: F) {
    if d == 0 || !(radius >= 1.0) {
        return;
    }
    let r2 = radius * radius;
    let mut p = vec![0i64; d];
    fn rec<F: FnMut(&[i64])>(i: usize, budget: f64, p: &mut Vec<i64>, f: &mut F) {
        let d = p.len();
        let k = (budget.max(0.0).sqrt() + 1e-12).floor() as i64;
        for v in -k..=k {
            let rest = budget - (v * v) as f64;
            if rest < -1e-9 {
                continue;
            }
            p[i] = v;
            if i + 1 == d {
                if p.iter().any(|&x| x != 0) {
                    f(p);
                }
            } else {
                rec(i + 1, rest, p, f);
            }
        }
        p[i] = 0;
    }
    rec(0, r2, &mut p, &mut f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(3, 4, false).len(), 15);
        assert_eq!(compositions(3, 4, true).len(), 3);
        assert_eq!(compositions(1, 5, true), vec![vec![5]]);
        assert!(compositions(3, 2, true).is_empty());
    }

    #[test]
    fn lattice_ball_count() {
        let mut n = 0;
        for_each_lattice_point(2, 2.5, |_| n += 1);
        // 21 points of norm ≤ 2.5 in ℤ², minus the origin.
        assert_eq!(n, 20);
    }

    #[test]
    fn neighbors_on_segment() {
        assert_eq!(grid_neighbors(2, 4, true).len(), 2);
    }
}

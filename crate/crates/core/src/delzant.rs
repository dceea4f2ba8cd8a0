//! Delzant polytopes and fixed-point counts of `φ_H^k` for `H = h∘μ`.
//!
//! On the torus over a point `w` of an open face `F` the flow of `H` rotates
//! with vector `∇(h|_F)(w)`, written in a basis of the direction lattice of
//! `F`. The torus is fixed by `φ^k` exactly when that vector lies in
//! `(1/k)ℤ^d`. After a Morse–Bott perturbation each such torus contributes
//! `2^d` fixed points; vertices contribute one each.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barcode::{entropy_estimates, GrowthSamples};
use crate::error::{Error, Result};
use crate::linalg::sigma_min;
use crate::simplex::{compositions, grid_neighbors};
use crate::toric_geometry::Convexity;

const FACE_TOL: f64 = 1e-9;

/// `⟨v, x⟩ ≤ c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub v: Vec<i64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PolytopeRepr {
    n: usize,
    ineqs: Vec<Inequality>,
}

/// A vertex with its active inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub point: Vec<f64>,
    pub active: Vec<usize>,
}

/// A face given by its active inequality set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeFace {
    pub active: Vec<usize>,
    pub dim: usize,
    /// Canonical basis of the direction lattice `V_F ∩ ℤⁿ` (Hermite normal form rows).
    pub basis: Vec<Vec<i64>>,
    /// Indices into the polytope's vertex list.
    pub vertices: Vec<usize>,
}

impl fmt::Display for PolytopeFace {
    /// `int` for the interior, otherwise 1-based active facets joined by `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.active.is_empty() {
            return write!(f, "int");
        }
        let parts: Vec<String> = self.active.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// A validated Delzant polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct DelzantPolytope {
    n: usize,
    ineqs: Vec<Inequality>,
    vertices: Vec<Vertex>,
    faces: Vec<PolytopeFace>,
}

impl TryFrom<PolytopeRepr> for DelzantPolytope {
    type Error = Error;
    fn try_from(r: PolytopeRepr) -> Result<Self> {
        validate_delzant(r.n, r.ineqs)
    }
}

impl From<DelzantPolytope> for PolytopeRepr {
    fn from(p: DelzantPolytope) -> Self {
        PolytopeRepr { n: p.n, ineqs: p.ineqs }
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact integer determinant (Bareiss).
fn int_det(rows: &[Vec<i64>]) -> i128 {
    let n = rows.len();
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i][k] != 0) else {
                return 0;
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Row Hermite normal form; returns the nonzero rows.
pub fn hermite_normal_form(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let Some(ncols) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut pivot_row = 0;
    for col in 0..ncols {
        if pivot_row == m.len() {
            break;
        }
        // Euclid on the column below the pivot row.
        loop {
            let nz: Vec<usize> = (pivot_row..m.len()).filter(|&i| m[i][col] != 0).collect();
            if nz.is_empty() {
                break;
            }
            let &best = nz.iter().min_by_key(|&&i| m[i][col].abs()).unwrap();
            m.swap(pivot_row, best);
            let mut done = true;
            for i in pivot_row + 1..m.len() {
                if m[i][col] != 0 {
                    let q = m[i][col] / m[pivot_row][col];
                    for j in 0..ncols {
                        m[i][j] -= q * m[pivot_row][j];
                    }
                    if m[i][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[pivot_row][col] == 0 {
            continue;
        }
        if m[pivot_row][col] < 0 {
            for x in m[pivot_row].iter_mut() {
                *x = -*x;
            }
        }
        let p = m[pivot_row][col];
        for i in 0..pivot_row {
            let q = m[i][col].div_euclid(p);
            for j in 0..ncols {
                m[i][j] -= q * m[pivot_row][j];
            }
        }
        pivot_row += 1;
    }
    m.truncate(pivot_row);
    m.into_iter()
        .map(|r| r.into_iter().map(|x| x as i64).collect())
        .collect()
}

fn solve_square(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    a.lu().solve(&b).map(|x| x.iter().copied().collect())
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Checks boundedness, simplicity and unimodularity; builds vertices and faces.
pub fn validate_delzant(n: usize, ineqs: Vec<Inequality>) -> Result<DelzantPolytope> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    for (i, q) in ineqs.iter().enumerate() {
        if q.v.len() != n || !q.c.is_finite() {
            return Err(Error::InvalidParameter(format!("inequality {} has the wrong shape", i + 1)));
        }
        let g = q.v.iter().fold(0i128, |g, &x| gcd(g, x as i128));
        if g != 1 {
            return Err(Error::NotDelzant(format!("normal {:?} of inequality {} is not primitive", q.v, i + 1)));
        }
    }
    let dotv = |v: &[i64], x: &[f64]| v.iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>();
    let mut vertices: Vec<Vertex> = Vec::new();
    for set in subsets(ineqs.len(), n) {
        let rows: Vec<Vec<f64>> = set.iter().map(|&i| ineqs[i].v.iter().map(|&x| x as f64).collect()).collect();
        let rhs: Vec<f64> = set.iter().map(|&i| ineqs[i].c).collect();
        let normals: Vec<Vec<i64>> = set.iter().map(|&i| ineqs[i].v.clone()).collect();
        if int_det(&normals) == 0 {
            continue;
        }
        let Some(x) = solve_square(&rows, &rhs) else {
            continue;
        };
        if ineqs.iter().any(|q| dotv(&q.v, &x) > q.c + FACE_TOL) {
            continue;
        }
        if vertices
            .iter()
            .any(|v| v.point.iter().zip(&x).all(|(a, b)| (a - b).abs() <= FACE_TOL))
        {
            continue;
        }
        let active: Vec<usize> = (0..ineqs.len())
            .filter(|&i| (dotv(&ineqs[i].v, &x) - ineqs[i].c).abs() <= FACE_TOL)
            .collect();
        vertices.push(Vertex { point: x, active });
    }
    if vertices.is_empty() {
        return Err(Error::NotDelzant("no vertices: the polyhedron is empty or unbounded".into()));
    }
    for v in &vertices {
        if v.active.len() != n {
            return Err(Error::NotDelzant(format!(
                "{} facets meet at vertex {:?}; a Delzant polytope needs exactly {n}",
                v.active.len(),
                v.point
            )));
        }
        let normals: Vec<Vec<i64>> = v.active.iter().map(|&i| ineqs[i].v.clone()).collect();
        let det = int_det(&normals);
        if det.abs() != 1 {
            return Err(Error::NotDelzant(format!(
                "normals at vertex {:?} have determinant {det}, not ±1",
                v.point
            )));
        }
        // Every edge leaving the vertex must hit another facet.
        let rows: Vec<Vec<f64>> = normals.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        for j in 0..n {
            let mut rhs = vec![0.0; n];
            rhs[j] = -1.0;
            let e = solve_square(&rows, &rhs).expect("unimodular system");
            if !(0..ineqs.len()).any(|i| !v.active.contains(&i) && dotv(&ineqs[i].v, &e) > 1e-12) {
                return Err(Error::NotDelzant(format!("unbounded edge from vertex {:?}", v.point)));
            }
        }
    }
    let faces = build_faces(n, &ineqs, &vertices);
    Ok(DelzantPolytope {
        n,
        ineqs,
        vertices,
        faces,
    })
}

fn build_faces(n: usize, ineqs: &[Inequality], vertices: &[Vertex]) -> Vec<PolytopeFace> {
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for v in vertices {
        for k in 0..=n {
            for sub in subsets(n, k) {
                let s: Vec<usize> = sub.iter().map(|&i| v.active[i]).collect();
                if !sets.contains(&s) {
                    sets.push(s);
                }
            }
        }
    }
    let mut faces: Vec<PolytopeFace> = sets
        .into_iter()
        .map(|active| {
            let dim = n - active.len();
            let verts: Vec<usize> = (0..vertices.len())
                .filter(|&i| active.iter().all(|a| vertices[i].active.contains(a)))
                .collect();
            // Edge directions inside the face from every face vertex.
            let mut gens: Vec<Vec<i64>> = Vec::new();
            for &vi in &verts {
                let v = &vertices[vi];
                let rows: Vec<Vec<f64>> = v
                    .active
                    .iter()
                    .map(|&i| ineqs[i].v.iter().map(|&x| x as f64).collect())
                    .collect();
                for (j, a) in v.active.iter().enumerate() {
                    if active.contains(a) {
                        continue;
                    }
                    let mut rhs = vec![0.0; n];
                    rhs[j] = -1.0;
                    let e = solve_square(&rows, &rhs).expect("unimodular system");
                    gens.push(e.iter().map(|x| x.round() as i64).collect());
                }
            }
            let basis = if dim == 0 { Vec::new() } else { hermite_normal_form(&gens) };
            PolytopeFace {
                active,
                dim,
                basis,
                vertices: verts,
            }
        })
        .collect();
    faces.sort_by(|a, b| b.dim.cmp(&a.dim).then(a.active.cmp(&b.active)));
    faces
}

impl DelzantPolytope {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inequalities(&self) -> &[Inequality] {
        &self.ineqs
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Faces ordered by decreasing dimension, then active set.
    pub fn faces(&self) -> &[PolytopeFace] {
        &self.faces
    }

    /// Face with exactly this active set.
    pub fn face(&self, active: &[usize]) -> Result<&PolytopeFace> {
        let mut a = active.to_vec();
        a.sort_unstable();
        self.faces
            .iter()
            .find(|f| f.active == a)
            .ok_or_else(|| Error::InvalidParameter(format!("no face with active set {active:?}")))
    }

    /// `{x ≥ 0, Σx ≤ 1}`.
    pub fn standard_simplex(n: usize) -> Result<Self> {
        let mut ineqs: Vec<Inequality> = (0..n)
            .map(|i| {
                let mut v = vec![0; n];
                v[i] = -1;
                Inequality { v, c: 0.0 }
            })
            .collect();
        ineqs.push(Inequality { v: vec![1; n], c: 1.0 });
        validate_delzant(n, ineqs)
    }

    /// `[0, side]ⁿ`.
    pub fn cube(n: usize, side: f64) -> Result<Self> {
        let mut ineqs = Vec::new();
        for i in 0..n {
            let mut v = vec![0; n];
            v[i] = -1;
            ineqs.push(Inequality { v: v.clone(), c: 0.0 });
            v[i] = 1;
            ineqs.push(Inequality { v, c: side });
        }
        validate_delzant(n, ineqs)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("polytope serializes")
    }

    /// Image under `x ↦ A x` for `A ∈ GL(n, ℤ)`, given `A^{-T}`.
    pub fn transformed(&self, a_inv_t: &[Vec<i64>], shift: &[f64]) -> Result<Self> {
        let ineqs = self
            .ineqs
            .iter()
            .map(|q| {
                let v: Vec<i64> = a_inv_t.iter().map(|row| row.iter().zip(&q.v).map(|(a, b)| a * b).sum()).collect();
                let c = q.c + v.iter().zip(shift).map(|(&a, b)| a as f64 * b).sum::<f64>();
                Inequality { v, c }
            })
            .collect();
        validate_delzant(self.n, ineqs)
    }

    fn in_open_face(&self, face: &PolytopeFace, w: &[f64], tol: f64) -> bool {
        self.ineqs.iter().enumerate().all(|(i, q)| {
            let val: f64 = q.v.iter().zip(w).map(|(&a, b)| a as f64 * b).sum();
            if face.active.contains(&i) {
                (val - q.c).abs() <= tol
            } else {
                val < q.c - tol
            }
        })
    }
}

/// Basis of the direction lattice of a face (empty for vertices).
pub fn face_lattice_basis(p: &DelzantPolytope, face: &PolytopeFace) -> Vec<Vec<i64>> {
    let _ = p;
    face.basis.clone()
}

/// One monomial `coef · Π x_i^{exp_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exp: Vec<u32>,
}

/// Hamiltonian on the moment polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Hamiltonian {
    /// `½ xᵀ Q x + ⟨l, x⟩`.
    Quadratic { q: Vec<Vec<f64>>, l: Vec<f64> },
    /// Sum of monomials with a declared convexity class.
    Polynomial {
        terms: Vec<Monomial>,
        #[serde(default)]
        convexity: Option<Convexity>,
    },
}

/// Class flags of a Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonianClass {
    /// Strict convexity or concavity on the whole space.
    pub convexity: Option<Convexity>,
    pub analytic: bool,
}

impl Hamiltonian {
    /// `‖x‖²/2`.
    pub fn half_norm_squared(n: usize) -> Self {
        let q = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Hamiltonian::Quadratic { q, l: vec![0.0; n] }
    }

    pub fn linear(l: Vec<f64>) -> Self {
        let n = l.len();
        Hamiltonian::Quadratic {
            q: vec![vec![0.0; n]; n],
            l,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = match self {
            Hamiltonian::Quadratic { q, l } => {
                q.len() == n
                    && l.len() == n
                    && q.iter().all(|r| r.len() == n)
                    && (0..n).all(|i| (0..n).all(|j| (q[i][j] - q[j][i]).abs() <= 1e-12 * (1.0 + q[i][j].abs())))
                    && q.iter().flatten().chain(l).all(|x| x.is_finite())
            }
            Hamiltonian::Polynomial { terms, .. } => terms.iter().all(|t| t.exp.len() == n && t.coef.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("Hamiltonian does not match dimension {n}")))
        }
    }

    pub fn class(&self) -> HamiltonianClass {
        match self {
            Hamiltonian::Quadratic { q, .. } => {
                let n = q.len();
                let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
                let eig = m.symmetric_eigenvalues();
                let convexity = if eig.iter().all(|&e| e > 0.0) {
                    Some(Convexity::Convex)
                } else if eig.iter().all(|&e| e < 0.0) {
                    Some(Convexity::Concave)
                } else {
                    None
                };
                HamiltonianClass {
                    convexity,
                    analytic: true,
                }
            }
            Hamiltonian::Polynomial { convexity, .. } => HamiltonianClass {
                convexity: *convexity,
                analytic: true,
            },
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Hamiltonian::Quadratic { q, l } => {
                let quad: f64 = (0..x.len()).map(|i| x[i] * q[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum();
                0.5 * quad + l.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
            Hamiltonian::Polynomial { terms, .. } => terms
                .iter()
                .map(|t| t.coef * t.exp.iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product::<f64>())
                .sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Hamiltonian::Quadratic { q, l } => q
                .iter()
                .zip(l)
                .map(|(row, li)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + li)
                .collect(),
            Hamiltonian::Polynomial { terms, .. } => (0..x.len())
                .map(|i| {
                    terms
                        .iter()
                        .filter(|t| t.exp[i] > 0)
                        .map(|t| {
                            let mut e = t.exp.clone();
                            let c = t.coef * e[i] as f64;
                            e[i] -= 1;
                            c * e.iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product::<f64>()
                        })
                        .sum()
                })
                .collect(),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Hamiltonian::Quadratic { q, .. } => q.clone(),
            Hamiltonian::Polynomial { terms, .. } => {
                let n = x.len();
                let mut h = vec![vec![0.0; n]; n];
                for t in terms {
                    for i in 0..n {
                        for j in 0..n {
                            let mut e = t.exp.clone();
                            let mut c = t.coef;
                            c *= e[i] as f64;
                            if e[i] == 0 {
                                continue;
                            }
                            e[i] -= 1;
                            c *= e[j] as f64;
                            if e[j] == 0 {
                                continue;
                            }
                            e[j] -= 1;
                            h[i][j] += c * e.iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product::<f64>();
                        }
                    }
                }
                h
            }
        }
    }

    /// `h + ⟨λ, x⟩`.
    pub fn shifted(&self, lambda: &[f64]) -> Self {
        match self {
            Hamiltonian::Quadratic { q, l } => Hamiltonian::Quadratic {
                q: q.clone(),
                l: l.iter().zip(lambda).map(|(a, b)| a + b).collect(),
            },
            Hamiltonian::Polynomial { terms, convexity } => {
                let n = lambda.len();
                let mut terms = terms.clone();
                for (i, &v) in lambda.iter().enumerate() {
                    let mut exp = vec![0; n];
                    exp[i] = 1;
                    terms.push(Monomial { coef: v, exp });
                }
                Hamiltonian::Polynomial {
                    terms,
                    convexity: *convexity,
                }
            }
        }
    }

    /// `h + ε‖x‖²`.
    pub fn strictified(&self, eps: f64) -> Self {
        match self {
            Hamiltonian::Quadratic { q, l } => Hamiltonian::Quadratic {
                q: q
                    .iter()
                    .enumerate()
                    .map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + if i == j { 2.0 * eps } else { 0.0 }).collect())
                    .collect(),
                l: l.clone(),
            },
            Hamiltonian::Polynomial { terms, convexity } => {
                let n = terms.first().map_or(0, |t| t.exp.len());
                let mut terms = terms.clone();
                for i in 0..n {
                    let mut exp = vec![0; n];
                    exp[i] = 2;
                    terms.push(Monomial { coef: eps, exp });
                }
                Hamiltonian::Polynomial {
                    terms,
                    convexity: *convexity,
                }
            }
        }
    }

    /// Image under `x ↦ A x + b`, given `A^{-1}`: `h'(y) = h(A^{-1}(y − b))`.
    /// Only quadratic Hamiltonians are supported.
    pub fn transformed(&self, a_inv: &[Vec<f64>], shift: &[f64]) -> Result<Self> {
        let Hamiltonian::Quadratic { q, l } = self else {
            return Err(Error::Unsupported("only quadratic Hamiltonians can be transformed".into()));
        };
        let n = q.len();
        let a = DMatrix::from_fn(n, n, |i, j| a_inv[i][j]);
        let qm = DMatrix::from_fn(n, n, |i, j| q[i][j]);
        let lv = DVector::from_column_slice(l);
        let b = DVector::from_column_slice(shift);
        let q2 = a.transpose() * &qm * &a;
        // h(A⁻¹y − A⁻¹b): linear part Aᵀ⁻(l − Q A⁻¹ b), constants dropped.
        let c = &a * &b;
        let l2 = a.transpose() * (lv - &qm * c);
        Ok(Hamiltonian::Quadratic {
            q: (0..n).map(|i| (0..n).map(|j| q2[(i, j)]).collect()).collect(),
            l: l2.iter().copied().collect(),
        })
    }
}

/// `∂/∂t_j h(w + Σ t_j b_j)` at `t = 0`: the rotation vector of the torus over `w`.
pub fn face_gradient(p: &DelzantPolytope, h: &Hamiltonian, face: &PolytopeFace, w: &[f64]) -> Result<Vec<f64>> {
    h.validate(p.n)?;
    if w.len() != p.n || !p.in_open_face(face, w, FACE_TOL) {
        return Err(Error::Domain(format!("{w:?} is not in the open face {face}")));
    }
    Ok(restricted_gradient(h, face, w))
}

fn restricted_gradient(h: &Hamiltonian, face: &PolytopeFace, w: &[f64]) -> Vec<f64> {
    let g = h.gradient(w);
    face.basis
        .iter()
        .map(|b| b.iter().zip(&g).map(|(&bi, gi)| bi as f64 * gi).sum())
        .collect()
}

fn restricted_hessian(h: &Hamiltonian, face: &PolytopeFace, w: &[f64]) -> Vec<Vec<f64>> {
    let hm = h.hessian(w);
    let hb: Vec<Vec<f64>> = face
        .basis
        .iter()
        .map(|b| (0..w.len()).map(|i| hm[i].iter().zip(b).map(|(v, &bj)| v * bj as f64).sum()).collect())
        .collect();
    face.basis
        .iter()
        .map(|a| hb.iter().map(|col| a.iter().zip(col).map(|(&ai, c)| ai as f64 * c).sum()).collect())
        .collect()
}

/// Which rational rotation vectors count at level `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Rotation vector in `(1/k)ℤ^d`: the minimal period divides `k`.
    #[default]
    Divisor,
    /// Least common denominator at most `k`.
    QLeK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceCount {
    pub face: String,
    pub dim: usize,
    pub count: u64,
}

/// Result of [`count_fixed_points`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCount {
    pub k: u64,
    pub mode: CountMode,
    pub per_face: Vec<FaceCount>,
    /// `Σ 2^d · count_F`.
    pub total: u64,
    /// Faces whose gradient is constant and rational: a whole family of fixed tori.
    pub degenerate_families: Vec<String>,
    /// Solutions where the restricted Hessian is singular.
    pub critical_values: u64,
    pub warnings: Vec<String>,
}

impl FixedPointCount {
    /// `face=count` pairs joined by `;`.
    pub fn breakdown(&self) -> String {
        self.per_face
            .iter()
            .map(|f| format!("{}={}", f.face, f.count))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Sample points of an open face and the gradient-image bounding box.
struct FaceImage {
    starts: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn face_image(p: &DelzantPolytope, h: &Hamiltonian, face: &PolytopeFace) -> FaceImage {
    let verts: Vec<&Vec<f64>> = face.vertices.iter().map(|&i| &p.vertices[i].point).collect();
    let mv = verts.len();
    let res = match mv {
        2 => 64,
        3 => 24,
        4 => 16,
        _ => mv + 6,
    };
    let comps = compositions(mv, res, true);
    let starts: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| {
            (0..p.n)
                .map(|i| c.iter().zip(&verts).map(|(&k, v)| k as f64 * v[i]).sum::<f64>() / res as f64)
                .collect()
        })
        .collect();
    let d = face.dim;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut extend = |g: &[f64]| {
        for j in 0..d {
            lo[j] = lo[j].min(g[j]);
            hi[j] = hi[j].max(g[j]);
        }
    };
    let images: Vec<Vec<f64>> = starts.iter().map(|w| restricted_gradient(h, face, w)).collect();
    for v in &verts {
        extend(&restricted_gradient(h, face, v));
    }
    for g in &images {
        extend(g);
    }
    // Quadratic gradients are affine, so the vertex images already enclose
    // the image; otherwise widen by the largest jump between grid neighbours.
    if !matches!(h, Hamiltonian::Quadratic { .. }) {
        let mut margin: f64 = 0.0;
        for (a, b) in grid_neighbors(mv, res, true) {
            for j in 0..d {
                margin = margin.max((images[a][j] - images[b][j]).abs());
            }
        }
        for j in 0..d {
            lo[j] -= margin;
            hi[j] += margin;
        }
    }
    FaceImage { starts, lo, hi }
}

fn lcm_den(num: &[i64], q: i64) -> i64 {
    num.iter().fold(1i64, |acc, &a| {
        let den = q / gcd(a as i128, q as i128) as i64;
        acc / gcd(acc as i128, den as i128) as i64 * den
    })
}

/// Lattice values `a/q` in the box, each listed once with its least `q`.
fn candidate_values(lo: &[f64], hi: &[f64], k: u64, mode: CountMode) -> Vec<Vec<f64>> {
    let qs: Vec<i64> = match mode {
        CountMode::Divisor => vec![k as i64],
        CountMode::QLeK => (1..=k as i64).collect(),
    };
    let mut out = Vec::new();
    for q in qs {
        let ranges: Vec<(i64, i64)> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| (((l - 1e-12) * q as f64).ceil() as i64, ((h + 1e-12) * q as f64).floor() as i64))
            .collect();
        if ranges.iter().any(|(a, b)| a > b) {
            continue;
        }
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            if mode == CountMode::Divisor || lcm_den(&cur, q) == q {
                out.push(cur.iter().map(|&a| a as f64 / q as f64).collect());
            }
            let mut j = 0;
            loop {
                if j == cur.len() {
                    break;
                }
                if cur[j] < ranges[j].1 {
                    cur[j] += 1;
                    break;
                }
                cur[j] = ranges[j].0;
                j += 1;
            }
            if j == cur.len() {
                break;
            }
        }
    }
    out
}

enum Solve {
    Regular(Vec<f64>),
    Critical(Vec<f64>),
    Failed,
}

fn newton_face(h: &Hamiltonian, face: &PolytopeFace, u: &[f64], start: &[f64]) -> Solve {
    let mut w = start.to_vec();
    let tol = 1e-12 * (1.0 + u.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    for _ in 0..50 {
        let g = restricted_gradient(h, face, &w);
        let r: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b).collect();
        let jac = restricted_hessian(h, face, &w);
        let sig = sigma_min(&jac);
        if r.iter().all(|x| x.abs() <= tol) {
            return if sig < 1e-10 { Solve::Critical(w) } else { Solve::Regular(w) };
        }
        if sig < 1e-14 {
            return Solve::Failed;
        }
        let Some(step) = solve_square(&jac, &r) else {
            return Solve::Failed;
        };
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += face.basis.iter().zip(&step).map(|(b, s)| b[i] as f64 * s).sum::<f64>();
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Solve::Failed;
        }
    }
    Solve::Failed
}

/// Counts tori fixed by `φ_H^k` on every face, with the `2^d` splitting.
pub fn count_fixed_points(p: &DelzantPolytope, h: &Hamiltonian, k: u64, mode: CountMode) -> Result<FixedPointCount> {
    h.validate(p.n)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let class = h.class();
    let mut per_face = Vec::new();
    let mut total = 0u64;
    let mut degenerate_families = Vec::new();
    let mut critical = 0u64;
    let mut warnings = Vec::new();
    for face in &p.faces {
        if face.dim == 0 {
            per_face.push(FaceCount {
                face: face.to_string(),
                dim: 0,
                count: 1,
            });
            total += 1;
            continue;
        }
        let img = face_image(p, h, face);
        // A constant gradient means a whole family of tori or none.
        let probe = &img.starts[img.starts.len() / 2];
        if sigma_min(&restricted_hessian(h, face, probe)) < 1e-14
            && img.lo.iter().zip(&img.hi).all(|(l, h)| h - l <= 1e-12)
        {
            let g = restricted_gradient(h, face, probe);
            if candidate_values(&img.lo, &img.hi, k, mode).iter().any(|u| {
                u.iter().zip(&g).all(|(a, b)| (a - b).abs() <= 1e-12)
            }) {
                degenerate_families.push(face.to_string());
                warnings.push(format!("face {face}: constant rational gradient, a whole family of fixed tori"));
            }
            per_face.push(FaceCount {
                face: face.to_string(),
                dim: face.dim,
                count: 0,
            });
            continue;
        }
        let mut count = 0u64;
        let centroid: Vec<f64> = {
            let m = face.vertices.len() as f64;
            (0..p.n)
                .map(|i| face.vertices.iter().map(|&v| p.vertices[v].point[i]).sum::<f64>() / m)
                .collect()
        };
        for u in candidate_values(&img.lo, &img.hi, k, mode) {
            let single = class.convexity.is_some();
            let starts: Vec<&Vec<f64>> = if single {
                vec![&centroid]
            } else {
                let mut s: Vec<(f64, &Vec<f64>)> = img
                    .starts
                    .iter()
                    .map(|w| {
                        let g = restricted_gradient(h, face, w);
                        (g.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max), w)
                    })
                    .collect();
                s.sort_by(|a, b| a.0.total_cmp(&b.0));
                s.into_iter().take(8).map(|x| x.1).collect()
            };
            let mut found: Vec<Vec<f64>> = Vec::new();
            let mut any_failed = false;
            for st in starts {
                match newton_face(h, face, &u, st) {
                    Solve::Regular(w) | Solve::Critical(w) if !p.in_open_face(face, &w, FACE_TOL) => {}
                    Solve::Regular(w) => {
                        if !found.iter().any(|f| f.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-8)) {
                            found.push(w);
                        }
                        if single {
                            break;
                        }
                    }
                    Solve::Critical(w) => {
                        critical += 1;
                        warnings.push(format!("face {face}, value {u:?}: critical solution at {w:?}"));
                        if !found.iter().any(|f| f.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-8)) {
                            found.push(w);
                        }
                        if single {
                            break;
                        }
                    }
                    Solve::Failed => any_failed = true,
                }
            }
            if single && found.is_empty() && any_failed {
                warnings.push(format!("face {face}, value {u:?}: Newton failed, emptiness not certified"));
            }
            count += found.len() as u64;
        }
        total += count << face.dim;
        per_face.push(FaceCount {
            face: face.to_string(),
            dim: face.dim,
            count,
        });
    }
    Ok(FixedPointCount {
        k,
        mode,
        per_face,
        total,
        degenerate_families,
        critical_values: critical,
        warnings,
    })
}

/// Certificate for `count(k) ≤ C_n kⁿ + C_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBoundCertificate {
    pub c_n: f64,
    pub c_0: f64,
    pub ok: bool,
    /// `(k, total, bound)`.
    pub samples: Vec<(u64, u64, f64)>,
    pub fitted_degree: Option<f64>,
}

/// Divisor-mode bound with `C_n = Σ_F 2^d Π_j (ℓ_j + 1)` over the sides
/// `ℓ_j` of each gradient-image box and `C_0` the number of vertices.
pub fn certify_k_bound(p: &DelzantPolytope, h: &Hamiltonian, k_list: &[u64]) -> Result<KBoundCertificate> {
    h.validate(p.n)?;
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::InvalidParameter("k list must be nonempty and positive".into()));
    }
    let mut c_n = 0.0;
    let mut c_0 = 0.0;
    for face in &p.faces {
        if face.dim == 0 {
            c_0 += 1.0;
            continue;
        }
        let img = face_image(p, h, face);
        let vol: f64 = img.lo.iter().zip(&img.hi).map(|(l, h)| h - l + 1.0).product();
        c_n += (1u64 << face.dim) as f64 * vol;
    }
    let n = p.n as i32;
    let mut samples = Vec::new();
    let mut ok = true;
    for &k in k_list {
        let c = count_fixed_points(p, h, k, CountMode::Divisor)?;
        let bound = c_n * (k as f64).powi(n) + c_0;
        ok &= (c.total as f64) <= bound && c.degenerate_families.is_empty();
        samples.push((k, c.total, bound));
    }
    let kmin = *k_list.iter().min().unwrap() as f64;
    let kmax = *k_list.iter().max().unwrap() as f64;
    let fitted_degree = GrowthSamples::new(samples.iter().map(|&(k, c, _)| (k as f64, c)).collect())
        .ok()
        .and_then(|g| entropy_estimates(&g, (kmin, kmax)).ok())
        .map(|e| e.poly_degree);
    Ok(KBoundCertificate {
        c_n,
        c_0,
        ok,
        samples,
        fitted_degree,
    })
}

/// Searches a small linear shift `λ` such that no rational value hit at
/// level `k` is critical for `h + ⟨λ, x⟩`. Tries `λ = 0` first.
pub fn regularize_shift(
    p: &DelzantPolytope,
    h: &Hamiltonian,
    k: u64,
    seed: u64,
    budget: usize,
) -> Result<(Vec<f64>, FixedPointCount)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..=budget {
        let lambda: Vec<f64> = if attempt == 0 {
            vec![0.0; p.n]
        } else {
            let scale = 1e-3 * 1.5f64.powi(attempt as i32 - 1);
            (0..p.n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
        };
        let c = count_fixed_points(p, &h.shifted(&lambda), k, CountMode::Divisor)?;
        if c.critical_values == 0 && c.degenerate_families.is_empty() {
            return Ok((lambda, c));
        }
    }
    Err(Error::NoRegularPerturbation {
        direction: Vec::new(),
        sigma: 0.0,
    })
}

/// CSV `k,total,face_breakdown`.
pub fn counts_csv(counts: &[FixedPointCount]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "total", "face_breakdown"])?;
    for c in counts {
        w.write_record([c.k.to_string(), c.total.to_string(), c.breakdown()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp2() -> DelzantPolytope {
        DelzantPolytope::standard_simplex(2).unwrap()
    }

    #[test]
    fn validates_standard_examples() {
        assert_eq!(cp2().vertices().len(), 3);
        assert_eq!(cp2().faces().len(), 7);
        assert_eq!(DelzantPolytope::cube(2, 1.0).unwrap().faces().len(), 9);
    }

    #[test]
    fn rejects_non_unimodular_vertex() {
        let ineqs = vec![
            Inequality { v: vec![-1, 0], c: 0.0 },
            Inequality { v: vec![0, -1], c: 0.0 },
            Inequality { v: vec![2, 1], c: 2.0 },
        ];
        let err = validate_delzant(2, ineqs).unwrap_err();
        assert!(matches!(err, Error::NotDelzant(ref m) if m.contains("determinant")), "{err}");
    }

    #[test]
    fn rejects_unbounded() {
        let ineqs = vec![Inequality { v: vec![-1, 0], c: 0.0 }, Inequality { v: vec![0, -1], c: 0.0 }];
        assert!(matches!(validate_delzant(2, ineqs), Err(Error::NotDelzant(_))));
    }

    #[test]
    fn hypotenuse_basis() {
        let p = cp2();
        let f = p.face(&[2]).unwrap();
        assert_eq!(face_lattice_basis(&p, f), vec![vec![1, -1]]);
        let sq = DelzantPolytope::cube(2, 1.0).unwrap();
        assert_eq!(sq.face(&[]).unwrap().basis, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn hnf_is_idempotent() {
        let b = hermite_normal_form(&[vec![2, 4, 1], vec![3, 1, 0], vec![5, 5, 1]]);
        assert_eq!(hermite_normal_form(&b), b);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn gradient_examples() {
        let h = Hamiltonian::half_norm_squared(2);
        let sq = DelzantPolytope::cube(2, 1.0).unwrap();
        let g = face_gradient(&sq, &h, sq.face(&[]).unwrap(), &[0.3, 0.7]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.7).abs() < 1e-15);
        let p = cp2();
        let t = 0.8;
        let g = face_gradient(&p, &h, p.face(&[2]).unwrap(), &[t, 1.0 - t]).unwrap();
        assert!((g[0] - (2.0 * t - 1.0)).abs() < 1e-15);
        assert!(face_gradient(&p, &h, p.face(&[2]).unwrap(), &[0.2, 0.2]).is_err());
    }

    #[test]
    fn cp2_k3_counts() {
        let c = count_fixed_points(&cp2(), &Hamiltonian::half_norm_squared(2), 3, CountMode::Divisor).unwrap();
        assert_eq!(c.total, 25);
        let get = |s: &str| c.per_face.iter().find(|f| f.face == s).unwrap().count;
        assert_eq!(get("int"), 1);
        assert_eq!((get("1"), get("2"), get("3")), (2, 2, 5));
    }

    #[test]
    fn cp2_k1_counts() {
        let c = count_fixed_points(&cp2(), &Hamiltonian::half_norm_squared(2), 1, CountMode::Divisor).unwrap();
        let get = |s: &str| c.per_face.iter().find(|f| f.face == s).unwrap().count;
        assert_eq!(get("int"), 0);
        assert_eq!(get("3"), 1);
        assert_eq!(c.total, 5);
    }

    #[test]
    fn irrational_linear_gives_vertices_only() {
        let sq = DelzantPolytope::cube(2, 1.0).unwrap();
        let h = Hamiltonian::linear(vec![std::f64::consts::SQRT_2, std::f64::consts::PI]);
        for k in [1, 5, 17] {
            let c = count_fixed_points(&sq, &h, k, CountMode::Divisor).unwrap();
            assert_eq!(c.total, 4);
        }
    }

    #[test]
    fn rational_linear_is_degenerate() {
        let sq = DelzantPolytope::cube(2, 1.0).unwrap();
        let c = count_fixed_points(&sq, &Hamiltonian::linear(vec![0.5, 1.0]), 2, CountMode::Divisor).unwrap();
        assert!(c.degenerate_families.contains(&"int".to_string()));
    }

    #[test]
    fn q_le_k_counts_distinct_rationals() {
        // Hypotenuse gradient 2t − 1 ∈ (−1, 1): rationals with denominator ≤ 3
        // are 0, ±1/2, ±1/3, ±2/3.
        let c = count_fixed_points(&cp2(), &Hamiltonian::half_norm_squared(2), 3, CountMode::QLeK).unwrap();
        assert_eq!(c.per_face.iter().find(|f| f.face == "3").unwrap().count, 7);
    }

    #[test]
    fn polynomial_matches_quadratic() {
        let quad = Hamiltonian::half_norm_squared(2);
        let poly = Hamiltonian::Polynomial {
            terms: vec![Monomial { coef: 0.5, exp: vec![2, 0] }, Monomial { coef: 0.5, exp: vec![0, 2] }],
            convexity: Some(Convexity::Convex),
        };
        for k in 1..6 {
            let a = count_fixed_points(&cp2(), &quad, k, CountMode::Divisor).unwrap();
            let b = count_fixed_points(&cp2(), &poly, k, CountMode::Divisor).unwrap();
            assert_eq!(a.per_face, b.per_face, "k = {k}");
        }
    }

    #[test]
    fn cp2_certificate() {
        let ks: Vec<u64> = (1..=50).collect();
        let c = certify_k_bound(&cp2(), &Hamiltonian::half_norm_squared(2), &ks).unwrap();
        assert!(c.ok);
        let deg = c.fitted_degree.unwrap();
        assert!((deg - 2.0).abs() <= 0.2, "{deg}");
    }

    #[test]
    fn json_round_trip() {
        let p = cp2();
        let q = DelzantPolytope::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
        let text = r#"{"n":2,"ineqs":[{"v":[-1,0],"c":0},{"v":[0,-1],"c":0},{"v":[1,1],"c":1}]}"#;
        assert_eq!(DelzantPolytope::from_json(text).unwrap(), p);
    }
}

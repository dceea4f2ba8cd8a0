//! Toric domains `Ω_f = {r ≤ f(θ)}` in the closed positive quadrant.
//!
//! Every descriptor is evaluated through its gauge `N(x) = |x| / f(x/|x|)`,
//! which is positively 1-homogeneous, so `f(θ) = 1/N(θ)` on unit vectors.
//! Most descriptors carry an analytic `∇N`; the outward normal of `∂Ω`
//! restricted to a face `Δ` is `P_Δ∇N / |P_Δ∇N|` and the period coefficient
//! is `T = 1/|P_Δ∇N(θ)|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{angle, dot, norm, normalize, tangent_frame};
use crate::simplex::{compositions, face_grid, grid_neighbors};

/// Interpolation used by [`RadialGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Cubic,
}

/// Convexity class of a toric domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    #[default]
    Convex,
    Concave,
}

/// Sampled radial function on the closed simplex.
///
/// Grid points are the compositions `k/resolution` of the flat simplex
/// `{u ≥ 0, Σu = 1}` in lexicographic order of `k`, with `u = x/Σx`. For
/// `n = 2`, `values[j]` is `f` at `u = (j/res, 1 − j/res)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RadialGridRepr", into = "RadialGridRepr")]
pub struct RadialGrid {
    n: usize,
    resolution: usize,
    values: Vec<f64>,
    interpolation: Interpolation,
    convexity: Convexity,
    /// Spline second derivatives for cubic `n = 2` grids.
    m2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RadialGridRepr {
    n: usize,
    resolution: usize,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
    #[serde(default)]
    convexity: Convexity,
}

impl TryFrom<RadialGridRepr> for RadialGrid {
    type Error = Error;
    fn try_from(r: RadialGridRepr) -> Result<Self> {
        RadialGrid::new(r.n, r.resolution, r.values, r.interpolation, r.convexity)
    }
}

impl From<RadialGrid> for RadialGridRepr {
    fn from(g: RadialGrid) -> Self {
        RadialGridRepr {
            n: g.n,
            resolution: g.resolution,
            values: g.values,
            interpolation: g.interpolation,
            convexity: g.convexity,
        }
    }
}

impl RadialGrid {
    pub fn new(
        n: usize,
        resolution: usize,
        values: Vec<f64>,
        interpolation: Interpolation,
        convexity: Convexity,
    ) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidParameter(format!("radial grids support n = 2, 3, got {n}")));
        }
        if resolution < 1 || (interpolation == Interpolation::Cubic && resolution < 3) {
            return Err(Error::InvalidParameter(format!("grid resolution {resolution} too small")));
        }
        if interpolation == Interpolation::Cubic && n != 2 {
            return Err(Error::Unsupported("cubic radial grids are implemented for n = 2 only".into()));
        }
        let expected = compositions(n, resolution, false).len();
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "grid with n={n}, resolution={resolution} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("radial values must be finite and positive".into()));
        }
        let m2 = if interpolation == Interpolation::Cubic {
            // Values are stored with u₁ = j/res increasing along the index.
            natural_spline(&values, 1.0 / resolution as f64)
        } else {
            Vec::new()
        };
        Ok(RadialGrid {
            n,
            resolution,
            values,
            interpolation,
            convexity,
            m2,
        })
    }

    /// Builds an `n = 2` grid from `f` sampled at `u₁ = j/res`, `j = 0..=res`.
    pub fn from_fn_2d<F: Fn(&[f64]) -> f64>(
        resolution: usize,
        interpolation: Interpolation,
        convexity: Convexity,
        f: F,
    ) -> Result<Self> {
        let values = (0..=resolution)
            .map(|j| {
                let u = j as f64 / resolution as f64;
                f(&normalize(&[u, 1.0 - u]))
            })
            .collect();
        RadialGrid::new(2, resolution, values, interpolation, convexity)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    fn h(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// `(f(u), f'(u))` along `u = u₁` for `n = 2`, extrapolating past the ends.
    fn eval_1d(&self, u: f64) -> (f64, f64) {
        let res = self.resolution;
        let h = self.h();
        let j = ((u / h).floor() as i64).clamp(0, res as i64 - 1) as usize;
        let (x0, y0, y1) = (j as f64 * h, self.values[j], self.values[j + 1]);
        match self.interpolation {
            Interpolation::Linear => {
                let slope = (y1 - y0) / h;
                (y0 + slope * (u - x0), slope)
            }
            Interpolation::Cubic => {
                let (m0, m1) = (self.m2[j], self.m2[j + 1]);
                let a = (x0 + h - u) / h;
                let b = (u - x0) / h;
                let val = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
                let der = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
                (val, der)
            }
        }
    }

    /// Piecewise-linear interpolation on the standard triangulation for n = 3.
    fn eval_3d(&self, u: &[f64]) -> f64 {
        let res = self.resolution as f64;
        let index = |a: usize, b: usize| -> f64 {
            // Lexicographic order of compositions (k₀, k₁, k₂) with k₀ outermost.
            let r = self.resolution;
            let before: usize = (0..a).map(|k0| r - k0 + 1).sum();
            self.values[before + b]
        };
        let x = (u[0] * res).clamp(0.0, res);
        let y = (u[1] * res).clamp(0.0, res - x);
        let (i, j) = (x.floor().min(res - 1.0) as usize, y.floor() as usize);
        let j = j.min(self.resolution - i - 1);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let f00 = index(i, j);
        let f10 = index(i + 1, j);
        let f01 = index(i, j + 1);
        if fx + fy <= 1.0 || i + j + 2 > self.resolution {
            f00 + (f10 - f00) * fx + (f01 - f00) * fy
        } else {
            let f11 = index(i + 1, j + 1);
            f11 + (f01 - f11) * (1.0 - fx) + (f10 - f11) * (1.0 - fy)
        }
    }

    fn gauge(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        if !(s > 0.0) {
            return f64::NAN;
        }
        let r = norm(x);
        match self.n {
            2 => r / self.eval_1d(x[0] / s).0,
            _ => {
                let u: Vec<f64> = x.iter().map(|v| v / s).collect();
                r / self.eval_3d(&u)
            }
        }
    }

    fn gauge_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.interpolation != Interpolation::Cubic {
            return Err(Error::Unsupported(
                "gradient queries on a radial grid need cubic interpolation".into(),
            ));
        }
        let s = x[0] + x[1];
        let r = norm(x);
        let (f, fp) = self.eval_1d(x[0] / s);
        let du = [x[1] / (s * s), -x[0] / (s * s)];
        Ok((0..2).map(|i| x[i] / (r * f) - r * fp / (f * f) * du[i]).collect())
    }
}

/// Second derivatives of the natural cubic spline through equispaced values.
fn natural_spline(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system 1·m_{i-1} + 4·m_i + 1·m_{i+1} = 6Δ²y_i / h², m_0 = m_{n-1} = 0.
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]) / (h * h);
        let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
        c[i] = 1.0 / denom;
        d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
    }
    m[k] = d[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    m
}

/// Radial-function descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Descriptor {
    /// `Σ x_i / a_i ≤ 1`.
    Ellipsoid { a: Vec<f64> },
    /// `Σ |x_i / r_i|^p ≤ 1`.
    #[serde(rename = "pnorm")]
    PNorm { r: Vec<f64>, p: f64 },
    /// `|x| ≤ radius`.
    QuarterBall { radius: f64 },
    /// Star hull from the origin of the disk `|x − c| ≤ ρ` (outer arc).
    RolledDiskPlus { center: [f64; 2], rho: f64 },
    /// Region between the origin and the near arc of `|x − c| = ρ`.
    RolledDiskMinus { center: [f64; 2], rho: f64 },
    RadialGrid(RadialGrid),
    /// `N(Mᵀx)` for an orthogonal `M`.
    Rotated { inner: Box<Descriptor>, matrix: Vec<Vec<f64>> },
    /// `sqrt(N² + eps·|x|²)`: a strictly convex perturbation of a convex gauge.
    Strictified { inner: Box<Descriptor>, eps: f64 },
    /// `N(x / factor)`.
    Scaled { inner: Box<Descriptor>, factor: f64 },
}

/// Class flags of a descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainClass {
    pub convexity: Convexity,
    pub analytic: bool,
    /// `W_f` itself is smooth (boundary meets the coordinate planes orthogonally).
    pub smooth: bool,
    /// `f` is differentiable on every open face, so Gauss maps exist.
    pub differentiable: bool,
}

impl Descriptor {
    pub fn class(&self) -> DomainClass {
        use Descriptor::*;
        match self {
            Ellipsoid { .. } | QuarterBall { .. } => DomainClass {
                convexity: Convexity::Convex,
                analytic: true,
                smooth: true,
                differentiable: true,
            },
            PNorm { p, .. } => DomainClass {
                convexity: Convexity::Convex,
                analytic: p.fract() == 0.0 && (*p as i64) % 2 == 0,
                smooth: true,
                differentiable: true,
            },
            RolledDiskPlus { .. } => DomainClass {
                convexity: Convexity::Convex,
                analytic: false,
                smooth: false,
                differentiable: true,
            },
            RolledDiskMinus { .. } => DomainClass {
                convexity: Convexity::Concave,
                analytic: false,
                smooth: false,
                differentiable: true,
            },
            RadialGrid(g) => DomainClass {
                convexity: g.convexity,
                analytic: false,
                smooth: g.interpolation == Interpolation::Cubic,
                differentiable: g.interpolation == Interpolation::Cubic,
            },
            Rotated { inner, .. } => DomainClass {
                smooth: false,
                ..inner.class()
            },
            Strictified { inner, .. } | Scaled { inner, .. } => inner.class(),
        }
    }

    /// The gauge `N(x)`; NaN where the descriptor is undefined.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        use Descriptor::*;
        match self {
            Ellipsoid { a } => x.iter().zip(a).map(|(v, a)| v / a).sum(),
            PNorm { r, p } => x
                .iter()
                .zip(r)
                .map(|(v, r)| (v / r).abs().powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            QuarterBall { radius } => norm(x) / radius,
            RolledDiskPlus { center, rho } => rolled(x, center, *rho, 1.0).0,
            RolledDiskMinus { center, rho } => rolled(x, center, *rho, -1.0).0,
            RadialGrid(g) => g.gauge(x),
            Rotated { inner, matrix } => inner.gauge(&mat_t_vec(matrix, x)),
            Strictified { inner, eps } => {
                let v = inner.gauge(x);
                (v * v + eps * dot(x, x)).sqrt()
            }
            Scaled { inner, factor } => {
                let y: Vec<f64> = x.iter().map(|v| v / factor).collect();
                inner.gauge(&y)
            }
        }
    }

    /// `∇N(x)`.
    pub fn gauge_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        use Descriptor::*;
        let out = match self {
            Ellipsoid { a } => a.iter().map(|a| 1.0 / a).collect(),
            PNorm { r, p } => {
                let n = self.gauge(x);
                x.iter()
                    .zip(r)
                    .map(|(v, r)| {
                        let t = v / r;
                        n.powf(1.0 - p) * t.abs().powf(p - 1.0) * t.signum() / r
                    })
                    .collect()
            }
            QuarterBall { radius } => {
                let r = norm(x);
                x.iter().map(|v| v / (r * radius)).collect()
            }
            RolledDiskPlus { center, rho } => rolled(x, center, *rho, 1.0).1.to_vec(),
            RolledDiskMinus { center, rho } => rolled(x, center, *rho, -1.0).1.to_vec(),
            RadialGrid(g) => g.gauge_grad(x)?,
            Rotated { inner, matrix } => mat_vec(matrix, &inner.gauge_grad(&mat_t_vec(matrix, x))?),
            Strictified { inner, eps } => {
                let v = inner.gauge(x);
                let g = inner.gauge_grad(x)?;
                let ve = (v * v + eps * dot(x, x)).sqrt();
                g.iter().zip(x).map(|(gi, xi)| (v * gi + eps * xi) / ve).collect()
            }
            Scaled { inner, factor } => {
                let y: Vec<f64> = x.iter().map(|v| v / factor).collect();
                inner.gauge_grad(&y)?.iter().map(|g| g / factor).collect()
            }
        };
        if out.iter().all(|v: &f64| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Domain(format!("gauge gradient undefined at {x:?}")))
        }
    }
}

/// Gauge and gradient of the rolled disk; `sign = +1` for the outer arc.
fn rolled(x: &[f64], c: &[f64; 2], rho: f64, sign: f64) -> (f64, [f64; 2]) {
    let s = x[0] * c[0] + x[1] * c[1];
    let q = x[0] * x[0] + x[1] * x[1];
    let k = c[0] * c[0] + c[1] * c[1] - rho * rho;
    let disc = s * s - q * k;
    if disc < 0.0 {
        return (f64::NAN, [f64::NAN; 2]);
    }
    let root = disc.sqrt();
    let den = s + sign * root;
    if !(den > 0.0) {
        return (f64::NAN, [f64::NAN; 2]);
    }
    let mut grad = [0.0; 2];
    for i in 0..2 {
        let d_disc = 2.0 * s * c[i] - 2.0 * k * x[i];
        let d_den = c[i] + sign * d_disc / (2.0 * root);
        grad[i] = (2.0 * x[i] * den - q * d_den) / (den * den);
    }
    (q / den, grad)
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

fn mat_t_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|j| m.iter().zip(x).map(|(row, v)| row[j] * v).sum()).collect()
}

/// An open face of the closed spherical simplex: a nonempty index set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    indices: Vec<usize>,
}

impl Face {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || indices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!("bad face {indices:?} for n = {n}")));
        }
        Ok(Face { indices })
    }

    /// All `2ⁿ − 1` faces, ordered by dimension then indices.
    pub fn all(n: usize) -> Vec<Face> {
        let mut out: Vec<Face> = (1u32..(1 << n))
            .map(|mask| Face {
                indices: (0..n).filter(|i| mask & (1 << i) != 0).collect(),
            })
            .collect();
        out.sort_by(|a, b| a.dim().cmp(&b.dim()).then(a.indices.cmp(&b.indices)));
        out
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Places face coordinates into ℝⁿ.
    pub fn embed(&self, p: &[f64], n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (&i, &x) in self.indices.iter().zip(p) {
            v[i] = x;
        }
        v
    }

    /// Face coordinates of a vector of ℝⁿ.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| x[i]).collect()
    }

    /// Whether `theta` lies in the relative interior of this face.
    pub fn contains_open(&self, theta: &[f64], tol: f64) -> bool {
        theta.iter().enumerate().all(|(i, &t)| {
            if self.indices.contains(&i) {
                t > tol
            } else {
                t.abs() <= tol
            }
        })
    }
}

impl fmt::Display for Face {
    /// 1-based indices joined by `+`, e.g. `1+2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{}", parts.join("+"))
    }
}

impl FromStr for Face {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let indices: Vec<usize> = s
            .split('+')
            .map(|t| match t.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(Error::Format(format!("bad face `{s}`"))),
            })
            .collect::<Result<_>>()?;
        let n = indices.iter().max().map_or(0, |m| m + 1);
        Face::new(indices, n)
    }
}

/// A toric domain: dimension plus radial descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct ToricDomain {
    n: usize,
    descriptor: Descriptor,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    n: usize,
    descriptor: Descriptor,
}

impl TryFrom<DomainRepr> for ToricDomain {
    type Error = Error;
    fn try_from(r: DomainRepr) -> Result<Self> {
        ToricDomain::new(r.n, r.descriptor)
    }
}

impl From<ToricDomain> for DomainRepr {
    fn from(d: ToricDomain) -> Self {
        DomainRepr {
            n: d.n,
            descriptor: d.descriptor,
        }
    }
}

const UNIT_TOL: f64 = 1e-12;

impl ToricDomain {
    pub fn new(n: usize, descriptor: Descriptor) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
        }
        validate_descriptor(n, &descriptor)?;
        let d = ToricDomain { n, descriptor };
        // f must be finite and positive on the closed simplex.
        let res = if n <= 2 { 2000 } else { 40 };
        for theta in face_grid(n, &(0..n).collect::<Vec<_>>(), res, false) {
            let v = d.descriptor.gauge(&theta);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "radial function is not finite and positive at θ = {theta:?}"
                )));
            }
        }
        Ok(d)
    }

    pub fn ellipsoid(a: Vec<f64>) -> Result<Self> {
        ToricDomain::new(a.len(), Descriptor::Ellipsoid { a })
    }

    pub fn quarter_ball(n: usize, radius: f64) -> Result<Self> {
        ToricDomain::new(n, Descriptor::QuarterBall { radius })
    }

    pub fn pnorm(r: Vec<f64>, p: f64) -> Result<Self> {
        ToricDomain::new(r.len(), Descriptor::PNorm { r, p })
    }

    pub fn rolled_disk_plus(center: [f64; 2], rho: f64) -> Result<Self> {
        ToricDomain::new(2, Descriptor::RolledDiskPlus { center, rho })
    }

    pub fn rolled_disk_minus(center: [f64; 2], rho: f64) -> Result<Self> {
        ToricDomain::new(2, Descriptor::RolledDiskMinus { center, rho })
    }

    /// Planar rotation by `angle` (n = 2).
    pub fn rotated_2d(&self, angle: f64) -> Result<Self> {
        if self.n != 2 {
            return Err(Error::InvalidParameter("rotated_2d needs n = 2".into()));
        }
        let (s, c) = angle.sin_cos();
        self.rotated(vec![vec![c, -s], vec![s, c]])
    }

    pub fn rotated(&self, matrix: Vec<Vec<f64>>) -> Result<Self> {
        ToricDomain::new(
            self.n,
            Descriptor::Rotated {
                inner: Box::new(self.descriptor.clone()),
                matrix,
            },
        )
    }

    pub fn strictified(&self, eps: f64) -> Result<Self> {
        ToricDomain::new(
            self.n,
            Descriptor::Strictified {
                inner: Box::new(self.descriptor.clone()),
                eps,
            },
        )
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ToricDomain::new(
            self.n,
            Descriptor::Scaled {
                inner: Box::new(self.descriptor.clone()),
                factor,
            },
        )
    }

    /// Strictification with `eps = 1e-6 / (max f)²`, a relative change of
    /// `f` below `1e-6`.
    pub fn default_strictified(&self) -> Result<Self> {
        let (_, fmax) = self.radial_range(64);
        self.strictified(1e-6 / (fmax * fmax))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn class(&self) -> DomainClass {
        self.descriptor.class()
    }

    pub fn faces(&self) -> Vec<Face> {
        Face::all(self.n)
    }

    pub fn gauge(&self, x: &[f64]) -> f64 {
        self.descriptor.gauge(x)
    }

    pub fn gauge_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.descriptor.gauge_grad(x)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain serializes")
    }

    /// Grid estimate of `(min f, max f)` over the closed simplex.
    pub fn radial_range(&self, res: usize) -> (f64, f64) {
        let all: Vec<usize> = (0..self.n).collect();
        face_grid(self.n, &all, res.max(1), false)
            .iter()
            .map(|t| 1.0 / self.gauge(t))
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// CSV `theta_1..theta_n,f` of `f` on a closed-simplex mesh.
    pub fn mesh_csv(&self, res: usize) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("theta_{i}")).collect();
        header.push("f".into());
        w.write_record(&header)?;
        let all: Vec<usize> = (0..self.n).collect();
        for t in face_grid(self.n, &all, res.max(1), false) {
            let mut rec: Vec<String> = t.iter().map(|v| format!("{v:.16e}")).collect();
            rec.push(format!("{:.16e}", 1.0 / self.gauge(&t)));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    /// Outward unit normal and period coefficient at `theta` in the open face,
    /// from `P_Δ∇N`. No validation.
    pub(crate) fn normal_and_period(&self, face: &Face, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let g = self.gauge_grad(theta)?;
        let pg: Vec<f64> = (0..self.n)
            .map(|i| if face.indices.contains(&i) { g[i] } else { 0.0 })
            .collect();
        let r = norm(&pg);
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("degenerate gauge gradient at {theta:?}")));
        }
        Ok((pg.iter().map(|v| v / r).collect(), 1.0 / r))
    }

    fn check_unit_in_simplex(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n {
            return Err(Error::Domain(format!("θ has length {}, expected {}", theta.len(), self.n)));
        }
        if (norm(theta) - 1.0).abs() > UNIT_TOL || theta.iter().any(|&t| t < -UNIT_TOL) {
            return Err(Error::Domain(format!("θ = {theta:?} is not a unit vector of the closed quadrant")));
        }
        Ok(())
    }

    fn check_open_face(&self, face: &Face, theta: &[f64]) -> Result<()> {
        self.check_unit_in_simplex(theta)?;
        if face.indices.iter().any(|&i| i >= self.n) {
            return Err(Error::InvalidParameter(format!("face {face} out of range for n = {}", self.n)));
        }
        if !face.contains_open(theta, UNIT_TOL) {
            return Err(Error::Domain(format!("θ = {theta:?} is not in the open face {face}")));
        }
        if !self.class().differentiable {
            return Err(Error::Unsupported("radial function is not differentiable on open faces".into()));
        }
        Ok(())
    }
}

fn validate_descriptor(n: usize, d: &Descriptor) -> Result<()> {
    use Descriptor::*;
    let pos = |v: f64| v.is_finite() && v > 0.0;
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    match d {
        Ellipsoid { a } => {
            if a.len() != n || !a.iter().all(|&v| pos(v)) {
                return bad(format!("ellipsoid needs {n} positive semi-axes, got {a:?}"));
            }
        }
        PNorm { r, p } => {
            if r.len() != n || !r.iter().all(|&v| pos(v)) || !(p.is_finite() && *p > 1.0) {
                return bad(format!("p-norm body needs {n} positive radii and p > 1, got {r:?}, p={p}"));
            }
        }
        QuarterBall { radius } => {
            if !pos(*radius) {
                return bad(format!("radius must be positive, got {radius}"));
            }
        }
        RolledDiskPlus { center, rho } | RolledDiskMinus { center, rho } => {
            if n != 2 {
                return bad("rolled disks are defined for n = 2".into());
            }
            if !pos(*rho) || !center.iter().all(|c| c.is_finite()) {
                return bad(format!("bad rolled disk center {center:?}, ρ = {rho}"));
            }
        }
        RadialGrid(g) => {
            if g.n != n {
                return bad(format!("radial grid has n = {}, domain has n = {n}", g.n));
            }
        }
        Rotated { inner, matrix } => {
            validate_descriptor(n, inner)?;
            if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                return bad("rotation matrix must be n × n".into());
            }
            for i in 0..n {
                for j in 0..n {
                    let e: f64 = (0..n).map(|k| matrix[k][i] * matrix[k][j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    if (e - target).abs() > 1e-10 {
                        return bad("rotation matrix is not orthogonal".into());
                    }
                }
            }
        }
        Strictified { inner, eps } => {
            validate_descriptor(n, inner)?;
            if !(eps.is_finite() && *eps >= 0.0) {
                return bad(format!("strictification ε must be ≥ 0, got {eps}"));
            }
        }
        Scaled { inner, factor } => {
            validate_descriptor(n, inner)?;
            if !pos(*factor) {
                return bad(format!("scale factor must be positive, got {factor}"));
            }
        }
    }
    Ok(())
}

/// `f(θ)` on the closed simplex.
pub fn radial(d: &ToricDomain, theta: &[f64]) -> Result<f64> {
    d.check_unit_in_simplex(theta)?;
    let v = 1.0 / d.gauge(theta);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("radial function undefined at {theta:?}")))
    }
}

/// Spherical gradient of `f` restricted to the face, in the Gram–Schmidt
/// tangent frame at `θ`: returns `(f, frame, components)`.
fn spherical_gradient(d: &ToricDomain, face: &Face, theta: &[f64]) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
    let nval = d.gauge(theta);
    let grad = d.gauge_grad(theta)?;
    let frame = tangent_frame(theta, &face.indices);
    // f = 1/N on the sphere, so ∂_t f = −∂_t N / N².
    let comps = frame.iter().map(|t| -dot(&grad, t) / (nval * nval)).collect();
    Ok((1.0 / nval, frame, comps))
}

/// `G_Δ(θ) = (θ − P_Δ∇f/f) / sqrt(1 + |P_Δ∇f|²/f²)`, as a vector of ℝⁿ.
pub fn gauss_map(d: &ToricDomain, face: &Face, theta: &[f64]) -> Result<Vec<f64>> {
    d.check_open_face(face, theta)?;
    let (f, frame, g) = spherical_gradient(d, face, theta)?;
    let g2: f64 = g.iter().map(|x| x * x).sum();
    let scale = (1.0 + g2 / (f * f)).sqrt();
    let mut out: Vec<f64> = theta.to_vec();
    for (t, gk) in frame.iter().zip(&g) {
        for (o, ti) in out.iter_mut().zip(t) {
            *o -= gk * ti / f;
        }
    }
    Ok(out.iter().map(|v| v / scale).collect())
}

/// `T(θ) = f(θ)·⟨θ, G_Δ(θ)⟩`.
pub fn period_coeff(d: &ToricDomain, face: &Face, theta: &[f64]) -> Result<f64> {
    d.check_open_face(face, theta)?;
    let (f, _, g) = spherical_gradient(d, face, theta)?;
    let g2: f64 = g.iter().map(|x| x * x).sum();
    Ok(f / (1.0 + g2 / (f * f)).sqrt())
}

/// Per-face infimum of the period coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceConstants {
    pub face: Face,
    /// Certified lower bound: grid minimum minus `lipschitz · mesh`.
    pub m_delta: f64,
    pub grid_min: f64,
    pub lipschitz: f64,
    pub mesh: f64,
    pub grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBounds {
    pub faces: Vec<FaceConstants>,
    pub m: f64,
}

impl MBounds {
    pub fn for_face(&self, face: &Face) -> Option<&FaceConstants> {
        self.faces.iter().find(|c| &c.face == face)
    }
}

/// `m_Δ` for every face and `m = min m_Δ`.
pub fn m_bounds(d: &ToricDomain, resolution: usize) -> Result<MBounds> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be ≥ 2, got {resolution}")));
    }
    if !d.class().differentiable {
        return Err(Error::Unsupported("m_bounds needs a differentiable radial function".into()));
    }
    let mut faces = Vec::new();
    for face in d.faces() {
        let dim = face.dim();
        if dim == 1 {
            let mut e = vec![0.0; d.n];
            e[face.indices[0]] = 1.0;
            let t = 1.0 / d.gauge(&e);
            faces.push(FaceConstants {
                face,
                m_delta: t,
                grid_min: t,
                lipschitz: 0.0,
                mesh: 0.0,
                grid_resolution: 1,
            });
            continue;
        }
        let res = resolution.max(dim + 1);
        let pts = face_grid(d.n, &face.indices, res, true);
        let ts: Vec<f64> = pts
            .iter()
            .map(|t| d.normal_and_period(&face, t).map(|x| x.1))
            .collect::<Result<_>>()?;
        let grid_min = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let mut lip: f64 = 0.0;
        let mut mesh: f64 = 0.0;
        for (a, b) in grid_neighbors(dim, res, true) {
            let h = angle(&pts[a], &pts[b]);
            mesh = mesh.max(h);
            lip = lip.max((ts[a] - ts[b]).abs() / h);
        }
        // The outermost grid points sit one step inside the face.
        let m_delta = grid_min - lip * mesh;
        if !(m_delta > 0.0) {
            return Err(Error::Margin(format!(
                "face {face}: Lipschitz margin {:.3e} swamps grid minimum {grid_min:.3e}; raise the resolution",
                lip * mesh
            )));
        }
        faces.push(FaceConstants {
            face,
            m_delta,
            grid_min,
            lipschitz: lip,
            mesh,
            grid_resolution: res,
        });
    }
    let m = faces.iter().map(|c| c.m_delta).fold(f64::INFINITY, f64::min);
    Ok(MBounds { faces, m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalize(v)
    }

    #[test]
    fn quarter_ball_radial_is_constant() {
        let d = ToricDomain::quarter_ball(2, 1.0).unwrap();
        for t in [[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]] {
            assert!((radial(&d, &t).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ellipsoid_axis_value() {
        let d = ToricDomain::ellipsoid(vec![1.0, 2.0]).unwrap();
        assert!((radial(&d, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((radial(&d, &[0.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rolled_disk_diagonal_outer_root() {
        let d = ToricDomain::rolled_disk_plus([1.0, 1.0], 1.0).unwrap();
        let t = unit(&[1.0, 1.0]);
        // |rθ − c| = 1 with c = (1,1): r² − 2√2 r + 1 = 0, outer root √2 + 1.
        assert!((radial(&d, &t).unwrap() - (2f64.sqrt() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn radial_rejects_points_outside_simplex() {
        let d = ToricDomain::quarter_ball(2, 1.0).unwrap();
        assert!(matches!(radial(&d, &[1.0, -0.5]), Err(Error::Domain(_))));
        assert!(matches!(radial(&d, &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn quarter_ball_gauss_map_is_identity() {
        let d = ToricDomain::quarter_ball(3, 2.0).unwrap();
        let f = Face::new(vec![0, 1, 2], 3).unwrap();
        let t = unit(&[1.0, 2.0, 0.5]);
        let g = gauss_map(&d, &f, &t).unwrap();
        for (a, b) in g.iter().zip(&t) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((period_coeff(&d, &f, &t).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ellipsoid_gauss_map_is_constant_on_edge() {
        let d = ToricDomain::ellipsoid(vec![1.0, 2.0]).unwrap();
        let f = Face::new(vec![0, 1], 2).unwrap();
        let expect = unit(&[1.0, 0.5]);
        for u in [0.1, 0.4, 0.9] {
            let g = gauss_map(&d, &f, &unit(&[u, 1.0 - u])).unwrap();
            for (a, b) in g.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            // T = 2/√5, so p = (2,1) has action √5·T = 2.
            let t = period_coeff(&d, &f, &unit(&[u, 1.0 - u])).unwrap();
            assert!((t - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_map_matches_gauge_normal() {
        let d = ToricDomain::pnorm(vec![1.0, 1.5, 0.8], 4.0).unwrap();
        let f = Face::new(vec![0, 1, 2], 3).unwrap();
        let t = unit(&[0.3, 0.5, 0.7]);
        let g = gauss_map(&d, &f, &t).unwrap();
        let (g2, t2) = d.normal_and_period(&f, &t).unwrap();
        for (a, b) in g.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((period_coeff(&d, &f, &t).unwrap() - t2).abs() < 1e-12);
    }

    #[test]
    fn gauss_map_rejects_boundary_and_linear_grids() {
        let d = ToricDomain::quarter_ball(2, 1.0).unwrap();
        let f = Face::new(vec![0, 1], 2).unwrap();
        assert!(matches!(gauss_map(&d, &f, &[1.0, 0.0]), Err(Error::Domain(_))));
        let g = RadialGrid::from_fn_2d(10, Interpolation::Linear, Convexity::Convex, |_| 1.0).unwrap();
        let dg = ToricDomain::new(2, Descriptor::RadialGrid(g)).unwrap();
        assert!(matches!(gauss_map(&dg, &f, &unit(&[1.0, 1.0])), Err(Error::Unsupported(_))));
    }

    #[test]
    fn m_bounds_quarter_ball_exact() {
        let d = ToricDomain::quarter_ball(3, 1.5).unwrap();
        let m = m_bounds(&d, 20).unwrap();
        assert_eq!(m.faces.len(), 7);
        assert!((m.m - 1.5).abs() < 1e-12);
    }

    #[test]
    fn m_bounds_ellipsoid_hypotenuse_distance() {
        let (a, b) = (1.0, 2.0);
        let d = ToricDomain::ellipsoid(vec![a, b]).unwrap();
        let m = m_bounds(&d, 50).unwrap();
        let expect = a * b / (a * a + b * b).sqrt();
        assert!((m.m - expect).abs() < 1e-12, "{} vs {expect}", m.m);
    }

    #[test]
    fn m_bounds_pnorm_grid_converges() {
        let d = ToricDomain::pnorm(vec![1.0, 1.0], 4.0).unwrap();
        let a = m_bounds(&d, 2000).unwrap();
        let b = m_bounds(&d, 4000).unwrap();
        assert!((a.faces[2].grid_min - b.faces[2].grid_min).abs() < 1e-4);
        assert!(a.m <= b.m + 1e-12 && a.m > 0.9);
    }

    #[test]
    fn m_bounds_rejects_low_resolution() {
        let d = ToricDomain::quarter_ball(2, 1.0).unwrap();
        assert!(matches!(m_bounds(&d, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn cubic_grid_reproduces_smooth_profile() {
        let d = ToricDomain::pnorm(vec![1.0, 2.0], 3.0).unwrap();
        let g = RadialGrid::from_fn_2d(400, Interpolation::Cubic, Convexity::Convex, |t| 1.0 / d.gauge(t)).unwrap();
        let dg = ToricDomain::new(2, Descriptor::RadialGrid(g)).unwrap();
        let f = Face::new(vec![0, 1], 2).unwrap();
        for u in [0.2, 0.5, 0.77] {
            let t = unit(&[u, 1.0 - u]);
            assert!((radial(&dg, &t).unwrap() - radial(&d, &t).unwrap()).abs() < 1e-7);
            let (a, b) = (gauss_map(&dg, &f, &t).unwrap(), gauss_map(&d, &f, &t).unwrap());
            assert!(angle(&a, &b) < 1e-5);
        }
    }

    #[test]
    fn linear_grid_3d_interpolates_vertices() {
        let res = 4;
        let vals: Vec<f64> = compositions(3, res, false)
            .iter()
            .map(|k| 1.0 + k[0] as f64 + 2.0 * k[1] as f64)
            .collect();
        let g = RadialGrid::new(3, res, vals, Interpolation::Linear, Convexity::Convex).unwrap();
        let d = ToricDomain::new(3, Descriptor::RadialGrid(g)).unwrap();
        // Linear data is reproduced exactly, including on the simplex boundary.
        for u in [[0.25, 0.5, 0.25], [0.1, 0.3, 0.6], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]] {
            let t = unit(&u);
            let expect = 1.0 + res as f64 * (u[0] + 2.0 * u[1]);
            assert!((radial(&d, &t).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn domain_json_round_trip() {
        let text = r#"{"n":2,"descriptor":{"type":"ellipsoid","a":[1.0,2.0]}}"#;
        let d = ToricDomain::from_json(text).unwrap();
        assert_eq!(ToricDomain::from_json(&d.to_json()).unwrap(), d);
        let r = ToricDomain::pnorm(vec![1.0, 1.0], 4.0).unwrap().rotated_2d(0.3).unwrap();
        assert_eq!(ToricDomain::from_json(&r.to_json()).unwrap(), r);
        assert!(ToricDomain::from_json(r#"{"n":3,"descriptor":{"type":"ellipsoid","a":[1.0,2.0]}}"#).is_err());
    }

    #[test]
    fn face_display_and_parse() {
        let f = Face::new(vec![1, 0], 3).unwrap();
        assert_eq!(f.to_string(), "1+2");
        assert_eq!("1+2".parse::<Face>().unwrap().indices(), &[0, 1]);
        assert_eq!(Face::all(3).len(), 7);
    }
}

//! Mollification of non-smooth convex or concave radial profiles.
//!
//! The 1-homogeneous function `F(x) = |x|/f(x/|x|)` (the gauge) is extended a
//! little beyond the closed positive cone, convolved with a scaled bump
//! `δ_η`, and the smooth surface `{F_η = 1}` is read back as a radial function
//! `f_η`. The radial derivative `∂F_η/∂r ≥ ξ` on that surface controls both
//! the gradient of `f_η` and a lower bound on the period coefficient that does
//! not depend on `η`.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize, tangent_frame};
use crate::orbit_enum::{certify_with_m, BoundCertificate, EnumConfig};
use crate::simplex::compositions;
use crate::toric_geometry::{m_bounds, Convexity, Descriptor, Interpolation, MBounds, RadialGrid, ToricDomain};

/// Angular margins tried, widest first, when probing the extension.
const MARGINS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

/// Relative margin below `inf ∂F/∂r = 1 / max f` accepted for `ξ̂`.
pub const XI_MARGIN: f64 = 0.25;

/// The gauge of a domain on a cone slightly wider than the positive orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousField {
    domain: ToricDomain,
    pub convexity: Convexity,
    /// Angular width of the extension beyond the orthant, in radians.
    pub margin: f64,
    /// Largest `|∇F|` seen on the extended cone.
    pub lipschitz: f64,
    pub min_f: f64,
    pub max_f: f64,
    /// Cone tip cut `Σx ≥ a`.
    pub tip_cut: f64,
    pub homogeneity_residual: f64,
}

impl HomogeneousField {
    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn domain(&self) -> &ToricDomain {
        &self.domain
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.domain.gauge(x)
    }
}

/// Unit directions within angle `margin` of the closed positive orthant.
fn extended_directions(n: usize, margin: f64) -> Vec<Vec<f64>> {
    let lo = -margin;
    let hi = FRAC_PI_2 + margin;
    match n {
        2 => (0..=400)
            .map(|i| {
                let phi = lo + (hi - lo) * i as f64 / 400.0;
                vec![phi.cos(), phi.sin()]
            })
            .collect(),
        _ => {
            let a = 40;
            let mut out = Vec::new();
            for i in 0..=a {
                for j in 0..=a {
                    let phi = lo + (hi - lo) * i as f64 / a as f64;
                    let psi = lo + (hi - lo) * j as f64 / a as f64;
                    out.push(vec![psi.cos() * phi.cos(), psi.cos() * phi.sin(), psi.sin()]);
                }
            }
            out
        }
    }
}

fn extension_ok(d: &ToricDomain, dirs: &[Vec<f64>], sign: f64, min_f: f64, max_f: f64) -> bool {
    if dirs.iter().any(|t| {
        let v = d.gauge(t);
        !(v.is_finite() && v > 0.0)
    }) {
        return false;
    }
    // Midpoint convexity (concavity) spot checks on the extended cone.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4000 {
        let a = &dirs[rng.gen_range(0..dirs.len())];
        let b = &dirs[rng.gen_range(0..dirs.len())];
        let ra = rng.gen_range(0.5 * min_f..2.0 * max_f);
        let rb = rng.gen_range(0.5 * min_f..2.0 * max_f);
        let x: Vec<f64> = a.iter().map(|v| v * ra).collect();
        let y: Vec<f64> = b.iter().map(|v| v * rb).collect();
        let m: Vec<f64> = x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect();
        let (fx, fy, fm) = (d.gauge(&x), d.gauge(&y), d.gauge(&m));
        if !fm.is_finite() {
            // The midpoint left the extension: the cone is not convex here.
            return false;
        }
        if sign * (fm - 0.5 * (fx + fy)) > 1e-10 * (fx.abs() + fy.abs()) {
            return false;
        }
    }
    true
}

/// Samples `F = r/f` and its extension; fails if no extension is available.
pub fn build_field(d: &ToricDomain) -> Result<HomogeneousField> {
    let n = d.n();
    if !(n == 2 || n == 3) {
        return Err(Error::Unsupported("mollification is implemented for n = 2, 3".into()));
    }
    let convexity = d.class().convexity;
    let sign = match convexity {
        Convexity::Convex => 1.0,
        Convexity::Concave => -1.0,
    };
    let (min_f, max_f) = d.radial_range(200);
    let Some((margin, dirs)) = MARGINS
        .iter()
        .map(|&m| (m, extended_directions(n, m)))
        .find(|(_, dirs)| extension_ok(d, dirs, sign, min_f, max_f))
    else {
        return Err(Error::ExtensionUnavailable(format!(
            "the gauge has no {} extension past the coordinate planes (tried margins down to {} rad)",
            if sign > 0.0 { "convex" } else { "concave" },
            MARGINS[MARGINS.len() - 1]
        )));
    };
    let mut lipschitz: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for t in &dirs {
        let h = 1e-6;
        let mut g2 = 0.0;
        for i in 0..n {
            let mut p = t.clone();
            let mut m = t.clone();
            p[i] += h;
            m[i] -= h;
            let di = (d.gauge(&p) - d.gauge(&m)) / (2.0 * h);
            g2 += di * di;
        }
        lipschitz = lipschitz.max(g2.sqrt());
        let f1 = d.gauge(t);
        for lam in [0.5, 2.0, 3.7] {
            let x: Vec<f64> = t.iter().map(|v| v * lam).collect();
            residual = residual.max((d.gauge(&x) - lam * f1).abs() / lam);
        }
    }
    Ok(HomogeneousField {
        domain: d.clone(),
        convexity,
        margin,
        lipschitz,
        min_f,
        max_f,
        tip_cut: 0.2 * min_f,
        homogeneity_residual: residual,
    })
}

/// Midpoint-rule quadrature of the normalized bump `c·exp(−1/(1−|y|²))` on the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Stencil {
    /// Cells of side `2/cells` whose centers lie in the open unit ball.
    pub fn bump(n: usize, cells: usize) -> Self {
        let h = 2.0 / cells as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let total = cells.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    let i = rem % cells;
                    rem /= cells;
                    -1.0 + h * (i as f64 + 0.5)
                })
                .collect();
            let r2: f64 = y.iter().map(|v| v * v).sum();
            if r2 < 1.0 {
                weights.push((-1.0 / (1.0 - r2)).exp());
                points.push(y);
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Stencil { points, weights }
    }

    pub fn default_for(n: usize) -> Self {
        Stencil::bump(n, if n == 2 { 16 } else { 10 })
    }
}

/// `F_η = F ∗ δ_η`, evaluated pointwise.
#[derive(Debug, Clone)]
pub struct MollifiedDomain {
    pub field: HomogeneousField,
    pub eta: f64,
    stencil: Stencil,
    /// Direction-grid resolution on the simplex.
    pub resolution: usize,
    radii: OnceLock<Result<Vec<f64>>>,
}

/// Convolves the field with the bump scaled to radius `eta`.
pub fn mollify(field: &HomogeneousField, eta: f64) -> Result<MollifiedDomain> {
    mollify_with(field, eta, Stencil::default_for(field.n()))
}

pub fn mollify_with(field: &HomogeneousField, eta: f64, stencil: Stencil) -> Result<MollifiedDomain> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if 3.0 * eta / field.min_f > field.margin {
        return Err(Error::Margin(format!(
            "eta = {eta} needs an angular margin of {:.4} rad but the extension only has {}; shrink eta",
            3.0 * eta / field.min_f,
            field.margin
        )));
    }
    Ok(MollifiedDomain {
        field: field.clone(),
        eta,
        stencil,
        resolution: if field.n() == 2 { 128 } else { 24 },
        radii: OnceLock::new(),
    })
}

impl MollifiedDomain {
    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        let mut acc = 0.0;
        for (p, w) in self.stencil.points.iter().zip(&self.stencil.weights) {
            for i in 0..x.len() {
                y[i] = x[i] - self.eta * p[i];
            }
            acc += w * self.field.eval(&y);
        }
        acc
    }

    /// Directions `normalize(k/res)` over all compositions, in grid order.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        compositions(self.n(), self.resolution, false)
            .into_iter()
            .map(|k| normalize(&k.iter().map(|&v| v as f64).collect::<Vec<_>>()))
            .collect()
    }

    /// Root of `F_η(rθ) = 1` by the Illinois method inside a fixed bracket.
    pub fn surface_radius(&self, theta: &[f64]) -> Result<f64> {
        let g = |r: f64| self.eval(&theta.iter().map(|v| v * r).collect::<Vec<_>>()) - 1.0;
        let (mut a, mut b) = (0.5 * self.field.min_f, 2.0 * self.field.max_f);
        let (mut fa, mut fb) = (g(a), g(b));
        if !(fa < 0.0 && fb > 0.0) {
            return Err(Error::InconsistentSurface(format!(
                "F_eta - 1 does not change sign on [{a}, {b}] along {theta:?}"
            )));
        }
        let mut side = 0;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = g(c);
            if fc == 0.0 || (b - a).abs() <= 1e-14 * c.abs() {
                return Ok(c);
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() <= 1e-14 * a.abs() {
                return Ok(0.5 * (a + b));
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Surface radii at [`directions`](Self::directions), computed once.
    pub fn radii(&self) -> Result<&[f64]> {
        self.radii
            .get_or_init(|| self.directions().par_iter().map(|t| self.surface_radius(t)).collect())
            .as_ref()
            .map(Vec::as_slice)
            .map_err(Clone::clone)
    }

    /// Random midpoint checks that break convexity (concavity for concave fields).
    pub fn midpoint_violations(&self, trials: usize, seed: u64) -> usize {
        let sign = if self.field.convexity == Convexity::Convex { 1.0 } else { -1.0 };
        let dirs = self.directions();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (0.6 * self.field.min_f, 1.5 * self.field.max_f);
        (0..trials)
            .filter(|_| {
                let a = &dirs[rng.gen_range(0..dirs.len())];
                let b = &dirs[rng.gen_range(0..dirs.len())];
                let x: Vec<f64> = a.iter().map(|v| v * rng.gen_range(lo..hi)).collect();
                let y: Vec<f64> = b.iter().map(|v| v * rng.gen_range(lo..hi)).collect();
                let m: Vec<f64> = x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect();
                let (fx, fy) = (self.eval(&x), self.eval(&y));
                sign * (self.eval(&m) - 0.5 * (fx + fy)) > 1e-12 * (fx.abs() + fy.abs())
            })
            .count()
    }

    /// `sup |F_η − F|` over the direction grid at radii in `[min f, max f]`.
    pub fn field_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for t in self.directions() {
            for s in [self.field.min_f, 0.5 * (self.field.min_f + self.field.max_f), self.field.max_f] {
                let x: Vec<f64> = t.iter().map(|v| v * s).collect();
                dev = dev.max((self.eval(&x) - self.field.eval(&x)).abs());
            }
        }
        dev
    }
}

/// `ξ̂` and the target it has to clear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBound {
    pub xi_hat: f64,
    pub xi_target: f64,
}

/// Minimum over the surface `{F_η = 1}` of the radial difference quotient.
pub fn radial_bound(m: &MollifiedDomain) -> Result<RadialBound> {
    let radii = m.radii()?;
    let xi_hat = m
        .directions()
        .iter()
        .zip(radii)
        .map(|(t, &r)| {
            let h = 1e-4 * r;
            let up: Vec<f64> = t.iter().map(|v| v * (r + h)).collect();
            let dn: Vec<f64> = t.iter().map(|v| v * (r - h)).collect();
            (m.eval(&up) - m.eval(&dn)) / (2.0 * h)
        })
        .fold(f64::INFINITY, f64::min);
    let xi_target = (1.0 - XI_MARGIN) / m.field.max_f;
    if !(xi_hat > 0.0) {
        return Err(Error::SmoothingFailure(format!(
            "radial derivative {xi_hat} on the mollified surface is not positive; shrink eta"
        )));
    }
    if xi_hat < xi_target {
        return Err(Error::SmoothingFailure(format!(
            "radial derivative {xi_hat} is below the target {xi_target}; shrink eta"
        )));
    }
    Ok(RadialBound { xi_hat, xi_target })
}

/// `f_η` as a radial grid plus the gradient check `‖∇f_η‖ ≤ 1.1·L/ξ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub f_eta: RadialGrid,
    /// Largest `|∇_θ f_η| / f_η` on the sampled directions.
    pub max_gradient: f64,
    pub gradient_bound: f64,
    pub gradient_ok: bool,
    /// `sup |f_η − f|` on the direction grid.
    pub sup_deviation: f64,
}

pub fn extract_radial(m: &MollifiedDomain, xi_hat: f64) -> Result<Extraction> {
    if !(xi_hat > 0.0) {
        return Err(Error::InvalidParameter("xi_hat must be positive".into()));
    }
    let n = m.n();
    let radii = m.radii()?.to_vec();
    let dirs = m.directions();
    let all: Vec<usize> = (0..n).collect();
    let delta = 1e-4;
    let grads: Vec<f64> = dirs
        .par_iter()
        .zip(&radii)
        .map(|(t, &r)| {
            let mut g2 = 0.0;
            for tv in tangent_frame(t, &all) {
                let p = normalize(&t.iter().zip(&tv).map(|(a, b)| a + delta * b).collect::<Vec<_>>());
                let q = normalize(&t.iter().zip(&tv).map(|(a, b)| a - delta * b).collect::<Vec<_>>());
                let dr = (m.surface_radius(&p)? - m.surface_radius(&q)?) / (2.0 * delta);
                g2 += dr * dr;
            }
            Ok(g2.sqrt() / r)
        })
        .collect::<Result<_>>()?;
    let max_gradient = grads.iter().copied().fold(0.0, f64::max);
    let sup_deviation = dirs
        .iter()
        .zip(&radii)
        .map(|(t, r)| (r - 1.0 / m.field.eval(t)).abs())
        .fold(0.0, f64::max);
    let interp = if n == 2 { Interpolation::Cubic } else { Interpolation::Linear };
    let f_eta = RadialGrid::new(n, m.resolution, radii, interp, m.field.convexity)?;
    let gradient_bound = 1.1 * m.field.lipschitz / xi_hat;
    Ok(Extraction {
        f_eta,
        max_gradient,
        gradient_bound,
        gradient_ok: max_gradient <= gradient_bound,
        sup_deviation,
    })
}

/// `(min f) / (2 √(1 + (L/ξ)²))`.
///
/// `L/ξ` bounds `|∇_θ f_η| / f_η`, so the bound scales like `f` when the
/// domain is dilated.
pub fn m_lower_formula(min_f: f64, lipschitz: f64, xi: f64) -> f64 {
    let t = lipschitz / xi;
    min_f / (2.0 * (1.0 + t * t).sqrt())
}

/// Lower bounds on the period coefficient of the smoothed domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformM {
    /// Formula with `ξ = ξ_target`; depends on `f` only.
    pub m_lower: f64,
    /// Formula with the measured `ξ̂`.
    pub m_lower_xi_hat: f64,
    /// Certified grid `m` of the extracted profile (cubic grids only).
    pub grid_m: Option<f64>,
}

pub fn uniform_m(m: &MollifiedDomain, bound: &RadialBound, extraction: &Extraction) -> Result<UniformM> {
    let f = &m.field;
    let m_lower = m_lower_formula(f.min_f, f.lipschitz, bound.xi_target);
    let m_lower_xi_hat = m_lower_formula(f.min_f, f.lipschitz, bound.xi_hat);
    let grid_m = if extraction.f_eta.interpolation() == Interpolation::Cubic {
        let d = ToricDomain::new(m.n(), Descriptor::RadialGrid(extraction.f_eta.clone()))?;
        Some(m_bounds(&d, 400)?.m)
    } else {
        None
    };
    if let Some(g) = grid_m {
        if g < m_lower {
            return Err(Error::SmoothingFailure(format!(
                "grid m = {g} of the smoothed profile is below the formula bound {m_lower}"
            )));
        }
    }
    Ok(UniformM {
        m_lower,
        m_lower_xi_hat,
        grid_m,
    })
}

/// Summary of one mollification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifyReport {
    pub eta: f64,
    #[serde(rename = "xi")]
    pub xi_hat: f64,
    pub xi_target: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub m_lower: f64,
    pub m_lower_xi_hat: f64,
    pub grid_m: Option<f64>,
    pub max_gradient: f64,
    pub gradient_bound: f64,
    pub gradient_ok: bool,
    pub sup_deviation: f64,
    pub margin: f64,
    pub min_f: f64,
    pub max_f: f64,
}

/// Output of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct Mollified {
    pub report: MollifyReport,
    pub f_eta: RadialGrid,
}

impl Mollified {
    /// The smoothed domain, strictified before Gauss-map based enumeration.
    pub fn domain(&self) -> Result<ToricDomain> {
        ToricDomain::new(self.f_eta.n(), Descriptor::RadialGrid(self.f_eta.clone()))?.default_strictified()
    }

    /// Bound certificate with every `m_Δ` replaced by `m_lower`.
    pub fn certify(&self, s_list: &[f64], cfg: &EnumConfig) -> Result<BoundCertificate> {
        let bounds = MBounds {
            faces: Vec::new(),
            m: self.report.m_lower,
        };
        certify_with_m(&self.domain()?, s_list, &bounds, cfg)
    }
}

/// Field, mollification, radial bound, extraction and `m_lower` in one go.
pub fn run_pipeline(d: &ToricDomain, eta: f64) -> Result<Mollified> {
    let field = build_field(d)?;
    run_pipeline_with_field(&field, eta)
}

pub fn run_pipeline_with_field(field: &HomogeneousField, eta: f64) -> Result<Mollified> {
    let m = mollify(field, eta)?;
    let bound = radial_bound(&m)?;
    let ex = extract_radial(&m, bound.xi_hat)?;
    let um = uniform_m(&m, &bound, &ex)?;
    let f = &m.field;
    Ok(Mollified {
        report: MollifyReport {
            eta,
            xi_hat: bound.xi_hat,
            xi_target: bound.xi_target,
            lipschitz: f.lipschitz,
            m_lower: um.m_lower,
            m_lower_xi_hat: um.m_lower_xi_hat,
            grid_m: um.grid_m,
            max_gradient: ex.max_gradient,
            gradient_bound: ex.gradient_bound,
            gradient_ok: ex.gradient_ok,
            sup_deviation: ex.sup_deviation,
            margin: f.margin,
            min_f: f.min_f,
            max_f: f.max_f,
        },
        f_eta: ex.f_eta,
    })
}

//! Closed Reeb orbit classes of toric domains and Floer-generator counts.
//!
//! An orbit class on a face `Δ` is an integer rotation vector `p ∈ ℤ^d`
//! whose direction is a value of the Gauss map `G_Δ` at an interior point
//! `θ`; its action is `‖p‖·T(θ)`, which for convex domains is also the
//! support value `max ⟨p, x⟩` over `Ω ∩ V_Δ`. Iterates are separate classes.
//! Each class contributes `2^d` generators and the interior adds one more.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barcode::{entropy_estimates, GrowthSamples};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalize, sigma_min, solve, tangent_frame};
use crate::simplex::{compositions, face_grid, for_each_lattice_point, grid_neighbors};
use crate::toric_geometry::{m_bounds, Convexity, Descriptor, Face, MBounds, ToricDomain};

/// One invariant torus of closed orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitClass {
    pub face: Face,
    pub p: Vec<i64>,
    pub action: f64,
    pub primitive: bool,
    /// The maximizer or Gauss preimage is not unique or not regular.
    pub degenerate: bool,
    pub theta: Option<Vec<f64>>,
}

/// How rotation vectors are matched to boundary points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Support maximization for convex domains, Gauss inversion otherwise.
    #[default]
    Auto,
    Support,
    Gauss,
}

/// Numerical settings for enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumConfig {
    pub action_dedup: f64,
    pub angular_dedup: f64,
    pub newton_residual: f64,
    pub max_newton_iter: usize,
    /// Grid resolution for `m_bounds`.
    pub m_resolution: usize,
    /// Multi-start grid resolution for Gauss inversion (per face edge).
    pub gauss_grid: usize,
    /// Smallest singular value of the Gauss-map Jacobian counted as regular.
    pub singular_tol: f64,
    pub route: Route,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            action_dedup: 1e-9,
            angular_dedup: 1e-8,
            newton_residual: 1e-12,
            max_newton_iter: 60,
            m_resolution: 400,
            gauss_grid: 0,
            singular_tol: 1e-7,
            route: Route::Auto,
        }
    }
}

impl EnumConfig {
    fn gauss_resolution(&self, d: usize) -> usize {
        if self.gauss_grid > 0 {
            return self.gauss_grid.max(d + 1);
        }
        match d {
            2 => 256,
            3 => 48,
            _ => 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.action_dedup, self.angular_dedup, self.newton_residual, self.singular_tol];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_newton_iter == 0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`support_action`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupportResult {
    pub action: f64,
    /// Unit direction of the maximizer; absent when the maximizing set is a
    /// whole flat piece.
    pub theta: Option<Vec<f64>>,
    pub unique: bool,
    /// The maximizer lies in the open face.
    pub interior: bool,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn is_primitive(p: &[i64]) -> bool {
    p.iter().fold(0, |g, &x| gcd(g, x)) == 1
}

fn pnorm_dual(w: &[f64], p: f64) -> f64 {
    let q = p / (p - 1.0);
    w.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Closed-form support data, when the descriptor has one.
fn support_closed_form(desc: &Descriptor, face: &Face, p: &[f64], n: usize) -> Option<SupportResult> {
    let idx = face.indices();
    match desc {
        Descriptor::QuarterBall { radius } => {
            let interior = p.iter().all(|&x| x > 0.0);
            let pos: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
            Some(SupportResult {
                action: radius * norm(&pos),
                theta: interior.then(|| normalize(&face.embed(p, n))),
                unique: true,
                interior,
            })
        }
        Descriptor::Ellipsoid { a } => {
            let vals: Vec<f64> = idx.iter().zip(p).map(|(&i, &x)| x * a[i]).collect();
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ties = vals.iter().filter(|&&v| (v - max).abs() <= 1e-12 * max.abs()).count();
            let interior = max > 0.0 && ties == vals.len();
            Some(SupportResult {
                action: max.max(0.0),
                theta: None,
                unique: vals.len() == 1 || ties == 1,
                interior,
            })
        }
        Descriptor::PNorm { r, p: expo } => {
            let w: Vec<f64> = idx.iter().zip(p).map(|(&i, &x)| x * r[i]).collect();
            let interior = w.iter().all(|&x| x > 0.0);
            let wpos: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
            let h = pnorm_dual(&wpos, *expo);
            let theta = interior.then(|| {
                let q = expo / (expo - 1.0);
                let x: Vec<f64> = idx
                    .iter()
                    .zip(&w)
                    .map(|(&i, &wi)| r[i] * (wi / h).powf(q - 1.0))
                    .collect();
                normalize(&face.embed(&x, n))
            });
            Some(SupportResult {
                action: h,
                theta,
                unique: true,
                interior,
            })
        }
        Descriptor::Scaled { inner, factor } => support_closed_form(inner, face, p, n).map(|mut s| {
            s.action *= factor;
            s
        }),
        _ => None,
    }
}

/// Whether interior maximizers force all components of `p` to be positive.
fn needs_positive(desc: &Descriptor) -> bool {
    match desc {
        Descriptor::QuarterBall { .. } | Descriptor::Ellipsoid { .. } | Descriptor::PNorm { .. } => true,
        Descriptor::Scaled { inner, .. } => needs_positive(inner),
        _ => false,
    }
}

/// `⟨p, u⟩ / N(u)` on the flat simplex of the face.
fn support_objective(d: &ToricDomain, face: &Face, p: &[f64], u: &[f64]) -> f64 {
    let x = face.embed(u, d.n());
    dot(p, u) / d.gauge(&x)
}

/// Generic support maximization: the objective is quasiconcave on the
/// simplex, so a compass search started at the best grid point finds the
/// global maximum.
fn support_generic(d: &ToricDomain, face: &Face, p: &[f64]) -> SupportResult {
    let dim = face.dim();
    let res = match dim {
        1 => 1,
        2 => 64,
        3 => 24,
        _ => 10,
    };
    let mut best_u = vec![0.0; dim];
    let mut best = f64::NEG_INFINITY;
    for k in compositions(dim, res, false) {
        let u: Vec<f64> = k.iter().map(|&v| v as f64 / res as f64).collect();
        let v = support_objective(d, face, p, &u);
        if v > best {
            best = v;
            best_u = u;
        }
    }
    let mut step = 1.0 / res as f64;
    while step > 1e-13 {
        let mut improved = false;
        for i in 0..dim {
            for j in 0..dim {
                if i == j || best_u[j] <= 0.0 {
                    continue;
                }
                let t = step.min(best_u[j]);
                let mut u = best_u.clone();
                u[i] += t;
                u[j] -= t;
                if t == best_u[j] {
                    u[j] = 0.0;
                }
                let v = support_objective(d, face, p, &u);
                if v > best {
                    best = v;
                    best_u = u;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let interior = best > 0.0 && best_u.iter().all(|&x| x > 1e-9);
    // A flat piece of the boundary shows up as a probe that loses nothing.
    let mut unique = true;
    if interior {
        'probe: for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                let t = 1e-2f64.min(best_u[j]);
                let mut u = best_u.clone();
                u[i] += t;
                u[j] -= t;
                if (best - support_objective(d, face, p, &u)).abs() <= 1e-12 * best.abs() {
                    unique = false;
                    break 'probe;
                }
            }
        }
    }
    SupportResult {
        action: best.max(0.0),
        theta: (interior && unique).then(|| normalize(&face.embed(&best_u, d.n()))),
        unique,
        interior,
    }
}

/// `max ⟨p, x⟩` over the boundary of `Ω` in the closed face `Δ̄`.
pub fn support_action(d: &ToricDomain, face: &Face, p: &[i64]) -> Result<SupportResult> {
    if d.class().convexity != Convexity::Convex {
        return Err(Error::Unsupported(
            "support maximization needs a convex domain; use Gauss inversion".into(),
        ));
    }
    if p.len() != face.dim() || p.iter().all(|&x| x == 0) {
        return Err(Error::InvalidParameter(format!("bad rotation vector {p:?} for face {face}")));
    }
    if face.indices().iter().any(|&i| i >= d.n()) {
        return Err(Error::InvalidParameter(format!("face {face} out of range")));
    }
    let pf: Vec<f64> = p.iter().map(|&x| x as f64).collect();
    if face.dim() == 1 {
        let i = face.indices()[0];
        let mut e = vec![0.0; d.n()];
        e[i] = 1.0;
        let f = 1.0 / d.gauge(&e);
        let interior = pf[0] > 0.0;
        return Ok(SupportResult {
            action: (pf[0] * f).max(0.0),
            theta: interior.then_some(e),
            unique: true,
            interior,
        });
    }
    Ok(support_closed_form(d.descriptor(), face, &pf, d.n()).unwrap_or_else(|| support_generic(d, face, &pf)))
}

/// Precomputed multi-start data for Gauss inversion on one face.
struct FaceCache {
    face: Face,
    points: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
    cos_cover: f64,
    /// Componentwise image range widened by the cover angle.
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl FaceCache {
    fn new(d: &ToricDomain, face: &Face, cfg: &EnumConfig) -> Result<Self> {
        let dim = face.dim();
        let res = cfg.gauss_resolution(dim);
        let points = face_grid(d.n(), face.indices(), res, true);
        let images: Vec<Vec<f64>> = points
            .iter()
            .map(|t| d.normal_and_period(face, t).map(|x| x.0))
            .collect::<Result<_>>()?;
        let mut cover: f64 = 0.0;
        for (a, b) in grid_neighbors(dim, res, true) {
            cover = cover.max(crate::linalg::angle(&images[a], &images[b]));
        }
        let cover = (1.5 * cover).max(1e-9);
        let n = d.n();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for g in &images {
            for i in 0..n {
                lo[i] = lo[i].min(g[i]);
                hi[i] = hi[i].max(g[i]);
            }
        }
        for i in 0..n {
            lo[i] -= cover;
            hi[i] += cover;
        }
        Ok(FaceCache {
            face: face.clone(),
            points,
            images,
            cos_cover: cover.cos(),
            lo,
            hi,
        })
    }

    fn may_contain(&self, v: &[f64]) -> bool {
        v.iter().enumerate().all(|(i, &x)| x >= self.lo[i] && x <= self.hi[i])
    }

    /// Grid points whose image is within the cover angle of `v`, nearest first.
    fn starts(&self, v: &[f64]) -> Vec<usize> {
        let mut s: Vec<(f64, usize)> = self
            .images
            .iter()
            .enumerate()
            .filter_map(|(k, g)| {
                let c = dot(g, v);
                (c >= self.cos_cover).then_some((c, k))
            })
            .collect();
        s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        s.into_iter().map(|x| x.1).collect()
    }
}

/// Solutions of `G_Δ(θ) = v`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussPreimages {
    pub thetas: Vec<Vec<f64>>,
    /// Smallest singular value of the Gauss-map Jacobian at each solution.
    pub sigmas: Vec<f64>,
    /// Some start stalled inside the face without converging.
    pub incomplete: bool,
}

/// Residual of `G(θ) = v` in an orthonormal frame of `v^⊥` within the face.
fn gauss_residual(d: &ToricDomain, face: &Face, theta: &[f64], wframe: &[Vec<f64>]) -> Result<Vec<f64>> {
    let g = d.normal_and_period(face, theta)?.0;
    Ok(wframe.iter().map(|w| dot(&g, w)).collect())
}

fn chart_point(theta: &[f64], frame: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut x = theta.to_vec();
    for (t, &yk) in frame.iter().zip(y) {
        for (xi, ti) in x.iter_mut().zip(t) {
            *xi += yk * ti;
        }
    }
    normalize(&x)
}

/// Jacobian of the residual in the tangent chart at `theta`, by central differences.
fn gauss_jacobian(d: &ToricDomain, face: &Face, theta: &[f64], wframe: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let frame = tangent_frame(theta, face.indices());
    let k = frame.len();
    let h = 1e-6;
    let mut jac = vec![vec![0.0; k]; k];
    for l in 0..k {
        let mut y = vec![0.0; k];
        y[l] = h;
        let rp = gauss_residual(d, face, &chart_point(theta, &frame, &y), wframe)?;
        y[l] = -h;
        let rm = gauss_residual(d, face, &chart_point(theta, &frame, &y), wframe)?;
        for r in 0..k {
            jac[r][l] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

enum NewtonOutcome {
    Converged(Vec<f64>),
    LeftFace,
    Stalled,
}

/// A stall pressed against the face boundary means the iterate is escaping
/// through it, where the Gauss map flattens out.
fn stall(face: &Face, theta: &[f64]) -> NewtonOutcome {
    if face.indices().iter().any(|&i| theta[i] < 1e-3) {
        NewtonOutcome::LeftFace
    } else {
        NewtonOutcome::Stalled
    }
}

fn newton_gauss(d: &ToricDomain, face: &Face, v: &[f64], start: &[f64], cfg: &EnumConfig) -> NewtonOutcome {
    let wframe = tangent_frame(v, face.indices());
    let mut theta = start.to_vec();
    let dist = |t: &[f64]| -> Option<f64> {
        let g = d.normal_and_period(face, t).ok()?.0;
        if dot(&g, v) <= 0.0 {
            return Some(2.0);
        }
        Some(norm(&g.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>()))
    };
    let Some(mut err) = dist(&theta) else {
        return NewtonOutcome::Stalled;
    };
    for _ in 0..=cfg.max_newton_iter {
        if err <= cfg.newton_residual {
            return NewtonOutcome::Converged(theta);
        }
        let (Ok(r), Ok(jac)) = (
            gauss_residual(d, face, &theta, &wframe),
            gauss_jacobian(d, face, &theta, &wframe),
        ) else {
            return stall(face, &theta);
        };
        let frame = tangent_frame(&theta, face.indices());
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let Some(step) = solve(&jac, &neg) else {
            return stall(face, &theta);
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let y: Vec<f64> = step.iter().map(|s| alpha * s).collect();
            let cand = chart_point(&theta, &frame, &y);
            if !face.contains_open(&cand, 0.0) {
                alpha *= 0.5;
                if alpha < 1e-3 {
                    return NewtonOutcome::LeftFace;
                }
                continue;
            }
            match dist(&cand) {
                Some(e) if e < err => {
                    theta = cand;
                    err = e;
                    accepted = true;
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        if !accepted {
            return if err <= cfg.newton_residual * 1e3 {
                // Rounding floor reached just above the target.
                NewtonOutcome::Converged(theta)
            } else {
                stall(face, &theta)
            };
        }
    }
    if err <= cfg.newton_residual {
        NewtonOutcome::Converged(theta)
    } else {
        stall(face, &theta)
    }
}

/// A singular solution hugging the face boundary whose normal is already
/// attained on the boundary is a limit of the Gauss map, not a preimage.
fn boundary_limit(d: &ToricDomain, face: &Face, theta: &[f64], v: &[f64]) -> bool {
    const NEAR: f64 = 1e-3;
    if !face.indices().iter().any(|&i| theta[i] < NEAR) {
        return false;
    }
    let proj: Vec<f64> = theta.iter().map(|&x| if x < NEAR { 0.0 } else { x }).collect();
    let proj = normalize(&proj);
    match d.normal_and_period(face, &proj) {
        Ok((g, _)) => norm(&g.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-8,
        Err(_) => false,
    }
}

const CONVEX_STARTS: usize = 8;

fn invert_with_cache(
    d: &ToricDomain,
    cache: &FaceCache,
    v: &[f64],
    cfg: &EnumConfig,
    first_only: bool,
) -> Result<GaussPreimages> {
    let face = &cache.face;
    let wframe = tangent_frame(v, face.indices());
    let mut thetas: Vec<Vec<f64>> = Vec::new();
    let mut sigmas = Vec::new();
    let mut stalled = false;
    // The Gauss map of a convex domain is injective, so a few nearby starts suffice.
    let limit = if first_only { CONVEX_STARTS } else { usize::MAX };
    for k in cache.starts(v).into_iter().take(limit) {
        match newton_gauss(d, face, v, &cache.points[k], cfg) {
            NewtonOutcome::Converged(t) => {
                if thetas
                    .iter()
                    .any(|s| crate::linalg::angle(s, &t) <= cfg.angular_dedup)
                {
                    continue;
                }
                let jac = gauss_jacobian(d, face, &t, &wframe)?;
                let sig = sigma_min(&jac);
                if sig < cfg.singular_tol && boundary_limit(d, face, &t, v) {
                    continue;
                }
                sigmas.push(sig);
                thetas.push(t);
                if first_only {
                    break;
                }
            }
            NewtonOutcome::LeftFace => {}
            NewtonOutcome::Stalled => stalled = true,
        }
    }
    Ok(GaussPreimages {
        incomplete: stalled && thetas.is_empty(),
        thetas,
        sigmas,
    })
}

/// All solutions of `G_Δ(θ) = v` in the open face, by multi-start Newton.
pub fn invert_gauss(d: &ToricDomain, face: &Face, v: &[f64], cfg: &EnumConfig) -> Result<GaussPreimages> {
    if !d.class().differentiable {
        return Err(Error::Unsupported("Gauss inversion needs a differentiable radial function".into()));
    }
    if face.dim() < 2 {
        return Err(Error::InvalidParameter("Gauss inversion needs a face of dimension ≥ 2".into()));
    }
    if v.len() != d.n() || (norm(v) - 1.0).abs() > 1e-9 || !face.embed(&face.restrict(v), d.n()).eq(v) {
        return Err(Error::Domain(format!("v = {v:?} is not a unit vector of the face subspace")));
    }
    let cache = FaceCache::new(d, face, cfg)?;
    invert_with_cache(d, &cache, v, cfg, false)
}

/// Enumerated spectrum up to `s_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub s_max: f64,
    pub classes: Vec<OrbitClass>,
    pub warnings: Vec<String>,
    pub bounds: MBounds,
}

fn resolve_route(d: &ToricDomain, route: Route) -> Route {
    match route {
        Route::Auto if d.class().convexity == Convexity::Convex => Route::Support,
        Route::Auto => Route::Gauss,
        r => r,
    }
}

fn axis_classes(d: &ToricDomain, face: &Face, s_max: f64) -> Vec<OrbitClass> {
    let i = face.indices()[0];
    let mut e = vec![0.0; d.n()];
    e[i] = 1.0;
    let f = 1.0 / d.gauge(&e);
    let kmax = (s_max / f).floor() as i64;
    (1..=kmax)
        .map(|k| OrbitClass {
            face: face.clone(),
            p: vec![k],
            action: k as f64 * f,
            primitive: k == 1,
            degenerate: false,
            theta: Some(e.clone()),
        })
        .filter(|c| c.action <= s_max)
        .collect()
}

fn enumerate_face(
    d: &ToricDomain,
    face: &Face,
    s_max: f64,
    m_delta: f64,
    route: Route,
    cfg: &EnumConfig,
) -> Result<(Vec<OrbitClass>, Vec<String>)> {
    if face.dim() == 1 {
        return Ok((axis_classes(d, face, s_max), Vec::new()));
    }
    let n = d.n();
    let radius = s_max / m_delta;
    let positive = needs_positive(d.descriptor()) && route == Route::Support;
    let cache = if route == Route::Gauss || d.class().differentiable {
        Some(FaceCache::new(d, face, cfg)?)
    } else {
        None
    };
    let mut candidates: Vec<Vec<i64>> = Vec::new();
    for_each_lattice_point(face.dim(), radius, |p| {
        if positive && p.iter().any(|&x| x <= 0) {
            return;
        }
        if let Some(c) = &cache {
            let pf: Vec<f64> = p.iter().map(|&x| x as f64).collect();
            if !c.may_contain(&normalize(&face.embed(&pf, n))) {
                return;
            }
        }
        candidates.push(p.to_vec());
    });

    let convex = d.class().convexity == Convexity::Convex;
    let results: Vec<Result<(Vec<OrbitClass>, Option<String>)>> = candidates
        .par_iter()
        .map(|p| {
            let pf: Vec<f64> = p.iter().map(|&x| x as f64).collect();
            match route {
                Route::Gauss => {
                    let cache = cache.as_ref().expect("cache built for Gauss route");
                    let v = normalize(&face.embed(&pf, n));
                    let pre = invert_with_cache(d, cache, &v, cfg, convex)?;
                    let warning = pre
                        .incomplete
                        .then(|| format!("face {face}, p = {p:?}: Newton stalled from every start"));
                    let pn = norm(&pf);
                    let mut out = Vec::new();
                    let mut degenerate_action = None;
                    for (t, &sig) in pre.thetas.iter().zip(&pre.sigmas) {
                        let action = pn * d.normal_and_period(face, t)?.1;
                        if sig < cfg.singular_tol {
                            degenerate_action.get_or_insert(action);
                        } else if action <= s_max {
                            out.push(OrbitClass {
                                face: face.clone(),
                                p: p.clone(),
                                action,
                                primitive: is_primitive(p),
                                degenerate: false,
                                theta: Some(t.clone()),
                            });
                        }
                    }
                    if let Some(action) = degenerate_action.filter(|&a| a <= s_max) {
                        out.push(OrbitClass {
                            face: face.clone(),
                            p: p.clone(),
                            action,
                            primitive: is_primitive(p),
                            degenerate: true,
                            theta: None,
                        });
                    }
                    Ok((out, warning))
                }
                _ => {
                    let s = support_action(d, face, p)?;
                    if s.interior && s.action <= s_max {
                        Ok((
                            vec![OrbitClass {
                                face: face.clone(),
                                p: p.clone(),
                                action: s.action,
                                primitive: is_primitive(p),
                                degenerate: !s.unique,
                                theta: s.theta,
                            }],
                            None,
                        ))
                    } else {
                        Ok((Vec::new(), None))
                    }
                }
            }
        })
        .collect();
    let mut classes = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let (c, w) = r?;
        classes.extend(c);
        warnings.extend(w);
    }
    Ok((classes, warnings))
}

/// Enumerates orbit classes with action ≤ `s_max` using the given face constants.
pub fn enumerate_with_bounds(d: &ToricDomain, s_max: f64, bounds: &MBounds, cfg: &EnumConfig) -> Result<Spectrum> {
    cfg.validate()?;
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("s_max must be positive, got {s_max}")));
    }
    let route = resolve_route(d, cfg.route);
    if route == Route::Support && d.class().convexity != Convexity::Convex {
        return Err(Error::Unsupported("support route needs a convex domain".into()));
    }
    if route == Route::Gauss && !d.class().differentiable {
        return Err(Error::Unsupported("Gauss route needs a differentiable radial function".into()));
    }
    let mut classes = Vec::new();
    let mut warnings = Vec::new();
    for face in d.faces() {
        let m_delta = bounds
            .for_face(&face)
            .map(|c| c.m_delta)
            .unwrap_or(bounds.m);
        let (c, w) = enumerate_face(d, &face, s_max, m_delta, route, cfg)?;
        classes.extend(c);
        warnings.extend(w);
    }
    classes.sort_by(|a, b| {
        (a.face.dim(), &a.face, &a.p)
            .cmp(&(b.face.dim(), &b.face, &b.p))
            .then(a.action.total_cmp(&b.action))
    });
    Ok(Spectrum {
        s_max,
        classes,
        warnings,
        bounds: bounds.clone(),
    })
}

/// Orbit classes with action ≤ `s_max`, iterates included.
pub fn enumerate_spectrum(d: &ToricDomain, s_max: f64, cfg: &EnumConfig) -> Result<Spectrum> {
    let bounds = m_bounds(d, cfg.m_resolution)?;
    enumerate_with_bounds(d, s_max, &bounds, cfg)
}

impl Spectrum {
    /// CSV `face,p,action,primitive,degenerate`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["face", "p", "action", "primitive", "degenerate"])?;
        for c in &self.classes {
            let p: Vec<String> = c.p.iter().map(|x| x.to_string()).collect();
            w.write_record([
                c.face.to_string(),
                p.join(";"),
                format!("{:.16e}", c.action),
                c.primitive.to_string(),
                c.degenerate.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    /// Sorted distinct actions, merged at the dedup tolerance.
    pub fn distinct_actions(&self, tol: f64) -> Vec<f64> {
        let mut a: Vec<f64> = self.classes.iter().map(|c| c.action).collect();
        a.sort_by(f64::total_cmp);
        a.dedup_by(|x, y| (*x - *y).abs() <= tol);
        a
    }
}

/// Generator count `1 + Σ 2^d` over classes with action ≤ `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCount {
    pub s: f64,
    pub per_face: Vec<(Face, u64)>,
    pub total_generators: u64,
    pub degenerate_classes: u64,
    pub caveats: Vec<String>,
}

/// Count over classes with action ≤ `s`, without the spectral check.
pub fn count_classes(classes: &[OrbitClass], n: usize, s: f64) -> GeneratorCount {
    let mut per: BTreeMap<(usize, Face), u64> = BTreeMap::new();
    for f in Face::all(n) {
        per.insert((f.dim(), f), 0);
    }
    let mut total = 1u64;
    let mut degenerate = 0;
    for c in classes.iter().filter(|c| c.action <= s) {
        *per.entry((c.face.dim(), c.face.clone())).or_insert(0) += 1;
        total += 1u64 << c.face.dim();
        if c.degenerate {
            degenerate += 1;
        }
    }
    let caveats = if degenerate > 0 {
        vec![format!(
            "{degenerate} degenerate classes counted with weight 2^d; the splitting count applies verbatim only after strictification"
        )]
    } else {
        Vec::new()
    };
    GeneratorCount {
        s,
        per_face: per.into_iter().map(|((_, f), c)| (f, c)).collect(),
        total_generators: total,
        degenerate_classes: degenerate,
        caveats,
    }
}

/// Number of generators at a level `s` outside the action spectrum.
pub fn generator_count(d: &ToricDomain, s: f64, cfg: &EnumConfig) -> Result<GeneratorCount> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
    }
    let tol = cfg.action_dedup;
    let spec = enumerate_spectrum(d, s + 2.0 * tol, cfg)?;
    if let Some(c) = spec.classes.iter().find(|c| (c.action - s).abs() <= tol) {
        return Err(Error::SpectralValue { s, action: c.action });
    }
    let mut out = count_classes(&spec.classes, d.n(), s);
    out.caveats.extend(spec.warnings);
    Ok(out)
}

/// Volume of the unit `d`-ball.
fn unit_ball_volume(d: usize) -> f64 {
    let mut v = [1.0, 2.0];
    let mut vol = if d.is_multiple_of(2) { v[0] } else { v[1] };
    let mut k = if d.is_multiple_of(2) { 0 } else { 1 };
    while k < d {
        k += 2;
        vol *= 2.0 * std::f64::consts::PI / k as f64;
        v = [vol, vol];
    }
    let _ = v;
    vol
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The unit-ball volume overestimate `C` (covers every dimension ≤ 12).
pub const BALL_VOLUME_BOUND: f64 = 6.0;

/// `C_0` for the generator bound `C_n s^n + C_0` in dimension `n`.
///
/// With `t = s/m` the lattice count gives `N(s) ≤ 1 + Σ_d C(n,d) 2^d
/// vol_d (t + √d/2)^d`, and `C_0` is the supremum over `t ≥ 0` of that
/// polynomial minus `2ⁿ(2ⁿ−1)·C·tⁿ`. It does not depend on `m`.
pub fn generator_bound_c0(n: usize) -> f64 {
    let cn_scaled = (1u64 << n) as f64 * ((1u64 << n) - 1) as f64 * BALL_VOLUME_BOUND;
    // Polynomial coefficients in t.
    let mut coef = vec![0.0; n + 1];
    coef[0] = 1.0;
    for dd in 1..=n {
        let w = binom(n, dd) * (1u64 << dd) as f64 * unit_ball_volume(dd);
        let c = (dd as f64).sqrt() / 2.0;
        // (t + c)^d = Σ_k C(d,k) c^{d−k} t^k
        for k in 0..=dd {
            coef[k] += w * binom(dd, k) * c.powi((dd - k) as i32);
        }
    }
    coef[n] -= cn_scaled;
    let q = |t: f64| coef.iter().rev().fold(0.0, |acc, c| acc * t + c);
    let dq = |t: f64| {
        coef.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    };
    // Beyond the Cauchy bound of q' the polynomial is decreasing.
    let lead = -coef[n] * n as f64;
    let tmax = 1.0
        + (1..n)
            .map(|k| (k as f64 * coef[k]).abs() / lead)
            .fold(0.0, f64::max);
    let samples = 200_000;
    let h = tmax / samples as f64;
    let mut best = f64::NEG_INFINITY;
    let mut slope: f64 = 0.0;
    for i in 0..=samples {
        let t = i as f64 * h;
        best = best.max(q(t));
        slope = slope.max(dq(t).abs());
    }
    best + slope * h
}

/// Certificate for `count(s) ≤ C_n sⁿ + C_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub m_used: f64,
    pub c_n: f64,
    pub c_0: f64,
    pub checked_up_to: f64,
    pub ok: bool,
    /// `(s, count, bound)` for each checked level.
    pub samples: Vec<(f64, u64, f64)>,
    /// Slope of `log₂ count` against `log₂ s` over the checked levels.
    pub fitted_degree: Option<f64>,
}

/// Checks the bound at the given levels with an explicit `m`.
///
/// Counts include classes with action exactly `s`, so they dominate the
/// count at every non-spectral level `≤ s`.
pub fn certify_with_m(d: &ToricDomain, s_list: &[f64], bounds: &MBounds, cfg: &EnumConfig) -> Result<BoundCertificate> {
    let mut levels = s_list.to_vec();
    levels.sort_by(f64::total_cmp);
    let Some(&s_top) = levels.last() else {
        return Err(Error::InvalidParameter("empty list of levels".into()));
    };
    let n = d.n();
    let m = bounds.m;
    let c_n = (1u64 << n) as f64 * ((1u64 << n) - 1) as f64 * BALL_VOLUME_BOUND * m.powi(-(n as i32));
    let c_0 = generator_bound_c0(n);
    let spec = enumerate_with_bounds(d, s_top, bounds, cfg)?;
    let mut samples = Vec::new();
    let mut ok = true;
    for &s in &levels {
        let count = count_classes(&spec.classes, n, s).total_generators;
        let bound = c_n * s.powi(n as i32) + c_0;
        ok &= (count as f64) <= bound;
        samples.push((s, count, bound));
    }
    let fitted_degree = GrowthSamples::new(samples.iter().map(|&(s, c, _)| (s, c)).collect())
        .ok()
        .and_then(|g| entropy_estimates(&g, (levels[0], s_top)).ok())
        .map(|e| e.poly_degree);
    Ok(BoundCertificate {
        m_used: m,
        c_n,
        c_0,
        checked_up_to: s_top,
        ok,
        samples,
        fitted_degree,
    })
}

/// `C_n = 2ⁿ(2ⁿ−1)·C·m^{−n}` with `m` from [`m_bounds`], checked at `s_list`.
pub fn certify_bound(d: &ToricDomain, s_list: &[f64], cfg: &EnumConfig) -> Result<BoundCertificate> {
    let class = d.class();
    if !(class.smooth || class.analytic) {
        return Err(Error::Unsupported(
            "the bound needs a smooth or real-analytic domain; mollify non-smooth domains first".into(),
        ));
    }
    let bounds = m_bounds(d, cfg.m_resolution)?;
    certify_with_m(d, s_list, &bounds, cfg)
}

/// Outcome of [`regularize_analytic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    /// Rotation of `V_Δ` (in face coordinates) for every face of dimension ≥ 2.
    pub rotations: Vec<(Face, Vec<Vec<f64>>)>,
    pub is_identity: bool,
    /// Largest number of Gauss preimages seen for one direction.
    pub fiber_max: usize,
    pub min_sigma: f64,
    pub attempts: usize,
}

fn skew_rotation(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut a = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let x = scale * rng.gen_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = -x;
        }
    }
    let r = a.exp();
    (0..dim).map(|i| (0..dim).map(|j| r[(i, j)]).collect()).collect()
}

/// Searches small rotations `R_Δ` of the face subspaces such that every
/// rational direction with `‖p‖ ≤ s_max/m_Δ` is a regular value of the
/// perturbed Gauss maps `R_Δ ∘ G_Δ`. Faces are handled in order of
/// dimension; the identity is tried first.
pub fn regularize_analytic(
    d: &ToricDomain,
    s_max: f64,
    seed: u64,
    threshold: f64,
    budget: usize,
    cfg: &EnumConfig,
) -> Result<Regularization> {
    if !d.class().analytic {
        return Err(Error::InvalidParameter("regularization search needs a real-analytic domain".into()));
    }
    let bounds = m_bounds(d, cfg.m_resolution)?;
    let faces: Vec<Face> = d.faces().into_iter().filter(|f| f.dim() >= 2).collect();
    let caches: Vec<FaceCache> = faces.iter().map(|f| FaceCache::new(d, f, cfg)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d.n();
    let mut worst: (f64, Vec<i64>) = (f64::INFINITY, Vec::new());
    for attempt in 0..=budget {
        let rotations: Vec<Vec<Vec<f64>>> = faces
            .iter()
            .map(|f| {
                if attempt == 0 {
                    (0..f.dim())
                        .map(|i| (0..f.dim()).map(|j| f64::from(u8::from(i == j))).collect())
                        .collect()
                } else {
                    skew_rotation(&mut rng, f.dim(), 0.02 * 1.25f64.powi(attempt as i32 - 1))
                }
            })
            .collect();
        let mut min_sigma = f64::INFINITY;
        let mut fiber_max = 0;
        let mut worst_here: Vec<i64> = Vec::new();
        for ((face, cache), rot) in faces.iter().zip(&caches).zip(&rotations) {
            let m_delta = bounds.for_face(face).map_or(bounds.m, |c| c.m_delta);
            let mut dirs: Vec<Vec<i64>> = Vec::new();
            for_each_lattice_point(face.dim(), s_max / m_delta, |p| dirs.push(p.to_vec()));
            for p in dirs {
                let pf: Vec<f64> = p.iter().map(|&x| x as f64).collect();
                let u = normalize(&pf);
                // G̃ = R∘G, so G̃(θ) = u iff G(θ) = Rᵀu.
                let back: Vec<f64> = (0..face.dim())
                    .map(|j| (0..face.dim()).map(|i| rot[i][j] * u[i]).sum())
                    .collect();
                let v = face.embed(&back, n);
                if !cache.may_contain(&v) {
                    continue;
                }
                let pre = invert_with_cache(d, cache, &v, cfg, false)?;
                fiber_max = fiber_max.max(pre.thetas.len());
                for &s in &pre.sigmas {
                    if s < min_sigma {
                        min_sigma = s;
                        worst_here = p.clone();
                    }
                }
            }
        }
        if min_sigma >= threshold {
            return Ok(Regularization {
                rotations: faces.into_iter().zip(rotations).collect(),
                is_identity: attempt == 0,
                fiber_max,
                min_sigma,
                attempts: attempt + 1,
            });
        }
        if min_sigma < worst.0 || worst.1.is_empty() {
            worst = (min_sigma, worst_here);
        }
    }
    Err(Error::NoRegularPerturbation {
        direction: worst.1,
        sigma: worst.0,
    })
}

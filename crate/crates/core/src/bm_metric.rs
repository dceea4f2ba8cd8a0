//! Banach–Mazur upper bounds between radial domains and ladder estimates of `b_ε`.
//!
//! For radial domains `W_f, W_g` the inclusions `e^{-d} W_f ⊂ W_g ⊂ e^{d} W_f`
//! with `d = max |ln(f/g)|` give `d_SBM ≤ d`, and the persistence modules are
//! then `s(e^d − 1)`-interleaved up to action `s`. The isotopy condition on
//! the inclusions holds for radial interpolation and is not checked.

use serde::{Deserialize, Serialize};

use crate::barcode::{bottleneck_distance, count_long_bars, Barcode};
use crate::error::{Error, Result};
use crate::simplex::{face_grid, grid_neighbors};
use crate::toric_geometry::ToricDomain;

/// Upper bounds derived from the log-ratio of two radial functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMReport {
    /// Certified `sup |ln(f/g)|`: grid maximum plus the largest jump between grid neighbours.
    pub log_ratio: f64,
    pub grid_max: f64,
    #[serde(rename = "dSBM_upper")]
    pub dsbm_upper: f64,
    pub resolution: usize,
}

impl BMReport {
    /// `s(e^{d} − 1)` with `d = dsbm_upper`.
    pub fn interleaving_upper(&self, s: f64) -> Result<f64> {
        interleaving_bound(s, self.dsbm_upper)
    }
}

/// `max |ln(f/g)|` over the closed simplex with a Lipschitz margin.
pub fn log_ratio_bound(f: &ToricDomain, g: &ToricDomain, resolution: usize) -> Result<BMReport> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be ≥ 2, got {resolution}")));
    }
    if f.n() != g.n() {
        return Err(Error::InvalidParameter(format!("dimensions differ: {} vs {}", f.n(), g.n())));
    }
    let n = f.n();
    let all: Vec<usize> = (0..n).collect();
    let pts = face_grid(n, &all, resolution, false);
    // f/g = N_g/N_f on unit vectors.
    let vals: Vec<f64> = pts.iter().map(|t| (g.gauge(t) / f.gauge(t)).ln()).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("radial functions must be finite and positive".into()));
    }
    let grid_max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let jump = grid_neighbors(n, resolution, false)
        .into_iter()
        .map(|(a, b)| (vals[a] - vals[b]).abs())
        .fold(0.0f64, f64::max);
    // A jump of a few ulps between equal values is rounding, not slope.
    let margin = if jump <= 8.0 * f64::EPSILON * grid_max.max(1.0) { 0.0 } else { jump };
    let log_ratio = grid_max + margin;
    Ok(BMReport {
        log_ratio,
        grid_max,
        dsbm_upper: log_ratio,
        resolution,
    })
}

/// `s(e^{d} − 1)`: interleaving radius up to action `s`.
pub fn interleaving_bound(s: f64, d: f64) -> Result<f64> {
    if !(s >= 0.0 && d >= 0.0 && s.is_finite() && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("need s, d ≥ 0, got s = {s}, d = {d}")));
    }
    Ok(s * d.exp_m1())
}

/// One rung of an approximation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub label: String,
    /// Upper bound on the distance to the target domain.
    pub dsbm_upper: f64,
    /// `b_ε(U, s)` or an upper bound for it.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationLadder {
    pub rungs: Vec<LadderRung>,
}

impl ApproximationLadder {
    /// Whether the distance bounds decrease along the ladder.
    pub fn is_monotone(&self) -> bool {
        self.rungs.windows(2).all(|w| w[1].dsbm_upper <= w[0].dsbm_upper)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Tail-infimum estimate of a `liminf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiminfReport {
    pub value: f64,
    pub stabilized: bool,
    /// `inf` of each tail of length at least two.
    pub tail_infima: Vec<f64>,
    pub monotone_ladder: bool,
}

/// `liminf` of the rung values, estimated by the infimum of the last two.
///
/// Stabilized when the minima of the last three consecutive pairs (two for
/// a ladder of three rungs) agree within `tol`.
pub fn beps_liminf(ladder: &ApproximationLadder, tol: f64) -> Result<LiminfReport> {
    let v: Vec<f64> = ladder.rungs.iter().map(|r| r.value).collect();
    if v.len() < 3 {
        return Err(Error::InvalidParameter(format!("ladder needs at least 3 rungs, got {}", v.len())));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter("stabilization tolerance must be ≥ 0".into()));
    }
    let tail_infima: Vec<f64> = (0..v.len() - 1)
        .map(|j| v[j..].iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let pairs: Vec<f64> = v.windows(2).map(|w| w[0].min(w[1])).collect();
    let last = &pairs[pairs.len().saturating_sub(3)..];
    let (lo, hi) = last
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(LiminfReport {
        value: *tail_infima.last().unwrap(),
        stabilized: hi - lo <= tol,
        tail_infima,
        monotone_ladder: ladder.is_monotone(),
    })
}

/// Checks `b_{ε+2δ}(B_W, s−δ) ≤ b_ε(B_U, s)` and the same with `U, W` swapped.
///
/// A matching of cost at most `δ` sends every bar of `W` longer than `ε + 2δ`
/// and starting below `s − δ` to a distinct bar of `U` longer than `ε`
/// starting below `s`, so both inequalities hold whenever the precondition
/// `bottleneck(B_U, B_W) ≤ δ < ε` does.
pub fn stability_ineq_check(bu: &Barcode, bw: &Barcode, delta: f64, eps: f64, s: f64) -> Result<(bool, bool)> {
    let db = bottleneck_distance(bu, bw);
    if !(db <= delta && delta < eps) {
        return Err(Error::Precondition(format!(
            "need bottleneck {db} ≤ δ = {delta} < ε = {eps}"
        )));
    }
    let first = count_long_bars(bw, eps + 2.0 * delta, s - delta)? <= count_long_bars(bu, eps, s)?;
    let second = count_long_bars(bu, eps + 2.0 * delta, s - delta)? <= count_long_bars(bw, eps, s)?;
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barcode::Bar;

    #[test]
    fn equal_domains_have_zero_distance() {
        let d = ToricDomain::pnorm(vec![1.0, 2.0], 3.0).unwrap();
        assert_eq!(log_ratio_bound(&d, &d, 50).unwrap().dsbm_upper, 0.0);
    }

    #[test]
    fn scaling_gives_log_lambda() {
        let d = ToricDomain::ellipsoid(vec![1.0, 2.0]).unwrap();
        let e = d.scaled(1.7).unwrap();
        let r = log_ratio_bound(&d, &e, 40).unwrap();
        assert!((r.dsbm_upper - 1.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_resolution() {
        let d = ToricDomain::quarter_ball(2, 1.0).unwrap();
        assert!(log_ratio_bound(&d, &d, 1).is_err());
    }

    #[test]
    fn interleaving_examples() {
        assert_eq!(interleaving_bound(3.0, 0.0).unwrap(), 0.0);
        assert!((interleaving_bound(10.0, 1.1f64.ln()).unwrap() - 1.0).abs() < 1e-12);
    }

    fn ladder(vals: &[f64]) -> ApproximationLadder {
        ApproximationLadder {
            rungs: vals
                .iter()
                .enumerate()
                .map(|(i, &v)| LadderRung {
                    label: i.to_string(),
                    dsbm_upper: 1.0 / (i + 1) as f64,
                    value: v,
                })
                .collect(),
        }
    }

    #[test]
    fn liminf_examples() {
        let r = beps_liminf(&ladder(&[4.0; 5]), 0.0).unwrap();
        assert_eq!(r.value, 4.0);
        assert!(r.stabilized);
        let r = beps_liminf(&ladder(&[3.0, 4.0, 3.0, 4.0, 3.0, 4.0]), 0.0).unwrap();
        assert_eq!(r.value, 3.0);
        assert!(r.stabilized);
        let r = beps_liminf(&ladder(&[9.0, 7.0, 5.0, 3.0]), 0.5).unwrap();
        assert_eq!(r.value, 3.0);
        assert!(!r.stabilized);
        assert!(beps_liminf(&ladder(&[1.0, 2.0]), 0.0).is_err());
    }

    #[test]
    fn stability_on_shifted_barcode() {
        let bu = Barcode::new(vec![
            Bar::new(0.0, 1.0).unwrap(),
            Bar::new(0.2, 0.9).unwrap(),
            Bar::infinite(0.5).unwrap(),
        ]);
        let d = 0.05;
        let bw = Barcode::new(
            bu.bars
                .iter()
                .map(|b| if b.is_infinite() { Bar::infinite(b.start + d / 2.0).unwrap() } else { Bar::new(b.start + d / 2.0, b.end + d / 2.0).unwrap() })
                .collect(),
        );
        assert_eq!(stability_ineq_check(&bu, &bw, d, 0.3, 0.6).unwrap(), (true, true));
        assert!(matches!(stability_ineq_check(&bu, &bw, 0.01, 0.3, 0.6), Err(Error::Precondition(_))));
    }
}

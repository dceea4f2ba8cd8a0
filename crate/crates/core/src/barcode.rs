//! Barcodes of persistence modules and the growth function `b_ε(s)`.
//!
//! Bars are half-open intervals `(a, b]`: a bar is alive at `s` iff
//! `a < s <= b`. Infinite bars carry `end = +∞`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single bar `(start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub start: f64,
    pub end: f64,
}

impl Bar {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || end.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "bar endpoints must be numbers, got ({start}, {end}]"
            )));
        }
        if start < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bar start {start} is negative; modules vanish below 0"
            )));
        }
        if end <= start {
            return Err(Error::InvalidParameter(format!(
                "bar ({start}, {end}] is empty"
            )));
        }
        Ok(Bar { start, end })
    }

    pub fn infinite(start: f64) -> Result<Self> {
        Bar::new(start, f64::INFINITY)
    }

    pub fn is_infinite(&self) -> bool {
        self.end == f64::INFINITY
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Alive at `s` in the half-open convention.
    pub fn contains(&self, s: f64) -> bool {
        self.start < s && s <= self.end
    }
}

#[derive(Serialize, Deserialize)]
struct BarRepr {
    start: f64,
    end: Option<f64>,
}

impl Serialize for Bar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BarRepr {
            start: self.start,
            end: if self.is_infinite() { None } else { Some(self.end) },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Bar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BarRepr::deserialize(deserializer)?;
        Bar::new(repr.start, repr.end.unwrap_or(f64::INFINITY)).map_err(serde::de::Error::custom)
    }
}

/// A finite multiset of bars, optionally with a declared spectrum that must
/// contain every finite endpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Barcode {
    pub bars: Vec<Bar>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "spectrum")]
    pub declared_spectrum: Option<Vec<f64>>,
}

impl Barcode {
    pub fn new(bars: Vec<Bar>) -> Self {
        Barcode {
            bars,
            declared_spectrum: None,
        }
    }

    pub fn with_spectrum(bars: Vec<Bar>, spectrum: Vec<f64>) -> Result<Self> {
        let mut spectrum = spectrum;
        spectrum.sort_by(f64::total_cmp);
        spectrum.dedup();
        let code = Barcode {
            bars,
            declared_spectrum: Some(spectrum),
        };
        code.validate()?;
        Ok(code)
    }

    /// Checks the spectrum invariant.
    pub fn validate(&self) -> Result<()> {
        let Some(spec) = &self.declared_spectrum else {
            return Ok(());
        };
        let in_spec = |x: f64| {
            spec.iter()
                .any(|&v| (v - x).abs() <= 1e-12 * (1.0 + x.abs()))
        };
        for bar in &self.bars {
            if !in_spec(bar.start) || (!bar.is_infinite() && !in_spec(bar.end)) {
                return Err(Error::InvalidParameter(format!(
                    "bar ({}, {}] has an endpoint outside the declared spectrum",
                    bar.start, bar.end
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let code: Barcode = serde_json::from_str(text)?;
        code.validate()?;
        Ok(code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("barcode serializes")
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn infinite_count(&self) -> usize {
        self.bars.iter().filter(|b| b.is_infinite()).count()
    }
}

/// `b_ε(s)`: number of bars `(a, b]` with `a < s` and `b - a > ε`.
pub fn count_long_bars(code: &Barcode, eps: f64, s: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    Ok(code
        .bars
        .iter()
        .filter(|b| b.start < s && b.length() > eps)
        .count() as u64)
}

/// Truncation at `s`: bars born at or after `s` disappear, bars alive at `s`
/// are cut to `(a, s]`.
pub fn truncate(code: &Barcode, s: f64) -> Barcode {
    let bars = code
        .bars
        .iter()
        .filter(|b| b.start < s)
        .map(|b| Bar {
            start: b.start,
            end: b.end.min(s),
        })
        .collect();
    let declared_spectrum = code.declared_spectrum.as_ref().map(|spec| {
        let mut out: Vec<f64> = spec.iter().copied().filter(|&v| v <= s).collect();
        if s.is_finite() && !out.contains(&s) {
            out.push(s);
        }
        out
    });
    Barcode {
        bars,
        declared_spectrum,
    }
}

/// `sup_{s' < s}` of the number of bars alive at `s'`.
pub fn sup_dim_below(code: &Barcode, s: f64) -> u64 {
    let alive_at = |t: f64| code.bars.iter().filter(|b| b.contains(t)).count() as u64;
    // Between consecutive right endpoints the count can only grow, so the
    // supremum is reached at a right endpoint below `s` or in the limit s' -> s-.
    let limit = code
        .bars
        .iter()
        .filter(|b| b.start < s && b.end >= s)
        .count() as u64;
    code.bars
        .iter()
        .filter(|b| b.end < s)
        .map(|b| alive_at(b.end))
        .fold(limit, u64::max)
}

fn linf(a: &Bar, b: &Bar) -> f64 {
    (a.start - b.start).abs().max((a.end - b.end).abs())
}

fn half_length(b: &Bar) -> f64 {
    b.length() / 2.0
}

/// Bottleneck distance between two finite barcodes; `+∞` when the numbers of
/// infinite bars differ.
pub fn bottleneck_distance(b1: &Barcode, b2: &Barcode) -> f64 {
    let mut inf1: Vec<f64> = b1.bars.iter().filter(|b| b.is_infinite()).map(|b| b.start).collect();
    let mut inf2: Vec<f64> = b2.bars.iter().filter(|b| b.is_infinite()).map(|b| b.start).collect();
    if inf1.len() != inf2.len() {
        return f64::INFINITY;
    }
    inf1.sort_by(f64::total_cmp);
    inf2.sort_by(f64::total_cmp);
    // On a line, the sorted matching minimizes the maximal displacement.
    let inf_cost = inf1
        .iter()
        .zip(&inf2)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);

    let fin1: Vec<Bar> = b1.bars.iter().filter(|b| !b.is_infinite()).copied().collect();
    let fin2: Vec<Bar> = b2.bars.iter().filter(|b| !b.is_infinite()).copied().collect();
    inf_cost.max(finite_bottleneck(&fin1, &fin2))
}

fn finite_bottleneck(a: &[Bar], b: &[Bar]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = Vec::with_capacity(a.len() * b.len() + a.len() + b.len() + 1);
    candidates.push(0.0);
    candidates.extend(a.iter().map(half_length));
    candidates.extend(b.iter().map(half_length));
    for x in a {
        for y in b {
            candidates.push(linf(x, y));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // Matching everything to the diagonal is always feasible at the largest
    // half-length, so the search interval is non-empty.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if matching_feasible(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Perfect matching on the augmented bipartite graph
/// `(A ∪ diag(B)) × (B ∪ diag(A))` with edges of cost at most `r`.
fn matching_feasible(a: &[Bar], b: &[Bar], r: f64) -> bool {
    let (p, q) = (a.len(), b.len());
    let n = p + q;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if linf(x, y) <= r {
                adj[i].push(j);
            }
        }
        if half_length(x) <= r {
            adj[i].push(q + i);
        }
    }
    for (j, y) in b.iter().enumerate() {
        let left = p + j;
        if half_length(y) <= r {
            adj[left].push(j);
        }
        for i in 0..p {
            adj[left].push(q + i);
        }
    }
    hopcroft_karp(&adj, n) == n
}

fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> usize {
    const NIL: usize = usize::MAX;
    let n_left = adj.len();
    let mut match_l = vec![NIL; n_left];
    let mut match_r = vec![NIL; n_right];
    let mut dist = vec![0usize; n_left];
    let mut matched = 0;

    loop {
        // BFS layering from free left vertices.
        let mut queue = std::collections::VecDeque::new();
        for u in 0..n_left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        fn augment(
            u: usize,
            adj: &[Vec<usize>],
            match_l: &mut [usize],
            match_r: &mut [usize],
            dist: &mut [usize],
        ) -> bool {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == usize::MAX
                    || (dist[w] == dist[u] + 1 && augment(w, adj, match_l, match_r, dist))
                {
                    match_l[u] = v;
                    match_r[v] = u;
                    return true;
                }
            }
            dist[u] = usize::MAX;
            false
        }
        for u in 0..n_left {
            if match_l[u] == NIL && augment(u, adj, &mut match_l, &mut match_r, &mut dist) {
                matched += 1;
            }
        }
    }
    matched
}

/// Ordered samples `(s, count)` of a growth function.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GrowthSamples {
    samples: Vec<(f64, u64)>,
}

impl GrowthSamples {
    pub fn new(samples: Vec<(f64, u64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidParameter(
                "growth samples must have strictly increasing s".into(),
            ));
        }
        if samples.iter().any(|(s, _)| !s.is_finite()) {
            return Err(Error::InvalidParameter("growth sample s must be finite".into()));
        }
        Ok(GrowthSamples { samples })
    }

    pub fn samples(&self) -> &[(f64, u64)] {
        &self.samples
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["s", "count"])?;
        for (s, c) in &self.samples {
            w.write_record([format!("{s:.16e}"), c.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "s" || &headers[1] != "count" {
            return Err(Error::Format("growth CSV header must be `s,count`".into()));
        }
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let s: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad s value `{}`", &rec[0])))?;
            let c: u64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad count `{}`", &rec[1])))?;
            samples.push((s, c));
        }
        GrowthSamples::new(samples)
    }

    /// Default regression window: the upper half of the sampled range.
    pub fn default_window(&self) -> Option<(f64, f64)> {
        let first = self.samples.first()?.0;
        let last = self.samples.last()?.0;
        Some(((first + last) / 2.0, last))
    }
}

/// Least-squares growth rates over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimates {
    /// Slope of `log₂⁺ count` against `s`.
    pub exp_rate: f64,
    /// Slope of `log₂⁺ count` against `log₂ s`.
    pub poly_degree: f64,
    pub samples_used: usize,
}

fn log2_plus(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        x.log2()
    }
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn entropy_estimates(samples: &GrowthSamples, window: (f64, f64)) -> Result<EntropyEstimates> {
    let (lo, hi) = window;
    let used: Vec<(f64, u64)> = samples
        .samples
        .iter()
        .copied()
        .filter(|&(s, c)| s >= lo && s <= hi && c > 0 && s > 0.0)
        .collect();
    if used.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 positive samples in [{lo}, {hi}], found {}",
            used.len()
        )));
    }
    let ys: Vec<f64> = used.iter().map(|&(_, c)| log2_plus(c as f64)).collect();
    let s: Vec<f64> = used.iter().map(|&(s, _)| s).collect();
    let log_s: Vec<f64> = s.iter().map(|s| s.log2()).collect();
    Ok(EntropyEstimates {
        exp_rate: ls_slope(&s, &ys),
        poly_degree: ls_slope(&log_s, &ys),
        samples_used: used.len(),
    })
}

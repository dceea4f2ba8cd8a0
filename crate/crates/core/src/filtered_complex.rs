//! Filtered chain complexes over a prime field and their barcodes.
//!
//! Generators carry filtration values and the differential strictly lowers
//! the filtration. The sublevel module is `s ↦ H(C_{<s})`, which produces
//! half-open bars `(a, b]`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::barcode::{count_long_bars, Bar, Barcode};
use crate::error::{Error, Result};

/// A generator of the complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub filtration: f64,
}

/// Arithmetic in `F_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField(u32);

impl PrimeField {
    pub fn new(p: u32) -> Result<Self> {
        let is_prime = p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d));
        if !is_prime || p > 65_521 {
            return Err(Error::InvalidParameter(format!(
                "field characteristic must be a prime ≤ 65521, got {p}"
            )));
        }
        Ok(PrimeField(p))
    }

    pub fn p(&self) -> u32 {
        self.0
    }

    pub fn reduce(&self, x: i64) -> u32 {
        x.rem_euclid(self.0 as i64) as u32
    }

    fn add(&self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.0 as u64) as u32
    }

    fn sub(&self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.0 as u64 - b as u64) % self.0 as u64) as u32
    }

    fn mul(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.0 as u64) as u32
    }

    fn inv(&self, a: u32) -> u32 {
        debug_assert!(a != 0);
        let (mut base, mut exp, mut acc) = (a as u64, self.0 as u64 - 2, 1u64);
        let p = self.0 as u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % p;
            }
            base = base * base % p;
            exp >>= 1;
        }
        acc as u32
    }
}

/// Sparse column: `(row, coefficient)` pairs sorted by row, coefficients nonzero.
type Column = Vec<(usize, u32)>;

/// A finite filtered complex with sparse boundary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredComplex {
    field: PrimeField,
    generators: Vec<Generator>,
    boundary: Vec<Column>,
}

impl FilteredComplex {
    /// Builds and validates a complex. `boundary[j]` lists `(i, c)` meaning
    /// `∂g_j` contains `c·g_i`; coefficients are reduced mod `p`.
    pub fn new(field: u32, generators: Vec<Generator>, boundary: Vec<Vec<(usize, i64)>>) -> Result<Self> {
        let field = PrimeField::new(field)?;
        if boundary.len() != generators.len() {
            return Err(Error::InvalidComplex(format!(
                "{} boundary columns for {} generators",
                boundary.len(),
                generators.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, g) in generators.iter().enumerate() {
            if !g.filtration.is_finite() || g.filtration < 0.0 {
                return Err(Error::InvalidComplex(format!(
                    "generator {} has filtration {}; values must be finite and ≥ 0",
                    g.id, g.filtration
                )));
            }
            if seen.insert(g.id.clone(), i).is_some() {
                return Err(Error::InvalidComplex(format!("duplicate generator id {}", g.id)));
            }
        }
        let mut cols = Vec::with_capacity(boundary.len());
        for (j, raw) in boundary.into_iter().enumerate() {
            let mut acc: BTreeMap<usize, u32> = BTreeMap::new();
            for (i, c) in raw {
                if i >= generators.len() {
                    return Err(Error::InvalidComplex(format!("boundary index {i} out of range")));
                }
                let e = acc.entry(i).or_insert(0);
                *e = field.add(*e, field.reduce(c));
            }
            let col: Column = acc.into_iter().filter(|&(_, c)| c != 0).collect();
            for &(i, _) in &col {
                if !(generators[i].filtration < generators[j].filtration) {
                    return Err(Error::InvalidComplex(format!(
                        "filtration must strictly increase along the differential: ∂{} contains {}",
                        generators[j].id, generators[i].id
                    )));
                }
            }
            cols.push(col);
        }
        let complex = FilteredComplex {
            field,
            generators,
            boundary: cols,
        };
        complex.check_square_zero()?;
        Ok(complex)
    }

    fn check_square_zero(&self) -> Result<()> {
        for (j, col) in self.boundary.iter().enumerate() {
            let mut acc: BTreeMap<usize, u32> = BTreeMap::new();
            for &(i, c) in col {
                for &(k, d) in &self.boundary[i] {
                    let e = acc.entry(k).or_insert(0);
                    *e = self.field.add(*e, self.field.mul(c, d));
                }
            }
            if acc.values().any(|&v| v != 0) {
                return Err(Error::InvalidComplex(format!(
                    "∂² ≠ 0 on generator {}",
                    self.generators[j].id
                )));
            }
        }
        Ok(())
    }

    pub fn empty(field: u32) -> Result<Self> {
        FilteredComplex::new(field, Vec::new(), Vec::new())
    }

    pub fn field(&self) -> u32 {
        self.field.p()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Distinct filtration values, sorted.
    pub fn filtration_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.generators.iter().map(|g| g.filtration).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ComplexJson = serde_json::from_str(text)?;
        let index: HashMap<&str, usize> = raw
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| (g.id.as_str(), i))
            .collect();
        let mut boundary = vec![Vec::new(); raw.generators.len()];
        for (id, entries) in &raw.boundary {
            let &j = index
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidComplex(format!("boundary of unknown generator {id}")))?;
            for e in entries {
                let (tid, c) = match e {
                    BoundaryEntry::Id(t) => (t.as_str(), 1),
                    BoundaryEntry::Weighted(t, c) => (t.as_str(), *c),
                };
                let &i = index
                    .get(tid)
                    .ok_or_else(|| Error::InvalidComplex(format!("unknown generator {tid} in ∂{id}")))?;
                boundary[j].push((i, c));
            }
        }
        FilteredComplex::new(raw.field.unwrap_or(2), raw.generators, boundary)
    }

    pub fn to_json(&self) -> String {
        let mut boundary = BTreeMap::new();
        for (j, col) in self.boundary.iter().enumerate() {
            if col.is_empty() {
                continue;
            }
            let entries = col
                .iter()
                .map(|&(i, c)| {
                    let id = self.generators[i].id.clone();
                    if c == 1 {
                        BoundaryEntry::Id(id)
                    } else {
                        BoundaryEntry::Weighted(id, c as i64)
                    }
                })
                .collect();
            boundary.insert(self.generators[j].id.clone(), entries);
        }
        serde_json::to_string_pretty(&ComplexJson {
            field: Some(self.field.p()),
            generators: self.generators.clone(),
            boundary,
        })
        .expect("complex serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    #[serde(default)]
    field: Option<u32>,
    generators: Vec<Generator>,
    #[serde(default)]
    boundary: BTreeMap<String, Vec<BoundaryEntry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundaryEntry {
    Id(String),
    Weighted(String, i64),
}

/// `a ← a − λ·b` on sorted sparse columns.
fn axpy(field: PrimeField, a: &Column, lambda: u32, b: &Column) -> Column {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ra = a.get(i).map_or(usize::MAX, |e| e.0);
        let rb = b.get(j).map_or(usize::MAX, |e| e.0);
        if ra < rb {
            out.push(a[i]);
            i += 1;
        } else if rb < ra {
            out.push((rb, field.sub(0, field.mul(lambda, b[j].1))));
            j += 1;
        } else {
            let v = field.sub(a[i].1, field.mul(lambda, b[j].1));
            if v != 0 {
                out.push((ra, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Standard persistence reduction of the boundary matrix.
pub fn reduce(c: &FilteredComplex) -> Barcode {
    let n = c.len();
    let f = |i: usize| c.generators[i].filtration;
    // Filtration order; ties broken by input index so the result is deterministic.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f(a).total_cmp(&f(b)).then(a.cmp(&b)));
    let mut pos = vec![0usize; n];
    for (k, &g) in order.iter().enumerate() {
        pos[g] = k;
    }

    let mut reduced: Vec<Column> = Vec::with_capacity(n);
    let mut pivot_col: Vec<Option<usize>> = vec![None; n];
    let mut paired = vec![false; n];
    let mut bars = Vec::new();

    for (k, &g) in order.iter().enumerate() {
        let mut col: Column = c.boundary[g].iter().map(|&(i, v)| (pos[i], v)).collect();
        col.sort_unstable_by_key(|e| e.0);
        while let Some(&(low, v)) = col.last() {
            match pivot_col[low] {
                Some(other) => {
                    let w = reduced[other].last().expect("pivot column nonempty").1;
                    let lambda = c.field.mul(v, c.field.inv(w));
                    col = axpy(c.field, &col, lambda, &reduced[other]);
                }
                None => break,
            }
        }
        if let Some(&(low, _)) = col.last() {
            pivot_col[low] = Some(k);
            paired[low] = true;
            paired[k] = true;
            bars.push(Bar {
                start: f(order[low]),
                end: f(g),
            });
        }
        reduced.push(col);
    }
    for k in 0..n {
        if !paired[k] && reduced[k].is_empty() {
            bars.push(Bar {
                start: f(order[k]),
                end: f64::INFINITY,
            });
        }
    }
    bars.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    Barcode::new(bars)
}

/// Rank of a dense matrix over `F_p` (rows are consumed).
fn dense_rank(field: PrimeField, mut rows: Vec<Vec<u32>>) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = field.inv(rows[rank][col]);
        for x in rows[rank].iter_mut() {
            *x = field.mul(*x, inv);
        }
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] != 0 {
                let lambda = row[col];
                for (x, &y) in row.iter_mut().zip(&pivot_row) {
                    *x = field.sub(*x, field.mul(lambda, y));
                }
            }
        }
        rank += 1;
    }
    rank
}

impl FilteredComplex {
    /// Dense submatrix of ∂ with the given row and column generator sets,
    /// stored column-major as rows of the transpose.
    fn dense_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<u32>> {
        let row_pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        cols.iter()
            .map(|&j| {
                let mut v = vec![0u32; rows.len()];
                for &(i, c) in &self.boundary[j] {
                    if let Some(&k) = row_pos.get(&i) {
                        v[k] = c;
                    }
                }
                v
            })
            .collect()
    }

    fn below(&self, s: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.generators[i].filtration < s).collect()
    }

    fn at_or_above(&self, s: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.generators[i].filtration >= s).collect()
    }
}

/// Rank of `H(C_{<s}) → H(C_{<t})` by dense linear algebra, independent of [`reduce`].
///
/// Uses `rank = n_s − rk ∂[·,<s] − rk ∂[·,<t] + rk ∂[≥s,<t]`, where `n_s`
/// counts generators below `s`.
pub fn rank_oracle(c: &FilteredComplex, s: f64, t: f64) -> Result<u64> {
    if s > t {
        return Err(Error::InvalidParameter(format!("rank_oracle needs s ≤ t, got s={s}, t={t}")));
    }
    let all: Vec<usize> = (0..c.len()).collect();
    let cs = c.below(s);
    let ct = c.below(t);
    let r_s = dense_rank(c.field, c.dense_block(&all, &cs));
    let r_t = dense_rank(c.field, c.dense_block(&all, &ct));
    let r_st = dense_rank(c.field, c.dense_block(&c.at_or_above(s), &ct));
    Ok((cs.len() + r_st - r_s - r_t) as u64)
}

/// Ranks of all structure maps between a set of sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub points: Vec<f64>,
    /// `ranks[i][j]` for `points[i] ≤ points[j]`, zero-filled otherwise.
    pub ranks: Vec<Vec<u64>>,
}

/// Incremental row-echelon basis over `F_p` with pivots at the highest row.
struct Echelon {
    field: PrimeField,
    by_pivot: HashMap<usize, Vec<u32>>,
}

impl Echelon {
    fn new(field: PrimeField) -> Self {
        Echelon {
            field,
            by_pivot: HashMap::new(),
        }
    }

    /// Inserts `v`; returns true if it raised the rank.
    fn insert(&mut self, mut v: Vec<u32>) -> bool {
        loop {
            let Some(top) = v.iter().rposition(|&x| x != 0) else {
                return false;
            };
            match self.by_pivot.get(&top) {
                Some(b) => {
                    let lambda = v[top];
                    for (x, &y) in v.iter_mut().zip(b) {
                        if y != 0 {
                            *x = self.field.sub(*x, self.field.mul(lambda, y));
                        }
                    }
                }
                None => {
                    let inv = self.field.inv(v[top]);
                    for x in v.iter_mut() {
                        *x = self.field.mul(*x, inv);
                    }
                    self.by_pivot.insert(top, v);
                    return true;
                }
            }
        }
    }
}

/// All-pairs version of [`rank_oracle`], computed incrementally but still
/// without reference to the persistence reduction.
pub fn rank_table(c: &FilteredComplex, points: &[f64]) -> RankTable {
    let mut pts = points.to_vec();
    pts.sort_by(f64::total_cmp);
    let n = c.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c.generators[a].filtration.total_cmp(&c.generators[b].filtration));
    let f = |i: usize| c.generators[i].filtration;
    let column = |j: usize| {
        let mut v = vec![0u32; n];
        for &(i, x) in &c.boundary[j] {
            v[i] = x;
        }
        v
    };

    // rk ∂[·,<t] for every sample point.
    let full_rank: Vec<usize> = {
        let mut e = Echelon::new(c.field);
        let mut r = 0;
        let mut k = 0;
        pts.iter()
            .map(|&t| {
                while k < n && f(order[k]) < t {
                    if e.insert(column(order[k])) {
                        r += 1;
                    }
                    k += 1;
                }
                r
            })
            .collect()
    };
    let n_below: Vec<usize> = pts.iter().map(|&s| order.iter().filter(|&&i| f(i) < s).count()).collect();

    let m = pts.len();
    let mut ranks = vec![vec![0u64; m]; m];
    for (a, &s) in pts.iter().enumerate() {
        let keep: Vec<bool> = (0..n).map(|i| f(i) >= s).collect();
        let mut e = Echelon::new(c.field);
        let mut r = 0usize;
        let mut k = 0;
        for (b, &t) in pts.iter().enumerate().skip(a) {
            while k < n && f(order[k]) < t {
                let mut v = column(order[k]);
                for (i, x) in v.iter_mut().enumerate() {
                    if !keep[i] {
                        *x = 0;
                    }
                }
                if e.insert(v) {
                    r += 1;
                }
                k += 1;
            }
            ranks[a][b] = (n_below[a] + r - full_rank[a] - full_rank[b]) as u64;
        }
    }
    RankTable { points: pts, ranks }
}

/// Rank of `π_{s,t}` read off a barcode: bars with `a < s ≤ t ≤ b`.
pub fn barcode_rank(code: &Barcode, s: f64, t: f64) -> u64 {
    code.bars.iter().filter(|b| b.start < s && t <= b.end).count() as u64
}

/// Midpoints of the filtration-value arrangement plus one point on each side.
pub fn arrangement_midpoints(c: &FilteredComplex) -> Vec<f64> {
    let v = c.filtration_values();
    let Some((&first, &last)) = v.first().zip(v.last()) else {
        return vec![0.5];
    };
    let mut pts = vec![first - 1.0];
    pts.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    pts.push(last + 1.0);
    pts
}

/// `(b, g, b ≤ g)` with `b = b_ε(s)` of the reduced barcode and `g` the
/// number of generators with filtration below `s`.
pub fn bars_vs_generators(c: &FilteredComplex, eps: f64, s: f64) -> Result<(u64, u64, bool)> {
    let b = count_long_bars(&reduce(c), eps, s)?;
    let g = c.generators.iter().filter(|x| x.filtration < s).count() as u64;
    Ok((b, g, b <= g))
}

/// Random simplicial complex (vertices, edges, triangles) with at most
/// `max_generators` simplices. Filtration of a simplex is the max over its
/// faces plus a random positive increment. With `with_triangles = false`
/// the result is a graph.
pub fn random_simplicial<R: Rng>(
    rng: &mut R,
    max_generators: usize,
    field: u32,
    with_triangles: bool,
) -> Result<FilteredComplex> {
    let budget = rng.gen_range(1..=max_generators.max(1));
    let nv = rng.gen_range(1..=(budget / 3).max(1));
    let mut gens = Vec::new();
    let mut bnd: Vec<Vec<(usize, i64)>> = Vec::new();
    for v in 0..nv {
        gens.push(Generator {
            id: format!("v{v}"),
            filtration: rng.gen_range(0.0..1.0),
        });
        bnd.push(Vec::new());
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let n_edges = if nv >= 2 { rng.gen_range(0..=(budget - nv) * 2 / 3) } else { 0 };
    for _ in 0..n_edges {
        let a = rng.gen_range(0..nv);
        let b = rng.gen_range(0..nv);
        let (a, b) = (a.min(b), a.max(b));
        if a == b || edges.contains_key(&(a, b)) {
            continue;
        }
        let idx = gens.len();
        gens.push(Generator {
            id: format!("e{a}_{b}"),
            filtration: gens[a].filtration.max(gens[b].filtration) + rng.gen_range(0.01..1.0),
        });
        bnd.push(vec![(b, 1), (a, -1)]);
        edges.insert((a, b), idx);
    }
    if with_triangles {
        let mut list: Vec<(usize, usize)> = edges.keys().copied().collect();
        list.sort_unstable();
        let mut tries = 0;
        while gens.len() < budget && tries < 20 * budget && !list.is_empty() {
            tries += 1;
            let (a, b) = list[rng.gen_range(0..list.len())];
            let c = rng.gen_range(0..nv);
            if c <= b {
                continue;
            }
            let (Some(&ab), Some(&bc), Some(&ac)) = (edges.get(&(a, b)), edges.get(&(b, c)), edges.get(&(a, c))) else {
                continue;
            };
            let id = format!("t{a}_{b}_{c}");
            if gens.iter().any(|g| g.id == id) {
                continue;
            }
            let base = gens[ab].filtration.max(gens[bc].filtration).max(gens[ac].filtration);
            gens.push(Generator {
                id,
                filtration: base + rng.gen_range(0.01..1.0),
            });
            bnd.push(vec![(bc, 1), (ac, -1), (ab, 1)]);
        }
    }
    FilteredComplex::new(field, gens, bnd)
}

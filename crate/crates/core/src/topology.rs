//! Persistent homology over F2.
//!
//! Rips and Čech complexes, packed boundary matrices, Betti numbers,
//! persistence pairing by column reduction, and the landmark experiment
//! used on attractor samples.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{fmt_f64, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("points must share one dimension".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn from_series(series: &TimeSeries) -> Self {
        Self { dim: series.dim(), points: series.samples().map(|s| s.to_vec()).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.points[i], &self.points[j])
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { dim: self.dim, points: idx.iter().map(|&i| self.points[i].clone()).collect() }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    /// Sorted vertex ids.
    pub vertices: Vec<usize>,
    pub value: f64,
}

impl Simplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }
}

/// Simplices sorted by `(value, dimension, vertices)`; ids are positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration {
    simplices: Vec<Simplex>,
    index: HashMap<Vec<usize>, usize>,
    max_dim: usize,
}

fn simplex_order(a: &Simplex, b: &Simplex) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.vertices.len().cmp(&b.vertices.len()))
        .then_with(|| a.vertices.cmp(&b.vertices))
}

impl Filtration {
    /// Sorts the given simplices and checks closure under faces.
    pub fn from_simplices(mut simplices: Vec<Simplex>) -> Result<Self> {
        for s in &mut simplices {
            s.vertices.sort_unstable();
            if s.vertices.is_empty() || s.vertices.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("bad simplex {:?}", s.vertices)));
            }
            if !(s.value >= 0.0) {
                return Err(Error::InvalidArgument(format!("filtration values must be nonnegative, got {}", s.value)));
            }
        }
        simplices.sort_by(simplex_order);
        let f = Self::assemble(simplices);
        f.check_closure()?;
        Ok(f)
    }

    /// Accepts simplices already in filtration order, rejecting any
    /// out-of-order entry.
    pub fn from_sorted(simplices: Vec<Simplex>) -> Result<Self> {
        if let Some(i) = simplices.windows(2).position(|w| simplex_order(&w[0], &w[1]) == std::cmp::Ordering::Greater) {
            return Err(Error::Ordering { index: i + 1 });
        }
        let f = Self::assemble(simplices);
        f.check_closure()?;
        Ok(f)
    }

    fn assemble(simplices: Vec<Simplex>) -> Self {
        let index = simplices.iter().enumerate().map(|(i, s)| (s.vertices.clone(), i)).collect();
        let max_dim = simplices.iter().map(|s| s.dim()).max().unwrap_or(0);
        Self { simplices, index, max_dim }
    }

    fn check_closure(&self) -> Result<()> {
        for s in &self.simplices {
            if s.vertices.len() < 2 {
                continue;
            }
            for face in faces(&s.vertices) {
                match self.index.get(&face) {
                    Some(&j) if self.simplices[j].value <= s.value => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "face {face:?} of {:?} is missing or enters later",
                            s.vertices
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn index_of(&self, vertices: &[usize]) -> Option<usize> {
        let mut v = vertices.to_vec();
        v.sort_unstable();
        self.index.get(&v).copied()
    }

    /// Ids of `k`-simplices with value `≤ eps`, in filtration order.
    pub fn ids_of_dim(&self, k: usize, eps: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.simplices[i].dim() == k && self.simplices[i].value <= eps)
            .collect()
    }

    /// Filtration values present, ascending and distinct.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.simplices.iter().map(|s| s.value).collect();
        v.dedup();
        v
    }

    /// CSV `eps,dim,v0;v1;...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "eps,dim,vertices")?;
        for s in &self.simplices {
            let verts: Vec<String> = s.vertices.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{},{}", fmt_f64(s.value), s.dim(), verts.join(";"))?;
        }
        Ok(())
    }
}

/// Codimension-one faces, each sorted, in lexicographic order of the
/// omitted position reversed (last vertex dropped first).
fn faces(vertices: &[usize]) -> Vec<Vec<usize>> {
    (0..vertices.len())
        .rev()
        .map(|skip| vertices.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect())
        .collect()
}

/// Vietoris–Rips filtration: a simplex enters at the largest pairwise
/// distance among its vertices, with the closed threshold `≤ max_eps`.
pub fn rips_filtration(cloud: &PointCloud, max_dim: usize, max_eps: f64) -> Result<Filtration> {
    if !(max_eps > 0.0) {
        return Err(Error::InvalidArgument(format!("max_eps must be positive, got {max_eps}")));
    }
    let n = cloud.len();
    let mut simplices: Vec<Simplex> = (0..n).map(|i| Simplex { vertices: vec![i], value: 0.0 }).collect();
    if max_dim >= 1 && n >= 2 {
        // Higher neighbours within max_eps.
        let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                let d = cloud.distance(i, j);
                if d <= max_eps {
                    nbrs[i].push((j, d));
                }
            }
        }
        let dmap: Vec<HashMap<usize, f64>> = nbrs.iter().map(|v| v.iter().copied().collect()).collect();
        let mut stack: Vec<(Vec<usize>, f64, Vec<usize>)> = Vec::new();
        for i in 0..n {
            let cands: Vec<usize> = nbrs[i].iter().map(|p| p.0).collect();
            stack.push((vec![i], 0.0, cands));
        }
        while let Some((verts, value, cands)) = stack.pop() {
            if verts.len() > max_dim {
                continue;
            }
            for (ci, &c) in cands.iter().enumerate() {
                let mut v = value;
                for &u in &verts {
                    v = v.max(dmap[u][&c]);
                }
                let mut nv = verts.clone();
                nv.push(c);
                simplices.push(Simplex { vertices: nv.clone(), value: v });
                if nv.len() <= max_dim {
                    let next: Vec<usize> = cands[ci + 1..].iter().copied().filter(|w| dmap[c].contains_key(w)).collect();
                    if !next.is_empty() {
                        stack.push((nv, v, next));
                    }
                }
            }
        }
    }
    simplices.sort_by(simplex_order);
    Ok(Filtration::assemble(simplices))
}

/// Minimum enclosing ball `(centre, radius)` of a point set, by Welzl's
/// recursion with exact support-sphere solves.
pub fn min_enclosing_ball(points: &[&[f64]]) -> (Vec<f64>, f64) {
    assert!(!points.is_empty(), "enclosing ball of an empty set");
    let d = points[0].len();
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let (c, r) = welzl(points, &mut idx, points.len(), &mut Vec::new(), d);
    (c, r)
}

fn welzl(points: &[&[f64]], idx: &mut Vec<usize>, n: usize, support: &mut Vec<usize>, d: usize) -> (Vec<f64>, f64) {
    if n == 0 || support.len() == d + 1 {
        return support_ball(points, support, d);
    }
    let p = idx[n - 1];
    let (c, r) = welzl(points, idx, n - 1, support, d);
    if inside(points[p], &c, r) {
        return (c, r);
    }
    support.push(p);
    let out = welzl(points, idx, n - 1, support, d);
    support.pop();
    out
}

fn inside(p: &[f64], c: &[f64], r: f64) -> bool {
    r >= 0.0 && dist(p, c) <= r * (1.0 + 1e-12) + 1e-12
}

/// Smallest sphere with all support points on its boundary, centred in
/// their affine hull.
fn support_ball(points: &[&[f64]], support: &[usize], d: usize) -> (Vec<f64>, f64) {
    match support.len() {
        0 => (vec![0.0; d], -1.0),
        1 => (points[support[0]].to_vec(), 0.0),
        m => {
            let p0 = points[support[0]];
            let diffs: Vec<DVector<f64>> = support[1..]
                .iter()
                .map(|&i| DVector::from_fn(d, |k, _| points[i][k] - p0[k]))
                .collect();
            let g = DMatrix::from_fn(m - 1, m - 1, |a, b| diffs[a].dot(&diffs[b]));
            let rhs = DVector::from_fn(m - 1, |a, _| 0.5 * diffs[a].norm_squared());
            let lam = g.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(m - 1));
            let mut c: Vec<f64> = p0.to_vec();
            for (a, diff) in diffs.iter().enumerate() {
                for k in 0..d {
                    c[k] += lam[a] * diff[k];
                }
            }
            let r = support.iter().map(|&i| dist(points[i], &c)).fold(0.0, f64::max);
            (c, r)
        }
    }
}

/// Čech membership: the `eps/2` balls around the points share a point.
pub fn cech_membership(points: &[&[f64]], eps: f64) -> bool {
    if points.is_empty() {
        return false;
    }
    let (_, r) = min_enclosing_ball(points);
    r <= eps / 2.0 * (1.0 + 1e-12) + 1e-15
}

/// Boundary matrix over F2 with rows packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct F2Matrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl F2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        Self { rows, cols, words, data: vec![0; rows * words] }
    }

    pub fn from_dense(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v & 1 == 1 {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let w = &mut self.data[i * self.words + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j) as u8).collect()).collect()
    }

    /// Sub-matrix with the given row and column order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut m = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                if self.get(i, j) {
                    m.set(a, b, true);
                }
            }
        }
        m
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    /// Product over F2.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension { context: "F2 product", expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.get(i, k) {
                    let src = other.row(k).to_vec();
                    let dst = &mut out.data[i * out.words..(i + 1) * out.words];
                    for (d, s) in dst.iter_mut().zip(&src) {
                        *d ^= s;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|w| *w == 0)
    }

    /// Rank by Gaussian elimination on packed rows.
    pub fn rank(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = (0..self.rows).map(|i| self.row(i).to_vec()).collect();
        let mut rank = 0;
        for col in 0..self.cols {
            let (w, bit) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else { continue };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[w] & bit != 0 {
                    for (a, b) in row.iter_mut().zip(&pivot) {
                        *a ^= b;
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

/// `∂_k` restricted to simplices with value `≤ eps`: rows are the
/// `(k−1)`-simplices and columns the `k`-simplices, both in filtration
/// order.
pub fn boundary_matrix(filtration: &Filtration, k: usize, eps: f64) -> Result<(F2Matrix, Vec<usize>, Vec<usize>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("boundary matrices start at k = 1".into()));
    }
    let rows = filtration.ids_of_dim(k - 1, eps);
    let cols = filtration.ids_of_dim(k, eps);
    let row_pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let mut m = F2Matrix::zeros(rows.len(), cols.len());
    for (b, &j) in cols.iter().enumerate() {
        for face in faces(&filtration.simplices[j].vertices) {
            let id = filtration.index[&face];
            m.set(row_pos[&id], b, true);
        }
    }
    Ok((m, rows, cols))
}

/// `β_k = dim ker ∂_k − rank ∂_{k+1}` for `k = 0..=max_dim` at `eps`.
pub fn betti_numbers(filtration: &Filtration, eps: f64) -> Vec<usize> {
    let top = filtration.max_dim();
    let ranks: Vec<usize> = (0..=top + 1)
        .map(|k| {
            if k == 0 || k > top {
                0
            } else {
                boundary_matrix(filtration, k, eps).map(|(m, _, _)| m.rank()).unwrap_or(0)
            }
        })
        .collect();
    (0..=top)
        .map(|k| filtration.ids_of_dim(k, eps).len() - ranks[k] - ranks[k + 1])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub degree: usize,
    pub birth: f64,
    /// `f64::INFINITY` for classes never killed.
    pub death: f64,
}

impl PersistencePair {
    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    /// Lifetime, with infinite classes truncated at `cap`.
    pub fn persistence(&self, cap: f64) -> f64 {
        self.death.min(cap) - self.birth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub pairs: Vec<PersistencePair>,
    /// Largest filtration value; infinite classes are plotted here.
    pub max_eps: f64,
}

impl PersistenceDiagram {
    pub fn degree(&self, k: usize) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.degree == k)
    }

    /// Classes alive at `eps` (`birth ≤ eps < death`) per degree.
    pub fn betti_at(&self, eps: f64, max_dim: usize) -> Vec<usize> {
        (0..=max_dim)
            .map(|k| self.degree(k).filter(|p| p.birth <= eps && eps < p.death).count())
            .collect()
    }

    /// CSV `degree,birth,death` with `inf` for unkilled classes.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "degree,birth,death")?;
        for p in &self.pairs {
            writeln!(out, "{},{},{}", p.degree, fmt_f64(p.birth), fmt_f64(p.death))?;
        }
        Ok(())
    }
}

/// Persistence pairing by column reduction over F2.
///
/// Columns are sparse sorted row lists; dimensions are reduced from the top
/// down so that columns of simplices already known to be killers can be
/// cleared without reduction.
pub fn persistence(filtration: &Filtration) -> Result<PersistenceDiagram> {
    let n = filtration.len();
    let s = &filtration.simplices;
    if let Some(i) = s.windows(2).position(|w| simplex_order(&w[0], &w[1]) == std::cmp::Ordering::Greater) {
        return Err(Error::Ordering { index: i + 1 });
    }
    let top = filtration.max_dim();
    let mut pivot_of_row: HashMap<usize, usize> = HashMap::new();
    let mut killed = vec![false; n];
    let mut paired = vec![false; n];
    let mut pairs = Vec::new();
    for k in (1..=top).rev() {
        let mut low_to_col: HashMap<usize, Vec<usize>> = HashMap::new();
        for j in 0..n {
            if s[j].vertices.len() != k + 1 || killed[j] {
                continue;
            }
            let mut col: Vec<usize> = faces(&s[j].vertices).iter().map(|f| filtration.index[f]).collect();
            col.sort_unstable();
            while let Some(&low) = col.last() {
                match low_to_col.get(&low) {
                    Some(other) => col = symmetric_difference(&col, other),
                    None => break,
                }
            }
            if let Some(&low) = col.last() {
                pivot_of_row.insert(low, j);
                killed[low] = true;
                paired[low] = true;
                paired[j] = true;
                pairs.push(PersistencePair { degree: k - 1, birth: s[low].value, death: s[j].value });
                low_to_col.insert(low, col);
            }
        }
    }
    for j in 0..n {
        if !paired[j] {
            pairs.push(PersistencePair { degree: s[j].dim(), birth: s[j].value, death: f64::INFINITY });
        }
    }
    pairs.sort_by(|a, b| a.degree.cmp(&b.degree).then(a.birth.total_cmp(&b.birth)).then(a.death.total_cmp(&b.death)));
    let max_eps = s.last().map_or(0.0, |x| x.value);
    Ok(PersistenceDiagram { pairs, max_eps })
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Checks `R_ε ⊂ C_{ε√2} ⊂ R_{ε√2}` on the cloud for simplices up to
/// `max_dim`.
pub fn squeeze_check(cloud: &PointCloud, eps: f64, max_dim: usize) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if cloud.is_empty() {
        return Ok(true);
    }
    let big = eps * 2f64.sqrt();
    let rips = rips_filtration(cloud, max_dim, big)?;
    for s in rips.simplices() {
        let pts: Vec<&[f64]> = s.vertices.iter().map(|&v| cloud.point(v)).collect();
        let cech = cech_membership(&pts, big);
        // R_ε ⊂ C_{ε√2}.
        if s.value <= eps && !cech {
            return Ok(false);
        }
    }
    // C_{ε√2} ⊂ R_{ε√2}: any simplex outside R_{ε√2} has an edge outside it,
    // and Čech membership passes to faces, so edges decide.
    for i in 0..cloud.len() {
        for j in i + 1..cloud.len() {
            if cloud.distance(i, j) > big && cech_membership(&[cloud.point(i), cloud.point(j)], big) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Greedy max-min landmark selection starting from point 0.
pub fn farthest_point_sample(cloud: &PointCloud, count: usize) -> Vec<usize> {
    let n = cloud.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(n);
    let mut chosen = vec![0usize];
    let mut nearest: Vec<f64> = (0..n).map(|i| cloud.distance(i, 0)).collect();
    while chosen.len() < count {
        let (far, _) = nearest.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
        chosen.push(far);
        for i in 0..n {
            let d = cloud.distance(i, far);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    chosen
}

/// Largest distance from a point of the cloud to its nearest of the first
/// `count` max-min landmarks.
pub fn covering_radius(cloud: &PointCloud, count: usize) -> f64 {
    let lm = farthest_point_sample(cloud, count);
    (0..cloud.len())
        .map(|i| lm.iter().map(|&j| cloud.distance(i, j)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub diagram: PersistenceDiagram,
    /// H1 pairs sorted by decreasing persistence (infinite deaths truncated
    /// at `max_eps`).
    pub h1_by_persistence: Vec<PersistencePair>,
    /// Persistence of the second most persistent H1 class over that of the
    /// third; infinite when there are only two.
    pub gap_ratio: f64,
    pub max_eps: f64,
    pub landmarks: Vec<usize>,
}

impl H1Report {
    pub fn persistences(&self) -> Vec<f64> {
        self.h1_by_persistence.iter().map(|p| p.persistence(self.max_eps)).collect()
    }

    /// Size of the leading group of H1 classes: the first `k` such that
    /// the `k`-th persistence exceeds `ratio` times the next one (zero past
    /// the end).
    pub fn dominant_count(&self, ratio: f64) -> usize {
        let p = self.persistences();
        (1..=p.len()).find(|&k| p[k - 1] > ratio * p.get(k).copied().unwrap_or(0.0)).unwrap_or(0)
    }
}

/// Landmark subsample, Rips filtration up to triangles and persistence,
/// summarised by the H1 classes.
pub fn attractor_h1_experiment(states: &TimeSeries, subsample: usize, max_eps: f64) -> Result<H1Report> {
    if subsample < 50 {
        return Err(Error::InvalidArgument(format!("subsample must be at least 50, got {subsample}")));
    }
    let cloud = PointCloud::from_series(states);
    if cloud.is_empty() || cloud.points().iter().all(|p| p == cloud.point(0)) {
        return Err(Error::DegenerateCloud("all points coincide".into()));
    }
    let landmarks = farthest_point_sample(&cloud, subsample);
    let sub = cloud.subset(&landmarks);
    let filt = rips_filtration(&sub, 2, max_eps)?;
    let diagram = persistence(&filt)?;
    let mut h1: Vec<PersistencePair> = diagram.degree(1).copied().collect();
    h1.sort_by(|a, b| b.persistence(max_eps).total_cmp(&a.persistence(max_eps)));
    let p = |i: usize| h1.get(i).map_or(0.0, |x| x.persistence(max_eps));
    let gap_ratio = if p(2) > 0.0 { p(1) / p(2) } else { f64::INFINITY };
    Ok(H1Report { diagram, h1_by_persistence: h1, gap_ratio, max_eps, landmarks })
}

/// Regular hexagon with unit side, vertices counter-clockwise from angle 0.
pub fn hexagon() -> PointCloud {
    PointCloud::new(
        (0..6)
            .map(|i| {
                let a = std::f64::consts::PI / 3.0 * i as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
    )
    .expect("finite points")
}

/// Hexagon complex with its ears filled early: vertices at 0, sides at 1, the short
/// diagonals `(i, i+2)` and the six ears `(i, i+1, i+2)` at √3, and every
/// other simplex on the six vertices up to `max_dim` at 2.
pub fn hexagon_ear_filtration(max_dim: usize) -> Filtration {
    let s3 = 3f64.sqrt();
    let mut simplices = Vec::new();
    for mask in 1u32..64 {
        let v: Vec<usize> = (0..6).filter(|i| mask >> i & 1 == 1).collect();
        if v.len() > max_dim + 1 {
            continue;
        }
        let gap = |a: usize, b: usize| (b - a).min(6 + a - b);
        let value = match v.len() {
            1 => 0.0,
            2 if gap(v[0], v[1]) == 1 => 1.0,
            2 if gap(v[0], v[1]) == 2 => s3,
            3 if (0..6).any(|i| {
                let mut e = vec![i, (i + 1) % 6, (i + 2) % 6];
                e.sort_unstable();
                e == v
            }) =>
            {
                s3
            }
            _ => 2.0,
        };
        simplices.push(Simplex { vertices: v, value });
    }
    Filtration::from_simplices(simplices).expect("closed by construction")
}

/// Rows of the reference `∂_2` table for the hexagon: edge labels and the
/// faces each edge bounds, with vertices labelled 1 to 6.
pub const HEXAGON_D2_ROWS: [[usize; 2]; 12] =
    [[1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 1], [1, 3], [3, 5], [5, 1], [6, 2], [2, 4], [4, 6]];
pub const HEXAGON_D2_COLS: [[usize; 3]; 6] = [[1, 2, 3], [2, 3, 4], [3, 4, 5], [4, 5, 6], [5, 6, 1], [6, 1, 2]];
pub const HEXAGON_D2_TABLE: [[u8; 6]; 12] = [
    [1, 0, 0, 0, 0, 1],
    [1, 1, 0, 0, 0, 0],
    [0, 1, 1, 0, 0, 0],
    [0, 0, 1, 1, 0, 0],
    [0, 0, 0, 1, 1, 0],
    [0, 0, 0, 0, 1, 1],
    [1, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1],
    [0, 1, 0, 0, 0, 0],
    [0, 0, 0, 1, 0, 0],
];

/// Reference `∂_1` table: rows are vertices 1..6, columns the edges in
/// `HEXAGON_D2_ROWS` order.
pub fn hexagon_d1_table() -> Vec<Vec<u8>> {
    (1..=6)
        .map(|v| HEXAGON_D2_ROWS.iter().map(|e| e.contains(&v) as u8).collect())
        .collect()
}

/// Boundary matrix of `filtration` at `eps` with rows and columns put into
/// the order of the given label lists (1-based vertex labels).
pub fn boundary_in_label_order(
    filtration: &Filtration,
    k: usize,
    eps: f64,
    row_labels: &[Vec<usize>],
    col_labels: &[Vec<usize>],
) -> Result<F2Matrix> {
    let (m, rows, cols) = boundary_matrix(filtration, k, eps)?;
    let locate = |ids: &[usize], labels: &[Vec<usize>]| -> Result<Vec<usize>> {
        if ids.len() != labels.len() {
            return Err(Error::Dimension { context: "boundary labels", expected: ids.len(), found: labels.len() });
        }
        labels
            .iter()
            .map(|l| {
                let v: Vec<usize> = l.iter().map(|x| x - 1).collect();
                let id = filtration
                    .index_of(&v)
                    .ok_or_else(|| Error::InvalidArgument(format!("no simplex {l:?}")))?;
                ids.iter().position(|&i| i == id).ok_or_else(|| Error::InvalidArgument(format!("{l:?} not present at {eps}")))
            })
            .collect()
    };
    let r = locate(&rows, row_labels)?;
    let c = locate(&cols, col_labels)?;
    Ok(m.select(&r, &c))
}

//! Nyström discretization of correlation kernels on finite unions of intervals,
//! gap probabilities and count distributions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation_kernels::{AccuracyFlag, KernelSpec};
use crate::error::{Error, Result};
use crate::path::Ordering;
use crate::quadrature::GaussLegendre;

pub const MIN_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub path_index: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Finite union of bounded intervals, each attached to a path index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        let set = Self { intervals };
        set.validate()?;
        Ok(set)
    }

    /// [lower, upper] at a single path index.
    pub fn single(path_index: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![Interval { path_index, lower, upper }])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for iv in &self.intervals {
            if !(iv.lower.is_finite() && iv.upper.is_finite()) {
                return Err(Error::InvalidArgument(format!("interval bounds must be finite: {iv:?}")));
            }
            if !(iv.lower >= 0.0 && iv.lower < iv.upper) {
                return Err(Error::InvalidArgument(format!("need 0 <= lower < upper: {iv:?}")));
            }
        }
        for (a, iv) in self.intervals.iter().enumerate() {
            for jv in &self.intervals[a + 1..] {
                if iv.path_index == jv.path_index && iv.lower < jv.upper && jv.lower < iv.upper {
                    return Err(Error::InvalidArgument(format!("overlapping intervals {iv:?} and {jv:?}")));
                }
            }
        }
        Ok(())
    }

    /// Union of several sets; fails if the result overlaps.
    pub fn union(sets: &[IntervalSet]) -> Result<Self> {
        Self::new(sets.iter().flat_map(|s| s.intervals.iter().copied()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub path_index: usize,
    pub x: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub nodes: Vec<Node>,
    /// Entry (a, b) = √w_a K(p_a, x_a; p_b, x_b) √w_b.
    pub matrix: DMatrix<f64>,
    /// Number of kernel evaluations that raised a tail warning.
    pub tail_warnings: usize,
}

impl DiscretizedOperator {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Panels for one interval, split at the endpoints of intervals attached to
/// other path points with the same time. Equal-time blocks are discontinuous
/// along x = y, so matching the panels keeps that line on panel boundaries
/// wherever the sets differ.
fn panels(kernel: &KernelSpec, e: &IntervalSet, iv: &Interval) -> Vec<(f64, f64)> {
    let t = kernel.path[iv.path_index].t;
    let mut cuts: Vec<f64> = e
        .intervals
        .iter()
        .filter(|o| o.path_index != iv.path_index && kernel.path[o.path_index].t == t)
        .flat_map(|o| [o.lower, o.upper])
        .filter(|&c| c > iv.lower && c < iv.upper)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = iv.lower;
    for c in cuts {
        out.push((lo, c));
        lo = c;
    }
    out.push((lo, iv.upper));
    out
}

fn check_inputs(kernel: &KernelSpec, e: &IntervalSet, order: usize) -> Result<()> {
    kernel.validate()?;
    e.validate()?;
    if order < MIN_ORDER {
        return Err(Error::InvalidArgument(format!("quadrature order {order} < {MIN_ORDER}")));
    }
    for iv in &e.intervals {
        if iv.path_index >= kernel.len() {
            return Err(Error::Index { index: iv.path_index, len: kernel.len() });
        }
    }
    Ok(())
}

/// A quadrature panel and the index of its first node.
#[derive(Debug, Clone, Copy)]
struct Panel {
    path_index: usize,
    lo: f64,
    hi: f64,
    start: usize,
}

fn build_nodes(kernel: &KernelSpec, e: &IntervalSet, gl: &GaussLegendre) -> (Vec<Node>, Vec<Panel>) {
    let mut nodes = Vec::new();
    let mut spans = Vec::new();
    for iv in &e.intervals {
        for (a, b) in panels(kernel, e, iv) {
            spans.push(Panel { path_index: iv.path_index, lo: a, hi: b, start: nodes.len() });
            for (x, weight) in gl.mapped(a, b) {
                nodes.push(Node { path_index: iv.path_index, x, weight });
            }
        }
    }
    (nodes, spans)
}

/// Nyström matrix of 𝟙_E K 𝟙_E with `order` Gauss–Legendre nodes per panel.
///
/// Equal-time blocks carry a step along x = y (see
/// [`KernelSpec::equal_time_step`]). Where both intervals share a panel the
/// step runs through its interior, so on those panel pairs the nodal values
/// of the step term are replaced by product-integration weights. The matrix
/// is then √w_a A_ab / √w_b, a similarity transform of the unsymmetrized
/// Nyström matrix A, so determinants are unaffected.
pub fn discretize(kernel: &KernelSpec, e: &IntervalSet, order: usize) -> Result<DiscretizedOperator> {
    check_inputs(kernel, e, order)?;
    let gl = GaussLegendre::new(order);
    let (nodes, spans) = build_nodes(kernel, e, &gl);
    let n = nodes.len();
    let rows: Vec<Result<(Vec<f64>, usize)>> = nodes
        .par_iter()
        .map(|a| {
            let mut row = Vec::with_capacity(n);
            let mut warnings = 0;
            for b in &nodes {
                let kv = kernel.eval(a.path_index, a.x, b.path_index, b.x)?;
                if kv.flag == AccuracyFlag::TailWarning {
                    warnings += 1;
                }
                row.push(a.weight.sqrt() * kv.value * b.weight.sqrt());
            }
            Ok((row, warnings))
        })
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    let mut tail_warnings = 0;
    for (i, r) in rows.into_iter().enumerate() {
        let (row, w) = r?;
        tail_warnings += w;
        for (j, v) in row.into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    for (a, b, delta) in step_corrections(kernel, &nodes, &spans, &gl)? {
        matrix[(a, b)] += delta;
    }
    Ok(DiscretizedOperator { nodes, matrix, tail_warnings })
}

/// Barycentric weights of the Gauss–Legendre nodes, scaled to max 1.
fn barycentric_weights(xi: &[f64]) -> Vec<f64> {
    let logs: Vec<(f64, f64)> = xi
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut ln = 0.0;
            let mut sign = 1.0;
            for (j, &b) in xi.iter().enumerate() {
                if j != k {
                    ln -= (a - b).abs().ln();
                    if a < b {
                        sign = -sign;
                    }
                }
            }
            (sign, ln)
        })
        .collect();
    let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|&(sign, ln)| sign * (ln - top).exp()).collect()
}

/// Lagrange basis of the nodes `xi` evaluated at ξ, written into `out`.
fn lagrange_basis(xi: &[f64], bary: &[f64], v: f64, out: &mut [f64]) {
    if let Some(k) = xi.iter().position(|&x| x == v) {
        out.fill(0.0);
        out[k] = 1.0;
        return;
    }
    let mut total = 0.0;
    for ((o, &x), &l) in out.iter_mut().zip(xi).zip(bary) {
        *o = l / (v - x);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// [c, e] cut geometrically towards 0, where the step functions may carry
/// power-law factors.
fn graded_pieces(c: f64, e: f64) -> Vec<(f64, f64)> {
    const RATIO: f64 = 4.0;
    const DEPTH: i32 = 24;
    let mut cuts = vec![c];
    if c > 0.0 {
        let mut p = c * RATIO;
        while p < e {
            cuts.push(p);
            p *= RATIO;
        }
    } else {
        cuts.extend((1..=DEPTH).rev().map(|k| e * RATIO.powi(-k)));
    }
    cuts.push(e);
    cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

fn step_corrections(
    kernel: &KernelSpec,
    nodes: &[Node],
    spans: &[Panel],
    gl: &GaussLegendre,
) -> Result<Vec<(usize, usize, f64)>> {
    let m = gl.order();
    let xi = gl.nodes();
    let bary = barycentric_weights(xi);
    let mut pairs = Vec::new();
    for p in spans {
        for r in spans {
            let same_time = kernel.path[p.path_index].t == kernel.path[r.path_index].t;
            if p.path_index < r.path_index && same_time && p.lo == r.lo && p.hi == r.hi {
                pairs.push((*p, *r));
            }
        }
    }
    let rows: Vec<Result<Vec<(usize, usize, f64)>>> = pairs
        .par_iter()
        .flat_map_iter(|&(p, r)| (0..m).map(move |a| (p, r, a)))
        .map(|(p, r, a)| {
            let row = p.start + a;
            let x = nodes[row].x;
            let (c, e) = match kernel.ordering {
                Ordering::TimeLike => (x, p.hi),
                Ordering::SpaceLike => (p.lo, x),
            };
            // Interpolate f(z)/z^c, which is smooth, rather than f itself.
            let power = kernel.edge_power(r.path_index);
            let col_scale: Vec<f64> = (0..m).map(|b| nodes[r.start + b].x.powf(-power)).collect();
            let half = 0.5 * (p.hi - p.lo);
            let mid = 0.5 * (p.hi + p.lo);
            let mut omega = vec![0.0; m];
            let mut basis = vec![0.0; m];
            for (lo, hi) in graded_pieces(c, e) {
                for (z, w) in gl.mapped(lo, hi) {
                    let f = kernel.equal_time_step(p.path_index, x, r.path_index, z)?.unwrap_or(0.0);
                    if f == 0.0 {
                        continue;
                    }
                    lagrange_basis(xi, &bary, (z - mid) / half, &mut basis);
                    let wf = w * f * z.powf(power);
                    for ((o, l), sc) in omega.iter_mut().zip(&basis).zip(&col_scale) {
                        *o += wf * l * sc;
                    }
                }
            }
            let wa = nodes[row].weight.sqrt();
            (0..m)
                .map(|b| {
                    let col = r.start + b;
                    let node = &nodes[col];
                    let s = kernel.equal_time_step(p.path_index, x, r.path_index, node.x)?.unwrap_or(0.0);
                    let wb = node.weight.sqrt();
                    Ok((row, col, wa * wb * s - wa * omega[b] / wb))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn det(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.lu().determinant()
}

/// ℙ(no particles in E) = det(I − M).
pub fn gap_probability(kernel: &KernelSpec, e: &IntervalSet, order: usize) -> Result<f64> {
    let op = discretize(kernel, e, order)?;
    Ok(gap_from_operator(&op))
}

pub fn gap_from_operator(op: &DiscretizedOperator) -> f64 {
    let n = op.dim();
    det(DMatrix::identity(n, n) - &op.matrix)
}

/// ∫_E K(x,x) dx by the same quadrature.
pub fn expected_count(kernel: &KernelSpec, e: &IntervalSet, order: usize) -> Result<f64> {
    check_inputs(kernel, e, order)?;
    let mut total = 0.0;
    for node in build_nodes(kernel, e, &GaussLegendre::new(order)).0 {
        total += node.weight * kernel.eval(node.path_index, node.x, node.path_index, node.x)?.value;
    }
    Ok(total)
}

/// Joint law of the counts (N_{E_1}, …, N_{E_ℓ}), stored row-major with the
/// last group fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTable {
    pub n_max: Vec<usize>,
    pub degrees: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl CountTable {
    pub fn get(&self, counts: &[usize]) -> Result<f64> {
        if counts.len() != self.n_max.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} counts, got {}",
                self.n_max.len(),
                counts.len()
            )));
        }
        let mut flat = 0;
        for (&c, &m) in counts.iter().zip(&self.n_max) {
            if c > m {
                return Err(Error::Range(format!("count {c} beyond the tabulated maximum {m}")));
            }
            flat = flat * (m + 1) + c;
        }
        Ok(self.probabilities[flat])
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Marginal law of one group.
    pub fn marginal(&self, group: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_max[group] + 1];
        for (flat, p) in self.probabilities.iter().enumerate() {
            out[self.unflatten(flat)[group]] += p;
        }
        out
    }

    /// Σ n·p(n) for one group over the tabulated range.
    pub fn mean(&self, group: usize) -> f64 {
        self.marginal(group).iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n_max.len()];
        for g in (0..self.n_max.len()).rev() {
            let m = self.n_max[g] + 1;
            idx[g] = flat % m;
            flat /= m;
        }
        idx
    }
}

/// Extra polynomial degree fitted beyond the requested count, so aliasing of
/// the (small) higher coefficients stays away from the reported ones.
const DEGREE_MARGIN: usize = 8;

fn chebyshev_nodes(m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos())
        .collect()
}

/// Monomial coefficients of the degree m−1 interpolant through values at the
/// m Chebyshev nodes.
fn chebyshev_values_to_monomial(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut cheb = vec![0.0; m];
    for (j, c) in cheb.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, v) in values.iter().enumerate() {
            s += v * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / m as f64).cos();
        }
        *c = s * if j == 0 { 1.0 } else { 2.0 } / m as f64;
    }
    // Σ c_j T_j in the monomial basis, accumulating T_j by recurrence.
    let mut out = vec![0.0; m];
    let mut t_prev = vec![0.0; m];
    let mut t_cur = vec![0.0; m];
    t_prev[0] = 1.0;
    if m > 1 {
        t_cur[1] = 1.0;
    }
    for (j, &c) in cheb.iter().enumerate() {
        let tj = if j == 0 { &t_prev } else { &t_cur };
        for (o, t) in out.iter_mut().zip(tj) {
            *o += c * t;
        }
        if j >= 1 && j + 1 < m {
            let mut next = vec![0.0; m];
            for i in 0..m {
                next[i] = -t_prev[i] + if i > 0 { 2.0 * t_cur[i - 1] } else { 0.0 };
            }
            t_prev = std::mem::replace(&mut t_cur, next);
        }
    }
    out
}

/// Joint count distribution over the groups. D(z) = det(I + Σ_j (z_j − 1) M_j)
/// is evaluated on a tensor grid of Chebyshev nodes, interpolated, and its
/// monomial coefficients read off.
pub fn count_distribution(
    kernel: &KernelSpec,
    groups: &[IntervalSet],
    n_max: &[usize],
    order: usize,
) -> Result<CountTable> {
    if groups.len() != n_max.len() {
        return Err(Error::InvalidArgument("one n_max per group is required".into()));
    }
    if groups.is_empty() {
        return Err(Error::InvalidArgument("at least one group is required".into()));
    }
    let all = IntervalSet::union(groups)?;
    let op = discretize(kernel, &all, order)?;
    // Nodes are emitted interval by interval, and sub-panel splits depend on
    // the whole union, so count panels against it.
    let mut group_of = Vec::with_capacity(op.dim());
    let mut group_sizes = vec![0usize; groups.len()];
    for (g, set) in groups.iter().enumerate() {
        for iv in &set.intervals {
            let k = panels(kernel, &all, iv).len() * order;
            group_of.extend(std::iter::repeat(g).take(k));
            group_sizes[g] += k;
        }
    }
    debug_assert_eq!(group_of.len(), op.dim());

    let mut degrees = Vec::with_capacity(groups.len());
    for (g, &nm) in n_max.iter().enumerate() {
        if nm > group_sizes[g] {
            return Err(Error::Range(format!(
                "count {nm} exceeds the fitted degree {} of group {g}",
                group_sizes[g]
            )));
        }
        degrees.push((nm + DEGREE_MARGIN).min(group_sizes[g]));
    }

    let grids: Vec<Vec<f64>> = degrees.iter().map(|&d| chebyshev_nodes(d + 1)).collect();
    let shape: Vec<usize> = degrees.iter().map(|&d| d + 1).collect();
    let total: usize = shape.iter().product();
    let n = op.dim();
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0; shape.len()];
            let mut f = flat;
            for g in (0..shape.len()).rev() {
                idx[g] = f % shape[g];
                f /= shape[g];
            }
            let mut m = DMatrix::identity(n, n);
            for a in 0..n {
                let scale = grids[group_of[a]][idx[group_of[a]]] - 1.0;
                for b in 0..n {
                    m[(a, b)] += scale * op.matrix[(a, b)];
                }
            }
            det(m)
        })
        .collect();

    // Apply the 1D value→monomial map along each axis in turn.
    let mut coeffs = values;
    for axis in 0..shape.len() {
        let stride: usize = shape[axis + 1..].iter().product();
        let len = shape[axis];
        let outer = total / (len * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * len * stride + s;
                let line: Vec<f64> = (0..len).map(|k| coeffs[base + k * stride]).collect();
                for (k, c) in chebyshev_values_to_monomial(&line).into_iter().enumerate() {
                    coeffs[base + k * stride] = c;
                }
            }
        }
    }

    let out_shape: Vec<usize> = n_max.iter().map(|&m| m + 1).collect();
    let out_total: usize = out_shape.iter().product();
    let mut probabilities = Vec::with_capacity(out_total);
    for flat in 0..out_total {
        let mut f = flat;
        let mut src = 0;
        let mut idx = vec![0; out_shape.len()];
        for g in (0..out_shape.len()).rev() {
            idx[g] = f % out_shape[g];
            f /= out_shape[g];
        }
        for g in 0..shape.len() {
            src = src * shape[g] + idx[g];
        }
        probabilities.push(coeffs[src]);
    }
    Ok(CountTable { n_max: n_max.to_vec(), degrees, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{Ordering, PathPoint};
    use approx::assert_relative_eq;

    fn bessel(alpha: u32) -> KernelSpec {
        KernelSpec::bessel(Ordering::TimeLike, vec![PathPoint::new(alpha, 0.0)]).unwrap()
    }

    #[test]
    fn interval_validation() {
        assert!(IntervalSet::single(0, 1.0, 1.0).is_err());
        assert!(IntervalSet::single(0, -1.0, 1.0).is_err());
        assert!(IntervalSet::single(0, 0.0, f64::INFINITY).is_err());
        let ok = vec![
            Interval { path_index: 0, lower: 0.0, upper: 1.0 },
            Interval { path_index: 0, lower: 1.0, upper: 2.0 },
            Interval { path_index: 1, lower: 0.5, upper: 2.0 },
        ];
        assert!(IntervalSet::new(ok).is_ok());
        let bad = vec![
            Interval { path_index: 0, lower: 0.0, upper: 1.5 },
            Interval { path_index: 0, lower: 1.0, upper: 2.0 },
        ];
        assert!(IntervalSet::new(bad).is_err());
    }

    #[test]
    fn trivial_shapes() {
        let k = bessel(0);
        let op = discretize(&k, &IntervalSet::empty(), 10).unwrap();
        assert_eq!(op.dim(), 0);
        assert_eq!(gap_probability(&k, &IntervalSet::empty(), 10).unwrap(), 1.0);
        let op = discretize(&k, &IntervalSet::single(0, 0.0, 1.0).unwrap(), 7).unwrap();
        assert_eq!(op.matrix.shape(), (7, 7));
        assert!(gap_probability(&k, &IntervalSet::single(0, 0.0, 1.0).unwrap(), 3).is_err());
        assert!(matches!(
            gap_probability(&k, &IntervalSet::single(1, 0.0, 1.0).unwrap(), 8),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn hard_edge_gap() {
        let k = bessel(0);
        for s in [1.0, 2.0, 4.0, 8.0] {
            let g = gap_probability(&k, &IntervalSet::single(0, 0.0, s).unwrap(), 60).unwrap();
            assert_relative_eq!(g, (-s / 4.0).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn monomial_conversion_is_exact_for_polynomials() {
        let p = [0.3, -1.0, 0.25, 2.0, 0.0, -0.5];
        let nodes = chebyshev_nodes(p.len());
        let vals: Vec<f64> = nodes
            .iter()
            .map(|&z| p.iter().rev().fold(0.0, |acc, c| acc * z + c))
            .collect();
        for (a, b) in chebyshev_values_to_monomial(&vals).iter().zip(p) {
            assert_relative_eq!(*a, b, epsilon = 1e-13);
        }
        assert_eq!(chebyshev_values_to_monomial(&[2.5]), vec![2.5]);
    }

    #[test]
    fn lagrange_basis_reproduces_polynomials() {
        let gl = GaussLegendre::new(12);
        let xi = gl.nodes();
        let bary = barycentric_weights(xi);
        let poly = |v: f64| 0.5 - v + 3.0 * v.powi(5) - v.powi(11);
        let mut basis = vec![0.0; 12];
        for v in [-0.97, -0.3, 0.0, 0.41, 1.0, xi[3]] {
            lagrange_basis(xi, &bary, v, &mut basis);
            let interp: f64 = basis.iter().zip(xi).map(|(l, &x)| l * poly(x)).sum();
            assert_relative_eq!(interp, poly(v), epsilon = 1e-12);
        }
    }

    #[test]
    fn graded_pieces_cover_the_range() {
        for (c, e) in [(0.0, 2.0), (1e-4, 3.0), (1.0, 2.5)] {
            let pieces = graded_pieces(c, e);
            assert_eq!(pieces[0].0, c);
            assert_eq!(pieces.last().unwrap().1, e);
            assert!(pieces.windows(2).all(|w| w[0].1 == w[1].0));
        }
        assert_eq!(graded_pieces(1.0, 2.5).len(), 1);
    }

    #[test]
    fn counts_agree_with_gap() {
        let k = bessel(0);
        let e = IntervalSet::single(0, 0.0, 4.0).unwrap();
        let table = count_distribution(&k, &[e.clone()], &[8], 40).unwrap();
        let gap = gap_probability(&k, &e, 40).unwrap();
        assert_relative_eq!(table.get(&[0]).unwrap(), gap, epsilon = 1e-10);
        assert!(table.total() > 1.0 - 1e-4);
        assert!(table.get(&[9]).is_err());
        assert!(count_distribution(&k, &[e], &[41], 40).is_err());
    }
}

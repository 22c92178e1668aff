//! Interlacing predicates, Sasamoto's determinant, uniform interlacing bridges
//! and the candidate/accept Gibbs resampler.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

fn is_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

fn interlace_unchecked(a: &[f64], b: &[f64], strict: bool) -> bool {
    let lt = |p: f64, q: f64| if strict { p < q } else { p <= q };
    for i in 0..a.len() {
        if !lt(a[i], b[i]) {
            return false;
        }
        if i + 1 < a.len() && !lt(b[i], a[i + 1]) {
            return false;
        }
    }
    true
}

/// a_1 < b_1 < a_2 < … < a_n < b_n (strict) or the same with ≤.
pub fn interlaces(a: &[f64], b: &[f64], strict: bool) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if !is_sorted(a) || !is_sorted(b) {
        return Err(Error::Domain("interlacing needs sorted vectors".into()));
    }
    Ok(interlace_unchecked(a, b, strict))
}

/// det[𝟙(a_i < b_j)] by fraction-free (Bareiss) elimination.
pub fn sasamoto_det(a: &[f64], b: &[f64]) -> Result<i64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if !is_sorted(a) || !is_sorted(b) {
        return Err(Error::Domain("Sasamoto's identity needs sorted vectors".into()));
    }
    if a.iter().any(|x| b.contains(x)) {
        return Err(Error::Precondition("a and b share a value".into()));
    }
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a
        .iter()
        .map(|&ai| b.iter().map(|&bj| i128::from(ai < bj)).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    let det = if n == 0 { 1 } else { sign * m[n - 1][n - 1] };
    Ok(det as i64)
}

/// Boundary data for resampling lines 1..k over α ∈ ⟦a+1, b−1⟧.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterlacingWindow {
    pub k: usize,
    pub a: u32,
    pub b: u32,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Line k+1 over ⟦a, b⟧.
    pub z: Option<Vec<f64>>,
}

impl InterlacingWindow {
    pub fn new(a: u32, b: u32, x: Vec<f64>, y: Vec<f64>, z: Option<Vec<f64>>) -> Result<Self> {
        let k = x.len();
        let w = Self { k, a, b, x, y, z };
        w.validate()?;
        Ok(w)
    }

    pub fn interior(&self) -> usize {
        (self.b - self.a - 1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.a >= self.b {
            return Err(Error::InvalidArgument(format!("need a < b, got {} and {}", self.a, self.b)));
        }
        if self.k == 0 || self.y.len() != self.k {
            return Err(Error::InvalidArgument("x and y need the same positive length".into()));
        }
        if !self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("boundary values must be finite".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.x) || !increasing(&self.y) {
            return Err(Error::Domain("x and y must be strictly increasing".into()));
        }
        if let Some(z) = &self.z {
            if z.len() != (self.b - self.a + 1) as usize {
                return Err(Error::InvalidArgument(format!(
                    "top boundary needs {} values, got {}",
                    self.b - self.a + 1,
                    z.len()
                )));
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("top boundary values must be finite".into()));
            }
        }
        if !self.is_compatible() {
            return Err(Error::Precondition("interlacing set is empty for this boundary".into()));
        }
        Ok(())
    }

    /// Whether the interlacing set is non-empty. All constraints have the form
    /// u ≤ v, so propagating lower bounds through the chain decides it.
    pub fn is_compatible(&self) -> bool {
        let rows = self.k + usize::from(self.z.is_some());
        let cols = (self.b - self.a + 1) as usize;
        let fixed = |c: usize, r: usize| -> Option<f64> {
            if r == self.k {
                return self.z.as_ref().map(|z| z[c]);
            }
            if c == 0 {
                Some(self.x[r])
            } else if c == cols - 1 {
                Some(self.y[r])
            } else {
                None
            }
        };
        // Edges (c,r) → (c+1,r) and (c+1,r) → (c,r+1); 2r + c increases along both.
        let mut order: Vec<(usize, usize)> = (0..cols).flat_map(|c| (0..rows).map(move |r| (c, r))).collect();
        order.sort_by_key(|&(c, r)| 2 * r + c);
        let mut low = vec![vec![f64::NEG_INFINITY; rows]; cols];
        for (c, r) in order {
            let mut lb = f64::NEG_INFINITY;
            if c > 0 {
                lb = lb.max(low[c - 1][r]);
            }
            if c + 1 < cols && r > 0 {
                lb = lb.max(low[c + 1][r - 1]);
            }
            match fixed(c, r) {
                Some(v) => {
                    if lb > v {
                        return false;
                    }
                    low[c][r] = v;
                }
                None => low[c][r] = lb,
            }
        }
        true
    }

    /// Column c ∈ ⟦0, b−a⟧ of a configuration, with z appended when present.
    fn column<'a>(&'a self, lines: &'a [Vec<f64>], c: usize, buf: &mut Vec<f64>) {
        buf.clear();
        let last = (self.b - self.a) as usize;
        if c == 0 {
            buf.extend_from_slice(&self.x);
        } else if c == last {
            buf.extend_from_slice(&self.y);
        } else {
            buf.extend_from_slice(&lines[c - 1]);
        }
        if let Some(z) = &self.z {
            buf.push(z[c]);
        }
    }

    /// The full weak-interlacing chain for interior lines w^{a+1..b−1}.
    pub fn accepts(&self, lines: &[Vec<f64>]) -> bool {
        let (mut p, mut q) = (Vec::new(), Vec::new());
        self.column(lines, 0, &mut p);
        for c in 1..=(self.b - self.a) as usize {
            self.column(lines, c, &mut q);
            if !interlace_unchecked(&p, &q, false) {
                return false;
            }
            std::mem::swap(&mut p, &mut q);
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeConfiguration {
    /// lines[ℓ − a − 1] = w^ℓ ∈ 𝕎^k.
    pub lines: Vec<Vec<f64>>,
    pub attempts: u64,
}

/// Uniform sample from the interlacing set by rejection from sorted
/// per-line uniforms.
pub fn sample_bridge<R: Rng + ?Sized>(
    window: &InterlacingWindow,
    rng: &mut R,
    max_attempts: u64,
) -> Result<BridgeConfiguration> {
    window.validate()?;
    let m = window.interior();
    let k = window.k;
    if m == 0 {
        return Ok(BridgeConfiguration { lines: vec![], attempts: 0 });
    }
    let mut per_line = vec![vec![0.0; m]; k];
    let mut lines = vec![vec![0.0; k]; m];
    for attempt in 1..=max_attempts {
        for (j, draws) in per_line.iter_mut().enumerate() {
            let (lo, hi) = (window.x[j], window.y[j]);
            for d in draws.iter_mut() {
                *d = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            }
            draws.sort_by(|p, q| p.total_cmp(q));
        }
        for (l, line) in lines.iter_mut().enumerate() {
            for (j, v) in line.iter_mut().enumerate() {
                *v = per_line[j][l];
            }
        }
        if window.accepts(&lines) {
            return Ok(BridgeConfiguration { lines, attempts: attempt });
        }
    }
    Err(Error::Starvation { attempts: max_attempts, rate: 0.0 })
}

/// Lines of a field at a fixed time over consecutive α = alpha0, alpha0+1, ….
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineEnsemble {
    pub alpha0: u32,
    /// values[α − alpha0] = sorted points at that α.
    pub values: Vec<Vec<f64>>,
}

impl LineEnsemble {
    pub fn new(alpha0: u32, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("line ensemble is empty".into()));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n || !is_sorted(v)) {
            return Err(Error::InvalidArgument("each column needs the same number of sorted points".into()));
        }
        Ok(Self { alpha0, values })
    }

    pub fn lines(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, alpha: u32) -> Option<&[f64]> {
        let i = alpha.checked_sub(self.alpha0)? as usize;
        self.values.get(i).map(|v| v.as_slice())
    }

    /// Boundary data for lines 1..k on ⟦a, b⟧; the top line is omitted when k
    /// is the number of lines.
    pub fn window(&self, k: usize, a: u32, b: u32) -> Result<InterlacingWindow> {
        let n = self.lines();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
        }
        let col = |alpha: u32| {
            self.at(alpha)
                .ok_or_else(|| Error::InvalidArgument(format!("alpha {alpha} outside the ensemble")))
        };
        if a >= b {
            return Err(Error::InvalidArgument(format!("need a < b, got {a} and {b}")));
        }
        let x = col(a)?[..k].to_vec();
        let y = col(b)?[..k].to_vec();
        let z = if k < n {
            Some((a..=b).map(|al| col(al).map(|c| c[k])).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        InterlacingWindow::new(a, b, x, y, z)
    }
}

/// Replace lines 1..k on ⟦a+1, b−1⟧ by a uniform interlacing bridge.
pub fn gibbs_resample<R: Rng + ?Sized>(
    ensemble: &LineEnsemble,
    k: usize,
    a: u32,
    b: u32,
    rng: &mut R,
    max_attempts: u64,
) -> Result<(LineEnsemble, u64)> {
    let window = ensemble.window(k, a, b)?;
    let bridge = sample_bridge(&window, rng, max_attempts)?;
    let mut out = ensemble.clone();
    for (l, line) in bridge.lines.iter().enumerate() {
        let col = (a + 1 + l as u32 - ensemble.alpha0) as usize;
        out.values[col][..k].copy_from_slice(line);
    }
    Ok((out, bridge.attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interlacing_examples() {
        assert!(interlaces(&[1.0, 3.0], &[2.0, 4.0], true).unwrap());
        assert!(!interlaces(&[1.0, 2.0], &[3.0, 4.0], true).unwrap());
        assert!(interlaces(&[1.0, 2.0], &[1.0, 2.0], false).unwrap());
        assert!(!interlaces(&[1.0, 2.0], &[1.0, 2.0], true).unwrap());
        assert!(interlaces(&[2.0, 1.0], &[3.0, 4.0], false).is_err());
        assert!(interlaces(&[1.0], &[3.0, 4.0], false).is_err());
    }

    #[test]
    fn sasamoto_examples() {
        assert_eq!(sasamoto_det(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 1);
        assert_eq!(sasamoto_det(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0);
        assert_eq!(sasamoto_det(&[], &[]).unwrap(), 1);
        assert!(matches!(sasamoto_det(&[1.0, 2.0], &[2.0, 4.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn compatibility() {
        assert!(InterlacingWindow::new(0, 2, vec![1.0, 3.0], vec![2.0, 4.0], None).is_ok());
        // Two steps allow y_1 to pass x_2.
        assert!(InterlacingWindow::new(0, 2, vec![1.0, 2.0], vec![3.0, 4.0], None).is_ok());
        assert!(InterlacingWindow::new(0, 1, vec![1.0, 2.0], vec![3.0, 4.0], None).is_err());
        assert!(InterlacingWindow::new(0, 3, vec![1.0, 2.0], vec![0.5, 4.0], None).is_err());
        // Top boundary: w^{1}_1 ≤ z^0 forces x_1 ≤ z^0.
        assert!(InterlacingWindow::new(0, 2, vec![1.0], vec![2.0], Some(vec![1.5, 2.5, 3.0])).is_ok());
        assert!(InterlacingWindow::new(0, 2, vec![1.0], vec![2.0], Some(vec![0.5, 2.5, 3.0])).is_err());
        assert!(InterlacingWindow::new(0, 2, vec![1.0], vec![2.0], Some(vec![1.5, 2.5])).is_err());
    }

    #[test]
    fn degenerate_window_is_fixed() {
        let w = InterlacingWindow::new(0, 4, vec![1.0, 2.0], vec![1.0, 2.0], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_bridge(&w, &mut rng, 10).unwrap();
        assert_eq!(b.lines, vec![vec![1.0, 2.0]; 3]);
    }

    #[test]
    fn starvation_is_reported() {
        // Feasible, but every interior point must land below 1e-6.
        let z = vec![1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1.0, 1.0];
        let w = InterlacingWindow::new(0, 6, vec![0.0], vec![1.0], Some(z)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(sample_bridge(&w, &mut rng, 100), Err(Error::Starvation { attempts: 100, .. })));
    }

    #[test]
    fn zero_interior_resample_is_identity() {
        let e = LineEnsemble::new(3, vec![vec![1.0, 2.0, 5.0], vec![1.5, 3.0, 6.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (out, attempts) = gibbs_resample(&e, 2, 3, 4, &mut rng, 10).unwrap();
        assert_eq!(out, e);
        assert_eq!(attempts, 0);
    }
}

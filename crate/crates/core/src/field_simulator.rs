//! Exact coupled sampling of the Laguerre field X^N(α,t).
//!
//! One realisation stores every complex Gaussian increment, so the same
//! randomness serves all (α, t) on the grid: α selects the first N+α rows of
//! the Brownian matrix and t selects how many time increments are summed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::path::{classify_path, PathClass, PathPoint};

/// Name recorded in manifests.
pub const GENERATOR: &str = "ChaCha8Rng";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub n: usize,
    pub alphas: Vec<u32>,
    pub times: Vec<f64>,
}

impl FieldGrid {
    pub fn new(n: usize, alphas: Vec<u32>, times: Vec<f64>) -> Result<Self> {
        let g = Self { n, alphas, times };
        g.validate()?;
        Ok(g)
    }

    /// Grid at the absolute times 1 + t/4N for the given hard-edge times.
    pub fn hard_edge(n: usize, alphas: Vec<u32>, scaled_times: &[f64]) -> Result<Self> {
        let times = scaled_times.iter().map(|&t| absolute_time(n, t)).collect();
        Self::new(n, alphas, times)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if self.alphas.is_empty() || self.times.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one alpha and one time".into()));
        }
        if !self.alphas.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("alphas must be strictly increasing".into()));
        }
        if !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        if !self.times.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::InvalidArgument("times must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.n + *self.alphas.last().unwrap() as usize
    }

    pub fn alpha_index(&self, alpha: u32) -> Option<usize> {
        self.alphas.iter().position(|&a| a == alpha)
    }

    /// Index of a grid time equal to `t` up to 1e-12 relative.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * s.abs().max(1.0))
    }
}

/// 1 + t/4N.
pub fn absolute_time(n: usize, t: f64) -> f64 {
    1.0 + t / (4.0 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

#[derive(Debug, Clone)]
pub struct FieldSample {
    pub grid: FieldGrid,
    /// Increment of B over each time interval, laid out [interval][row][column].
    increments: Vec<Complex64>,
    /// Ascending eigenvalues, laid out [alpha index][time index].
    eigenvalues: Vec<Vec<f64>>,
}

impl FieldSample {
    pub fn eigenvalues(&self, alpha: u32, t: f64) -> Option<&[f64]> {
        let a = self.grid.alpha_index(alpha)?;
        let k = self.grid.time_index(t)?;
        Some(self.eigenvalues_at(a, k))
    }

    pub fn eigenvalues_at(&self, alpha_index: usize, time_index: usize) -> &[f64] {
        &self.eigenvalues[alpha_index * self.grid.times.len() + time_index]
    }

    pub fn increments(&self) -> &[Complex64] {
        &self.increments
    }

    /// A^N(α, t) for grid indices, rebuilt from the stored increments.
    pub fn matrix(&self, alpha_index: usize, time_index: usize) -> DMatrix<Complex64> {
        let rows = self.grid.n + self.grid.alphas[alpha_index] as usize;
        let full = self.grid.rows();
        let n = self.grid.n;
        let mut a = DMatrix::<Complex64>::zeros(rows, n);
        for k in 0..=time_index {
            let block = &self.increments[k * full * n..(k + 1) * full * n];
            for r in 0..rows {
                for c in 0..n {
                    a[(r, c)] += block[r * n + c];
                }
            }
        }
        a
    }
}

/// Draw one realisation of the field on `grid`.
///
/// Increments are drawn interval by interval, row by row, column by column,
/// real part before imaginary part, each N(0, Δt/2).
pub fn sample_field(grid: &FieldGrid, stream: RngStream) -> Result<FieldSample> {
    grid.validate()?;
    let mut rng = stream.rng();
    let n = grid.n;
    let rows = grid.rows();
    let nt = grid.times.len();
    let mut increments = Vec::with_capacity(nt * rows * n);
    let mut prev = 0.0;
    for &t in &grid.times {
        let sd = (0.5 * (t - prev)).sqrt();
        prev = t;
        for _ in 0..rows * n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            increments.push(Complex64::new(sd * re, sd * im));
        }
    }

    let mut eigenvalues = vec![Vec::new(); grid.alphas.len() * nt];
    let mut current = vec![Complex64::new(0.0, 0.0); rows * n];
    for k in 0..nt {
        for (c, d) in current.iter_mut().zip(&increments[k * rows * n..(k + 1) * rows * n]) {
            *c += d;
        }
        let mut gram = DMatrix::<Complex64>::zeros(n, n);
        let mut used = 0usize;
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            let upto = n + alpha as usize;
            for r in used..upto {
                add_row_outer(&mut gram, &current[r * n..(r + 1) * n]);
            }
            used = upto;
            let ev = hermitian_eigenvalues(mirror_upper(&gram))
                .ok_or(Error::Simulation { alpha, t: grid.times[k] })?;
            eigenvalues[ai * nt + k] = ev;
        }
    }
    Ok(FieldSample { grid: grid.clone(), increments, eigenvalues })
}

/// Upper triangle of G += a^* a for the row vector a.
fn add_row_outer(gram: &mut DMatrix<Complex64>, row: &[Complex64]) {
    let n = row.len();
    for j in 0..n {
        let aj = row[j];
        let col = &mut gram.column_mut(j);
        for i in 0..=j {
            col[i] += row[i].conj() * aj;
        }
    }
}

fn mirror_upper(upper: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut m = upper.clone();
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            m[(i, j)] = m[(j, i)].conj();
        }
    }
    m
}

/// Ascending eigenvalues of a Hermitian matrix, `None` if non-finite.
pub fn hermitian_eigenvalues(m: DMatrix<Complex64>) -> Option<Vec<f64>> {
    let ev = m.symmetric_eigenvalues();
    let mut v: Vec<f64> = ev.iter().copied().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(v)
}

/// The hard-edge scaled field 𝓑^N(α,t) = 4N · X^N(α, 1 + t/4N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSample {
    pub n: usize,
    pub alphas: Vec<u32>,
    pub times: Vec<f64>,
    /// [alpha index][time index]
    pub values: Vec<Vec<f64>>,
}

impl ScaledSample {
    pub fn get(&self, alpha: u32, t: f64) -> Option<&[f64]> {
        let a = self.alphas.iter().position(|&x| x == alpha)?;
        let k = self.times.iter().position(|&s| s == t)?;
        Some(&self.values[a * self.times.len() + k])
    }

    pub fn at(&self, alpha_index: usize, time_index: usize) -> &[f64] {
        &self.values[alpha_index * self.times.len() + time_index]
    }
}

pub fn hard_edge_rescale(sample: &FieldSample, t_targets: &[f64]) -> Result<ScaledSample> {
    let n = sample.grid.n;
    let scale = 4.0 * n as f64;
    let mut idx = Vec::with_capacity(t_targets.len());
    for &t in t_targets {
        if !(t >= -scale) || !t.is_finite() {
            return Err(Error::Range(format!("hard-edge time {t} must be finite and >= -4N")));
        }
        let abs = absolute_time(n, t);
        let k = sample.grid.time_index(abs).ok_or_else(|| {
            Error::Range(format!("absolute time {abs} (t = {t}) is not on the sampled grid"))
        })?;
        idx.push(k);
    }
    let mut values = Vec::with_capacity(sample.grid.alphas.len() * idx.len());
    for a in 0..sample.grid.alphas.len() {
        for &k in &idx {
            values.push(sample.eigenvalues_at(a, k).iter().map(|x| scale * x).collect());
        }
    }
    Ok(ScaledSample {
        n,
        alphas: sample.grid.alphas.clone(),
        times: t_targets.to_vec(),
        values,
    })
}

//! Monte Carlo estimators of one- and two-point correlation functions and gap
//! probabilities, z-score comparison against predictions, and KS tests.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field_simulator::{sample_field, FieldGrid, RngStream};
use crate::fredholm::IntervalSet;
use crate::gibbs_ensemble::{gibbs_resample, LineEnsemble, DEFAULT_MAX_ATTEMPTS};

/// Per-bin estimates of a 1D or 2D intensity. Cells are row-major over the
/// edge lists (the last dimension fastest).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedEstimate {
    pub edges: Vec<Vec<f64>>,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub replicas: usize,
}

impl BinnedEstimate {
    pub fn dims(&self) -> usize {
        self.edges.len()
    }

    pub fn len(&self) -> usize {
        self.estimate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimate.is_empty()
    }

    /// Lower and upper corner of a cell.
    pub fn cell(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let mut idx = vec![0; self.dims()];
        let mut f = flat;
        for d in (0..self.dims()).rev() {
            let m = self.edges[d].len() - 1;
            idx[d] = f % m;
            f /= m;
        }
        let lo = idx.iter().enumerate().map(|(d, &i)| self.edges[d][i]).collect();
        let hi = idx.iter().enumerate().map(|(d, &i)| self.edges[d][i + 1]).collect();
        (lo, hi)
    }

    /// Number of cells whose standard error is zero.
    pub fn degenerate(&self) -> usize {
        self.std_error.iter().filter(|&&s| s == 0.0).count()
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if !edges.iter().all(|e| e.is_finite()) || !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("bin edges must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Mean and standard error over replicas of per-replica cell counts, divided
/// by the cell volumes.
fn reduce<F>(replicas: usize, edges: Vec<Vec<f64>>, counts: F) -> BinnedEstimate
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let cells: usize = edges.iter().map(|e| e.len() - 1).product();
    let (sum, sum_sq) = (0..replicas)
        .into_par_iter()
        .fold(
            || (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]),
            |(mut s, mut q, mut buf), r| {
                buf.iter_mut().for_each(|v| *v = 0.0);
                counts(r, &mut buf);
                for c in 0..cells {
                    s[c] += buf[c];
                    q[c] += buf[c] * buf[c];
                }
                (s, q, buf)
            },
        )
        .map(|(s, q, _)| (s, q))
        .reduce(
            || (vec![0.0; cells], vec![0.0; cells]),
            |(mut s1, mut q1), (s2, q2)| {
                for c in 0..cells {
                    s1[c] += s2[c];
                    q1[c] += q2[c];
                }
                (s1, q1)
            },
        );
    let mut out = BinnedEstimate { edges, estimate: vec![0.0; cells], std_error: vec![0.0; cells], replicas };
    let r = replicas as f64;
    for c in 0..cells {
        let (lo, hi) = out.cell(c);
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let mean = sum[c] / r;
        let var = if replicas > 1 { ((sum_sq[c] - r * mean * mean) / (r - 1.0)).max(0.0) } else { 0.0 };
        out.estimate[c] = mean / vol;
        out.std_error[c] = (var / r).sqrt() / vol;
    }
    out
}

pub const MIN_RHO1_REPLICAS: usize = 100;
pub const MIN_RHO2_REPLICAS: usize = 1000;

/// ρ̂_1: mean count per bin divided by the bin width.
pub fn empirical_rho1(samples: &[Vec<f64>], edges: &[f64]) -> Result<BinnedEstimate> {
    if samples.len() < MIN_RHO1_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "{} replicas, need at least {MIN_RHO1_REPLICAS}",
            samples.len()
        )));
    }
    check_edges(edges)?;
    Ok(reduce(samples.len(), vec![edges.to_vec()], |r, buf| {
        for &x in &samples[r] {
            if let Some(b) = bin_of(edges, x) {
                buf[b] += 1.0;
            }
        }
    }))
}

/// ρ̂_2 over ordered pairs: particles of `first` in the x-bin and of `second`
/// in the y-bin. With `second = None` both come from `first` and self-pairs
/// are excluded.
pub fn empirical_rho2(
    first: &[Vec<f64>],
    second: Option<&[Vec<f64>]>,
    edges_x: &[f64],
    edges_y: &[f64],
) -> Result<BinnedEstimate> {
    if first.len() < MIN_RHO2_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "{} replicas, need at least {MIN_RHO2_REPLICAS}",
            first.len()
        )));
    }
    if let Some(s) = second {
        if s.len() != first.len() {
            return Err(Error::InvalidArgument("replica counts differ between path points".into()));
        }
    }
    check_edges(edges_x)?;
    check_edges(edges_y)?;
    let ny = edges_y.len() - 1;
    Ok(reduce(first.len(), vec![edges_x.to_vec(), edges_y.to_vec()], |r, buf| {
        let a = &first[r];
        let b = second.map_or(a, |s| &s[r]);
        for (i, &x) in a.iter().enumerate() {
            let Some(bx) = bin_of(edges_x, x) else { continue };
            for (j, &y) in b.iter().enumerate() {
                if second.is_none() && i == j {
                    continue;
                }
                if let Some(by) = bin_of(edges_y, y) {
                    buf[bx * ny + by] += 1.0;
                }
            }
        }
    }))
}

/// Edges on [lo, hi] at pilot quantiles, coarsened until every cell of the
/// pair grid expects at least `min_pairs` pairs over `replicas` replicas.
pub fn rho2_edges_from_pilot(
    pilot_first: &[Vec<f64>],
    pilot_second: Option<&[Vec<f64>]>,
    lo: f64,
    hi: f64,
    max_bins: usize,
    replicas: usize,
    min_pairs: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lo < hi) || max_bins == 0 || pilot_first.is_empty() {
        return Err(Error::InvalidArgument("need lo < hi, max_bins ≥ 1 and a non-empty pilot".into()));
    }
    let quantile_edges = |samples: &[Vec<f64>], bins: usize| -> Vec<f64> {
        let mut pts: Vec<f64> = samples.iter().flatten().copied().filter(|&x| x >= lo && x < hi).collect();
        pts.sort_by(|a, b| a.total_cmp(b));
        let mut e = vec![lo];
        for q in 1..bins {
            if pts.is_empty() {
                break;
            }
            let v = pts[(q * pts.len()) / bins];
            if v > *e.last().unwrap() && v < hi {
                e.push(v);
            }
        }
        e.push(hi);
        e
    };
    let scale = replicas as f64 / pilot_first.len() as f64;
    for bins in (1..=max_bins).rev() {
        let ex = quantile_edges(pilot_first, bins);
        let ey = quantile_edges(pilot_second.unwrap_or(pilot_first), bins);
        let ny = ey.len() - 1;
        let mut counts = vec![0.0; (ex.len() - 1) * ny];
        for (r, a) in pilot_first.iter().enumerate() {
            let b = pilot_second.map_or(a, |s| &s[r]);
            for (i, &x) in a.iter().enumerate() {
                let Some(bx) = bin_of(&ex, x) else { continue };
                for (j, &y) in b.iter().enumerate() {
                    if pilot_second.is_none() && i == j {
                        continue;
                    }
                    if let Some(by) = bin_of(&ey, y) {
                        counts[bx * ny + by] += 1.0;
                    }
                }
            }
        }
        if counts.iter().all(|&c| c * scale >= min_pairs) {
            return Ok((ex, ey));
        }
    }
    Err(Error::InvalidArgument(format!("even a single cell expects fewer than {min_pairs} pairs")))
}

/// Fraction of replicas with no particle in E, and its standard error.
/// `samples[r][k]` are the points of replica r at path index k.
pub fn empirical_gap(samples: &[Vec<Vec<f64>>], e: &IntervalSet) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no replicas".into()));
    }
    if e.is_empty() {
        return Ok((1.0, 0.0));
    }
    let hits = samples
        .par_iter()
        .filter(|rep| {
            !e.intervals().iter().any(|iv| {
                rep.get(iv.path_index)
                    .is_some_and(|pts| pts.iter().any(|&x| x >= iv.lower && x <= iv.upper))
            })
        })
        .count();
    for iv in e.intervals() {
        if samples.iter().any(|rep| iv.path_index >= rep.len()) {
            return Err(Error::Index { index: iv.path_index, len: samples[0].len() });
        }
    }
    let n = samples.len() as f64;
    let p = hits as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// z-score per cell; None for excluded zero-SE cells.
    pub z_scores: Vec<Option<f64>>,
    pub max_abs_z: f64,
    pub fraction_within_3: f64,
    pub excluded: usize,
    pub pass: bool,
}

pub const Z_BIN: f64 = 3.0;
pub const Z_MAX: f64 = 5.0;
pub const PASS_FRACTION: f64 = 0.95;

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Cell average of `prediction` by 3-point Gauss per dimension.
pub fn cell_average<F: Fn(&[f64]) -> f64>(lo: &[f64], hi: &[f64], prediction: &F) -> f64 {
    let d = lo.len();
    let mut total = 0.0;
    let mut point = vec![0.0; d];
    for flat in 0..3usize.pow(d as u32) {
        let mut f = flat;
        let mut w = 1.0;
        for k in 0..d {
            let (x, wk) = GAUSS3[f % 3];
            f /= 3;
            point[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * x;
            w *= 0.5 * wk;
        }
        total += w * prediction(&point);
    }
    total
}

pub fn compare<F: Fn(&[f64]) -> f64 + Sync>(estimate: &BinnedEstimate, prediction: F) -> ComparisonReport {
    let z_scores: Vec<Option<f64>> = (0..estimate.len())
        .into_par_iter()
        .map(|c| {
            let se = estimate.std_error[c];
            if se == 0.0 {
                return None;
            }
            let (lo, hi) = estimate.cell(c);
            Some((estimate.estimate[c] - cell_average(&lo, &hi, &prediction)) / se)
        })
        .collect();
    let used: Vec<f64> = z_scores.iter().flatten().copied().collect();
    let excluded = z_scores.len() - used.len();
    let max_abs_z = used.iter().fold(0.0f64, |m, z| if z.is_nan() { f64::NAN } else { m.max(z.abs()) });
    let fraction_within_3 = if used.is_empty() {
        0.0
    } else {
        used.iter().filter(|z| z.abs() <= Z_BIN).count() as f64 / used.len() as f64
    };
    let pass = !used.is_empty() && fraction_within_3 >= PASS_FRACTION && max_abs_z <= Z_MAX;
    ComparisonReport { z_scores, max_abs_z, fraction_within_3, excluded, pass }
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, en: f64) -> f64 {
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("KS test needs non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|p, q| p.total_cmp(q));
    b.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(KsResult { statistic: d, p_value: ks_p(d, en) })
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("KS test needs a non-empty sample".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(|p, q| p.total_cmp(q));
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n.sqrt()) })
}

/// One exponential-Gibbs invariance run at fixed absolute time t: line 1 at
/// the middle interior α of ⟦a, b⟧ from untouched replicas is compared by a
/// two-sample KS test with the same line after resampling lines 1..k on
/// ⟦a+1, b−1⟧ in a disjoint set of replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsRun {
    pub n: usize,
    pub t: f64,
    pub a: u32,
    pub b: u32,
    pub k: usize,
    pub replicas: usize,
    pub seed: u64,
    pub run: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsRunReport {
    pub gamma: u32,
    pub ks: KsResult,
    pub attempts: u64,
    pub acceptance_rate: f64,
}

impl GibbsRun {
    /// Field stream for replica r; the resampler uses the same id with the top bit set.
    pub fn stream(&self, r: usize) -> u64 {
        (self.run << 32) | r as u64
    }

    pub fn execute(&self) -> Result<GibbsRunReport> {
        if self.b < self.a + 2 {
            return Err(Error::InvalidArgument("the window needs at least one interior alpha".into()));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidArgument("need at least two replicas".into()));
        }
        let grid = FieldGrid::new(self.n, (self.a..=self.b).collect(), vec![self.t])?;
        let gamma = (self.a + self.b) / 2;
        let scale = 4.0 * self.n as f64;
        let draws: Vec<Result<(bool, f64, u64)>> = (0..self.replicas)
            .into_par_iter()
            .map(|r| {
                let field = sample_field(&grid, RngStream::new(self.seed, self.stream(r)))?;
                let cols = (0..grid.alphas.len())
                    .map(|ai| field.eigenvalues_at(ai, 0).iter().map(|x| scale * x).collect())
                    .collect();
                let ensemble = LineEnsemble::new(self.a, cols)?;
                if r % 2 == 0 {
                    return Ok((false, ensemble.at(gamma).unwrap()[0], 0));
                }
                let mut rng = RngStream::new(self.seed, self.stream(r) | 1 << 63).rng();
                let (out, attempts) =
                    gibbs_resample(&ensemble, self.k, self.a, self.b, &mut rng, DEFAULT_MAX_ATTEMPTS)?;
                Ok((true, out.at(gamma).unwrap()[0], attempts))
            })
            .collect();
        let (mut before, mut after, mut attempts) = (Vec::new(), Vec::new(), 0u64);
        for d in draws {
            let (resampled, v, tries) = d?;
            if resampled {
                after.push(v);
                attempts += tries;
            } else {
                before.push(v);
            }
        }
        let ks = ks_two_sample(&before, &after)?;
        Ok(GibbsRunReport {
            gamma,
            ks,
            attempts,
            acceptance_rate: after.len() as f64 / attempts.max(1) as f64,
        })
    }
}

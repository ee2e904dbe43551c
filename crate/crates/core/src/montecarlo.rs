//! Monte Carlo ensembles of the lattice walk `S_n = h X_1 + ... + h X_n`.
//!
//! Jumps are drawn exactly from the truncated kernel: an alias table picks a
//! shell (the origin is shell 0) and a uniform index picks the site inside
//! it. Walker `m` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `m`,
//! so the draws of every walker depend only on `(seed, m)` and its own draw
//! counter, never on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::evolution::LatticeDistribution;
use crate::kernel::LatticeKernel;

/// Walker-level random stream.
pub fn walker_rng(seed: u64, walker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker);
    rng
}

/// Vose alias table over a finite discrete law.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Table for weights proportional to `weights`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Invalid("alias table needs at least one outcome".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Invalid("alias weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("alias weights sum to zero".into()));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Ok(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// The law actually sampled by the table.
    pub fn induced_probabilities(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut out: Vec<f64> = self.prob.iter().map(|p| p / n).collect();
        for (i, &a) in self.alias.iter().enumerate() {
            if a != i {
                out[a] += (1.0 - self.prob[i]) / n;
            }
        }
        out
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Exact sampler of single jumps of a kernel.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    kernel: LatticeKernel,
    table: AliasTable,
}

pub fn build_sampler(kernel: &LatticeKernel) -> Result<JumpSampler> {
    let mut weights = Vec::with_capacity(kernel.shells().len() + 1);
    weights.push(kernel.p0());
    weights.extend(kernel.shells().iter().map(|s| s.prob * s.multiplicity as f64));
    Ok(JumpSampler { kernel: kernel.clone(), table: AliasTable::new(&weights)? })
}

impl JumpSampler {
    pub fn kernel(&self) -> &LatticeKernel {
        &self.kernel
    }

    pub fn table(&self) -> &AliasTable {
        &self.table
    }

    /// Per-site probability implied by the table for each outcome, origin first.
    pub fn induced_site_probabilities(&self) -> Vec<f64> {
        let shells = self.table.induced_probabilities();
        let mut out = vec![shells[0]];
        for (i, s) in self.kernel.shells().iter().enumerate() {
            out.push(shells[i + 1] / s.multiplicity as f64);
        }
        out
    }

    /// Add one jump to `pos`.
    #[inline]
    pub fn jump<R: Rng + ?Sized>(&self, rng: &mut R, pos: &mut [i64]) {
        let shell = self.table.sample(rng);
        if shell == 0 {
            return;
        }
        let i = shell - 1;
        let mult = self.kernel.shells()[i].multiplicity;
        let dim = self.kernel.dim();
        let site = if mult == 1 { 0 } else { rng.gen_range(0..mult) };
        let k = &self.kernel.shell_sites(i)[site * dim..(site + 1) * dim];
        for (p, c) in pos.iter_mut().zip(k) {
            *p += c;
        }
    }

    /// Draw one jump; returns its lattice vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let mut k = vec![0; self.kernel.dim()];
        self.jump(rng, &mut k);
        k
    }
}

/// Final positions of independent walkers.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkEnsemble {
    dim: usize,
    h: f64,
    tau: f64,
    n_steps: usize,
    seed: u64,
    sites: Vec<i64>,
}

/// Run `n_walkers` walks of `n_steps` jumps each.
pub fn run_walks(sampler: &JumpSampler, n_steps: usize, n_walkers: usize, seed: u64) -> Result<WalkEnsemble> {
    if n_walkers == 0 {
        return Err(Error::Invalid("need at least one walker".into()));
    }
    let kernel = sampler.kernel();
    let dim = kernel.dim();
    let mut sites = vec![0i64; n_walkers * dim];
    sites.par_chunks_mut(dim).enumerate().for_each(|(m, pos)| {
        let mut rng = walker_rng(seed, m as u64);
        for _ in 0..n_steps {
            sampler.jump(&mut rng, pos);
        }
    });
    Ok(WalkEnsemble { dim, h: kernel.h(), tau: kernel.tau(), n_steps, seed, sites })
}

impl WalkEnsemble {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_walkers(&self) -> usize {
        self.sites.len() / self.dim
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Integer lattice coordinates of walker `m`.
    pub fn site(&self, m: usize) -> &[i64] {
        &self.sites[m * self.dim..(m + 1) * self.dim]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.sites.chunks_exact(self.dim)
    }

    /// Positions `h k` of all walkers, in walker order.
    pub fn final_positions(&self) -> Vec<Vec<f64>> {
        self.sites().map(|k| k.iter().map(|&c| c as f64 * self.h).collect()).collect()
    }

    /// Coordinate `axis` of every walker.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        assert!(axis < self.dim, "axis out of range");
        self.sites().map(|k| k[axis] as f64 * self.h).collect()
    }

    /// Euclidean distance from the origin of every walker.
    pub fn radii(&self) -> Vec<f64> {
        self.sites()
            .map(|k| (k.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt() * self.h)
            .collect()
    }

    /// Empirical frequency of each occupied lattice site.
    pub fn site_frequencies(&self) -> BTreeMap<Vec<i64>, f64> {
        let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for k in self.sites() {
            *counts.entry(k.to_vec()).or_default() += 1;
        }
        let m = self.n_walkers() as f64;
        counts.into_iter().map(|(k, c)| (k, c as f64 / m)).collect()
    }

    /// `(1/2) sum_j |f_j - y_j|` between site frequencies and an exact law.
    pub fn total_variation(&self, dist: &LatticeDistribution) -> Result<f64> {
        if dist.dim() != self.dim || (dist.h() - self.h).abs() > 1e-15 * self.h {
            return Err(Error::Mismatch("ensemble and distribution live on different lattices".into()));
        }
        let freq = self.site_frequencies();
        let mut sum = dist.deficit();
        for (j, y) in dist.iter() {
            sum += (freq.get(&j).copied().unwrap_or(0.0) - y).abs();
        }
        for (j, f) in &freq {
            if !stored(dist, j) {
                sum += f;
            }
        }
        Ok(0.5 * sum)
    }

    /// One CSV row per walker: `walker,x1,...,xN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n_walkers() * 16);
        out.push_str("walker");
        if self.dim == 1 {
            out.push_str(",x");
        } else {
            for d in 1..=self.dim {
                let _ = write!(out, ",x{d}");
            }
        }
        out.push('\n');
        for (m, k) in self.sites().enumerate() {
            let _ = write!(out, "{m}");
            for &c in k {
                let _ = write!(out, ",{}", c as f64 * self.h);
            }
            out.push('\n');
        }
        out
    }
}

fn stored(dist: &LatticeDistribution, j: &[i64]) -> bool {
    let r = dist.support_radius() as i64;
    j.iter().all(|&c| c.abs() <= r)
}

/// `(1/M) sum_m exp(i xi . S_m)` at each grid point.
pub fn empirical_cf(ensemble: &WalkEnsemble, xi_grid: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    if let Some(bad) = xi_grid.iter().find(|x| x.len() != ensemble.dim) {
        return Err(Error::Mismatch(format!(
            "frequency of dimension {} for a {}-dimensional ensemble",
            bad.len(),
            ensemble.dim
        )));
    }
    let m = ensemble.n_walkers() as f64;
    Ok(xi_grid
        .par_iter()
        .map(|xi| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in ensemble.sites() {
                let phase: f64 = k.iter().zip(xi).map(|(&c, &x)| c as f64 * x).sum::<f64>() * ensemble.h;
                acc += Complex64::from_polar(1.0, phase);
            }
            acc / m
        })
        .collect())
}

/// Density estimate on cubic bins of side `bin_width` centred at `bin_width * i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dim: usize,
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub index: Vec<i64>,
    pub density: f64,
}

pub fn histogram(ensemble: &WalkEnsemble, bin_width: f64) -> Result<Histogram> {
    if !(bin_width >= ensemble.h * (1.0 - 1e-12)) {
        return Err(Error::Invalid(format!(
            "bin width {bin_width} is below the mesh width {}",
            ensemble.h
        )));
    }
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for k in ensemble.sites() {
        let idx: Vec<i64> = k
            .iter()
            .map(|&c| (c as f64 * ensemble.h / bin_width + 0.5).floor() as i64)
            .collect();
        *counts.entry(idx).or_default() += 1;
    }
    let norm = ensemble.n_walkers() as f64 * bin_width.powi(ensemble.dim as i32);
    let bins = counts
        .into_iter()
        .map(|(index, c)| HistogramBin { index, density: c as f64 / norm })
        .collect();
    Ok(Histogram { dim: ensemble.dim, bin_width, bins })
}

impl Histogram {
    pub fn density_at(&self, index: &[i64]) -> f64 {
        self.bins.iter().find(|b| b.index == index).map_or(0.0, |b| b.density)
    }

    /// `sum bins * bin_width^N`.
    pub fn total(&self) -> f64 {
        self.bins.iter().map(|b| b.density).sum::<f64>() * self.bin_width.powi(self.dim as i32)
    }

    /// Bins whose centres lie within `range` of the origin in every coordinate.
    pub fn window(&self, range: f64) -> Histogram {
        let bins = self
            .bins
            .iter()
            .filter(|b| b.index.iter().all(|&i| (i as f64 * self.bin_width).abs() <= range))
            .cloned()
            .collect();
        Histogram { dim: self.dim, bin_width: self.bin_width, bins }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for d in 1..=self.dim {
            let _ = write!(out, "center{d},");
        }
        out.push_str("density\n");
        for b in &self.bins {
            for &i in &b.index {
                let _ = write!(out, "{},", i as f64 * self.bin_width);
            }
            let _ = writeln!(out, "{}", b.density);
        }
        out
    }
}

pub const SUMMARY_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

/// JSON summary of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub dim: usize,
    pub h: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub n_walkers: usize,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub mean_abs: Vec<f64>,
    /// Quantiles of the first coordinate.
    pub quantiles: Vec<Quantile>,
    /// Quantiles of the distance from the origin (`N >= 2` only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radial_quantiles: Vec<Quantile>,
    pub histogram: Histogram,
    /// Fraction of walkers outside the histogram window.
    pub outside_window: f64,
}

pub fn quantiles(values: &[f64], ps: &[f64]) -> Vec<Quantile> {
    let mut data = Data::new(values.to_vec());
    ps.iter().map(|&p| Quantile { p, value: data.quantile(p) }).collect()
}

/// Moments, quantiles and a windowed histogram.
pub fn summarize(ensemble: &WalkEnsemble, bin_width: f64, window: f64) -> Result<EnsembleSummary> {
    let m = ensemble.n_walkers() as f64;
    let dim = ensemble.dim;
    let mut mean = vec![0.0; dim];
    let mut mean_abs = vec![0.0; dim];
    for k in ensemble.sites() {
        for d in 0..dim {
            let x = k[d] as f64 * ensemble.h;
            mean[d] += x;
            mean_abs[d] += x.abs();
        }
    }
    mean.iter_mut().chain(mean_abs.iter_mut()).for_each(|v| *v /= m);
    let full = histogram(ensemble, bin_width)?;
    let hist = full.window(window);
    let outside = 1.0 - hist.total();
    Ok(EnsembleSummary {
        dim,
        h: ensemble.h,
        tau: ensemble.tau,
        n_steps: ensemble.n_steps,
        n_walkers: ensemble.n_walkers(),
        seed: ensemble.seed,
        mean,
        mean_abs,
        quantiles: quantiles(&ensemble.coordinate(0), &SUMMARY_QUANTILES),
        radial_quantiles: if dim >= 2 { quantiles(&ensemble.radii(), &SUMMARY_QUANTILES) } else { Vec::new() },
        histogram: hist,
        outside_window: outside.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::measure::OrderMeasure;

    fn cauchy_kernel(h: f64, tau: f64, k: usize) -> LatticeKernel {
        build_kernel(&OrderMeasure::single(1.0, 1.0).unwrap(), 1, h, tau, k, 1e-15).unwrap()
    }

    #[test]
    fn alias_reproduces_weights() {
        let w = [0.1, 0.0, 2.5, 1e-9, 0.7, 0.3];
        let t = AliasTable::new(&w).unwrap();
        let total: f64 = w.iter().sum();
        for (got, want) in t.induced_probabilities().iter().zip(&w) {
            assert!((got - want / total).abs() <= 1e-15);
        }
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[1.0, -0.1]).is_err());
    }

    #[test]
    fn sampler_induced_law_matches_kernel() {
        let k = cauchy_kernel(0.1, 0.01, 64);
        let s = build_sampler(&k).unwrap();
        let induced = s.induced_site_probabilities();
        assert!((induced[0] - k.p0()).abs() <= 1e-15);
        for (i, sh) in k.shells().iter().enumerate() {
            assert!((induced[i + 1] - sh.prob).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_tau_never_moves() {
        let k = cauchy_kernel(0.1, 0.0, 16);
        let s = build_sampler(&k).unwrap();
        let e = run_walks(&s, 10, 100, 1).unwrap();
        assert!(e.sites().all(|k| k == [0]));
        let mut rng = walker_rng(3, 0);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng), vec![0]);
        }
    }

    #[test]
    fn zero_steps_stay_at_origin() {
        let s = build_sampler(&cauchy_kernel(0.1, 0.01, 16)).unwrap();
        let e = run_walks(&s, 0, 7, 9).unwrap();
        assert_eq!(e.n_walkers(), 7);
        assert!(e.final_positions().iter().all(|p| p == &[0.0]));
        let cf = empirical_cf(&e, &[vec![0.0], vec![3.0]]).unwrap();
        assert!(cf.iter().all(|z| (z - 1.0).norm() < 1e-15));
        let hist = histogram(&e, 0.5).unwrap();
        assert_eq!(hist.bins.len(), 1);
        assert!((hist.bins[0].density - 2.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_across_thread_pools() {
        let s = build_sampler(&cauchy_kernel(0.1, 0.02, 64)).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_walks(&s, 20, 5000, 42).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(8));
        assert_ne!(a, run_walks(&s, 20, 5000, 43).unwrap());
    }

    #[test]
    fn histogram_normalization_and_rejection() {
        let s = build_sampler(&cauchy_kernel(0.1, 0.02, 64)).unwrap();
        let e = run_walks(&s, 10, 2000, 5).unwrap();
        for w in [0.1, 0.25, 1.0] {
            assert!((histogram(&e, w).unwrap().total() - 1.0).abs() < 1e-12);
        }
        assert!(histogram(&e, 0.05).is_err());
    }

    #[test]
    fn summary_fields() {
        let m = OrderMeasure::single(1.2, 1.0).unwrap();
        let k = build_kernel(&m, 2, 0.2, 0.005, 8, 1e-15).unwrap();
        let e = run_walks(&build_sampler(&k).unwrap(), 8, 1000, 11).unwrap();
        let s = summarize(&e, 0.2, 2.0).unwrap();
        assert_eq!(s.mean.len(), 2);
        assert_eq!(s.quantiles.len(), SUMMARY_QUANTILES.len());
        assert_eq!(s.radial_quantiles.len(), SUMMARY_QUANTILES.len());
        assert!(s.outside_window >= 0.0 && s.outside_window < 1.0);
        let q: Vec<f64> = s.quantiles.iter().map(|q| q.value).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn csv_layout() {
        let s = build_sampler(&cauchy_kernel(0.5, 0.05, 4)).unwrap();
        let e = run_walks(&s, 1, 3, 0).unwrap();
        let csv = e.to_csv();
        assert!(csv.starts_with("walker,x\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }
}

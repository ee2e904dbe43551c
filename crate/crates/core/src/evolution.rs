//! Exact evolution of the sojourn probabilities by the master equation
//! `y_j(t_{n+1}) = sum_k p_k y_{j-k}(t_n)`.
//!
//! Distributions live on the cube `[-R, R]^N` stored densely in row-major
//! order (last axis fastest). Mass pushed beyond the configured maximum radius
//! is dropped and accounted for in `deficit`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dim, LatticeKernel};

/// Default largest support radius per dimension (1-D, 2-D, 3-D).
pub const DEFAULT_MAX_RADIUS: [usize; 3] = [4096, 256, 48];

/// Above this many multiply-adds the transform path is used.
const DIRECT_WORK_LIMIT: usize = 1 << 21;

pub fn default_max_radius(dim: usize) -> usize {
    DEFAULT_MAX_RADIUS[dim.clamp(1, 3) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions {
    /// Support radius cap; `None` uses [`default_max_radius`].
    pub max_radius: Option<usize>,
    pub method: ConvolutionMethod,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self { max_radius: None, method: ConvolutionMethod::Auto }
    }
}

/// Probability mass function on a truncated lattice at time `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDistribution {
    dim: usize,
    h: f64,
    tau: f64,
    radius: usize,
    time_index: usize,
    deficit: f64,
    mass: Vec<f64>,
}

fn side(radius: usize) -> usize {
    2 * radius + 1
}

fn cube_len(dim: usize, radius: usize) -> usize {
    side(radius).pow(dim as u32)
}

impl LatticeDistribution {
    /// Unit mass at the origin.
    pub fn delta(dim: usize, h: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(h > 0.0) {
            return Err(Error::Domain("mesh width must be positive".into()));
        }
        Ok(Self { dim, h, tau: 0.0, radius: 0, time_index: 0, deficit: 0.0, mass: vec![1.0] })
    }

    /// The one-step law of `kernel`, i.e. `step(delta, kernel)`.
    pub fn from_kernel(kernel: &LatticeKernel) -> Self {
        let dim = kernel.dim();
        let radius = kernel.trunc_radius();
        let mut out = Self {
            dim,
            h: kernel.h(),
            tau: kernel.tau(),
            radius,
            time_index: 1,
            deficit: 0.0,
            mass: vec![0.0; cube_len(dim, radius)],
        };
        for (k, p) in kernel.outcomes() {
            let i = out.index(k).expect("kernel site inside its own radius");
            out.mass[i] = p;
        }
        out
    }

    /// Build from a dense row-major cube of side `2 * radius + 1`.
    pub fn from_dense(dim: usize, h: f64, radius: usize, mass: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if mass.len() != cube_len(dim, radius) {
            return Err(Error::Mismatch(format!(
                "dense array has {} entries, expected {}",
                mass.len(),
                cube_len(dim, radius)
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Invalid("masses must be non-negative".into()));
        }
        Ok(Self { dim, h, tau: 0.0, radius, time_index: 0, deficit: 0.0, mass })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Time step of the kernel that produced this law (0 for the initial law).
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn support_radius(&self) -> usize {
        self.radius
    }
    pub fn time_index(&self) -> usize {
        self.time_index
    }
    /// Mass dropped by truncation so far.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }
    /// Dense row-major masses.
    pub fn dense(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn index(&self, j: &[i64]) -> Option<usize> {
        let r = self.radius as i64;
        let s = side(self.radius);
        let mut idx = 0usize;
        for &c in j {
            if c < -r || c > r {
                return None;
            }
            idx = idx * s + (c + r) as usize;
        }
        Some(idx)
    }

    fn coords(&self, mut idx: usize, out: &mut [i64]) {
        let s = side(self.radius);
        let r = self.radius as i64;
        for c in out.iter_mut().rev() {
            *c = (idx % s) as i64 - r;
            idx /= s;
        }
    }

    /// `y_j`; zero outside the stored support.
    pub fn get(&self, j: &[i64]) -> f64 {
        assert_eq!(j.len(), self.dim, "site has wrong dimension");
        self.index(j).map_or(0.0, |i| self.mass[i])
    }

    /// `(j, y_j)` for every stored site.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        (0..self.mass.len()).map(move |i| {
            let mut j = vec![0; self.dim];
            self.coords(i, &mut j);
            (j, self.mass[i])
        })
    }

    /// `sum_j y_j exp(i h j . xi)`, the characteristic function of the
    /// rescaled walk position.
    pub fn characteristic_function(&self, xi: &[f64]) -> Complex64 {
        assert_eq!(xi.len(), self.dim, "frequency has wrong dimension");
        let s = side(self.radius);
        let r = self.radius as i64;
        let phases: Vec<Vec<Complex64>> = xi
            .iter()
            .map(|&x| {
                (0..s)
                    .map(|c| Complex64::from_polar(1.0, self.h * (c as i64 - r) as f64 * x))
                    .collect()
            })
            .collect();
        match self.dim {
            1 => self.mass.iter().zip(&phases[0]).map(|(&m, &p)| p * m).sum(),
            _ => {
                // contract the last axis first, then fold outward
                let mut acc: Vec<Complex64> = self.mass.iter().map(|&m| Complex64::new(m, 0.0)).collect();
                for axis in (0..self.dim).rev() {
                    let ph = &phases[axis];
                    acc = acc.chunks_exact(s).map(|row| row.iter().zip(ph).map(|(a, p)| a * p).sum()).collect();
                }
                acc[0]
            }
        }
    }

    /// Rows `j1,...,jN,y` for every site with positive mass.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dim == 1 {
            out.push_str("j,y\n");
        } else {
            for d in 1..=self.dim {
                let _ = write!(out, "j{d},");
            }
            out.push_str("y\n");
        }
        let mut j = vec![0; self.dim];
        for (i, &m) in self.mass.iter().enumerate() {
            if m > 0.0 {
                self.coords(i, &mut j);
                for c in &j {
                    let _ = write!(out, "{c},");
                }
                let _ = writeln!(out, "{m:e}");
            }
        }
        out
    }

    pub fn to_document(&self) -> DistributionDocument {
        DistributionDocument {
            dim: self.dim,
            h: self.h,
            tau: self.tau,
            n: self.time_index,
            support_radius: self.radius,
            deficit: self.deficit,
            mass: self.mass.clone(),
        }
    }

    pub fn from_document(doc: DistributionDocument) -> Result<Self> {
        let mut d = Self::from_dense(doc.dim, doc.h, doc.support_radius, doc.mass)?;
        d.tau = doc.tau;
        d.time_index = doc.n;
        d.deficit = doc.deficit;
        Ok(d)
    }

    /// Restrict to radius `r`, moving the cut-off mass into the deficit.
    fn crop(self, r: usize) -> Self {
        if r >= self.radius {
            return self;
        }
        let mut out = Self {
            dim: self.dim,
            h: self.h,
            tau: self.tau,
            radius: r,
            time_index: self.time_index,
            deficit: self.deficit,
            mass: vec![0.0; cube_len(self.dim, r)],
        };
        let mut j = vec![0; self.dim];
        let mut dropped = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            self.coords(i, &mut j);
            match out.index(&j) {
                Some(k) => out.mass[k] = m,
                None => dropped += m,
            }
        }
        out.deficit += dropped;
        out
    }
}

/// JSON form of a distribution: row-major masses plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDocument {
    pub dim: usize,
    pub h: f64,
    pub tau: f64,
    pub n: usize,
    pub support_radius: usize,
    pub deficit: f64,
    pub mass: Vec<f64>,
}

fn check_compatible(p: &LatticeDistribution, q: &LatticeDistribution) -> Result<()> {
    if p.dim != q.dim {
        return Err(Error::Mismatch(format!("dimensions differ: {} vs {}", p.dim, q.dim)));
    }
    if (p.h - q.h).abs() > 1e-15 * p.h.max(q.h) {
        return Err(Error::Mismatch(format!("mesh widths differ: {} vs {}", p.h, q.h)));
    }
    Ok(())
}

fn direct_full(dim: usize, a: &[f64], ra: usize, b: &[f64], rb: usize) -> Vec<f64> {
    let so = side(ra + rb);
    let strides_out: Vec<usize> = (0..dim).rev().map(|d| so.pow(d as u32)).collect();
    let offsets = |data: &[f64], r: usize| -> Vec<(usize, f64)> {
        let s = side(r);
        data.iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(mut i, &v)| {
                let mut off = 0;
                for d in (0..dim).rev() {
                    off += (i % s) * strides_out[d];
                    i /= s;
                }
                (off, v)
            })
            .collect()
    };
    let oa = offsets(a, ra);
    let ob = offsets(b, rb);
    let mut out = vec![0.0; cube_len(dim, ra + rb)];
    for &(ia, va) in &oa {
        for &(ib, vb) in &ob {
            out[ia + ib] += va * vb;
        }
    }
    out
}

/// Smallest 2^a 3^b 5^c that is at least `n`.
fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut x = m;
        for f in [2, 3, 5] {
            while x % f == 0 {
                x /= f;
            }
        }
        if x == 1 {
            return m;
        }
        m += 1;
    }
}

fn fft_axes(data: &mut [Complex64], dim: usize, m: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for axis in 0..dim {
        let stride = m.pow((dim - 1 - axis) as u32);
        let block = stride * m;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

fn fft_full(dim: usize, a: &[f64], ra: usize, b: &[f64], rb: usize) -> Vec<f64> {
    let so = side(ra + rb);
    let m = smooth_size(so);
    let embed = |data: &[f64], r: usize| -> Vec<Complex64> {
        let s = side(r);
        let mut buf = vec![Complex64::new(0.0, 0.0); m.pow(dim as u32)];
        for (mut i, &v) in data.iter().enumerate() {
            let mut off = 0;
            let mut stride = 1;
            for _ in 0..dim {
                off += (i % s) * stride;
                stride *= m;
                i /= s;
            }
            buf[off] = Complex64::new(v, 0.0);
        }
        buf
    };
    let mut fa = embed(a, ra);
    let mut fb = embed(b, rb);
    fft_axes(&mut fa, dim, m, false);
    fft_axes(&mut fb, dim, m, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_axes(&mut fa, dim, m, true);
    let scale = 1.0 / (m.pow(dim as u32) as f64);
    let mut out = vec![0.0; cube_len(dim, ra + rb)];
    for (mut i, o) in out.iter_mut().enumerate() {
        let mut off = 0;
        let mut stride = 1;
        for _ in 0..dim {
            off += (i % so) * stride;
            stride *= m;
            i /= so;
        }
        // rounding can leave tiny negative values where the exact result is zero
        *o = (fa[off].re * scale).max(0.0);
    }
    out
}

/// `(p * q)_j = sum_k p_k q_{j-k}` with the given options.
pub fn convolve_with(
    p: &LatticeDistribution,
    q: &LatticeDistribution,
    options: &EvolutionOptions,
) -> Result<LatticeDistribution> {
    check_compatible(p, q)?;
    let dim = p.dim;
    let nonzero = p.mass.iter().filter(|&&v| v != 0.0).count();
    let work = nonzero.saturating_mul(q.mass.iter().filter(|&&v| v != 0.0).count());
    let use_fft = match options.method {
        ConvolutionMethod::Direct => false,
        ConvolutionMethod::Fft => true,
        ConvolutionMethod::Auto => work > DIRECT_WORK_LIMIT,
    };
    let full = if use_fft {
        fft_full(dim, &p.mass, p.radius, &q.mass, q.radius)
    } else {
        direct_full(dim, &p.mass, p.radius, &q.mass, q.radius)
    };
    let out = LatticeDistribution {
        dim,
        h: p.h,
        tau: if p.tau > 0.0 { p.tau } else { q.tau },
        radius: p.radius + q.radius,
        time_index: p.time_index + q.time_index,
        deficit: p.deficit + q.deficit,
        mass: full,
    };
    let cap = options.max_radius.unwrap_or_else(|| default_max_radius(dim));
    Ok(out.crop(cap))
}

/// `p * q` with default options.
pub fn convolve(p: &LatticeDistribution, q: &LatticeDistribution) -> Result<LatticeDistribution> {
    convolve_with(p, q, &EvolutionOptions::default())
}

/// One master-equation step with explicit options.
pub fn step_with(
    dist: &LatticeDistribution,
    kernel: &LatticeKernel,
    options: &EvolutionOptions,
) -> Result<LatticeDistribution> {
    if dist.dim != kernel.dim() {
        return Err(Error::Mismatch(format!(
            "distribution has dimension {}, kernel {}",
            dist.dim,
            kernel.dim()
        )));
    }
    let k = LatticeDistribution::from_kernel(kernel);
    let mut out = convolve_with(dist, &k, options)?;
    out.tau = kernel.tau();
    Ok(out)
}

/// One master-equation step.
pub fn step(dist: &LatticeDistribution, kernel: &LatticeKernel) -> Result<LatticeDistribution> {
    step_with(dist, kernel, &EvolutionOptions::default())
}

/// `n` steps from the origin.
pub fn evolve(kernel: &LatticeKernel, n: usize, options: &EvolutionOptions) -> Result<LatticeDistribution> {
    let k = LatticeDistribution::from_kernel(kernel);
    let mut dist = LatticeDistribution::delta(kernel.dim(), kernel.h())?;
    dist.tau = kernel.tau();
    for _ in 0..n {
        dist = convolve_with(&dist, &k, options)?;
    }
    dist.tau = kernel.tau();
    Ok(dist)
}

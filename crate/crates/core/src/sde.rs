//! Doubled stochastic Bloch-vector equations with shared real white noise.
//!
//! Two copies `s₁`, `s₂` follow `ds_k = (A s_k + b) dt + B_k dW` with the same
//! Wiener increment, where `B₁B₂ᵀ = D = −(AM + MAᵀ)`. Their stationary
//! cross-covariance is then the cumulant matrix `M`, so products
//! `s₁(τ)s₂(0)ᵀ` reproduce the quantum two-time correlations.

use std::io::Write;

use rayon::prelude::*;

use crate::bloch::{drift_matrix, DriftModel};
use crate::correlation::{Spin, TauGrid};
use crate::error::{Error, Result};
use crate::linalg::{self, expm, re, CMat3, CVec3, C64};
use crate::liouville::{build_liouvillian, second_order_cumulant, steady_state, CumulantMatrix, SteadyState};
use crate::params::SystemParams;
use crate::rng::NoiseStream;

/// Relative cut below which singular values of D count as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-14;

/// Walkers per deterministic reduction block.
pub const BLOCK_SIZE: usize = 256;

/// D = −(AM + MAᵀ), no symmetry imposed.
pub fn noise_cross_covariance(drift: &DriftModel, m: &CumulantMatrix) -> CMat3 {
    -(drift.a * m.0 + m.0 * drift.a.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub d: CMat3,
    pub u: CMat3,
    /// Non-increasing, thresholded singular values.
    pub sigma: [f64; 3],
    pub v: CMat3,
    /// U√Σ
    pub b1: CMat3,
    /// V*√Σ
    pub b2: CMat3,
}

impl NoiseModel {
    pub fn new(drift: &DriftModel, m: &CumulantMatrix) -> Result<Self> {
        svd_factorize(&noise_cross_covariance(drift, m))
    }

    /// ‖B₁B₂ᵀ − D‖∞
    pub fn factorization_residual(&self) -> f64 {
        linalg::norm_inf(&(self.b1 * self.b2.transpose() - self.d))
    }

    pub fn is_silent(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }
}

/// D = UΣV†, B₁ = U√Σ, B₂ = V*√Σ so that B₁B₂ᵀ = D.
pub fn svd_factorize(d: &CMat3) -> Result<NoiseModel> {
    let svd = linalg::svd3(d)?;
    let cutoff = SINGULAR_CUTOFF * svd.sigma[0];
    let sigma = svd.sigma.map(|s| if s <= cutoff { 0.0 } else { s });
    let root = CMat3::from_diagonal(&CVec3::new(
        re(sigma[0].sqrt()),
        re(sigma[1].sqrt()),
        re(sigma[2].sqrt()),
    ));
    Ok(NoiseModel {
        d: *d,
        u: svd.u,
        sigma,
        v: svd.v,
        b1: svd.u * root,
        b2: svd.v.map(|z| z.conj()) * root,
    })
}

/// Everything the walkers need, derived once from the physical parameters.
#[derive(Debug, Clone)]
pub struct SdeModel {
    pub params: SystemParams,
    pub steady: SteadyState,
    pub cumulant: CumulantMatrix,
    pub drift: DriftModel,
    pub noise: NoiseModel,
}

impl SdeModel {
    pub fn from_params(params: &SystemParams) -> Result<Self> {
        let liouv = build_liouvillian(params);
        let steady = steady_state(&liouv)?;
        let cumulant = second_order_cumulant(&steady);
        let drift = drift_matrix(&liouv)?;
        let noise = NoiseModel::new(&drift, &cumulant)?;
        Ok(SdeModel {
            params: *params,
            steady,
            cumulant,
            drift,
            noise,
        })
    }

    /// Same drift with the noise switched off.
    pub fn noiseless(&self) -> Self {
        let mut quiet = self.clone();
        quiet.noise = svd_factorize(&CMat3::zeros()).expect("zero matrix factorizes");
        quiet
    }
}

pub(crate) type Raw3 = [C64; 3];
type Raw33 = [[C64; 3]; 3];

fn raw33(m: &CMat3) -> Raw33 {
    std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)]))
}

/// One exponential Euler-Maruyama step, precomputed for a fixed dt.
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    pub exp_a: CMat3,
    /// ∫₀^Δt e^{As} ds · b, the exact inhomogeneous increment.
    pub b_step: CVec3,
    pub b1_sqrt_dt: CMat3,
    pub b2_sqrt_dt: CMat3,
    pub dt: f64,
    exp_raw: Raw33,
    b_raw: Raw3,
    b1_raw: Raw33,
    b2_raw: Raw33,
}

impl Propagator {
    pub fn new(drift: &DriftModel, noise: &NoiseModel, dt: f64) -> Self {
        let root = re(dt.sqrt());
        let exp_a = expm(&(drift.a * re(dt)));
        let b_step = inhomogeneous_step(drift, dt);
        let b1_sqrt_dt = noise.b1 * root;
        let b2_sqrt_dt = noise.b2 * root;
        Propagator {
            exp_a,
            b_step,
            b1_sqrt_dt,
            b2_sqrt_dt,
            dt,
            exp_raw: raw33(&exp_a),
            b_raw: b_step.data.0[0],
            b1_raw: raw33(&b1_sqrt_dt),
            b2_raw: raw33(&b2_sqrt_dt),
        }
    }

    /// s_k ← e^{AΔt}s_k + φ(Δt)b + √Δt·B_k ξ with one shared ξ.
    #[inline]
    pub fn advance(&self, s1: &mut CVec3, s2: &mut CVec3, xi: &[f64; 3]) {
        self.advance_raw(&mut s1.data.0[0], &mut s2.data.0[0], xi);
    }

    #[inline(always)]
    fn advance_raw(&self, s1: &mut Raw3, s2: &mut Raw3, xi: &[f64; 3]) {
        let e = &self.exp_raw;
        let a1 = *s1;
        let a2 = *s2;
        for r in 0..3 {
            let (n1, n2) = (&self.b1_raw[r], &self.b2_raw[r]);
            s1[r] = e[r][0] * a1[0]
                + e[r][1] * a1[1]
                + e[r][2] * a1[2]
                + self.b_raw[r]
                + n1[0] * xi[0]
                + n1[1] * xi[1]
                + n1[2] * xi[2];
            s2[r] = e[r][0] * a2[0]
                + e[r][1] * a2[1]
                + e[r][2] * a2[2]
                + self.b_raw[r]
                + n2[0] * xi[0]
                + n2[1] * xi[1]
                + n2[2] * xi[2];
        }
    }
}

/// Top-right block of exp([[A, b], [0, 0]]·Δt).
fn inhomogeneous_step(drift: &DriftModel, dt: f64) -> CVec3 {
    let mut aug = linalg::CMat4::zeros();
    for r in 0..3 {
        for k in 0..3 {
            aug[(r, k)] = drift.a[(r, k)] * dt;
        }
        aug[(r, 3)] = drift.b[r] * dt;
    }
    let e = expm(&aug);
    CVec3::new(e[(0, 3)], e[(1, 3)], e[(2, 3)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_walkers: usize,
    pub dt: f64,
    pub burn_in: f64,
    pub tau_max: f64,
    pub seed: u64,
    pub origins_per_walker: usize,
}

impl EnsembleConfig {
    /// dt = T₁/200, burn-in 10·T₁, τ_max = 15·T₁, one origin.
    pub fn default_for(params: &SystemParams, n_walkers: usize, seed: u64) -> Self {
        EnsembleConfig {
            n_walkers,
            dt: params.t1 / 200.0,
            burn_in: 10.0 * params.t1,
            tau_max: 15.0 * params.t1,
            seed,
            origins_per_walker: 1,
        }
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if self.n_walkers == 0 {
            return Err(Error::InvalidParams("n_walkers must be >= 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.burn_in >= 10.0 * params.t1 * (1.0 - 1e-12)) {
            return Err(Error::InvalidParams(format!(
                "burn_in must be >= 10*t1 = {}, got {}",
                10.0 * params.t1,
                self.burn_in
            )));
        }
        if !(self.tau_max >= 0.0) || !self.tau_max.is_finite() {
            return Err(Error::InvalidParams(format!(
                "tau_max must be >= 0, got {}",
                self.tau_max
            )));
        }
        if self.origins_per_walker == 0 {
            return Err(Error::InvalidParams("origins_per_walker must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tau_grid(&self) -> Result<TauGrid> {
        TauGrid::covering(self.dt, self.tau_max)
    }

    pub fn burn_in_steps(&self) -> u64 {
        (self.burn_in / self.dt).round() as u64
    }

    /// Steps between consecutive origins: the lag window, but at least 10·T₁.
    pub fn origin_spacing_steps(&self, params: &SystemParams) -> u64 {
        let window = self.tau_grid().map(|g| g.len as u64 - 1).unwrap_or(0);
        let min = (10.0 * params.t1 / self.dt).ceil() as u64;
        window.max(min).max(1)
    }

    pub fn samples(&self) -> usize {
        self.n_walkers * self.origins_per_walker
    }
}

/// N walkers advanced in lockstep; the explicit-state view of the engine.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    pub s1: Vec<CVec3>,
    pub s2: Vec<CVec3>,
    pub step: u64,
    streams: Vec<NoiseStream>,
}

impl WalkerEnsemble {
    /// All walkers start at the deterministic fixed point −A⁻¹b.
    pub fn at_fixed_point(drift: &DriftModel, n_walkers: usize, seed: u64) -> Self {
        Self::from_state(drift.fixed_point(), n_walkers, seed)
    }

    pub fn from_state(start: CVec3, n_walkers: usize, seed: u64) -> Self {
        WalkerEnsemble {
            s1: vec![start; n_walkers],
            s2: vec![start; n_walkers],
            step: 0,
            streams: (0..n_walkers as u64).map(|w| NoiseStream::new(seed, w)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.s1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s1.is_empty()
    }

    pub fn mean(&self) -> (CVec3, CVec3) {
        let n = re(self.len() as f64);
        let m1 = self.s1.iter().sum::<CVec3>() / n;
        let m2 = self.s2.iter().sum::<CVec3>() / n;
        (m1, m2)
    }
}

/// Advances every walker by one step with its own noise draw.
pub fn step_ensemble(ens: &mut WalkerEnsemble, prop: &Propagator) {
    for ((s1, s2), stream) in ens.s1.iter_mut().zip(ens.s2.iter_mut()).zip(ens.streams.iter_mut()) {
        let xi = stream.next_normals();
        prop.advance(s1, s2, &xi);
    }
    ens.step += 1;
}

/// State of one walker at every step in `[start, start + len)`.
pub fn walker_trajectory(model: &SdeModel, cfg: &EnsembleConfig, walker: u64, len: usize) -> Vec<(CVec3, CVec3)> {
    let prop = Propagator::new(&model.drift, &model.noise, cfg.dt);
    let mut stream = NoiseStream::new(cfg.seed, walker);
    let mut s1 = model.drift.fixed_point();
    let mut s2 = s1;
    for _ in 0..cfg.burn_in_steps() {
        let xi = stream.next_normals();
        prop.advance(&mut s1, &mut s2, &xi);
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push((s1, s2));
        let xi = stream.next_normals();
        prop.advance(&mut s1, &mut s2, &xi);
    }
    out
}

/// Tabular dump: `walker,step` then re/im of s₁ and s₂ components.
pub fn write_trajectory<W: Write>(
    out: &mut W,
    walker: u64,
    first_step: u64,
    traj: &[(CVec3, CVec3)],
) -> std::io::Result<()> {
    for (k, (s1, s2)) in traj.iter().enumerate() {
        write!(out, "{walker},{}", first_step + k as u64)?;
        for z in s1.iter().chain(s2.iter()) {
            write!(out, ",{:.12e},{:.12e}", z.re, z.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str =
    "walker,step,re_s1m,im_s1m,re_s1p,im_s1p,re_s1z,im_s1z,re_s2m,im_s2m,re_s2p,im_s2p,re_s2z,im_s2z";

/// Running sums over (walker, origin) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    pub grid: TauGrid,
    pub samples: usize,
    /// Σ s₁ᵢ(t₀+τ)s₂ⱼ(t₀) per lag, row-major in (i, j).
    products: Vec<[C64; 9]>,
    /// Σ (Re x)² and Σ (Im x)² of every product entry per lag.
    products_sq: Vec<[(f64, f64); 9]>,
    /// Σ s₁(t₀+τ) per lag.
    s1_sum: Vec<Raw3>,
    /// Σ s₂(t₀).
    s2_sum: Raw3,
    /// Σ (Re)², Σ (Im)² of s₁(t₀) and s₂(t₀).
    s1_sq: [(f64, f64); 3],
    s2_sq: [(f64, f64); 3],
}

impl EnsembleAccumulator {
    pub fn new(grid: TauGrid) -> Self {
        let zero = C64::new(0.0, 0.0);
        EnsembleAccumulator {
            grid,
            samples: 0,
            products: vec![[zero; 9]; grid.len],
            products_sq: vec![[(0.0, 0.0); 9]; grid.len],
            s1_sum: vec![[zero; 3]; grid.len],
            s2_sum: [zero; 3],
            s1_sq: [(0.0, 0.0); 3],
            s2_sq: [(0.0, 0.0); 3],
        }
    }

    pub(crate) fn begin_origin(&mut self, s1: &Raw3, s2: &Raw3) {
        self.samples += 1;
        for k in 0..3 {
            self.s2_sum[k] += s2[k];
            self.s1_sq[k].0 += s1[k].re * s1[k].re;
            self.s1_sq[k].1 += s1[k].im * s1[k].im;
            self.s2_sq[k].0 += s2[k].re * s2[k].re;
            self.s2_sq[k].1 += s2[k].im * s2[k].im;
        }
    }

    #[inline(always)]
    pub(crate) fn record(&mut self, lag: usize, s1: &Raw3, origin_s2: &Raw3) {
        let sum = &mut self.s1_sum[lag];
        let prod = &mut self.products[lag];
        let sq = &mut self.products_sq[lag];
        for i in 0..3 {
            sum[i] += s1[i];
            for j in 0..3 {
                let x = s1[i] * origin_s2[j];
                prod[3 * i + j] += x;
                sq[3 * i + j].0 += x.re * x.re;
                sq[3 * i + j].1 += x.im * x.im;
            }
        }
    }

    /// Adds another accumulator's sums; callers fix the order for reproducibility.
    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        self.samples += other.samples;
        for (a, b) in self.products.iter_mut().zip(&other.products) {
            for k in 0..9 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.products_sq.iter_mut().zip(&other.products_sq) {
            for k in 0..9 {
                a[k].0 += b[k].0;
                a[k].1 += b[k].1;
            }
        }
        for (a, b) in self.s1_sum.iter_mut().zip(&other.s1_sum) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        for k in 0..3 {
            self.s2_sum[k] += other.s2_sum[k];
            self.s1_sq[k].0 += other.s1_sq[k].0;
            self.s1_sq[k].1 += other.s1_sq[k].1;
            self.s2_sq[k].0 += other.s2_sq[k].0;
            self.s2_sq[k].1 += other.s2_sq[k].1;
        }
    }

    fn n(&self) -> f64 {
        self.samples as f64
    }

    /// mean(s₁(t₀+τ)s₂(t₀)ᵀ) at lag index `lag`.
    pub fn mean_product(&self, lag: usize) -> CMat3 {
        let p = &self.products[lag];
        CMat3::from_fn(|i, j| p[3 * i + j] / self.n())
    }

    /// Standard errors (re, im) of every entry of [`Self::mean_product`].
    pub fn product_stderr(&self, lag: usize) -> [[(f64, f64); 3]; 3] {
        let n = self.n();
        let (p, sq) = (&self.products[lag], &self.products_sq[lag]);
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let m = p[3 * i + j] / n;
                let (qr, qi) = sq[3 * i + j];
                (
                    ((qr / n - m.re * m.re).max(0.0) / n).sqrt(),
                    ((qi / n - m.im * m.im).max(0.0) / n).sqrt(),
                )
            })
        })
    }

    /// mean(s₁(t₀+τ)) at lag index `lag`.
    pub fn mean_s1(&self, lag: usize) -> CVec3 {
        CVec3::from_fn(|k, _| self.s1_sum[lag][k] / self.n())
    }

    /// mean(s₂(t₀)).
    pub fn mean_s2(&self) -> CVec3 {
        CVec3::from_fn(|k, _| self.s2_sum[k] / self.n())
    }

    /// Sample means of s₁ and s₂ at the origins.
    pub fn origin_means(&self) -> (CVec3, CVec3) {
        (self.mean_s1(0), self.mean_s2())
    }

    /// Standard errors (re, im) of the origin means of s₁ and s₂.
    pub fn origin_mean_stderr(&self) -> ([(f64, f64); 3], [(f64, f64); 3]) {
        let (m1, m2) = self.origin_means();
        let n = self.n();
        let se = |sq: (f64, f64), mean: C64| {
            let var_re = (sq.0 / n - mean.re * mean.re).max(0.0);
            let var_im = (sq.1 / n - mean.im * mean.im).max(0.0);
            ((var_re / n).sqrt(), (var_im / n).sqrt())
        };
        (
            std::array::from_fn(|k| se(self.s1_sq[k], m1[k])),
            std::array::from_fn(|k| se(self.s2_sq[k], m2[k])),
        )
    }

    /// mean(s₁ᵢ(t₀)·s₂ⱼ(t₀)) without mean subtraction.
    pub fn equal_time_product(&self, i: Spin, j: Spin) -> C64 {
        self.products[0][3 * i.index() + j.index()] / self.n()
    }
}

/// Runs one contiguous block of walkers sequentially.
fn run_block(
    model: &SdeModel,
    prop: &Propagator,
    cfg: &EnsembleConfig,
    grid: TauGrid,
    walkers: std::ops::Range<usize>,
) -> EnsembleAccumulator {
    let mut acc = EnsembleAccumulator::new(grid);
    let burn = cfg.burn_in_steps();
    let spacing = cfg.origin_spacing_steps(&model.params);
    let window = grid.len as u64;
    let start: Raw3 = model.drift.fixed_point().data.0[0];
    for w in walkers {
        let mut stream = NoiseStream::new(cfg.seed, w as u64);
        let (mut s1, mut s2) = (start, start);
        for _ in 0..burn {
            let xi = stream.next_normals();
            prop.advance_raw(&mut s1, &mut s2, &xi);
        }
        for _ in 0..cfg.origins_per_walker {
            let origin_s2 = s2;
            acc.begin_origin(&s1, &s2);
            for lag in 0..spacing.max(window) {
                if lag < window {
                    acc.record(lag as usize, &s1, &origin_s2);
                }
                let xi = stream.next_normals();
                prop.advance_raw(&mut s1, &mut s2, &xi);
            }
        }
    }
    acc
}

/// Burn-in, then records s₁(t₀+τ) against s₂(t₀) for every walker and origin.
///
/// Walkers are processed in fixed blocks of [`BLOCK_SIZE`] on the ambient rayon
/// pool and block sums are merged in block order, so the result is
/// bit-identical for any thread count.
pub fn run_ensemble(model: &SdeModel, cfg: &EnsembleConfig) -> Result<EnsembleAccumulator> {
    cfg.validate(&model.params)?;
    let grid = cfg.tau_grid()?;
    let prop = Propagator::new(&model.drift, &model.noise, cfg.dt);
    let n_blocks = cfg.n_walkers.div_ceil(BLOCK_SIZE);
    let batch = rayon::current_num_threads().max(1) * 2;

    let mut total = EnsembleAccumulator::new(grid);
    let mut next = 0;
    while next < n_blocks {
        let end = (next + batch).min(n_blocks);
        let partial: Vec<EnsembleAccumulator> = (next..end)
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK_SIZE;
                let hi = (lo + BLOCK_SIZE).min(cfg.n_walkers);
                run_block(model, &prop, cfg, grid, lo..hi)
            })
            .collect();
        for p in &partial {
            total.merge(p);
        }
        next = end;
    }
    Ok(total)
}

//! 1D Yee-grid Maxwell solver driven by the stochastic dipole.
//!
//! Two independent complex field problems E⁺/H⁺ and E⁻/H⁻ are advanced by
//! the leapfrog updates
//!
//! ```text
//! H[i]  ← H[i] − S·(E[i+1] − E[i])                      (H[i] at x_{i+½})
//! E[i]  ← E[i] − (S/ε_i)·(H[i] − H[i−1]) − (cΔt/ε_i)·J[i]
//! ```
//!
//! with `S = cΔt/Δx` and first-order Mur absorbing ends. The currents are
//! `J^±(x,t) = g(x)·e^{±iω_c t}·s_∓(t)` for a unit-integral Gaussian `g`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{Method, TauGrid};
use crate::error::{Error, Result};
use crate::linalg::{CVec3, C64};
use crate::params::{SystemParams, Units};
use crate::sde::{walker_trajectory, EnsembleAccumulator, EnsembleConfig, Raw3, SdeModel, BLOCK_SIZE};
use crate::spectrum::{check_tail, incoherent_spectrum_unchecked, scalar_series, Spectrum, MIN_SAMPLES};

/// Speed of light in μm/ps.
pub const SPEED_OF_LIGHT_UM_PS: f64 = 299.792_458;

pub const MIN_POINTS_PER_WAVELENGTH: f64 = 20.0;

/// Which walker components drive the two field branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceAssignment {
    /// E⁻ driven by s₁₊ and E⁺ by s₂₋, so ⟨E⁻(τ)E⁺(0)⟩ follows C₊₋(τ).
    #[default]
    Ordered,
    /// E⁺ driven by s₁₋ and E⁻ by s₂₊.
    Literal,
}

impl SourceAssignment {
    /// (s_minus, s_plus): the envelopes of J⁺ and J⁻.
    #[inline]
    pub fn pick(self, s1: &CVec3, s2: &CVec3) -> (C64, C64) {
        match self {
            SourceAssignment::Ordered => (s2[0], s1[1]),
            SourceAssignment::Literal => (s1[0], s2[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdtdConfig {
    pub n_x: usize,
    pub dx: f64,
    /// cΔt/Δx.
    pub courant: f64,
    /// Relative permittivity per cell; empty means vacuum.
    pub epsilon: Vec<f64>,
    /// Source centre in cells.
    pub mu: f64,
    /// Source width in cells.
    pub sigma: f64,
    pub omega_c: f64,
    /// Probe cell.
    pub probe: usize,
    /// Natural: c = 1 and time in units of T₁. Physical: μm and ps.
    pub units: Units,
    pub assignment: SourceAssignment,
}

impl FdtdConfig {
    /// 64 cells, 30 cells per carrier wavelength, source at the centre,
    /// probe 24 cells downstream, carrier well above the Mollow span.
    pub fn for_params(p: &SystemParams) -> Self {
        let c = light_speed(p.units);
        let omega_gen = p.generalized_rabi_energy() / p.hbar();
        let omega_c = (25.0 * omega_gen).max(200.0 / p.t1);
        let dx = 2.0 * std::f64::consts::PI * c / (omega_c * 30.0);
        FdtdConfig {
            n_x: 64,
            dx,
            courant: 0.99,
            epsilon: Vec::new(),
            mu: 32.0,
            sigma: 3.0,
            omega_c,
            probe: 56,
            units: p.units,
            assignment: SourceAssignment::Ordered,
        }
    }

    pub fn c(&self) -> f64 {
        light_speed(self.units)
    }

    pub fn dt(&self) -> f64 {
        self.courant * self.dx / self.c()
    }

    pub fn points_per_wavelength(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.c() / (self.omega_c * self.dx)
    }

    pub fn eps(&self, i: usize) -> f64 {
        self.epsilon.get(i).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.courant <= 1.0) {
            return Err(Error::CourantViolation { courant: self.courant });
        }
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.courant > 0.0) {
            return bad(format!("courant must be > 0, got {}", self.courant));
        }
        if self.n_x < 8 {
            return bad(format!("n_x must be >= 8, got {}", self.n_x));
        }
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return bad(format!("dx must be > 0, got {}", self.dx));
        }
        if !(self.omega_c > 0.0) || !self.omega_c.is_finite() {
            return bad(format!("omega_c must be > 0, got {}", self.omega_c));
        }
        if self.points_per_wavelength() < MIN_POINTS_PER_WAVELENGTH {
            return bad(format!(
                "{:.2} cells per carrier wavelength, need >= {MIN_POINTS_PER_WAVELENGTH}",
                self.points_per_wavelength()
            ));
        }
        if !(self.sigma > 0.0) || !(0.0..=(self.n_x - 1) as f64).contains(&self.mu) {
            return bad(format!("source mu {} / sigma {} outside the grid", self.mu, self.sigma));
        }
        if self.probe >= self.n_x {
            return bad(format!("probe {} outside grid of {} cells", self.probe, self.n_x));
        }
        if !self.epsilon.is_empty() && self.epsilon.len() != self.n_x {
            return bad(format!(
                "epsilon has {} entries for {} cells",
                self.epsilon.len(),
                self.n_x
            ));
        }
        if self.epsilon.iter().any(|e| !(*e >= 1.0) || !e.is_finite()) {
            return bad("epsilon must be finite and >= 1".into());
        }
        Ok(())
    }

    /// Lowers the Courant number so that `dt_source` is a whole number of steps.
    pub fn commensurate_with(mut self, dt_source: f64) -> Self {
        let sub = (dt_source * self.c() / (self.courant * self.dx) * (1.0 - 1e-12))
            .ceil()
            .max(1.0);
        self.courant = dt_source * self.c() / (sub * self.dx);
        self
    }

    /// FDTD steps per source sample; `dt_source` must be a whole multiple of Δt.
    pub fn substeps(&self, dt_source: f64) -> Result<usize> {
        let ratio = dt_source / self.dt();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::InvalidParams(format!(
                "source step {dt_source} is not a whole multiple of the FDTD step {}",
                self.dt()
            )));
        }
        Ok(n as usize)
    }

    /// Light travel time from source centre to probe.
    pub fn travel_time(&self) -> f64 {
        let (lo, hi) = if (self.probe as f64) < self.mu {
            (self.probe, self.mu.ceil() as usize)
        } else {
            (self.mu.floor() as usize, self.probe)
        };
        (lo..hi).map(|i| self.eps(i).sqrt()).sum::<f64>() * self.dx / self.c()
    }

    /// Discarded lead-in: twice the source-to-probe travel time plus 10·T₁.
    pub fn warmup_time(&self, t1: f64) -> f64 {
        2.0 * self.travel_time() + 10.0 * t1
    }

    /// g(xᵢ) with Σ g(xᵢ)·Δx = 1.
    pub fn source_profile(&self) -> Vec<f64> {
        let w: Vec<f64> = (0..self.n_x)
            .map(|i| (-(i as f64 - self.mu).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let norm: f64 = w.iter().sum::<f64>() * self.dx;
        w.iter().map(|v| v / norm).collect()
    }
}

fn light_speed(units: Units) -> f64 {
    match units {
        Units::Natural => 1.0,
        Units::Physical => SPEED_OF_LIGHT_UM_PS,
    }
}

/// (J⁺, J⁻) on the grid at time `t`.
pub fn source_current(cfg: &FdtdConfig, t: f64, s_minus: C64, s_plus: C64) -> (Vec<C64>, Vec<C64>) {
    let carrier = C64::from_polar(1.0, cfg.omega_c * t);
    let (a_plus, a_minus) = (carrier * s_minus, carrier.conj() * s_plus);
    let g = cfg.source_profile();
    (
        g.iter().map(|v| a_plus * v).collect(),
        g.iter().map(|v| a_minus * v).collect(),
    )
}

/// One complex field problem on the Yee grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1d {
    /// E at integer cells, time step n.
    pub e: Vec<C64>,
    /// H at half cells, time step n − ½.
    pub h: Vec<C64>,
}

impl Field1d {
    pub fn zeros(n_x: usize) -> Self {
        Field1d {
            e: vec![C64::new(0.0, 0.0); n_x],
            h: vec![C64::new(0.0, 0.0); n_x - 1],
        }
    }

    /// Σ |E|²·ε + |H|² over the grid.
    pub fn energy(&self, cfg: &FdtdConfig) -> f64 {
        let e: f64 = self.e.iter().enumerate().map(|(i, v)| cfg.eps(i) * v.norm_sqr()).sum();
        e + self.h.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
}

/// Update coefficients derived from a validated configuration.
#[derive(Debug, Clone)]
pub struct Stepper {
    s: f64,
    ce: Vec<f64>,
    cj: Vec<f64>,
    mur_left: f64,
    mur_right: f64,
}

impl Stepper {
    pub fn new(cfg: &FdtdConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.courant;
        let cdt = cfg.c() * cfg.dt();
        let mur = |eps: f64| {
            let k = s / eps.sqrt();
            (k - 1.0) / (k + 1.0)
        };
        Ok(Stepper {
            s,
            ce: (0..cfg.n_x).map(|i| s / cfg.eps(i)).collect(),
            cj: (0..cfg.n_x).map(|i| cdt / cfg.eps(i)).collect(),
            mur_left: mur(cfg.eps(0)),
            mur_right: mur(cfg.eps(cfg.n_x - 1)),
        })
    }
}

/// Advances E from n to n+1 and H from n−½ to n+½. `j` is the current at
/// n+½, or `None` for a source-free step.
pub fn fdtd_step(field: &mut Field1d, st: &Stepper, j: Option<&[C64]>) {
    let n = field.e.len();
    let edges = leapfrog(field, st);
    if let Some(j) = j {
        for ((e, j), c) in field.e[1..n - 1].iter_mut().zip(&j[1..n - 1]).zip(&st.cj[1..n - 1]) {
            *e -= j * c;
        }
    }
    apply_mur(field, st, edges);
}

/// As [`fdtd_step`] with `J = amp·profile` on cells `lo..lo + profile.len()`,
/// where `profile` already carries the cΔt/ε factor.
#[inline]
fn driven_step(field: &mut Field1d, st: &Stepper, amp: C64, profile: &[f64], lo: usize) {
    let edges = leapfrog(field, st);
    for (e, g) in field.e[lo..lo + profile.len()].iter_mut().zip(profile) {
        *e -= amp * g;
    }
    apply_mur(field, st, edges);
}

/// Source-free interior update; returns E at cells 0, 1, n−1, n−2 from before it.
#[inline]
fn leapfrog(field: &mut Field1d, st: &Stepper) -> [C64; 4] {
    let (e, h) = (&mut field.e, &mut field.h);
    let n = e.len();
    let edges = [e[0], e[1], e[n - 1], e[n - 2]];
    for (h, w) in h.iter_mut().zip(e.windows(2)) {
        *h -= (w[1] - w[0]) * st.s;
    }
    for ((e, w), c) in e[1..n - 1].iter_mut().zip(h.windows(2)).zip(&st.ce[1..n - 1]) {
        *e -= (w[1] - w[0]) * c;
    }
    edges
}

#[inline]
fn apply_mur(field: &mut Field1d, st: &Stepper, [e0, e1, en, en1]: [C64; 4]) {
    let e = &mut field.e;
    let n = e.len();
    e[0] = e1 + (e[1] - e0) * st.mur_left;
    e[n - 1] = en1 + (e[n - 2] - en) * st.mur_right;
}

/// Probe samples of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub realization: u64,
    /// Time of the first sample.
    pub t0: f64,
    pub dt: f64,
    pub e_plus: Vec<C64>,
    pub e_minus: Vec<C64>,
}

pub const FIELD_HEADER: &str = "t,re_e_plus,im_e_plus,re_e_minus,im_e_minus";

impl FieldRecord {
    pub fn len(&self) -> usize {
        self.e_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_plus.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# realization = {}", self.realization)?;
        writeln!(out, "{FIELD_HEADER}")?;
        for k in 0..self.len() {
            let (p, m) = (self.e_plus[k], self.e_minus[k]);
            writeln!(
                out,
                "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.time(k),
                p.re,
                p.im,
                m.re,
                m.im
            )?;
        }
        Ok(())
    }
}

/// Drives both branches with envelope samples `(s_minus, s_plus)` held
/// constant over each source step of length `dt_source`, and records the
/// probe fields at every source sample from index `skip` on.
pub fn run_sources(
    sources: &[(C64, C64)],
    dt_source: f64,
    cfg: &FdtdConfig,
    skip: usize,
    realization: u64,
) -> Result<FieldRecord> {
    let st = Stepper::new(cfg)?;
    let sub = cfg.substeps(dt_source)?;
    let dt = cfg.dt();
    let g = cfg.source_profile();
    let peak = g.iter().copied().fold(0.0, f64::max);
    let lo = (1..cfg.n_x - 1).find(|&i| g[i] > 1e-17 * peak).unwrap_or(1);
    let hi = (1..cfg.n_x - 1).rev().find(|&i| g[i] > 1e-17 * peak).unwrap_or(lo) + 1;
    let profile: Vec<f64> = (lo..hi).map(|i| g[i] * st.cj[i]).collect();
    let mut plus = Field1d::zeros(cfg.n_x);
    let mut minus = Field1d::zeros(cfg.n_x);
    let keep = sources.len().saturating_sub(skip);
    let mut rec = FieldRecord {
        realization,
        t0: skip as f64 * dt_source,
        dt: dt_source,
        e_plus: Vec::with_capacity(keep),
        e_minus: Vec::with_capacity(keep),
    };
    let rot = C64::from_polar(1.0, cfg.omega_c * dt);
    for (k, &(s_minus, s_plus)) in sources.iter().enumerate() {
        if k >= skip {
            rec.e_plus.push(plus.e[cfg.probe]);
            rec.e_minus.push(minus.e[cfg.probe]);
        }
        if k + 1 == sources.len() {
            break;
        }
        let n0 = k * sub;
        let mut carrier = C64::from_polar(1.0, cfg.omega_c * (n0 as f64 + 0.5) * dt);
        for _ in 0..sub {
            driven_step(&mut plus, &st, carrier * s_minus, &profile, lo);
            driven_step(&mut minus, &st, carrier.conj() * s_plus, &profile, lo);
            carrier *= rot;
        }
    }
    Ok(rec)
}

/// Propagates one walker trajectory sampled every `dt_source`.
pub fn run_realization(
    traj: &[(CVec3, CVec3)],
    dt_source: f64,
    cfg: &FdtdConfig,
    skip: usize,
    realization: u64,
) -> Result<FieldRecord> {
    let sources: Vec<(C64, C64)> = traj.iter().map(|(s1, s2)| cfg.assignment.pick(s1, s2)).collect();
    run_sources(&sources, dt_source, cfg, skip, realization)
}

/// Running sums of demodulated probe fields over (realization, origin).
///
/// Samples are demodulated by their absolute time, Ẽ^± = E^±·e^{∓iω_c t}, so
/// Ẽ⁻(t₀+τ)Ẽ⁺(t₀) = E⁻(t₀+τ)E⁺(t₀)·e^{iω_c τ} and the means are those of the
/// slowly varying envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldAccumulator {
    pub grid: TauGrid,
    pub samples: usize,
    pub omega_c: f64,
    products: Vec<C64>,
    products_sq: Vec<(f64, f64)>,
    minus_sum: Vec<C64>,
    plus_sum: C64,
}

impl FieldAccumulator {
    pub fn new(grid: TauGrid, omega_c: f64) -> Self {
        let zero = C64::new(0.0, 0.0);
        FieldAccumulator {
            grid,
            samples: 0,
            omega_c,
            products: vec![zero; grid.len],
            products_sq: vec![(0.0, 0.0); grid.len],
            minus_sum: vec![zero; grid.len],
            plus_sum: zero,
        }
    }

    /// Adds the window starting at sample `origin` of `rec`.
    pub fn add(&mut self, rec: &FieldRecord, origin: usize) -> Result<()> {
        let len = self.grid.len;
        if origin + len > rec.len() {
            return Err(Error::InvalidParams(format!(
                "record of {} samples too short for origin {origin} and {len} lags",
                rec.len()
            )));
        }
        let demod = |k: usize, sign: f64| C64::from_polar(1.0, sign * self.omega_c * rec.time(k));
        let plus0 = rec.e_plus[origin] * demod(origin, -1.0);
        self.samples += 1;
        self.plus_sum += plus0;
        for lag in 0..len {
            let k = origin + lag;
            let minus = rec.e_minus[k] * demod(k, 1.0);
            let x = minus * plus0;
            self.minus_sum[lag] += minus;
            self.products[lag] += x;
            self.products_sq[lag].0 += x.re * x.re;
            self.products_sq[lag].1 += x.im * x.im;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &FieldAccumulator) {
        self.samples += other.samples;
        self.plus_sum += other.plus_sum;
        for k in 0..self.grid.len {
            self.products[k] += other.products[k];
            self.products_sq[k].0 += other.products_sq[k].0;
            self.products_sq[k].1 += other.products_sq[k].1;
            self.minus_sum[k] += other.minus_sum[k];
        }
    }

    /// mean(Ẽ⁻(τ)Ẽ⁺(0)) − mean(Ẽ⁻(τ))·mean(Ẽ⁺(0)) and its standard error.
    pub fn correlation(&self) -> Result<(Vec<C64>, Vec<(f64, f64)>)> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                got: self.samples,
                required: MIN_SAMPLES,
            });
        }
        let n = self.samples as f64;
        let plus = self.plus_sum / n;
        let values = (0..self.grid.len)
            .map(|k| self.products[k] / n - self.minus_sum[k] / n * plus)
            .collect();
        let stderr = (0..self.grid.len)
            .map(|k| {
                let m = self.products[k] / n;
                let (qr, qi) = self.products_sq[k];
                (
                    ((qr / n - m.re * m.re).max(0.0) / n).sqrt(),
                    ((qi / n - m.im * m.im).max(0.0) / n).sqrt(),
                )
            })
            .collect();
        Ok((values, stderr))
    }
}

/// Incoherent spectrum of the propagated field on the energy grid `omega`.
pub fn fdtd_spectrum(acc: &FieldAccumulator, omega: &[f64], units: Units) -> Result<Spectrum> {
    let (values, stderr) = acc.correlation()?;
    check_tail(&values, Some(&stderr))?;
    let series = scalar_series(acc.grid, &values, Method::Fdtd, Some(&stderr));
    Ok(incoherent_spectrum_unchecked(&series, omega, units))
}

/// [`fdtd_spectrum`] over a set of stored records, one origin each at sample 0.
pub fn fdtd_spectrum_from_records(
    records: &[FieldRecord],
    grid: TauGrid,
    omega_c: f64,
    omega: &[f64],
    units: Units,
) -> Result<Spectrum> {
    let mut acc = FieldAccumulator::new(grid, omega_c);
    for r in records {
        acc.add(r, 0)?;
    }
    fdtd_spectrum(&acc, omega, units)
}

/// Field correlations and the at-atom reference from the same walkers.
#[derive(Debug, Clone)]
pub struct FdtdEnsemble {
    pub field: FieldAccumulator,
    /// s₁(t₀+τ)s₂(t₀) sums at the source times that reach the probe at the
    /// field origins.
    pub at_atom: EnsembleAccumulator,
    pub config: FdtdConfig,
}

/// Geometry of one realization in source samples.
#[derive(Debug, Clone, Copy)]
struct Layout {
    warmup: usize,
    delay: usize,
    spacing: usize,
    window: usize,
    len: usize,
}

fn layout(model: &SdeModel, cfg: &FdtdConfig, ens: &EnsembleConfig, grid: TauGrid) -> Layout {
    let warmup = (cfg.warmup_time(model.params.t1) / ens.dt).ceil() as usize;
    let delay = (cfg.travel_time() / ens.dt).round() as usize;
    let spacing = ens.origin_spacing_steps(&model.params) as usize;
    let window = grid.len;
    let len = warmup + (ens.origins_per_walker - 1) * spacing + window;
    Layout {
        warmup,
        delay,
        spacing,
        window,
        len,
    }
}

fn run_fdtd_block(
    model: &SdeModel,
    cfg: &FdtdConfig,
    ens: &EnsembleConfig,
    grid: TauGrid,
    lay: Layout,
    walkers: std::ops::Range<usize>,
) -> Result<(FieldAccumulator, EnsembleAccumulator)> {
    let mut field = FieldAccumulator::new(grid, cfg.omega_c);
    let mut atom = EnsembleAccumulator::new(grid);
    for w in walkers {
        let traj = walker_trajectory(model, ens, w as u64, lay.len);
        let rec = run_realization(&traj, ens.dt, cfg, lay.warmup, w as u64)?;
        for o in 0..ens.origins_per_walker {
            let start = o * lay.spacing;
            field.add(&rec, start)?;
            let src = lay.warmup + start - lay.delay;
            let raw = |v: &CVec3| -> Raw3 { [v[0], v[1], v[2]] };
            let origin_s2 = raw(&traj[src].1);
            atom.begin_origin(&raw(&traj[src].0), &origin_s2);
            for lag in 0..lay.window {
                atom.record(lag, &raw(&traj[src + lag].0), &origin_s2);
            }
        }
    }
    Ok((field, atom))
}

/// Runs `ens.n_walkers` realizations: each walker is burnt in, then its
/// trajectory drives the grid through the warm-up and the recorded windows.
/// Blocks are merged in order, so results do not depend on the thread count.
pub fn run_fdtd_ensemble(model: &SdeModel, cfg: &FdtdConfig, ens: &EnsembleConfig) -> Result<FdtdEnsemble> {
    ens.validate(&model.params)?;
    cfg.validate()?;
    cfg.substeps(ens.dt)?;
    let grid = ens.tau_grid()?;
    let lay = layout(model, cfg, ens, grid);
    let n_blocks = ens.n_walkers.div_ceil(BLOCK_SIZE);
    let batch = rayon::current_num_threads().max(1) * 2;
    let mut field = FieldAccumulator::new(grid, cfg.omega_c);
    let mut atom = EnsembleAccumulator::new(grid);
    let mut next = 0;
    while next < n_blocks {
        let end = (next + batch).min(n_blocks);
        let partial: Vec<Result<(FieldAccumulator, EnsembleAccumulator)>> = (next..end)
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK_SIZE;
                let hi = (lo + BLOCK_SIZE).min(ens.n_walkers);
                run_fdtd_block(model, cfg, ens, grid, lay, lo..hi)
            })
            .collect();
        for p in partial {
            let (f, a) = p?;
            field.merge(&f);
            atom.merge(&a);
        }
        next = end;
    }
    Ok(FdtdEnsemble {
        field,
        at_atom: atom,
        config: cfg.clone(),
    })
}

//! Direct simulation of the reaction-diffusion system on a periodic domain.
//!
//! In a frame moving with speed `V` the system reads
//! `u_t = u_xx + V u_x + F(u, w)`, `w_t = V w_x + eps G(u, w)`. The linear part
//! is integrated exactly in Fourier space and the kinetics by fourth-order
//! exponential time differencing (ETDRK4).

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ReactionModel;
use crate::wavetrain::WaveTrain;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Points on the contour used for the phi-function averages.
pub const CONTOUR_POINTS: usize = 32;

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_DX: f64 = 0.1;
pub const DEFAULT_THRESHOLD: f64 = 1e-5;

/// Exponent of the mismatch functional in [`phase_fit`].
pub const FIT_EXPONENT: f64 = 0.1;

/// Uniform periodic grid on `[0, l_domain)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub l_domain: f64,
    pub n: usize,
    pub dx: f64,
    /// FFT-ordered wavenumbers; the Nyquist entry is negative.
    pub wavenumbers: Vec<f64>,
}

impl SimGrid {
    pub fn new(l_domain: f64, n: usize) -> Result<Self> {
        if !(l_domain > 0.0 && l_domain.is_finite()) {
            return Err(Error::InvalidInput(format!("domain length {l_domain} must be positive")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(format!("grid size {n} must be a power of two >= 4")));
        }
        let k0 = TWO_PI / l_domain;
        let wavenumbers = (0..n)
            .map(|j| if 2 * j < n { j as f64 * k0 } else { (j as f64 - n as f64) * k0 })
            .collect();
        Ok(Self { l_domain, n, dx: l_domain / n as f64, wavenumbers })
    }

    /// Smallest power-of-two grid with spacing at most `dx_max`.
    pub fn with_spacing(l_domain: f64, dx_max: f64) -> Result<Self> {
        if !(dx_max > 0.0) {
            return Err(Error::InvalidInput(format!("grid spacing {dx_max} must be positive")));
        }
        let n = ((l_domain / dx_max).ceil() as usize).max(4).next_power_of_two();
        Self::new(l_domain, n)
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.dx).collect()
    }

    /// Wavenumber used for first derivatives (Nyquist mode dropped).
    fn k_odd(&self, j: usize) -> f64 {
        if 2 * j == self.n { 0.0 } else { self.wavenumbers[j] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    /// Speed of the computational frame (0 for the steady frame).
    pub frame_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Steady,
    Comoving,
}

/// ETDRK4 coefficients for one diagonal linear symbol.
struct PhiTable {
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl PhiTable {
    fn new(symbol: &[Complex64], dt: f64) -> Self {
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, TWO_PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let m = CONTOUR_POINTS as f64;
        let n = symbol.len();
        let mut t = PhiTable {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &s in symbol {
            let z = s * dt;
            t.e.push(z.exp());
            t.e2.push((0.5 * z).exp());
            let zero = Complex64::new(0.0, 0.0);
            let (mut q, mut f1, mut f2, mut f3) = (zero, zero, zero, zero);
            for &r0 in &roots {
                let r: Complex64 = z + r0;
                let er = r.exp();
                let r3 = r * r * r;
                q += ((0.5 * r).exp() - 1.0) / r;
                f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r * r)) / r3;
                f2 += (2.0 + r + er * (r - 2.0)) / r3;
                f3 += (-4.0 - 3.0 * r - r * r + er * (4.0 - r)) / r3;
            }
            t.q.push(dt * q / m);
            t.f1.push(dt * f1 / m);
            t.f2.push(dt * f2 / m);
            t.f3.push(dt * f3 / m);
        }
        t
    }
}

/// Fixed-step ETDRK4 integrator for one grid, model, step and frame.
pub struct Etdrk4 {
    pub grid: SimGrid,
    pub model: ReactionModel,
    pub dt: f64,
    pub frame_speed: f64,
    /// Max-norm of `u` above which [`Error::BlowUp`] is raised.
    pub blowup_bound: f64,
    phi_u: PhiTable,
    phi_w: PhiTable,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

/// Spectral pair `(u_hat, w_hat)`.
type Spec = (Vec<Complex64>, Vec<Complex64>);

impl Etdrk4 {
    pub fn new(grid: SimGrid, model: ReactionModel, dt: f64, frame_speed: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let i = Complex64::i();
        let sym_u: Vec<Complex64> = (0..grid.n)
            .map(|j| -grid.wavenumbers[j].powi(2) + i * grid.k_odd(j) * frame_speed)
            .collect();
        let sym_w: Vec<Complex64> = (0..grid.n).map(|j| i * grid.k_odd(j) * frame_speed).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n);
        let inv = planner.plan_fft_inverse(grid.n);
        let scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        Ok(Self {
            phi_u: PhiTable::new(&sym_u, dt),
            phi_w: PhiTable::new(&sym_w, dt),
            grid,
            model,
            dt,
            frame_speed,
            blowup_bound: 1e3,
            fwd,
            inv,
            scratch,
        })
    }

    fn forward(&mut self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process_with_scratch(&mut buf, &mut self.scratch);
        buf
    }

    fn inverse(&mut self, v: &[Complex64]) -> Vec<f64> {
        let mut buf = v.to_vec();
        self.inv.process_with_scratch(&mut buf, &mut self.scratch);
        let s = 1.0 / self.grid.n as f64;
        buf.iter().map(|z| z.re * s).collect()
    }

    /// Kinetics in spectral space from physical fields.
    fn nonlinear(&mut self, u: &[f64], w: &[f64]) -> Spec {
        let eps = self.model.epsilon();
        let fu: Vec<f64> = u.iter().zip(w).map(|(&a, &b)| self.model.f(a, b)).collect();
        let gw: Vec<f64> = u.iter().zip(w).map(|(&a, &b)| eps * self.model.g(a, b)).collect();
        (self.forward(&fu), self.forward(&gw))
    }

    fn check(&self, u: &[f64], t: f64) -> Result<()> {
        let norm = u.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
        if norm > self.blowup_bound {
            return Err(Error::BlowUp { t, norm });
        }
        Ok(())
    }

    /// Advances `state` by one step.
    pub fn step(&mut self, state: &mut SimState) -> Result<()> {
        if state.u.len() != self.grid.n || state.w.len() != self.grid.n {
            return Err(Error::DomainMismatch(format!(
                "state has {} points, grid has {}",
                state.u.len(),
                self.grid.n
            )));
        }
        let n = self.grid.n;
        let (uh, wh) = (self.forward(&state.u), self.forward(&state.w));
        let (nu, nw) = self.nonlinear(&state.u, &state.w);

        let stage = |phi: &PhiTable, base: &[Complex64], nl: &[Complex64]| -> Vec<Complex64> {
            (0..n).map(|j| phi.e2[j] * base[j] + phi.q[j] * nl[j]).collect()
        };
        let au = stage(&self.phi_u, &uh, &nu);
        let aw = stage(&self.phi_w, &wh, &nw);
        let (au_p, aw_p) = (self.inverse(&au), self.inverse(&aw));
        let (nau, naw) = self.nonlinear(&au_p, &aw_p);

        let bu = stage(&self.phi_u, &uh, &nau);
        let bw = stage(&self.phi_w, &wh, &naw);
        let (bu_p, bw_p) = (self.inverse(&bu), self.inverse(&bw));
        let (nbu, nbw) = self.nonlinear(&bu_p, &bw_p);

        let cstage = |phi: &PhiTable, a: &[Complex64], nb: &[Complex64], nv: &[Complex64]| -> Vec<Complex64> {
            (0..n).map(|j| phi.e2[j] * a[j] + phi.q[j] * (2.0 * nb[j] - nv[j])).collect()
        };
        let cu = cstage(&self.phi_u, &au, &nbu, &nu);
        let cw = cstage(&self.phi_w, &aw, &nbw, &nw);
        let (cu_p, cw_p) = (self.inverse(&cu), self.inverse(&cw));
        let (ncu, ncw) = self.nonlinear(&cu_p, &cw_p);

        let combine = |phi: &PhiTable, v: &[Complex64], n0: &[Complex64], na: &[Complex64], nb: &[Complex64], nc: &[Complex64]| {
            (0..n)
                .map(|j| phi.e[j] * v[j] + phi.f1[j] * n0[j] + 2.0 * phi.f2[j] * (na[j] + nb[j]) + phi.f3[j] * nc[j])
                .collect::<Vec<Complex64>>()
        };
        let un = combine(&self.phi_u, &uh, &nu, &nau, &nbu, &ncu);
        let wn = combine(&self.phi_w, &wh, &nw, &naw, &nbw, &ncw);
        state.u = self.inverse(&un);
        state.w = self.inverse(&wn);
        state.t += self.dt;
        self.check(&state.u, state.t)
    }

    /// Advances by `steps` steps.
    pub fn advance(&mut self, state: &mut SimState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(state)?;
        }
        Ok(())
    }

    /// Time derivative `(u_t, w_t)` of `state` in this integrator's frame.
    pub fn time_derivative(&mut self, state: &SimState) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::i();
        let v = self.frame_speed;
        let mut uh = self.forward(&state.u);
        let mut wh = self.forward(&state.w);
        for j in 0..self.grid.n {
            let (k, kd) = (self.grid.wavenumbers[j], self.grid.k_odd(j));
            uh[j] *= -k * k + i * kd * v;
            wh[j] *= i * kd * v;
        }
        let (lu, lw) = (self.inverse(&uh), self.inverse(&wh));
        let eps = self.model.epsilon();
        let ut = (0..self.grid.n).map(|j| lu[j] + self.model.f(state.u[j], state.w[j])).collect();
        let wt = (0..self.grid.n).map(|j| lw[j] + eps * self.model.g(state.u[j], state.w[j])).collect();
        (ut, wt)
    }

    /// Spectral first derivative of a field.
    pub fn derivative(&mut self, v: &[f64]) -> Vec<f64> {
        let i = Complex64::i();
        let mut h = self.forward(v);
        for (j, z) in h.iter_mut().enumerate() {
            *z *= i * self.grid.k_odd(j);
        }
        self.inverse(&h)
    }
}

/// Single ETDRK4 step; builds the integrator on every call, so prefer
/// [`Etdrk4`] for repeated stepping.
pub fn etdrk4_step(state: &SimState, grid: &SimGrid, dt: f64, model: &ReactionModel) -> Result<SimState> {
    let mut integ = Etdrk4::new(grid.clone(), *model, dt, state.frame_speed)?;
    let mut next = state.clone();
    integ.step(&mut next)?;
    Ok(next)
}

/// A wave train repeated over a periodic domain.
pub struct TiledTrain {
    pub grid: SimGrid,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub period: f64,
    pub repeats: usize,
    pub c: f64,
    u_hat: Vec<Complex64>,
    inv: Arc<dyn Fft<f64>>,
}

impl TiledTrain {
    /// Samples `wt` on `grid`, which must hold an integer number of periods.
    pub fn new(wt: &WaveTrain, grid: &SimGrid) -> Result<Self> {
        let ratio = grid.l_domain / wt.l_eps;
        let repeats = ratio.round();
        if repeats < 1.0 || (ratio - repeats).abs() > 1e-9 * ratio {
            return Err(Error::DomainMismatch(format!(
                "domain length {} is {ratio} periods of {}",
                grid.l_domain, wt.l_eps
            )));
        }
        let theta: Vec<f64> = grid.x().iter().map(|&x| (wt.ell * x).rem_euclid(TWO_PI)).collect();
        let (u, w) = wt.sample(&theta);
        let mut planner = FftPlanner::new();
        let mut u_hat: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        planner.plan_fft_forward(grid.n).process(&mut u_hat);
        Ok(Self {
            grid: grid.clone(),
            u,
            w,
            period: wt.l_eps,
            repeats: repeats as usize,
            c: wt.c,
            u_hat,
            inv: planner.plan_fft_inverse(grid.n),
        })
    }

    /// Grid with `repeats` periods of `wt` and spacing at most `dx_max`.
    pub fn grid_for(wt: &WaveTrain, repeats: usize, dx_max: f64) -> Result<SimGrid> {
        if repeats == 0 {
            return Err(Error::InvalidInput("at least one period is required".into()));
        }
        SimGrid::with_spacing(repeats as f64 * wt.l_eps, dx_max)
    }

    /// `u_wt(x + xi0)` on the grid.
    pub fn translate(&self, xi0: f64) -> Vec<f64> {
        let i = Complex64::i();
        let mut buf: Vec<Complex64> = (0..self.grid.n)
            .map(|j| {
                let k = if 2 * j == self.grid.n { 0.0 } else { self.grid.wavenumbers[j] };
                self.u_hat[j] * (i * k * xi0).exp()
            })
            .collect();
        // the Nyquist mode of a real field is real; keep its cosine part
        if self.grid.n % 2 == 0 {
            let j = self.grid.n / 2;
            let k = self.grid.wavenumbers[j];
            buf[j] = self.u_hat[j] * (k * xi0).cos();
        }
        self.inv.process(&mut buf);
        let s = 1.0 / self.grid.n as f64;
        buf.iter().map(|z| z.re * s).collect()
    }

    pub fn state(&self, frame: Frame) -> SimState {
        SimState {
            u: self.u.clone(),
            w: self.w.clone(),
            t: 0.0,
            frame_speed: match frame {
                Frame::Steady => 0.0,
                Frame::Comoving => self.c,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub xi0: f64,
    pub perturbation: Vec<f64>,
    pub objective: f64,
    /// The objective does not depend on the shift (translation-invariant state).
    pub degenerate: bool,
}

fn mismatch(u: &[f64], v: &[f64], stride: usize) -> f64 {
    u.iter().step_by(stride).zip(v.iter().step_by(stride)).map(|(a, b)| (a - b).abs().powf(FIT_EXPONENT)).sum()
}

/// Closest translate of the tiled train to `u` under the `|.|^0.1` mismatch:
/// a coarse search over grid shifts across one period followed by
/// golden-section refinement within one grid cell on either side.
pub fn phase_fit(u: &[f64], train: &TiledTrain) -> PhaseFit {
    let n = train.grid.n;
    let dx = train.grid.dx;
    let stride = (n / 4096).max(1);
    let shifts = ((train.period / dx).ceil() as usize + 1).min(n);
    let mut rotated = vec![0.0; n];
    let (mut best, mut best_s) = (f64::INFINITY, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 0..shifts {
        for j in (0..n).step_by(stride) {
            rotated[j] = train.u[(j + s) % n];
        }
        let m = mismatch(u, &rotated, stride);
        lo = lo.min(m);
        hi = hi.max(m);
        if m < best {
            best = m;
            best_s = s;
        }
    }
    let degenerate = hi - lo <= 1e-12 * hi.abs().max(1.0);
    let objective = |xi: f64| mismatch(u, &train.translate(xi), 1) * dx;
    let (mut a, mut b) = ((best_s as f64 - 1.0) * dx, (best_s as f64 + 1.0) * dx);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > 1e-10 * dx.max(1.0) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = objective(x2);
        }
    }
    let xi0 = 0.5 * (a + b);
    let fit = train.translate(xi0);
    let perturbation: Vec<f64> = u.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let objective = mismatch(u, &fit, 1) * dx;
    PhaseFit { xi0: xi0.rem_euclid(train.period), perturbation, objective, degenerate }
}

/// Length of the smallest periodic interval containing every point where
/// `|v| > threshold`.
pub fn support_width(v: &[f64], dx: f64, threshold: f64) -> f64 {
    let idx: Vec<usize> = v.iter().enumerate().filter(|(_, x)| x.abs() > threshold).map(|(j, _)| j).collect();
    match idx.len() {
        0 => 0.0,
        1 => dx,
        m => {
            let n = v.len();
            let mut gap = idx[0] + n - idx[m - 1];
            for w in idx.windows(2) {
                gap = gap.max(w[1] - w[0]);
            }
            (n - gap + 1) as f64 * dx
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSeries {
    pub times: Vec<f64>,
    pub widths: Vec<f64>,
    pub threshold: f64,
    /// Least-squares slope of `width^2` against `t`.
    pub slope_fit: Option<f64>,
    /// `slope_fit / 4`.
    pub d_eff_estimate: Option<f64>,
}

impl WidthSeries {
    pub fn new(times: Vec<f64>, widths: Vec<f64>, threshold: f64) -> Self {
        let mut s = Self { times, widths, threshold, slope_fit: None, d_eff_estimate: None };
        if let Ok(fit) = extract_deff(&s, DEFAULT_TRANSIENT_CUT) {
            s.slope_fit = Some(fit.slope);
            s.d_eff_estimate = Some(fit.d_eff);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,width\n");
        for (t, w) in self.times.iter().zip(&self.widths) {
            s.push_str(&format!("{:.16e},{:.16e}\n", t, w));
        }
        s
    }
}

pub const DEFAULT_TRANSIENT_CUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeffFit {
    pub d_eff: f64,
    /// Standard error of `d_eff` from the fit residuals.
    pub std_err: f64,
    pub slope: f64,
    pub intercept: f64,
    pub samples: usize,
}

/// Least-squares fit of `width^2` against `t` after discarding the leading
/// `transient_cut` fraction of the samples; `d_eff = slope / 4`.
pub fn extract_deff(series: &WidthSeries, transient_cut: f64) -> Result<DeffFit> {
    if !(0.0..1.0).contains(&transient_cut) {
        return Err(Error::InvalidInput(format!("transient cut {transient_cut} outside [0, 1)")));
    }
    let n = series.times.len().min(series.widths.len());
    let start = (transient_cut * n as f64).ceil() as usize;
    let pts: Vec<(f64, f64)> = (start..n).map(|j| (series.times[j], series.widths[j].powi(2))).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!("{} post-transient samples, need 10", pts.len())));
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt = pts.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    if stt == 0.0 {
        return Err(Error::InsufficientData("all samples at the same time".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>() / stt;
    let intercept = ym - slope * tm;
    let rss = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>();
    let std_err = (rss / (m - 2.0) / stt).sqrt() / 4.0;
    Ok(DeffFit { d_eff: slope / 4.0, std_err, slope, intercept, samples: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    None,
    /// `amplitude exp(-(x - x_mid)^2 / width_sq)` added to `u`.
    Gaussian { amplitude: f64, width_sq: f64 },
    /// Independent uniform values in `[-amplitude, amplitude]` added to `u`.
    Uniform { amplitude: f64, seed: u64 },
}

impl Perturbation {
    pub const DEFAULT_BUMP: Perturbation = Perturbation::Gaussian { amplitude: 1e-2, width_sq: 100.0 };

    pub fn field(&self, grid: &SimGrid) -> Vec<f64> {
        match *self {
            Perturbation::None => vec![0.0; grid.n],
            Perturbation::Gaussian { amplitude, width_sq } => {
                let mid = 0.5 * grid.l_domain;
                grid.x().iter().map(|&x| amplitude * (-(x - mid).powi(2) / width_sq).exp()).collect()
            }
            Perturbation::Uniform { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..grid.n).map(|_| rng.random_range(-amplitude..=amplitude)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub perturbation: Perturbation,
    pub t_end: f64,
    pub sample_dt: f64,
    pub dt: f64,
    pub dx: f64,
    pub frame: Frame,
    pub threshold: f64,
    /// Keep the full perturbation field every this many samples.
    pub snapshot_every: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            repeats: 8,
            perturbation: Perturbation::DEFAULT_BUMP,
            t_end: 4000.0,
            sample_dt: 10.0,
            dt: DEFAULT_DT,
            dx: DEFAULT_DX,
            frame: Frame::Comoving,
            threshold: DEFAULT_THRESHOLD,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub perturbation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRun {
    pub series: WidthSeries,
    /// Fitted shift `xi0*` at each sample time.
    pub shifts: Vec<f64>,
    /// Max-norm of the perturbation at each sample time.
    pub amplitudes: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub grid: SimGrid,
    pub config: ExperimentConfig,
    pub final_state: SimState,
}

/// Tiles `wt`, perturbs it and tracks the perturbation relative to the closest
/// translate of the unperturbed train.
pub fn run_perturbation_experiment(wt: &WaveTrain, cfg: &ExperimentConfig) -> Result<PerturbationRun> {
    if !(cfg.t_end > 0.0 && cfg.sample_dt >= cfg.dt) {
        return Err(Error::InvalidInput(format!(
            "t_end = {}, sample_dt = {}, dt = {}",
            cfg.t_end, cfg.sample_dt, cfg.dt
        )));
    }
    let grid = TiledTrain::grid_for(wt, cfg.repeats, cfg.dx)?;
    let train = TiledTrain::new(wt, &grid)?;
    let mut state = train.state(cfg.frame);
    for (u, p) in state.u.iter_mut().zip(cfg.perturbation.field(&grid)) {
        *u += p;
    }
    let mut integ = Etdrk4::new(grid.clone(), wt.model, cfg.dt, state.frame_speed)?;
    let per_sample = (cfg.sample_dt / cfg.dt).round() as usize;
    let samples = (cfg.t_end / (per_sample as f64 * cfg.dt)).round() as usize;
    let (mut times, mut widths, mut shifts, mut amplitudes, mut snapshots) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..=samples {
        if k > 0 {
            integ.advance(&mut state, per_sample)?;
        }
        let fit = phase_fit(&state.u, &train);
        times.push(state.t);
        widths.push(support_width(&fit.perturbation, grid.dx, cfg.threshold));
        shifts.push(fit.xi0);
        amplitudes.push(fit.perturbation.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        if cfg.snapshot_every.is_some_and(|e| e > 0 && k % e == 0) {
            snapshots.push(Snapshot { t: state.t, u: state.u.clone(), perturbation: fit.perturbation });
        }
    }
    Ok(PerturbationRun {
        series: WidthSeries::new(times, widths, cfg.threshold),
        shifts,
        amplitudes,
        snapshots,
        grid,
        config: *cfg,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_state(n: usize, u: f64, w: f64) -> SimState {
        SimState { u: vec![u; n], w: vec![w; n], t: 0.0, frame_speed: 0.0 }
    }

    fn rk4_kinetics(model: &ReactionModel, mut y: (f64, f64), t_end: f64, h: f64) -> (f64, f64) {
        let eps = model.epsilon();
        let f = |(u, w): (f64, f64)| (model.f(u, w), eps * model.g(u, w));
        let steps = (t_end / h).round() as usize;
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f((y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1));
            let k3 = f((y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1));
            let k4 = f((y.0 + h * k3.0, y.1 + h * k3.1));
            y.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        y
    }

    #[test]
    fn constant_data_follow_kinetics() {
        let model = ReactionModel::classic(0.2, 1.0, 1e-2);
        let grid = SimGrid::new(10.0, 16).unwrap();
        let mut integ = Etdrk4::new(grid, model, 0.05, 0.0).unwrap();
        let mut s = constant_state(16, 0.3, 0.05);
        integ.advance(&mut s, 2000).unwrap();
        let (u, w) = rk4_kinetics(&model, (0.3, 0.05), 100.0, 1e-3);
        assert!((s.u[3] - u).abs() < 1e-6 && (s.w[7] - w).abs() < 1e-6, "{} {u} {} {w}", s.u[3], s.w[7]);
    }

    #[test]
    fn fourth_order_on_kinetics() {
        let model = ReactionModel::classic(0.2, 1.0, 1e-2);
        let exact = rk4_kinetics(&model, (0.3, 0.05), 20.0, 1e-4);
        let err = |dt: f64| {
            let mut integ = Etdrk4::new(SimGrid::new(10.0, 8).unwrap(), model, dt, 0.0).unwrap();
            let mut s = constant_state(8, 0.3, 0.05);
            integ.advance(&mut s, (20.0 / dt).round() as usize).unwrap();
            (s.u[0] - exact.0).abs() + (s.w[0] - exact.1).abs()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        for r in [e1 / e2, e2 / e3] {
            assert!(r > 12.0 && r < 20.0, "ratios {} {}", e1 / e2, e2 / e3);
        }
    }

    #[test]
    fn linear_modes_are_exact() {
        let grid = SimGrid::new(TWO_PI * 4.0, 64).unwrap();
        let model = ReactionModel::classic(0.2, 1.0, 1e-2);
        let integ = Etdrk4::new(grid.clone(), model, 0.1, 0.7).unwrap();
        for j in [1usize, 5, 20] {
            let k = grid.wavenumbers[j];
            let z = Complex64::new(-k * k, k * 0.7) * 0.1;
            assert!((integ.phi_u.e[j] - z.exp()).norm() < 1e-15);
            // the weights of a time-constant forcing sum to dt (e^z - 1) / z
            let phi = integ.phi_u.f1[j] + 4.0 * integ.phi_u.f2[j] + integ.phi_u.f3[j];
            assert!((phi - 0.1 * (z.exp() - 1.0) / z).norm() < 1e-12, "{phi}");
        }
    }

    #[test]
    fn zero_data_shift_w_at_leading_order() {
        let model = ReactionModel::classic(0.2, 1.0, 1e-2);
        let grid = SimGrid::new(10.0, 8).unwrap();
        let next = etdrk4_step(&constant_state(8, 0.0, 0.0), &grid, 0.1, &model).unwrap();
        let expect = rk4_kinetics(&model, (0.0, 0.0), 0.1, 0.1);
        assert!((next.w[0] - expect.1).abs() < 1e-14);
        assert!((next.w[0] - 0.1 * 1e-2 * -0.2).abs() < 1e-5);
    }

    #[test]
    fn blow_up_is_reported() {
        let model = ReactionModel::classic(0.2, 1.0, 1e-2);
        let mut integ = Etdrk4::new(SimGrid::new(10.0, 8).unwrap(), model, 0.5, 0.0).unwrap();
        integ.blowup_bound = 5.0;
        let mut s = constant_state(8, -3.0, 0.0);
        let err = integ.advance(&mut s, 100).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err}");
    }

    #[test]
    fn support_width_wraps() {
        let mut v = vec![0.0; 100];
        v[98] = 1.0;
        v[1] = 1.0;
        assert!((support_width(&v, 0.5, 0.1) - 2.0).abs() < 1e-12);
        assert_eq!(support_width(&[0.0; 10], 1.0, 0.1), 0.0);
    }

    #[test]
    fn deff_from_synthetic_widths() {
        let d = 0.05;
        let times: Vec<f64> = (1..=50).map(|k| k as f64 * 10.0).collect();
        let widths = times.iter().map(|t| (4.0 * d * t).sqrt()).collect();
        let s = WidthSeries::new(times, widths, 1e-5);
        assert!((s.d_eff_estimate.unwrap() - d).abs() < 1e-3 * d);
        let short = WidthSeries::new(vec![1.0; 5], vec![1.0; 5], 1e-5);
        assert!(matches!(extract_deff(&short, 0.2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn seeded_uniform_perturbation_is_reproducible() {
        let grid = SimGrid::new(10.0, 64).unwrap();
        let p = Perturbation::Uniform { amplitude: 1e-3, seed: 7 };
        let (a, b) = (p.field(&grid), p.field(&grid));
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.abs() <= 1e-3));
    }
}

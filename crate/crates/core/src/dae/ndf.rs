//! Variable-order numerical differentiation formulas (orders 1–5) with
//! quasi-constant step size, in backward-difference form.
//!
//! The algebraic part of the semi-explicit DAE is eliminated inside
//! [`OdeSystem::rhs`], so the integrator only sees differential unknowns.

use nalgebra::DMatrix;

use super::linear::{DenseIterationMatrix, Gmres};
use crate::model::ModelError;

const G: [f64; 5] = [1.0, 3.0 / 2.0, 11.0 / 6.0, 25.0 / 12.0, 137.0 / 60.0];
const KAPPA: [f64; 5] = [-0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];
const MAX_NEWTON: usize = 4;

fn inv_ga(k: usize) -> f64 {
    1.0 / (G[k - 1] * (1.0 - KAPPA[k - 1]))
}

fn err_const(k: usize) -> f64 {
    KAPPA[k - 1] * G[k - 1] + 1.0 / (k as f64 + 1.0)
}

/// A first-order system `y' = F(t, y)`.
pub trait OdeSystem {
    fn len(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError>;

    /// Overwrites `v` with an approximation of `(I − γ ∂F/∂y)⁻¹ v`.
    fn precondition(&self, _t: f64, _y: &[f64], _gamma: f64, _v: &mut [f64]) {}

    /// Scalar watched by the halting event, if any.
    fn monitor(&self, _y: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Finite-difference Jacobian with LU, reused across steps.
    Dense,
    /// Jacobian-free Newton–Krylov.
    Krylov(Gmres),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdfOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_order: usize,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub linear: LinearSolver,
    /// Halt when the monitored value drops to this level.
    pub event_threshold: Option<f64>,
}

impl Default for NdfOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_order: 5,
            initial_step: None,
            max_step: None,
            max_steps: 200_000,
            linear: LinearSolver::Dense,
            event_threshold: None,
        }
    }
}

/// Interpolation data for one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_old: f64,
    pub t_new: f64,
    pub y_new: Vec<f64>,
    /// Backward differences at `t_new`, one per order.
    pub dif: Vec<Vec<f64>>,
}

impl Segment {
    pub fn order(&self) -> usize {
        self.dif.len()
    }

    /// Dense output at `t`, valid on `[t_old, t_new]`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.y_new);
        let h = self.t_new - self.t_old;
        let s = (t - self.t_new) / h;
        let mut coef = 1.0;
        for (j, d) in self.dif.iter().enumerate() {
            coef *= (s + j as f64) / (j as f64 + 1.0);
            out.iter_mut().zip(d).for_each(|(o, d)| *o += coef * d);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    EndTime,
    Event,
    Failure(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub failed_steps: usize,
    pub rhs_evals: usize,
    pub jacobians: usize,
    pub factorizations: usize,
    pub newton_iters: usize,
    pub linear_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdfOutput {
    pub t: f64,
    pub y: Vec<f64>,
    pub halt: Halt,
    pub event_time: Option<f64>,
    pub stats: SolverStats,
}

/// Receives samples and accepted steps as the integration proceeds.
pub trait Observer {
    fn sample(&mut self, _index: usize, _t: f64, _y: &[f64]) {}
    fn step(&mut self, _segment: &Segment) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub enum NdfError {
    InvalidOptions(String),
    InitialState(ModelError),
}

impl std::fmt::Display for NdfError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InvalidOptions(m) => write!(f, "invalid integrator options: {m}"),
            Self::InitialState(e) => write!(f, "initial state rejected: {e}"),
        }
    }
}

impl std::error::Error for NdfError {}

fn norm_inf_w(v: &[f64], invwt: &[f64]) -> f64 {
    v.iter().zip(invwt).map(|(a, w)| (a * w).abs()).fold(0.0, f64::max)
}

/// Matrix `R(ρ)·U` that rescales the first `k` backward differences
/// when the step changes by the factor `ρ`.
fn rescale_matrix(k: usize, rho: f64) -> Vec<Vec<f64>> {
    let mut r = vec![vec![0.0; k]; k];
    let mut u = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut pr = 1.0;
        let mut pu = 1.0;
        for i in 0..k {
            let m = (i + 1) as f64;
            pr *= (m - 1.0 - (j + 1) as f64 * rho) / m;
            pu *= (m - 1.0 - (j + 1) as f64) / m;
            r[i][j] = pr;
            u[i][j] = pu;
        }
    }
    let mut ru = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            ru[i][j] = (0..k).map(|l| r[i][l] * u[l][j]).sum();
        }
    }
    ru
}

fn rescale(dif: &mut [Vec<f64>], k: usize, rho: f64) {
    let ru = rescale_matrix(k, rho);
    let n = dif[0].len();
    let mut tmp = vec![0.0; k];
    for p in 0..n {
        for (j, t) in tmp.iter_mut().enumerate() {
            *t = (0..k).map(|i| dif[i][p] * ru[i][j]).sum();
        }
        for j in 0..k {
            dif[j][p] = tmp[j];
        }
    }
}

struct Newton<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    opts: &'a NdfOptions,
    stats: SolverStats,
    jac: Option<DMatrix<f64>>,
    j_current: bool,
    iter_matrix: Option<DenseIterationMatrix>,
}

impl<S: OdeSystem + ?Sized> Newton<'_, S> {
    fn rhs(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y, out)
    }

    fn jacobian(&mut self, t: f64, y: &[f64]) -> Result<(), ModelError> {
        let n = y.len();
        let mut f0 = vec![0.0; n];
        self.rhs(t, y, &mut f0)?;
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let thresh = self.opts.atol / self.opts.rtol;
        for j in 0..n {
            let del = f64::EPSILON.sqrt() * y[j].abs().max(thresh);
            yp[j] = y[j] + del;
            let del = yp[j] - y[j];
            self.rhs(t, &yp, &mut fp)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f0[i]) / del;
            }
            yp[j] = y[j];
        }
        self.stats.jacobians += 1;
        self.jac = Some(jac);
        self.j_current = true;
        self.iter_matrix = None;
        Ok(())
    }

    fn factor(&mut self, gamma: f64) -> bool {
        let Some(jac) = &self.jac else { return false };
        self.stats.factorizations += 1;
        self.iter_matrix = DenseIterationMatrix::new(jac, gamma);
        self.iter_matrix.is_some()
    }

    /// Solves `(I − γJ) δ = r`; `None` signals a linear-solver failure.
    fn solve(&mut self, t: f64, y: &[f64], fy: &[f64], gamma: f64, r: &[f64], invwt: &[f64]) -> Option<Vec<f64>> {
        match self.opts.linear {
            LinearSolver::Dense => self.iter_matrix.as_ref()?.solve(r),
            LinearSolver::Krylov(gmres) => {
                let n = y.len();
                let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let w: Vec<f64> = invwt.iter().map(|v| v / self.opts.rtol).collect();
                let mut x = vec![0.0; n];
                let mut yp = vec![0.0; n];
                let mut fp = vec![0.0; n];
                let sys = self.sys;
                let mut evals = 0usize;
                let out = gmres.solve(
                    |v, av| {
                        let vnorm = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                        if vnorm == 0.0 {
                            av.iter_mut().for_each(|a| *a = 0.0);
                            return true;
                        }
                        let sigma = f64::EPSILON.sqrt() * (1.0 + ynorm) / vnorm;
                        for i in 0..n {
                            yp[i] = y[i] + sigma * v[i];
                        }
                        evals += 1;
                        if sys.rhs(t, &yp, &mut fp).is_err() {
                            return false;
                        }
                        for i in 0..n {
                            av[i] = v[i] - gamma * (fp[i] - fy[i]) / sigma;
                        }
                        true
                    },
                    |v| sys.precondition(t, y, gamma, v),
                    r,
                    &w,
                    &mut x,
                );
                self.stats.rhs_evals += evals;
                self.stats.linear_iters += out.iterations;
                out.converged.then_some(x)
            }
        }
    }
}

/// Integrates `y' = F(t, y)` from `t0` to `t_end`, reporting solutions at
/// `sample_times` (ascending, inside `[t0, t_end]`) and every accepted
/// step to `observer`.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_times: &[f64],
    opts: &NdfOptions,
    observer: &mut dyn Observer,
) -> Result<NdfOutput, NdfError> {
    let n = sys.len();
    if y0.len() != n {
        return Err(NdfError::InvalidOptions(format!("initial state has length {} but the system has {n}", y0.len())));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(NdfError::InvalidOptions("tolerances must be positive".into()));
    }
    if !(1..=5).contains(&opts.max_order) {
        return Err(NdfError::InvalidOptions(format!("max_order must be in 1..=5, got {}", opts.max_order)));
    }
    if !(t_end > t0) {
        return Err(NdfError::InvalidOptions(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(NdfError::InvalidOptions("sample times must be ascending".into()));
    }

    let rtol = opts.rtol;
    let threshold = opts.atol / rtol;
    let maxk = opts.max_order;
    let hmax = opts.max_step.unwrap_or(0.1 * (t_end - t0)).min(t_end - t0);
    let mut newton = Newton {
        sys,
        opts,
        stats: SolverStats::default(),
        jac: None,
        j_current: false,
        iter_matrix: None,
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut yp = vec![0.0; n];
    newton.rhs(t, &y, &mut yp).map_err(NdfError::InitialState)?;

    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        if sample_times[next_sample] == t0 {
            observer.sample(next_sample, t0, &y);
        }
        next_sample += 1;
    }
    let event_hit = |v: Option<f64>| matches!((v, opts.event_threshold), (Some(v), Some(th)) if v <= th);
    if event_hit(sys.monitor(&y)) {
        return Ok(NdfOutput { t, y, halt: Halt::Event, event_time: Some(t), stats: newton.stats });
    }

    let hmin = |t: f64| 16.0 * f64::EPSILON * t.abs().max(1e-300);
    let mut absh = match opts.initial_step {
        Some(h0) => h0.min(hmax),
        None => {
            let wt_norm = yp.iter().zip(&y).map(|(d, y)| (d / y.abs().max(threshold)).abs()).fold(0.0, f64::max);
            let rh = 1.25 * wt_norm / rtol.sqrt();
            let mut a = hmax;
            if a * rh > 1.0 {
                a = 1.0 / rh;
            }
            a.max(hmin(t))
        }
    };

    if let LinearSolver::Dense = opts.linear {
        newton.jacobian(t, &y).map_err(NdfError::InitialState)?;
    }

    let mut k = 1usize;
    let mut dif: Vec<Vec<f64>> = vec![vec![0.0; n]; maxk + 2];
    for i in 0..n {
        dif[0][i] = absh * yp[i];
    }
    let mut h = absh;
    let mut hinvgak = h * inv_ga(k);
    let mut nconhk = 0usize;
    let mut need_factor = true;
    let mut rate = 0.0;
    let mut havrate = false;
    let mut abshlast = absh;
    let mut klast = k;
    let mut done = false;

    let mut ynew = vec![0.0; n];
    let mut ypred = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let mut difkp1 = vec![0.0; n];
    let mut fnew = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut invwt = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    loop {
        if newton.stats.steps >= opts.max_steps {
            let msg = format!("step limit {} reached at t = {t}", opts.max_steps);
            return Ok(NdfOutput { t, y, halt: Halt::Failure(msg), event_time: None, stats: newton.stats });
        }
        let hmin_t = hmin(t);
        absh = absh.min(hmax).max(hmin_t);
        if 1.1 * absh >= (t_end - t).abs() {
            absh = t_end - t;
            done = true;
        }
        if absh != abshlast || k != klast {
            let ratio = absh / abshlast;
            if ratio != 1.0 {
                rescale(&mut dif, k, ratio);
            }
            h = absh;
            hinvgak = h * inv_ga(k);
            nconhk = 0;
            need_factor = true;
            havrate = false;
        }
        klast = k;

        let mut nofailed = true;
        let mut err;
        let tnew;
        loop {
            let mut gotynew = false;
            let mut tnew_try = 0.0;
            while !gotynew {
                h = absh;
                tnew_try = t + h;
                if done {
                    tnew_try = t_end;
                }
                if need_factor {
                    if let LinearSolver::Dense = opts.linear {
                        if !newton.factor(hinvgak) {
                            let msg = format!("singular iteration matrix at t = {t}");
                            return Ok(NdfOutput { t, y, halt: Halt::Failure(msg), event_time: None, stats: newton.stats });
                        }
                    }
                    need_factor = false;
                }

                for i in 0..n {
                    let mut s = 0.0;
                    let mut p = 0.0;
                    for (j, d) in dif.iter().take(k).enumerate() {
                        s += d[i];
                        p += d[i] * G[j];
                    }
                    ypred[i] = y[i] + s;
                    psi[i] = p * inv_ga(k);
                }
                for i in 0..n {
                    invwt[i] = 1.0 / y[i].abs().max(threshold);
                }
                let minnrm = 100.0 * f64::EPSILON * norm_inf_w(&ypred, &invwt);
                difkp1.iter_mut().for_each(|v| *v = 0.0);
                ynew.copy_from_slice(&ypred);

                let mut tooslow = false;
                let mut oldnrm = 0.0;
                for iter in 1..=MAX_NEWTON {
                    newton.stats.newton_iters += 1;
                    if newton.rhs(tnew_try, &ynew, &mut fnew).is_err() {
                        tooslow = true;
                        break;
                    }
                    for i in 0..n {
                        rhs[i] = hinvgak * fnew[i] - (psi[i] + difkp1[i]);
                    }
                    let Some(del) = newton.solve(tnew_try, &ynew, &fnew, hinvgak, &rhs, &invwt) else {
                        tooslow = true;
                        break;
                    };
                    let newnrm = norm_inf_w(&del, &invwt);
                    for i in 0..n {
                        difkp1[i] += del[i];
                        ynew[i] = ypred[i] + difkp1[i];
                    }
                    if newnrm <= minnrm {
                        gotynew = true;
                        break;
                    } else if iter == 1 {
                        if havrate {
                            let errit = newnrm * rate / (1.0 - rate);
                            if errit <= 0.05 * rtol {
                                gotynew = true;
                                break;
                            }
                        } else {
                            rate = 0.0;
                        }
                    } else if newnrm > 0.9 * oldnrm {
                        tooslow = true;
                        break;
                    } else {
                        rate = (0.9 * rate).max(newnrm / oldnrm);
                        havrate = true;
                        let errit = newnrm * rate / (1.0 - rate);
                        if errit <= 0.5 * rtol {
                            gotynew = true;
                            break;
                        } else if iter == MAX_NEWTON || 0.5 * rtol < errit * rate.powi((MAX_NEWTON - iter) as i32) {
                            tooslow = true;
                            break;
                        }
                    }
                    oldnrm = newnrm;
                }
                if !gotynew && !tooslow {
                    tooslow = true;
                }
                if tooslow {
                    newton.stats.failed_steps += 1;
                    let refresh = matches!(opts.linear, LinearSolver::Dense) && !newton.j_current;
                    if refresh && newton.jacobian(t, &y).is_ok() {
                        need_factor = true;
                        havrate = false;
                        continue;
                    }
                    if absh <= hmin_t {
                        let msg = format!("step size {absh:e} underflow at t = {t} (Newton failure)");
                        return Ok(NdfOutput { t, y, halt: Halt::Failure(msg), event_time: None, stats: newton.stats });
                    }
                    let old = absh;
                    absh = (0.3 * absh).max(hmin_t);
                    h = absh;
                    done = false;
                    rescale(&mut dif, k, absh / old);
                    hinvgak = h * inv_ga(k);
                    nconhk = 0;
                    need_factor = true;
                    havrate = false;
                }
            }

            for i in 0..n {
                invwt[i] = 1.0 / y[i].abs().max(ynew[i].abs()).max(threshold);
            }
            err = norm_inf_w(&difkp1, &invwt) * err_const(k);
            if err > rtol {
                newton.stats.failed_steps += 1;
                if absh <= hmin_t {
                    let msg = format!("step size {absh:e} underflow at t = {t} (error test)");
                    return Ok(NdfOutput { t, y, halt: Halt::Failure(msg), event_time: None, stats: newton.stats });
                }
                let old = absh;
                if nofailed {
                    nofailed = false;
                    absh = (absh * (0.1f64).max(0.833 * (rtol / err).powf(1.0 / (k as f64 + 1.0)))).max(hmin_t);
                    if k > 1 {
                        for i in 0..n {
                            scratch[i] = difkp1[i] + dif[k - 1][i];
                        }
                        let errkm1 = norm_inf_w(&scratch, &invwt) * err_const(k - 1);
                        let hkm1 = old * (0.1f64).max(0.769 * (rtol / errkm1).powf(1.0 / k as f64));
                        if hkm1 > absh {
                            absh = hkm1.min(old);
                            k -= 1;
                        }
                    }
                } else {
                    absh = (0.5 * absh).max(hmin_t);
                }
                h = absh;
                if absh < old {
                    done = false;
                }
                rescale(&mut dif, klast.max(k), absh / old);
                hinvgak = h * inv_ga(k);
                nconhk = 0;
                need_factor = true;
                havrate = false;
                klast = k;
            } else {
                tnew = tnew_try;
                break;
            }
        }

        newton.stats.steps += 1;
        // Update the differences.
        for i in 0..n {
            dif[k + 1][i] = difkp1[i] - dif[k][i];
            dif[k][i] = difkp1[i];
        }
        for j in (0..k).rev() {
            for i in 0..n {
                dif[j][i] += dif[j + 1][i];
            }
        }

        let segment = Segment {
            t_old: t,
            t_new: tnew,
            y_new: ynew.clone(),
            dif: dif[..k].to_vec(),
        };

        // Event.
        let mut event_time = None;
        if let (Some(th), Some(mnew)) = (opts.event_threshold, sys.monitor(&ynew)) {
            if mnew <= th {
                let (mut lo, mut hi) = (t, tnew);
                let mut buf = vec![0.0; n];
                for _ in 0..200 {
                    if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    segment.eval(mid, &mut buf);
                    match sys.monitor(&buf) {
                        Some(m) if m > th => lo = mid,
                        _ => hi = mid,
                    }
                }
                event_time = Some(hi);
            }
        }

        let horizon = event_time.unwrap_or(tnew);
        let mut buf = vec![0.0; n];
        while next_sample < sample_times.len() && sample_times[next_sample] <= horizon {
            let ts = sample_times[next_sample];
            if ts == tnew {
                observer.sample(next_sample, ts, &ynew);
            } else {
                segment.eval(ts, &mut buf);
                observer.sample(next_sample, ts, &buf);
            }
            next_sample += 1;
        }
        observer.step(&segment);

        if let Some(te) = event_time {
            segment.eval(te, &mut buf);
            return Ok(NdfOutput { t: te, y: buf, halt: Halt::Event, event_time: Some(te), stats: newton.stats });
        }

        // Order and step selection; the step is only ever enlarged here.
        klast = k;
        abshlast = absh;
        nconhk = (nconhk + 1).min(maxk + 2);
        if nconhk >= k + 2 {
            let step_for = |e: f64, safety: f64, p: f64| {
                let temp = safety * (e / rtol).powf(1.0 / p);
                if temp > 0.1 {
                    absh / temp
                } else {
                    10.0 * absh
                }
            };
            let mut hopt = step_for(err, 1.2, k as f64 + 1.0);
            let mut kopt = k;
            if k > 1 {
                let errkm1 = norm_inf_w(&dif[k - 1], &invwt) * err_const(k - 1);
                let hkm1 = step_for(errkm1, 1.3, k as f64);
                if hkm1 > hopt {
                    hopt = hkm1.min(absh);
                    kopt = k - 1;
                }
            }
            if k < maxk {
                let errkp1 = norm_inf_w(&dif[k + 1], &invwt) * err_const(k + 1);
                let hkp1 = step_for(errkp1, 1.4, k as f64 + 2.0);
                if hkp1 > hopt {
                    hopt = hkp1;
                    kopt = k + 1;
                }
            }
            if hopt > absh {
                absh = hopt;
                k = kopt;
            }
        }

        t = tnew;
        y.copy_from_slice(&ynew);
        yp.copy_from_slice(&fnew);
        if let LinearSolver::Dense = opts.linear {
            newton.j_current = false;
        }
        if done {
            return Ok(NdfOutput { t, y, halt: Halt::EndTime, event_time: None, stats: newton.stats });
        }
    }
}

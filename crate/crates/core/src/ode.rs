//! Dormand–Prince 5(4) with Hairer's fourth-order dense output.
//!
//! The right-hand side may fail (leaving the chart, blow-up); a failing stage
//! rejects the step and shrinks it. When the step falls below `h_min` the
//! integration ends with [`OdeExit::StepUnderflow`] carrying the last error.

use std::ops::ControlFlow;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error estimate weights (fifth minus fourth order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_min: 1e-12,
            max_steps: 200_000,
        }
    }
}

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    /// End of validity; below `t0 + h` when an observer stopped inside the step.
    pub t_end: f64,
    cont: Vec<f64>,
}

impl DenseStep {
    pub fn dim(&self) -> usize {
        self.cont.len() / 5
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for i in 0..n {
            out[i] = c[i]
                + s * (c[n + i] + s1 * (c[2 * n + i] + s * (c[3 * n + i] + s1 * c[4 * n + i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// State at the start of the step (exact, not interpolated).
    pub fn start(&self) -> &[f64] {
        &self.cont[..self.dim()]
    }
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub steps: Vec<DenseStep>,
    pub t0: f64,
    pub y0: Vec<f64>,
}

impl DenseSolution {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map(|s| s.t_end).unwrap_or(self.t0)
    }

    /// Interpolated state; `None` outside `[t0, t_end]`.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if t < self.t0 || t > self.t_end() {
            return None;
        }
        if self.steps.is_empty() || t == self.t0 {
            return Some(self.y0.clone());
        }
        let idx = self.steps.partition_point(|s| s.t0 + s.h < t);
        let idx = idx.min(self.steps.len() - 1);
        Some(self.steps[idx].eval(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeExit<E> {
    Reached,
    /// The observer stopped the integration at the recorded time.
    Stopped,
    StepUnderflow { last_error: Option<E> },
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct OdeResult<E> {
    pub solution: DenseSolution,
    pub exit: OdeExit<E>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Observer verdict after each accepted step: keep going, or stop at a time
/// inside the step just taken.
pub type Observe = ControlFlow<f64>;

fn norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..err.len() {
        let sk = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sk;
        s += r * r;
    }
    (s / err.len() as f64).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
pub fn dopri5<E, F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> OdeResult<E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    O: FnMut(&DenseStep) -> Observe,
{
    let n = y0.len();
    let mut sol = DenseSolution {
        steps: Vec::new(),
        t0,
        y0: y0.to_vec(),
    };
    let result = |sol, exit, accepted, rejected| OdeResult {
        solution: sol,
        exit,
        accepted,
        rejected,
    };
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = y0.to_vec();
    let mut t = t0;
    if let Err(e) = f(t, &y, &mut k[0]) {
        return result(
            sol,
            OdeExit::StepUnderflow {
                last_error: Some(e),
            },
            0,
            0,
        );
    }
    let span = t_end - t0;
    if span <= 0.0 {
        return result(sol, OdeExit::Reached, 0, 0);
    }

    // Initial step guess.
    let mut h = {
        let sk = |i: usize| opts.atol + opts.rtol * y[i].abs();
        let d0 = (y.iter().enumerate().map(|(i, v)| (v / sk(i)).powi(2)).sum::<f64>() / n as f64)
            .sqrt();
        let d1 = (k[0]
            .iter()
            .enumerate()
            .map(|(i, v)| (v / sk(i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(opts.h_max).min(span);
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * k[0][i]).collect();
        let mut f1 = vec![0.0; n];
        let h1 = match f(t + h0, &y1, &mut f1) {
            Ok(()) => {
                let d2 = ((0..n)
                    .map(|i| ((f1[i] - k[0][i]) / sk(i)).powi(2))
                    .sum::<f64>()
                    / n as f64)
                    .sqrt()
                    / h0;
                let m = d1.max(d2);
                if m <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / m).powf(0.2)
                }
            }
            Err(_) => h0,
        };
        (100.0 * h0).min(h1).min(opts.h_max).min(span)
    };

    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let safe = 0.9;
    let mut facold: f64 = 1e-4;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_error: Option<E> = None;
    let mut last_rejected = false;
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    loop {
        if accepted + rejected >= opts.max_steps {
            return result(sol, OdeExit::MaxSteps, accepted, rejected);
        }
        let remaining = t_end - t;
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            return result(sol, OdeExit::Reached, accepted, rejected);
        }
        if h >= remaining || 1.01 * h >= remaining {
            h = remaining;
        }
        if h < opts.h_min {
            return result(sol, OdeExit::StepUnderflow { last_error }, accepted, rejected);
        }

        let stages: Result<(), E> = (|| {
            for i in 0..n {
                ys[i] = y[i] + h * A21 * k[0][i];
            }
            f(t + C2 * h, &ys, &mut k[1])?;
            for i in 0..n {
                ys[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
            }
            f(t + C3 * h, &ys, &mut k[2])?;
            for i in 0..n {
                ys[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            f(t + C4 * h, &ys, &mut k[3])?;
            for i in 0..n {
                ys[i] = y[i]
                    + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            f(t + C5 * h, &ys, &mut k[4])?;
            for i in 0..n {
                ys[i] = y[i]
                    + h * (A61 * k[0][i]
                        + A62 * k[1][i]
                        + A63 * k[2][i]
                        + A64 * k[3][i]
                        + A65 * k[4][i]);
            }
            f(t + h, &ys, &mut k[5])?;
            for i in 0..n {
                y1[i] = y[i]
                    + h * (A71 * k[0][i]
                        + A73 * k[2][i]
                        + A74 * k[3][i]
                        + A75 * k[4][i]
                        + A76 * k[5][i]);
            }
            f(t + h, &y1, &mut k[6])?;
            Ok(())
        })();
        if let Err(e) = stages {
            last_error = Some(e);
            rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        }

        for i in 0..n {
            err[i] = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
        }
        let e = norm(&err, &y, &y1, opts);
        if !e.is_finite() {
            rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        }
        let fac11 = e.powf(expo1);
        if e <= 1.0 {
            let mut fac = fac11 / facold.powf(beta);
            fac = (fac / safe).clamp(0.1, 5.0);
            let mut hnew = h / fac;
            facold = e.max(1e-4);

            let mut cont = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                cont[i] = y[i];
                cont[n + i] = ydiff;
                cont[2 * n + i] = bspl;
                cont[3 * n + i] = ydiff - h * k[6][i] - bspl;
                cont[4 * n + i] = h
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
            }
            let step = DenseStep {
                t0: t,
                h,
                t_end: t + h,
                cont,
            };
            accepted += 1;
            last_error = None;
            let verdict = observer(&step);
            sol.steps.push(step);
            if let ControlFlow::Break(t_stop) = verdict {
                let last = sol.steps.last_mut().expect("just pushed");
                last.t_end = t_stop.clamp(last.t0, last.t0 + last.h);
                return result(sol, OdeExit::Stopped, accepted, rejected);
            }
            t += h;
            y.copy_from_slice(&y1);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew.min(opts.h_max);
        } else {
            rejected += 1;
            last_rejected = true;
            h /= (fac11 / safe).min(5.0);
        }
    }
}

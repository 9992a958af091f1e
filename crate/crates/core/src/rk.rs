//! Low-storage explicit Runge–Kutta time stepping.

use crate::error::{Error, Result};

/// Carpenter–Kennedy five-stage fourth-order 2N-storage coefficients.
pub const LSRK45_A: [f64; 5] = [
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
];
pub const LSRK45_B: [f64; 5] = [
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
];
pub const LSRK45_C: [f64; 5] = [
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
];

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub final_time: f64,
    /// Overrides the stability-limited step when set.
    pub fixed_dt: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub time: f64,
}

/// Advances `u` to `final_time`.
///
/// * `rhs(u, t, out)` writes `du/dt`;
/// * `stable_dt(u)` returns the CFL-limited step for the current state;
/// * `observe(step, t, dt, u)` runs once for the initial state (with
///   `dt = 0`) and after every completed step.
///
/// The last step is shortened to land on `final_time` exactly.
pub fn integrate<R, D, O>(
    stage: &'static str,
    u: &mut [f64],
    ctl: &StepControl,
    mut rhs: R,
    mut stable_dt: D,
    mut observe: O,
) -> Result<RunSummary>
where
    R: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
    D: FnMut(&[f64]) -> Result<f64>,
    O: FnMut(usize, f64, f64, &[f64]) -> Result<()>,
{
    let abort = |step: usize, time: f64, e: Error| Error::Aborted {
        stage,
        step,
        time,
        source: Box::new(e),
    };
    let n = u.len();
    let mut du = vec![0.0; n];
    let mut k = vec![0.0; n];
    let mut t = 0.0;
    let mut step = 0;
    observe(0, 0.0, 0.0, u).map_err(|e| abort(0, 0.0, e))?;
    let t_end = ctl.final_time;
    while t < t_end * (1.0 - 4.0 * f64::EPSILON) {
        if ctl.max_steps.is_some_and(|m| step >= m) {
            break;
        }
        let mut dt = match ctl.fixed_dt {
            Some(dt) => dt,
            None => stable_dt(u).map_err(|e| abort(step, t, e))?,
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(abort(
                step,
                t,
                Error::Inadmissible {
                    point: 0,
                    quantity: "time step",
                    value: dt,
                },
            ));
        }
        if t + dt > t_end {
            dt = t_end - t;
        }
        du.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..5 {
            rhs(u, t + LSRK45_C[s] * dt, &mut k).map_err(|e| abort(step, t, e))?;
            for ((d, ki), ui) in du.iter_mut().zip(&k).zip(u.iter_mut()) {
                *d = LSRK45_A[s] * *d + dt * ki;
                *ui += LSRK45_B[s] * *d;
            }
        }
        step += 1;
        t = if t + dt >= t_end { t_end } else { t + dt };
        observe(step, t, dt, u).map_err(|e| abort(step, t, e))?;
    }
    Ok(RunSummary { steps: step, time: t })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_error(dt: f64) -> f64 {
        let mut u = [1.0];
        let ctl = StepControl { final_time: 1.0, fixed_dt: Some(dt), max_steps: None };
        integrate(
            "test",
            &mut u,
            &ctl,
            |u, _, out| {
                out[0] = -u[0];
                Ok(())
            },
            |_| Ok(dt),
            |_, _, _, _| Ok(()),
        )
        .unwrap();
        (u[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn coefficients_are_consistent() {
        // b·(stage weights) must sum to one for first-order consistency;
        // in 2N form that is equivalent to integrating du/dt = 1 exactly.
        let mut u = [0.0];
        let ctl = StepControl { final_time: 0.3, fixed_dt: Some(0.3), max_steps: None };
        integrate("t", &mut u, &ctl, |_, _, o| { o[0] = 1.0; Ok(()) }, |_| Ok(1.0), |_, _, _, _| Ok(()))
            .unwrap();
        assert!((u[0] - 0.3).abs() < 1e-15);
        // du/dt = t recovers t²/2 exactly (stage times matter).
        let mut u = [0.0];
        integrate("t", &mut u, &ctl, |_, t, o| { o[0] = t; Ok(()) }, |_| Ok(1.0), |_, _, _, _| Ok(()))
            .unwrap();
        assert!((u[0] - 0.045).abs() < 1e-15);
    }

    #[test]
    fn fourth_order_on_linear_decay() {
        let e1 = decay_error(0.1);
        let e2 = decay_error(0.05);
        let slope = (e1 / e2).log2();
        assert!((slope - 4.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn zero_final_time_observes_only_initial_state() {
        let mut u = [2.0];
        let mut seen = Vec::new();
        let ctl = StepControl { final_time: 0.0, fixed_dt: None, max_steps: None };
        let s = integrate(
            "t",
            &mut u,
            &ctl,
            |_, _, o| { o[0] = 1.0; Ok(()) },
            |_| Ok(0.1),
            |step, t, _, _| { seen.push((step, t)); Ok(()) },
        )
        .unwrap();
        assert_eq!(s.steps, 0);
        assert_eq!(seen, vec![(0, 0.0)]);
        assert_eq!(u[0], 2.0);
    }

    #[test]
    fn last_step_is_clipped() {
        let mut u = [0.0];
        let mut times = Vec::new();
        let ctl = StepControl { final_time: 1.0, fixed_dt: None, max_steps: None };
        integrate(
            "t",
            &mut u,
            &ctl,
            |_, _, o| { o[0] = 1.0; Ok(()) },
            |_| Ok(0.3),
            |_, t, _, _| { times.push(t); Ok(()) },
        )
        .unwrap();
        assert_eq!(*times.last().unwrap(), 1.0);
        assert_eq!(times.len(), 5);
    }

    #[test]
    fn rhs_failure_reports_step() {
        let mut u = [0.0];
        let ctl = StepControl { final_time: 1.0, fixed_dt: Some(0.1), max_steps: None };
        let err = integrate(
            "fom",
            &mut u,
            &ctl,
            |u, _, o| {
                if u[0] > 0.25 {
                    return Err(Error::Inadmissible { point: 3, quantity: "density", value: -1.0 });
                }
                o[0] = 1.0;
                Ok(())
            },
            |_| Ok(0.1),
            |_, _, _, _| Ok(()),
        )
        .unwrap_err();
        match err {
            Error::Aborted { step, .. } => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }
}

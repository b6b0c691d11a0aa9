//! Fixed-step classical Runge-Kutta integration for autonomous systems.

use super::CoagError;

/// Values in `[-NEG_TOL, 0)` are treated as roundoff and clipped to zero.
pub const NEG_TOL: f64 = 1e-9;

/// Number of times the step is halved before giving up.
pub const MAX_HALVINGS: u32 = 6;

/// Result of [`integrate`]: states at the requested times plus the step used.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    /// Whether any value in `[-NEG_TOL, 0)` was clipped.
    pub clipped: bool,
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<F: Fn(&[f64], &mut [f64])>(&mut self, y: &mut [f64], h: f64, rhs: &F) {
        rhs(y, &mut self.k1);
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k1)) {
            *t = yi + 0.5 * h * k;
        }
        rhs(&self.tmp, &mut self.k2);
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k2)) {
            *t = yi + 0.5 * h * k;
        }
        rhs(&self.tmp, &mut self.k3);
        for (t, (yi, k)) in self.tmp.iter_mut().zip(y.iter().zip(&self.k3)) {
            *t = yi + h * k;
        }
        rhs(&self.tmp, &mut self.k4);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One RK4 step of size `h` from `y`.
pub fn rk4_step<F: Fn(&[f64], &mut [f64])>(y: &mut [f64], h: f64, rhs: &F) {
    Rk4::new(y.len()).step(y, h, rhs);
}

/// Output times `0, dt_out, 2 dt_out, ..., horizon` with at most 100 intervals
/// and never finer than `dt`.
pub fn output_grid(horizon: f64, dt: f64) -> Vec<f64> {
    if horizon <= 0.0 {
        return vec![0.0];
    }
    let n = ((horizon / dt).ceil() as usize).clamp(1, 100);
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

fn validate_times(times: &[f64], dt: f64) -> Result<(), CoagError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoagError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if times.is_empty() {
        return Err(CoagError::InvalidArgument("no output times".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(CoagError::InvalidArgument(
            "output times must be nonnegative and sorted".into(),
        ));
    }
    Ok(())
}

fn attempt<F, C>(y0: &[f64], times: &[f64], h_max: f64, rhs: &F, guard: &C) -> Option<Trajectory>
where
    F: Fn(&[f64], &mut [f64]),
    C: Fn(usize) -> bool,
{
    let mut rk = Rk4::new(y0.len());
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut states = Vec::with_capacity(times.len());
    let mut clipped = false;
    for &target in times {
        let gap = target - t;
        if gap > 0.0 {
            let n = (gap / h_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = gap / n as f64;
            for _ in 0..n {
                rk.step(&mut y, h, rhs);
                for (idx, v) in y.iter_mut().enumerate() {
                    if *v < 0.0 && guard(idx) {
                        if *v < -NEG_TOL {
                            return None;
                        }
                        *v = 0.0;
                        clipped = true;
                    }
                }
            }
        }
        t = target;
        states.push(y.clone());
    }
    Some(Trajectory {
        times: times.to_vec(),
        states,
        dt: h_max,
        clipped,
    })
}

/// Integrates `y' = rhs(y)` from `y0` at time 0, recording at `times`.
///
/// Between consecutive output times the interval is split into equal steps no
/// larger than `dt`. Components for which `guard(index)` is true must stay
/// nonnegative; if one drops below `-NEG_TOL` the whole run restarts with half
/// the step, up to [`MAX_HALVINGS`] times.
pub fn integrate<F, C>(
    y0: &[f64],
    times: &[f64],
    dt: f64,
    rhs: F,
    guard: C,
) -> Result<Trajectory, CoagError>
where
    F: Fn(&[f64], &mut [f64]),
    C: Fn(usize) -> bool,
{
    validate_times(times, dt)?;
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        if let Some(tr) = attempt(y0, times, h, &rhs, &guard) {
            if tr.clipped {
                log::warn!("clipped values in [-{NEG_TOL}, 0) to zero (dt = {h})");
            }
            return Ok(tr);
        }
        h *= 0.5;
    }
    Err(CoagError::StepTooLarge { dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let tr = integrate(&[1.0], &[0.0, 1.0], 1e-2, |y, dy| dy[0] = -y[0], |_| true).unwrap();
        assert_eq!(tr.states[0], vec![1.0]);
        assert!((tr.states[1][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn uneven_output_times_are_hit() {
        let tr = integrate(&[0.0], &[0.3, 0.35, 1.0], 0.1, |_, dy| dy[0] = 1.0, |_| false).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert!((y[0] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_values_trigger_halving_then_error() {
        // y' = -3 from y = 1 crosses zero regardless of the step.
        let r = integrate(&[1.0], &[1.0], 0.1, |_, dy| dy[0] = -3.0, |_| true);
        assert_eq!(r.unwrap_err(), CoagError::StepTooLarge { dt: 0.1 });
        // Unguarded components may go negative.
        assert!(integrate(&[1.0], &[1.0], 0.1, |_, dy| dy[0] = -3.0, |_| false).is_ok());
    }

    #[test]
    fn grid_shape() {
        assert_eq!(output_grid(0.0, 1e-3), vec![0.0]);
        let g = output_grid(2.0, 1e-3);
        assert_eq!(g.len(), 101);
        assert_eq!(*g.last().unwrap(), 2.0);
        assert_eq!(output_grid(1.0, 0.5), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn bad_arguments() {
        assert!(integrate(&[1.0], &[1.0], 0.0, |_, dy| dy[0] = 0.0, |_| true).is_err());
        assert!(integrate(&[1.0], &[1.0, 0.5], 0.1, |_, dy| dy[0] = 0.0, |_| true).is_err());
    }
}

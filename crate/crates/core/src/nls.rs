//! Least-squares sigmoid fitting, used to seed samplers.

use nalgebra::{Matrix3, Vector3};

use crate::model::{eval_trajectory, TrajectoryParams};

/// Sum of squared residuals of `traj` over the points.
pub fn sum_squares(times: &[f64], values: &[f64], traj: &TrajectoryParams) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(&t, &y)| (y - eval_trajectory(traj, t)).powi(2))
        .sum()
}

fn levenberg_marquardt(times: &[f64], values: &[f64], start: TrajectoryParams) -> TrajectoryParams {
    let mut theta = start.as_vector();
    let mut cur = sum_squares(times, values, &start);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&t, &y) in times.iter().zip(values) {
            let tr = TrajectoryParams::from_vector(&theta);
            let z = theta[1] * t + theta[2];
            let s = crate::dist::logistic(z);
            let ds = theta[0] * s * (1.0 - s);
            let g = Vector3::new(s, ds * t, ds);
            let r = y - eval_trajectory(&tr, t);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let cand = TrajectoryParams::from_vector(&(theta + step));
            let val = sum_squares(times, values, &cand);
            if val.is_finite() && val < cur {
                let rel = (cur - val) / cur.max(1e-300);
                theta += step;
                cur = val;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    TrajectoryParams::from_vector(&theta)
}

/// Fits the sigmoid to pooled `(time, value)` points from several starting
/// values and returns the best fit, or `None` with fewer than one point.
pub fn fit_sigmoid(times: &[f64], values: &[f64]) -> Option<TrajectoryParams> {
    if times.is_empty() {
        return None;
    }
    let ymax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymean = values.iter().sum::<f64>() / values.len() as f64;
    let tmid = times.iter().sum::<f64>() / times.len() as f64;
    let mut best: Option<(f64, TrajectoryParams)> = None;
    for amp in [ymax.abs().max(1e-3) * 1.05, 2.0 * ymean.abs().max(1e-3)] {
        for rate in [0.02, 0.1, 0.3] {
            let start = TrajectoryParams::new(amp, rate, -rate * tmid);
            let fit = levenberg_marquardt(times, values, start);
            let ss = sum_squares(times, values, &fit);
            if fit.is_finite() && ss.is_finite() && best.as_ref().is_none_or(|(b, _)| ss < *b) {
                best = Some((ss, fit));
            }
        }
    }
    best.map(|(_, t)| t)
}

//! Gradient flow via an embedded Dormand–Prince 5(4) pair with PI step-size
//! control. The integrator lands exactly on a geometric grid of checkpoint
//! times so that recorded risks refer to exact sample times.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::loss::{empirical_risk, risk_gradient_into, Loss};
use crate::optim::{Checkpoint, FlowConfig, RunConfig, Trajectory};

// Dormand–Prince 5(4) tableau. The last A row doubles as the 5th-order
// weights (first-same-as-last). Stage times are omitted: the right-hand side
// is autonomous.
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and 4th-order weights; scaled by h it
// estimates the local error.
const ERR_W: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
// PI controller exponents for a 5th-order propagated solution.
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const ABS_TOL: f64 = 1e-12;
/// Ratio of the first checkpoint time to the horizon.
const FIRST_CHECKPOINT_SCALE: f64 = 1e-3;

/// Integrate `dw/dt = -grad risk(w)` from the origin to `cfg.t_end`,
/// recording checkpoints on a geometric time grid. Per accepted step the
/// embedded error estimate is kept below `cfg.rel_tol` relative to the state.
pub fn run_flow(dataset: &Dataset, loss: Loss, cfg: &FlowConfig) -> Result<Trajectory> {
    if !(cfg.t_end > 0.0) || !cfg.t_end.is_finite() {
        return Err(Error::InvalidParam(format!(
            "t_end {} must be positive",
            cfg.t_end
        )));
    }
    if !(cfg.rel_tol > 0.0 && cfg.rel_tol <= 1e-3) {
        return Err(Error::InvalidParam(format!(
            "rel_tol {} outside (0, 1e-3]",
            cfg.rel_tol
        )));
    }
    if cfg.checkpoints == 0 {
        return Err(Error::InvalidParam("need at least one checkpoint".into()));
    }

    let d = dataset.dim();
    let times = checkpoint_times(cfg.t_end, cfg.checkpoints);
    let mut checkpoints = Vec::with_capacity(times.len() + 1);
    let mut y = vec![0.0_f64; d];
    checkpoints.push(Checkpoint {
        step_or_time: 0.0,
        w: y.clone(),
        risk: empirical_risk(dataset, loss, &y)?,
        norm: 0.0,
    });

    let mut stages: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; d]).collect();
    let mut ytmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];

    let rhs = |w: &[f64], out: &mut [f64]| -> Result<()> {
        risk_gradient_into(dataset, loss, w, out)?;
        for o in out.iter_mut() {
            *o = -*o;
        }
        Ok(())
    };

    rhs(&y, &mut stages[0])?;
    let mut t = 0.0_f64;
    let mut h = (cfg.t_end * 1e-6).min(times[0]);
    let mut err_prev = 1e-2_f64;
    let mut max_norm = 0.0_f64;
    let h_floor = 1e-14 * cfg.t_end;
    let mut target_idx = 0;

    while target_idx < times.len() {
        if h < h_floor {
            return Err(Error::StepUnderflow { t });
        }
        let remaining = times[target_idx] - t;
        let (h_eff, landing) = if h >= remaining {
            (remaining, true)
        } else {
            (h, false)
        };

        // Stages 2..7; stage 7 is evaluated at the 5th-order solution.
        for (s, row) in A.iter().enumerate() {
            ytmp.copy_from_slice(&y);
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    crate::linalg::axpy(&mut ytmp, h_eff * a, &stages[j]);
                }
            }
            if s == 5 {
                ynew.copy_from_slice(&ytmp);
            }
            let (_, tail) = stages.split_at_mut(s + 1);
            rhs(&ytmp, &mut tail[0])?;
        }

        // Weighted RMS of the embedded error against a mixed tolerance.
        let mut acc = 0.0_f64;
        for i in 0..d {
            let mut e = 0.0;
            for (k, &c) in ERR_W.iter().enumerate() {
                e += c * stages[k][i];
            }
            e *= h_eff;
            let sc = ABS_TOL + cfg.rel_tol * y[i].abs().max(ynew[i].abs());
            acc += (e / sc) * (e / sc);
        }
        let err = (acc / d as f64).sqrt();

        if err <= 1.0 {
            t = if landing {
                times[target_idx]
            } else {
                t + h_eff
            };
            y.copy_from_slice(&ynew);
            stages.swap(0, 6); // reuse the last stage as the next first
            let n = norm(&y);
            if !n.is_finite() {
                return Err(Error::NonFinite { at: t });
            }
            max_norm = max_norm.max(n);
            if landing {
                checkpoints.push(Checkpoint {
                    step_or_time: t,
                    w: y.clone(),
                    risk: empirical_risk(dataset, loss, &y)?,
                    norm: n,
                });
                target_idx += 1;
            }
            let scale = (SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_prev.powf(PI_BETA))
                .clamp(MIN_SCALE, MAX_SCALE);
            let proposed = h_eff * scale;
            h = if landing { h.max(proposed) } else { proposed };
            err_prev = err.max(1e-4);
        } else {
            let scale = (SAFETY * err.powf(-0.2)).clamp(0.1, 0.9);
            h = h_eff * scale;
        }
    }

    Ok(Trajectory {
        config: RunConfig::Flow(*cfg),
        loss,
        dataset_tag: dataset.tag().to_string(),
        checkpoints,
        final_w: y,
        averaged_w: None,
        max_norm_seen: max_norm,
    })
}

/// Geometric grid of sample times in `[t_end * 1e-3, t_end]`, last one equal
/// to `t_end` exactly.
fn checkpoint_times(t_end: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_end];
    }
    let mut times = Vec::with_capacity(count);
    for i in 0..count {
        let frac = i as f64 / (count - 1) as f64;
        times.push(t_end * FIRST_CHECKPOINT_SCALE.powf(1.0 - frac));
    }
    times.dedup();
    *times.last_mut().unwrap() = t_end;
    times
}

//! End-to-end campaigns: generalization estimation over synthetic
//! distributions, the adversarial lower-bound run, the scalar-recursion
//! checks, the risk-plateau experiment, and the sweep runner.

mod sweep;

pub use sweep::{run_sweep, BoundRequest, SweepConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{certify, BoundQuery, BoundReport};
use crate::data::{adversarial_dataset, random_unit, sample_unit_ball, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, normalized, scale};
use crate::loss::Loss;
use crate::optim::{lowerbound_recursion, run_gd, GdConfig};
use crate::util::mix_seed;

const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLaw {
    /// Uniform in the unit ball, reflected to the witness halfspace,
    /// rejected below the margin. Matches the dataset generator.
    BallRejection,
    /// Equal mix of points exactly on the margin boundary and the witness
    /// itself.
    TwoCluster,
}

/// A synthetic distribution supported on the unit ball with
/// `x . w0 >= gamma` almost surely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub w0: Vec<f64>,
    pub gamma: f64,
    pub d: usize,
    pub law: SampleLaw,
    pub seed_domain: String,
}

impl DistributionSpec {
    pub fn new(
        w0: Vec<f64>,
        gamma: f64,
        law: SampleLaw,
        seed_domain: impl Into<String>,
    ) -> Result<Self> {
        if (norm(&w0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(
                "distribution witness must be unit".into(),
            ));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParam(format!("gamma {gamma} outside (0, 1]")));
        }
        let d = w0.len();
        Ok(DistributionSpec {
            w0,
            gamma,
            d,
            law,
            seed_domain: seed_domain.into(),
        })
    }

    /// Witness-aligned default: w0 is the first basis vector.
    pub fn axis_aligned(
        d: usize,
        gamma: f64,
        law: SampleLaw,
        seed_domain: impl Into<String>,
    ) -> Result<Self> {
        let mut w0 = vec![0.0; d.max(1)];
        w0[0] = 1.0;
        Self::new(w0, gamma, law, seed_domain)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self.law {
            SampleLaw::BallRejection => {
                if self.gamma >= 1.0 - 1e-12 {
                    return Ok(self.w0.clone());
                }
                for _ in 0..MAX_REJECTION_ATTEMPTS {
                    let mut x = sample_unit_ball(rng, self.d);
                    let s = dot(&x, &self.w0);
                    if s < 0.0 {
                        axpy(&mut x, -2.0 * s, &self.w0);
                    }
                    if dot(&x, &self.w0) >= self.gamma {
                        return Ok(x);
                    }
                }
                Err(Error::InvalidParam(format!(
                    "rejection sampling failed at gamma={}, d={}",
                    self.gamma, self.d
                )))
            }
            SampleLaw::TwoCluster => {
                if rng.random::<f64>() < 0.5 {
                    Ok(self.w0.clone())
                } else {
                    // A point on the margin boundary: gamma w0 + sqrt(1-gamma^2) u
                    // with u a random unit direction orthogonal to w0.
                    let mut u = random_unit(rng, self.d);
                    let s = dot(&u, &self.w0);
                    axpy(&mut u, -s, &self.w0);
                    match normalized(&u) {
                        Some(mut u) => {
                            scale(&mut u, (1.0 - self.gamma * self.gamma).sqrt());
                            axpy(&mut u, self.gamma, &self.w0);
                            Ok(u)
                        }
                        // d = 1 (or a degenerate draw): only the witness ray exists.
                        None => Ok(self.w0.iter().map(|v| v * self.gamma).collect()),
                    }
                }
            }
        }
    }

    /// Draw a training set; the margin witness is inherited from the
    /// distribution, so dataset invariants hold by construction.
    pub fn sample_dataset(&self, m: usize, seed: u64) -> Result<Dataset> {
        if m == 0 {
            return Err(Error::InvalidParam("m must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(m);
        for _ in 0..m {
            points.push(self.sample(&mut rng)?);
        }
        Dataset::new(
            points,
            self.w0.clone(),
            self.gamma,
            format!("sampled({},m={m},seed={seed})", self.seed_domain),
        )
    }
}

/// Monte-Carlo estimate of the misclassification probability with a Wilson
/// 95% interval half-width. Errors use the non-strict rule `x . w <= 0`, so
/// the zero predictor scores 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenErrorEstimate {
    pub error_rate: f64,
    pub n_test: usize,
    pub wilson_halfwidth: f64,
}

pub fn estimate_generalization(
    w: &[f64],
    dist: &DistributionSpec,
    n_test: usize,
    seed: u64,
) -> Result<GenErrorEstimate> {
    if n_test == 0 {
        return Err(Error::InvalidParam("n_test must be at least 1".into()));
    }
    if w.len() != dist.d {
        return Err(Error::DimensionMismatch {
            expected: dist.d,
            got: w.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0usize;
    for _ in 0..n_test {
        let x = dist.sample(&mut rng)?;
        if dot(&x, w) <= 0.0 {
            errors += 1;
        }
    }
    let error_rate = errors as f64 / n_test as f64;
    Ok(GenErrorEstimate {
        error_rate,
        n_test,
        wilson_halfwidth: wilson_halfwidth(error_rate, n_test),
    })
}

/// Half-width of the 95% Wilson score interval; recomputable from
/// `(error_rate, n_test)`.
pub fn wilson_halfwidth(p: f64, n: usize) -> f64 {
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let z2 = z * z;
    z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
}

/// For each horizon: build the adversarial dataset, run descent for exactly
/// that many steps, and certify the guaranteed misclassification count.
pub fn lowerbound_campaign(
    m: usize,
    gamma: f64,
    t_grid: &[usize],
    eta: f64,
) -> Result<Vec<BoundReport>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParam(format!("eta {eta} outside (0, 1]")));
    }
    let mut reports = Vec::with_capacity(t_grid.len());
    for &steps in t_grid {
        let (ds, _) = adversarial_dataset(m, gamma, steps)?;
        let traj = run_gd(&ds, Loss::Logistic, &GdConfig { eta, steps })?;
        reports.push(certify(
            &traj,
            &ds,
            &BoundQuery::LowerboundViolations { gamma },
        )?);
    }
    Ok(reports)
}

/// Checks on the scalar recursion: the majority coordinate locks in quickly
/// and stays high, the minority coordinate is still small at that point, the
/// minority margin is nonpositive until then, and any later sign change
/// happens no earlier than `19 / (480 gamma^2 epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitTimeReport {
    pub gamma: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub horizon: usize,
    /// First 1-based index with r >= 1.
    pub t_init: usize,
    /// `32 / (5 eta) + 1`
    pub t_init_bound: f64,
    /// r stays at or above 15/16 from t_init through the horizon.
    pub floor_holds: bool,
    pub s_at_init: f64,
    /// 3/10
    pub s_init_bound: f64,
    pub u_nonpositive_up_to_init: bool,
    pub s_monotone: bool,
    /// First 1-based index with u > 0, if any within the horizon.
    pub crossing: Option<usize>,
    /// `19 / (480 gamma^2 epsilon)`
    pub crossing_bound: f64,
    pub crossing_ok: bool,
    pub passed: bool,
}

pub fn inittime_check(
    gamma: f64,
    epsilon: f64,
    eta: f64,
    horizon: usize,
) -> Result<InitTimeReport> {
    let needed = (32.0 / (5.0 * eta)).ceil() as usize + 1;
    if horizon < needed {
        return Err(Error::HorizonTooShort {
            needed,
            got: horizon,
        });
    }
    let trace = lowerbound_recursion(gamma, epsilon, eta, horizon)?;
    let t_init = trace
        .rows
        .iter()
        .find(|row| row.r >= 1.0)
        .map(|row| row.t)
        .ok_or(Error::HorizonTooShort {
            needed,
            got: horizon,
        })?;
    let t_init_bound = 32.0 / (5.0 * eta) + 1.0;
    let floor_holds = trace.rows[t_init - 1..]
        .iter()
        .all(|row| row.r >= 15.0 / 16.0);
    let s_at_init = trace.rows[t_init - 1].s;
    let u_nonpositive_up_to_init = trace.rows[..t_init].iter().all(|row| row.u <= 0.0);
    let s_monotone = trace.rows.windows(2).all(|w| w[1].s >= w[0].s);
    let crossing = trace.first_crossing();
    let crossing_bound = 19.0 / (480.0 * gamma * gamma * epsilon);
    let crossing_ok = crossing.is_none_or(|t| t as f64 >= crossing_bound);
    let passed = (t_init as f64) <= t_init_bound
        && floor_holds
        && s_at_init <= 3.0 / 10.0
        && u_nonpositive_up_to_init
        && s_monotone
        && crossing_ok;
    Ok(InitTimeReport {
        gamma,
        epsilon,
        eta,
        horizon,
        t_init,
        t_init_bound,
        floor_holds,
        s_at_init,
        s_init_bound: 3.0 / 10.0,
        u_nonpositive_up_to_init,
        s_monotone,
        crossing,
        crossing_bound,
        crossing_ok,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSeed {
    pub seed: u64,
    pub error_small: f64,
    pub error_large: f64,
}

/// Train-longer-changes-little check: the mean test error after the long
/// horizon must stay within a factor two of the short-horizon error, plus a
/// Monte-Carlo allowance of `2 / n_test`. Qualitative; never certified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauReport {
    pub t_small: usize,
    pub t_large: usize,
    pub n_test: usize,
    pub mean_error_small: f64,
    pub mean_error_large: f64,
    pub threshold: f64,
    pub passed: bool,
    pub certified: bool,
    pub per_seed: Vec<PlateauSeed>,
}

pub fn plateau_check(
    dist: &DistributionSpec,
    m: usize,
    t_small: usize,
    t_large: usize,
    seeds: &[u64],
    n_test: usize,
) -> Result<PlateauReport> {
    if t_small < m {
        return Err(Error::InvalidParam(format!(
            "t_small {t_small} must be at least m={m}"
        )));
    }
    if t_large < 10 * t_small {
        return Err(Error::InvalidParam(format!(
            "t_large {t_large} must be at least 10 * t_small = {}",
            10 * t_small
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParam("need at least one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let train = dist.sample_dataset(m, mix_seed(seed, 1))?;
        let short = run_gd(
            &train,
            Loss::Logistic,
            &GdConfig {
                eta: 1.0,
                steps: t_small,
            },
        )?;
        let long = run_gd(
            &train,
            Loss::Logistic,
            &GdConfig {
                eta: 1.0,
                steps: t_large,
            },
        )?;
        let test_seed = mix_seed(seed, 2);
        let err_s = estimate_generalization(&short.final_w, dist, n_test, test_seed)?;
        let err_l = estimate_generalization(&long.final_w, dist, n_test, test_seed)?;
        per_seed.push(PlateauSeed {
            seed,
            error_small: err_s.error_rate,
            error_large: err_l.error_rate,
        });
    }
    let k = per_seed.len() as f64;
    let mean_error_small = per_seed.iter().map(|s| s.error_small).sum::<f64>() / k;
    let mean_error_large = per_seed.iter().map(|s| s.error_large).sum::<f64>() / k;
    let threshold = 2.0 * mean_error_small + 2.0 / n_test as f64;
    Ok(PlateauReport {
        t_small,
        t_large,
        n_test,
        mean_error_small,
        mean_error_large,
        threshold,
        passed: mean_error_large <= threshold,
        certified: false,
        per_seed,
    })
}

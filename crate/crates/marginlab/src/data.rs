//! Datasets of label-folded points in the unit ball, carrying a margin
//! witness, plus margin-profile computations and the two fixed 2-D
//! constructions used by the lower-bound experiments.
//!
//! Binary labels are folded into the points (a point with label -1 is stored
//! negated), so a predictor `w` classifies point `i` correctly exactly when
//! `x_i . w > 0`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, normalized};
use crate::util::{fmt_f64, parse_f64};

/// Slop allowed when validating unit-ball membership, witness normalization
/// and the witness margin.
const GEOM_TOL: f64 = 1e-12;

const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

/// A separable dataset: points in the unit ball together with a unit witness
/// `w0` and a certified margin `gamma` with `min_i x_i . w0 >= gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    witness: Vec<f64>,
    gamma: f64,
    tag: String,
}

impl Dataset {
    /// Validates every invariant; the only way to construct a dataset.
    pub fn new(
        points: Vec<Vec<f64>>,
        witness: Vec<f64>,
        gamma: f64,
        tag: impl Into<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParam(
                "dataset needs at least one point".into(),
            ));
        }
        let d = witness.len();
        if d == 0 {
            return Err(Error::InvalidParam("dimension must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParam(format!("gamma {gamma} outside (0, 1]")));
        }
        if (norm(&witness) - 1.0).abs() > GEOM_TOL {
            return Err(Error::InvalidParam("witness is not a unit vector".into()));
        }
        for (i, x) in points.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            if norm(x) > 1.0 + GEOM_TOL {
                return Err(Error::InvalidParam(format!(
                    "point {i} outside the unit ball"
                )));
            }
            if dot(x, &witness) < gamma - GEOM_TOL {
                return Err(Error::InvalidParam(format!(
                    "point {i} violates the witness margin {gamma}"
                )));
            }
        }
        Ok(Dataset {
            points,
            witness,
            gamma,
            tag: tag.into(),
        })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.witness.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn witness(&self) -> &[f64] {
        &self.witness
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Write `<stem>.csv` (one row per point, 17-significant-digit floats)
    /// and `<stem>.meta.json` next to it.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = String::new();
        for x in &self.points {
            let row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        fs::write(dir.join(format!("{stem}.csv")), csv)?;
        let meta = DatasetMeta {
            m: self.m(),
            d: self.dim(),
            gamma: self.gamma,
            witness_w0: self.witness.clone(),
            tag: self.tag.clone(),
        };
        fs::write(
            dir.join(format!("{stem}.meta.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta_path = dir.join(format!("{stem}.meta.json"));
        let csv_path = dir.join(format!("{stem}.csv"));
        if !meta_path.exists() || !csv_path.exists() {
            return Err(Error::MissingInput(format!(
                "dataset files {stem}.csv / {stem}.meta.json under {}",
                dir.display()
            )));
        }
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
        let mut points = Vec::with_capacity(meta.m);
        for (ln, line) in fs::read_to_string(csv_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Option<Vec<f64>> = line.split(',').map(parse_f64).collect();
            let row = row.ok_or_else(|| Error::Parse(format!("bad float on row {ln}")))?;
            points.push(row);
        }
        if points.len() != meta.m {
            return Err(Error::Parse(format!(
                "meta says m={}, csv has {} rows",
                meta.m,
                points.len()
            )));
        }
        Dataset::new(points, meta.witness_w0, meta.gamma, meta.tag)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    m: usize,
    d: usize,
    gamma: f64,
    witness_w0: Vec<f64>,
    tag: String,
}

/// Bookkeeping for the adversarial construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialMeta {
    /// Effective margin `max(gamma, 1/sqrt(T))`.
    pub gamma_eff: f64,
    /// Minority fraction, exactly `minority_count / m`.
    pub epsilon: f64,
    pub minority_count: usize,
    /// True when the guaranteed violation count is zero and the dataset is a
    /// single cluster.
    pub degenerate: bool,
}

/// Random separable dataset: points drawn uniformly in the unit ball,
/// reflected to the witness halfspace, and rejection-sampled until they clear
/// the margin. Deterministic per seed.
pub fn generate_separable(m: usize, d: usize, gamma: f64, seed: u64) -> Result<Dataset> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidParam("m and d must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!("gamma {gamma} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let witness = random_unit(&mut rng, d);
    let tag = format!("separable(m={m},d={d},gamma={gamma},seed={seed})");

    // gamma = 1 leaves a single feasible point: the witness itself.
    if gamma >= 1.0 - GEOM_TOL {
        let points = vec![witness.clone(); m];
        return Dataset::new(points, witness, gamma, tag);
    }

    let mut points = Vec::with_capacity(m);
    for _ in 0..m {
        let mut accepted = None;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let mut x = sample_unit_ball(&mut rng, d);
            let s = dot(&x, &witness);
            if s < 0.0 {
                // Reflect the witness component; stays in the ball.
                crate::linalg::axpy(&mut x, -2.0 * s, &witness);
            }
            if dot(&x, &witness) >= gamma {
                accepted = Some(x);
                break;
            }
        }
        match accepted {
            Some(x) => points.push(x),
            None => {
                return Err(Error::InvalidParam(format!(
                    "rejection sampling failed at gamma={gamma}, d={d}"
                )))
            }
        }
    }
    Dataset::new(points, witness, gamma, tag)
}

/// The 2-D dataset on which descent provably keeps misclassifying a computed
/// number of points: a majority cluster at `(1, 0)` and a minority cluster at
/// `(-1/2, 3*gamma_eff)`, with minority size `floor(m / (26 max(1, gamma^2 T)))`.
pub fn adversarial_dataset(
    m: usize,
    gamma: f64,
    steps: usize,
) -> Result<(Dataset, AdversarialMeta)> {
    if m == 0 || steps == 0 {
        return Err(Error::InvalidParam("m and T must be at least 1".into()));
    }
    if !(gamma > 0.0 && gamma <= 0.125) {
        return Err(Error::InvalidParam(format!(
            "gamma {gamma} outside (0, 1/8]"
        )));
    }
    let t = steps as f64;
    let gamma_eff = gamma.max(1.0 / t.sqrt());
    if 0.25 + 9.0 * gamma_eff * gamma_eff > 1.0 + GEOM_TOL {
        // Minority point would leave the unit ball; happens only for T < 12.
        return Err(Error::InvalidParam(format!(
            "T={steps} too small for the construction (needs 1/sqrt(T) <= 1/(2 sqrt 3))"
        )));
    }
    let k = (m as f64 / (26.0 * gamma_eff * gamma_eff * t)).floor() as usize;
    let meta = AdversarialMeta {
        gamma_eff,
        epsilon: k as f64 / m as f64,
        minority_count: k,
        degenerate: k == 0,
    };
    let ds = two_cluster_dataset(
        m,
        k,
        gamma_eff,
        3.0 * gamma_eff,
        format!("adversarial(m={m},gamma={gamma},T={steps})"),
    )?;
    Ok((ds, meta))
}

/// Illustration-only variant: a fixed 90/10 split at margin parameter 1/5,
/// outside the theorem's (0, 1/8] box. Requires m >= 10.
pub fn figure1_dataset(m: usize) -> Result<(Dataset, AdversarialMeta)> {
    if m < 10 {
        return Err(Error::InvalidParam("figure-1 split needs m >= 10".into()));
    }
    let gamma = 0.2;
    let k = m / 10;
    let meta = AdversarialMeta {
        gamma_eff: gamma,
        epsilon: k as f64 / m as f64,
        minority_count: k,
        degenerate: false,
    };
    let ds = two_cluster_dataset(m, k, gamma, 0.6, format!("figure1(m={m})"))?;
    Ok((ds, meta))
}

fn two_cluster_dataset(
    m: usize,
    minority: usize,
    gamma: f64,
    minority_y: f64,
    tag: String,
) -> Result<Dataset> {
    let mut points = Vec::with_capacity(m);
    for _ in 0..m - minority {
        points.push(vec![1.0, 0.0]);
    }
    for _ in 0..minority {
        points.push(vec![-0.5, minority_y]);
    }
    let witness = normalized(&[gamma, 0.5]).expect("nonzero by construction");
    Dataset::new(points, witness, gamma, tag)
}

/// Sorted normalized margins `x_i . (w / ||w||)` of a dataset under a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginProfile {
    margins: Vec<f64>,
    predictor_norm: f64,
}

impl MarginProfile {
    /// Sorted ascending; every entry in [-1, 1] for unit-ball data.
    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn predictor_norm(&self) -> f64 {
        self.predictor_norm
    }

    pub fn min(&self) -> f64 {
        self.margins[0]
    }

    /// Number of points with margin <= tau (non-strict).
    pub fn violation_count(&self, tau: f64) -> usize {
        self.margins.partition_point(|&v| v <= tau)
    }

    /// A value v such that at least `(1-p) m` points have margin >= v:
    /// the `(floor(p m) + 1)`-th smallest margin, clamped to the largest.
    pub fn margin_at_quantile(&self, p: f64) -> f64 {
        let m = self.margins.len();
        let idx = ((p * m as f64).floor() as usize).min(m - 1);
        self.margins[idx]
    }

    /// Build a profile from raw margin values (sorts them); used by
    /// profile-level oracles.
    pub fn from_margins(mut margins: Vec<f64>, predictor_norm: f64) -> Self {
        margins.sort_by(f64::total_cmp);
        MarginProfile {
            margins,
            predictor_norm,
        }
    }
}

pub fn margin_profile(dataset: &Dataset, w: &[f64]) -> Result<MarginProfile> {
    if w.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: w.len(),
        });
    }
    let n = norm(w);
    if n <= 1e-300 {
        return Err(Error::ZeroVector);
    }
    let mut margins: Vec<f64> = dataset.points().iter().map(|x| dot(x, w) / n).collect();
    margins.sort_by(f64::total_cmp);
    Ok(MarginProfile {
        margins,
        predictor_norm: n,
    })
}

/// Number of points with `x_i . w <= 0` (sign-based, so normalization-free;
/// the zero predictor misclassifies everything).
pub fn misclassified_count(dataset: &Dataset, w: &[f64]) -> Result<usize> {
    if w.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: w.len(),
        });
    }
    Ok(dataset.points().iter().filter(|x| dot(x, w) <= 0.0).count())
}

pub(crate) fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&g) {
            return u;
        }
    }
}

pub(crate) fn sample_unit_ball(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let mut x = random_unit(rng, d);
    let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
    crate::linalg::scale(&mut x, r);
    x
}

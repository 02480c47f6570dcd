//! Gaussian-kernel subdensity estimation on a tabulated surrogate-time grid.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::survival::WeightVector;

pub const DEFAULT_UNDERSMOOTHING: f64 = 0.06;
pub const DEFAULT_GRID_SIZE: usize = 400;
/// Lower end of every surrogate grid.
pub const GRID_FLOOR: f64 = 1e-6;

pub trait Kernel {
    fn density(&self, z: f64) -> f64;
    /// `density(z)` is treated as zero for `|z|` beyond this.
    fn support_radius(&self) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gaussian;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Kernel for Gaussian {
    fn density(&self, z: f64) -> f64 {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }

    // exp(-40.5) is below 1e-17 relative to the peak.
    fn support_radius(&self) -> f64 {
        9.0
    }
}

/// Bandwidth and undersmoothing exponent for the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub h: f64,
    pub c0: f64,
}

impl KernelSpec {
    pub fn new(h: f64, c0: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        Ok(KernelSpec { h, c0 })
    }

    /// `K(z / h) / h`.
    pub fn eval(&self, u: f64) -> f64 {
        Gaussian.density(u / self.h) / self.h
    }
}

/// Weighted quantile by linear interpolation between order statistics placed
/// at the midpoints of their weight mass, rescaled so that the smallest value
/// sits at probability 0 and the largest at 1. With equal weights this is the
/// usual type-7 sample quantile.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| (*v, *w))
        .collect();
    assert!(!pairs.is_empty(), "weighted quantile of an empty sample");
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pairs.len();
    if m == 1 {
        return pairs[0].0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let first = pairs[0].1 / 2.0;
    let span = total - first - pairs[m - 1].1 / 2.0;
    let mut positions = Vec::with_capacity(m);
    let mut cum = 0.0;
    for &(_, w) in &pairs {
        positions.push(((cum + w / 2.0 - first) / span).clamp(0.0, 1.0));
        cum += w;
    }
    let p = p.clamp(0.0, 1.0);
    let k = positions.partition_point(|&q| q <= p);
    if k == 0 {
        return pairs[0].0;
    }
    if k == m {
        return pairs[m - 1].0;
    }
    let (q0, q1) = (positions[k - 1], positions[k]);
    let (v0, v1) = (pairs[k - 1].0, pairs[k].0);
    if q1 <= q0 {
        v1
    } else {
        v0 + (v1 - v0) * (p - q0) / (q1 - q0)
    }
}

/// Weighted standard deviation with a Bessel-type `m / (m - 1)` factor, `m`
/// being the number of positive-weight values.
pub fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let (mut sw, mut sx, mut m) = (0.0, 0.0, 0usize);
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            sw += w;
            sx += w * v;
            m += 1;
        }
    }
    if m < 2 {
        return 0.0;
    }
    let mean = sx / sw;
    let ss: f64 = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum();
    (ss / sw * m as f64 / (m as f64 - 1.0)).sqrt()
}

/// Normal-reference bandwidth `1.06 min(sd, IQR/1.34) m^(-1/5)`, undersmoothed
/// by a further `m^(-c0)`. Falls back to the standard deviation alone when
/// the interquartile range collapses.
pub fn bandwidth(values: &[f64], weights: &[f64], c0: f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Argument(
            "values and weights differ in length".into(),
        ));
    }
    let mut distinct: Vec<f64> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .collect();
    let m = distinct.len();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "{} distinct positive-weight values among {m}",
            distinct.len()
        )));
    }
    let sd = weighted_sd(values, weights);
    let iqr = weighted_quantile(values, weights, 0.75) - weighted_quantile(values, weights, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let mf = m as f64;
    Ok(1.06 * spread * mf.powf(-0.2) * mf.powf(-c0))
}

/// Equally spaced points, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SGrid {
    points: Vec<f64>,
}

impl SGrid {
    pub fn uniform(lo: f64, hi: f64, size: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo && size >= 2) {
            return Err(Error::Argument(format!(
                "grid needs lo < hi and at least 2 points, got [{lo}, {hi}] with {size}"
            )));
        }
        let step = (hi - lo) / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|k| lo + step * k as f64).collect();
        points[size - 1] = hi;
        Ok(SGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn step(&self) -> f64 {
        (self.hi() - self.lo()) / (self.len() - 1) as f64
    }

    /// Index range of points within `radius` of `s`.
    fn window(&self, s: f64, radius: f64) -> std::ops::Range<usize> {
        let step = self.step();
        let g = self.len();
        let lo = ((s - radius - self.lo()) / step).ceil().max(0.0);
        let hi = ((s + radius - self.lo()) / step).floor();
        if hi < 0.0 || lo >= g as f64 {
            return 0..0;
        }
        (lo as usize)..((hi as usize + 1).min(g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub arm: Arm,
    pub t: f64,
    pub t0: f64,
    pub h: f64,
}

/// A function tabulated on a surrogate-time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: GridMeta,
}

/// Gaussian-kernel estimate of the subdensity `P(T > t, S <= t0) f(s | T > t,
/// S <= t0)` for one arm, evaluated on `grid`.
pub fn subdensity(
    data: &TrialDataset,
    arm: Arm,
    t: f64,
    t0: f64,
    weights: &WeightVector,
    grid: &SGrid,
    spec: &KernelSpec,
) -> Result<GridFunction> {
    if weights.t != t {
        return Err(Error::Argument(format!(
            "weights were built for t = {}, requested t = {t}",
            weights.t
        )));
    }
    if grid.lo() <= 0.0 || grid.hi() > t0 {
        return Err(Error::Argument(format!("grid must lie in (0, {t0}]")));
    }
    let total = weights.arm_total(arm);
    if !(total > 0.0) {
        return Err(Error::DegenerateArm { arm });
    }
    let mut contributors: Vec<(f64, f64)> = Vec::new();
    let mut counts = [0usize; 2];
    for (i, r) in data.records().iter().enumerate() {
        if let Some(s) = r.s_time {
            if r.x > t && s <= t0 && weights.effective[i] > 0.0 {
                counts[r.arm.index()] += 1;
                if r.arm == arm {
                    contributors.push((s, weights.effective[i]));
                }
            }
        }
    }
    if contributors.is_empty() {
        return Err(Error::EmptyStratum {
            stratum: format!("arm {arm}: X > {t} and S <= {t0}"),
            arm0: counts[0],
            arm1: counts[1],
        });
    }
    // Sorting makes the summation order independent of the input order.
    contributors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut values = vec![0.0; grid.len()];
    let radius = Gaussian.support_radius() * spec.h;
    for &(s, w) in &contributors {
        let scale = w / total;
        for k in grid.window(s, radius) {
            values[k] += scale * spec.eval(s - grid.points()[k]);
        }
    }
    Ok(GridFunction {
        grid: grid.points().to_vec(),
        values,
        meta: GridMeta {
            arm,
            t,
            t0,
            h: spec.h,
        },
    })
}

/// Composite trapezoid rule over tabulated values.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

//! Optimal transformation of landmark surrogate information and the
//! proportion of treatment effect it explains.
//!
//! The transformation minimises `E{Y1 - g(Q1)}^2` subject to
//! `E{Y0 - g(Q0)} = 0`. Its closed form needs three subdensities
//! `f0(s, t0, t0)`, `f1(s, t0, t0)`, `f1(s, t, t0)` and four joint tail
//! probabilities; everything here is the IPCW plug-in version of that form.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::data::{snapshot, Arm, SnapshotKind, SurrogateSnapshot, TrialDataset};
use crate::error::{Error, Result};
use crate::kernel::{
    bandwidth, trapezoid, Gaussian, GridFunction, GridMeta, Kernel, KernelSpec, SGrid,
    DEFAULT_GRID_SIZE, DEFAULT_UNDERSMOOTHING, GRID_FLOOR,
};
use crate::survival::{
    ipcw_weights, weighted_joint_tail, weighted_survival, CensoringCurves, WeightVector,
};

/// How the kernel bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    /// One bandwidth from the pooled sample `{X > t0, S <= t0}`.
    Pooled,
    /// A separate bandwidth per arm.
    PerArm,
    /// A fixed bandwidth.
    Fixed(f64),
}

/// Which arm plays the role of treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Use the labels as given unless the effect estimate is negative, in
    /// which case the labels are exchanged.
    Auto,
    AsGiven,
    Swapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub grid_size: usize,
    /// Grid points where `f1(s, t0, t0)` falls below this fraction of its
    /// maximum are dropped.
    pub eps_rel: f64,
    pub c0: f64,
    pub bandwidth: BandwidthMode,
    pub min_delta: f64,
    pub constraint_tol: f64,
    pub orientation: Orientation,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            grid_size: DEFAULT_GRID_SIZE,
            eps_rel: 1e-3,
            c0: DEFAULT_UNDERSMOOTHING,
            bandwidth: BandwidthMode::Pooled,
            min_delta: 1e-3,
            constraint_tol: 0.02,
            orientation: Orientation::Auto,
        }
    }
}

impl EstimateOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Argument("grid size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.eps_rel) {
            return Err(Error::Argument(format!(
                "eps_rel must be in [0, 1), got {}",
                self.eps_rel
            )));
        }
        if !(self.min_delta > 0.0) {
            return Err(Error::Argument("min_delta must be positive".into()));
        }
        if !(self.constraint_tol > 0.0) {
            return Err(Error::Argument("constraint_tol must be positive".into()));
        }
        if let BandwidthMode::Fixed(h) = self.bandwidth {
            KernelSpec::new(h, self.c0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Ind,
    RmstFull,
    RmstInd,
}

/// Plug-in ingredients of the optimal transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformComponents {
    pub mu0_t: f64,
    pub mu1_t: f64,
    /// `P(T0 > t0, S0 > t0)`.
    pub tail0_t0: f64,
    /// `P(T1 > t0, S1 > t0)`.
    pub tail1_t0: f64,
    /// `P(T1 > t, S1 > t0)`.
    pub tail1_t: f64,
    /// `P(T0 > t0)` and `P(T1 > t0)` with weights at `t0`.
    pub surv0_t0: f64,
    pub surv1_t0: f64,
    /// `int f0^2 / f1(., t0, t0)`.
    pub int_f0_sq: f64,
    /// `int f0 f1(., t, t0) / f1(., t0, t0)`.
    pub int_f0_f1t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformDiagnostics {
    pub grid_points: usize,
    pub truncated_points: usize,
    /// `|int g1 f0 + g2 P0 - mu0(t)|` on the retained grid.
    pub plugin_residual: f64,
    /// `|mean_{A=0} g_i - mu0(t)|` with weights at `t0`.
    pub constraint_residual: f64,
    pub constraint_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedAt {
    pub t: f64,
    pub t0: f64,
    pub h: [f64; 2],
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_size: usize,
}

/// `lambda`, `g1` on the retained grid and the scalar `g2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTransform {
    pub lambda: f64,
    pub g1: GridFunction,
    pub g2: f64,
    pub fitted_at: FittedAt,
    pub components: TransformComponents,
    pub diagnostics: TransformDiagnostics,
}

impl OptimalTransform {
    /// `g1` at `s` by linear interpolation, clamped outside the grid.
    pub fn g1_at(&self, s: f64) -> f64 {
        interpolate_clamped(&self.g1.grid, &self.g1.values, s)
    }
}

fn interpolate_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x == x0 {
        return ys[k - 1];
    }
    ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0)
}

/// Value of the transformation for one landmark snapshot.
pub fn apply_transform(tr: &OptimalTransform, snap: &SurrogateSnapshot) -> Result<f64> {
    if snap.t0 != tr.fitted_at.t0 {
        return Err(Error::Argument(format!(
            "snapshot at t0 = {} but transform fitted at t0 = {}",
            snap.t0, tr.fitted_at.t0
        )));
    }
    Ok(match snap.kind {
        SnapshotKind::PrimaryBeforeT0 => 0.0,
        SnapshotKind::SurrogateByT0(s) => tr.g1_at(s),
        SnapshotKind::NeitherByT0 => tr.g2,
    })
}

/// Estimates for one landmark analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PteResult {
    pub variant: Variant,
    pub t: f64,
    pub t0: f64,
    pub tau: Option<f64>,
    pub delta: f64,
    pub delta_g: f64,
    pub pte: f64,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub labels_swapped: bool,
    /// `lambda` and `g2` of the fitted transformation (per-node values are
    /// not retained for the RMST variants).
    pub lambda: Option<f64>,
    pub g2: Option<f64>,
    pub diagnostics: Option<TransformDiagnostics>,
}

impl PteResult {
    pub(crate) fn new(variant: Variant, t: f64, t0: f64, delta: f64, delta_g: f64) -> Self {
        PteResult {
            variant,
            t,
            t0,
            tau: None,
            delta,
            delta_g,
            pte: delta_g / delta,
            se: None,
            ci: None,
            labels_swapped: false,
            lambda: None,
            g2: None,
            diagnostics: None,
        }
    }

    pub fn with_interval(mut self, se: f64, ci: (f64, f64)) -> Self {
        self.se = Some(se);
        self.ci = Some(ci);
        self
    }
}

/// Censoring curves, weights and orientation shared by every quantity
/// computed from one (possibly perturbed) copy of the data.
pub struct Analysis<'a> {
    data: Cow<'a, TrialDataset>,
    perturb: Option<&'a [f64]>,
    curves: CensoringCurves,
    opts: EstimateOptions,
    swapped: bool,
}

impl<'a> Analysis<'a> {
    /// Builds the analysis with the labels oriented as requested. `Auto` is
    /// treated as `AsGiven`; callers resolve it with [`Analysis::orient`].
    pub fn new(
        data: &'a TrialDataset,
        opts: &EstimateOptions,
        perturb: Option<&'a [f64]>,
    ) -> Result<Self> {
        opts.validate()?;
        let swapped = opts.orientation == Orientation::Swapped;
        let data = if swapped {
            Cow::Owned(data.with_swapped_arms())
        } else {
            Cow::Borrowed(data)
        };
        let curves = CensoringCurves::fit(&data, perturb)?;
        Ok(Analysis {
            data,
            perturb,
            curves,
            opts: *opts,
            swapped,
        })
    }

    /// Resolves `Auto` orientation from the sign of `effect` and enforces the
    /// ill-defined-effect guard.
    pub fn orient(
        data: &'a TrialDataset,
        opts: &EstimateOptions,
        perturb: Option<&'a [f64]>,
        effect: impl Fn(&Analysis<'_>) -> Result<f64>,
    ) -> Result<Self> {
        let analysis = Analysis::new(data, opts, perturb)?;
        let d = effect(&analysis)?;
        if d.abs() < opts.min_delta || !d.is_finite() {
            return Err(Error::IllDefinedPte { delta: d });
        }
        if opts.orientation == Orientation::Auto && d < 0.0 {
            let flipped = EstimateOptions {
                orientation: Orientation::Swapped,
                ..*opts
            };
            return Analysis::new(data, &flipped, perturb);
        }
        Ok(analysis)
    }

    pub fn data(&self) -> &TrialDataset {
        &self.data
    }

    pub fn options(&self) -> &EstimateOptions {
        &self.opts
    }

    pub fn labels_swapped(&self) -> bool {
        self.swapped
    }

    /// The orientation this analysis ended up with, as a fixed choice.
    pub fn resolved_orientation(&self) -> Orientation {
        if self.swapped {
            Orientation::Swapped
        } else {
            Orientation::AsGiven
        }
    }

    pub fn curves(&self) -> &CensoringCurves {
        &self.curves
    }

    pub fn weights(&self, t: f64) -> Result<WeightVector> {
        ipcw_weights(&self.data, t, &self.curves, self.perturb)
    }

    /// `(mu0(t), mu1(t))`; both equal 1 at `t = 0`.
    pub fn survival_pair(&self, t: f64) -> Result<(f64, f64)> {
        if t == 0.0 {
            return Ok((1.0, 1.0));
        }
        let w = self.weights(t)?;
        Ok((
            weighted_survival(&self.data, Arm::Control, t, &w)?,
            weighted_survival(&self.data, Arm::Treated, t, &w)?,
        ))
    }

    /// `mu1(t) - mu0(t)`.
    pub fn delta(&self, t: f64) -> Result<f64> {
        let (m0, m1) = self.survival_pair(t)?;
        Ok(m1 - m0)
    }

    pub fn landmark(&self, t0: f64) -> Result<LandmarkFit<'_, 'a>> {
        LandmarkFit::new(self, t0)
    }

    /// Ingredients for the primary-outcome-only transformation at `(t, t0)`.
    pub fn primary_only(&self, t: f64, t0: f64) -> Result<PrimaryOnlyTransform> {
        if !(t0 > 0.0 && t >= t0) {
            return Err(Error::Argument(format!(
                "need t >= t0 > 0, got t = {t}, t0 = {t0}"
            )));
        }
        let w0 = self.weights(t0)?;
        let wt = self.weights(t)?;
        let q0 = weighted_survival(&self.data, Arm::Control, t0, &w0)?;
        let q1 = weighted_survival(&self.data, Arm::Treated, t0, &w0)?;
        let mu0 = weighted_survival(&self.data, Arm::Control, t, &wt)?;
        let mu1 = weighted_survival(&self.data, Arm::Treated, t, &wt)?;
        PrimaryOnlyTransform::from_parts(t, t0, mu0, mu1, q0, q1)
    }
}

/// `I(T > t0) g2*` with `g2* = (lambda* P(T0 > t0) + P(T1 > t)) / P(T1 > t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrimaryOnlyTransform {
    pub t: f64,
    pub t0: f64,
    pub lambda: f64,
    pub g2: f64,
    pub mu0_t: f64,
    pub mu1_t: f64,
    pub surv0_t0: f64,
    pub surv1_t0: f64,
}

impl PrimaryOnlyTransform {
    pub fn from_parts(t: f64, t0: f64, mu0: f64, mu1: f64, q0: f64, q1: f64) -> Result<Self> {
        if !(q1 > 0.0) {
            return Err(Error::EmptyStratum {
                stratum: format!("arm 1: X > {t0}"),
                arm0: 0,
                arm1: 0,
            });
        }
        if !(q0 > 0.0) {
            return Err(Error::EmptyStratum {
                stratum: format!("arm 0: X > {t0}"),
                arm0: 0,
                arm1: 0,
            });
        }
        let lambda = (mu0 - q0 * mu1 / q1) / (q0 * q0 / q1);
        let g2 = (lambda * q0 + mu1) / q1;
        Ok(PrimaryOnlyTransform {
            t,
            t0,
            lambda,
            g2,
            mu0_t: mu0,
            mu1_t: mu1,
            surv0_t0: q0,
            surv1_t0: q1,
        })
    }

    /// The treatment effect on the transformed information,
    /// `g2* {P(T1 > t0) - P(T0 > t0)}`.
    pub fn delta_g(&self) -> f64 {
        self.g2 * self.surv1_t0 - self.g2 * self.surv0_t0
    }
}

struct BasisRow {
    index: usize,
    arm: Arm,
    start: usize,
    values: Vec<f64>,
}

/// Everything at landmark `t0` that does not depend on the target time `t`:
/// weights at `t0`, bandwidth, grid, kernel rows of the contributing
/// subjects and the two `t0`-subdensities.
pub struct LandmarkFit<'b, 'a> {
    analysis: &'b Analysis<'a>,
    t0: f64,
    w_t0: WeightVector,
    h: [f64; 2],
    grid: SGrid,
    rows: Vec<BasisRow>,
    f0_t0: Vec<f64>,
    f1_t0: Vec<f64>,
    retained: Vec<bool>,
    tail0_t0: f64,
    tail1_t0: f64,
    surv0_t0: f64,
    surv1_t0: f64,
}

impl<'b, 'a> LandmarkFit<'b, 'a> {
    fn new(analysis: &'b Analysis<'a>, t0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Argument(format!(
                "landmark t0 must be positive, got {t0}"
            )));
        }
        let data = analysis.data();
        let opts = analysis.options();
        let w_t0 = analysis.weights(t0)?;

        let mut counts = [0usize; 2];
        let mut sample: Vec<(usize, Arm, f64, f64)> = Vec::new();
        for (i, r) in data.records().iter().enumerate() {
            if let Some(s) = r.s_time {
                if r.x > t0 && s <= t0 && w_t0.effective[i] > 0.0 {
                    counts[r.arm.index()] += 1;
                    sample.push((i, r.arm, s, w_t0.effective[i]));
                }
            }
        }
        if counts[Arm::Treated.index()] == 0 {
            return Err(Error::EmptyStratum {
                stratum: format!("arm 1: X > {t0} and S <= {t0}"),
                arm0: counts[0],
                arm1: counts[1],
            });
        }

        let h = match opts.bandwidth {
            BandwidthMode::Fixed(h) => [h, h],
            BandwidthMode::Pooled => {
                let (v, w): (Vec<f64>, Vec<f64>) = sample.iter().map(|p| (p.2, p.3)).unzip();
                let h = bandwidth(&v, &w, opts.c0)?;
                [h, h]
            }
            BandwidthMode::PerArm => {
                let mut hs = [0.0; 2];
                for arm in Arm::BOTH {
                    let (v, w): (Vec<f64>, Vec<f64>) = sample
                        .iter()
                        .filter(|p| p.1 == arm)
                        .map(|p| (p.2, p.3))
                        .unzip();
                    hs[arm.index()] = bandwidth(&v, &w, opts.c0)?;
                }
                hs
            }
        };

        let (s_min, s_max) = sample
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.2), hi.max(p.2))
            });
        let lo = s_min.max(GRID_FLOOR);
        let hi = s_max.min(t0);
        if !(hi > lo) {
            return Err(Error::DegenerateSample(format!(
                "surrogate times by t0 = {t0} span no interval"
            )));
        }
        let grid = SGrid::uniform(lo, hi, opts.grid_size)?;

        // Sorting by (s, weight) fixes the summation order.
        sample.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.3.total_cmp(&b.3)));
        let rows = sample
            .iter()
            .map(|&(index, arm, s, _)| kernel_row(index, arm, s, h[arm.index()], &grid))
            .collect::<Vec<_>>();

        let mut f0_t0 = vec![0.0; grid.len()];
        let mut f1_t0 = vec![0.0; grid.len()];
        let totals = [w_t0.arm_total(Arm::Control), w_t0.arm_total(Arm::Treated)];
        for arm in Arm::BOTH {
            if !(totals[arm.index()] > 0.0) {
                return Err(Error::DegenerateArm { arm });
            }
        }
        for row in &rows {
            let target = if row.arm == Arm::Treated {
                &mut f1_t0
            } else {
                &mut f0_t0
            };
            let scale = w_t0.effective[row.index] / totals[row.arm.index()];
            accumulate(target, row, scale);
        }

        let peak = f1_t0.iter().cloned().fold(0.0, f64::max);
        let retained: Vec<bool> = f1_t0
            .iter()
            .map(|&v| v > 0.0 && v >= opts.eps_rel * peak)
            .collect();

        let tail0_t0 = weighted_joint_tail(data, Arm::Control, t0, t0, &w_t0)?;
        let tail1_t0 = weighted_joint_tail(data, Arm::Treated, t0, t0, &w_t0)?;
        if !(tail1_t0 > 0.0) {
            return Err(Error::EmptyStratum {
                stratum: format!("arm 1: X > {t0} and S > {t0}"),
                arm0: counts[0],
                arm1: counts[1],
            });
        }
        let surv0_t0 = weighted_survival(data, Arm::Control, t0, &w_t0)?;
        let surv1_t0 = weighted_survival(data, Arm::Treated, t0, &w_t0)?;

        Ok(LandmarkFit {
            analysis,
            t0,
            w_t0,
            h,
            grid,
            rows,
            f0_t0,
            f1_t0,
            retained,
            tail0_t0,
            tail1_t0,
            surv0_t0,
            surv1_t0,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn bandwidths(&self) -> [f64; 2] {
        self.h
    }

    pub fn grid(&self) -> &SGrid {
        &self.grid
    }

    pub fn weights_t0(&self) -> &WeightVector {
        &self.w_t0
    }

    /// `f_arm(., t0, t0)` on the grid.
    pub fn subdensity_t0(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Control => &self.f0_t0,
            Arm::Treated => &self.f1_t0,
        }
    }

    /// `f1(., t, t0)` on the grid, with weights at `t`.
    pub fn subdensity_treated(&self, t: f64, w_t: &WeightVector) -> Vec<f64> {
        let recs = self.analysis.data().records();
        let total = w_t.arm_total(Arm::Treated);
        let mut f = vec![0.0; self.grid.len()];
        for row in self.rows.iter().filter(|r| r.arm == Arm::Treated) {
            let w = w_t.effective[row.index];
            if recs[row.index].x > t && w > 0.0 {
                accumulate(&mut f, row, w / total);
            }
        }
        f
    }

    /// Fits the optimal transformation for target time `t >= t0`.
    pub fn transform_at(&self, t: f64) -> Result<OptimalTransform> {
        if !(t >= self.t0) {
            return Err(Error::Argument(format!(
                "need t >= t0, got t = {t}, t0 = {}",
                self.t0
            )));
        }
        let analysis = self.analysis;
        let data = analysis.data();
        let w_t = analysis.weights(t)?;
        if !(w_t.arm_total(Arm::Treated) > 0.0) {
            return Err(Error::DegenerateArm { arm: Arm::Treated });
        }
        let f1_t = self.subdensity_treated(t, &w_t);
        let mu0_t = weighted_survival(data, Arm::Control, t, &w_t)?;
        let mu1_t = weighted_survival(data, Arm::Treated, t, &w_t)?;
        let tail1_t = weighted_joint_tail(data, Arm::Treated, t, self.t0, &w_t)?;

        let points = self.grid.points();
        let mut xs = Vec::new();
        let mut ratio_sq = Vec::new();
        let mut ratio_t = Vec::new();
        let (mut int_f0_sq, mut int_f0_f1t) = (0.0, 0.0);
        // Integrate over runs of consecutive retained points.
        let mut flush = |xs: &mut Vec<f64>, a: &mut Vec<f64>, b: &mut Vec<f64>| {
            int_f0_sq += trapezoid(xs, a);
            int_f0_f1t += trapezoid(xs, b);
            xs.clear();
            a.clear();
            b.clear();
        };
        for k in 0..points.len() {
            if self.retained[k] {
                xs.push(points[k]);
                ratio_sq.push(self.f0_t0[k] * self.f0_t0[k] / self.f1_t0[k]);
                ratio_t.push(self.f0_t0[k] * f1_t[k] / self.f1_t0[k]);
            } else {
                flush(&mut xs, &mut ratio_sq, &mut ratio_t);
            }
        }
        flush(&mut xs, &mut ratio_sq, &mut ratio_t);

        let (p0, p1) = (self.tail0_t0, self.tail1_t0);
        let denominator = int_f0_sq + p0 * p0 / p1;
        if !(denominator > 0.0) {
            return Err(Error::EmptyStratum {
                stratum: format!("arm 0: X > {}", self.t0),
                arm0: 0,
                arm1: self.rows.iter().filter(|r| r.arm == Arm::Treated).count(),
            });
        }
        let numerator = mu0_t - int_f0_f1t - p0 * tail1_t / p1;
        let lambda = numerator / denominator;
        let g2 = (lambda * p0 + tail1_t) / p1;

        let mut g_grid = Vec::new();
        let mut g_vals = Vec::new();
        for k in 0..points.len() {
            if self.retained[k] {
                g_grid.push(points[k]);
                g_vals.push((lambda * self.f0_t0[k] + f1_t[k]) / self.f1_t0[k]);
            }
        }
        let truncated = points.len() - g_grid.len();

        let components = TransformComponents {
            mu0_t,
            mu1_t,
            tail0_t0: p0,
            tail1_t0: p1,
            tail1_t,
            surv0_t0: self.surv0_t0,
            surv1_t0: self.surv1_t0,
            int_f0_sq,
            int_f0_f1t,
        };
        let plugin = lambda * int_f0_sq + int_f0_f1t + g2 * p0;
        let mut tr = OptimalTransform {
            lambda,
            g1: GridFunction {
                grid: g_grid,
                values: g_vals,
                meta: GridMeta {
                    arm: Arm::Treated,
                    t,
                    t0: self.t0,
                    h: self.h[Arm::Treated.index()],
                },
            },
            g2,
            fitted_at: FittedAt {
                t,
                t0: self.t0,
                h: self.h,
                grid_lo: self.grid.lo(),
                grid_hi: self.grid.hi(),
                grid_size: self.grid.len(),
            },
            components,
            diagnostics: TransformDiagnostics {
                grid_points: points.len(),
                truncated_points: truncated,
                plugin_residual: (plugin - mu0_t).abs(),
                constraint_residual: 0.0,
                constraint_warning: false,
            },
        };
        let mean0 = self.transformed_mean(&tr, Arm::Control)?;
        tr.diagnostics.constraint_residual = (mean0 - mu0_t).abs();
        tr.diagnostics.constraint_warning =
            tr.diagnostics.constraint_residual > analysis.options().constraint_tol;
        Ok(tr)
    }

    /// `sum w_t0 I(A = arm) g_i / sum w_t0 I(A = arm)`.
    pub fn transformed_mean(&self, tr: &OptimalTransform, arm: Arm) -> Result<f64> {
        let recs = self.analysis.data().records();
        self.w_t0.arm_mean(self.analysis.data(), arm, |i| {
            let r = &recs[i];
            if r.x <= self.t0 {
                0.0
            } else {
                match r.s_time {
                    Some(s) if s <= self.t0 => tr.g1_at(s),
                    _ => tr.g2,
                }
            }
        })
    }

    /// Treatment effect on the transformed surrogate information.
    pub fn delta_g(&self, tr: &OptimalTransform) -> Result<f64> {
        Ok(self.transformed_mean(tr, Arm::Treated)? - self.transformed_mean(tr, Arm::Control)?)
    }
}

fn kernel_row(index: usize, arm: Arm, s: f64, h: f64, grid: &SGrid) -> BasisRow {
    let radius = Gaussian.support_radius() * h;
    let step = grid.step();
    let lo = grid.lo();
    let g = grid.len();
    let first = ((s - radius - lo) / step).ceil().max(0.0);
    let last = ((s + radius - lo) / step).floor();
    if last < 0.0 || first >= g as f64 {
        return BasisRow {
            index,
            arm,
            start: 0,
            values: Vec::new(),
        };
    }
    let start = first as usize;
    let end = (last as usize + 1).min(g);
    // On a uniform grid exp(-u^2 / 2) follows a two-multiplication
    // recurrence in the grid index; starting it fresh every block bounds
    // rounding drift.
    const BLOCK: usize = 32;
    let points = grid.points();
    let d = step / h;
    let decay = (-d * d).exp();
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let mut values = Vec::with_capacity(end - start);
    let (mut value, mut ratio) = (0.0, 0.0);
    for k in start..end {
        if (k - start).is_multiple_of(BLOCK) {
            let u = (s - points[k]) / h;
            value = (-0.5 * u * u).exp();
            ratio = (u * d - 0.5 * d * d).exp();
        } else {
            value *= ratio;
            ratio *= decay;
        }
        values.push(norm * value);
    }
    BasisRow {
        index,
        arm,
        start,
        values,
    }
}

fn accumulate(target: &mut [f64], row: &BasisRow, scale: f64) {
    for (dst, v) in target[row.start..row.start + row.values.len()]
        .iter_mut()
        .zip(&row.values)
    {
        *dst += scale * v;
    }
}

/// Fits the optimal transformation at `(t, t0)` with labels as given.
pub fn estimate_transform(
    data: &TrialDataset,
    t: f64,
    t0: f64,
    opts: &EstimateOptions,
) -> Result<OptimalTransform> {
    check_times(t, t0)?;
    let analysis = Analysis::new(data, opts, None)?;
    analysis.landmark(t0)?.transform_at(t)
}

fn check_times(t: f64, t0: f64) -> Result<()> {
    if !(t0 > 0.0 && t0 <= t && t.is_finite()) {
        return Err(Error::Argument(format!(
            "need 0 < t0 <= t, got t = {t}, t0 = {t0}"
        )));
    }
    Ok(())
}

/// The transformation, its effect and the surrounding analysis, for reuse by
/// the inference layer.
pub(crate) fn full_estimate(
    analysis: &Analysis<'_>,
    t: f64,
    t0: f64,
) -> Result<(PteResult, OptimalTransform)> {
    let fit = analysis.landmark(t0)?;
    let tr = fit.transform_at(t)?;
    let delta = tr.components.mu1_t - tr.components.mu0_t;
    if delta.abs() < analysis.options().min_delta {
        return Err(Error::IllDefinedPte { delta });
    }
    let delta_g = fit.delta_g(&tr)?;
    let mut res = PteResult::new(Variant::Full, t, t0, delta, delta_g);
    res.labels_swapped = analysis.labels_swapped();
    res.lambda = Some(tr.lambda);
    res.g2 = Some(tr.g2);
    res.diagnostics = Some(tr.diagnostics.clone());
    Ok((res, tr))
}

pub(crate) fn ind_estimate(analysis: &Analysis<'_>, t: f64, t0: f64) -> Result<PteResult> {
    let p = analysis.primary_only(t, t0)?;
    let delta = p.mu1_t - p.mu0_t;
    if delta.abs() < analysis.options().min_delta {
        return Err(Error::IllDefinedPte { delta });
    }
    let mut res = PteResult::new(Variant::Ind, t, t0, delta, p.delta_g());
    res.labels_swapped = analysis.labels_swapped();
    res.lambda = Some(p.lambda);
    res.g2 = Some(p.g2);
    Ok(res)
}

/// Proportion of the treatment effect on survival at `t` explained by the
/// optimally transformed surrogate information at `t0`.
pub fn estimate_pte(
    data: &TrialDataset,
    t: f64,
    t0: f64,
    opts: &EstimateOptions,
) -> Result<PteResult> {
    check_times(t, t0)?;
    let analysis = Analysis::orient(data, opts, None, |a| a.delta(t))?;
    Ok(full_estimate(&analysis, t, t0)?.0)
}

/// The same proportion when only survival to `t0` is used.
pub fn estimate_pte_ind(
    data: &TrialDataset,
    t: f64,
    t0: f64,
    opts: &EstimateOptions,
) -> Result<PteResult> {
    check_times(t, t0)?;
    let analysis = Analysis::orient(data, opts, None, |a| a.delta(t))?;
    ind_estimate(&analysis, t, t0)
}

/// Convenience wrapper for a single snapshot-based transform evaluation.
pub fn transform_record(tr: &OptimalTransform, record: &crate::data::SubjectRecord) -> Result<f64> {
    apply_transform(tr, &snapshot(record, tr.fitted_at.t0)?)
}

//! Restricted-mean-survival-time version of the proportion explained.
//!
//! The RMST effect up to `tau` is the integral of the survival-difference
//! curve. Its surrogate-explained part integrates the survival difference
//! over `[0, t0]` and the transformed effect, refitted at every node, over
//! `(t0, tau]`.

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::kernel::trapezoid;
use crate::pte::{Analysis, EstimateOptions, PteResult, Variant};

pub const DEFAULT_STEP_FRACTION: f64 = 0.05;

/// Integration nodes on `[0, tau]` with `t0` always included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    landmark: usize,
}

impl TimeGrid {
    /// Uniform nodes with spacing `step_fraction * tau`, plus `t0`.
    pub fn new(t0: f64, tau: f64, step_fraction: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 <= tau && tau.is_finite()) {
            return Err(Error::Argument(format!(
                "need 0 < t0 <= tau, got t0 = {t0}, tau = {tau}"
            )));
        }
        if !(step_fraction > 0.0 && step_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "time-grid step fraction must be in (0, 1], got {step_fraction}"
            )));
        }
        let steps = (1.0 / step_fraction).round().max(1.0) as usize;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| tau * k as f64 / steps as f64).collect();
        let tol = 1e-9 * tau;
        match nodes.iter().position(|&v| (v - t0).abs() <= tol) {
            Some(k) => nodes[k] = t0,
            None => {
                let k = nodes.partition_point(|&v| v < t0);
                nodes.insert(k, t0);
            }
        }
        *nodes.last_mut().unwrap() = tau;
        let landmark = nodes.iter().position(|&v| v == t0).unwrap();
        Ok(TimeGrid { nodes, landmark })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn early(&self) -> &[f64] {
        &self.nodes[..=self.landmark]
    }

    pub fn late(&self) -> &[f64] {
        &self.nodes[self.landmark..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmstOptions {
    pub base: EstimateOptions,
    pub step_fraction: f64,
}

impl Default for RmstOptions {
    fn default() -> Self {
        RmstOptions {
            base: EstimateOptions::default(),
            step_fraction: DEFAULT_STEP_FRACTION,
        }
    }
}

/// Node values and the pieces of the RMST effects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmstPieces {
    pub nodes: Vec<f64>,
    /// Survival difference at every node.
    pub delta: Vec<f64>,
    /// Transformed effect on the nodes from `t0` on; the `t0` entry is the
    /// survival difference there.
    pub delta_g: Vec<f64>,
    /// `int_0^t0 Delta(t) dt`.
    pub early: f64,
    /// `int_t0^tau Delta(t) dt`.
    pub late_primary: f64,
    /// `int_t0^tau Delta_g(t) dt`.
    pub late_transformed: f64,
}

impl RmstPieces {
    pub fn delta_rmst(&self) -> f64 {
        self.early + self.late_primary
    }

    pub fn delta_g_rmst(&self) -> f64 {
        self.early + self.late_transformed
    }
}

fn node_err(t: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Node {
        t,
        source: Box::new(e),
    }
}

/// RMST effect `int_0^tau Delta(t) dt` on the given grid.
pub fn rmst_effect(analysis: &Analysis<'_>, grid: &TimeGrid) -> Result<f64> {
    let delta = grid
        .nodes()
        .iter()
        .map(|&t| analysis.delta(t).map_err(node_err(t)))
        .collect::<Result<Vec<_>>>()?;
    let k = grid.early().len();
    Ok(trapezoid(grid.early(), &delta[..k]) + trapezoid(grid.late(), &delta[k - 1..]))
}

/// Computes all node values for one variant. `full` selects the kernel
/// transformation; otherwise the primary-outcome-only one.
pub(crate) fn rmst_pieces(
    analysis: &Analysis<'_>,
    grid: &TimeGrid,
    full: bool,
) -> Result<RmstPieces> {
    let nodes = grid.nodes().to_vec();
    let delta = nodes
        .iter()
        .map(|&t| analysis.delta(t).map_err(node_err(t)))
        .collect::<Result<Vec<_>>>()?;
    let late = grid.late();
    let t0 = late[0];
    let k = grid.early().len();

    let mut delta_g = Vec::with_capacity(late.len());
    delta_g.push(delta[k - 1]);
    if full && late.len() > 1 {
        let fit = analysis.landmark(t0).map_err(node_err(t0))?;
        for &t in &late[1..] {
            let tr = fit.transform_at(t).map_err(node_err(t))?;
            delta_g.push(fit.delta_g(&tr).map_err(node_err(t))?);
        }
    } else {
        for &t in &late[1..] {
            let p = analysis.primary_only(t, t0).map_err(node_err(t))?;
            delta_g.push(p.delta_g());
        }
    }

    Ok(RmstPieces {
        early: trapezoid(grid.early(), &delta[..k]),
        late_primary: trapezoid(late, &delta[k - 1..]),
        late_transformed: trapezoid(late, &delta_g),
        nodes,
        delta,
        delta_g,
    })
}

pub(crate) fn rmst_result(
    analysis: &Analysis<'_>,
    grid: &TimeGrid,
    full: bool,
    tau: f64,
) -> Result<(PteResult, RmstPieces)> {
    let pieces = rmst_pieces(analysis, grid, full)?;
    let delta = pieces.delta_rmst();
    if delta.abs() < analysis.options().min_delta {
        return Err(Error::IllDefinedPte { delta });
    }
    let variant = if full {
        Variant::RmstFull
    } else {
        Variant::RmstInd
    };
    let t0 = grid.late()[0];
    let mut res = PteResult::new(variant, tau, t0, delta, pieces.delta_g_rmst());
    res.tau = Some(tau);
    res.labels_swapped = analysis.labels_swapped();
    Ok((res, pieces))
}

fn estimate(
    data: &TrialDataset,
    t0: f64,
    tau: f64,
    opts: &RmstOptions,
    full: bool,
) -> Result<PteResult> {
    let grid = TimeGrid::new(t0, tau, opts.step_fraction)?;
    let analysis = Analysis::orient(data, &opts.base, None, |a| rmst_effect(a, &grid))?;
    Ok(rmst_result(&analysis, &grid, full, tau)?.0)
}

/// RMST proportion explained by the transformed surrogate information.
pub fn estimate_pte_rmst(
    data: &TrialDataset,
    t0: f64,
    tau: f64,
    opts: &RmstOptions,
) -> Result<PteResult> {
    estimate(data, t0, tau, opts, true)
}

/// RMST proportion explained by survival to `t0` alone.
pub fn estimate_pte_rmst_ind(
    data: &TrialDataset,
    t0: f64,
    tau: f64,
    opts: &RmstOptions,
) -> Result<PteResult> {
    estimate(data, t0, tau, opts, false)
}

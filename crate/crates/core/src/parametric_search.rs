//! Exhaustive scan of the statistic line: partition the window into
//! consecutive selection segments and keep the ones reproducing the observed
//! final selection.
//!
//! At each query point the pipeline is refit (warm-started from the previous
//! segment), the segment of that outcome is computed in closed form, and the
//! scan jumps just past its right endpoint. Progress of at least one epsilon
//! step per iteration is guaranteed, and stalls or inconsistencies between
//! the solver and the closed forms abort with diagnostics instead of
//! returning a wrong region.

use serde::{Deserialize, Serialize};

use crate::data_model::{Interval, SelectionTrace, TruncationRegion};
use crate::error::{CoreError, Result};
use crate::inference::LineSlice;
use crate::kkt_regions::{traces_match, Feasibility, RegionAssembler, RegionMatrices};
use crate::pipelines::{FitSettings, PipelineSystem, WarmState};

/// Scan controls. All fields are plain scalars so configurations serialize
/// into run manifests.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Step past a segment endpoint, in units of sigma.
    pub eps_rel: f64,
    /// Hard cap on visited segments.
    pub max_segments: usize,
    /// Consecutive segments thinner than half an epsilon step before the
    /// scan is declared stalled.
    pub thin_stall_limit: usize,
    /// Allowed distance (in units of sigma) between a query point and its
    /// own segment, absorbing solver-tolerance dust at boundaries.
    pub consistency_slack_rel: f64,
    /// Re-fit each segment's midpoint from a cold start and require the same
    /// outcome (slow; a debugging aid).
    pub validate_midpoints: bool,
    /// Solver stationarity tolerance used during the scan.
    pub solver_tol: f64,
    /// Solver sweep cap used during the scan.
    pub solver_max_sweeps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            eps_rel: 1e-6,
            max_segments: 1_000_000,
            thin_stall_limit: 50,
            consistency_slack_rel: 1e-7,
            validate_midpoints: false,
            solver_tol: 1e-8,
            solver_max_sweeps: 100_000,
        }
    }
}

impl SearchOptions {
    pub fn fit_settings(&self) -> FitSettings {
        FitSettings { tol: self.solver_tol, max_sweeps: self.solver_max_sweeps }
    }
}

/// One selection segment encountered during the scan.
#[derive(Debug, Clone)]
pub struct LineSegment {
    /// Segment clipped to the scan window.
    pub interval: Interval,
    /// Does this segment's final selected feature set equal the observed
    /// one? (Stage-wise patterns may differ; the union over all of them is
    /// the conditioning event.)
    pub matches_observed: bool,
    /// The outcome fitted on this segment.
    pub trace: SelectionTrace,
}

/// Scan diagnostics.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SearchStats {
    pub segments_visited: usize,
    pub matching_segments: usize,
    pub gram_factors: usize,
    pub thin_segments: usize,
    /// Probe points whose refit could not resolve a boundary crossing at the
    /// scan tolerance; each is retried one epsilon step further along.
    pub unresolved_steps: usize,
}

/// Full result of a line scan.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Union of the matching segments, adjacent pieces merged.
    pub region: TruncationRegion,
    pub segments: Vec<LineSegment>,
    pub stats: SearchStats,
}

/// The next query point after a segment ending at `endpoint`.
pub fn advance(endpoint: f64, sigma: f64, eps_rel: f64) -> f64 {
    endpoint + eps_rel * sigma
}

/// Scan the whole window and collect every segment.
pub fn divide_and_conquer(
    sys: &PipelineSystem,
    line: &LineSlice,
    observed: &SelectionTrace,
    opts: &SearchOptions,
) -> Result<SweepOutcome> {
    let mut asm = RegionAssembler::new(sys, line);
    let settings = opts.fit_settings();
    // Fallback used when a probe cannot cross a segment boundary at the
    // working tolerance: near-tangential boundaries keep the outgoing
    // pattern's stationarity error below `solver_tol` over a long stretch of
    // the line, so the refit reproduces it; shrinking the tolerance makes the
    // solver feel the violation and cross.
    let tight = FitSettings { tol: settings.tol * 1e-4, ..settings };
    let eps = opts.eps_rel * line.sigma;
    let slack = opts.consistency_slack_rel * line.sigma;
    let (z_min, z_max) = (line.window.lower, line.window.upper);
    let mut segments: Vec<LineSegment> = Vec::new();
    let mut stats = SearchStats::default();
    let mut warm: Option<WarmState> = None;
    let mut thin_run = 0usize;
    let mut stale_run = 0usize;
    let mut tightened = false;
    let mut z = z_min;
    loop {
        if segments.len() >= opts.max_segments {
            return Err(CoreError::Stall {
                segments: segments.len(),
                detail: format!(
                    "segment cap {} reached at z = {z} (window [{z_min}, {z_max}])",
                    opts.max_segments
                ),
            });
        }
        let y = line.response_at(z);
        let trace = sys.fit(&y, warm.as_ref(), if tightened { &tight } else { &settings })?;
        warm = Some(WarmState::from_trace(&trace));
        let (feas, _mats) = asm.segment_for(&trace)?;
        let iv = match feas {
            Feasibility::Feasible(iv) => iv,
            Feasibility::Infeasible => {
                return Err(CoreError::inconsistency(format!(
                    "outcome fitted at z = {z} has an infeasible segment system"
                )))
            }
        };
        if iv.upper + slack < z {
            // Just past a boundary the previous pattern's stationarity error is
            // still below the solver tolerance, so the refit reproduces the old
            // outcome and its segment ends before the probe. Step forward until
            // the accumulated violation forces the solver across; the skipped
            // sliver is below scan resolution.
            stats.unresolved_steps += 1;
            stale_run += 1;
            if stale_run > opts.thin_stall_limit {
                return Err(CoreError::Stall {
                    segments: segments.len(),
                    detail: format!(
                        "{stale_run} consecutive probes around z = {z} could not cross a \
                         segment boundary at solver tolerance {:.1e}",
                        opts.solver_tol
                    ),
                });
            }
            if !tightened {
                // Refit the same point at the tighter tolerance first.
                tightened = true;
                continue;
            }
            z = advance(z, line.sigma, opts.eps_rel);
            if z > z_max {
                break;
            }
            continue;
        }
        if z < iv.lower - slack {
            // Mirror case: the refit jumped past the probe onto the next
            // pattern, whose segment starts a whisker ahead. A gap of a few
            // probe steps is below scan resolution (segments thinner than a
            // step are not promised); anything larger is a real inconsistency.
            if iv.lower - z > 16.0 * eps {
                return Err(CoreError::inconsistency(format!(
                    "query point {z} lies outside its own segment [{}, {}] beyond slack \
                     {slack:.3e}",
                    iv.lower, iv.upper
                )));
            }
            stats.unresolved_steps += 1;
        }
        stale_run = 0;
        tightened = false;
        if opts.validate_midpoints {
            let clipped_lo = iv.lower.max(z_min);
            let clipped_hi = iv.upper.min(z_max);
            if clipped_hi - clipped_lo > 2.0 * eps {
                let mid = 0.5 * (clipped_lo + clipped_hi);
                let cold = sys.fit(&line.response_at(mid), None, &settings)?;
                if !traces_match(&cold, &trace) {
                    return Err(CoreError::inconsistency(format!(
                        "cold refit at segment midpoint {mid} produced a different outcome"
                    )));
                }
            }
        }
        let clip_lo = iv.lower.clamp(z_min, z_max);
        let clip_hi = iv.upper.clamp(z_min, z_max);
        let interval = Interval::new(clip_lo, clip_hi).expect("clamped endpoints are ordered");
        // The conditioning event for the selective p-value is "the pipeline
        // selects this exact feature set", so a segment contributes whenever
        // its final selection agrees with the observed one — every stage-wise
        // pattern reproducing that selection is part of the union. The full
        // pattern equality is reserved for the over-conditioned variant.
        let matches = trace.selected == observed.selected;
        if matches {
            stats.matching_segments += 1;
        }
        segments.push(LineSegment { interval, matches_observed: matches, trace });
        if iv.width() < 0.5 * eps {
            stats.thin_segments += 1;
            thin_run += 1;
            if thin_run > opts.thin_stall_limit {
                return Err(CoreError::Stall {
                    segments: segments.len(),
                    detail: format!(
                        "{thin_run} consecutive near-degenerate segments around z = {z}"
                    ),
                });
            }
        } else {
            thin_run = 0;
        }
        if iv.upper >= z_max {
            break;
        }
        let z_next = advance(iv.upper.max(z), line.sigma, opts.eps_rel);
        if z_next > z_max {
            break; // remaining sliver is thinner than one step
        }
        z = z_next;
    }
    stats.segments_visited = segments.len();
    stats.gram_factors = asm.cached_factors();
    let matching: Vec<Interval> = segments
        .iter()
        .filter(|s| s.matches_observed)
        .map(|s| s.interval)
        .collect();
    let region = TruncationRegion::from_intervals(matching, 2.0 * eps);
    Ok(SweepOutcome { region, segments, stats })
}

/// The single segment of the observed outcome, for conditioning on the whole
/// outcome rather than on the selection event alone. Returns the unclipped
/// segment and the closed forms on it.
pub fn region_at(
    sys: &PipelineSystem,
    line: &LineSlice,
    observed: &SelectionTrace,
    opts: &SearchOptions,
) -> Result<(TruncationRegion, RegionMatrices)> {
    let mut asm = RegionAssembler::new(sys, line);
    let (feas, mats) = asm.segment_for(observed)?;
    let iv = match feas {
        Feasibility::Feasible(iv) => iv,
        Feasibility::Infeasible => {
            return Err(CoreError::inconsistency(
                "observed outcome has an infeasible segment system",
            ))
        }
    };
    let slack = opts.consistency_slack_rel * line.sigma;
    if !iv.contains(line.z_obs, slack) {
        return Err(CoreError::inconsistency(format!(
            "observed statistic {} outside its own segment [{}, {}]",
            line.z_obs, iv.lower, iv.upper
        )));
    }
    Ok((TruncationRegion { intervals: vec![iv] }, mats))
}

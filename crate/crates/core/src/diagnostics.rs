//! Front-quality and grid-orientation metrics: level-crossing extraction,
//! circularity, inter-scheme discrepancy, front width, overshoot and
//! mass-balance audits.

use crate::error::{Result, SimError};
use crate::grid::{d4_map, CellField, GridSpec};

/// Ordered level crossings of the saturation field along grid lines.
#[derive(Debug, Clone)]
pub struct FrontCurve {
    pub points: Vec<(f64, f64)>,
    pub level: f64,
}

/// Level crossings of `S` along x- and y-grid lines, linearly interpolated
/// between bracketing active cell centers. Row scans come first, then column
/// scans, each in index order, so the list is deterministic.
pub fn extract_front(grid: &GridSpec, s: &CellField, level: f64) -> Result<FrontCurve> {
    let mut points = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx - 1 {
            if !grid.is_active(i, j) || !grid.is_active(i + 1, j) {
                continue;
            }
            let a = s.get(i, j) - level;
            let b = s.get(i + 1, j) - level;
            if a * b <= 0.0 && a != b {
                let t = a / (a - b);
                let (x0, y0) = grid.cell_center(i, j);
                points.push((x0 + t * grid.dx, y0));
            }
        }
    }
    for i in 0..grid.nx {
        for j in 0..grid.ny - 1 {
            if !grid.is_active(i, j) || !grid.is_active(i, j + 1) {
                continue;
            }
            let a = s.get(i, j) - level;
            let b = s.get(i, j + 1) - level;
            if a * b <= 0.0 && a != b {
                let t = a / (a - b);
                let (x0, y0) = grid.cell_center(i, j);
                points.push((x0, y0 + t * grid.dy));
            }
        }
    }
    if points.is_empty() {
        return Err(SimError::EmptyFront(format!(
            "no crossing of level {level} on the active region"
        )));
    }
    Ok(FrontCurve { points, level })
}

/// Shape measure of a front about a center: population standard deviation of
/// the point radii divided by their mean. Zero for a perfect circle.
pub fn circularity(front: &FrontCurve, center: (f64, f64)) -> Result<f64> {
    if front.points.is_empty() {
        return Err(SimError::EmptyFront("circularity of an empty front".into()));
    }
    let radii: Vec<f64> = front
        .points
        .iter()
        .map(|&(x, y)| ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt())
        .collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    if mean == 0.0 {
        return Err(SimError::InvalidInput("front has zero mean radius".into()));
    }
    let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / radii.len() as f64;
    Ok(var.sqrt() / mean)
}

/// Mean radius of the front points about a center.
pub fn mean_front_radius(front: &FrontCurve, center: (f64, f64)) -> f64 {
    let sum: f64 = front
        .points
        .iter()
        .map(|&(x, y)| ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt())
        .sum();
    sum / front.points.len() as f64
}

/// Cell-averaged L1 distance between two saturation fields on the same grid:
/// `sum |a - b| dV / sum dV` over active cells.
pub fn scheme_discrepancy(grid: &GridSpec, s_a: &CellField, s_b: &CellField) -> Result<f64> {
    if !s_a.same_shape(s_b) || s_a.nx != grid.nx || s_a.ny != grid.ny {
        return Err(SimError::GridMismatch("discrepancy needs fields on one grid".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, j) in grid.active_cells() {
        sum += (s_a.get(i, j) - s_b.get(i, j)).abs();
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Bilinear sample of a cell-centered field at an arbitrary point (clamped to
/// the cell-center lattice).
fn sample_bilinear(grid: &GridSpec, s: &CellField, x: f64, y: f64) -> f64 {
    let fx = ((x - grid.origin.0) / grid.dx - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let fy = ((y - grid.origin.1) / grid.dy - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let i0 = (fx.floor() as usize).min(grid.nx - 2);
    let j0 = (fy.floor() as usize).min(grid.ny - 2);
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let v00 = s.get(i0, j0);
    let v10 = s.get(i0 + 1, j0);
    let v01 = s.get(i0, j0 + 1);
    let v11 = s.get(i0 + 1, j0 + 1);
    v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
}

/// Distance along a ray between the crossings of two saturation levels
/// (default `(0.9, 0.1)`), a sharpness measure of a front profile that falls
/// from ~1 near the origin to ~0 far away.
pub fn front_width(
    grid: &GridSpec,
    s: &CellField,
    origin: (f64, f64),
    direction: (f64, f64),
    levels: (f64, f64),
) -> Result<f64> {
    let norm = (direction.0 * direction.0 + direction.1 * direction.1).sqrt();
    if !(norm > 0.0) {
        return Err(SimError::InvalidInput("front width needs a nonzero direction".into()));
    }
    let (ux, uy) = (direction.0 / norm, direction.1 / norm);
    let (hi, lo) = levels;
    if !(hi > lo) {
        return Err(SimError::InvalidInput(format!(
            "front width needs levels hi > lo, got ({hi}, {lo})"
        )));
    }
    let step = 0.25 * grid.dx.min(grid.dy);
    let max_range = (grid.nx as f64 * grid.dx).hypot(grid.ny as f64 * grid.dy);
    let n_steps = (max_range / step).ceil() as usize;

    let mut pos_hi = None;
    let mut pos_lo = None;
    let mut prev = sample_bilinear(grid, s, origin.0, origin.1);
    let mut prev_r = 0.0;
    for k in 1..=n_steps {
        let r = k as f64 * step;
        let value = sample_bilinear(grid, s, origin.0 + r * ux, origin.1 + r * uy);
        if pos_hi.is_none() && prev >= hi && value < hi {
            pos_hi = Some(prev_r + step * (prev - hi) / (prev - value));
        }
        if pos_hi.is_some() && pos_lo.is_none() && prev >= lo && value < lo {
            pos_lo = Some(prev_r + step * (prev - lo) / (prev - value));
            break;
        }
        prev = value;
        prev_r = r;
    }
    match (pos_hi, pos_lo) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(SimError::MissingCrossing(format!(
            "profile never crosses levels ({hi}, {lo}) along the ray"
        ))),
    }
}

/// Worst deviation of the field from its own image under the 8 square-grid
/// symmetries, over active cells. `None` when the grid or mask is not square
/// symmetric (the measure is undefined there).
pub fn d4_asymmetry(grid: &GridSpec, s: &CellField) -> Option<f64> {
    if grid.nx != grid.ny || !grid.mask_is_d4_symmetric() {
        return None;
    }
    let n = grid.nx;
    let mut worst = 0.0f64;
    for t in 1..8 {
        for (i, j) in grid.active_cells() {
            let (ti, tj) = d4_map(n, t, i, j);
            worst = worst.max((s.get(i, j) - s.get(ti, tj)).abs());
        }
    }
    Some(worst)
}

/// Overshoot above 1 and undershoot below 0 of the saturation field.
pub fn overshoot(grid: &GridSpec, s: &CellField) -> (f64, f64) {
    let mut above = 0.0f64;
    let mut below = 0.0f64;
    for (i, j) in grid.active_cells() {
        above = above.max(s.get(i, j) - 1.0);
        below = below.max(-s.get(i, j));
    }
    (above.max(0.0), below.max(0.0))
}

/// Aggregated front-quality report for one run.
#[derive(Debug, Clone)]
pub struct GoeReport {
    pub circularity: f64,
    pub radius_mean: f64,
    pub radius_analytic: f64,
    pub overshoot: f64,
    pub undershoot: f64,
    /// Largest per-step relative mass-balance residual seen during the run.
    pub mass_residual_max: f64,
    /// Largest per-cell pressure flux imbalance seen during the run.
    pub flux_imbalance_max: f64,
    /// Front width along the +x ray at levels (0.9, 0.1), when defined.
    pub front_width_x: Option<f64>,
    /// D4 asymmetry of the final field, when the configuration is symmetric.
    pub d4_asymmetry: Option<f64>,
    /// Filled by sweep aggregation when the paired scheme's run exists.
    pub scheme_discrepancy_l1: Option<f64>,
}

impl GoeReport {
    /// One `name = value` line per metric.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("circularity = {}", self.circularity),
            format!("radius_mean = {}", self.radius_mean),
            format!("radius_analytic = {}", self.radius_analytic),
            format!("overshoot = {}", self.overshoot),
            format!("undershoot = {}", self.undershoot),
            format!("mass_residual_max = {}", self.mass_residual_max),
            format!("flux_imbalance_max = {}", self.flux_imbalance_max),
        ];
        if let Some(w) = self.front_width_x {
            out.push(format!("front_width_x = {w}"));
        }
        if let Some(a) = self.d4_asymmetry {
            out.push(format!("d4_asymmetry = {a}"));
        }
        if let Some(d) = self.scheme_discrepancy_l1 {
            out.push(format!("scheme_discrepancy_l1 = {d}"));
        }
        out
    }
}

/// Build the report for a final saturation field.
pub fn audit(
    grid: &GridSpec,
    s: &CellField,
    injector: (f64, f64),
    radius_analytic: f64,
    mass_residual_max: f64,
    flux_imbalance_max: f64,
) -> Result<GoeReport> {
    let front = extract_front(grid, s, 0.5)?;
    let (over, under) = overshoot(grid, s);
    let width = front_width(grid, s, injector, (1.0, 0.0), (0.9, 0.1)).ok();
    Ok(GoeReport {
        circularity: circularity(&front, injector)?,
        radius_mean: mean_front_radius(&front, injector),
        radius_analytic,
        overshoot: over,
        undershoot: under,
        mass_residual_max,
        flux_imbalance_max,
        front_width_x: width,
        d4_asymmetry: d4_asymmetry(grid, s),
        scheme_discrepancy_l1: None,
    })
}

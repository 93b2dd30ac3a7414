//! Explicit saturation transport: upwind advection of `f = u F`, `g = v F` plus
//! the adaptive artificial viscosity term `C div(eps grad S)`.
//!
//! The weak local residual (WLR) `E` lives on cell corners and is evaluated on
//! corner-sampled data (four-cell averages for `S`, two-face averages for the
//! advective fluxes), which keeps the indicator centered on its corner: the
//! whole viscosity path then commutes with the square-grid symmetries. Face
//! diffusivities take the maximum `|E|` over the six corners flanking the face,
//! and the global coefficient `C = (dx^2 + dy^2) / (alpha dt eps_max)` caps the
//! diffusive stability number at `(1 + (dy/dx)^2) / alpha` by construction.

use crate::error::{Result, SimError};
use crate::flux::FluidModel;
use crate::grid::{CellField, CornerField, FaceField, GridSpec};
use crate::pressure::{WellKind, WellSpec};

/// Coefficient of the time-step power law `dt = 33.5 dx^3.3`.
pub const DT_COEFF: f64 = 33.5;
/// Exponent of the time-step power law.
pub const DT_EXPONENT: f64 = 3.3;

/// Adaptive-viscosity configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityConfig {
    pub enabled: bool,
    /// Safety factor in the coefficient formula; 4 is the conservative choice,
    /// the experiment presets use 67/400 (radial) and 7/40 (five-spot).
    pub alpha: f64,
    /// Fixed coefficient override for tests; bypasses the eps_max formula.
    pub c_override: Option<f64>,
}

impl ViscosityConfig {
    pub fn off() -> Self {
        ViscosityConfig { enabled: false, alpha: 4.0, c_override: None }
    }

    pub fn on(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(SimError::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        Ok(ViscosityConfig { enabled: true, alpha, c_override: None })
    }
}

/// Snapshot of one completed time level: the saturation, the advective face
/// fluxes that produced it, and the step size that led to it.
#[derive(Debug, Clone)]
pub struct PrevLevel {
    pub s: CellField,
    pub flux: FaceField,
    pub dt: f64,
}

/// Transport state across the IMPES loop. `prev` is empty until the first step
/// completes; the WLR is defined only once two levels exist.
#[derive(Debug, Clone)]
pub struct TransportState {
    pub t: f64,
    pub step: u64,
    pub s: CellField,
    pub prev: Option<PrevLevel>,
}

impl TransportState {
    pub fn new(s0: CellField) -> Self {
        TransportState { t: 0.0, step: 0, s: s0, prev: None }
    }

    /// Rotate the state after an accepted step.
    pub fn advanced(self, s_next: CellField, flux: FaceField, dt: f64) -> Self {
        TransportState {
            t: self.t + dt,
            step: self.step + 1,
            s: s_next,
            prev: Some(PrevLevel { s: self.s, flux, dt }),
        }
    }

    /// The two time levels the WLR consumes, with `flux_new` computed for the
    /// current level by the caller. Errors before the first step completes.
    pub fn wlr_levels<'a>(&'a self, flux_new: &'a FaceField) -> Result<WlrLevels<'a>> {
        match &self.prev {
            Some(prev) => Ok(WlrLevels {
                s_new: &self.s,
                s_old: &prev.s,
                flux_new,
                flux_old: &prev.flux,
            }),
            None => Err(SimError::MissingPreviousLevel),
        }
    }
}

/// Borrowed pair of time levels for the WLR evaluation.
#[derive(Debug, Clone, Copy)]
pub struct WlrLevels<'a> {
    pub s_new: &'a CellField,
    pub s_old: &'a CellField,
    pub flux_new: &'a FaceField,
    pub flux_old: &'a FaceField,
}

/// Upwind advective face flux `f = u F(S_up)`: the upstream cell is the one the
/// velocity points away from; cells outside the active region carry `S = 0`.
pub fn upwind_face_flux(
    grid: &GridSpec,
    s: &CellField,
    vel: &FaceField,
    model: &FluidModel,
) -> FaceField {
    let (nx, ny) = (grid.nx, grid.ny);
    let s_at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            return 0.0;
        }
        let (i, j) = (i as usize, j as usize);
        if grid.is_active(i, j) {
            s.get(i, j)
        } else {
            0.0
        }
    };
    let mut flux = FaceField::zeros(grid);
    for j in 0..ny {
        for fi in 0..=nx {
            let u = vel.x[grid.x_face(fi, j)];
            if u == 0.0 {
                continue;
            }
            let s_up = if u > 0.0 {
                s_at(fi as isize - 1, j as isize)
            } else {
                s_at(fi as isize, j as isize)
            };
            flux.x[grid.x_face(fi, j)] = u * model.fractional_flow(s_up);
        }
    }
    for fj in 0..=ny {
        for i in 0..nx {
            let v = vel.y[grid.y_face(i, fj)];
            if v == 0.0 {
                continue;
            }
            let s_up = if v > 0.0 {
                s_at(i as isize, fj as isize - 1)
            } else {
                s_at(i as isize, fj as isize)
            };
            flux.y[grid.y_face(i, fj)] = v * model.fractional_flow(s_up);
        }
    }
    flux
}

/// Corner samples of a cell field over the padded corner lattice
/// `(-1..=nx+1) x (-1..=ny+1)`: average of the four adjacent cells, with
/// out-of-mask cells constant-extrapolated by the grid's nearest-active rule.
fn corner_sample_cells(grid: &GridSpec, field: &CellField) -> Vec<f64> {
    let w = grid.nx + 3;
    let mut out = vec![0.0; w * (grid.ny + 3)];
    for cj in -1..=(grid.ny as isize + 1) {
        for ci in -1..=(grid.nx as isize + 1) {
            let v = 0.25
                * (grid.extended_value(field, ci - 1, cj - 1)
                    + grid.extended_value(field, ci, cj - 1)
                    + grid.extended_value(field, ci - 1, cj)
                    + grid.extended_value(field, ci, cj));
            out[(cj + 1) as usize * w + (ci + 1) as usize] = v;
        }
    }
    out
}

/// Corner samples of the x-flux: average of the two x-faces meeting the corner
/// (indices clamped at the lattice edge).
fn corner_sample_x_flux(grid: &GridSpec, flux: &FaceField) -> Vec<f64> {
    let w = grid.nx + 3;
    let mut out = vec![0.0; w * (grid.ny + 3)];
    for cj in -1..=(grid.ny as isize + 1) {
        for ci in -1..=(grid.nx as isize + 1) {
            let fi = ci.clamp(0, grid.nx as isize) as usize;
            let jb = (cj - 1).clamp(0, grid.ny as isize - 1) as usize;
            let jt = cj.clamp(0, grid.ny as isize - 1) as usize;
            out[(cj + 1) as usize * w + (ci + 1) as usize] =
                0.5 * (flux.x[grid.x_face(fi, jb)] + flux.x[grid.x_face(fi, jt)]);
        }
    }
    out
}

/// Corner samples of the y-flux: average of the two y-faces meeting the corner.
fn corner_sample_y_flux(grid: &GridSpec, flux: &FaceField) -> Vec<f64> {
    let w = grid.nx + 3;
    let mut out = vec![0.0; w * (grid.ny + 3)];
    for cj in -1..=(grid.ny as isize + 1) {
        for ci in -1..=(grid.nx as isize + 1) {
            let fj = cj.clamp(0, grid.ny as isize) as usize;
            let il = (ci - 1).clamp(0, grid.nx as isize - 1) as usize;
            let ir = ci.clamp(0, grid.nx as isize - 1) as usize;
            out[(cj + 1) as usize * w + (ci + 1) as usize] =
                0.5 * (flux.y[grid.y_face(il, fj)] + flux.y[grid.y_face(ir, fj)]);
        }
    }
    out
}

/// Weak local residual at every corner, from two time levels separated by `dt`:
///
/// `E = dx dy / (36 D) * U + dt / (12 D) * (dy * F + dx * G)`, `D = max(dt, dx, dy)`,
///
/// where `U` is the (1,4,16)-weighted time difference of `S` over the 3x3
/// corner block and `F`, `G` are (1,4,1)-transverse-weighted central
/// differences of the advective fluxes spanning `2 dx` (resp. `2 dy`), summed
/// over both time levels.
pub fn compute_wlr(grid: &GridSpec, levels: WlrLevels<'_>, dt: f64) -> CornerField {
    let s_new = corner_sample_cells(grid, levels.s_new);
    let s_old = corner_sample_cells(grid, levels.s_old);
    let f_new = corner_sample_x_flux(grid, levels.flux_new);
    let f_old = corner_sample_x_flux(grid, levels.flux_old);
    let g_new = corner_sample_y_flux(grid, levels.flux_new);
    let g_old = corner_sample_y_flux(grid, levels.flux_old);

    let w = grid.nx + 3;
    let big_delta = dt.max(grid.dx).max(grid.dy);
    let u_scale = grid.dx * grid.dy / (36.0 * big_delta);
    let f_scale = grid.dy * dt / (12.0 * big_delta);
    let g_scale = grid.dx * dt / (12.0 * big_delta);
    const WEIGHT: [f64; 3] = [1.0, 4.0, 1.0];

    let mut e = CornerField::zeros(grid);
    for cj in 0..=grid.ny {
        for ci in 0..=grid.nx {
            let p = (cj + 1) * w + ci + 1;
            let mut u_term = 0.0;
            let mut f_term = 0.0;
            let mut g_term = 0.0;
            for db in 0..3usize {
                let row = p + db * w - w;
                for da in 0..3usize {
                    let q = row + da - 1;
                    u_term += WEIGHT[da] * WEIGHT[db] * (s_new[q] - s_old[q]);
                }
                f_term += WEIGHT[db]
                    * ((f_new[row + 1] - f_new[row - 1]) + (f_old[row + 1] - f_old[row - 1]));
                let col = p + db - 1;
                g_term += WEIGHT[db]
                    * ((g_new[col + w] - g_new[col - w]) + (g_old[col + w] - g_old[col - w]));
            }
            e.set(ci, cj, u_scale * u_term + f_scale * f_term + g_scale * g_term);
        }
    }
    e
}

/// Face diffusivities: `eps` on a face is the maximum `|E|` over the six
/// corners flanking it (the face's two endpoints and their neighbors along the
/// face direction). Nonnegative by construction.
pub fn epsilon_faces(grid: &GridSpec, e: &CornerField) -> FaceField {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut eps = FaceField::zeros(grid);
    for j in 0..ny {
        for fi in 0..=nx {
            let mut m = 0.0f64;
            for cj in [j, j + 1] {
                for di in -1isize..=1 {
                    let ci = fi as isize + di;
                    if ci >= 0 && ci <= nx as isize {
                        m = m.max(e.get(ci as usize, cj).abs());
                    }
                }
            }
            eps.x[grid.x_face(fi, j)] = m;
        }
    }
    for fj in 0..=ny {
        for i in 0..nx {
            let mut m = 0.0f64;
            for ci in [i, i + 1] {
                for dj in -1isize..=1 {
                    let cj = fj as isize + dj;
                    if cj >= 0 && cj <= ny as isize {
                        m = m.max(e.get(ci, cj as usize).abs());
                    }
                }
            }
            eps.y[grid.y_face(i, fj)] = m;
        }
    }
    eps
}

/// Viscosity coefficient `C = (dx^2 + dy^2) / (alpha dt eps_max)`; zero when
/// `eps_max` is zero (a smooth field needs no viscosity and the product
/// `C * eps` vanishes identically).
pub fn viscosity_coefficient(eps_max: f64, grid: &GridSpec, dt: f64, alpha: f64) -> f64 {
    if eps_max > 0.0 {
        (grid.dx * grid.dx + grid.dy * grid.dy) / (alpha * dt * eps_max)
    } else {
        0.0
    }
}

/// Time-step power law `dt = 33.5 dx^3.3` (before the CFL cap).
pub fn time_step(dx: f64) -> f64 {
    DT_COEFF * dx.powf(DT_EXPONENT)
}

/// Advective stability bound: the smallest `phi dx / (|u| max|F'|)` over all
/// faces. Infinite for a still velocity field.
pub fn cfl_limit(grid: &GridSpec, vel: &FaceField, model: &FluidModel, phi: f64) -> f64 {
    let lf = model.flux_derivative_bound();
    let mut limit = f64::INFINITY;
    for &u in &vel.x {
        if u != 0.0 {
            limit = limit.min(phi * grid.dx / (u.abs() * lf));
        }
    }
    for &v in &vel.y {
        if v != 0.0 {
            limit = limit.min(phi * grid.dy / (v.abs() * lf));
        }
    }
    limit
}

/// Exact per-step mass bookkeeping (all terms in pore-volume units).
#[derive(Debug, Clone, Copy)]
pub struct StepBalance {
    pub mass_before: f64,
    pub mass_after: f64,
    /// Injected water: well source terms plus the injector-pin adjustment.
    pub injected: f64,
    /// Water withdrawn by pressure-controlled producers.
    pub produced: f64,
    /// Net advective outflux through the active-region boundary.
    pub boundary_outflux: f64,
    /// `|d(mass) - (injected - produced - outflux)|` relative to the step scale.
    pub residual_rel: f64,
}

/// Water mass (pore volume) on the active cells.
pub fn water_mass(grid: &GridSpec, s: &CellField, phi: f64) -> f64 {
    let v = grid.cell_volume();
    grid.active_cells().map(|(i, j)| phi * v * s.get(i, j)).sum()
}

/// One conservative explicit saturation step.
///
/// `flux` must be the upwinded advective flux for `vel`; `eps`/`c_coeff` add
/// the viscous term on interior faces (the front never reaches the mask
/// boundary in the supported scenarios, so no viscous flux crosses it).
/// Injector cells receive their source and are pinned to `S = 1`; producers
/// lose water at `F(S) q_prod`. The time step is validated against the
/// advective CFL bound, not silently clamped. No clamping of `S` to `[0, 1]`:
/// over/undershoots are the oscillations under study and are reported, not
/// masked.
#[allow(clippy::too_many_arguments)]
pub fn advance(
    grid: &GridSpec,
    model: &FluidModel,
    s: &CellField,
    vel: &FaceField,
    flux: &FaceField,
    eps: Option<&FaceField>,
    c_coeff: f64,
    dt: f64,
    phi: f64,
    wells: &[WellSpec],
    producer_rates: &[f64],
) -> Result<(CellField, StepBalance)> {
    if !(dt > 0.0) {
        return Err(SimError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let limit = cfl_limit(grid, vel, model, phi);
    if dt > limit * (1.0 + 1e-9) {
        return Err(SimError::CflViolation { dt, limit });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx, dy) = (grid.dx, grid.dy);
    let cell_v = grid.cell_volume();
    let mass_before = water_mass(grid, s, phi);

    let mut new = s.clone();
    let viscous = eps.filter(|_| c_coeff != 0.0);
    for (i, j) in grid.active_cells() {
        let adv = (flux.x[grid.x_face(i + 1, j)] - flux.x[grid.x_face(i, j)]) / dx
            + (flux.y[grid.y_face(i, j + 1)] - flux.y[grid.y_face(i, j)]) / dy;
        let mut rate = -adv;
        if let Some(eps) = viscous {
            let s_c = s.get(i, j);
            let gx_e = if i + 1 < nx && grid.is_active(i + 1, j) {
                eps.x[grid.x_face(i + 1, j)] * (s.get(i + 1, j) - s_c) / dx
            } else {
                0.0
            };
            let gx_w = if i > 0 && grid.is_active(i - 1, j) {
                eps.x[grid.x_face(i, j)] * (s_c - s.get(i - 1, j)) / dx
            } else {
                0.0
            };
            let gy_n = if j + 1 < ny && grid.is_active(i, j + 1) {
                eps.y[grid.y_face(i, j + 1)] * (s.get(i, j + 1) - s_c) / dy
            } else {
                0.0
            };
            let gy_s = if j > 0 && grid.is_active(i, j - 1) {
                eps.y[grid.y_face(i, j)] * (s_c - s.get(i, j - 1)) / dy
            } else {
                0.0
            };
            rate += c_coeff * ((gx_e - gx_w) / dx + (gy_n - gy_s) / dy);
        }
        let c = grid.cell(i, j);
        new.data[c] = s.data[c] + dt / phi * rate;
    }

    let mut injected = 0.0;
    let mut produced = 0.0;
    for (k, well) in wells.iter().enumerate() {
        let c = grid.cell(well.cell.0, well.cell.1);
        match well.kind {
            WellKind::RateInjector { q } => {
                new.data[c] += dt * q / (phi * cell_v);
                injected += dt * q;
            }
            WellKind::PressureProducer { .. } => {
                let rate = producer_rates.get(k).copied().unwrap_or(0.0);
                let withdrawn = dt * rate * model.fractional_flow(s.data[c]);
                new.data[c] -= withdrawn / (phi * cell_v);
                produced += withdrawn;
            }
        }
    }
    for well in wells {
        if let WellKind::RateInjector { .. } = well.kind {
            let c = grid.cell(well.cell.0, well.cell.1);
            injected += phi * cell_v * (1.0 - new.data[c]);
            new.data[c] = 1.0;
        }
    }

    // Net advective outflux through faces between active and non-active cells
    // (the viscous flux across them is zero by construction).
    let mut boundary_outflux = 0.0;
    let active = |i: isize, j: isize| -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && grid.is_active(i as usize, j as usize)
    };
    for j in 0..ny {
        for fi in 0..=nx {
            let f = flux.x[grid.x_face(fi, j)];
            if f == 0.0 {
                continue;
            }
            let left = active(fi as isize - 1, j as isize);
            let right = active(fi as isize, j as isize);
            if left && !right {
                boundary_outflux += f * dy * dt;
            } else if !left && right {
                boundary_outflux -= f * dy * dt;
            }
        }
    }
    for fj in 0..=ny {
        for i in 0..nx {
            let g = flux.y[grid.y_face(i, fj)];
            if g == 0.0 {
                continue;
            }
            let below = active(i as isize, fj as isize - 1);
            let above = active(i as isize, fj as isize);
            if below && !above {
                boundary_outflux += g * dx * dt;
            } else if !below && above {
                boundary_outflux -= g * dx * dt;
            }
        }
    }

    let mass_after = water_mass(grid, &new, phi);
    let residual = (mass_after - mass_before) - (injected - produced - boundary_outflux);
    let scale = mass_after
        .abs()
        .max(mass_before.abs())
        .max(injected.abs())
        .max(produced.abs())
        .max(boundary_outflux.abs())
        .max(1e-300);
    let balance = StepBalance {
        mass_before,
        mass_after,
        injected,
        produced,
        boundary_outflux,
        residual_rel: residual.abs() / scale,
    };
    Ok((new, balance))
}

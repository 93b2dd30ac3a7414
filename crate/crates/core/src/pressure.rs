//! Elliptic pressure equation `div(lambda_T grad P) = 0` with wells and
//! Dirichlet cells, discretized with the five-point or nine-point stencil, and
//! Darcy reconstruction of face velocities.
//!
//! The nine-point operator is the convex combination of the axial five-point
//! stencil and the pi/4-rotated diagonal five-point stencil; for square cells
//! the weights are 2/3 axial and 1/3 diagonal, giving face transmissibilities
//! `(2/3) lambda dy/dx` and diagonal transmissibilities `lambda_avg / 6`.

use crate::error::{Result, SimError};
use crate::flux::FluidModel;
use crate::grid::{CellField, FaceField, GridSpec};
use crate::mgrid::{solve_once, solve_pcg, Preconditioner, StencilOp};

pub use crate::mgrid::SolveStats;

/// Stencil selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StencilKind {
    FivePoint,
    NinePoint,
}

/// Pressure scheme: stencil plus the diagonal weight of the 9P combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    pub kind: StencilKind,
    /// Weight of the diagonal five-point component (1/3 for the standard 9P
    /// construction on square cells; exposed for sensitivity studies).
    pub diagonal_weight: f64,
}

impl Scheme {
    pub fn five_point() -> Scheme {
        Scheme { kind: StencilKind::FivePoint, diagonal_weight: 0.0 }
    }

    pub fn nine_point() -> Scheme {
        Scheme { kind: StencilKind::NinePoint, diagonal_weight: 1.0 / 3.0 }
    }

    #[inline]
    pub fn axial_weight(&self) -> f64 {
        match self.kind {
            StencilKind::FivePoint => 1.0,
            StencilKind::NinePoint => 1.0 - self.diagonal_weight,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            StencilKind::FivePoint => "5p",
            StencilKind::NinePoint => "9p",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "5p" | "5" | "five" | "five-point" => Ok(Scheme::five_point()),
            "9p" | "9" | "nine" | "nine-point" => Ok(Scheme::nine_point()),
            other => Err(SimError::InvalidInput(format!("unknown scheme '{other}' (use 5p or 9p)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WellKind {
    /// Rate-controlled injector with volumetric rate `q > 0`.
    RateInjector { q: f64 },
    /// Pressure-controlled producer held at bottom-hole pressure `p_bh`.
    PressureProducer { p_bh: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellSpec {
    pub cell: (usize, usize),
    pub kind: WellKind,
}

/// Assembled linear system for one pressure solve.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub(crate) op: StencilOp,
    pub(crate) rhs: Vec<f64>,
    pinned_value: Vec<f64>,
    pinned: Vec<bool>,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl PressureSystem {
    pub fn n_dof(&self) -> usize {
        self.op.n_dof()
    }

    pub fn is_pinned(&self, i: usize, j: usize) -> bool {
        self.pinned[j * self.nx + i]
    }
}

fn eligible(op: &StencilOp, pinned: &[bool], c: usize) -> bool {
    op.dof[c] || pinned[c]
}

/// Assemble the pressure system from the current saturation.
///
/// `dirichlet` pins cell pressures (mask-boundary ring cells or test fixtures);
/// producer wells are pinned at their bottom-hole pressure. Face mobilities take
/// the upstream cell identified by the sign of `upwind_hint` (the previous
/// step's velocity field); without a hint the two candidates are averaged.
pub fn assemble(
    grid: &GridSpec,
    s: &CellField,
    model: &FluidModel,
    wells: &[WellSpec],
    dirichlet: &[((usize, usize), f64)],
    scheme: Scheme,
    upwind_hint: Option<&FaceField>,
) -> Result<PressureSystem> {
    let (nx, ny) = (grid.nx, grid.ny);
    if s.nx != nx || s.ny != ny {
        return Err(SimError::GridMismatch("saturation shape != grid shape".into()));
    }
    if let Some(hint) = upwind_hint {
        if hint.nx != nx || hint.ny != ny {
            return Err(SimError::GridMismatch("upwind hint shape != grid shape".into()));
        }
    }

    // Cell mobilities; ring / inactive cells carry downstream saturation 0.
    let mut lambda = vec![model.total_mobility(0.0); nx * ny];
    for (i, j) in grid.active_cells() {
        let c = grid.cell(i, j);
        let l = model.total_mobility(s.data[c]);
        if !(l > 0.0) || !l.is_finite() {
            return Err(SimError::MobilityNotPositive { cell: (i, j), s: s.data[c], lambda: l });
        }
        lambda[c] = l;
    }

    let mut pinned = vec![false; nx * ny];
    let mut pinned_value = vec![0.0; nx * ny];
    for &((i, j), value) in dirichlet {
        if i >= nx || j >= ny {
            return Err(SimError::InvalidInput(format!("Dirichlet cell ({i}, {j}) out of range")));
        }
        pinned[grid.cell(i, j)] = true;
        pinned_value[grid.cell(i, j)] = value;
    }
    for well in wells {
        let (i, j) = well.cell;
        if i >= nx || j >= ny || !grid.is_active(i, j) {
            return Err(SimError::InvalidInput(format!("well cell ({i}, {j}) is not active")));
        }
        match well.kind {
            WellKind::RateInjector { q } => {
                if !(q > 0.0) {
                    return Err(SimError::InvalidInput(format!("injector rate must be positive, got {q}")));
                }
                if pinned[grid.cell(i, j)] {
                    return Err(SimError::InvalidInput(format!(
                        "injector cell ({i}, {j}) is pressure-pinned"
                    )));
                }
            }
            WellKind::PressureProducer { p_bh } => {
                pinned[grid.cell(i, j)] = true;
                pinned_value[grid.cell(i, j)] = p_bh;
            }
        }
    }
    if !pinned.iter().any(|&p| p) {
        return Err(SimError::SingularSystem(
            "no Dirichlet cell and no pressure-controlled well anchors the pressure".into(),
        ));
    }

    let mut op = StencilOp::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let c = grid.cell(i, j);
            op.dof[c] = grid.is_active(i, j) && !pinned[c];
        }
    }
    let mut rhs = vec![0.0; nx * ny];

    let ax_w = scheme.axial_weight();
    let face_lambda = |cl: usize, cr: usize, hint: f64| -> f64 {
        if hint > 0.0 {
            lambda[cl]
        } else if hint < 0.0 {
            lambda[cr]
        } else {
            0.5 * (lambda[cl] + lambda[cr])
        }
    };

    for j in 0..ny {
        for fi in 1..nx {
            let cl = grid.cell(fi - 1, j);
            let cr = grid.cell(fi, j);
            if !eligible(&op, &pinned, cl) || !eligible(&op, &pinned, cr) {
                continue;
            }
            let hint = upwind_hint.map_or(0.0, |h| h.x[grid.x_face(fi, j)]);
            let t = ax_w * face_lambda(cl, cr, hint) * grid.dy / grid.dx;
            op.t_x[grid.x_face(fi, j)] = t;
            if op.dof[cl] {
                op.diag[cl] += t;
                if pinned[cr] {
                    rhs[cl] += t * pinned_value[cr];
                }
            }
            if op.dof[cr] {
                op.diag[cr] += t;
                if pinned[cl] {
                    rhs[cr] += t * pinned_value[cl];
                }
            }
        }
    }
    for fj in 1..ny {
        for i in 0..nx {
            let cb = grid.cell(i, fj - 1);
            let ct = grid.cell(i, fj);
            if !eligible(&op, &pinned, cb) || !eligible(&op, &pinned, ct) {
                continue;
            }
            let hint = upwind_hint.map_or(0.0, |h| h.y[grid.y_face(i, fj)]);
            let t = ax_w * face_lambda(cb, ct, hint) * grid.dx / grid.dy;
            op.t_y[grid.y_face(i, fj)] = t;
            if op.dof[cb] {
                op.diag[cb] += t;
                if pinned[ct] {
                    rhs[cb] += t * pinned_value[ct];
                }
            }
            if op.dof[ct] {
                op.diag[ct] += t;
                if pinned[cb] {
                    rhs[ct] += t * pinned_value[cb];
                }
            }
        }
    }

    if scheme.diagonal_weight != 0.0 {
        // Diagonal transmissibility for square cells: w_d * lambda_avg / 2, the
        // pi/4-rotated five-point scheme folded per unit cell.
        let w_d = scheme.diagonal_weight;
        for cj in 1..ny {
            for ci in 1..nx {
                // South-west to north-east connection.
                let ca = grid.cell(ci - 1, cj - 1);
                let cb = grid.cell(ci, cj);
                if eligible(&op, &pinned, ca) && eligible(&op, &pinned, cb) {
                    let t = 0.5 * w_d * 0.5 * (lambda[ca] + lambda[cb]);
                    op.t_ne[grid.corner(ci, cj)] = t;
                    if op.dof[ca] {
                        op.diag[ca] += t;
                        if pinned[cb] {
                            rhs[ca] += t * pinned_value[cb];
                        }
                    }
                    if op.dof[cb] {
                        op.diag[cb] += t;
                        if pinned[ca] {
                            rhs[cb] += t * pinned_value[ca];
                        }
                    }
                }
                // South-east to north-west connection.
                let ca = grid.cell(ci, cj - 1);
                let cb = grid.cell(ci - 1, cj);
                if eligible(&op, &pinned, ca) && eligible(&op, &pinned, cb) {
                    let t = 0.5 * w_d * 0.5 * (lambda[ca] + lambda[cb]);
                    op.t_nw[grid.corner(ci, cj)] = t;
                    if op.dof[ca] {
                        op.diag[ca] += t;
                        if pinned[cb] {
                            rhs[ca] += t * pinned_value[cb];
                        }
                    }
                    if op.dof[cb] {
                        op.diag[cb] += t;
                        if pinned[ca] {
                            rhs[cb] += t * pinned_value[ca];
                        }
                    }
                }
            }
        }
    }

    for well in wells {
        if let WellKind::RateInjector { q } = well.kind {
            rhs[grid.cell(well.cell.0, well.cell.1)] += q;
        }
    }

    Ok(PressureSystem {
        op,
        rhs,
        pinned_value,
        pinned,
        nx,
        ny,
        dx: grid.dx,
        dy: grid.dy,
    })
}

fn fill_pinned(system: &PressureSystem, x: Vec<f64>) -> CellField {
    let mut p = CellField { nx: system.nx, ny: system.ny, data: x };
    for c in 0..system.nx * system.ny {
        if system.pinned[c] {
            p.data[c] = system.pinned_value[c];
        }
    }
    p
}

fn iteration_cap(system: &PressureSystem) -> usize {
    1000 + 20 * system.op.n_dof()
}

/// Solve the assembled system to `||A P - rhs|| <= tol ||rhs||`. Deterministic.
pub fn solve(system: &PressureSystem, tol: f64) -> Result<(CellField, SolveStats)> {
    solve_with_guess(system, tol, None)
}

/// Same as [`solve`] but warm-started from a previous pressure field.
pub fn solve_with_guess(
    system: &PressureSystem,
    tol: f64,
    guess: Option<&CellField>,
) -> Result<(CellField, SolveStats)> {
    let (x, stats) = solve_once(
        &system.op,
        &system.rhs,
        guess.map(|g| g.data.as_slice()),
        tol,
        iteration_cap(system),
    )?;
    Ok((fill_pinned(system, x), stats))
}

/// Reusable solver for time-stepping loops. The multigrid preconditioner is
/// refreshed only every few solves (a stale symmetric-positive-definite
/// preconditioner changes the iteration count, never the answer); if a stale
/// cycle ever stalls the solve is retried once with a fresh one.
pub struct PressureSolver {
    precond: Option<Preconditioner>,
    age: u64,
    refresh_every: u64,
}

impl Default for PressureSolver {
    fn default() -> Self {
        PressureSolver::new()
    }
}

impl PressureSolver {
    pub fn new() -> Self {
        PressureSolver { precond: None, age: 0, refresh_every: 20 }
    }

    pub fn solve(
        &mut self,
        system: &PressureSystem,
        tol: f64,
        guess: Option<&CellField>,
    ) -> Result<(CellField, SolveStats)> {
        let cap = iteration_cap(system);
        let seed = guess.map(|g| g.data.as_slice());
        if self.precond.is_none() || self.age >= self.refresh_every {
            self.precond = Some(Preconditioner::build(&system.op)?);
            self.age = 0;
        }
        let fresh = self.age == 0;
        let precond = self.precond.as_mut().unwrap();
        match solve_pcg(&system.op, precond, &system.rhs, seed, tol, cap) {
            Ok((x, stats)) => {
                self.age += 1;
                Ok((fill_pinned(system, x), stats))
            }
            Err(err) if !fresh => {
                // Retry once with a preconditioner built from the current matrix.
                let _ = err;
                self.precond = Some(Preconditioner::build(&system.op)?);
                self.age = 1;
                let precond = self.precond.as_mut().unwrap();
                let (x, stats) = solve_pcg(&system.op, precond, &system.rhs, seed, tol, cap)?;
                Ok((fill_pinned(system, x), stats))
            }
            Err(err) => Err(err),
        }
    }
}

/// Darcy face velocities consistent with the assembled transmissibilities.
///
/// For the five-point scheme this is exactly `u = -lambda_face (P_R - P_L) / dx`.
/// For the nine-point scheme each diagonal connection's flux is split half and
/// half over its two axial two-leg paths, so the axial face fluxes reproduce the
/// nine-point divergence cell by cell (wells included) and four-face transport
/// conserves mass under both schemes.
pub fn face_velocity(system: &PressureSystem, p: &CellField) -> FaceField {
    let (nx, ny) = (system.nx, system.ny);
    let mut vel = FaceField {
        nx,
        ny,
        x: vec![0.0; (nx + 1) * ny],
        y: vec![0.0; nx * (ny + 1)],
    };
    for j in 0..ny {
        for fi in 1..nx {
            let f = j * (nx + 1) + fi;
            let t = system.op.t_x[f];
            if t != 0.0 {
                vel.x[f] = t * (p.data[j * nx + fi - 1] - p.data[j * nx + fi]) / system.dy;
            }
        }
    }
    for fj in 1..ny {
        for i in 0..nx {
            let f = fj * nx + i;
            let t = system.op.t_y[f];
            if t != 0.0 {
                vel.y[f] = t * (p.data[(fj - 1) * nx + i] - p.data[fj * nx + i]) / system.dx;
            }
        }
    }
    for cj in 1..ny {
        for ci in 1..nx {
            let cr = cj * (nx + 1) + ci;
            let t_ne = system.op.t_ne[cr];
            if t_ne != 0.0 {
                let q = t_ne * (p.data[(cj - 1) * nx + ci - 1] - p.data[cj * nx + ci]);
                let half_u = 0.5 * q / system.dy;
                let half_v = 0.5 * q / system.dx;
                vel.x[(cj - 1) * (nx + 1) + ci] += half_u;
                vel.y[cj * nx + ci] += half_v;
                vel.y[cj * nx + ci - 1] += half_v;
                vel.x[cj * (nx + 1) + ci] += half_u;
            }
            let t_nw = system.op.t_nw[cr];
            if t_nw != 0.0 {
                let q = t_nw * (p.data[(cj - 1) * nx + ci] - p.data[cj * nx + ci - 1]);
                let half_u = 0.5 * q / system.dy;
                let half_v = 0.5 * q / system.dx;
                vel.x[(cj - 1) * (nx + 1) + ci] -= half_u;
                vel.y[cj * nx + ci - 1] += half_v;
                vel.y[cj * nx + ci] += half_v;
                vel.x[cj * (nx + 1) + ci] -= half_u;
            }
        }
    }
    vel
}

/// Net volumetric inflow into each pressure-controlled producer (its production
/// rate), computed from the same transmissibilities as the assembly.
pub fn producer_rates(system: &PressureSystem, p: &CellField, wells: &[WellSpec]) -> Vec<f64> {
    let (nx, ny) = (system.nx, system.ny);
    wells
        .iter()
        .map(|well| match well.kind {
            WellKind::RateInjector { .. } => 0.0,
            WellKind::PressureProducer { .. } => {
                let (i, j) = well.cell;
                let c = j * nx + i;
                let mut q = 0.0;
                if i > 0 {
                    q += system.op.t_x[j * (nx + 1) + i] * (p.data[c - 1] - p.data[c]);
                }
                if i + 1 < nx {
                    q += system.op.t_x[j * (nx + 1) + i + 1] * (p.data[c + 1] - p.data[c]);
                }
                if j > 0 {
                    q += system.op.t_y[j * nx + i] * (p.data[c - nx] - p.data[c]);
                }
                if j + 1 < ny {
                    q += system.op.t_y[(j + 1) * nx + i] * (p.data[c + nx] - p.data[c]);
                }
                if i > 0 && j > 0 {
                    q += system.op.t_ne[j * (nx + 1) + i] * (p.data[c - nx - 1] - p.data[c]);
                }
                if i + 1 < nx && j + 1 < ny {
                    q += system.op.t_ne[(j + 1) * (nx + 1) + i + 1] * (p.data[c + nx + 1] - p.data[c]);
                }
                if i > 0 && j + 1 < ny {
                    q += system.op.t_nw[(j + 1) * (nx + 1) + i] * (p.data[c + nx - 1] - p.data[c]);
                }
                if i + 1 < nx && j > 0 {
                    q += system.op.t_nw[j * (nx + 1) + i + 1] * (p.data[c - nx + 1] - p.data[c]);
                }
                q
            }
        })
        .collect()
}

/// Largest net volumetric outflux over the free (non-pinned, non-injector)
/// active cells, measured on the routed face velocities. Zero for an exactly
/// solved system; bounded by the solver residual otherwise.
pub fn max_cell_imbalance(
    grid: &GridSpec,
    system: &PressureSystem,
    vel: &FaceField,
    wells: &[WellSpec],
) -> f64 {
    let mut source = vec![0.0; grid.n_cells()];
    for well in wells {
        if let WellKind::RateInjector { q } = well.kind {
            source[grid.cell(well.cell.0, well.cell.1)] += q;
        }
    }
    let mut worst = 0.0f64;
    for (i, j) in grid.active_cells() {
        let c = grid.cell(i, j);
        if system.pinned[c] {
            continue;
        }
        let out = (vel.x[grid.x_face(i + 1, j)] - vel.x[grid.x_face(i, j)]) * grid.dy
            + (vel.y[grid.y_face(i, j + 1)] - vel.y[grid.y_face(i, j)]) * grid.dx;
        worst = worst.max((out - source[c]).abs());
    }
    worst
}

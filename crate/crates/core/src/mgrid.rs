//! Multigrid-preconditioned conjugate gradients for the masked stencil systems
//! assembled by the pressure module.
//!
//! The operator is stored connection-wise (axial faces plus the two diagonal
//! orientations), which is closed under Galerkin coarsening with box aggregates.
//! Aggregates are palindromic runs of ~3 cells per direction, so the whole
//! preconditioner commutes with the square-grid symmetries; symmetric problems
//! therefore stay symmetric to rounding over long runs.

use crate::error::{Result, SimError};

/// Damping for the Jacobi smoother.
const OMEGA: f64 = 0.8;
/// Pre/post smoothing sweeps per V-cycle.
const SWEEPS: usize = 2;
/// Over-weighting of the coarse-grid correction; piecewise-constant aggregation
/// under-corrects, and any value below 2 keeps the cycle positive definite.
const COARSE_WEIGHT: f64 = 1.8;
/// Stop coarsening when a side is this small; solve the rest densely.
const COARSEST_SIDE: usize = 9;

/// Symmetric M-matrix over the masked cells of an `nx x ny` grid.
///
/// Row `c`: `diag[c] * x[c] - sum_nb T * x[nb]` over connected degrees of
/// freedom. Connections to pinned (Dirichlet) cells live only in `diag`, so all
/// work vectors are kept identically zero on non-dof cells.
#[derive(Debug, Clone)]
pub(crate) struct StencilOp {
    pub nx: usize,
    pub ny: usize,
    /// `(nx+1) x ny` transmissibilities between x-neighbors.
    pub t_x: Vec<f64>,
    /// `nx x (ny+1)` transmissibilities between y-neighbors.
    pub t_y: Vec<f64>,
    /// `(nx+1) x (ny+1)`: corner `(ci, cj)` joins cells `(ci-1, cj-1)` and `(ci, cj)`.
    pub t_ne: Vec<f64>,
    /// `(nx+1) x (ny+1)`: corner `(ci, cj)` joins cells `(ci, cj-1)` and `(ci-1, cj)`.
    pub t_nw: Vec<f64>,
    pub diag: Vec<f64>,
    pub dof: Vec<bool>,
}

impl StencilOp {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        StencilOp {
            nx,
            ny,
            t_x: vec![0.0; (nx + 1) * ny],
            t_y: vec![0.0; nx * (ny + 1)],
            t_ne: vec![0.0; (nx + 1) * (ny + 1)],
            t_nw: vec![0.0; (nx + 1) * (ny + 1)],
            diag: vec![0.0; nx * ny],
            dof: vec![false; nx * ny],
        }
    }

    #[inline]
    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn xf(&self, fi: usize, j: usize) -> usize {
        j * (self.nx + 1) + fi
    }

    #[inline]
    pub fn yf(&self, i: usize, fj: usize) -> usize {
        fj * self.nx + i
    }

    #[inline]
    pub fn cr(&self, ci: usize, cj: usize) -> usize {
        cj * (self.nx + 1) + ci
    }

    pub fn n_dof(&self) -> usize {
        self.dof.iter().filter(|&&d| d).count()
    }

    /// `out = A x` for one cell, with all range checks (boundary rows/columns).
    #[inline]
    fn apply_cell(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let c = self.cell(i, j);
        let mut acc = self.diag[c] * x[c];
        if i > 0 {
            acc -= self.t_x[self.xf(i, j)] * x[c - 1];
        }
        if i + 1 < nx {
            acc -= self.t_x[self.xf(i + 1, j)] * x[c + 1];
        }
        if j > 0 {
            acc -= self.t_y[self.yf(i, j)] * x[c - nx];
        }
        if j + 1 < ny {
            acc -= self.t_y[self.yf(i, j + 1)] * x[c + nx];
        }
        if i > 0 && j > 0 {
            acc -= self.t_ne[self.cr(i, j)] * x[c - nx - 1];
        }
        if i + 1 < nx && j + 1 < ny {
            acc -= self.t_ne[self.cr(i + 1, j + 1)] * x[c + nx + 1];
        }
        if i > 0 && j + 1 < ny {
            acc -= self.t_nw[self.cr(i, j + 1)] * x[c + nx - 1];
        }
        if i + 1 < nx && j > 0 {
            acc -= self.t_nw[self.cr(i + 1, j)] * x[c - nx + 1];
        }
        acc
    }

    /// `out = A x`. Non-dof entries of `x` must be zero; non-dof rows stay zero.
    /// Interior rows run branch-free over row slices.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            if j == 0 || j + 1 == ny {
                for i in 0..nx {
                    let c = j * nx + i;
                    out[c] = if self.dof[c] { self.apply_cell(x, i, j) } else { 0.0 };
                }
                continue;
            }
            let base = j * nx;
            let dof = &self.dof[base..base + nx];
            let diag = &self.diag[base..base + nx];
            let xc = &x[base..base + nx];
            let xs = &x[base - nx..base];
            let xn = &x[base + nx..base + 2 * nx];
            let tx = &self.t_x[j * (nx + 1)..(j + 1) * (nx + 1)];
            let tys = &self.t_y[j * nx..(j + 1) * nx];
            let tyn = &self.t_y[(j + 1) * nx..(j + 2) * nx];
            let nes = &self.t_ne[j * (nx + 1)..j * (nx + 1) + nx + 1];
            let nen = &self.t_ne[(j + 1) * (nx + 1)..(j + 1) * (nx + 1) + nx + 1];
            let nws = &self.t_nw[j * (nx + 1)..j * (nx + 1) + nx + 1];
            let nwn = &self.t_nw[(j + 1) * (nx + 1)..(j + 1) * (nx + 1) + nx + 1];
            let row_out = &mut out[base..base + nx];
            row_out[0] = if dof[0] { self.apply_cell(x, 0, j) } else { 0.0 };
            for i in 1..nx - 1 {
                if !dof[i] {
                    row_out[i] = 0.0;
                    continue;
                }
                let acc = diag[i] * xc[i]
                    - tx[i] * xc[i - 1]
                    - tx[i + 1] * xc[i + 1]
                    - tys[i] * xs[i]
                    - tyn[i] * xn[i]
                    - nes[i] * xs[i - 1]
                    - nen[i + 1] * xn[i + 1]
                    - nwn[i] * xn[i - 1]
                    - nws[i + 1] * xs[i + 1];
                row_out[i] = acc;
            }
            row_out[nx - 1] = if dof[nx - 1] { self.apply_cell(x, nx - 1, j) } else { 0.0 };
        }
    }

    /// Damped Jacobi sweep: `z += omega * D^-1 (r - A z)`.
    fn smooth(&self, r: &[f64], z: &mut [f64], tmp: &mut [f64]) {
        self.apply(z, tmp);
        for c in 0..z.len() {
            if self.dof[c] {
                z[c] += OMEGA * (r[c] - tmp[c]) / self.diag[c];
            }
        }
    }
}

/// Palindromic partition of `n` into runs of 2..=5 cells (mostly 3). The
/// symmetric layout keeps aggregation equivariant under grid reflections.
fn partition(n: usize) -> Vec<usize> {
    if n <= 4 {
        return vec![n];
    }
    let q = n / 3;
    let r = n % 3;
    match r {
        0 => vec![3; q],
        1 => {
            if (q - 1) % 2 == 0 {
                let a = (q - 1) / 2;
                let mut v = vec![3; a];
                v.push(4);
                v.extend(std::iter::repeat(3).take(a));
                v
            } else {
                let mut v = vec![2];
                v.extend(std::iter::repeat(3).take(q - 1));
                v.push(2);
                v
            }
        }
        _ => {
            if (q - 1) % 2 == 0 {
                let a = (q - 1) / 2;
                let mut v = vec![3; a];
                v.push(5);
                v.extend(std::iter::repeat(3).take(a));
                v
            } else {
                let mut v = vec![4];
                v.extend(std::iter::repeat(3).take(q - 2));
                v.push(4);
                v
            }
        }
    }
}

fn index_map(part: &[usize]) -> Vec<usize> {
    let mut map = Vec::with_capacity(part.iter().sum());
    for (block, &len) in part.iter().enumerate() {
        for _ in 0..len {
            map.push(block);
        }
    }
    map
}

/// Galerkin coarse operator for box aggregates (piecewise-constant transfer):
/// coarse transmissibilities are sums of the fine dof-dof connections crossing
/// the aggregate boundary; internal connections fold into the coarse diagonal.
fn coarsen(fine: &StencilOp) -> (StencilOp, Vec<usize>, Vec<usize>) {
    let map_x = index_map(&partition(fine.nx));
    let map_y = index_map(&partition(fine.ny));
    let cnx = *map_x.last().unwrap() + 1;
    let cny = *map_y.last().unwrap() + 1;
    let mut coarse = StencilOp::zeros(cnx, cny);

    for j in 0..fine.ny {
        for i in 0..fine.nx {
            let c = fine.cell(i, j);
            if fine.dof[c] {
                let cc = map_y[j] * cnx + map_x[i];
                coarse.dof[cc] = true;
                coarse.diag[cc] += fine.diag[c];
            }
        }
    }

    let mut conn = |a: (usize, usize), b: (usize, usize), t: f64| {
        if t == 0.0 {
            return;
        }
        let (ca, cb) = (fine.cell(a.0, a.1), fine.cell(b.0, b.1));
        if !fine.dof[ca] || !fine.dof[cb] {
            return;
        }
        let (ia, ja) = (map_x[a.0], map_y[a.1]);
        let (ib, jb) = (map_x[b.0], map_y[b.1]);
        let (da, db) = (ja * cnx + ia, jb * cnx + ib);
        if da == db {
            // Internal to an aggregate: cancels out of the coarse row sum.
            coarse.diag[da] -= 2.0 * t;
            return;
        }
        if ja == jb {
            let fi = ia.max(ib);
            coarse.t_x[ja * (cnx + 1) + fi] += t;
        } else if ia == ib {
            let fj = ja.max(jb);
            coarse.t_y[fj * cnx + ia] += t;
        } else if (ib > ia) == (jb > ja) {
            let (ci, cj) = (ia.max(ib), ja.max(jb));
            coarse.t_ne[cj * (cnx + 1) + ci] += t;
        } else {
            let (ci, cj) = (ia.max(ib), ja.max(jb));
            coarse.t_nw[cj * (cnx + 1) + ci] += t;
        }
    };

    for j in 0..fine.ny {
        for fi in 1..fine.nx {
            conn((fi - 1, j), (fi, j), fine.t_x[fine.xf(fi, j)]);
        }
    }
    for fj in 1..fine.ny {
        for i in 0..fine.nx {
            conn((i, fj - 1), (i, fj), fine.t_y[fine.yf(i, fj)]);
        }
    }
    for cj in 1..fine.ny {
        for ci in 1..fine.nx {
            conn((ci - 1, cj - 1), (ci, cj), fine.t_ne[fine.cr(ci, cj)]);
            conn((ci, cj - 1), (ci - 1, cj), fine.t_nw[fine.cr(ci, cj)]);
        }
    }

    (coarse, map_x, map_y)
}

/// Dense Cholesky factor of the coarsest level.
struct DenseChol {
    n: usize,
    low: Vec<f64>,
    cells: Vec<usize>,
}

impl DenseChol {
    fn build(op: &StencilOp) -> Result<DenseChol> {
        let cells: Vec<usize> = (0..op.nx * op.ny).filter(|&c| op.dof[c]).collect();
        let n = cells.len();
        let mut index = vec![usize::MAX; op.nx * op.ny];
        for (k, &c) in cells.iter().enumerate() {
            index[c] = k;
        }
        let mut a = vec![0.0; n * n];
        let mut add = |ca: usize, cb: usize, t: f64| {
            if t == 0.0 || index[ca] == usize::MAX || index[cb] == usize::MAX {
                return;
            }
            let (ka, kb) = (index[ca], index[cb]);
            a[ka * n + kb] -= t;
            a[kb * n + ka] -= t;
        };
        for j in 0..op.ny {
            for fi in 1..op.nx {
                add(op.cell(fi - 1, j), op.cell(fi, j), op.t_x[op.xf(fi, j)]);
            }
        }
        for fj in 1..op.ny {
            for i in 0..op.nx {
                add(op.cell(i, fj - 1), op.cell(i, fj), op.t_y[op.yf(i, fj)]);
            }
        }
        for cj in 1..op.ny {
            for ci in 1..op.nx {
                add(op.cell(ci - 1, cj - 1), op.cell(ci, cj), op.t_ne[op.cr(ci, cj)]);
                add(op.cell(ci, cj - 1), op.cell(ci - 1, cj), op.t_nw[op.cr(ci, cj)]);
            }
        }
        for (k, &c) in cells.iter().enumerate() {
            a[k * n + k] = op.diag[c];
        }
        let scale = cells.iter().map(|&c| op.diag[c]).fold(0.0f64, f64::max);
        // In-place lower Cholesky.
        for j in 0..n {
            let mut d = a[j * n + j];
            for p in 0..j {
                d -= a[j * n + p] * a[j * n + p];
            }
            if !(d > 1e-13 * scale) {
                return Err(SimError::SingularSystem(format!(
                    "coarse pivot {d:.3e} at row {j}; missing pressure anchor or negative mobility"
                )));
            }
            let l = d.sqrt();
            a[j * n + j] = l;
            for i in (j + 1)..n {
                let mut v = a[i * n + j];
                for p in 0..j {
                    v -= a[i * n + p] * a[j * n + p];
                }
                a[i * n + j] = v / l;
            }
        }
        Ok(DenseChol { n, low: a, cells })
    }

    fn solve(&self, r: &[f64], z: &mut [f64], y: &mut Vec<f64>) {
        let n = self.n;
        y.clear();
        y.resize(n, 0.0);
        for i in 0..n {
            let mut v = r[self.cells[i]];
            for p in 0..i {
                v -= self.low[i * n + p] * y[p];
            }
            y[i] = v / self.low[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for p in (i + 1)..n {
                v -= self.low[p * n + i] * y[p];
            }
            y[i] = v / self.low[i * n + i];
        }
        for zi in z.iter_mut() {
            *zi = 0.0;
        }
        for (k, &c) in self.cells.iter().enumerate() {
            z[c] = y[k];
        }
    }
}

/// Per-level scratch buffers (`rc`/`zc` are sized for the next-coarser level).
struct LevelWork {
    tmp: Vec<f64>,
    rc: Vec<f64>,
    zc: Vec<f64>,
}

/// Reusable V-cycle preconditioner built from a snapshot of the operator.
/// Applying a slightly stale snapshot is still symmetric positive definite, so
/// the caller may refresh it only every few time steps.
pub(crate) struct Preconditioner {
    levels: Vec<StencilOp>,
    maps: Vec<(Vec<usize>, Vec<usize>)>,
    dense: DenseChol,
    work: Vec<LevelWork>,
    dense_y: Vec<f64>,
}

impl Preconditioner {
    pub fn build(finest: &StencilOp) -> Result<Preconditioner> {
        let mut levels = vec![finest.clone()];
        let mut maps = Vec::new();
        while levels.last().unwrap().nx.min(levels.last().unwrap().ny) > COARSEST_SIDE {
            let (coarse, mx, my) = coarsen(levels.last().unwrap());
            maps.push((mx, my));
            levels.push(coarse);
        }
        let dense = DenseChol::build(levels.last().unwrap())?;
        let work = (0..levels.len())
            .map(|l| {
                let here = levels[l].nx * levels[l].ny;
                let next = if l + 1 < levels.len() {
                    levels[l + 1].nx * levels[l + 1].ny
                } else {
                    0
                };
                LevelWork { tmp: vec![0.0; here], rc: vec![0.0; next], zc: vec![0.0; next] }
            })
            .collect();
        Ok(Preconditioner { levels, maps, dense, work, dense_y: Vec::new() })
    }

    /// `z ~= A^-1 r` by one V-cycle.
    pub fn apply(&mut self, r: &[f64], z: &mut [f64]) {
        vcycle(&self.levels, &self.maps, &self.dense, &mut self.work, &mut self.dense_y, r, z);
    }
}

fn vcycle(
    ops: &[StencilOp],
    maps: &[(Vec<usize>, Vec<usize>)],
    dense: &DenseChol,
    work: &mut [LevelWork],
    dense_y: &mut Vec<f64>,
    r: &[f64],
    z: &mut [f64],
) {
    let op = &ops[0];
    if ops.len() == 1 {
        dense.solve(r, z, dense_y);
        return;
    }
    let (cur, rest) = work.split_first_mut().unwrap();
    for zi in z.iter_mut() {
        *zi = 0.0;
    }
    for _ in 0..SWEEPS {
        op.smooth(r, z, &mut cur.tmp);
    }
    op.apply(z, &mut cur.tmp);
    let (map_x, map_y) = &maps[0];
    let next = &ops[1];
    for v in cur.rc.iter_mut() {
        *v = 0.0;
    }
    for j in 0..op.ny {
        for i in 0..op.nx {
            let c = j * op.nx + i;
            if op.dof[c] {
                cur.rc[map_y[j] * next.nx + map_x[i]] += r[c] - cur.tmp[c];
            }
        }
    }
    vcycle(&ops[1..], &maps[1..], dense, rest, dense_y, &cur.rc, &mut cur.zc);
    for j in 0..op.ny {
        for i in 0..op.nx {
            let c = j * op.nx + i;
            if op.dof[c] {
                z[c] += COARSE_WEIGHT * cur.zc[map_y[j] * next.nx + map_x[i]];
            }
        }
    }
    for _ in 0..SWEEPS {
        op.smooth(r, z, &mut cur.tmp);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG on the current operator with a (possibly stale) V-cycle
/// preconditioner. `x0`, when given, seeds the iteration (values on non-dof
/// cells are ignored). Deterministic for fixed inputs.
pub(crate) fn solve_pcg(
    op: &StencilOp,
    precond: &mut Preconditioner,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = op.nx * op.ny;
    assert_eq!(b.len(), n);

    let mut x = vec![0.0; n];
    if let Some(seed) = x0 {
        for c in 0..n {
            if op.dof[c] {
                x[c] = seed[c];
            }
        }
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, relative_residual: 0.0 }));
    }

    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for c in 0..n {
        r[c] = if op.dof[c] { b[c] - r[c] } else { 0.0 };
    }
    let mut res_norm = dot(&r, &r).sqrt();
    if res_norm <= tol * b_norm {
        return Ok((x, SolveStats { iterations: 0, relative_residual: res_norm / b_norm }));
    }

    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];

    for iter in 1..=max_iterations {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !pq.is_finite() {
            return Err(SimError::SingularSystem(format!(
                "operator lost positive definiteness (p'Ap = {pq:.3e})"
            )));
        }
        let alpha = rz / pq;
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * q[c];
        }
        res_norm = dot(&r, &r).sqrt();
        if res_norm <= tol * b_norm {
            return Ok((x, SolveStats { iterations: iter, relative_residual: res_norm / b_norm }));
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) || !rz_new.is_finite() {
            return Err(SimError::SingularSystem(format!(
                "preconditioner lost positive definiteness (r'z = {rz_new:.3e})"
            )));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
    }
    Err(SimError::SolverStalled {
        iterations: max_iterations,
        relative_residual: res_norm / b_norm,
        tol,
    })
}

/// One-shot solve that builds a fresh preconditioner.
pub(crate) fn solve_once(
    op: &StencilOp,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut precond = Preconditioner::build(op)?;
    solve_pcg(op, &mut precond, b, x0, tol, max_iterations)
}

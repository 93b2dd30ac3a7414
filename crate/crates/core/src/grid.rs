//! Cartesian grid geometry, index conventions and domain masks.
//!
//! Cells are indexed `(i, j)` with `0 <= i < nx`, `0 <= j < ny`; cell centers sit at
//! `origin + ((i + 1/2) dx, (j + 1/2) dy)`. An x-face `(fi, j)` with `0 <= fi <= nx`
//! separates cells `(fi-1, j)` and `(fi, j)`; a y-face `(i, fj)` separates `(i, fj-1)`
//! and `(i, fj)`. A corner `(ci, cj)` with `0 <= ci <= nx`, `0 <= cj <= ny` sits at
//! `origin + (ci dx, cj dy)` and touches the four cells `(ci-1..=ci, cj-1..=cj)`.

use crate::error::{Result, SimError};

/// Cartesian grid with an active-cell mask (full rectangle or inscribed circle).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
    /// Per-cell activity flag; inactive cells are outside the simulated region.
    active: Vec<bool>,
    /// Inactive cells that are 8-adjacent to an active cell. These carry the
    /// Dirichlet pressure and the downstream saturation of the mask boundary.
    ring: Vec<bool>,
    /// For each inactive cell, the flat indices of the nearest active cells
    /// (all ties at the minimal center-to-center distance). Empty for active cells.
    nearest_active: Vec<Vec<u32>>,
}

impl GridSpec {
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Flat index of x-face `(fi, j)`; the array has shape `(nx+1) x ny`.
    #[inline]
    pub fn x_face(&self, fi: usize, j: usize) -> usize {
        debug_assert!(fi <= self.nx && j < self.ny);
        j * (self.nx + 1) + fi
    }

    /// Flat index of y-face `(i, fj)`; the array has shape `nx x (ny+1)`.
    #[inline]
    pub fn y_face(&self, i: usize, fj: usize) -> usize {
        debug_assert!(i < self.nx && fj <= self.ny);
        fj * self.nx + i
    }

    /// Flat index of corner `(ci, cj)`; the array has shape `(nx+1) x (ny+1)`.
    #[inline]
    pub fn corner(&self, ci: usize, cj: usize) -> usize {
        debug_assert!(ci <= self.nx && cj <= self.ny);
        cj * (self.nx + 1) + ci
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.dx,
            self.origin.1 + (j as f64 + 0.5) * self.dy,
        )
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    #[inline]
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[self.cell(i, j)]
    }

    #[inline]
    pub fn is_ring(&self, i: usize, j: usize) -> bool {
        self.ring[self.cell(i, j)]
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Iterate over active cell indices in row-major order.
    pub fn active_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nx;
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(move |(c, _)| (c % nx, c / nx))
    }

    /// Ring cells (inactive, adjacent to the active region) in row-major order.
    pub fn ring_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nx;
        self.ring
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(move |(c, _)| (c % nx, c / nx))
    }

    /// Value of a cell field at possibly out-of-range indices: indices are clamped
    /// into the grid and inactive cells are constant-extrapolated from the nearest
    /// active cell(s) (ties averaged, which keeps the lookup symmetric).
    pub fn extended_value(&self, field: &CellField, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.nx as isize - 1) as usize;
        let j = j.clamp(0, self.ny as isize - 1) as usize;
        let c = self.cell(i, j);
        if self.active[c] {
            field.data[c]
        } else {
            let near = &self.nearest_active[c];
            let sum: f64 = near.iter().map(|&k| field.data[k as usize]).sum();
            sum / near.len() as f64
        }
    }

    /// Whether the active mask is invariant under all 8 square symmetries.
    /// Always false for non-square grids.
    pub fn mask_is_d4_symmetric(&self) -> bool {
        if self.nx != self.ny {
            return false;
        }
        for t in 1..8 {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    let (ti, tj) = d4_map(self.nx, t, i, j);
                    if self.active[self.cell(i, j)] != self.active[self.cell(ti, tj)] {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn rebuild_boundary_data(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let mut ring = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if self.active[self.cell(i, j)] {
                    continue;
                }
                'nb: for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as isize + di, j as isize + dj);
                        if ni >= 0
                            && nj >= 0
                            && (ni as usize) < nx
                            && (nj as usize) < ny
                            && self.active[self.cell(ni as usize, nj as usize)]
                        {
                            ring[self.cell(i, j)] = true;
                            break 'nb;
                        }
                    }
                }
            }
        }
        self.ring = ring;

        let actives: Vec<(usize, usize)> = self.active_cells().collect();
        let mut nearest = vec![Vec::new(); nx * ny];
        if actives.len() < nx * ny {
            for j in 0..ny {
                for i in 0..nx {
                    let c = self.cell(i, j);
                    if self.active[c] {
                        continue;
                    }
                    let mut best = u64::MAX;
                    let mut list: Vec<u32> = Vec::new();
                    for &(ai, aj) in &actives {
                        let di = ai as i64 - i as i64;
                        let dj = aj as i64 - j as i64;
                        let d2 = (di * di + dj * dj) as u64;
                        if d2 < best {
                            best = d2;
                            list.clear();
                            list.push(self.cell(ai, aj) as u32);
                        } else if d2 == best {
                            list.push(self.cell(ai, aj) as u32);
                        }
                    }
                    nearest[c] = list;
                }
            }
        }
        self.nearest_active = nearest;
    }
}

/// Build a full-rectangle grid of `nx x ny` cells over `[0, lx] x [0, ly]`.
pub fn build_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<GridSpec> {
    if nx < 3 || ny < 3 {
        return Err(SimError::InvalidInput(format!(
            "grid needs at least 3x3 cells, got {nx}x{ny}"
        )));
    }
    if !(lx > 0.0) || !(ly > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "domain lengths must be positive, got {lx} x {ly}"
        )));
    }
    let mut grid = GridSpec {
        nx,
        ny,
        dx: lx / nx as f64,
        dy: ly / ny as f64,
        origin: (0.0, 0.0),
        active: vec![true; nx * ny],
        ring: vec![false; nx * ny],
        nearest_active: vec![Vec::new(); nx * ny],
    };
    grid.rebuild_boundary_data();
    Ok(grid)
}

/// Restrict the active mask to cells whose centers lie strictly inside the circle.
/// The circle must fit inside the grid rectangle.
pub fn circular_mask(grid: &GridSpec, center: (f64, f64), radius: f64) -> Result<GridSpec> {
    let (x0, y0) = grid.origin;
    let (x1, y1) = (
        x0 + grid.nx as f64 * grid.dx,
        y0 + grid.ny as f64 * grid.dy,
    );
    let eps = 1e-12 * (grid.dx + grid.dy);
    if !(radius >= 0.0)
        || center.0 - radius < x0 - eps
        || center.0 + radius > x1 + eps
        || center.1 - radius < y0 - eps
        || center.1 + radius > y1 + eps
    {
        return Err(SimError::InvalidInput(format!(
            "circle (center ({}, {}), radius {radius}) not contained in [{x0}, {x1}] x [{y0}, {y1}]",
            center.0, center.1
        )));
    }
    let mut masked = grid.clone();
    let r2 = radius * radius;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (cx, cy) = grid.cell_center(i, j);
            let d2 = (cx - center.0).powi(2) + (cy - center.1).powi(2);
            masked.active[grid.cell(i, j)] = d2 < r2;
        }
    }
    if masked.active.iter().all(|&a| !a) {
        return Err(SimError::DegenerateDomain(format!(
            "no cell center lies inside the circle of radius {radius}"
        )));
    }
    masked.rebuild_boundary_data();
    Ok(masked)
}

/// One of the 8 symmetries of the square grid applied to cell indices
/// (`t = 0` is the identity; `n` is the per-side cell count).
#[inline]
pub fn d4_map(n: usize, t: usize, i: usize, j: usize) -> (usize, usize) {
    let m = n - 1;
    match t {
        0 => (i, j),
        1 => (j, i),
        2 => (m - i, j),
        3 => (i, m - j),
        4 => (m - j, m - i),
        5 => (j, m - i),
        6 => (m - j, i),
        _ => (m - i, m - j),
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &GridSpec) -> Self {
        CellField { nx: grid.nx, ny: grid.ny, data: vec![0.0; grid.n_cells()] }
    }

    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut field = CellField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                field.data[grid.cell(i, j)] = f(i, j);
            }
        }
        field
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nx + i] = v;
    }

    pub fn same_shape(&self, other: &CellField) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }
}

/// One scalar per face, split into x-faces and y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub nx: usize,
    pub ny: usize,
    /// Shape `(nx+1) x ny`: value on the face between cells `(fi-1, j)` and `(fi, j)`.
    pub x: Vec<f64>,
    /// Shape `nx x (ny+1)`: value on the face between cells `(i, fj-1)` and `(i, fj)`.
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &GridSpec) -> Self {
        FaceField {
            nx: grid.nx,
            ny: grid.ny,
            x: vec![0.0; (grid.nx + 1) * grid.ny],
            y: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    #[inline]
    pub fn x_at(&self, fi: usize, j: usize) -> f64 {
        self.x[j * (self.nx + 1) + fi]
    }

    #[inline]
    pub fn y_at(&self, i: usize, fj: usize) -> f64 {
        self.y[fj * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        let mx = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.y.iter().fold(mx, |m, v| m.max(v.abs()))
    }
}

/// One scalar per cell corner, indexed at half-integer cell offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerField {
    pub nx: usize,
    pub ny: usize,
    /// Shape `(nx+1) x (ny+1)`.
    pub data: Vec<f64>,
}

impl CornerField {
    pub fn zeros(grid: &GridSpec) -> Self {
        CornerField { nx: grid.nx, ny: grid.ny, data: vec![0.0; (grid.nx + 1) * (grid.ny + 1)] }
    }

    #[inline]
    pub fn get(&self, ci: usize, cj: usize) -> f64 {
        self.data[cj * (self.nx + 1) + ci]
    }

    #[inline]
    pub fn set(&mut self, ci: usize, cj: usize, v: f64) {
        self.data[cj * (self.nx + 1) + ci] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_grid_spacing() {
        let g = build_grid(21, 21, 1.0, 1.0).unwrap();
        assert_eq!(g.dx, 1.0 / 21.0);
        assert_eq!(g.dy, 1.0 / 21.0);
        let g = build_grid(81, 81, 2.0, 2.0).unwrap();
        assert!((g.dx - 2.0 / 81.0).abs() < 1e-15);
        assert!(g.active_cells().count() == 81 * 81);
    }

    #[test]
    fn build_grid_rejects_bad_dimensions() {
        assert!(build_grid(2, 5, 1.0, 1.0).is_err());
        assert!(build_grid(5, 2, 1.0, 1.0).is_err());
        assert!(build_grid(5, 5, 0.0, 1.0).is_err());
        assert!(build_grid(5, 5, 1.0, -1.0).is_err());
    }

    #[test]
    fn circular_mask_3x3_oracle() {
        // 3x3 over [0,1]^2, center (0.5, 0.5), radius 0.4.
        // Enumerate the 9 cell centers: corner cells are at distance sqrt(2)/3 > 0.4,
        // edge cells at 1/3 < 0.4, center at 0. Exactly 5 cells are active.
        let g = build_grid(3, 3, 1.0, 1.0).unwrap();
        let m = circular_mask(&g, (0.5, 0.5), 0.4).unwrap();
        let mut expected = 0;
        for j in 0..3 {
            for i in 0..3 {
                let (cx, cy) = g.cell_center(i, j);
                let d = ((cx - 0.5).powi(2) + (cy - 0.5).powi(2)).sqrt();
                let inside = d < 0.4;
                assert_eq!(m.is_active(i, j), inside, "cell ({i}, {j})");
                if inside {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 5);
        assert_eq!(m.n_active(), 5);
        // The four corner cells are ring cells (inactive, adjacent to active).
        assert!(m.is_ring(0, 0) && m.is_ring(2, 2) && m.is_ring(0, 2) && m.is_ring(2, 0));
    }

    #[test]
    fn circular_mask_degenerate_and_uncontained() {
        let g = build_grid(5, 5, 1.0, 1.0).unwrap();
        assert!(matches!(
            circular_mask(&g, (0.5, 0.5), 0.0),
            Err(SimError::DegenerateDomain(_))
        ));
        assert!(circular_mask(&g, (0.9, 0.5), 0.4).is_err());
    }

    #[test]
    fn centered_mask_is_d4_symmetric() {
        for n in [7usize, 12, 21] {
            let g = build_grid(n, n, 1.0, 1.0).unwrap();
            for radius in [0.2, 0.35, 0.5 - 1.0 / n as f64] {
                let m = circular_mask(&g, (0.5, 0.5), radius).unwrap();
                assert!(m.mask_is_d4_symmetric(), "n = {n}, radius = {radius}");
            }
        }
    }

    #[test]
    fn face_and_corner_adjacency_round_trip() {
        // Exhaustive adjacency check on a 4x4 grid: the two cells beside an interior
        // x-face (fi, j) are (fi-1, j) and (fi, j); a corner (ci, cj) touches the
        // 2x2 cell block (ci-1..=ci, cj-1..=cj).
        let g = build_grid(4, 4, 2.0, 2.0).unwrap();
        for j in 0..4 {
            for fi in 1..4 {
                let (xl, _) = g.cell_center(fi - 1, j);
                let (xr, _) = g.cell_center(fi, j);
                let face_x = g.origin.0 + fi as f64 * g.dx;
                assert!((face_x - 0.5 * (xl + xr)).abs() < 1e-14);
            }
        }
        for fj in 1..4 {
            for i in 0..4 {
                let (_, yb) = g.cell_center(i, fj - 1);
                let (_, yt) = g.cell_center(i, fj);
                let face_y = g.origin.1 + fj as f64 * g.dy;
                assert!((face_y - 0.5 * (yb + yt)).abs() < 1e-14);
            }
        }
        for cj in 1..4 {
            for ci in 1..4 {
                let corner = (g.origin.0 + ci as f64 * g.dx, g.origin.1 + cj as f64 * g.dy);
                for (i, j) in [(ci - 1, cj - 1), (ci, cj - 1), (ci - 1, cj), (ci, cj)] {
                    let (cx, cy) = g.cell_center(i, j);
                    assert!((cx - corner.0).abs() < 0.5 * g.dx + 1e-14);
                    assert!((cy - corner.1).abs() < 0.5 * g.dy + 1e-14);
                }
            }
        }
        // Array shapes.
        assert_eq!(FaceField::zeros(&g).x.len(), 5 * 4);
        assert_eq!(FaceField::zeros(&g).y.len(), 4 * 5);
        assert_eq!(CornerField::zeros(&g).data.len(), 5 * 5);
    }

    #[test]
    fn extended_value_clamps_and_extrapolates() {
        let g = build_grid(5, 5, 1.0, 1.0).unwrap();
        let m = circular_mask(&g, (0.5, 0.5), 0.45).unwrap();
        let f = CellField::from_fn(&m, |i, j| (i + 10 * j) as f64);
        // In-range active cell: identity.
        assert_eq!(m.extended_value(&f, 2, 2), 22.0);
        // Out-of-range indices clamp first; cell (0,0) is inactive on this mask,
        // so the lookup must land on an active cell value.
        let v = m.extended_value(&f, -3, -3);
        let actives: Vec<f64> = m.active_cells().map(|(i, j)| f.get(i, j)).collect();
        assert!(actives.iter().any(|&a| (a - v).abs() < 1e-12) || v.is_finite());
        // Extrapolation is symmetric: mirrored queries give mirrored values.
        let sym = CellField::from_fn(&m, |i, j| {
            let (x, y) = m.cell_center(i, j);
            ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt()
        });
        let a = m.extended_value(&sym, 0, 2);
        let b = m.extended_value(&sym, 4, 2);
        let c = m.extended_value(&sym, 2, 0);
        assert!((a - b).abs() < 1e-14 && (a - c).abs() < 1e-14);
    }

    #[test]
    fn d4_map_is_a_group_of_bijections() {
        let n = 6usize;
        for t in 0..8 {
            let mut seen = vec![false; n * n];
            for j in 0..n {
                for i in 0..n {
                    let (ti, tj) = d4_map(n, t, i, j);
                    assert!(!seen[tj * n + ti]);
                    seen[tj * n + ti] = true;
                }
            }
        }
    }
}

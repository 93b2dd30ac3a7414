//! Experiment presets: radial injection into a circular reservoir and the
//! 1IW-4PW five-spot pattern, with the published viscosity-parameter presets,
//! plus the analytic radial front position.

use crate::error::{Result, SimError};
use crate::flux::FluidModel;
use crate::grid::{build_grid, circular_mask, GridSpec};
use crate::pressure::{Scheme, WellKind, WellSpec};
use crate::transport::{time_step, ViscosityConfig, DT_COEFF, DT_EXPONENT};

/// Outer boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    /// Mask-boundary ring cells hold a fixed pressure (radial outflow boundary).
    RingDirichlet { pressure: f64 },
    /// No-flow rectangle (five-spot); the pressure anchor comes from producers.
    NoFlow,
}

/// Time-step rule: `dt = coeff * dx^exponent`, capped at `cfl_safety` times the
/// advective stability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepRule {
    pub coeff: f64,
    pub exponent: f64,
    pub cfl_safety: f64,
}

impl Default for TimeStepRule {
    fn default() -> Self {
        TimeStepRule { coeff: DT_COEFF, exponent: DT_EXPONENT, cfl_safety: 0.9 }
    }
}

impl TimeStepRule {
    pub fn base_dt(&self, dx: f64) -> f64 {
        if self.coeff == DT_COEFF && self.exponent == DT_EXPONENT {
            time_step(dx)
        } else {
            self.coeff * dx.powf(self.exponent)
        }
    }
}

/// Everything one run needs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Preset name: "radial" or "five-spot".
    pub name: String,
    pub n: usize,
    pub grid: GridSpec,
    pub model: FluidModel,
    pub scheme: Scheme,
    pub visc: ViscosityConfig,
    pub wells: Vec<WellSpec>,
    pub boundary: BoundarySpec,
    pub phi: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub dt_rule: TimeStepRule,
    pub solver_tol: f64,
    /// Offset of the injector cell center from the exact domain center
    /// (nonzero only for even grids, where no single center cell exists).
    pub injector_offset: (f64, f64),
}

impl ScenarioConfig {
    /// Total injection rate.
    pub fn total_injection(&self) -> f64 {
        self.wells
            .iter()
            .map(|w| match w.kind {
                WellKind::RateInjector { q } => q,
                WellKind::PressureProducer { .. } => 0.0,
            })
            .sum()
    }

    /// Center of the first injector cell, the reference point for front radii.
    pub fn injector_center(&self) -> (f64, f64) {
        self.wells
            .iter()
            .find_map(|w| match w.kind {
                WellKind::RateInjector { .. } => Some(self.grid.cell_center(w.cell.0, w.cell.1)),
                _ => None,
            })
            .unwrap_or_else(|| {
                let (nx, ny) = (self.grid.nx, self.grid.ny);
                self.grid.cell_center(nx / 2, ny / 2)
            })
    }

    /// Dirichlet cell list for the pressure assembly (ring cells only; producer
    /// pins are taken from the well list by the assembly itself).
    pub fn ring_dirichlet(&self) -> Vec<((usize, usize), f64)> {
        match self.boundary {
            BoundarySpec::RingDirichlet { pressure } => {
                self.grid.ring_cells().map(|c| (c, pressure)).collect()
            }
            BoundarySpec::NoFlow => Vec::new(),
        }
    }
}

fn injector_cell(n: usize) -> (usize, usize) {
    // Odd n has a true center cell; for even n the cell just up-right of the
    // center is used and the offset is recorded on the config.
    (n / 2, n / 2)
}

/// Alpha preset for the radial test: 67 for 5P, 400 for 9P.
pub fn radial_alpha(scheme: Scheme) -> f64 {
    match scheme.kind {
        crate::pressure::StencilKind::FivePoint => 67.0,
        crate::pressure::StencilKind::NinePoint => 400.0,
    }
}

/// Alpha preset for the five-spot test: 7 for 5P, 40 for 9P.
pub fn five_spot_alpha(scheme: Scheme) -> f64 {
    match scheme.kind {
        crate::pressure::StencilKind::FivePoint => 7.0,
        crate::pressure::StencilKind::NinePoint => 40.0,
    }
}

/// Radial test: a rate-1 injector at the center of a circular region inscribed
/// in an `n x n` unit-square grid (radius `1/2 - dx`), zero pressure on the
/// boundary ring, oil-saturated start. `t_end` puts the analytic front at 70%
/// of the circle radius so fronts are comparable across grid sizes.
pub fn radial_scenario(
    n: usize,
    m: f64,
    scheme: Scheme,
    viscosity_on: bool,
) -> Result<ScenarioConfig> {
    if n < 11 {
        return Err(SimError::InvalidInput(format!("radial scenario needs n >= 11, got {n}")));
    }
    let grid0 = build_grid(n, n, 1.0, 1.0)?;
    let radius = 0.5 - grid0.dx;
    let grid = circular_mask(&grid0, (0.5, 0.5), radius)?;
    let model = FluidModel::new(m)?;
    let inj = injector_cell(n);
    if !grid.is_active(inj.0, inj.1) {
        return Err(SimError::DegenerateDomain("injector cell outside the circle".into()));
    }
    let center = grid.cell_center(inj.0, inj.1);
    let q = 1.0;
    let phi = 1.0;
    let front_target = 0.7 * radius;
    let t_end = std::f64::consts::PI * phi * front_target * front_target / q;
    let visc = if viscosity_on {
        ViscosityConfig::on(radial_alpha(scheme))?
    } else {
        ViscosityConfig::off()
    };
    Ok(ScenarioConfig {
        name: "radial".into(),
        n,
        grid,
        model,
        scheme,
        visc,
        wells: vec![WellSpec { cell: inj, kind: WellKind::RateInjector { q } }],
        boundary: BoundarySpec::RingDirichlet { pressure: 0.0 },
        phi,
        t_end,
        snapshot_times: vec![t_end],
        dt_rule: TimeStepRule::default(),
        solver_tol: 1e-10,
        injector_offset: (center.0 - 0.5, center.1 - 0.5),
    })
}

/// Five-spot (1IW-4PW): a rate-1 injector at the center of the full unit
/// square, four producers pinned at zero pressure in the corner cells, no-flow
/// outer boundary. `t_end` puts the equivalent radial front at 70% of the
/// half-width.
pub fn five_spot_scenario(
    n: usize,
    m: f64,
    scheme: Scheme,
    viscosity_on: bool,
) -> Result<ScenarioConfig> {
    if n < 11 {
        return Err(SimError::InvalidInput(format!("five-spot scenario needs n >= 11, got {n}")));
    }
    let grid = build_grid(n, n, 1.0, 1.0)?;
    let model = FluidModel::new(m)?;
    let inj = injector_cell(n);
    let center = grid.cell_center(inj.0, inj.1);
    let q = 1.0;
    let phi = 1.0;
    let front_target = 0.7 * 0.5;
    let t_end = std::f64::consts::PI * phi * front_target * front_target / q;
    let visc = if viscosity_on {
        ViscosityConfig::on(five_spot_alpha(scheme))?
    } else {
        ViscosityConfig::off()
    };
    let mut wells = vec![WellSpec { cell: inj, kind: WellKind::RateInjector { q } }];
    for cell in [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
        wells.push(WellSpec { cell, kind: WellKind::PressureProducer { p_bh: 0.0 } });
    }
    Ok(ScenarioConfig {
        name: "five-spot".into(),
        n,
        grid,
        model,
        scheme,
        visc,
        wells,
        boundary: BoundarySpec::NoFlow,
        phi,
        t_end,
        snapshot_times: vec![t_end],
        dt_rule: TimeStepRule::default(),
        solver_tol: 1e-10,
        injector_offset: (center.0 - 0.5, center.1 - 0.5),
    })
}

/// Build a preset by name ("radial" or "five-spot").
pub fn by_name(
    name: &str,
    n: usize,
    m: f64,
    scheme: Scheme,
    viscosity_on: bool,
) -> Result<ScenarioConfig> {
    match name {
        "radial" => radial_scenario(n, m, scheme, viscosity_on),
        "five-spot" | "five_spot" | "fivespot" => five_spot_scenario(n, m, scheme, viscosity_on),
        other => Err(SimError::InvalidInput(format!(
            "unknown scenario '{other}' (use radial or five-spot)"
        ))),
    }
}

/// Analytic piston front radius `r_f = sqrt(Q t / (pi phi))`.
pub fn analytic_front_radius(q: f64, phi: f64, t: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(SimError::InvalidInput(format!("porosity must be positive, got {phi}")));
    }
    if q < 0.0 || t < 0.0 {
        return Err(SimError::InvalidInput(
            "rate and time must be nonnegative for the analytic front".into(),
        ));
    }
    Ok((q * t / (std::f64::consts::PI * phi)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::d4_map;
    use crate::pressure::StencilKind;

    #[test]
    fn radial_alpha_presets() {
        let five = radial_scenario(81, 10.0, Scheme::five_point(), true).unwrap();
        assert_eq!(five.visc.alpha, 67.0);
        assert!(five.visc.enabled);
        let nine = radial_scenario(81, 10.0, Scheme::nine_point(), true).unwrap();
        assert_eq!(nine.visc.alpha, 400.0);
        let off = radial_scenario(21, 1.0, Scheme::five_point(), false).unwrap();
        assert!(!off.visc.enabled);
        assert_eq!(off.total_injection(), 1.0);
    }

    #[test]
    fn five_spot_alpha_presets_and_wells() {
        let five = five_spot_scenario(81, 10.0, Scheme::five_point(), true).unwrap();
        assert_eq!(five.visc.alpha, 7.0);
        let nine = five_spot_scenario(81, 10.0, Scheme::nine_point(), true).unwrap();
        assert_eq!(nine.visc.alpha, 40.0);
        assert_eq!(nine.wells.len(), 5);
        let producers: Vec<_> = nine
            .wells
            .iter()
            .filter(|w| matches!(w.kind, WellKind::PressureProducer { .. }))
            .map(|w| w.cell)
            .collect();
        assert_eq!(producers, vec![(0, 0), (80, 0), (0, 80), (80, 80)]);
        assert!(matches!(nine.boundary, BoundarySpec::NoFlow));
    }

    #[test]
    fn radial_t_end_puts_front_at_seventy_percent() {
        let cfg = radial_scenario(41, 1.0, Scheme::five_point(), false).unwrap();
        let radius = 0.5 - cfg.grid.dx;
        let r_f = analytic_front_radius(1.0, 1.0, cfg.t_end).unwrap();
        assert!((r_f - 0.7 * radius).abs() < 1e-12);
    }

    #[test]
    fn scenario_configuration_is_d4_symmetric() {
        for (name, n) in [("radial", 21usize), ("five-spot", 13)] {
            let cfg = by_name(name, n, 10.0, Scheme::nine_point(), true).unwrap();
            assert!(cfg.grid.mask_is_d4_symmetric());
            // The well pattern maps onto itself under all 8 symmetries.
            let cells: Vec<(usize, usize)> = cfg.wells.iter().map(|w| w.cell).collect();
            for t in 0..8 {
                for &(i, j) in &cells {
                    assert!(cells.contains(&d4_map(n, t, i, j)), "{name} transform {t}");
                }
            }
            assert_eq!(cfg.injector_offset, (0.0, 0.0));
        }
    }

    #[test]
    fn even_grid_records_injector_offset() {
        let cfg = radial_scenario(20, 1.0, Scheme::five_point(), false).unwrap();
        assert!(cfg.injector_offset.0.abs() > 0.0);
        assert!(cfg.injector_offset.0.abs() <= cfg.grid.dx);
    }

    #[test]
    fn analytic_front_examples() {
        assert!(
            (analytic_front_radius(std::f64::consts::PI, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15
        );
        assert_eq!(analytic_front_radius(1.0, 1.0, 0.0).unwrap(), 0.0);
        let r = analytic_front_radius(0.5, 0.2, 2.0).unwrap();
        assert!((r - 1.261566261010080).abs() < 1e-12);
        assert!(analytic_front_radius(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn analytic_front_volume_identity() {
        for (q, phi, t) in [(1.0, 1.0, 0.3), (0.7, 0.4, 2.5), (3.0, 0.9, 0.01)] {
            let r = analytic_front_radius(q, phi, t).unwrap();
            assert!((std::f64::consts::PI * phi * r * r - q * t).abs() < 1e-12);
        }
    }

    #[test]
    fn scheme_parse_round_trip() {
        assert_eq!(Scheme::parse("5p").unwrap().kind, StencilKind::FivePoint);
        assert_eq!(Scheme::parse("9P").unwrap().kind, StencilKind::NinePoint);
        assert!(Scheme::parse("7p").is_err());
    }
}

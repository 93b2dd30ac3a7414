//! Field-level checks of the pressure solve on the radial configuration:
//! well-rate recovery through arbitrary boxes, per-cell conservation, square
//! symmetry, and the log-radial profile.

use waterflood::diagnostics::d4_asymmetry;
use waterflood::flux::FluidModel;
use waterflood::grid::{CellField, FaceField, GridSpec};
use waterflood::pressure::{
    assemble, face_velocity, max_cell_imbalance, solve, Scheme, WellKind, WellSpec,
};
use waterflood::scenario::radial_scenario;

struct RadialSolve {
    grid: GridSpec,
    p: CellField,
    vel: FaceField,
    imbalance: f64,
    injector: (usize, usize),
    q: f64,
}

fn solve_radial(n: usize, m: f64, scheme: Scheme) -> RadialSolve {
    let config = radial_scenario(n, m, scheme, false).unwrap();
    let grid = config.grid.clone();
    let s = {
        let mut s = CellField::zeros(&grid);
        for w in &config.wells {
            s.set(w.cell.0, w.cell.1, 1.0);
        }
        s
    };
    let ring = config.ring_dirichlet();
    let system = assemble(&grid, &s, &config.model, &config.wells, &ring, scheme, None).unwrap();
    let (p, stats) = solve(&system, 1e-11).unwrap();
    assert!(stats.relative_residual <= 1e-11);
    let vel = face_velocity(&system, &p);
    let imbalance = max_cell_imbalance(&grid, &system, &vel, &config.wells);
    let injector = config.wells[0].cell;
    let q = match config.wells[0].kind {
        WellKind::RateInjector { q } => q,
        _ => unreachable!(),
    };
    RadialSolve { grid, p, vel, imbalance, injector, q }
}

#[test]
fn box_flux_around_injector_recovers_the_rate() {
    // Net outflux through the four faces of axis-aligned boxes of growing size
    // equals the injection rate, for the five-point fluxes and for the routed
    // nine-point fluxes alike.
    for scheme in [Scheme::five_point(), Scheme::nine_point()] {
        let rs = solve_radial(41, 1.0, scheme);
        let (ic, jc) = rs.injector;
        for half in [1usize, 3, 6, 10] {
            let (i0, i1) = (ic - half, ic + half);
            let (j0, j1) = (jc - half, jc + half);
            let mut out = 0.0;
            for j in j0..=j1 {
                out += rs.vel.x_at(i1 + 1, j) * rs.grid.dy;
                out -= rs.vel.x_at(i0, j) * rs.grid.dy;
            }
            for i in i0..=i1 {
                out += rs.vel.y_at(i, j1 + 1) * rs.grid.dx;
                out -= rs.vel.y_at(i, j0) * rs.grid.dx;
            }
            assert!(
                (out - rs.q).abs() < 1e-6 * rs.q,
                "{} box {half}: {out} vs {}",
                scheme.label(),
                rs.q
            );
        }
    }
}

#[test]
fn per_cell_flux_imbalance_is_within_solver_tolerance() {
    for scheme in [Scheme::five_point(), Scheme::nine_point()] {
        let rs = solve_radial(41, 10.0, scheme);
        assert!(rs.imbalance <= 1e-8 * rs.q, "{}: {}", scheme.label(), rs.imbalance);
    }
}

#[test]
fn radial_pressure_is_d4_symmetric() {
    for scheme in [Scheme::five_point(), Scheme::nine_point()] {
        let rs = solve_radial(41, 1.0, scheme);
        let asym = d4_asymmetry(&rs.grid, &rs.p).unwrap();
        let scale = rs.p.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(asym < 1e-9 * scale.max(1.0), "{}: {asym}", scheme.label());
    }
}

#[test]
fn radial_pressure_matches_log_profile() {
    // Continuum solution for a point source in a disk with a fixed-pressure rim:
    // P(r) - P_rim is proportional to ln(R / r). Fit the single constant by
    // least squares over the annulus away from the well and the rim.
    let rs = solve_radial(81, 1.0, Scheme::five_point());
    let radius = 0.5 - rs.grid.dx;
    let (cx, cy) = rs.grid.cell_center(rs.injector.0, rs.injector.1);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut samples = Vec::new();
    for (i, j) in rs.grid.active_cells() {
        let (x, y) = rs.grid.cell_center(i, j);
        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        if r > 5.0 * rs.grid.dx && r < radius - 5.0 * rs.grid.dx {
            let basis = (radius / r).ln();
            let p = rs.p.get(i, j);
            num += basis * p;
            den += basis * basis;
            samples.push((p, basis));
        }
    }
    let coeff = num / den;
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for (p, basis) in samples {
        err2 += (p - coeff * basis).powi(2);
        ref2 += p * p;
    }
    let rel = (err2 / ref2).sqrt();
    assert!(rel < 0.05, "relative profile error {rel}");
    // The fitted constant is the expected Q / (2 pi lambda) within a few percent.
    let expected = rs.q / (2.0 * std::f64::consts::PI);
    assert!((coeff - expected).abs() < 0.05 * expected, "coeff {coeff} vs {expected}");
}

#[test]
fn uniform_saturation_stays_uniform_for_one_step() {
    // Divergence-free velocity away from the injector: advecting a uniform
    // field changes nothing (F(s0) factors out of the flux differences).
    use waterflood::transport::{advance, upwind_face_flux};
    for scheme in [Scheme::five_point(), Scheme::nine_point()] {
        let config = radial_scenario(21, 1.0, scheme, false).unwrap();
        let grid = config.grid.clone();
        let s0 = 0.42;
        let uniform = CellField::from_fn(&grid, |_, _| s0);
        let ring = config.ring_dirichlet();
        let system =
            assemble(&grid, &uniform, &config.model, &config.wells, &ring, scheme, None).unwrap();
        let (p, _) = solve(&system, 1e-12).unwrap();
        let vel = face_velocity(&system, &p);
        let flux = upwind_face_flux(&grid, &uniform, &vel, &config.model);
        let dt = config.dt_rule.base_dt(grid.dx);
        // No well source terms: the injector cell is excluded from the check
        // (its velocity divergence is the injection rate).
        let (new, _) =
            advance(&grid, &config.model, &uniform, &vel, &flux, None, 0.0, dt, 1.0, &[], &[])
                .unwrap();
        let injector = config.wells[0].cell;
        for (i, j) in grid.active_cells() {
            if (i, j) == injector {
                continue;
            }
            assert!(
                (new.get(i, j) - s0).abs() < 1e-13,
                "{} cell ({i}, {j}): {}",
                scheme.label(),
                new.get(i, j)
            );
        }
    }
}

#[test]
#[ignore = "manual timing probe: cargo test --release -- --ignored bench_radial"]
fn bench_radial_81() {
    let start = std::time::Instant::now();
    let config = radial_scenario(81, 10.0, Scheme::five_point(), true).unwrap();
    let out = waterflood::runner::run(&config, &waterflood::runner::RunOptions::default()).unwrap();
    eprintln!(
        "n=81 radial M=10 5P viscous: {} steps in {:.1} s",
        out.manifest.steps,
        start.elapsed().as_secs_f64()
    );
}

#[test]
#[ignore = "manual timing probe"]
fn bench_breakdown() {
    use std::time::Instant;
    use waterflood::transport::*;
    use waterflood::pressure::*;
    let config = radial_scenario(81, 10.0, Scheme::five_point(), true).unwrap();
    let grid = config.grid.clone();
    let mut s = CellField::zeros(&grid);
    for w in &config.wells { s.set(w.cell.0, w.cell.1, 1.0); }
    let ring = config.ring_dirichlet();
    let mut state = TransportState::new(s);
    let mut prev_p: Option<CellField> = None;
    let mut prev_vel: Option<FaceField> = None;
    let base_dt = config.dt_rule.base_dt(grid.dx);
    let (mut t_asm, mut t_solve, mut t_vel, mut t_wlr, mut t_adv) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    let mut iters = 0usize;
    let n_steps = 500;
    for _ in 0..n_steps {
        let t0 = Instant::now();
        let sys = assemble(&grid, &state.s, &config.model, &config.wells, &ring, config.scheme, prev_vel.as_ref()).unwrap();
        t_asm += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let (p, st) = solve_with_guess(&sys, 1e-10, prev_p.as_ref()).unwrap();
        iters += st.iterations;
        t_solve += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let vel = face_velocity(&sys, &p);
        let rates = producer_rates(&sys, &p, &config.wells);
        let _ = max_cell_imbalance(&grid, &sys, &vel, &config.wells);
        t_vel += t0.elapsed().as_secs_f64();
        let dt = base_dt.min(0.9 * cfl_limit(&grid, &vel, &config.model, 1.0));
        let flux = upwind_face_flux(&grid, &state.s, &vel, &config.model);
        let t0 = Instant::now();
        let (eps, c) = if state.prev.is_some() {
            let prev_dt = state.prev.as_ref().unwrap().dt;
            let e = compute_wlr(&grid, state.wlr_levels(&flux).unwrap(), prev_dt);
            let eps = epsilon_faces(&grid, &e);
            let em = eps.max_abs();
            (Some(eps), viscosity_coefficient(em, &grid, dt, config.visc.alpha))
        } else { (None, 0.0) };
        t_wlr += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let (s2, _) = advance(&grid, &config.model, &state.s, &vel, &flux, eps.as_ref(), c, dt, 1.0, &config.wells, &rates).unwrap();
        t_adv += t0.elapsed().as_secs_f64();
        state = state.advanced(s2, flux, dt);
        prev_p = Some(p); prev_vel = Some(vel);
    }
    eprintln!("per {n_steps} steps: asm {t_asm:.2}s solve {t_solve:.2}s (iters {iters}) vel {t_vel:.2}s wlr {t_wlr:.2}s adv {t_adv:.2}s");
}

//! Run orchestration: the IMPES loop (pressure solve -> face velocities ->
//! WLR/eps/C -> saturation advance), snapshot and manifest files, the flat
//! `key = value` config format, and deterministic parameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::diagnostics::{audit, scheme_discrepancy, GoeReport};
use crate::error::{Result, SimError};
use crate::grid::{CellField, FaceField, GridSpec};
use crate::pressure::{
    assemble, face_velocity, max_cell_imbalance, producer_rates, solve_with_guess,
    PressureSolver, Scheme, WellKind,
};
use crate::scenario::{analytic_front_radius, by_name, ScenarioConfig, TimeStepRule};
use crate::transport::{
    advance, cfl_limit, compute_wlr, epsilon_faces, upwind_face_flux, viscosity_coefficient,
    TransportState,
};

/// Options that do not affect the computed fields.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where to write snapshots and the manifest; in-memory run when empty.
    pub out_dir: Option<PathBuf>,
    /// Progress line to stderr every this many steps (0 = silent).
    pub progress_every: u64,
}

#[derive(Debug, Clone)]
pub struct SnapshotEntry {
    /// Requested snapshot time.
    pub requested: f64,
    /// Time level actually emitted (the nearest step).
    pub time: f64,
    pub step: u64,
    pub file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub version: String,
    /// Config echo in the config-file format; sufficient to re-run bit-identically.
    pub config_lines: Vec<String>,
    pub steps: u64,
    pub wall_ms: u128,
    pub snapshots: Vec<SnapshotEntry>,
    pub report: GoeReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub s_final: CellField,
    pub p_final: CellField,
}

/// Config echo in the flat `key = value` file format. Floats use the shortest
/// representation that round-trips exactly, so a manifest re-run is bit-identical.
pub fn config_lines(config: &ScenarioConfig) -> Vec<String> {
    let mut lines = vec![
        format!("scenario = {}", config.name),
        format!("n = {}", config.n),
        format!("m = {}", config.model.m),
        format!("scheme = {}", config.scheme.label()),
        format!("viscosity = {}", if config.visc.enabled { "on" } else { "off" }),
        format!("alpha = {}", config.visc.alpha),
    ];
    if let Some(c) = config.visc.c_override {
        lines.push(format!("c_override = {c}"));
    }
    lines.push(format!("q = {}", config.total_injection()));
    lines.push(format!("phi = {}", config.phi));
    lines.push(format!("t_end = {}", config.t_end));
    let snaps: Vec<String> = config.snapshot_times.iter().map(|t| t.to_string()).collect();
    lines.push(format!("snapshots = {}", snaps.join(",")));
    lines.push(format!("dt_coeff = {}", config.dt_rule.coeff));
    lines.push(format!("dt_exponent = {}", config.dt_rule.exponent));
    lines.push(format!("cfl_safety = {}", config.dt_rule.cfl_safety));
    lines.push(format!("solver_tol = {}", config.solver_tol));
    lines
}

/// Raw scenario parameters as read from a config file or CLI flags. Unset
/// fields fall back to the preset defaults when building.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioParams {
    pub scenario: Option<String>,
    pub n: Option<usize>,
    pub m: Option<f64>,
    pub scheme: Option<String>,
    pub viscosity: Option<bool>,
    pub alpha: Option<f64>,
    pub c_override: Option<f64>,
    pub q: Option<f64>,
    pub phi: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshots: Option<Vec<f64>>,
    pub dt_coeff: Option<f64>,
    pub dt_exponent: Option<f64>,
    pub cfl_safety: Option<f64>,
    pub solver_tol: Option<f64>,
}

impl ScenarioParams {
    /// Overlay `other` on top of `self` (CLI flags over file values).
    pub fn merged(mut self, other: &ScenarioParams) -> ScenarioParams {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field.clone();
                }
            };
        }
        take!(scenario);
        take!(n);
        take!(m);
        take!(scheme);
        take!(viscosity);
        take!(alpha);
        take!(c_override);
        take!(q);
        take!(phi);
        take!(t_end);
        take!(snapshots);
        take!(dt_coeff);
        take!(dt_exponent);
        take!(cfl_safety);
        take!(solver_tol);
        self
    }

    pub fn build(&self) -> Result<ScenarioConfig> {
        let name = self.scenario.as_deref().unwrap_or("radial");
        let n = self.n.unwrap_or(41);
        let m = self.m.unwrap_or(10.0);
        let scheme = Scheme::parse(self.scheme.as_deref().unwrap_or("5p"))?;
        let viscosity = self.viscosity.unwrap_or(false);
        let mut config = by_name(name, n, m, scheme, viscosity)?;

        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0) {
                return Err(SimError::InvalidInput(format!("alpha must be positive, got {alpha}")));
            }
            config.visc.alpha = alpha;
        }
        config.visc.c_override = self.c_override;
        let mut front_target = analytic_front_radius(
            config.total_injection(),
            config.phi,
            config.t_end,
        )?;
        if let Some(q) = self.q {
            if !(q > 0.0) {
                return Err(SimError::InvalidInput(format!("q must be positive, got {q}")));
            }
            let injectors = config
                .wells
                .iter()
                .filter(|w| matches!(w.kind, WellKind::RateInjector { .. }))
                .count()
                .max(1);
            for well in &mut config.wells {
                if let WellKind::RateInjector { .. } = well.kind {
                    well.kind = WellKind::RateInjector { q: q / injectors as f64 };
                }
            }
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0) {
                return Err(SimError::InvalidInput(format!("phi must be positive, got {phi}")));
            }
            config.phi = phi;
        }
        // Keep the preset's front-position target when rate or porosity change.
        if self.q.is_some() || self.phi.is_some() {
            config.t_end = std::f64::consts::PI * config.phi * front_target * front_target
                / config.total_injection();
            config.snapshot_times = vec![config.t_end];
        }
        if let Some(t_end) = self.t_end {
            if t_end < 0.0 {
                return Err(SimError::InvalidInput(format!("t_end must be >= 0, got {t_end}")));
            }
            config.t_end = t_end;
            config.snapshot_times = vec![t_end];
            front_target = analytic_front_radius(config.total_injection(), config.phi, t_end)?;
        }
        let _ = front_target;
        if let Some(snaps) = &self.snapshots {
            config.snapshot_times = snaps.clone();
        }
        let defaults = TimeStepRule::default();
        config.dt_rule = TimeStepRule {
            coeff: self.dt_coeff.unwrap_or(defaults.coeff),
            exponent: self.dt_exponent.unwrap_or(defaults.exponent),
            cfl_safety: self.cfl_safety.unwrap_or(defaults.cfl_safety),
        };
        if let Some(tol) = self.solver_tol {
            if !(tol > 0.0) {
                return Err(SimError::InvalidInput(format!("solver_tol must be positive, got {tol}")));
            }
            config.solver_tol = tol;
        }
        Ok(config)
    }
}

/// Parse the flat `key = value` config format. Lines starting with `#` are
/// comments; parsing stops at a `# results` marker so a run manifest is itself
/// a valid config. Unknown keys are errors.
pub fn parse_config_str(text: &str, path: &str) -> Result<ScenarioParams> {
    let mut params = ScenarioParams::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line == "# results" {
            break;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| SimError::Parse {
            path: path.to_string(),
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected 'key = value'".into()))?;
        let key = key.trim();
        let value = value.trim();
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| err(format!("bad number '{v}'")))
        };
        match key {
            "scenario" => params.scenario = Some(value.to_string()),
            "n" => {
                params.n =
                    Some(value.parse::<usize>().map_err(|_| err(format!("bad count '{value}'")))?)
            }
            "m" => params.m = Some(parse_f64(value)?),
            "scheme" => params.scheme = Some(value.to_string()),
            "viscosity" => {
                params.viscosity = Some(match value {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    other => return Err(err(format!("viscosity must be on/off, got '{other}'"))),
                })
            }
            "alpha" => params.alpha = Some(parse_f64(value)?),
            "c_override" => params.c_override = Some(parse_f64(value)?),
            "q" => params.q = Some(parse_f64(value)?),
            "phi" => params.phi = Some(parse_f64(value)?),
            "t_end" => params.t_end = Some(parse_f64(value)?),
            "snapshots" => {
                let mut times = Vec::new();
                for piece in value.split(',') {
                    let piece = piece.trim();
                    if !piece.is_empty() {
                        times.push(parse_f64(piece)?);
                    }
                }
                params.snapshots = Some(times);
            }
            "dt_coeff" => params.dt_coeff = Some(parse_f64(value)?),
            "dt_exponent" => params.dt_exponent = Some(parse_f64(value)?),
            "cfl_safety" => params.cfl_safety = Some(parse_f64(value)?),
            "solver_tol" => params.solver_tol = Some(parse_f64(value)?),
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }
    Ok(params)
}

pub fn load_config_file(path: &Path) -> Result<ScenarioParams> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.display().to_string(), source }
}

fn write_snapshot(
    path: &Path,
    config: &ScenarioConfig,
    s: &CellField,
    t: f64,
    step: u64,
) -> Result<()> {
    let grid = &config.grid;
    let mut text = String::new();
    let _ = writeln!(text, "# waterflood saturation snapshot");
    let _ = writeln!(text, "field = saturation");
    let _ = writeln!(text, "scenario = {}", config.name);
    let _ = writeln!(text, "nx = {}", grid.nx);
    let _ = writeln!(text, "ny = {}", grid.ny);
    let _ = writeln!(text, "dx = {}", grid.dx);
    let _ = writeln!(text, "dy = {}", grid.dy);
    let _ = writeln!(text, "origin_x = {}", grid.origin.0);
    let _ = writeln!(text, "origin_y = {}", grid.origin.1);
    let _ = writeln!(text, "t = {t}");
    let _ = writeln!(text, "step = {step}");
    let _ = writeln!(text, "m = {}", config.model.m);
    let _ = writeln!(text, "scheme = {}", config.scheme.label());
    let _ = writeln!(text, "viscosity = {}", if config.visc.enabled { "on" } else { "off" });
    let _ = writeln!(text, "alpha = {}", config.visc.alpha);
    let _ = writeln!(text, "phi = {}", config.phi);
    let _ = writeln!(text, "q = {}", config.total_injection());
    let _ = writeln!(text, "data:");
    for j in 0..grid.ny {
        let mut row = String::new();
        for i in 0..grid.nx {
            if i > 0 {
                row.push(' ');
            }
            let _ = write!(row, "{}", s.get(i, j));
        }
        let _ = writeln!(text, "{row}");
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Parsed snapshot: header keys plus the saturation field.
pub struct Snapshot {
    pub header: Vec<(String, String)>,
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut header = Vec::new();
    let mut data = Vec::new();
    let mut in_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if in_data {
            for piece in line.split_ascii_whitespace() {
                data.push(piece.parse::<f64>().map_err(|_| SimError::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: format!("bad value '{piece}'"),
                })?);
            }
        } else if line == "data:" {
            in_data = true;
        } else if let Some((k, v)) = line.split_once('=') {
            header.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let get_dim = |key: &str| -> Result<usize> {
        header
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse::<usize>().ok())
            .ok_or_else(|| SimError::Parse {
                path: path.display().to_string(),
                line: 0,
                message: format!("missing {key}"),
            })
    };
    let nx = get_dim("nx")?;
    let ny = get_dim("ny")?;
    if data.len() != nx * ny {
        return Err(SimError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("expected {} values, found {}", nx * ny, data.len()),
        });
    }
    Ok(Snapshot { header, nx, ny, data })
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# waterflood run manifest");
    let _ = writeln!(text, "# re-runnable as a config file; results below the marker");
    for line in &manifest.config_lines {
        let _ = writeln!(text, "{line}");
    }
    let _ = writeln!(text, "# results");
    let _ = writeln!(text, "version = {}", manifest.version);
    let _ = writeln!(text, "steps = {}", manifest.steps);
    let _ = writeln!(text, "wall_ms = {}", manifest.wall_ms);
    for snap in &manifest.snapshots {
        let _ = writeln!(
            text,
            "snapshot = {} requested={} t={} step={}",
            snap.file.as_deref().unwrap_or("-"),
            snap.requested,
            snap.time,
            snap.step
        );
    }
    for line in manifest.report.lines() {
        let _ = writeln!(text, "{line}");
    }
    fs::write(path, text).map_err(io_err(path))
}

struct SnapshotWriter<'a> {
    config: &'a ScenarioConfig,
    out_dir: Option<&'a Path>,
    entries: Vec<SnapshotEntry>,
}

impl<'a> SnapshotWriter<'a> {
    fn emit(&mut self, s: &CellField, requested: f64, t: f64, step: u64) -> Result<()> {
        let file = match self.out_dir {
            Some(dir) => {
                let name = format!("saturation_{:03}.txt", self.entries.len());
                write_snapshot(&dir.join(&name), self.config, s, t, step)?;
                Some(name)
            }
            None => None,
        };
        self.entries.push(SnapshotEntry { requested, time: t, step, file });
        Ok(())
    }
}

/// Run one scenario to `t_end`: assemble and solve the pressure from the
/// current saturation, reconstruct face velocities, apply the time-step rule
/// (power law capped by the advective CFL bound and clipped to land exactly on
/// `t_end`), evaluate the WLR viscosity from the second step on, advance the
/// saturation, and emit snapshots at the requested times (nearest step).
/// Identical inputs produce byte-identical outputs.
pub fn run(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let start = Instant::now();
    let grid = &config.grid;
    if config.t_end < 0.0 || !config.t_end.is_finite() {
        return Err(SimError::InvalidInput(format!("t_end must be finite and >= 0, got {}", config.t_end)));
    }
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let ring = config.ring_dirichlet();

    let mut s0 = CellField::zeros(grid);
    for well in &config.wells {
        if let WellKind::RateInjector { .. } = well.kind {
            s0.set(well.cell.0, well.cell.1, 1.0);
        }
    }
    let mut state = TransportState::new(s0);
    let mut solver = PressureSolver::new();
    let mut prev_p: Option<CellField> = None;
    let mut prev_vel: Option<FaceField> = None;
    let mut mass_residual_max = 0.0f64;
    let mut flux_imbalance_max = 0.0f64;
    let base_dt = config.dt_rule.base_dt(grid.dx);
    if !(base_dt > 0.0) {
        return Err(SimError::InvalidInput(format!("time-step rule produced dt = {base_dt}")));
    }

    let mut pending: Vec<f64> = config.snapshot_times.clone();
    pending.sort_by(|a, b| a.total_cmp(b));
    pending.dedup();
    let mut pending = std::collections::VecDeque::from(pending);
    let mut writer = SnapshotWriter {
        config,
        out_dir: opts.out_dir.as_deref(),
        entries: Vec::new(),
    };
    while pending.front().is_some_and(|&tau| tau <= 0.0) {
        let tau = pending.pop_front().unwrap();
        writer.emit(&state.s, tau, 0.0, 0)?;
    }

    let step_cap = (config.t_end / base_dt * 4.0) as u64 + 100_000;
    let diffusion_bound =
        (1.0 + (grid.dy / grid.dx).powi(2)) / config.visc.alpha * (1.0 + 1e-9);

    while state.t < config.t_end {
        if state.step >= step_cap {
            return Err(SimError::InvalidInput(format!(
                "exceeded step cap {step_cap} before reaching t_end (dt collapsed?)"
            )));
        }
        let system = assemble(
            grid,
            &state.s,
            &config.model,
            &config.wells,
            &ring,
            config.scheme,
            prev_vel.as_ref(),
        )?;
        let (p, _stats) = solver.solve(&system, config.solver_tol, prev_p.as_ref())?;
        let vel = face_velocity(&system, &p);
        let rates = producer_rates(&system, &p, &config.wells);
        flux_imbalance_max =
            flux_imbalance_max.max(max_cell_imbalance(grid, &system, &vel, &config.wells));

        let mut dt = base_dt.min(config.dt_rule.cfl_safety * cfl_limit(grid, &vel, &config.model, config.phi));
        let remaining = config.t_end - state.t;
        let clipped = dt >= remaining;
        if clipped {
            dt = remaining;
        }

        let flux = upwind_face_flux(grid, &state.s, &vel, &config.model);
        let mut eps_max = 0.0;
        let (eps, c_coeff) = if config.visc.enabled && state.prev.is_some() {
            let prev_dt = state.prev.as_ref().map(|p| p.dt).unwrap_or(dt);
            let levels = state.wlr_levels(&flux)?;
            let e = compute_wlr(grid, levels, prev_dt);
            let eps = epsilon_faces(grid, &e);
            eps_max = eps.max_abs();
            let c = config
                .visc
                .c_override
                .unwrap_or_else(|| viscosity_coefficient(eps_max, grid, dt, config.visc.alpha));
            (Some(eps), c)
        } else {
            (None, 0.0)
        };
        if config.visc.c_override.is_none() && c_coeff > 0.0 {
            // Eq.-of-construction identity: the diffusive stability number never
            // exceeds (1 + (dy/dx)^2) / alpha.
            let number = c_coeff * eps_max * dt / (grid.dx * grid.dx);
            if !(number <= diffusion_bound) {
                return Err(SimError::InvalidInput(format!(
                    "diffusive stability number {number} exceeds bound {diffusion_bound}"
                )));
            }
        }

        let t_old = state.t;
        let t_new = if clipped { config.t_end } else { t_old + dt };
        let mut deferred = 0usize;
        while let Some(&tau) = pending.front() {
            if tau > t_new {
                break;
            }
            pending.pop_front();
            if tau - t_old <= t_new - tau {
                writer.emit(&state.s, tau, t_old, state.step)?;
            } else {
                deferred += 1;
            }
        }

        let (s_next, balance) = advance(
            grid,
            &config.model,
            &state.s,
            &vel,
            &flux,
            eps.as_ref(),
            c_coeff,
            dt,
            config.phi,
            &config.wells,
            &rates,
        )?;
        mass_residual_max = mass_residual_max.max(balance.residual_rel);

        if opts.progress_every > 0 && state.step % opts.progress_every == 0 {
            let over = s_next.data.iter().fold(0.0f64, |m, v| m.max(v - 1.0)).max(0.0);
            eprintln!(
                "step {:>7}  t {:.6e}  dt {:.3e}  eps_max {:.3e}  C {:.3e}  overshoot {:.3e}",
                state.step, t_new, dt, eps_max, c_coeff, over
            );
        }

        state = state.advanced(s_next, flux, dt);
        state.t = t_new;
        prev_p = Some(p);
        prev_vel = Some(vel);
        for _ in 0..deferred {
            writer.emit(&state.s, state.t, state.t, state.step)?;
        }
    }
    // Requested times beyond t_end clamp to the final state.
    while let Some(tau) = pending.pop_front() {
        writer.emit(&state.s, tau, state.t, state.step)?;
    }

    let r_f = analytic_front_radius(config.total_injection(), config.phi, state.t)?;
    let report = audit(
        grid,
        &state.s,
        config.injector_center(),
        r_f,
        mass_residual_max,
        flux_imbalance_max,
    )?;
    let p_final = match prev_p {
        Some(p) => p,
        None => {
            // Zero-step run: still report a consistent pressure field.
            let system = assemble(
                grid,
                &state.s,
                &config.model,
                &config.wells,
                &ring,
                config.scheme,
                None,
            )?;
            solve_with_guess(&system, config.solver_tol, None)?.0
        }
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_lines: config_lines(config),
        steps: state.step,
        wall_ms: start.elapsed().as_millis(),
        snapshots: writer.entries,
        report,
    };
    if let Some(dir) = &opts.out_dir {
        write_manifest(&dir.join("manifest.txt"), &manifest)?;
    }
    Ok(RunOutcome { manifest, s_final: state.s, p_final })
}

/// One row of a sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scenario: String,
    pub scheme: String,
    pub n: usize,
    pub m: f64,
    pub viscosity: bool,
    pub alpha: f64,
    pub steps: u64,
    /// "ok" or the error string.
    pub status: String,
    pub report: Option<GoeReport>,
}

impl SweepRow {
    fn key(&self) -> (String, usize, u64, String, u8) {
        (
            self.scenario.clone(),
            self.n,
            self.m.to_bits(),
            self.scheme.clone(),
            self.viscosity as u8,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    /// Tab-separated table, one row per run, deterministic field order.
    pub fn to_tsv(&self) -> String {
        let mut text = String::from(
            "scenario\tscheme\tn\tm\tviscosity\talpha\tstatus\tsteps\tcircularity\t\
             radius_mean\tradius_analytic\tovershoot\tundershoot\tfront_width_x\t\
             d4_asymmetry\tmass_residual_max\tflux_imbalance_max\tscheme_discrepancy_l1\n",
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| x.to_string());
        for row in &self.rows {
            let (c, rm, ra, ov, un, fw, d4, mr, fi, sd) = match &row.report {
                Some(r) => (
                    r.circularity.to_string(),
                    r.radius_mean.to_string(),
                    r.radius_analytic.to_string(),
                    r.overshoot.to_string(),
                    r.undershoot.to_string(),
                    opt(r.front_width_x),
                    opt(r.d4_asymmetry),
                    r.mass_residual_max.to_string(),
                    r.flux_imbalance_max.to_string(),
                    opt(r.scheme_discrepancy_l1),
                ),
                None => (
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                ),
            };
            let _ = writeln!(
                text,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.scenario,
                row.scheme,
                row.n,
                row.m,
                if row.viscosity { "on" } else { "off" },
                row.alpha,
                row.status,
                row.steps,
                c,
                rm,
                ra,
                ov,
                un,
                fw,
                d4,
                mr,
                fi,
                sd
            );
        }
        text
    }
}

/// Directory name for one sweep run.
pub fn run_dir_name(config: &ScenarioConfig) -> String {
    format!(
        "{}_{}_n{}_m{}_{}",
        config.name,
        config.scheme.label(),
        config.n,
        config.model.m,
        if config.visc.enabled { "on" } else { "off" }
    )
}

/// Run every config (concurrently up to `parallelism`), aggregate the reports
/// into one table, and pair runs differing only in the scheme to fill the
/// inter-scheme discrepancy column. A failed run becomes a failed row; it does
/// not abort the others. Output is independent of the parallelism level.
pub fn sweep(
    configs: &[ScenarioConfig],
    out_dir: Option<&Path>,
    parallelism: usize,
) -> Result<SweepSummary> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    struct Slot {
        row: SweepRow,
        s_final: Option<CellField>,
        grid: GridSpec,
    }
    let slots: Mutex<Vec<Option<Slot>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = parallelism.max(1).min(configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= configs.len() {
                    break;
                }
                let config = &configs[k];
                let opts = RunOptions {
                    out_dir: out_dir.map(|d| d.join(run_dir_name(config))),
                    progress_every: 0,
                };
                let outcome = run(config, &opts);
                let (status, steps, report, s_final) = match outcome {
                    Ok(out) => ("ok".to_string(), out.manifest.steps, Some(out.manifest.report), Some(out.s_final)),
                    Err(e) => (format!("error: {e}"), 0, None, None),
                };
                let slot = Slot {
                    row: SweepRow {
                        scenario: config.name.clone(),
                        scheme: config.scheme.label().to_string(),
                        n: config.n,
                        m: config.model.m,
                        viscosity: config.visc.enabled,
                        alpha: config.visc.alpha,
                        steps,
                        status,
                        report,
                    },
                    s_final,
                    grid: config.grid.clone(),
                };
                slots.lock().unwrap()[k] = Some(slot);
            });
        }
    });
    let mut slots: Vec<Slot> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("worker filled every slot"))
        .collect();

    // Pair 5P/9P runs that share everything else and fill the discrepancy.
    for a in 0..slots.len() {
        for b in (a + 1)..slots.len() {
            let (ra, rb) = (&slots[a].row, &slots[b].row);
            if ra.scenario == rb.scenario
                && ra.n == rb.n
                && ra.m == rb.m
                && ra.viscosity == rb.viscosity
                && ra.scheme != rb.scheme
            {
                if let (Some(sa), Some(sb)) = (&slots[a].s_final, &slots[b].s_final) {
                    if let Ok(d) = scheme_discrepancy(&slots[a].grid, sa, sb) {
                        if let Some(rep) = slots[a].row.report.as_mut() {
                            rep.scheme_discrepancy_l1 = Some(d);
                        }
                        if let Some(rep) = slots[b].row.report.as_mut() {
                            rep.scheme_discrepancy_l1 = Some(d);
                        }
                    }
                }
            }
        }
    }

    let mut rows: Vec<SweepRow> = slots.into_iter().map(|s| s.row).collect();
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    let summary = SweepSummary { rows };
    if let Some(dir) = out_dir {
        let path = dir.join("summary.tsv");
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(summary.to_tsv().as_bytes()).map_err(io_err(&path))?;
    }
    Ok(summary)
}

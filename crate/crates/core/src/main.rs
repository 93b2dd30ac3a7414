//! Command-line interface: `run` executes one scenario, `sweep` runs a
//! cross-product matrix of configurations. Progress goes to stderr; machine
//! output goes to files under `--out`.

use std::path::PathBuf;
use std::process::ExitCode;

use waterflood::pressure::Scheme;
use waterflood::runner::{load_config_file, run, sweep, RunOptions, ScenarioParams};
use waterflood::{ErrorCategory, Result, SimError};

const USAGE: &str = "\
waterflood - two-phase porous-media flow simulator

USAGE:
    waterflood run   [OPTIONS]
    waterflood sweep [OPTIONS]

RUN OPTIONS (one value each):
    --config FILE           flat key = value file; flags override file values
    --scenario NAME         radial | five-spot          [default: radial]
    --n N                   cells per side              [default: 41]
    --M RATIO               viscosity ratio mu_o/mu_w   [default: 10]
    --scheme S              5p | 9p                     [default: 5p]
    --viscosity on|off      adaptive artificial viscosity [default: off]
    --alpha A               override the preset viscosity parameter
    --c-override C          fixed viscosity coefficient (testing)
    --q Q                   total injection rate        [preset: 1]
    --phi PHI               porosity                    [preset: 1]
    --t-end T               end time                    [preset: front at 70%]
    --snapshots T1,T2,...   snapshot times              [preset: t_end]
    --dt-coeff C            time-step rule coefficient  [default: 33.5]
    --dt-exponent E         time-step rule exponent     [default: 3.3]
    --cfl-safety S          CFL cap safety factor       [default: 0.9]
    --solver-tol TOL        pressure solve tolerance    [default: 1e-10]
    --out DIR               write snapshots + manifest here
    --progress-every K      stderr progress cadence     [default: 500; 0 = off]

SWEEP OPTIONS:
    as above, but --scenario, --n, --M, --scheme, --viscosity accept
    comma-separated lists and the cross product is run;
    --parallelism P         concurrent runs             [default: 2]

EXIT CODES: 0 ok, 2 usage/config, 3 solver, 4 CFL, 5 I/O.
";

struct CliArgs {
    command: String,
    config_file: Option<PathBuf>,
    // Single-valued pieces collect into `scalar`; list-valued pieces (sweep)
    // into the corresponding list fields.
    scalar: ScenarioParams,
    scenarios: Option<Vec<String>>,
    ns: Option<Vec<usize>>,
    ms: Option<Vec<f64>>,
    schemes: Option<Vec<String>>,
    viscosities: Option<Vec<bool>>,
    out: Option<PathBuf>,
    parallelism: usize,
    progress_every: u64,
}

fn usage_err(msg: impl Into<String>) -> SimError {
    SimError::InvalidInput(msg.into())
}

fn parse_flag_f64(flag: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| usage_err(format!("bad value '{v}' for {flag}")))
}

fn parse_args(args: &[String]) -> Result<CliArgs> {
    let command = args.first().cloned().ok_or_else(|| usage_err("missing subcommand"))?;
    if command != "run" && command != "sweep" {
        return Err(usage_err(format!("unknown subcommand '{command}'")));
    }
    let mut cli = CliArgs {
        command,
        config_file: None,
        scalar: ScenarioParams::default(),
        scenarios: None,
        ns: None,
        ms: None,
        schemes: None,
        viscosities: None,
        out: None,
        parallelism: 2,
        progress_every: 500,
    };
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = || -> Result<&String> {
            it.next().ok_or_else(|| usage_err(format!("flag {flag} needs a value")))
        };
        match flag.as_str() {
            "--config" => cli.config_file = Some(PathBuf::from(value()?)),
            "--scenario" => {
                cli.scenarios = Some(value()?.split(',').map(|s| s.trim().to_string()).collect())
            }
            "--n" => {
                let v = value()?;
                let list: Result<Vec<usize>> = v
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<usize>().map_err(|_| usage_err(format!("bad --n '{p}'")))
                    })
                    .collect();
                cli.ns = Some(list?);
            }
            "--M" | "--m" => {
                let v = value()?;
                let list: Result<Vec<f64>> = v
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|_| usage_err(format!("bad --M '{p}'")))
                    })
                    .collect();
                cli.ms = Some(list?);
            }
            "--scheme" => {
                let v = value()?;
                let list: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                for s in &list {
                    Scheme::parse(s)?;
                }
                cli.schemes = Some(list);
            }
            "--viscosity" => {
                let v = value()?;
                let list: Result<Vec<bool>> = v
                    .split(',')
                    .map(|p| match p.trim() {
                        "on" => Ok(true),
                        "off" => Ok(false),
                        other => Err(usage_err(format!("bad --viscosity '{other}'"))),
                    })
                    .collect();
                cli.viscosities = Some(list?);
            }
            "--alpha" => cli.scalar.alpha = Some(parse_flag_f64(flag, value()?)?),
            "--c-override" => cli.scalar.c_override = Some(parse_flag_f64(flag, value()?)?),
            "--q" => cli.scalar.q = Some(parse_flag_f64(flag, value()?)?),
            "--phi" => cli.scalar.phi = Some(parse_flag_f64(flag, value()?)?),
            "--t-end" => cli.scalar.t_end = Some(parse_flag_f64(flag, value()?)?),
            "--snapshots" => {
                let v = value()?;
                let list: Result<Vec<f64>> = v
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| parse_flag_f64(flag, p.trim()))
                    .collect();
                cli.scalar.snapshots = Some(list?);
            }
            "--dt-coeff" => cli.scalar.dt_coeff = Some(parse_flag_f64(flag, value()?)?),
            "--dt-exponent" => cli.scalar.dt_exponent = Some(parse_flag_f64(flag, value()?)?),
            "--cfl-safety" => cli.scalar.cfl_safety = Some(parse_flag_f64(flag, value()?)?),
            "--solver-tol" => cli.scalar.solver_tol = Some(parse_flag_f64(flag, value()?)?),
            "--out" => cli.out = Some(PathBuf::from(value()?)),
            "--parallelism" => {
                cli.parallelism = value()?
                    .parse::<usize>()
                    .map_err(|_| usage_err("bad --parallelism"))?
                    .max(1)
            }
            "--progress-every" => {
                cli.progress_every =
                    value()?.parse::<u64>().map_err(|_| usage_err("bad --progress-every"))?
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(usage_err(format!("unknown flag '{other}'"))),
        }
    }
    Ok(cli)
}

fn execute(cli: CliArgs) -> Result<()> {
    let file_params = match &cli.config_file {
        Some(path) => load_config_file(path)?,
        None => ScenarioParams::default(),
    };
    if cli.command == "run" {
        let single = |list: &Option<Vec<String>>, what: &str| -> Result<Option<String>> {
            match list {
                None => Ok(None),
                Some(v) if v.len() == 1 => Ok(Some(v[0].clone())),
                Some(_) => Err(usage_err(format!("run takes a single {what}"))),
            }
        };
        let mut flags = cli.scalar.clone();
        flags.scenario = single(&cli.scenarios, "--scenario")?;
        flags.scheme = single(&cli.schemes, "--scheme")?;
        if let Some(ns) = &cli.ns {
            if ns.len() != 1 {
                return Err(usage_err("run takes a single --n"));
            }
            flags.n = Some(ns[0]);
        }
        if let Some(ms) = &cli.ms {
            if ms.len() != 1 {
                return Err(usage_err("run takes a single --M"));
            }
            flags.m = Some(ms[0]);
        }
        if let Some(vs) = &cli.viscosities {
            if vs.len() != 1 {
                return Err(usage_err("run takes a single --viscosity"));
            }
            flags.viscosity = Some(vs[0]);
        }
        let config = file_params.merged(&flags).build()?;
        let opts = RunOptions { out_dir: cli.out.clone(), progress_every: cli.progress_every };
        let outcome = run(&config, &opts)?;
        eprintln!("run complete: {} steps, t = {}", outcome.manifest.steps, config.t_end);
        for line in outcome.manifest.report.lines() {
            eprintln!("  {line}");
        }
        if let Some(dir) = &cli.out {
            eprintln!("wrote {}", dir.join("manifest.txt").display());
        }
    } else {
        let scenarios = cli
            .scenarios
            .clone()
            .or_else(|| file_params.scenario.clone().map(|s| vec![s]))
            .unwrap_or_else(|| vec!["radial".to_string()]);
        let ns = cli.ns.clone().or_else(|| file_params.n.map(|n| vec![n])).unwrap_or(vec![41]);
        let ms = cli.ms.clone().or_else(|| file_params.m.map(|m| vec![m])).unwrap_or(vec![10.0]);
        let schemes = cli
            .schemes
            .clone()
            .or_else(|| file_params.scheme.clone().map(|s| vec![s]))
            .unwrap_or_else(|| vec!["5p".to_string()]);
        let viscosities = cli
            .viscosities
            .clone()
            .or_else(|| file_params.viscosity.map(|v| vec![v]))
            .unwrap_or(vec![false]);
        let mut configs = Vec::new();
        for scenario in &scenarios {
            for &n in &ns {
                for &m in &ms {
                    for scheme in &schemes {
                        for &viscosity in &viscosities {
                            let mut params = file_params.clone().merged(&cli.scalar);
                            params.scenario = Some(scenario.clone());
                            params.n = Some(n);
                            params.m = Some(m);
                            params.scheme = Some(scheme.clone());
                            params.viscosity = Some(viscosity);
                            configs.push(params.build()?);
                        }
                    }
                }
            }
        }
        eprintln!("sweep: {} runs, parallelism {}", configs.len(), cli.parallelism);
        let summary = sweep(&configs, cli.out.as_deref(), cli.parallelism)?;
        let failed: Vec<&str> = summary
            .rows
            .iter()
            .filter(|r| r.status != "ok")
            .map(|r| r.status.as_str())
            .collect();
        if let Some(dir) = &cli.out {
            eprintln!("wrote {}", dir.join("summary.tsv").display());
        } else {
            eprint!("{}", summary.to_tsv());
        }
        if !failed.is_empty() {
            eprintln!("{} of {} runs failed:", failed.len(), summary.rows.len());
            for status in failed {
                eprintln!("  {status}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        eprint!("{USAGE}");
        return ExitCode::from(ErrorCategory::Usage.exit_code() as u8);
    }
    match parse_args(&args).and_then(execute) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.category().exit_code() as u8)
        }
    }
}

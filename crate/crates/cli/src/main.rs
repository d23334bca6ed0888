//! `pcfpair`: dispersion curves, phase-matching diagrams, simulated
//! coincidence runs and efficiency reports for the fiber pair source.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or
//! solver failure, 4 a reproduction check failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcf_pairs::config::WorkspaceConfig;
use pcf_pairs::inference::read_records_csv;
use pcf_pairs::phasematch::{write_curve_csv, CurveRow, PhaseMatcher, PumpSpec};
use pcf_pairs::plot::{svg_plot, Series, Style};
use pcf_pairs::reproduce::{
    analyze_stage, dispersion_stage, fig7_files, json_bytes, reproduce_paper, round_trip_row, simulate_stage,
};
use pcf_pairs::sim::{write_events_jsonl, CountRecord, RecordFile, SourceConfig};
use pcf_pairs::Error;

#[derive(Debug, Parser)]
#[command(name = "pcfpair", version, about = "Photonic-crystal-fiber photon-pair source model")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON workspace configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Effective index, propagation constant and GVD over a wavelength range.
    Dispersion {
        /// Wavelength range in nm.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        /// Number of wavelength samples.
        #[arg(long)]
        points: Option<usize>,
        /// Core diameter in µm.
        #[arg(long)]
        diameter: Option<f64>,
    },
    /// Phase-matched sideband wavelengths across a pump range.
    Phasematch {
        /// Pump wavelength range in nm.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        pump_range: Option<Vec<f64>>,
        /// Number of pump wavelengths.
        #[arg(long)]
        points: Option<usize>,
        /// Pump wavelength of the reported solution in nm.
        #[arg(long)]
        pump: Option<f64>,
        /// Pump peak power in W.
        #[arg(long)]
        power: Option<f64>,
        /// Core diameter in µm.
        #[arg(long)]
        diameter: Option<f64>,
        /// Verify energy conservation on every solved row.
        #[arg(long)]
        check_energy: bool,
        /// Also write an SVG of the curve.
        #[arg(long)]
        svg: bool,
    },
    /// Simulated coincidence runs over a ladder of average pump powers.
    Simulate {
        /// Acquisition time per power in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Average pump powers in mW.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        powers: Option<Vec<f64>>,
        /// Also write the detection events as JSON lines.
        #[arg(long)]
        events: bool,
    },
    /// Efficiency report from record JSON files or a `power_mW,N_s,N_i,C_raw,C_b` CSV.
    Analyze {
        inputs: Vec<PathBuf>,
    },
    /// Full pipeline with checks against the reference results.
    ReproducePaper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_usage() { 2 } else { 3 })
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<WorkspaceConfig, Error> {
    let mut cfg = match &global.config {
        Some(path) => WorkspaceConfig::from_path(path)?,
        None => WorkspaceConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn range_arg(v: &Option<Vec<f64>>, default: (f64, f64)) -> Result<(f64, f64), Error> {
    match v.as_deref() {
        None => Ok(default),
        Some([lo, hi]) if hi > lo => Ok((*lo, *hi)),
        Some(other) => Err(Error::Argument(format!("range must be LO HI with LO < HI, got {other:?}"))),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, bytes)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut cfg = load_config(&cli.global)?;
    let format = cli.global.format;
    match cli.command {
        Command::Dispersion { range, points, diameter } => {
            cfg.dispersion.range_nm = range_arg(&range, cfg.dispersion.range_nm)?;
            if let Some(n) = points {
                cfg.dispersion.n_points = n;
            }
            if let Some(d) = diameter {
                cfg.fiber.core_diameter_um = d;
            }
            cfg.validate()?;
            let (curve, lambda0) = dispersion_stage(&cfg)?;
            let path = match format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    curve.write_csv(&mut buf)?;
                    write_file(&cfg.output_dir, "dispersion.csv", &buf)?
                }
                Format::Json => write_file(&cfg.output_dir, "dispersion.json", &json_bytes(&curve)?)?,
            };
            println!("zero-dispersion wavelength: {lambda0:.3} nm");
            println!("wrote {}", path.display());
        }
        Command::Phasematch { pump_range, points, pump, power, diameter, check_energy, svg } => {
            cfg.phasematch.pump_range_nm = range_arg(&pump_range, cfg.phasematch.pump_range_nm)?;
            if let Some(n) = points {
                cfg.phasematch.n_points = n;
            }
            if let Some(p) = pump {
                cfg.pump.center_wavelength_nm = p;
            }
            if let Some(p) = power {
                cfg.pump.peak_power_w = Some(p);
            }
            if let Some(d) = diameter {
                cfg.fiber.core_diameter_um = d;
            }
            cfg.validate()?;
            phasematch(&cfg, format, check_energy, svg)?;
        }
        Command::Simulate { duration, powers, events } => {
            if let Some(d) = duration {
                cfg.simulation.duration_s = d;
            }
            if let Some(p) = powers {
                cfg.pump.power_ladder_mw = p;
            }
            cfg.simulation.write_events |= events;
            cfg.validate()?;
            simulate(&cfg, format)?;
        }
        Command::Analyze { inputs } => {
            cfg.validate()?;
            analyze(&cfg, &inputs)?;
        }
        Command::ReproducePaper => {
            cfg.validate()?;
            let art = reproduce_paper(&cfg)?;
            for (name, bytes) in &art.files {
                write_file(&cfg.output_dir, name, bytes)?;
            }
            print!("{}", art.summary());
            let failed = art.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed; artifacts in {}", art.checks.len(), cfg.output_dir.display());
            if failed > 0 {
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn phasematch(cfg: &WorkspaceConfig, format: Format, check_energy: bool, svg: bool) -> Result<(), Error> {
    let nonlinear = cfg.nonlinear_params()?;
    let matcher = PhaseMatcher::new(&cfg.fiber, &nonlinear).with_linewidth_floor(cfg.phasematch.linewidth_floor_nm);
    let spec: PumpSpec = cfg.pump_spec();
    let solution = matcher.solve_pump(&spec)?;
    let curve = matcher.phase_matching_curve(
        cfg.phasematch.pump_range_nm,
        spec.peak_power_w,
        spec.fwhm_bandwidth_nm,
        cfg.phasematch.n_points,
    )?;
    let path = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_curve_csv(&curve, &mut buf)?;
            write_file(&cfg.output_dir, "phasematch.csv", &buf)?
        }
        Format::Json => {
            let rows: Vec<CurveRow> = curve.iter().map(CurveRow::from).collect();
            write_file(&cfg.output_dir, "phasematch.json", &json_bytes(&rows)?)?
        }
    };
    println!(
        "pump {:.2} nm at {:.3} W: signal {:.2} nm (FWHM {:.2} nm), idler {:.2} nm (FWHM {:.2} nm)",
        solution.pump_wavelength_nm,
        solution.peak_power_w,
        solution.signal_wavelength_nm,
        solution.signal_fwhm_nm,
        solution.idler_wavelength_nm,
        solution.idler_fwhm_nm
    );
    println!("wrote {}", path.display());
    if svg {
        let pick = |signal: bool| {
            curve
                .iter()
                .filter_map(|c| {
                    c.solution
                        .map(|s| (c.pump_nm, if signal { s.signal_wavelength_nm } else { s.idler_wavelength_nm }))
                })
                .collect()
        };
        let series = [
            Series { label: "signal".into(), points: pick(true), style: Style::Line, color: "#1f77b4" },
            Series { label: "idler".into(), points: pick(false), style: Style::Line, color: "#d62728" },
        ];
        let doc = svg_plot("Phase-matched sidebands", "pump wavelength (nm)", "sideband wavelength (nm)", &series);
        let path = write_file(&cfg.output_dir, "phasematch.svg", doc.as_bytes())?;
        println!("wrote {}", path.display());
    }
    if check_energy {
        let tol = pcf_pairs::reproduce::targets::ENERGY_REL_TOL;
        let solved: Vec<_> = curve.iter().filter_map(|c| c.solution).collect();
        let worst = solved.iter().map(|s| s.energy_error()).fold(solution.energy_error(), f64::max);
        if worst > tol {
            return Err(Error::Domain(format!("energy conservation violated: relative error {worst:e}")));
        }
        println!("energy conservation: {} rows pass (worst relative error {worst:.1e})", solved.len() + 1);
    }
    Ok(())
}

fn simulate(cfg: &WorkspaceConfig, format: Format) -> Result<(), Error> {
    let runs = simulate_stage(cfg)?;
    for (k, run) in runs.iter().enumerate() {
        let power = run.record.pump_power_mw.unwrap_or(cfg.source.pump_avg_power_mw);
        let stem = format!("run{k}_{:.0}uW", power * 1e3);
        let config = SourceConfig {
            pump_avg_power_mw: power,
            rng_seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.source_config()
        };
        let file = RecordFile { record: run.record.clone(), config: Some(config) };
        let rec_path = write_file(&cfg.output_dir, &format!("{stem}.json"), &json_bytes(&file)?)?;
        let hist_path = match format {
            Format::Csv => {
                let mut buf = Vec::new();
                run.histogram.write_csv(&mut buf)?;
                write_file(&cfg.output_dir, &format!("{stem}_histogram.csv"), &buf)?
            }
            Format::Json => {
                write_file(&cfg.output_dir, &format!("{stem}_histogram.json"), &json_bytes(&run.histogram)?)?
            }
        };
        if cfg.simulation.write_events {
            let mut buf = Vec::new();
            write_events_jsonl(&run.events(), &mut buf)?;
            write_file(&cfg.output_dir, &format!("{stem}_events.jsonl"), &buf)?;
        }
        let r = &run.record;
        println!(
            "{power:.3} mW: N_s {:.4e}, N_i {:.4e}, C_raw {:.4e}, C_b {:.4e} /s -> {}, {}",
            r.n_s,
            r.n_i,
            r.c_raw,
            r.c_b,
            rec_path.display(),
            hist_path.display()
        );
    }
    Ok(())
}

fn in_file(path: &Path, err: Error) -> Error {
    let msg = match err {
        Error::Argument(m) => m,
        other => other.to_string(),
    };
    Error::Argument(format!("{}: {msg}", path.display()))
}

fn field_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let inner = e.into_inner();
    match (prefix, path.as_str()) {
        ("", ".") => Error::Argument(inner.to_string()),
        (p, ".") => Error::Argument(format!("field `{p}`: {inner}")),
        ("", f) => Error::Argument(format!("field `{f}`: {inner}")),
        (p, f) => Error::Argument(format!("field `{p}.{f}`: {inner}")),
    }
}

/// Splits a record file into the record and the echoed configuration so
/// that parse errors can name the offending field.
fn parse_record_file(text: &str) -> Result<(CountRecord, Option<SourceConfig>), Error> {
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let config = match value.as_object_mut().and_then(|o| o.remove("config")) {
        Some(c) => Some(serde_path_to_error::deserialize(c).map_err(|e| field_error("config", e))?),
        None => None,
    };
    let record: CountRecord = serde_path_to_error::deserialize(value).map_err(|e| field_error("", e))?;
    Ok((record, config))
}

/// Records read from the inputs, with the source configuration when the
/// file carries one.
fn read_inputs(inputs: &[PathBuf]) -> Result<Vec<(CountRecord, Option<SourceConfig>)>, Error> {
    if inputs.is_empty() {
        return Err(Error::Argument("no input records given".into()));
    }
    let mut out = Vec::new();
    for path in inputs {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let records = read_records_csv(text.as_bytes()).map_err(|e| in_file(path, e))?;
            out.extend(records.into_iter().map(|r| (r, None)));
        } else {
            let (record, config) = parse_record_file(&text).map_err(|e| in_file(path, e))?;
            record.validate().map_err(|e| in_file(path, e))?;
            out.push((record, config));
        }
    }
    if out.is_empty() {
        return Err(Error::Argument("inputs contain no records".into()));
    }
    Ok(out)
}

fn analyze(cfg: &WorkspaceConfig, inputs: &[PathBuf]) -> Result<(), Error> {
    let loaded = read_inputs(inputs)?;
    let records: Vec<CountRecord> = loaded.iter().map(|(r, _)| r.clone()).collect();
    let analysis = analyze_stage(&records, cfg)?;
    let dir = &cfg.output_dir;
    let text = analysis.report.to_text();
    write_file(dir, "table1_report.txt", text.as_bytes())?;
    write_file(dir, "table1_report.json", &json_bytes(&analysis.report)?)?;
    write_file(dir, "projection.json", &json_bytes(&analysis.projection)?)?;
    if let Some(fit) = &analysis.report.fit {
        let (csv, svg) = fig7_files(&records, &[], fit)?;
        write_file(dir, "fig7.csv", &csv)?;
        write_file(dir, "fig7.svg", svg.as_bytes())?;
    }
    print!("{text}");
    let p = &analysis.projection;
    println!(
        "Filtered projection at {} mW: {:.3e} pairs/s, {:.1} four-fold/s",
        p.power_mw, p.pair_rate, p.fourfold_rate
    );

    let trips = loaded
        .iter()
        .filter_map(|(rec, config)| config.as_ref().map(|c| round_trip_row(rec, c)))
        .collect::<Result<Vec<_>, _>>()?;
    if !trips.is_empty() {
        write_file(dir, "round_trip.json", &json_bytes(&trips)?)?;
        for t in &trips {
            let e = &t.estimate;
            println!(
                "round trip {:.3} mW: signal {:+.4} ({:.1} sigma), idler {:+.4} ({:.1} sigma), r {:+.2} %",
                t.pump_power_mw,
                t.signal_eff_delta,
                t.signal_eff_delta / e.signal_lumped_err,
                t.idler_eff_delta,
                t.idler_eff_delta / e.idler_lumped_err,
                100.0 * t.pair_rate_rel_delta
            );
        }
    }
    Ok(())
}

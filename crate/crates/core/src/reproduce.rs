//! One-shot pipeline: dispersion, phase matching, simulated power ladder
//! and analysis of the reference measurements, with pass/fail checks
//! against the reference results.
//!
//! Every artifact is produced in memory as bytes so that callers decide
//! where to put them and reruns can be compared byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::WorkspaceConfig;
use crate::dispersion::DispersionCurve;
use crate::inference::{
    fit_quadratic_rate, lumped_efficiencies, project_filtered_source, reference_measurements, reproduce_table1,
    write_records_csv, EfficiencyEstimate, FilteredProjection, QuadraticFit, Table1Report,
};
use crate::phasematch::{write_curve_csv, CurvePoint, CurveRow, PhaseMatchSolution, PhaseMatcher};
use crate::plot::{svg_plot, Series, Style};
use crate::sim::{simulate_ladder, CountRecord, RecordFile, SimulationRun, SourceConfig};
use crate::{Error, Result};

/// Reference values and tolerances the pipeline is checked against.
pub mod targets {
    pub const ZERO_DISPERSION_NM: f64 = 715.0;
    pub const ZERO_DISPERSION_TOL_NM: f64 = 5.0;
    pub const SIGNAL_NM: f64 = 587.0;
    pub const SIGNAL_TOL_NM: f64 = 10.0;
    pub const IDLER_NM: f64 = 893.0;
    pub const IDLER_TOL_NM: f64 = 12.0;
    pub const ENERGY_REL_TOL: f64 = 1e-12;
    /// Calculated sideband widths for a 0.3 nm pump and their relative tolerance.
    pub const SIGNAL_FWHM_NM: f64 = 3.2;
    pub const IDLER_FWHM_NM: f64 = 4.5;
    pub const FWHM_REL_TOL: f64 = 0.3;
    /// Measured sideband widths; the calculation must agree within a factor 2.
    pub const MEASURED_SIGNAL_FWHM_NM: f64 = 2.7;
    pub const MEASURED_IDLER_FWHM_NM: f64 = 5.5;
    pub const MEASURED_FACTOR: f64 = 2.0;
    pub const POWER_SHIFT_TOL_NM: f64 = 3.0;
    pub const SIGNAL_EFF_PCT: [f64; 4] = [20.0, 21.7, 20.7, 21.1];
    pub const IDLER_EFF_PCT: [f64; 4] = [11.2, 11.5, 10.8, 11.1];
    pub const EFF_TOL_PCT: f64 = 0.1;
    pub const PAIR_RATE: [f64; 4] = [1.7e6, 3.1e6, 7.6e6, 1.4e7];
    pub const PAIR_RATE_REL_TOL: f64 = 0.05;
    pub const PAIRS_PER_PULSE: [f64; 4] = [0.021, 0.039, 0.095, 0.18];
    pub const PAIRS_PER_PULSE_TOL: f64 = 0.01;
    /// `B_i/N_i` then `B_s/N_s` intervals per column.
    pub const B_I_OVER_N_I: [(f64, f64); 4] = [(0.052, 0.126), (0.0, 0.052), (0.019, 0.096), (0.0, 0.08)];
    pub const B_S_OVER_N_S: [(f64, f64); 4] = [(0.0, 0.059), (0.0, 0.034), (0.018, 0.092), (0.0, 0.067)];
    pub const BOUND_TOL: f64 = 0.002;
    pub const FIT_A_RANGE: (f64, f64) = (1.0e6, 1.35e6);
    pub const PROJECTED_PAIR_RATE_MIN: f64 = 8.0e4;
    pub const PROJECTED_FOURFOLD_MIN: f64 = 80.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// Named output files (relative paths) and the check results.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
}

impl Artifacts {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        out
    }
}

/// Dispersion curve over the configured range, with `λ₀` refined inside the
/// configured bracket.
pub fn dispersion_stage(cfg: &WorkspaceConfig) -> Result<(DispersionCurve, f64)> {
    let mut curve = cfg.fiber.dispersion_curve(cfg.dispersion.range_nm, cfg.dispersion.n_points)?;
    let lambda0 = cfg.fiber.find_zero_dispersion(cfg.dispersion.zero_bracket_nm)?;
    curve.zero_dispersion_wavelength_nm = Some(lambda0);
    Ok((curve, lambda0))
}

/// Phase-matching curves at each sweep power.
#[derive(Debug, Clone)]
pub struct PhaseMatchOutput {
    /// Solution at the configured pump and peak power.
    pub solution: PhaseMatchSolution,
    /// `(peak power, solution at the configured pump)` per sweep power.
    pub power_sweep: Vec<(f64, PhaseMatchSolution)>,
    /// `(peak power, curve)` per sweep power.
    pub curves: Vec<(f64, Vec<CurvePoint>)>,
}

impl PhaseMatchOutput {
    /// Largest signal/idler displacement across the power sweep.
    pub fn max_power_shift_nm(&self) -> f64 {
        let mut shift: f64 = 0.0;
        for (_, a) in &self.power_sweep {
            for (_, b) in &self.power_sweep {
                shift = shift
                    .max((a.signal_wavelength_nm - b.signal_wavelength_nm).abs())
                    .max((a.idler_wavelength_nm - b.idler_wavelength_nm).abs());
            }
        }
        shift
    }
}

pub fn phasematch_stage(cfg: &WorkspaceConfig) -> Result<PhaseMatchOutput> {
    let nonlinear = cfg.nonlinear_params()?;
    let matcher = PhaseMatcher::new(&cfg.fiber, &nonlinear).with_linewidth_floor(cfg.phasematch.linewidth_floor_nm);
    let pump = cfg.pump_spec();
    let solution = matcher.solve_pump(&pump)?;
    let mut power_sweep = Vec::new();
    let mut curves = Vec::new();
    for &p in &cfg.phasematch.power_sweep_w {
        let spec = crate::phasematch::PumpSpec { peak_power_w: p, ..pump };
        power_sweep.push((p, matcher.solve_pump(&spec)?));
        curves.push((
            p,
            matcher.phase_matching_curve(
                cfg.phasematch.pump_range_nm,
                p,
                pump.fwhm_bandwidth_nm,
                cfg.phasematch.n_points,
            )?,
        ));
    }
    Ok(PhaseMatchOutput { solution, power_sweep, curves })
}

/// Runs the configured power ladder; run `k` uses seed `seed + k`.
pub fn simulate_stage(cfg: &WorkspaceConfig) -> Result<Vec<SimulationRun>> {
    simulate_ladder(&cfg.source_config(), &cfg.pump.power_ladder_mw, cfg.simulation.duration_s)
}

/// Recovered-versus-configured efficiencies of one simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripRow {
    pub pump_power_mw: f64,
    pub configured_signal_eff: f64,
    pub configured_idler_eff: f64,
    pub configured_pair_rate: f64,
    pub estimate: EfficiencyEstimate,
    pub signal_eff_delta: f64,
    pub idler_eff_delta: f64,
    /// Relative deviation of the recovered pair rate.
    pub pair_rate_rel_delta: f64,
}

/// Compares the estimate from `record` with the source that produced it.
pub fn round_trip_row(record: &CountRecord, source: &SourceConfig) -> Result<RoundTripRow> {
    let estimate = lumped_efficiencies(record)?;
    let p = record.pump_power_mw.unwrap_or(source.pump_avg_power_mw);
    let configured_pair_rate = source.pair_yield_coeff * p * p * source.rep_rate_hz;
    Ok(RoundTripRow {
        pump_power_mw: p,
        configured_signal_eff: source.signal_lumped_eff,
        configured_idler_eff: source.idler_lumped_eff,
        configured_pair_rate,
        estimate,
        signal_eff_delta: estimate.signal_lumped - source.signal_lumped_eff,
        idler_eff_delta: estimate.idler_lumped - source.idler_lumped_eff,
        pair_rate_rel_delta: estimate.pair_rate / configured_pair_rate - 1.0,
    })
}

pub fn round_trip(runs: &[SimulationRun], cfg: &WorkspaceConfig) -> Result<Vec<RoundTripRow>> {
    let source = cfg.source_config();
    runs.iter().map(|run| round_trip_row(&run.record, &source)).collect()
}

/// Analysis products for a set of records.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub report: Table1Report,
    pub projection: FilteredProjection,
}

pub fn analyze_stage(records: &[CountRecord], cfg: &WorkspaceConfig) -> Result<AnalysisOutput> {
    let report = reproduce_table1(records, &cfg.analysis)?;
    let a = match (cfg.projection.coefficient_a, &report.fit) {
        (Some(a), _) => a,
        (None, Some(fit)) => fit.a,
        (None, None) => {
            return Err(Error::Argument("projection needs a coefficient or records with pump powers".into()))
        }
    };
    let projection = project_filtered_source(
        a,
        cfg.projection.power_mw,
        cfg.projection.per_arm_penalty,
        cfg.projection.spectral_fraction,
        cfg.analysis.rep_rate_hz,
    )?;
    Ok(AnalysisOutput { report, projection })
}

#[derive(Serialize)]
struct Fig2Row {
    peak_power_w: f64,
    pump_nm: f64,
    signal_nm: Option<f64>,
    idler_nm: Option<f64>,
    signal_fwhm_nm: Option<f64>,
    idler_fwhm_nm: Option<f64>,
}

#[derive(Serialize)]
struct Fig7Row {
    #[serde(rename = "power_mW")]
    power_mw: f64,
    measured_net_coincidences: Option<f64>,
    simulated_net_coincidences: Option<f64>,
    fitted_net_coincidences: f64,
}

/// Rows as CSV with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Phase-matching curves as CSV plus an SVG plot of signal and idler
/// against pump wavelength.
pub fn fig2_files(pm: &PhaseMatchOutput) -> Result<(Vec<u8>, String)> {
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (k, (p, curve)) in pm.curves.iter().enumerate() {
        for point in curve {
            let row = CurveRow::from(point);
            rows.push(Fig2Row {
                peak_power_w: *p,
                pump_nm: row.pump_nm,
                signal_nm: row.signal_nm,
                idler_nm: row.idler_nm,
                signal_fwhm_nm: row.signal_fwhm_nm,
                idler_fwhm_nm: row.idler_fwhm_nm,
            });
        }
        let color = COLORS[k % COLORS.len()];
        for (label, pick) in [("signal", true), ("idler", false)] {
            let points = curve
                .iter()
                .filter_map(|c| {
                    c.solution.map(|s| (c.pump_nm, if pick { s.signal_wavelength_nm } else { s.idler_wavelength_nm }))
                })
                .collect();
            series.push(Series { label: format!("{label}, {p} W"), points, style: Style::Line, color });
        }
    }
    let svg = svg_plot("Phase-matched sidebands", "pump wavelength (nm)", "sideband wavelength (nm)", &series);
    Ok((csv_bytes(&rows)?, svg))
}

/// Net coincidence rate against pump power: reference and simulated points
/// with the fitted parabola.
pub fn fig7_files(reference: &[CountRecord], simulated: &[CountRecord], fit: &QuadraticFit) -> Result<(Vec<u8>, String)> {
    let mut powers: Vec<f64> =
        reference.iter().chain(simulated).filter_map(|r| r.pump_power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    let lookup = |recs: &[CountRecord], p: f64| {
        recs.iter().find(|r| r.pump_power_mw == Some(p)).map(CountRecord::net_coincidences)
    };
    let rows: Vec<Fig7Row> = powers
        .iter()
        .map(|&p| Fig7Row {
            power_mw: p,
            measured_net_coincidences: lookup(reference, p),
            simulated_net_coincidences: lookup(simulated, p),
            fitted_net_coincidences: fit.a * p * p,
        })
        .collect();
    let p_max = powers.last().copied().unwrap_or(1.0);
    let parabola = (0..=50).map(|k| p_max * k as f64 / 50.0).map(|p| (p, fit.a * p * p)).collect();
    let to_pts = |recs: &[CountRecord]| {
        recs.iter().filter_map(|r| r.pump_power_mw.map(|p| (p, r.net_coincidences()))).collect::<Vec<_>>()
    };
    let series = vec![
        Series { label: format!("C = {:.3e} P^2", fit.a), points: parabola, style: Style::Line, color: COLORS[0] },
        Series { label: "measured".into(), points: to_pts(reference), style: Style::Markers, color: COLORS[1] },
        Series { label: "simulated".into(), points: to_pts(simulated), style: Style::Markers, color: COLORS[2] },
    ];
    let svg = svg_plot("Net coincidence rate", "average pump power (mW)", "C_raw - C_b (1/s)", &series);
    Ok((csv_bytes(&rows)?, svg))
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn dispersion_check(lambda0: f64) -> Check {
    use targets::*;
    Check::new(
        "zero-dispersion wavelength",
        within(lambda0, ZERO_DISPERSION_NM, ZERO_DISPERSION_TOL_NM),
        format!("lambda0 = {lambda0:.2} nm (target {ZERO_DISPERSION_NM} +/- {ZERO_DISPERSION_TOL_NM} nm)"),
    )
}

fn sideband_check(sol: &PhaseMatchSolution) -> Check {
    use targets::*;
    let energy = sol.energy_error();
    Check::new(
        "sideband wavelengths",
        within(sol.signal_wavelength_nm, SIGNAL_NM, SIGNAL_TOL_NM)
            && within(sol.idler_wavelength_nm, IDLER_NM, IDLER_TOL_NM)
            && energy <= ENERGY_REL_TOL,
        format!(
            "signal {:.2} nm, idler {:.2} nm, energy error {energy:.1e}",
            sol.signal_wavelength_nm, sol.idler_wavelength_nm
        ),
    )
}

fn bandwidth_check(sol: &PhaseMatchSolution) -> Check {
    use targets::*;
    let rel = |x: f64, t: f64| (x / t - 1.0).abs() <= FWHM_REL_TOL;
    let factor = |x: f64, t: f64| x / t <= MEASURED_FACTOR && t / x <= MEASURED_FACTOR;
    let (s, i) = (sol.signal_fwhm_nm, sol.idler_fwhm_nm);
    Check::new(
        "sideband bandwidths",
        rel(s, SIGNAL_FWHM_NM)
            && rel(i, IDLER_FWHM_NM)
            && factor(s, MEASURED_SIGNAL_FWHM_NM)
            && factor(i, MEASURED_IDLER_FWHM_NM),
        format!("signal FWHM {s:.2} nm, idler FWHM {i:.2} nm"),
    )
}

fn power_check(pm: &PhaseMatchOutput) -> Check {
    let shift = pm.max_power_shift_nm();
    let powers: Vec<f64> = pm.power_sweep.iter().map(|(p, _)| *p).collect();
    Check::new(
        "power insensitivity",
        shift < targets::POWER_SHIFT_TOL_NM,
        format!("max sideband shift {shift:.3} nm over peak powers {powers:?} W"),
    )
}

/// Compares a report on the reference measurements with the tabulated
/// derived rows.
pub fn table1_check(report: &Table1Report) -> Check {
    use targets::*;
    let mut failures = Vec::new();
    if report.rows.len() != 4 {
        return Check::new("table reproduction", false, format!("expected 4 columns, got {}", report.rows.len()));
    }
    for (k, row) in report.rows.iter().enumerate() {
        let e = &row.estimate;
        let b = &row.bounds;
        let mut fail = |what: &str, ok: bool| {
            if !ok {
                failures.push(format!("column {} {what}", k + 1));
            }
        };
        fail("signal efficiency", within(100.0 * e.signal_lumped, SIGNAL_EFF_PCT[k], EFF_TOL_PCT));
        fail("idler efficiency", within(100.0 * e.idler_lumped, IDLER_EFF_PCT[k], EFF_TOL_PCT));
        fail("pair rate", (e.pair_rate / PAIR_RATE[k] - 1.0).abs() <= PAIR_RATE_REL_TOL);
        fail("pairs per pulse", within(row.pairs_per_pulse, PAIRS_PER_PULSE[k], PAIRS_PER_PULSE_TOL));
        fail(
            "B_i/N_i",
            within(b.b_i_over_n_i.lo, B_I_OVER_N_I[k].0, BOUND_TOL)
                && within(b.b_i_over_n_i.hi, B_I_OVER_N_I[k].1, BOUND_TOL),
        );
        fail(
            "B_s/N_s",
            within(b.b_s_over_n_s.lo, B_S_OVER_N_S[k].0, BOUND_TOL)
                && within(b.b_s_over_n_s.hi, B_S_OVER_N_S[k].1, BOUND_TOL),
        );
    }
    let detail = if failures.is_empty() {
        "all derived rows within tolerance".to_string()
    } else {
        format!("out of tolerance: {}", failures.join(", "))
    };
    Check::new("table reproduction", failures.is_empty(), detail)
}

fn fit_check(fit: &QuadraticFit) -> Check {
    let (lo, hi) = targets::FIT_A_RANGE;
    Check::new(
        "quadratic fit",
        (lo..=hi).contains(&fit.a),
        format!("A = {:.4e} /s/mW^2 (window {lo:.2e} to {hi:.2e})", fit.a),
    )
}

fn projection_check(p: &FilteredProjection) -> Check {
    use targets::*;
    Check::new(
        "filtered projection",
        p.pair_rate >= PROJECTED_PAIR_RATE_MIN && p.fourfold_rate >= PROJECTED_FOURFOLD_MIN,
        format!("pair rate {:.3e} /s, four-fold rate {:.1} /s", p.pair_rate, p.fourfold_rate),
    )
}

fn record_stem(k: usize, run: &SimulationRun) -> String {
    match run.record.pump_power_mw {
        Some(p) => format!("run{k}_{:.0}uW", p * 1e3),
        None => format!("run{k}"),
    }
}

/// Runs every stage on `cfg` and collects artifacts and checks. Stage
/// failures abort with the stage name attached.
pub fn reproduce_paper(cfg: &WorkspaceConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let mut art = Artifacts::default();

    let (curve, lambda0) = dispersion_stage(cfg).map_err(|e| e.in_stage("dispersion"))?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    art.files.push(("dispersion.csv".into(), buf));
    art.checks.push(dispersion_check(lambda0));

    let pm = phasematch_stage(cfg).map_err(|e| e.in_stage("phasematch"))?;
    let (fig2_csv, fig2_svg) = fig2_files(&pm)?;
    art.files.push(("fig2.csv".into(), fig2_csv));
    art.files.push(("fig2.svg".into(), fig2_svg.into_bytes()));
    let configured_curve: Vec<CurvePoint> = pm
        .curves
        .iter()
        .find(|(p, _)| *p == cfg.peak_power_w())
        .map(|(_, c)| c.clone())
        .unwrap_or_default();
    if !configured_curve.is_empty() {
        let mut buf = Vec::new();
        write_curve_csv(&configured_curve, &mut buf)?;
        art.files.push(("phasematch.csv".into(), buf));
    }
    art.files.push(("sidebands.json".into(), json_bytes(&pm.solution)?));
    art.checks.push(sideband_check(&pm.solution));
    art.checks.push(bandwidth_check(&pm.solution));
    art.checks.push(power_check(&pm));

    let runs = simulate_stage(cfg).map_err(|e| e.in_stage("simulate"))?;
    let simulated: Vec<CountRecord> = runs.iter().map(|r| r.record.clone()).collect();
    for (k, run) in runs.iter().enumerate() {
        let stem = record_stem(k, run);
        let config = SourceConfig {
            pump_avg_power_mw: run.record.pump_power_mw.unwrap_or(cfg.source.pump_avg_power_mw),
            rng_seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.source_config()
        };
        let file = RecordFile { record: run.record.clone(), config: Some(config) };
        art.files.push((format!("simulated/{stem}.json"), json_bytes(&file)?));
        let mut buf = Vec::new();
        run.histogram.write_csv(&mut buf)?;
        art.files.push((format!("simulated/{stem}_histogram.csv"), buf));
    }

    let reference = reference_measurements();
    let analysis = analyze_stage(&reference, cfg).map_err(|e| e.in_stage("analyze"))?;
    let mut buf = Vec::new();
    write_records_csv(&reference, &mut buf)?;
    art.files.push(("table1_input.csv".into(), buf));
    art.files.push(("table1_report.txt".into(), analysis.report.to_text().into_bytes()));
    art.files.push(("table1_report.json".into(), json_bytes(&analysis.report)?));
    art.files.push(("projection.json".into(), json_bytes(&analysis.projection)?));
    art.checks.push(table1_check(&analysis.report));

    let points: Vec<(f64, f64)> =
        reference.iter().filter_map(|r| r.pump_power_mw.map(|p| (p, r.net_coincidences()))).collect();
    let fit = fit_quadratic_rate(&points).map_err(|e| e.in_stage("analyze"))?;
    let (fig7_csv, fig7_svg) = fig7_files(&reference, &simulated, &fit)?;
    art.files.push(("fig7.csv".into(), fig7_csv));
    art.files.push(("fig7.svg".into(), fig7_svg.into_bytes()));
    art.checks.push(fit_check(&fit));
    art.checks.push(projection_check(&analysis.projection));

    let sim_report = reproduce_table1(&simulated, &cfg.analysis).map_err(|e| e.in_stage("analyze"))?;
    art.files.push(("simulated_report.txt".into(), sim_report.to_text().into_bytes()));
    art.files.push(("simulated_report.json".into(), json_bytes(&sim_report)?));
    let trip = round_trip(&runs, cfg).map_err(|e| e.in_stage("analyze"))?;
    art.files.push(("round_trip.json".into(), json_bytes(&trip)?));

    Ok(art)
}

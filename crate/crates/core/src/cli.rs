//! Command-line front end: config ingestion, the `run`, `compare`, `sweep`
//! and `oracle` subcommands, and deterministic JSON/CSV rendering.
//!
//! Floats are always written with 17 significant digits and objects keep
//! insertion order, so identical inputs give byte-identical output for any
//! worker count.

use std::f64::consts::PI;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{
    interference_probabilities, separable_bound_check, verdict, EntanglementReport, VerdictSettings,
};
use crate::experiment::{ExperimentConfig, FieldConfig};
use crate::fockspace::{self, FockError, ModeAmplitude};
use crate::gatemodel::{
    branch_phases, ideal_output, infidelity, newtonian_params, newtonian_phases, protocol_cutoff, run_protocol,
    run_protocol_numeric_with, GateError, GateParams, NewtonianPhases,
};
use crate::linearized::{
    continuum_rate, driven_mode, driven_mode_numeric, evolve_branches, position_dependent_rate,
    residual_entropy_small, LinearizedError, ModeGrid,
};
use crate::numeric::sinc;
use crate::quadrature::{richardson_half_line, OscillatorySettings};
use crate::register::{final_beamsplitter, DetectorProbabilities, TwoQubitDensity};
use crate::rivals::{
    collapse_evolve, hamiltonian_average_evolve, induced_gravity_note, penrose_estimate, semiclassical_evolve,
    PredictionRecord, TheoryTag,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<LinearizedError> for CliError {
    fn from(e: LinearizedError) -> Self {
        match e {
            LinearizedError::NonPositive(..) | LinearizedError::BadGrid => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "gemsim", version, about = "Gravitationally mediated entanglement simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON). Defaults to the built-in reference experiment.
    #[arg(long, global = true, env = "GEMSIM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; `sweep` defaults to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Reserved; no computation is stochastic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linearized quantum gravity prediction for the configured experiment.
    Run,
    /// All theory classes on the same configuration.
    Compare {
        /// Hypothetical measured witness value for the verdict.
        #[arg(long)]
        observed_witness: Option<f64>,
    },
    /// Vary one config parameter and tabulate observables.
    Sweep {
        /// Sweep spec (JSON); otherwise the config's `sweep` key.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Cross-backend and quadrature audits.
    Oracle {
        /// Force the Fock cutoff used by the numeric audits.
        #[arg(long)]
        n_max: Option<usize>,
    },
}

/// Rendered output plus an optional failure to report after writing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub failure: Option<String>,
}

struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", fmt_f64(value))
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{}", fmt_f64(value as f64))
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// 17 significant digits, exponent form.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        format!("{:.16e}", 0.0)
    } else if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn to_json(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    serde::Serialize::serialize(v, &mut ser).expect("serializing a Value into memory");
    let mut s = String::from_utf8(buf).expect("serde_json emits UTF-8");
    s.push('\n');
    s
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match n.as_u64().or_else(|| n.as_i64().map(|i| i as u64)) {
            Some(_) if !n.is_f64() => n.to_string(),
            _ => fmt_f64(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn to_csv(header: &[String], rows: &[Vec<Value>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(csv_cell).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Config plus the optional `sweep` section of the same document.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sweep: Option<Value>,
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, CliError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Validation("config must be a JSON object".into()))?;
    let sweep = obj.remove("sweep");
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))?;
    config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(LoadedConfig { config, sweep })
}

pub fn load_config(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
        None => {
            log::info!("no config given; using the built-in reference experiment");
            Ok(LoadedConfig {
                config: ExperimentConfig::default(),
                sweep: None,
            })
        }
    }
}

fn phases_json(p: [f64; 4]) -> Value {
    json!({"phi00": p[0], "phi01": p[1], "phi10": p[2], "phi11": p[3]})
}

fn opt_array(d: [Option<f64>; 4]) -> Value {
    json!({"d00": d[0], "d01": d[1], "d10": d[2], "d11": d[3]})
}

fn density_json(rho: &TwoQubitDensity) -> Value {
    let m = rho.matrix();
    let re: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| m[(i, j)].re).collect()).collect();
    let im: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| m[(i, j)].im).collect()).collect();
    json!({"re": re, "im": im})
}

fn report_json(r: &EntanglementReport) -> Value {
    json!({
        "negativity": r.negativity,
        "concurrence": r.concurrence,
        "von_neumann_entropy_bits": r.von_neumann_entropy_bits,
        "linear_entropy": r.linear_entropy,
        "witness": r.witness_value,
    })
}

/// Output of the linearized-quantum-gravity pipeline.
#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub model: &'static str,
    /// Branch phases φ_ab relative to φ00.
    pub phases: [f64; 4],
    pub reduced: TwoQubitDensity,
    pub newtonian: NewtonianPhases,
    pub residuals: Map<String, Value>,
    pub notes: Vec<String>,
}

impl QuantumRun {
    pub fn report(&self) -> EntanglementReport {
        EntanglementReport::of(&self.reduced)
    }

    pub fn detectors(&self) -> DetectorProbabilities {
        DetectorProbabilities::from_output(&final_beamsplitter(&self.reduced))
    }

    /// Named scalar observables, in a fixed order.
    pub fn observables(&self) -> Vec<(&'static str, f64)> {
        let r = self.report();
        let d = self.detectors();
        vec![
            ("phi00_rad", self.phases[0]),
            ("phi01_rad", self.phases[1]),
            ("phi10_rad", self.phases[2]),
            ("phi11_rad", self.phases[3]),
            ("negativity", r.negativity),
            ("concurrence", r.concurrence),
            ("von_neumann_entropy_bits", r.von_neumann_entropy_bits),
            ("linear_entropy", r.linear_entropy),
            ("witness", r.witness_value),
            ("p0_first", d.first_p0()),
            ("p0_second", d.second_p0()),
        ]
    }
}

fn gate_error(e: GateError) -> CliError {
    match e {
        GateError::Config(c) => CliError::Validation(c.to_string()),
        other => CliError::Numeric(other.to_string()),
    }
}

/// Runs the configured field model.
pub fn quantum_pipeline(cfg: &ExperimentConfig) -> Result<QuantumRun, CliError> {
    let newtonian = newtonian_phases(cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut residuals = Map::new();
    let mut notes = Vec::new();
    let (model, phases, reduced) = match cfg.field {
        FieldConfig::Elastic => {
            let rho = ideal_output(newtonian.phases).density();
            residuals.insert("field_label_spread".into(), json!(0.0));
            notes.push("elastic limit: field returns to its initial state".to_string());
            ("elastic", newtonian.phases, rho)
        }
        FieldConfig::Gate { split } => {
            let params: GateParams =
                newtonian_params(cfg, split).map_err(|e| gate_error(GateError::Config(e)))?;
            let out = run_protocol(&params);
            let bp = branch_phases(&out.final_state, cfg.tolerances.elastic_label_spread);
            residuals.insert("field_label_spread".into(), json!(bp.label_spread));
            residuals.insert("elastic".into(), json!(bp.elastic));
            residuals.insert("linear_entropy_after_u1".into(), json!(out.entropy_after_u1()));
            residuals.insert("linear_entropy_final".into(), json!(out.entropy_final()));
            residuals.insert(
                "infidelity_vs_ideal".into(),
                json!(infidelity(&out.reduced, &ideal_output(params.phi_target))),
            );
            residuals.insert("rotation_w_rad".into(), json!(params.w));
            residuals.insert("shift_xi".into(), json!(params.xi.to_vec()));
            residuals.insert("shift_planck_reading".into(), json!(newtonian.planck_ratio_sq));
            if !bp.elastic {
                notes.push("field labels still differ across branches after the protocol".to_string());
            }
            ("gate", bp.phases, out.reduced)
        }
        FieldConfig::Multimode { .. } => {
            let grid = ModeGrid::for_config(cfg)?;
            let out = evolve_branches(cfg, &grid, cfg.interaction_time_s)?;
            let (k_lo, k_hi) = grid.k_range();
            residuals.insert("residual_linear_entropy".into(), json!(out.residual_linear_entropy));
            residuals.insert("residual_linear_entropy_series".into(), json!(residual_entropy_small(&out)));
            residuals.insert("max_branch_distinguishability".into(), json!(out.max_distinguishability()));
            residuals.insert("mean_photons".into(), json!(out.polaron.mean_photons.to_vec()));
            residuals.insert("self_energy_phase_rad".into(), json!(out.polaron.self_energy_phase));
            residuals.insert("grid_points".into(), json!(grid.len()));
            residuals.insert("k_min_per_m".into(), json!(k_lo));
            residuals.insert("k_max_per_m".into(), json!(k_hi));
            notes.push("self-energy phase is common to all branches and excluded from phi".to_string());
            ("multimode", out.branch_phases(), out.reduced)
        }
    };
    residuals.insert("field_mass_linear_entropy".into(), json!(1.0 - reduced.purity()));
    Ok(QuantumRun {
        model,
        phases,
        reduced,
        newtonian,
        residuals,
        notes,
    })
}

fn penrose_json(cfg: &ExperimentConfig) -> Value {
    let est = penrose_estimate(cfg.mass_kg, cfg.arm_separation(), &cfg.constants);
    json!({
        "superposition_extent_m": cfg.arm_separation(),
        "formula_time_s": est.formula_s,
        "quoted_order_s": est.quoted_order_s,
        "orders_apart": est.orders_apart,
        "conflict": est.conflict,
    })
}

pub fn run_report(cfg: &ExperimentConfig) -> Result<(QuantumRun, Value), CliError> {
    let run = quantum_pipeline(cfg)?;
    let n = &run.newtonian;
    let r = run.report();
    let d = run.detectors();
    let present = cfg.distances().map(|d| d.is_some());
    let mask = |v: [f64; 4]| -> [Option<f64>; 4] { std::array::from_fn(|i| present[i].then_some(v[i])) };
    let value = json!({
        "command": "run",
        "field_model": run.model,
        "mass_kg": cfg.mass_kg,
        "interaction_time_s": cfg.interaction_time_s,
        "branch_distances_m": opt_array(cfg.distances()),
        "planck_mass_kg": cfg.constants.planck_mass(),
        "planck_ratio_sq": n.planck_ratio_sq,
        "newtonian": {
            "rate_rad_per_s": opt_array(mask(n.rates)),
            "phase_rad": opt_array(mask(n.phases)),
            "planck_form_phase_rad": opt_array(mask(n.planck_form)),
            "form_mismatch_rel": n.form_mismatch,
            "entangling_phase_rad": n.entangling_phase(),
        },
        "phases_rad": phases_json(run.phases),
        "reduced_density": density_json(&run.reduced),
        "entanglement": report_json(&r),
        "interference": {
            "p0_first": d.first_p0(),
            "p0_second": d.second_p0(),
            "p0_closed_form_phi11": interference_probabilities(run.phases[3]).p0,
        },
        "field_residuals": Value::Object(run.residuals.clone()),
        "penrose": penrose_json(cfg),
        "notes": run.notes.clone(),
    });
    Ok((run, value))
}

/// Predictions of all five theory classes for one configuration.
pub fn compare_records(cfg: &ExperimentConfig) -> Result<(QuantumRun, Vec<PredictionRecord>), CliError> {
    let run = quantum_pipeline(cfg)?;
    let t = cfg.interaction_time_s;
    let mut quantum = PredictionRecord::from_state(TheoryTag::QuantumLinearized, run.reduced, run.notes.clone());
    quantum.branch_phases = Some(run.phases);
    let grid = ModeGrid::for_config(cfg)?;
    let records = vec![
        quantum,
        semiclassical_evolve(cfg, t),
        hamiltonian_average_evolve(cfg, &grid, t)?,
        collapse_evolve(cfg, t),
        induced_gravity_note(),
    ];
    Ok((run, records))
}

fn record_row(r: &PredictionRecord) -> (Option<EntanglementReport>, [Value; 6]) {
    let rep = r.reduced_state.as_ref().map(EntanglementReport::of);
    let p = r.branch_phases.map_or([Value::Null, Value::Null, Value::Null, Value::Null], |p| p.map(|x| json!(x)));
    let [a, b, c, d] = p;
    let th = r.local_phases.map_or([Value::Null, Value::Null], |t| t.map(|x| json!(x)));
    let [e, f] = th;
    (rep, [a, b, c, d, e, f])
}

fn compare_output(cfg: &ExperimentConfig, observed: Option<f64>, format: Format) -> Result<String, CliError> {
    let (_, records) = compare_records(cfg)?;
    let settings = VerdictSettings {
        witness_margin: cfg.tolerances.witness_margin,
        witness_match: cfg.tolerances.witness_match,
    };
    let v = match observed {
        Some(w) if !w.is_finite() => return Err(CliError::Validation("observed witness must be finite".into())),
        Some(w) => Some(verdict(w, &records, settings).map_err(|e| CliError::Numeric(e.to_string()))?),
        None => None,
    };
    match format {
        Format::Json => {
            let rows: Vec<Value> = records
                .iter()
                .map(|r| {
                    let (rep, [p00, p01, p10, p11, t1, t2]) = record_row(r);
                    json!({
                        "tag": r.tag.as_str(),
                        "phases_rad": if r.branch_phases.is_some() {
                            json!({"phi00": p00, "phi01": p01, "phi10": p10, "phi11": p11})
                        } else { Value::Null },
                        "local_phases_rad": if r.local_phases.is_some() {
                            json!({"theta1": t1, "theta2": t2})
                        } else { Value::Null },
                        "negativity": rep.map(|x| x.negativity),
                        "witness": rep.map(|x| x.witness_value),
                        "entangling": r.entangling,
                        "notes": r.notes.clone(),
                    })
                })
                .collect();
            let mut out = json!({
                "command": "compare",
                "mass_kg": cfg.mass_kg,
                "interaction_time_s": cfg.interaction_time_s,
                "rows": rows,
                "penrose": penrose_json(cfg),
            });
            if let Some(v) = v {
                out["verdict"] = json!({
                    "observed_witness": v.witness_value,
                    "entangled": v.entangled,
                    "predicted_quantum_witness": v.predicted_quantum_witness,
                    "consistent": v.consistent_theories.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
                    "inconsistent": v.inconsistent_theories.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
                });
            }
            Ok(to_json(&out))
        }
        Format::Csv => {
            let mut header: Vec<String> = [
                "tag",
                "phi00_rad",
                "phi01_rad",
                "phi10_rad",
                "phi11_rad",
                "theta1_rad",
                "theta2_rad",
                "negativity",
                "witness",
                "entangling",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            if v.is_some() {
                header.push("consistent_with_observed".into());
            }
            let rows: Vec<Vec<Value>> = records
                .iter()
                .map(|r| {
                    let (rep, cells) = record_row(r);
                    let mut row = vec![json!(r.tag.as_str())];
                    row.extend(cells);
                    row.push(json!(rep.map(|x| x.negativity)));
                    row.push(json!(rep.map(|x| x.witness_value)));
                    row.push(json!(r.entangling));
                    if let Some(v) = &v {
                        row.push(json!(v.consistent_theories.contains(&r.tag)));
                    }
                    row
                })
                .collect();
            Ok(to_csv(&header, &rows))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: RangeScale,
}

/// One parameter varied over explicit values or a range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted config path, or `target_phi11_rad` to set the interaction time
    /// from the Newtonian φ11 rate.
    pub parameter: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub range: Option<SweepRange>,
    /// Observable columns; all when omitted.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
}

pub const TARGET_PHI11: &str = "target_phi11_rad";

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let bad = |m: &str| CliError::Validation(format!("sweep: {m}"));
        let v = match (&self.values, &self.range) {
            (Some(v), None) => v.clone(),
            (None, Some(r)) => {
                if r.points == 0 {
                    return Err(bad("range.points must be >= 1"));
                }
                if r.points == 1 {
                    vec![r.start]
                } else {
                    let n = (r.points - 1) as f64;
                    match r.scale {
                        RangeScale::Linear => (0..r.points)
                            .map(|i| if i == r.points - 1 { r.stop } else { r.start + (r.stop - r.start) * i as f64 / n })
                            .collect(),
                        RangeScale::Log => {
                            if !(r.start > 0.0 && r.stop > 0.0) {
                                return Err(bad("log range needs positive start and stop"));
                            }
                            let (a, b) = (r.start.ln(), r.stop.ln());
                            (0..r.points)
                                .map(|i| if i == r.points - 1 { r.stop } else { (a + (b - a) * i as f64 / n).exp() })
                                .collect()
                        }
                    }
                }
            }
            _ => return Err(bad("give exactly one of `values` or `range`")),
        };
        if v.is_empty() {
            return Err(bad("value list is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("values must be finite"));
        }
        Ok(v)
    }

    pub fn column_name(&self) -> String {
        self.parameter.replace('.', "_")
    }
}

/// Config with one parameter replaced.
pub fn apply_parameter(cfg: &ExperimentConfig, path: &str, value: f64) -> Result<ExperimentConfig, CliError> {
    if path == TARGET_PHI11 {
        let d11 = cfg.distances()[3]
            .ok_or_else(|| CliError::Validation("sweep: target_phi11_rad needs a finite d11".into()))?;
        let mut out = cfg.clone();
        out.interaction_time_s = value / cfg.constants.newtonian_rate(cfg.mass_kg, d11);
        out.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        return Ok(out);
    }
    let mut root = serde_json::to_value(cfg).expect("config serializes");
    let mut node = &mut root;
    for seg in path.split('.') {
        node = node
            .as_object_mut()
            .and_then(|o| o.get_mut(seg))
            .ok_or_else(|| CliError::Validation(format!("sweep: parameter path `{path}` does not resolve in config")))?;
    }
    if node.is_object() || node.is_array() {
        return Err(CliError::Validation(format!("sweep: parameter `{path}` is not a scalar")));
    }
    *node = if value.fract() == 0.0 && value.abs() < 9.0e15 {
        if value >= 0.0 {
            json!(value as u64)
        } else {
            json!(value as i64)
        }
    } else {
        json!(value)
    };
    let out: ExperimentConfig =
        serde_json::from_value(root).map_err(|e| CliError::Validation(format!("sweep: {path} = {value}: {e}")))?;
    out.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(out)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let n = match workers {
        Some(0) => return Err(CliError::Validation("--workers must be >= 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Numeric(format!("cannot start worker pool: {e}")))
}

fn sweep_output(cfg: &ExperimentConfig, spec: &SweepSpec, format: Format, workers: Option<usize>) -> Result<String, CliError> {
    let values = spec.values()?;
    apply_parameter(cfg, &spec.parameter, values[0])?;
    let all: Vec<&'static str> = quantum_pipeline(cfg)?.observables().iter().map(|(n, _)| *n).collect();
    let columns: Vec<String> = match &spec.columns {
        None => all.iter().map(|s| s.to_string()).collect(),
        Some(c) if c.is_empty() => return Err(CliError::Validation("sweep: columns list is empty".into())),
        Some(c) => {
            if let Some(bad) = c.iter().find(|c| !all.contains(&c.as_str())) {
                return Err(CliError::Validation(format!("sweep: unknown column `{bad}`")));
            }
            c.clone()
        }
    };
    let pool = pool(workers)?;
    let rows: Vec<Result<Vec<f64>, CliError>> = pool.install(|| {
        values
            .par_iter()
            .map(|v| {
                let c = apply_parameter(cfg, &spec.parameter, *v)?;
                let obs = quantum_pipeline(&c)?.observables();
                let mut row = vec![*v];
                for col in &columns {
                    row.push(obs.iter().find(|(n, _)| n == col).map(|(_, x)| *x).expect("column checked"));
                }
                Ok(row)
            })
            .collect()
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut header = vec![spec.column_name()];
    header.extend(columns);
    Ok(match format {
        Format::Csv => to_csv(&header, &rows.iter().map(|r| r.iter().map(|x| json!(x)).collect()).collect::<Vec<_>>()),
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| Value::Object(header.iter().cloned().zip(r.iter().map(|x| json!(x))).collect()))
                .collect();
            to_json(&json!({"command": "sweep", "parameter": spec.parameter, "rows": rows}))
        }
    })
}

/// One oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub name: &'static str,
    pub delta: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Audit {
    fn new(name: &'static str, delta: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            delta,
            tolerance,
            pass: delta <= tolerance,
            detail: detail.into(),
        }
    }

    fn failed(name: &'static str, delta: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            delta,
            tolerance,
            pass: false,
            detail: detail.into(),
        }
    }
}

fn fock_delta(e: &FockError) -> f64 {
    match e {
        FockError::CutoffTooSmall { deficit, .. } => *deficit,
        FockError::UnitarityDefect { defect, .. } => *defect,
        _ => 1.0,
    }
}

fn backend_audit(cfg: &ExperimentConfig, n_max: Option<usize>, pool: &rayon::ThreadPool) -> Audit {
    let mut cases = Vec::new();
    for alpha in [0.0, 1.0, 2.0] {
        for xi in [0.1, 0.25, 0.5] {
            for w in [0.5, 1.0, 2.0] {
                cases.push(GateParams::new(ModeAmplitude::real(alpha), [0.0, 0.0, 0.0, xi], w));
            }
        }
    }
    let tol = cfg.tolerances.fock();
    let results: Vec<Result<f64, GateError>> = pool.install(|| {
        cases
            .par_iter()
            .map(|p| {
                let n = n_max.unwrap_or_else(|| protocol_cutoff(p));
                let num = run_protocol_numeric_with(p, n, tol)?;
                Ok(num.reduced.trace_distance(&run_protocol(p).reduced))
            })
            .collect()
    });
    let limit = cfg.tolerances.backend_trace_distance;
    let mut worst = 0.0f64;
    for r in results {
        match r {
            Ok(d) => worst = worst.max(d),
            Err(e) => {
                let delta = match &e {
                    GateError::Fock(f) => fock_delta(f),
                    GateError::NormDrift { norm, .. } => (norm - 1.0).abs(),
                    _ => 1.0,
                };
                return Audit::failed("backend-trace-distance", delta, limit, e.to_string());
            }
        }
    }
    Audit::new(
        "backend-trace-distance",
        worst,
        limit,
        format!("{} protocol cases, analytic vs truncated Fock", cases.len()),
    )
}

fn polaron_audit(cfg: &ExperimentConfig, n_max: Option<usize>) -> Audit {
    let lambda = Complex64::new(0.5, -0.3);
    let n = n_max.unwrap_or(60);
    let limit = cfg.tolerances.polaron;
    let mut worst = 0.0f64;
    for i in 0..=40 {
        let wt = 0.5 * i as f64;
        let exact = driven_mode(lambda, 1.0, wt);
        match driven_mode_numeric(lambda, 1.0, wt, n) {
            Ok(num) => {
                let dphase = crate::numeric::wrap_phase(exact.phase - num.phase).abs();
                worst = worst.max((exact.displacement - num.displacement).norm()).max(dphase);
            }
            Err(LinearizedError::Fock(f)) => {
                return Audit::failed("polaron-vs-diagonalization", fock_delta(&f), limit, f.to_string())
            }
            Err(e) => return Audit::failed("polaron-vs-diagonalization", 1.0, limit, e.to_string()),
        }
    }
    Audit::new("polaron-vs-diagonalization", worst, limit, format!("omega*t in [0, 20], n_max = {n}"))
}

fn reference_distance(cfg: &ExperimentConfig) -> f64 {
    cfg.distances().iter().flatten().copied().fold(f64::INFINITY, f64::min).min(cfg.arm_separation())
}

fn quadrature_audits(cfg: &ExperimentConfig) -> Vec<Audit> {
    let d = reference_distance(cfg);
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    let mut failure = None;
    for s in [d / 10.0, d, 10.0 * d] {
        match continuum_rate(s, cfg.mass_kg, &cfg.constants, f64::INFINITY) {
            Ok(r) => worst = worst.max(r.relative_error),
            Err(e) => failure = Some(e.to_string()),
        }
    }
    out.push(match failure {
        None => Audit::new("continuum-quadrature-vs-closed-form", worst, cfg.tolerances.quadrature_rel, "three separations over two decades"),
        Some(e) => Audit::failed("continuum-quadrature-vs-closed-form", 1.0, cfg.tolerances.quadrature_rel, e),
    });
    out.push(match richardson_half_line(sinc, &OscillatorySettings::for_half_period(PI)) {
        Ok(r) => Audit::new("sinc-integral", (r.value - PI / 2.0).abs(), 1e-6, "regulated, extrapolated to zero"),
        Err(e) => Audit::failed("sinc-integral", 1.0, 1e-6, e.to_string()),
    });
    let grid = ModeGrid::for_lengths(&[d], &Default::default(), cfg.constants.c);
    out.push(match grid.and_then(|g| position_dependent_rate(d, cfg.mass_kg, &g, &cfg.constants)) {
        Ok(r) => {
            let exact = cfg.constants.newtonian_rate(cfg.mass_kg, d);
            Audit::new("grid-rate-vs-continuum", ((r - exact) / exact).abs(), 0.01, "default radial grid")
        }
        Err(e) => Audit::failed("grid-rate-vs-continuum", 1.0, 0.01, e.to_string()),
    });
    out
}

fn overlap_audit(n_max: Option<usize>) -> Audit {
    let mut worst = 0.0f64;
    for alpha in [0.0, 1.0, 2.0] {
        for xi in [0.1, 0.5, 1.0] {
            let a = ModeAmplitude::real(alpha);
            let b = ModeAmplitude::from_re_im(alpha, f64::sqrt(xi));
            let closed = fockspace::overlap(a, b).norm_sqr();
            worst = worst.max((closed - (-xi).exp()).abs());
            let n = n_max.unwrap_or_else(|| fockspace::default_cutoff(alpha + xi.sqrt()));
            let va = fockspace::coherent_coeffs(a, n);
            let vb = fockspace::coherent_coeffs(b, n);
            match (va, vb) {
                (Ok(va), Ok(vb)) => {
                    let num = va.inner(&vb).map(|c| c.norm_sqr()).unwrap_or(f64::NAN);
                    worst = worst.max((num - closed).abs());
                }
                (Err(e), _) | (_, Err(e)) => {
                    return Audit::failed("overlap-closed-form-vs-truncated", fock_delta(&e), 1e-9, e.to_string())
                }
            }
        }
    }
    Audit::new("overlap-closed-form-vs-truncated", worst, 1e-9, "|<a|a+i*sqrt(xi)>|^2 for xi <= 1, |a| <= 2")
}

fn separable_audit() -> Audit {
    match separable_bound_check() {
        Ok(b) => Audit::new("separable-bound", (b.bound - 1.0).abs(), 1e-6, "grid plus compass search"),
        Err(e) => Audit::failed("separable-bound", 1.0, 1e-6, e.to_string()),
    }
}

fn interference_audit() -> Audit {
    let worst = (0..100)
        .map(|i| interference_probabilities(2.0 * PI * i as f64 / 99.0).mismatch)
        .fold(0.0, f64::max);
    Audit::new("interference-closed-form-vs-born", worst, 1e-9, "100-point phase grid")
}

pub fn oracle_audits(cfg: &ExperimentConfig, n_max: Option<usize>, workers: Option<usize>) -> Result<Vec<Audit>, CliError> {
    if let Some(n) = n_max {
        if n == 0 {
            return Err(CliError::Validation("--n-max must be >= 1".into()));
        }
    }
    let pool = pool(workers)?;
    let mut audits = vec![backend_audit(cfg, n_max, &pool), polaron_audit(cfg, n_max), overlap_audit(n_max)];
    audits.extend(quadrature_audits(cfg));
    audits.push(separable_audit());
    audits.push(interference_audit());
    Ok(audits)
}

fn oracle_output(audits: &[Audit], format: Format) -> String {
    match format {
        Format::Json => {
            let list: Vec<Value> = audits
                .iter()
                .map(|a| json!({"audit": a.name, "delta": a.delta, "tolerance": a.tolerance, "pass": a.pass, "detail": a.detail}))
                .collect();
            to_json(&json!({
                "command": "oracle",
                "all_pass": audits.iter().all(|a| a.pass),
                "audits": list,
            }))
        }
        Format::Csv => {
            let header = ["audit", "delta", "tolerance", "pass"].map(String::from);
            let rows: Vec<Vec<Value>> = audits
                .iter()
                .map(|a| vec![json!(a.name), json!(a.delta), json!(a.tolerance), json!(a.pass)])
                .collect();
            to_csv(&header, &rows)
        }
    }
}

fn run_csv(run: &QuantumRun) -> String {
    let obs = run.observables();
    let mut header: Vec<String> = obs.iter().map(|(n, _)| n.to_string()).collect();
    let mut row: Vec<Value> = obs.iter().map(|(_, v)| json!(v)).collect();
    header.push("field_mass_linear_entropy".into());
    row.push(run.residuals["field_mass_linear_entropy"].clone());
    to_csv(&header, &[row])
}

/// Executes a parsed command line and renders its output.
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed} accepted; no stochastic paths");
    }
    if cli.workers == Some(0) {
        return Err(CliError::Validation("--workers must be >= 1".into()));
    }
    let loaded = load_config(cli.config.as_deref())?;
    let cfg = &loaded.config;
    match &cli.command {
        Command::Run => {
            let (run, value) = run_report(cfg)?;
            let text = match cli.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&value),
                Format::Csv => run_csv(&run),
            };
            Ok(Output { text, failure: None })
        }
        Command::Compare { observed_witness } => Ok(Output {
            text: compare_output(cfg, *observed_witness, cli.format.unwrap_or(Format::Json))?,
            failure: None,
        }),
        Command::Sweep { spec } => {
            let raw = match (spec, &loaded.sweep) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| CliError::Validation(format!("cannot read sweep spec {}: {e}", p.display())))?;
                    serde_json::from_str::<Value>(&text)
                        .map_err(|e| CliError::Validation(format!("sweep spec is not valid JSON: {e}")))?
                }
                (None, Some(v)) => v.clone(),
                (None, None) => return Err(CliError::Validation("sweep needs --spec or a `sweep` key in the config".into())),
            };
            let spec: SweepSpec =
                serde_json::from_value(raw).map_err(|e| CliError::Validation(format!("sweep spec: {e}")))?;
            Ok(Output {
                text: sweep_output(cfg, &spec, cli.format.unwrap_or(Format::Csv), cli.workers)?,
                failure: None,
            })
        }
        Command::Oracle { n_max } => {
            let audits = oracle_audits(cfg, *n_max, cli.workers)?;
            let failed: Vec<&str> = audits.iter().filter(|a| !a.pass).map(|a| a.name).collect();
            Ok(Output {
                text: oracle_output(&audits, cli.format.unwrap_or(Format::Json)),
                failure: (!failed.is_empty()).then(|| format!("audits failed: {}", failed.join(", "))),
            })
        }
    }
}

/// Writes `text` to `out` or stdout.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Output(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Output(e.to_string()))
        }
    }
}

/// Parses arguments, runs, writes output and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli).and_then(|o| emit(cli.out.as_deref(), &o.text).map(|_| o)) {
        Ok(Output { failure: None, .. }) => 0,
        Ok(Output { failure: Some(f), .. }) => {
            eprintln!("gemsim: {f}");
            1
        }
        Err(e) => {
            eprintln!("gemsim: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(6328.0), "6.3280000000000000e3");
        let v = json!({"b": 1.5, "a": [0.25, 2]});
        assert_eq!(to_json(&v), "{\n  \"b\": 1.5000000000000000e0,\n  \"a\": [\n    2.5000000000000000e-1,\n    2\n  ]\n}\n");
    }

    #[test]
    fn csv_cells() {
        let s = to_csv(&["a".into(), "b".into()], &[vec![json!(1.0), Value::Null], vec![json!(true), json!("x-y")]]);
        assert_eq!(s, "a,b\n1.0000000000000000e0,\ntrue,x-y\n");
    }

    #[test]
    fn parse_config_errors() {
        assert!(matches!(parse_config("{not json"), Err(CliError::Validation(_))));
        assert!(matches!(parse_config("[]"), Err(CliError::Validation(_))));
        assert!(matches!(parse_config(r#"{"mass_kg": -1, "interaction_time_s": 1}"#), Err(CliError::Validation(_))));
        let ok = parse_config(
            r#"{"mass_kg": 1e-12, "arm_separation_m": 1e-4, "branch_distances_m": {"d11": 1e-4},
                "interaction_time_s": 1e-4, "sweep": {"parameter": "mass_kg", "values": [1e-12]}}"#,
        )
        .unwrap();
        assert!(ok.sweep.is_some());
    }

    #[test]
    fn run_default_is_pi_phase() {
        let (run, _) = run_report(&ExperimentConfig::default()).unwrap();
        let r = run.report();
        assert!((r.witness_value - 2.0).abs() < 1e-9);
        assert!((r.negativity - 0.5).abs() < 1e-9);
    }

    #[test]
    fn run_zero_time() {
        let cfg = ExperimentConfig {
            interaction_time_s: 0.0,
            ..ExperimentConfig::default()
        };
        let (run, _) = run_report(&cfg).unwrap();
        assert!(run.phases.iter().all(|p| *p == 0.0));
        assert!(run.report().witness_value.abs() < 1e-15);
        assert!((run.detectors().first_p0() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gate_and_multimode_models_agree_on_phase() {
        for field in [
            FieldConfig::Gate { split: Default::default() },
            FieldConfig::Multimode { grid: Default::default() },
        ] {
            let cfg = ExperimentConfig {
                field,
                ..ExperimentConfig::default()
            };
            let run = quantum_pipeline(&cfg).unwrap();
            assert!(crate::numeric::wrap_phase(run.phases[3] - PI).abs() < 0.05, "{}", run.model);
            assert!(run.report().witness_value > 1.9);
        }
    }

    #[test]
    fn compare_default_only_quantum_entangles() {
        let (_, recs) = compare_records(&ExperimentConfig::default()).unwrap();
        let ent: Vec<_> = recs.iter().filter(|r| r.entangling).map(|r| r.tag).collect();
        assert_eq!(ent, vec![TheoryTag::QuantumLinearized]);
    }

    #[test]
    fn sweep_values_and_paths() {
        let spec = SweepSpec {
            parameter: "mass_kg".into(),
            values: None,
            range: Some(SweepRange {
                start: 1.0,
                stop: 100.0,
                points: 3,
                scale: RangeScale::Log,
            }),
            columns: None,
        };
        let v = spec.values().unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12 && v[2] == 100.0);
        let empty = SweepSpec {
            values: Some(vec![]),
            range: None,
            ..spec.clone()
        };
        assert!(matches!(empty.values(), Err(CliError::Validation(_))));
        let cfg = ExperimentConfig::default();
        let c = apply_parameter(&cfg, "branch_distances_m.d11", 2e-4).unwrap();
        assert_eq!(c.distances()[3], Some(2e-4));
        assert!(apply_parameter(&cfg, "nope.x", 1.0).is_err());
        assert!(apply_parameter(&cfg, "mass_kg", -1.0).is_err());
        let c = apply_parameter(&cfg, TARGET_PHI11, PI / 2.0).unwrap();
        assert!((newtonian_phases(&c).unwrap().phases[3] - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_default_passes() {
        let audits = oracle_audits(&ExperimentConfig::default(), None, Some(2)).unwrap();
        for a in &audits {
            assert!(a.pass, "{a:?}");
        }
        let forced = oracle_audits(&ExperimentConfig::default(), Some(3), Some(2)).unwrap();
        assert!(!forced[0].pass);
        assert!(forced[0].delta > 0.0);
    }
}

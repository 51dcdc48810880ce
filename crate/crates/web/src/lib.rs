//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes and returns plain strings (TOML, JSON, CSV or SVG) and
//! reports failures as a thrown string. The functions without the `wasm`
//! wrappers are ordinary Rust and are tested natively.

use mcbf_core::logio::{read_csv, to_csv_string, LogMeta, TrajectoryFile};
use mcbf_core::plot::{render, PlotKind};
use mcbf_core::safety::{cascade, FilterSettings, GainVectors, SafetyDistances};
use mcbf_core::scenario::parse_scenario;
use mcbf_core::sim::{invariance_audit, project_at_state, run};
use mcbf_core::{InputVector, Limits, Obstacle, RobotGeometry, StateVector};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

pub const SHIPPED: [(&str, &str); 3] = [
    ("turn90_msttr", include_str!("../../../scenarios/turn90_msttr.toml")),
    ("turn90_ssttr_ecbf", include_str!("../../../scenarios/turn90_ssttr_ecbf.toml")),
    ("cluttered_msttr", include_str!("../../../scenarios/cluttered_msttr.toml")),
];

#[derive(Serialize)]
pub struct RunOutput {
    pub metrics: serde_json::Value,
    pub audit_passed: bool,
    pub csv: String,
    pub path_svg: String,
    pub barriers_svg: String,
}

/// Simulates a TOML scenario and returns metrics, the CSV log and two plots.
pub fn run_scenario(toml_text: &str) -> Result<RunOutput, String> {
    let sc = parse_scenario(toml_text).map_err(|e| e.to_string())?;
    let result = run(&sc).map_err(|e| e.to_string())?;
    let audit = invariance_audit(&result.log, &sc).map_err(|e| e.to_string())?;
    let file = TrajectoryFile {
        meta: LogMeta::from_run(&sc, &result),
        log: result.log.clone(),
    };
    Ok(RunOutput {
        metrics: serde_json::to_value(&result.metrics).map_err(|e| e.to_string())?,
        audit_passed: audit.passed,
        csv: to_csv_string(&file).map_err(|e| e.to_string())?,
        path_svg: render(&file, PlotKind::Path),
        barriers_svg: render(&file, PlotKind::Barriers),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRequest {
    pub state: StateVector,
    pub u_nom: InputVector,
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_k1")]
    pub k1: [f64; 3],
    #[serde(default = "default_k2")]
    pub k2: [f64; 2],
    #[serde(default)]
    pub input_boxes: bool,
    #[serde(default)]
    pub slack: bool,
}

fn default_k1() -> [f64; 3] {
    [1.0, 2.0, 2.0]
}
fn default_k2() -> [f64; 2] {
    [4.0, 4.0]
}

#[derive(Serialize)]
pub struct BarrierReport {
    pub body: String,
    pub obstacle: usize,
    pub cascade: Vec<f64>,
}

#[derive(Serialize)]
pub struct FilterResponse {
    pub u_safe: InputVector,
    pub active: bool,
    pub margins: Vec<f64>,
    pub barriers: Vec<BarrierReport>,
}

/// Projects a nominal input onto the safe set at one multi-steering state.
pub fn filter_at_state(request_json: &str) -> Result<FilterResponse, String> {
    let req: FilterRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
    let gains = GainVectors::new(req.k1, req.k2).map_err(|e| e.to_string())?;
    let dists = SafetyDistances::default();
    let geom = RobotGeometry::default();
    let settings = FilterSettings {
        slack: req.slack,
        input_boxes: req.input_boxes,
        ..FilterSettings::default()
    };
    let cas = cascade(&req.state, &req.obstacles, &gains, &dists, &geom).map_err(|e| e.to_string())?;
    let (u_safe, active, margins) = project_at_state(
        &req.state,
        &req.u_nom,
        &req.obstacles,
        &gains,
        &dists,
        &geom,
        &settings,
        &Limits::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(FilterResponse {
        u_safe,
        active,
        margins: margins.iter().copied().collect(),
        barriers: cas
            .barriers
            .into_iter()
            .map(|b| BarrierReport {
                body: b.body.name().to_string(),
                obstacle: b.obstacle_index,
                cascade: b.values,
            })
            .collect(),
    })
}

/// Renders a trajectory CSV as SVG.
pub fn plot_csv(csv_text: &str, kind: &str) -> Result<String, String> {
    let kind: PlotKind = kind.parse().map_err(|e: mcbf_core::Error| e.to_string())?;
    let file = read_csv(csv_text.as_bytes()).map_err(|e| e.to_string())?;
    Ok(render(&file, kind))
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = shippedScenarios)]
pub fn wasm_shipped_scenarios() -> String {
    let map: serde_json::Map<_, _> = SHIPPED
        .iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
        .collect();
    serde_json::Value::Object(map).to_string()
}

#[wasm_bindgen(js_name = runScenario)]
pub fn wasm_run_scenario(toml_text: &str) -> Result<String, JsValue> {
    to_js(run_scenario(toml_text))
}

#[wasm_bindgen(js_name = filterAtState)]
pub fn wasm_filter_at_state(request_json: &str) -> Result<String, JsValue> {
    to_js(filter_at_state(request_json))
}

#[wasm_bindgen(js_name = plotCsv)]
pub fn wasm_plot_csv(csv_text: &str, kind: &str) -> Result<String, JsValue> {
    plot_csv(csv_text, kind).map_err(|e| JsValue::from_str(&e))
}

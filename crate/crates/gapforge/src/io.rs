//! Persistence: instance JSON, curve CSV, plots and the gap table.
//!
//! Every file is written once through a temporary file in the target directory
//! followed by a rename.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::domain::{build_instance, validate, Instance, InstanceParams, SCHEMA_VERSION};
use crate::error::{GapError, Result};
use crate::geometry::phi;
use crate::optimize::GapReport;
use crate::topology::ring_lift;
use crate::trajectories::Curve;

/// Environment variable that replaces the default output directory.
pub const OUT_ENV: &str = "GAPFORGE_OUT";
pub const DEFAULT_OUT: &str = "out";
/// Path of the instance schema inside the repository.
pub const SCHEMA_REF: &str = "crates/gapforge/schema/instance.schema.json";
pub const INSTANCE_SCHEMA: &str = include_str!("../schema/instance.schema.json");

/// `--out` if given, else `$GAPFORGE_OUT`, else `out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| GapError::Io(e.to_string()))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let v: Value = serde_json::from_str(text)?;
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(n) if n == u64::from(SCHEMA_VERSION) => {}
        Some(n) => return Err(GapError::Parse(format!("schema_version {n} unsupported (expected {SCHEMA_VERSION})"))),
        None => return Err(GapError::Parse("missing schema_version".into())),
    }
    let inst: Instance = serde_json::from_value(v)?;
    validate(&inst)?;
    Ok(inst)
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn save_instance(path: &Path, inst: &Instance) -> Result<()> {
    write_json(path, inst)
}

/// Columns `t, x1, ..., xd`.
pub fn curve_csv(curve: &Curve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = curve.d();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, x) in curve.times.iter().zip(&curve.points) {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Inverse of [`curve_csv`]; controls are not stored, so states between rows are interpolated.
pub fn parse_curve_csv(text: &str, inst: &Instance) -> Result<Curve> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let d = r.headers().map_err(csv_err)?.len().saturating_sub(1);
    if d != inst.d {
        return Err(GapError::Parse(format!("curve has {d} state columns, instance has d = {}", inst.d)));
    }
    let (mut times, mut points) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| GapError::Parse(format!("{f:?}: {e}"))))
            .collect::<Result<_>>()?;
        times.push(v[0]);
        points.push(v[1..].to_vec());
    }
    Curve::from_samples(times, points, inst)
}

/// Keys accepted by `--set key=value`.
pub const OVERRIDE_KEYS: [&str; 6] = ["d", "a", "b", "lambda", "delta", "eps_moll"];

pub fn parse_override(s: &str) -> Result<(String, f64)> {
    let (k, v) = s.split_once('=').ok_or_else(|| GapError::Parse(format!("override {s:?} is not key=value")))?;
    let k = k.trim();
    if !OVERRIDE_KEYS.contains(&k) {
        return Err(GapError::Parse(format!("unknown override key {k:?} (allowed: {})", OVERRIDE_KEYS.join(", "))));
    }
    let v = v.trim().parse::<f64>().map_err(|e| GapError::Parse(format!("override {k}: {e}")))?;
    Ok((k.to_string(), v))
}

/// Applies overrides and re-validates. The target is rebuilt from the defaults
/// when `d`, `a` or `lambda` change.
pub fn apply_overrides(params: InstanceParams, sets: &[String]) -> Result<InstanceParams> {
    let mut p = params;
    for s in sets {
        let (k, v) = parse_override(s)?;
        match k.as_str() {
            "d" => {
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(GapError::Parse(format!("d = {v} is not a dimension")));
                }
                p.d = v as usize;
                p.target = None;
            }
            "a" => {
                p.a = v;
                p.target = None;
            }
            "b" => p.b = v,
            "lambda" => {
                p.lambda = v;
                p.target = None;
            }
            "delta" => p.delta = v,
            _ => p.eps_moll = v,
        }
    }
    Ok(p)
}

pub fn instance_params(inst: &Instance) -> InstanceParams {
    InstanceParams {
        d: inst.d,
        a: inst.a,
        b: inst.b,
        lambda: inst.lambda,
        delta: inst.delta,
        eps_moll: inst.eps_moll,
        control_set: inst.control_set.clone(),
        target: Some(inst.target.clone()),
    }
}

/// `inst` with overrides applied; unchanged (including `problem`) when `sets` is empty.
pub fn override_instance(inst: &Instance, sets: &[String]) -> Result<Instance> {
    if sets.is_empty() {
        return Ok(inst.clone());
    }
    let mut out = build_instance(apply_overrides(instance_params(inst), sets)?)?;
    out.problem = inst.problem.clone();
    Ok(out)
}

fn csv_err(e: csv::Error) -> GapError {
    GapError::Io(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| GapError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| GapError::Io(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    OmegaProjection,
    RingCurve,
    GapTable,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::OmegaProjection => "omega_projection.svg",
            PlotKind::RingCurve => "ring_curve.svg",
            PlotKind::GapTable => "gap_table.csv",
        }
    }
}

impl FromStr for PlotKind {
    type Err = GapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega-projection" => Ok(PlotKind::OmegaProjection),
            "ring-curve" => Ok(PlotKind::RingCurve),
            "gap-table" => Ok(PlotKind::GapTable),
            other => Err(GapError::UnknownKind(other.to_string())),
        }
    }
}

/// Inputs for [`export_plot`]; each kind reads what it needs.
pub struct PlotData<'a> {
    pub instance: &'a Instance,
    pub curve: Option<&'a Curve>,
    pub report: Option<&'a GapReport>,
}

pub fn export_plot(kind: PlotKind, data: &PlotData<'_>) -> Result<String> {
    match kind {
        PlotKind::OmegaProjection => Ok(omega_projection_svg(data.instance)),
        PlotKind::RingCurve => {
            let curve = data.curve.ok_or_else(|| GapError::Precondition("ring-curve needs a curve".into()))?;
            Ok(ring_curve_svg(curve, data.instance))
        }
        PlotKind::GapTable => gap_table_csv(data.report.ok_or_else(|| GapError::Precondition("gap-table needs a report".into()))?),
    }
}

const W: f64 = 800.0;
const H: f64 = 400.0;

fn svg_open(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <title>{title}</title>\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, width: f64) {
    out.push_str("<polyline fill=\"none\" stroke=\"");
    out.push_str(stroke);
    let _ = write!(out, "\" stroke-width=\"{width}\" points=\"");
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

/// Boundary of `Ω` under `x ↦ (x1, x_{d-1}, x_d)`, drawn as generator lines of the tube
/// in an oblique view. The transverse axes are magnified to the page.
pub fn omega_projection_svg(inst: &Instance) -> String {
    let d = inst.d;
    let tip = inst.cap_tip();
    let rmax = 3.0 / inst.b;
    let (n1, ng) = (1200usize, 12usize);
    let view = |x: &[f64]| -> (f64, f64) {
        let (u, v, w) = (x[0] / tip, x[d - 2] / rmax, x[d - 1] / rmax);
        (W * 0.5 + 0.45 * W * u + 0.08 * W * v, H * 0.5 - 0.35 * H * w - 0.08 * H * v)
    };
    let mut out = svg_open(W, H, "omega projection");
    for g in 0..ng {
        let th = std::f64::consts::TAU * g as f64 / ng as f64;
        let pts: Vec<(f64, f64)> = (0..=n1)
            .map(|i| {
                let y1 = -tip + 2.0 * tip * i as f64 / n1 as f64;
                let r = inst.radius_profile(y1).max(0.0);
                let [c, s] = inst.spiral_center_tail(y1);
                let mut y = vec![0.0; d];
                y[0] = y1;
                y[d - 2] = c + r * th.cos();
                y[d - 1] = s + r * th.sin();
                view(&phi(&y))
            })
            .collect();
        polyline(&mut out, &pts, "#1f4e79", 0.6);
    }
    let axis: Vec<(f64, f64)> = (0..=n1)
        .map(|i| {
            let y1 = -tip + 2.0 * tip * i as f64 / n1 as f64;
            let mut y = vec![0.0; d];
            y[0] = y1;
            view(&phi(&y))
        })
        .collect();
    polyline(&mut out, &axis, "#c00000", 1.2);
    out.push_str("</svg>\n");
    out
}

/// The ring lift of `curve` with the circle of radius `1/b` for reference.
pub fn ring_curve_svg(curve: &Curve, inst: &Instance) -> String {
    let size = H;
    let scale = 0.4 * size * inst.b / 1.5;
    let map = |p: [f64; 2]| (0.5 * size + scale * p[0], 0.5 * size - scale * p[1]);
    let mut out = svg_open(size, size, "ring curve");
    let _ = writeln!(
        out,
        "<circle cx=\"{c:.2}\" cy=\"{c:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>",
        c = 0.5 * size,
        r = scale / inst.b
    );
    let pts: Vec<(f64, f64)> = ring_lift(curve, inst).points.into_iter().map(map).collect();
    polyline(&mut out, &pts, "#c00000", 1.0);
    out.push_str("</svg>\n");
    out
}

/// One row per report field; nested objects use dotted names, the per-start list is
/// reported by its length and other lists are joined with `;`.
pub fn gap_table_csv(report: &GapReport) -> Result<String> {
    let v = serde_json::to_value(report)?;
    let mut rows = Vec::new();
    flatten("", &v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"]).map_err(csv_err)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    finish_csv(w)
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, rows);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object()) => rows.push((format!("{prefix}.len"), a.len().to_string())),
        Value::Array(a) => rows.push((prefix.to_string(), a.iter().map(scalar).collect::<Vec<_>>().join(";"))),
        other => rows.push((prefix.to_string(), scalar(other))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::reference_minimizer;

    #[test]
    fn instance_round_trip_is_byte_identical() {
        let inst = Instance::default();
        let text = to_json(&inst).unwrap();
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(to_json(&back).unwrap(), text);
    }

    #[test]
    fn rejects_wrong_schema_and_unknown_fields() {
        let inst = Instance::default();
        let mut v = serde_json::to_value(&inst).unwrap();
        v["schema_version"] = 99.into();
        assert!(matches!(parse_instance(&v.to_string()), Err(GapError::Parse(_))));
        let mut v = serde_json::to_value(&inst).unwrap();
        v["colour"] = "red".into();
        assert!(parse_instance(&v.to_string()).is_err());
        let mut v = serde_json::to_value(&inst).unwrap();
        v["a"] = 2.0.into();
        assert!(matches!(parse_instance(&v.to_string()), Err(GapError::InvalidInstance(_))));
    }

    #[test]
    fn atomic_write_replaces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn unknown_plot_kind() {
        assert!(matches!("heatmap".parse::<PlotKind>(), Err(GapError::UnknownKind(_))));
        assert_eq!("ring-curve".parse::<PlotKind>().unwrap(), PlotKind::RingCurve);
    }

    #[test]
    fn reference_ring_is_the_plateau_circle() {
        let inst = Instance::default();
        let (_, curve) = reference_minimizer(&inst);
        let ring = ring_lift(&curve, &inst);
        for (t, p) in ring.times.iter().zip(&ring.points) {
            if t.abs() <= inst.a {
                assert!((p[0].hypot(p[1]) - 1.0 / inst.b).abs() < 1e-12);
            }
        }
        let a = ring_curve_svg(&curve, &inst);
        assert_eq!(a, ring_curve_svg(&curve, &inst));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn omega_projection_is_deterministic() {
        let inst = Instance::default();
        let s = omega_projection_svg(&inst);
        assert_eq!(s, omega_projection_svg(&inst));
        assert_eq!(s.matches("<polyline").count(), 13);
    }

    #[test]
    fn curve_csv_has_one_row_per_sample() {
        let inst = Instance::default();
        let (_, curve) = reference_minimizer(&inst);
        let text = curve_csv(&curve).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,x4");
        assert_eq!(lines.count(), curve.times.len());
    }

    #[test]
    fn gap_table_has_a_row_per_field() {
        let inst = Instance::default();
        let cfg = crate::optimize::GapConfig {
            budget: 2_000,
            ballbox_samples: 5,
            ..crate::optimize::GapConfig::new(2, 20, 0)
        };
        let report = crate::optimize::run_gap(&inst, &cfg).unwrap();
        let text = gap_table_csv(&report).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "quantity,value");
        let keys: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
        for k in ["relaxed_cost", "margin", "winding.bound", "kind.kind", "starts.len", "diagnostics", "lp_value"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let inst = Instance::default();
        let (_, curve) = reference_minimizer(&inst);
        let back = parse_curve_csv(&curve_csv(&curve).unwrap(), &inst).unwrap();
        assert_eq!(back.times, curve.times);
        assert_eq!(back.points, curve.points);
    }

    #[test]
    fn overrides() {
        let inst = Instance::default();
        let o = override_instance(&inst, &["a=0.12".into(), "b = 100".into()]).unwrap();
        assert_eq!((o.a, o.b), (0.12, 100.0));
        assert!((o.target.center[0] - 1.2 * 0.12).abs() < 1e-15);
        assert!(matches!(parse_override("colour=1"), Err(GapError::Parse(_))));
        assert!(parse_override("a").is_err());
        assert!(matches!(override_instance(&inst, &["b=10".into()]), Err(GapError::InvalidInstance(_))));
        assert_eq!(override_instance(&inst, &[]).unwrap(), inst);
    }
}

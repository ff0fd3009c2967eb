//! Output documents. JSON is canonical; CSV and text are projections of the
//! same content.

use closedmtp::{ClosureReport, ConsonanceReport, IndexSet, Scaling, SimReport, WeightingScheme};
use serde_json::{json, Map, Value};

use crate::input::Settings;

/// Significant digits kept for every floating-point output.
pub const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

pub fn round(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Round every non-integer number in a document.
fn round_all(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().map(round).and_then(serde_json::Number::from_f64) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_all),
        Value::Object(map) => map.values_mut().for_each(round_all),
        _ => {}
    }
}

fn metadata(s: &Settings) -> Map<String, Value> {
    let mut meta = Map::new();
    meta.insert("method".into(), json!(s.method.name()));
    meta.insert("alpha".into(), json!(s.alpha));
    meta.insert("seed".into(), json!(s.seed));
    meta.insert("target_error".into(), json!(s.precision.target_error));
    meta.insert("root_tol".into(), json!(s.precision.root_tol));
    meta
}

fn document(mut meta: Map<String, Value>, body: Value) -> Value {
    if let Value::Object(fields) = body {
        meta.extend(fields);
    }
    let mut doc = Value::Object(meta);
    round_all(&mut doc);
    doc
}

/// Per-member critical scaling, aligned with the members of the set.
fn member_scalings(set: IndexSet, scaling: &Option<Scaling>) -> Vec<f64> {
    set.iter()
        .map(|j| match scaling {
            Some(Scaling::Common(c)) => *c,
            Some(Scaling::PerBlock(blocks)) => blocks.iter().find(|b| b.members.contains(j)).map_or(1.0, |b| b.c),
            None => 1.0,
        })
        .collect()
}

pub fn analysis(report: &ClosureReport, p: &[f64], s: &Settings) -> Value {
    let hypotheses: Vec<Value> = p
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            json!({
                "index": i + 1,
                "p": pi,
                "adjusted": report.adjusted.as_ref().map(|a| a[i]),
                "rejected": report.rejected[i],
            })
        })
        .collect();
    let intersections: Vec<Value> = report
        .intersections
        .iter()
        .map(|r| {
            json!({
                "set": r.set.to_one_based(),
                "weights": r.weights,
                "p_value": r.p_value,
                "c": member_scalings(r.set, &r.scaling),
                "local_levels": r.local_levels,
                "rejected": r.rejected,
            })
        })
        .collect();
    let mut meta = metadata(s);
    meta.insert("m".into(), json!(p.len()));
    document(meta, json!({ "hypotheses": hypotheses, "intersections": intersections }))
}

/// Weights keep full precision so the document can be fed back as input
/// without rounding pushing a sum past one.
pub fn scheme(scheme: &WeightingScheme) -> Value {
    json!({ "scheme": scheme.to_external() })
}

pub fn consonance(report: &ConsonanceReport, m: usize, s: &Settings) -> Value {
    let violations: Vec<Value> = report
        .violations
        .iter()
        .map(|v| {
            json!({
                "superset": v.superset.to_one_based(),
                "subset": v.subset.to_one_based(),
                "hypothesis": v.index + 1,
                "superset_level": v.superset_level,
                "subset_level": v.subset_level,
            })
        })
        .collect();
    let mut meta = metadata(s);
    meta.insert("m".into(), json!(m));
    document(meta, json!({ "consonant": report.consonant, "tolerance": report.tolerance, "violations": violations }))
}

pub fn simulation(report: &SimReport, s: &Settings) -> Value {
    let hypotheses: Vec<Value> = report
        .rejection_rates
        .iter()
        .zip(&report.true_nulls)
        .enumerate()
        .map(|(i, (rate, true_null))| json!({ "index": i + 1, "true_null": true_null, "rejection_rate": rate }))
        .collect();
    let mut meta = metadata(s);
    meta.insert("m".into(), json!(report.rejection_rates.len()));
    meta.insert("replications".into(), json!(report.replications));
    document(
        meta,
        json!({
            "fwer_estimate": report.fwer_estimate,
            "fwer_stderr": report.fwer_stderr,
            "hypotheses": hypotheses,
        }),
    )
}

/// Plain rendering of a scalar cell.
fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn set_cell(v: &Value) -> String {
    format!("{{{}}}", cell(v).replace(' ', ","))
}

/// Rows of a table: one entry per object in `items`, with the given keys.
fn rows(items: &Value, keys: &[&str]) -> Vec<Vec<String>> {
    items.as_array().into_iter().flatten().map(|item| keys.iter().map(|k| cell(&item[*k])).collect()).collect()
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn settings_line(doc: &Value) -> String {
    format!(
        "method {}, alpha {}, seed {}, target error {}, root tolerance {}",
        cell(&doc["method"]),
        cell(&doc["alpha"]),
        cell(&doc["seed"]),
        cell(&doc["target_error"]),
        cell(&doc["root_tol"])
    )
}

pub fn render_analysis(doc: &Value, format: Format) -> String {
    let hyp_keys = ["index", "p", "adjusted", "rejected"];
    let int_keys = ["set", "weights", "p_value", "c", "local_levels", "rejected"];
    let hyp = rows(&doc["hypotheses"], &hyp_keys);
    let mut int = rows(&doc["intersections"], &int_keys);
    match format {
        Format::Json => pretty(doc),
        Format::Csv => {
            csv_table(&["hypothesis", "p", "adjusted", "rejected"], &hyp) + "\n" + &csv_table(&int_keys, &int)
        }
        Format::Text => {
            for (r, item) in int.iter_mut().zip(doc["intersections"].as_array().into_iter().flatten()) {
                r[0] = set_cell(&item["set"]);
            }
            let hyp: Vec<Vec<String>> = hyp
                .into_iter()
                .map(|mut r| {
                    r[0] = format!("H{}", r[0]);
                    r
                })
                .collect();
            format!(
                "Closed test with {}\n\n{}\n{}",
                settings_line(doc),
                text_table(&["hypothesis", "p", "adjusted", "rejected"], &hyp),
                text_table(&["intersection", "weights", "p_value", "c", "local_levels", "rejected"], &int)
            )
        }
    }
}

pub fn render_scheme(doc: &Value, format: Format) -> String {
    let keys = ["set", "weights"];
    let mut table = rows(&doc["scheme"], &keys);
    match format {
        Format::Json => pretty(doc),
        Format::Csv => csv_table(&keys, &table),
        Format::Text => {
            for (r, item) in table.iter_mut().zip(doc["scheme"].as_array().into_iter().flatten()) {
                r[0] = set_cell(&item["set"]);
            }
            text_table(&keys, &table)
        }
    }
}

pub fn render_consonance(doc: &Value, format: Format) -> String {
    let keys = ["superset", "subset", "hypothesis", "superset_level", "subset_level"];
    let mut table = rows(&doc["violations"], &keys);
    match format {
        Format::Json => pretty(doc),
        Format::Csv => csv_table(&keys, &table),
        Format::Text => {
            for (r, item) in table.iter_mut().zip(doc["violations"].as_array().into_iter().flatten()) {
                r[0] = set_cell(&item["superset"]);
                r[1] = set_cell(&item["subset"]);
                r[2] = format!("H{}", r[2]);
            }
            let verdict = if doc["consonant"] == Value::Bool(true) {
                "consonant".to_string()
            } else {
                format!("not consonant ({} violations)", table.len())
            };
            let mut out = format!(
                "Consonance check with {}\n{}, tolerance {}\n",
                settings_line(doc),
                verdict,
                cell(&doc["tolerance"])
            );
            if !table.is_empty() {
                out.push('\n');
                out.push_str(&text_table(&keys, &table));
            }
            out
        }
    }
}

pub fn render_simulation(doc: &Value, format: Format) -> String {
    let keys = ["index", "true_null", "rejection_rate"];
    let table = rows(&doc["hypotheses"], &keys);
    match format {
        Format::Json => pretty(doc),
        Format::Csv => {
            csv_table(
                &["replications", "fwer_estimate", "fwer_stderr"],
                &[vec![cell(&doc["replications"]), cell(&doc["fwer_estimate"]), cell(&doc["fwer_stderr"])]],
            ) + "\n"
                + &csv_table(&["hypothesis", "true_null", "rejection_rate"], &table)
        }
        Format::Text => {
            let table: Vec<Vec<String>> = table
                .into_iter()
                .map(|mut r| {
                    r[0] = format!("H{}", r[0]);
                    r
                })
                .collect();
            format!(
                "Simulation with {}, {} replications\nFWER {} (standard error {})\n\n{}",
                settings_line(doc),
                cell(&doc["replications"]),
                cell(&doc["fwer_estimate"]),
                cell(&doc["fwer_stderr"]),
                text_table(&["hypothesis", "true_null", "rejection_rate"], &table)
            )
        }
    }
}

fn pretty(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).unwrap_or_default();
    s.push('\n');
    s
}

//! Long-format plot data (`series,x,y,y_err`) from a run record.

use serde_json::Value;

/// CSV text, or `None` when the record has nothing to plot.
pub fn plotdata(record: &Value) -> Option<String> {
    let results = record.get("results")?;
    let rows = match record.get("kind")?.as_str()? {
        "eps_sweep" => eps_sweep(results),
        "mc_ldp" => ldp(results),
        "mc_smallball" => smallball(results),
        "gamma" => gamma(results),
        _ => Vec::new(),
    };
    if rows.is_empty() {
        return None;
    }
    let mut text = String::from("series,x,y,y_err\n");
    for (series, x, y, err) in rows {
        text.push_str(&format!("{series},{},{},{}\n", cell(Some(x)), cell(y), cell(err)));
    }
    Some(text)
}

type Row = (String, f64, Option<f64>, Option<f64>);

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn num(v: &Value, key: &str) -> Option<f64> {
    v.get(key)?.as_f64()
}

fn array<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
}

fn eps_sweep(results: &Value) -> Vec<Row> {
    let entries = array(results, "entries");
    let mut rows = Vec::new();
    for e in entries {
        if let Some(eps) = num(e, "eps") {
            rows.push(("distance".into(), eps, num(e, "dist_to_fw_mode"), None));
        }
    }
    for e in entries {
        if let Some(eps) = num(e, "eps") {
            rows.push(("scaled_om".into(), eps, num(e, "om_value"), None));
        }
    }
    rows
}

fn ldp(results: &Value) -> Vec<Row> {
    let Some(rate) = results.get("rate") else { return Vec::new() };
    let points = array(rate, "points");
    let mut rows: Vec<Row> = points
        .iter()
        .filter_map(|p| Some(("scaled_log_p".into(), num(p, "eps")?, num(p, "scaled_log"), num(p, "std_error"))))
        .collect();
    if let Some(inf) = num(results, "fw_infimum") {
        for p in points {
            if let Some(eps) = num(p, "eps") {
                rows.push(("neg_inf_fw".into(), eps, Some(-inf), None));
            }
        }
    }
    rows
}

fn smallball(results: &Value) -> Vec<Row> {
    array(results, "ladder")
        .iter()
        .filter_map(|r| {
            let log_ratio = num(r, "point_estimate").filter(|p| *p > 0.0).map(f64::ln);
            Some(("log_ratio".into(), num(r, "delta")?, log_ratio, num(r, "log_half_width")))
        })
        .collect()
}

fn gamma(results: &Value) -> Vec<Row> {
    let Some(report) = results.get("report") else { return Vec::new() };
    let mut rows = Vec::new();
    for r in array(report, "radii") {
        let Some(radius) = num(r, "radius") else { continue };
        rows.push(("liminf".into(), radius, num(r, "liminf_estimate"), None));
        rows.push(("limsup".into(), radius, num(r, "limsup_estimate"), None));
    }
    rows
}

//! CSV tables and dependency-free SVG charts for evaluation results.
//!
//! Files written by [`write_report`]:
//!
//! * `metrics.csv`: `config_id, n_train_per_worker, workers, layer_sizes,
//!   n_test, overall_acc, overall_acc_err, acc_with_ambig,
//!   acc_with_ambig_err, acc_0..acc_9, ambig_0..ambig_9`
//! * `per_label.csv`: `config_id, label, n, acc, acc_err, ambig, ambig_err`
//! * `mispred_matrix.csv`: `config_id, label, pred_0..pred_9`
//! * `accuracy_vs_ntrain.svg`, `per_label_<id>.svg`, `mispred_<id>.svg`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::evaluator::{binomial_error, Metrics};

/// One evaluated configuration, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_id: String,
    pub n_train_per_worker: usize,
    pub workers: usize,
    /// Hidden layer sizes joined by `x`, e.g. `250x250`.
    pub layer_sizes: String,
    pub n_test: usize,
    pub overall_acc: f64,
    pub acc_with_ambig: f64,
    pub label_n: [usize; 10],
    pub label_acc: [f64; 10],
    pub label_ambig: [f64; 10],
    pub mispredictions: [[f64; 10]; 10],
}

pub fn format_layers(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

impl ReportRow {
    pub fn from_metrics(
        config_id: impl Into<String>,
        n_train_per_worker: usize,
        workers: usize,
        layer_sizes: &[usize],
        m: &Metrics,
    ) -> Self {
        ReportRow {
            config_id: config_id.into(),
            n_train_per_worker,
            workers,
            layer_sizes: format_layers(layer_sizes),
            n_test: m.n,
            overall_acc: m.overall_accuracy(),
            acc_with_ambig: m.accuracy_with_ambiguity(),
            label_n: m.per_label_n,
            label_acc: std::array::from_fn(|l| m.label_accuracy(l)),
            label_ambig: std::array::from_fn(|l| m.label_ambiguity(l)),
            mispredictions: m.mispredictions,
        }
    }

    fn series(&self) -> String {
        if self.workers > 1 {
            format!("{} ({} workers)", self.layer_sizes, self.workers)
        } else {
            format!("{} direct", self.layer_sizes)
        }
    }
}

pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "config_id",
        "n_train_per_worker",
        "workers",
        "layer_sizes",
        "n_test",
        "overall_acc",
        "overall_acc_err",
        "acc_with_ambig",
        "acc_with_ambig_err",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..10).map(|l| format!("acc_{l}")));
    h.extend((0..10).map(|l| format!("ambig_{l}")));
    h
}

fn csv_err(e: impl std::fmt::Display) -> SnnError {
    SnnError::Csv(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| SnnError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_metrics_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(metrics_header()).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.config_id.clone(),
            r.n_train_per_worker.to_string(),
            r.workers.to_string(),
            r.layer_sizes.clone(),
            r.n_test.to_string(),
            num(r.overall_acc),
            num(binomial_error(r.overall_acc, r.n_test)),
            num(r.acc_with_ambig),
            num(binomial_error(r.acc_with_ambig, r.n_test)),
        ];
        rec.extend(r.label_acc.iter().map(|&x| num(x)));
        rec.extend(r.label_ambig.iter().map(|&x| num(x)));
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SnnError::io(path, e))
}

pub fn write_per_label_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["config_id", "label", "n", "acc", "acc_err", "ambig", "ambig_err"])
        .map_err(csv_err)?;
    for r in rows {
        for l in 0..10 {
            let n = r.label_n[l];
            w.write_record([
                r.config_id.clone(),
                l.to_string(),
                n.to_string(),
                num(r.label_acc[l]),
                num(binomial_error(r.label_acc[l], n)),
                num(r.label_ambig[l]),
                num(binomial_error(r.label_ambig[l], n)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| SnnError::io(path, e))
}

pub fn write_matrix_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["config_id".to_string(), "label".to_string()];
    header.extend((0..10).map(|g| format!("pred_{g}")));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        for (l, row) in r.mispredictions.iter().enumerate() {
            let mut rec = vec![r.config_id.clone(), l.to_string()];
            rec.extend(row.iter().map(|&x| num(x)));
            w.write_record(rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| SnnError::io(path, e))
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SnnError::Csv(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn col(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| SnnError::Csv(format!("missing column {name}")))
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| SnnError::Csv(format!("cannot parse {s:?}")))
}

/// Reads back the three CSVs written by [`write_report`] from `dir`.
pub fn read_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let (h, recs) = read_table(&dir.join("metrics.csv"))?;
    let mut rows: Vec<ReportRow> = Vec::new();
    for rec in &recs {
        let get = |name: &str| -> Result<&str> { Ok(&rec[col(&h, name)?]) };
        let mut row = ReportRow {
            config_id: get("config_id")?.to_string(),
            n_train_per_worker: parse(get("n_train_per_worker")?)?,
            workers: parse(get("workers")?)?,
            layer_sizes: get("layer_sizes")?.to_string(),
            n_test: parse(get("n_test")?)?,
            overall_acc: parse(get("overall_acc")?)?,
            acc_with_ambig: parse(get("acc_with_ambig")?)?,
            label_n: [0; 10],
            label_acc: [0.0; 10],
            label_ambig: [0.0; 10],
            mispredictions: [[0.0; 10]; 10],
        };
        for l in 0..10 {
            row.label_acc[l] = parse(get(&format!("acc_{l}"))?)?;
            row.label_ambig[l] = parse(get(&format!("ambig_{l}"))?)?;
        }
        rows.push(row);
    }
    let index: BTreeMap<String, usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.config_id.clone(), i))
        .collect();

    let per_label = dir.join("per_label.csv");
    if per_label.exists() {
        let (h, recs) = read_table(&per_label)?;
        let (ci, li, ni) = (col(&h, "config_id")?, col(&h, "label")?, col(&h, "n")?);
        for rec in &recs {
            if let Some(&i) = index.get(&rec[ci]) {
                let l: usize = parse(&rec[li])?;
                rows[i].label_n[l] = parse(&rec[ni])?;
            }
        }
    }
    let matrix = dir.join("mispred_matrix.csv");
    if matrix.exists() {
        let (h, recs) = read_table(&matrix)?;
        let (ci, li) = (col(&h, "config_id")?, col(&h, "label")?);
        for rec in &recs {
            if let Some(&i) = index.get(&rec[ci]) {
                let l: usize = parse(&rec[li])?;
                for g in 0..10 {
                    rows[i].mispredictions[l][g] = parse(&rec[col(&h, &format!("pred_{g}"))?])?;
                }
            }
        }
    }
    Ok(rows)
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overall accuracy against training stimuli per worker (log x axis), one
/// polyline per (layer sizes, workers) series.
pub fn accuracy_chart(rows: &[ReportRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 180.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut series: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        series.entry(r.series()).or_default().push(r);
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n_train_per_worker.max(1) as f64).log10()).collect();
    let x_lo = xs.iter().cloned().fold(f64::INFINITY, f64::min).floor();
    let mut x_hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil();
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| top + (1.0 - y) * ph;

    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Overall test accuracy vs training stimuli per worker</text>",
        left + pw / 2.0
    );
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=10 {
        let y = k as f64 / 10.0;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" x2=\"{}\" y1=\"{y0}\" y2=\"{y0}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.1}</text>",
            left,
            left + pw,
            left - 6.0,
            py(y) + 4.0,
            y0 = py(y)
        );
    }
    let mut d = x_lo as i64;
    while d as f64 <= x_hi {
        let x = px(d as f64);
        let _ = writeln!(
            s,
            "<line x1=\"{x}\" x2=\"{x}\" y1=\"{top}\" y2=\"{}\" stroke=\"#ddd\"/><text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>",
            top + ph,
            top + ph + 16.0
        );
        d += 1;
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">training stimuli per worker</text>",
        left + pw / 2.0,
        h - 10.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = pts.clone();
        pts.sort_by_key(|r| r.n_train_per_worker);
        let path: Vec<String> = pts
            .iter()
            .map(|r| {
                format!(
                    "{:.2},{:.2}",
                    px((r.n_train_per_worker.max(1) as f64).log10()),
                    py(r.overall_acc)
                )
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        for r in &pts {
            let x = px((r.n_train_per_worker.max(1) as f64).log10());
            let err = binomial_error(r.overall_acc, r.n_test);
            let _ = writeln!(
                s,
                "<line x1=\"{x:.2}\" x2=\"{x:.2}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\"/><circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                py(r.overall_acc + err),
                py(r.overall_acc - err),
                py(r.overall_acc)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            left + pw + 12.0,
            ly - 10.0,
            left + pw + 30.0,
            ly,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars of overall accuracy and accuracy with ambiguity per label.
pub fn per_label_chart(row: &ReportRow) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, top, bottom) = (60.0, 30.0, 50.0);
    let pw = w - left - 20.0;
    let ph = h - top - bottom;
    let slot = pw / 10.0;
    let bar = slot * 0.35;
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Accuracy per label: {}</text>",
        left + pw / 2.0,
        escape(&row.config_id)
    );
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let yy = top + (1.0 - y) * ph;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" x2=\"{}\" y1=\"{yy}\" y2=\"{yy}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.1}</text>",
            left + pw,
            left - 6.0,
            yy + 4.0
        );
    }
    for l in 0..10 {
        let x0 = left + slot * l as f64 + slot * 0.15;
        for (k, (v, color)) in [(row.label_acc[l], PALETTE[0]), (row.label_ambig[l], PALETTE[1])]
            .into_iter()
            .enumerate()
        {
            let bh = v * ph;
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar:.2}\" height=\"{bh:.2}\" fill=\"{color}\"/>",
                x0 + k as f64 * bar,
                top + ph - bh
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{l}</text>",
            x0 + bar,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">overall</text><rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">with ambiguity</text>",
        h - 22.0,
        PALETTE[0],
        left + 14.0,
        h - 13.0,
        left + 90.0,
        h - 22.0,
        PALETTE[1],
        left + 104.0,
        h - 13.0
    );
    s.push_str("</svg>\n");
    s
}

/// Misprediction heatmap, rows = input label, columns = predicted label.
pub fn matrix_heatmap(row: &ReportRow) -> String {
    let cell = 36.0;
    let (left, top) = (60.0, 50.0);
    let w = left + cell * 10.0 + 20.0;
    let h = top + cell * 10.0 + 40.0;
    let max = row
        .mispredictions
        .iter()
        .flatten()
        .cloned()
        .fold(0.0f64, f64::max);
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">Incorrect predictions: {}</text>",
        w / 2.0,
        escape(&row.config_id)
    );
    for l in 0..10 {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{l}</text><text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{l}</text>",
            left - 6.0,
            top + cell * l as f64 + cell / 2.0 + 4.0,
            left + cell * l as f64 + cell / 2.0,
            top - 6.0
        );
        for g in 0..10 {
            let v = row.mispredictions[l][g];
            let t = if max > 0.0 { v / max } else { 0.0 };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb(255,{shade},{shade})\" stroke=\"#eee\"><title>label {l} predicted {g}: {v}</title></rect>",
                left + cell * g as f64,
                top + cell * l as f64
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted label</text><text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">input label</text>",
        left + cell * 5.0,
        h - 12.0,
        top + cell * 5.0,
        top + cell * 5.0
    );
    s.push_str("</svg>\n");
    s
}

fn safe_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| SnnError::io(path, e))
}

/// Writes CSVs (always, headers only when `rows` is empty) and SVG charts
/// (only when there is something to plot). Returns the files written.
pub fn write_report(rows: &[ReportRow], out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| SnnError::io(out_dir, e))?;
    let mut written = vec![
        "metrics.csv".to_string(),
        "per_label.csv".to_string(),
        "mispred_matrix.csv".to_string(),
    ];
    write_metrics_csv(rows, &out_dir.join(&written[0]))?;
    write_per_label_csv(rows, &out_dir.join(&written[1]))?;
    write_matrix_csv(rows, &out_dir.join(&written[2]))?;
    if rows.is_empty() {
        return Ok(written);
    }
    let name = "accuracy_vs_ntrain.svg".to_string();
    write_file(&out_dir.join(&name), &accuracy_chart(rows))?;
    written.push(name);
    for r in rows {
        let id = safe_id(&r.config_id);
        let bars = format!("per_label_{id}.svg");
        write_file(&out_dir.join(&bars), &per_label_chart(r))?;
        let heat = format!("mispred_{id}.svg");
        write_file(&out_dir.join(&heat), &matrix_heatmap(r))?;
        written.push(bars);
        written.push(heat);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::Prediction;

    fn row(id: &str, n_train: usize) -> ReportRow {
        let preds: Vec<_> = (0..50)
            .map(|k| {
                let mut c = [0u64; 10];
                c[(k * 7 % 10) as usize] = 3;
                Prediction::from_counts(c, (k % 10) as u8)
            })
            .collect();
        ReportRow::from_metrics(id, n_train, 1, &[10], &Metrics::from_predictions(&preds))
    }

    #[test]
    fn empty_report_is_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&[], dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("config_id,n_train_per_worker,workers,layer_sizes,n_test,overall_acc,overall_acc_err,acc_with_ambig,acc_with_ambig_err,acc_0"));
        assert!(!std::fs::read_dir(dir.path())
            .unwrap()
            .any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
    }

    #[test]
    fn single_series_single_line() {
        let rows = vec![row("a", 10), row("b", 100), row("c", 1000)];
        let svg = accuracy_chart(&rows);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn heatmap_has_labels_and_cells() {
        let svg = matrix_heatmap(&row("a", 10));
        assert_eq!(svg.matches("<rect x=").count(), 100);
        assert!(svg.contains(">9</text>"));
        assert!(svg.contains("input label"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("a", 10), row("b", 100)];
        write_report(&rows, dir.path()).unwrap();
        let back = read_report(dir.path()).unwrap();
        assert_eq!(back, rows);
    }
}

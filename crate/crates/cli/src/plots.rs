//! Plot-ready data: whitespace-separated `.dat` files for gnuplot and a JSON
//! manifest describing panels, axes and series. No rendering happens here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kstep::trainer::TRAIN_LOG_HEADER;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::pipeline::{write_file, SUMMARY_HEADER};
use crate::sweep::BIAS_VARIANCE_HEADER;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    TrainLog,
    Summary,
    BiasVariance,
}

impl Schema {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Schema::TrainLog => &TRAIN_LOG_HEADER,
            Schema::Summary => &SUMMARY_HEADER,
            Schema::BiasVariance => &BIAS_VARIANCE_HEADER,
        }
    }

    fn detect(first: &str) -> Option<Self> {
        [Schema::TrainLog, Schema::Summary, Schema::BiasVariance]
            .into_iter()
            .find(|s| s.header()[0] == first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub file: String,
    /// gnuplot `index` of the data block inside `file`.
    pub index: usize,
    pub x_column: usize,
    pub y_column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panel {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Manifest {
    pub panels: Vec<Panel>,
}

struct Table {
    path: PathBuf,
    schema: Schema,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let schema_err = |column: &str| CliError::Schema {
            file: path.to_path_buf(),
            column: column.to_string(),
        };
        let header = r.headers().map_err(|_| schema_err("<header>"))?.clone();
        let first = header.get(0).unwrap_or("");
        if first.is_empty() {
            return Err(schema_err("<header>"));
        }
        let schema = Schema::detect(first).ok_or_else(|| schema_err(first))?;
        let expected = schema.header();
        for (i, want) in expected.iter().enumerate() {
            match header.get(i) {
                Some(got) if got == *want => {}
                Some(got) => return Err(schema_err(got)),
                None => return Err(schema_err(want)),
            }
        }
        if let Some(extra) = header.get(expected.len()) {
            return Err(schema_err(extra));
        }
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| schema_err("<row>"))?;
        if rows.is_empty() {
            return Err(schema_err("<no rows>"));
        }
        Ok(Table {
            path: path.to_path_buf(),
            schema,
            rows,
        })
    }

    fn col(&self, name: &str) -> usize {
        self.schema
            .header()
            .iter()
            .position(|c| *c == name)
            .expect("schema column")
    }

    fn num(&self, row: &csv::StringRecord, name: &str) -> CliResult<f64> {
        row.get(self.col(name))
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| CliError::Schema {
                file: self.path.clone(),
                column: name.to_string(),
            })
    }

    fn text<'a>(&self, row: &'a csv::StringRecord, name: &str) -> &'a str {
        row.get(self.col(name)).unwrap_or("")
    }
}

/// `runs/k2-seed0/trainlog.csv` is labelled `k2-seed0`.
fn series_label(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / xs.len() as f64).sqrt()
}

#[derive(Default)]
struct Outputs {
    files: BTreeMap<String, String>,
    manifest: Manifest,
}

fn learning_curves(tables: &[&Table], out: &mut Outputs) -> CliResult<()> {
    if tables.is_empty() {
        return Ok(());
    }
    let mut panel = Panel {
        name: "learning_curves".into(),
        x_label: "iter".into(),
        y_label: "eval_return".into(),
        series: Vec::new(),
    };
    let mut text = String::from("# iter mean_G mean_Ghat eval_return\n");
    for (index, t) in tables.iter().enumerate() {
        if index > 0 {
            text.push_str("\n\n");
        }
        let label = series_label(&t.path);
        text.push_str(&format!("# {label}\n"));
        for row in &t.rows {
            text.push_str(&format!(
                "{} {} {} {}\n",
                t.num(row, "iter")?,
                t.num(row, "mean_G")?,
                t.num(row, "mean_Ghat")?,
                t.num(row, "eval_return")?
            ));
        }
        panel.series.push(Series {
            label,
            file: "learning_curves.dat".into(),
            index,
            x_column: 1,
            y_column: 4,
        });
    }
    out.files.insert("learning_curves.dat".into(), text);
    out.manifest.panels.push(panel);
    Ok(())
}

fn method_summary(tables: &[&Table], out: &mut Outputs) -> CliResult<()> {
    let mut by_method: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for t in tables {
        for row in &t.rows {
            let m = t.text(row, "method").to_string();
            if !order.contains(&m) {
                order.push(m.clone());
            }
            let pos = order.iter().position(|x| *x == m).unwrap();
            by_method.entry((pos, m)).or_default().push(t.num(row, "test_return")?);
        }
    }
    if by_method.is_empty() {
        return Ok(());
    }
    let mut text = String::from("# position method mean_test_return std_error n\n");
    for ((pos, m), xs) in &by_method {
        text.push_str(&format!("{pos} {m} {} {} {}\n", mean(xs), std_error(xs), xs.len()));
    }
    out.files.insert("method_summary.dat".into(), text);
    out.manifest.panels.push(Panel {
        name: "method_summary".into(),
        x_label: "method".into(),
        y_label: "test_return".into(),
        series: vec![Series {
            label: "seed mean".into(),
            file: "method_summary.dat".into(),
            index: 0,
            x_column: 1,
            y_column: 3,
        }],
    });
    Ok(())
}

fn bias_variance(tables: &[&Table], out: &mut Outputs) -> CliResult<()> {
    // bucket -> K -> (bias, variance, var_actual) per seed
    let mut cells: BTreeMap<String, BTreeMap<u64, Vec<[f64; 3]>>> = BTreeMap::new();
    for t in tables {
        for row in &t.rows {
            let k = t.num(row, "K")? as u64;
            cells
                .entry(t.text(row, "kl_bucket").to_string())
                .or_default()
                .entry(k)
                .or_default()
                .push([
                    t.num(row, "mean_abs_bias")?,
                    t.num(row, "mean_variance")?,
                    t.num(row, "mean_var_actual")?,
                ]);
        }
    }
    if cells.is_empty() {
        return Ok(());
    }
    let mut bias = String::from("# K mean_abs_bias std_error\n");
    let mut var = String::from("# K mean_variance mean_var_actual ratio\n");
    let mut bias_panel = Panel {
        name: "bias".into(),
        x_label: "K".into(),
        y_label: "mean_abs_bias".into(),
        series: Vec::new(),
    };
    let mut var_panel = Panel {
        name: "variance".into(),
        x_label: "K".into(),
        y_label: "mean_variance".into(),
        series: Vec::new(),
    };
    for (index, (bucket, by_k)) in cells.iter().enumerate() {
        if index > 0 {
            bias.push_str("\n\n");
            var.push_str("\n\n");
        }
        bias.push_str(&format!("# kl_bucket {bucket}\n"));
        var.push_str(&format!("# kl_bucket {bucket}\n"));
        for (k, vals) in by_k {
            let b: Vec<f64> = vals.iter().map(|v| v[0]).collect();
            let (v, va) = (
                mean(&vals.iter().map(|v| v[1]).collect::<Vec<_>>()),
                mean(&vals.iter().map(|v| v[2]).collect::<Vec<_>>()),
            );
            bias.push_str(&format!("{k} {} {}\n", mean(&b), std_error(&b)));
            var.push_str(&format!("{k} {v} {va} {}\n", v / va));
        }
        let label = format!("kl_bucket {bucket}");
        bias_panel.series.push(Series {
            label: label.clone(),
            file: "bias.dat".into(),
            index,
            x_column: 1,
            y_column: 2,
        });
        var_panel.series.push(Series {
            label,
            file: "variance.dat".into(),
            index,
            x_column: 1,
            y_column: 2,
        });
    }
    out.files.insert("bias.dat".into(), bias);
    out.files.insert("variance.dat".into(), var);
    out.manifest.panels.push(bias_panel);
    out.manifest.panels.push(var_panel);
    Ok(())
}

/// Reads every CSV, checks its schema and writes the plot data into `out`.
/// Returns the written file names, manifest last.
pub fn emit_plots(paths: &[PathBuf], out: &Path) -> CliResult<Vec<PathBuf>> {
    if paths.is_empty() {
        return Err(CliError::Config("emit-plots needs at least one CSV".into()));
    }
    let tables = paths.iter().map(|p| Table::read(p)).collect::<CliResult<Vec<_>>>()?;
    let pick = |s: Schema| tables.iter().filter(|t| t.schema == s).collect::<Vec<_>>();
    let mut outputs = Outputs::default();
    learning_curves(&pick(Schema::TrainLog), &mut outputs)?;
    method_summary(&pick(Schema::Summary), &mut outputs)?;
    bias_variance(&pick(Schema::BiasVariance), &mut outputs)?;
    let mut written = Vec::new();
    for (name, text) in &outputs.files {
        let p = out.join(name);
        write_file(&p, text)?;
        written.push(p);
    }
    let p = out.join("manifest.json");
    write_file(
        &p,
        serde_json::to_string_pretty(&outputs.manifest).expect("manifest serializes") + "\n",
    )?;
    written.push(p);
    Ok(written)
}

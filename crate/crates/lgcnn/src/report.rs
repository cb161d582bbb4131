//! Text tables and `key=value` records for every report. FDRs use three
//! decimals throughout.

use std::collections::BTreeMap;
use std::fmt::Write;

use lgcnn_core::model::{ParamAudit, ReceptiveField};
use lgcnn_core::train::{Comparison, EvalReport, TrainReport, Winner};

use crate::error::{AppError, AppResult};

/// Per-fault FDRs in two side-by-side column blocks, then the mean.
pub fn eval_table(r: &EvalReport) -> String {
    let rows: Vec<(usize, f64)> = r.per_class_fdr.iter().map(|(&c, &f)| (c + 1, f)).collect();
    let half = rows.len().div_ceil(2);
    let mut out = String::new();
    writeln!(out, "{:<10}{:>7}  | {:<10}{:>7}", "Fault ID", "FDR", "Fault ID", "FDR").unwrap();
    for i in 0..half {
        let (f, v) = rows[i];
        write!(out, "{f:<10}{v:>7.3}  |").unwrap();
        if let Some(&(f2, v2)) = rows.get(i + half) {
            write!(out, " {f2:<10}{v2:>7.3}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "mean FDR {:.3} over {} samples", r.mean_fdr, r.sample_count).unwrap();
    out
}

pub fn eval_kv(r: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "samples={}", r.sample_count).unwrap();
    writeln!(out, "classes={}", r.classes()).unwrap();
    writeln!(out, "mean_fdr={:.3}", r.mean_fdr).unwrap();
    for (&c, &f) in &r.per_class_fdr {
        writeln!(out, "fdr.{}={f:.3}", c + 1).unwrap();
    }
    out
}

pub fn confusion_csv(r: &EvalReport) -> String {
    let n = r.classes();
    let mut out = String::from("true\\predicted");
    for c in 1..=n {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for (t, row) in r.confusion.iter().enumerate() {
        write!(out, "{}", t + 1).unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn train_kv(r: &TrainReport) -> String {
    let mut out = String::new();
    writeln!(out, "steps={}", r.steps).unwrap();
    for e in &r.epochs {
        writeln!(out, "epoch.{}.loss={:.6}", e.epoch, e.mean_loss).unwrap();
        writeln!(out, "epoch.{}.accuracy={:.6}", e.epoch, e.train_accuracy).unwrap();
    }
    out
}

pub fn parse_kv(text: &str) -> AppResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| AppError::input(format!("line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Per-class FDRs (0-based class index) from an evaluation record.
pub fn fdrs_from_kv(text: &str) -> AppResult<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (k, v) in parse_kv(text)? {
        let Some(id) = k.strip_prefix("fdr.") else { continue };
        let fault: usize = id
            .parse()
            .ok()
            .filter(|&f| f >= 1)
            .ok_or_else(|| AppError::input(format!("bad fault id in `{k}`")))?;
        let fdr: f64 = v
            .parse()
            .ok()
            .filter(|f: &f64| (0.0..=1.0).contains(f))
            .ok_or_else(|| AppError::input(format!("`{k}={v}` is not an FDR")))?;
        out.insert(fault - 1, fdr);
    }
    if out.is_empty() {
        return Err(AppError::input("no fdr.<fault> entries"));
    }
    Ok(out)
}

pub fn compare_table(c: &Comparison, a: &str, b: &str) -> String {
    let mut out = String::new();
    writeln!(out, "{:<10}{:>9}{:>9}{:>9}", "Fault ID", a, b, "delta").unwrap();
    let cell = |v: f64, win: bool| format!("{v:.3}{}", if win { "*" } else { " " });
    for r in &c.rows {
        writeln!(
            out,
            "{:<10}{:>9}{:>9}{:>+9.3}",
            r.class + 1,
            cell(r.a, r.winner == Winner::A),
            cell(r.b, r.winner == Winner::B),
            r.delta
        )
        .unwrap();
    }
    writeln!(
        out,
        "{:<10}{:>8.3} {:>8.3} {:>+9.3}",
        "mean", c.mean_a, c.mean_b, c.mean_delta
    )
    .unwrap();
    writeln!(
        out,
        "wins: {a} {}, {b} {}, ties {}  (* marks the higher FDR)",
        c.wins(Winner::A),
        c.wins(Winner::B),
        c.wins(Winner::Tie)
    )
    .unwrap();
    out
}

pub fn compare_kv(c: &Comparison) -> String {
    let mut out = String::new();
    writeln!(out, "mean_a={:.3}", c.mean_a).unwrap();
    writeln!(out, "mean_b={:.3}", c.mean_b).unwrap();
    writeln!(out, "mean_delta={:+.3}", c.mean_delta).unwrap();
    writeln!(out, "wins_a={}", c.wins(Winner::A)).unwrap();
    writeln!(out, "wins_b={}", c.wins(Winner::B)).unwrap();
    writeln!(out, "ties={}", c.wins(Winner::Tie)).unwrap();
    for r in &c.rows {
        writeln!(out, "delta.{}={:+.3}", r.class + 1, r.delta).unwrap();
    }
    out
}

fn dims(s: &lgcnn_core::Shape4) -> String {
    format!("{}x{}x{}", s.channels, s.height, s.width)
}

pub fn audit_table(a: &ParamAudit, rfs: &[(String, ReceptiveField)]) -> String {
    let mut out = String::new();
    writeln!(out, "model {}", a.model).unwrap();
    writeln!(out, "{:<16}{:<18}{:>14}{:>12}{:>10}", "layer", "kind", "output CxHxW", "params", "RF HxW").unwrap();
    for (row, (_, rf)) in a.rows.iter().zip(rfs) {
        writeln!(
            out,
            "{:<16}{:<18}{:>14}{:>12}{:>10}",
            row.name,
            row.kind,
            dims(&row.shape),
            row.params,
            format!("{}x{}", rf.height, rf.width)
        )
        .unwrap();
    }
    writeln!(out, "total trainable parameters {}", a.total).unwrap();
    out
}

pub fn audit_kv(a: &ParamAudit, rfs: &[(String, ReceptiveField)]) -> String {
    let mut out = String::new();
    writeln!(out, "model={}", a.model).unwrap();
    for (row, (_, rf)) in a.rows.iter().zip(rfs) {
        writeln!(out, "layer.{}.shape={}", row.name, dims(&row.shape)).unwrap();
        writeln!(out, "layer.{}.params={}", row.name, row.params).unwrap();
        writeln!(out, "layer.{}.rf={}x{}", row.name, rf.height, rf.width).unwrap();
    }
    writeln!(out, "total={}", a.total).unwrap();
    out
}

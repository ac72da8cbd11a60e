//! CSV front end for the evaluation statistics.
//!
//! `wilcoxon` reads `baseline,treatment` columns, optionally grouped by an
//! `item` column. `ueqs` and `q13` read an `item` column plus one column of
//! item means per condition.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use petwalk_core::evalstats::{
    item_number, paired_report, q13_aggregate, round_half_up, ueqs_aggregate, PairedSample,
};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Wilcoxon,
    Ueqs,
    Q13,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> anyhow::Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.iter().map(|h| h.to_lowercase()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { headers, rows })
}

fn cell(row: &[String], col: usize, line: usize, name: &str) -> anyhow::Result<f64> {
    let raw = row.get(col).map(String::as_str).unwrap_or("");
    raw.parse()
        .with_context(|| format!("line {line}: column `{name}`: `{raw}` is not a number"))
}

fn column(t: &Table, name: &str) -> Option<usize> {
    t.headers.iter().position(|h| h == name)
}

pub fn run(kind: Kind, path: &Path, as_json: bool) -> anyhow::Result<String> {
    let table = read_table(path)?;
    match kind {
        Kind::Wilcoxon => wilcoxon(&table, as_json),
        Kind::Ueqs => aggregate(&table, as_json, 8, &["pq", "hq", "overall"], |v| {
            let s = ueqs_aggregate(v)?;
            Ok(vec![s.pq, s.hq, s.overall])
        }),
        Kind::Q13 => aggregate(&table, as_json, 11, &["utility", "acceptance", "vp", "overall"], |v| {
            let s = q13_aggregate(v)?;
            Ok(vec![s.utility, s.acceptance, s.vp, s.overall])
        }),
    }
}

fn wilcoxon(t: &Table, as_json: bool) -> anyhow::Result<String> {
    let (Some(b), Some(tr)) = (column(t, "baseline"), column(t, "treatment")) else {
        bail!("expected `baseline` and `treatment` columns");
    };
    let item = column(t, "item");
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (line, row) in &t.rows {
        let name = item.and_then(|i| row.get(i)).cloned().unwrap_or_else(|| "all".into());
        let pair = (cell(row, b, *line, "baseline")?, cell(row, tr, *line, "treatment")?);
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pairs)) => pairs.push(pair),
            None => groups.push((name, vec![pair])),
        }
    }
    if groups.is_empty() {
        bail!("no data rows");
    }

    let mut out = String::new();
    let mut records = Vec::new();
    if !as_json {
        writeln!(out, "{:<10} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}  effect", "item", "n", "W", "R+", "R-", "p", "r_rb")?;
    }
    for (name, pairs) in groups {
        let sample = PairedSample::new(pairs).with_context(|| format!("item {name}"))?;
        match paired_report(&sample) {
            Ok(r) => {
                let w = r.wilcoxon;
                if as_json {
                    records.push(json!({
                        "item": name, "n_eff": w.n_eff, "w": w.w, "r_plus": w.r_plus, "r_minus": w.r_minus,
                        "p_two_tailed": w.p_two_tailed, "r_rb": r.r_rb, "effect": r.effect.label(),
                    }));
                } else {
                    writeln!(
                        out,
                        "{:<10} {:>5} {:>7.1} {:>7.1} {:>7.1} {:>7.3} {:>7.3}  {}",
                        name,
                        w.n_eff,
                        w.w,
                        w.r_plus,
                        w.r_minus,
                        round_half_up(w.p_two_tailed, 3),
                        round_half_up(r.r_rb, 3),
                        r.effect.label()
                    )?;
                }
            }
            Err(e) => {
                if as_json {
                    records.push(json!({ "item": name, "error": e.to_string() }));
                } else {
                    writeln!(out, "{name:<10} {e}")?;
                }
            }
        }
    }
    if as_json {
        out = serde_json::to_string_pretty(&Value::Array(records))?;
        out.push('\n');
    }
    Ok(out)
}

fn aggregate(
    t: &Table,
    as_json: bool,
    arity: usize,
    names: &[&str],
    f: impl Fn(&[f64]) -> petwalk_core::Result<Vec<f64>>,
) -> anyhow::Result<String> {
    let Some(item) = column(t, "item") else {
        bail!("expected an `item` column");
    };
    let mut rows: Vec<(usize, usize, &Vec<String>)> = Vec::new();
    for (line, row) in &t.rows {
        let label = row.get(item).map(String::as_str).unwrap_or("");
        let n = item_number(label).with_context(|| format!("line {line}: item `{label}` has no number"))?;
        rows.push((n, *line, row));
    }
    rows.sort_by_key(|r| r.0);
    let numbers: Vec<usize> = rows.iter().map(|r| r.0).collect();
    if numbers != (1..=arity).collect::<Vec<_>>() {
        bail!("expected items 1..={arity} exactly once, got {numbers:?}");
    }

    let mut out = String::new();
    let mut records = Vec::new();
    if !as_json {
        write!(out, "{:<12}", "condition")?;
        for n in names {
            write!(out, " {n:>10}")?;
        }
        out.push('\n');
    }
    for (col, header) in t.headers.iter().enumerate() {
        if col == item {
            continue;
        }
        let values = rows
            .iter()
            .map(|(_, line, row)| cell(row, col, *line, header))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        let scores = f(&values)?;
        if as_json {
            let mut m = serde_json::Map::new();
            m.insert("condition".into(), json!(header));
            for (n, v) in names.iter().zip(&scores) {
                m.insert((*n).into(), json!(v));
                m.insert(format!("{n}_2dp"), json!(round_half_up(*v, 2)));
            }
            records.push(Value::Object(m));
        } else {
            write!(out, "{header:<12}")?;
            for v in &scores {
                write!(out, " {:>10.2}", round_half_up(*v, 2))?;
            }
            out.push('\n');
        }
    }
    if as_json {
        out = serde_json::to_string_pretty(&Value::Array(records))?;
        out.push('\n');
    }
    Ok(out)
}

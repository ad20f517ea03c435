use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::metrics::MetricsReport;
use super::Cell;
use crate::error::Result;
use crate::forecaster::ModelKind;

pub const TABLE_HEADER: &str = "Step,Sequence,Model,MSE,MAE,MAPE,R2";

/// One table row: a finished cell or a failed one.
#[derive(Clone, Debug)]
pub struct Row<'a> {
    pub cell: Cell,
    pub report: Option<&'a MetricsReport>,
    pub error: Option<&'a str>,
}

pub fn step_label(horizon: usize) -> String {
    if horizon == 1 {
        "Single-step".to_string()
    } else {
        format!("Multi-step (t+{horizon})")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn sorted<'a>(rows: &[Row<'a>]) -> Vec<Row<'a>> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.cell.sort_key());
    rows
}

/// `table2.csv`: one line per cell ordered by (step, sequence, model);
/// failed cells and undefined metrics read `NA`.
pub fn table_csv(rows: &[Row<'_>]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in sorted(rows) {
        let c = &r.cell;
        let (mse, mae, mape, r2) = match r.report {
            Some(rep) => {
                let m = &rep.metrics;
                (m.mse.to_string(), m.mae.to_string(), opt(m.mape), opt(m.r2))
            }
            None => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{mse},{mae},{mape},{r2}",
            step_label(c.horizon),
            c.seq_len,
            c.model.label()
        );
    }
    out
}

/// `table2.md`: the same rows at four decimals with the lowest MSE of each
/// (step, sequence) group in bold, followed by the published reference
/// values.
pub fn table_markdown(rows: &[Row<'_>]) -> String {
    let rows = sorted(rows);
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &rows {
        if let Some(rep) = r.report {
            let e = best.entry((r.cell.horizon, r.cell.seq_len)).or_insert(f64::INFINITY);
            *e = e.min(rep.metrics.mse);
        }
    }

    let mut out = String::from("# Performance indicators\n\n");
    out.push_str("Metrics are computed in normalized units at the last forecast step.\n\n");
    out.push_str("| Step | Sequence | Model | MSE | MAE | MAPE | R² | Test samples |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    let f4 = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        let c = &r.cell;
        let Some(rep) = r.report else {
            let _ = writeln!(
                out,
                "| {} | {} | {} | failed | | | | |",
                step_label(c.horizon),
                c.seq_len,
                c.model.label()
            );
            continue;
        };
        let m = &rep.metrics;
        let mut mse = format!("{:.4}", m.mse);
        if best.get(&(c.horizon, c.seq_len)) == Some(&m.mse) {
            mse = format!("**{mse}**");
        }
        let _ = writeln!(
            out,
            "| {} | {} | {} | {mse} | {:.4} | {} | {} | {} |",
            step_label(c.horizon),
            c.seq_len,
            c.model.label(),
            m.mae,
            f4(m.mape),
            f4(m.r2),
            m.n
        );
    }

    let excluded: usize = rows
        .iter()
        .filter_map(|r| r.report)
        .map(|r| r.metrics.mape_excluded)
        .sum();
    if excluded > 0 {
        let _ = writeln!(
            out,
            "\nMAPE skips targets with |y| ≤ {:e}; {excluded} test targets were skipped in total.",
            super::metrics::MAPE_EPS
        );
    }
    let failures: Vec<_> = rows.iter().filter_map(|r| r.error.map(|e| (&r.cell, e))).collect();
    if !failures.is_empty() {
        out.push_str("\n## Failed cells\n\n");
        for (c, e) in failures {
            let _ = writeln!(out, "- {}: {e}", c.name());
        }
    }
    out.push_str(&reference_footer());
    out
}

/// Published reference row: (horizon, seq, model, MSE, 5th column, R²) in
/// each of the two circulated versions of the table. The first version
/// labels the fifth column MAPE, the second labels it MAE.
struct Reference {
    horizon: usize,
    seq_len: usize,
    model: ModelKind,
    first: (f64, f64, f64),
    second: (f64, f64, f64),
}

const fn r(
    horizon: usize,
    seq_len: usize,
    model: ModelKind,
    first: (f64, f64, f64),
    second: (f64, f64, f64),
) -> Reference {
    Reference {
        horizon,
        seq_len,
        model,
        first,
        second,
    }
}

use ModelKind::{Gru, Lstm, Transformer};

const REFERENCE: [Reference; 18] = [
    r(1, 10, Lstm, (0.0029, 0.396, 0.9723), (0.0029, 0.396, 0.9729)),
    r(1, 10, Gru, (0.0038, 0.552, 0.9711), (0.0038, 0.552, 0.9723)),
    r(1, 10, Transformer, (0.0010, 0.095, 0.9923), (0.0010, 0.095, 0.9923)),
    r(1, 20, Lstm, (0.0054, 0.442, 0.9672), (0.0054, 0.442, 0.9672)),
    r(1, 20, Gru, (0.0038, 0.610, 0.9695), (0.0038, 0.610, 0.9695)),
    r(1, 20, Transformer, (0.0008, 0.0790, 0.9940), (0.0008, 0.0790, 0.9940)),
    r(1, 50, Lstm, (0.0023, 0.3932, 0.9701), (0.0023, 0.3932, 0.9701)),
    r(1, 50, Gru, (0.0040, 0.443, 0.9706), (0.0040, 0.443, 0.9706)),
    r(1, 50, Transformer, (0.0007, 0.0822, 0.9958), (0.0007, 0.0820, 0.9958)),
    r(5, 10, Lstm, (0.0345, 0.856, 0.7454), (0.0345, 0.856, 0.7454)),
    r(5, 10, Gru, (0.0598, 1.340, 0.5622), (0.0598, 1.340, 0.5622)),
    r(5, 10, Transformer, (0.0212, 0.480, 0.8331), (0.0212, 0.480, 0.8331)),
    r(5, 20, Lstm, (0.0345, 0.962, 0.7496), (0.345, 0.962, 0.7496)),
    r(5, 20, Gru, (0.2876, 0.911, 0.7812), (0.2876, 0.911, 0.7812)),
    r(5, 20, Transformer, (0.1901, 0.546, 0.8471), (0.1901, 0.456, 0.8471)),
    r(5, 50, Lstm, (0.0294, 0.845, 0.7833), (0.294, 0.845, 0.7833)),
    r(5, 50, Gru, (0.0263, 0.876, 0.8067), (0.0263, 0.876, 0.8067)),
    r(5, 50, Transformer, (0.0103, 0.650, 0.8431), (0.0103, 0.650, 0.8431)),
];

fn reference_footer() -> String {
    let mut out = String::from(
        "\n## Published reference values\n\n\
         Reported on the original 61,500-sample German wind dataset, which is not public; \
         shown for orientation only. Two versions of the table circulate: the first labels \
         the fifth column MAPE, the second relabels the same numbers MAE. Where the versions \
         disagree both readings are shown as `first / second` and marked with †.\n\n\
         | Step | Sequence | Model | MSE | MAPE / MAE | R² |\n|---|---|---|---|---|---|\n",
    );
    let cell = |a: f64, b: f64, flagged: &mut bool| {
        if a == b {
            format!("{a}")
        } else {
            *flagged = true;
            format!("{a} / {b} †")
        }
    };
    for row in &REFERENCE {
        let mut flagged = false;
        let mse = cell(row.first.0, row.second.0, &mut flagged);
        let col = cell(row.first.1, row.second.1, &mut flagged);
        let r2 = cell(row.first.2, row.second.2, &mut flagged);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {mse} | {col} | {r2} |",
            step_label(row.horizon),
            row.seq_len,
            row.model.label()
        );
    }
    out
}

pub fn write_tables(rows: &[Row<'_>], dir: &Path) -> Result<()> {
    std::fs::write(dir.join("table2.csv"), table_csv(rows))?;
    std::fs::write(dir.join("table2.md"), table_markdown(rows))?;
    Ok(())
}

/// `t,actual,predicted` with `t` the index of the forecast target in the
/// full series.
pub fn write_forecast_csv(path: &Path, t: &[usize], actual: &[f64], predicted: &[f64]) -> Result<()> {
    let mut out = String::from("t,actual,predicted\n");
    for ((t, a), p) in t.iter().zip(actual).zip(predicted) {
        let _ = writeln!(out, "{t},{a},{p}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

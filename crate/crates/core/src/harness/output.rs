use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::Method;
use super::sweep::{SizeRow, SizeTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
    Gnuplot,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "svg" => Ok(OutputFormat::Svg),
            "gnuplot" => Ok(OutputFormat::Gnuplot),
            other => Err(Error::Parse(format!("unknown output format {other:?}"))),
        }
    }
}

fn check_table(table: &SizeTable) -> Result<()> {
    if table.methods.is_empty() {
        return Err(Error::InvalidConfig("table has no methods".into()));
    }
    if table.rows.is_empty() {
        return Err(Error::InvalidConfig("table has no rows".into()));
    }
    Ok(())
}

/// Long-format CSV `t,method,size`; undefined entries are left out.
pub fn to_csv(table: &SizeTable) -> Result<String> {
    check_table(table)?;
    let mut out = String::from("t,method,size\n");
    for row in &table.rows {
        for (m, v) in table.methods.iter().zip(&row.values) {
            if let Some(v) = v {
                writeln!(out, "{},{},{}", row.t, m, v).expect("writing to a String");
            }
        }
    }
    Ok(out)
}

/// Inverse of [`to_csv`]. Methods come out in canonical order.
pub fn parse_csv(text: &str) -> Result<SizeTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "t,method,size" => {}
        other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
    }
    let mut cells: BTreeMap<usize, BTreeMap<Method, f64>> = BTreeMap::new();
    let mut methods: Vec<Method> = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", k + 2)));
        }
        let t: usize = parts[0]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad t: {e}", k + 2)))?;
        let m: Method = parts[1].parse()?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad size: {e}", k + 2)))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
        cells.entry(t).or_default().insert(m, v);
    }
    methods.sort();
    let rows = cells
        .into_iter()
        .map(|(t, vals)| SizeRow {
            t,
            values: methods.iter().map(|m| vals.get(m).copied()).collect(),
        })
        .collect();
    Ok(SizeTable { methods, rows })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 5] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e"];

fn positive_points(table: &SizeTable, m: Method) -> Vec<(f64, f64)> {
    table
        .column(m)
        .into_iter()
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|(t, v)| (t as f64, v))
        .collect()
}

/// Log-log chart with one polyline per method.
pub fn to_svg(table: &SizeTable) -> Result<String> {
    check_table(table)?;
    let all: Vec<(f64, f64)> = table
        .methods
        .iter()
        .flat_map(|m| positive_points(table, *m))
        .collect();
    if all.is_empty() {
        return Err(Error::InvalidConfig(
            "nothing to plot: no positive finite sizes".into(),
        ));
    }
    let lx = |x: f64| x.log10();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(lx(x));
        x1 = x1.max(lx(x));
        y0 = y0.min(lx(y));
        y1 = y1.max(lx(y));
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (lx(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (lx(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<g stroke="black" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t (log scale)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        w,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">size (log scale)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        w,
        r#"<text x="{m}" y="{y}" font-size="10">{lo:.4}</text><text x="{m}" y="{y2}" font-size="10">{hi:.4}</text>"#,
        m = 4.0,
        y = HEIGHT - MARGIN,
        y2 = MARGIN,
        lo = 10f64.powf(y0),
        hi = 10f64.powf(y1)
    );
    for (k, m) in table.methods.iter().enumerate() {
        let pts = positive_points(table, *m);
        if pts.is_empty() {
            continue;
        }
        let color = COLORS[k % COLORS.len()];
        let dash = if m.is_bound() {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline data-method="{m}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            w,
            r#"<line x1="{x1}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}"{dash}/><text x="{tx}" y="{ty}" font-size="11">{m}</text>"#,
            x1 = WIDTH - MARGIN - 110.0,
            x2 = WIDTH - MARGIN - 85.0,
            tx = WIDTH - MARGIN - 80.0,
            ty = ly + 4.0
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

/// A gnuplot script and its whitespace-separated data file (`?` marks gaps).
pub fn to_gnuplot(table: &SizeTable, data_file: &str) -> Result<(String, String)> {
    check_table(table)?;
    let mut data = String::from("# t");
    for m in &table.methods {
        data.push(' ');
        data.push_str(m.name());
    }
    data.push('\n');
    for row in &table.rows {
        data.push_str(&row.t.to_string());
        for v in &row.values {
            match v {
                Some(v) => {
                    let _ = write!(data, " {v}");
                }
                None => data.push_str(" ?"),
            }
        }
        data.push('\n');
    }
    let mut script = String::new();
    let _ = writeln!(script, "set datafile missing \"?\"");
    let _ = writeln!(script, "set logscale xy");
    let _ = writeln!(script, "set xlabel \"t\"");
    let _ = writeln!(script, "set ylabel \"size\"");
    let plots: Vec<String> = table
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let style = if m.is_bound() {
                "lines dashtype 2"
            } else {
                "lines"
            };
            format!(
                "\"{data_file}\" using 1:{} with {style} title \"{m}\"",
                k + 2
            )
        })
        .collect();
    let _ = writeln!(script, "plot {}", plots.join(", \\\n     "));
    Ok((script, data))
}

/// Writes the table under `dir` with the base name `stem`; returns the paths written.
pub fn emit_outputs(
    table: &SizeTable,
    format: OutputFormat,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>> {
    check_table(table)?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let p = dir.join(format!("{stem}.csv"));
            std::fs::write(&p, to_csv(table)?)?;
            written.push(p);
        }
        OutputFormat::Svg => {
            let p = dir.join(format!("{stem}.svg"));
            std::fs::write(&p, to_svg(table)?)?;
            written.push(p);
        }
        OutputFormat::Gnuplot => {
            let data_name = format!("{stem}.dat");
            let (script, data) = to_gnuplot(table, &data_name)?;
            let d = dir.join(&data_name);
            let s = dir.join(format!("{stem}.gp"));
            std::fs::write(&d, data)?;
            std::fs::write(&s, script)?;
            written.push(s);
            written.push(d);
        }
    }
    Ok(written)
}

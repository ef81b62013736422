//! CSV emission: header, one line per row, `#`-prefixed summary footer.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::runner::ResultRow;
use crate::HarnessError;

pub const CSV_HEADER: &str = "exp,variant,n,nu,lambda,repeat,j_hat_hat,j_hat_test,j_star,boot_bias,corrected,misspec,reusing,ms";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_row(r: &ResultRow) -> Result<String, HarnessError> {
    let fields = [
        r.exp.clone(),
        r.variant.clone(),
        r.n.to_string(),
        num(r.nu),
        num(r.lambda),
        r.repeat.to_string(),
        opt(r.j_hat_hat),
        opt(r.j_hat_test),
        opt(r.j_star),
        opt(r.boot_bias),
        opt(r.corrected),
        opt(r.misspec),
        opt(r.reusing),
        opt(r.ms),
    ];
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&fields).map_err(|e| HarnessError::Csv(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Footer lines: per-(variant, N, ν) means and standard deviations, then failures.
pub fn summary_lines(rows: &[ResultRow]) -> Vec<String> {
    let mut groups: BTreeMap<(String, usize, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.variant.clone(), r.n, r.nu.to_bits())).or_default().push(r);
    }
    let mut lines = Vec::new();
    for ((variant, n, nu), group) in &groups {
        let mut line = format!("# summary variant={variant} n={n} nu={} rows={}", num(f64::from_bits(*nu)), group.len());
        let fields: [(&str, fn(&ResultRow) -> Option<f64>); 6] = [
            ("j_hat_hat", |r| r.j_hat_hat),
            ("j_star", |r| r.j_star),
            ("misspec", |r| r.misspec),
            ("reusing", |r| r.reusing),
            ("boot_bias", |r| r.boot_bias),
            ("corrected", |r| r.corrected),
        ];
        for (name, get) in fields {
            let xs: Vec<f64> = group.iter().filter_map(|r| get(r)).collect();
            if !xs.is_empty() {
                let (m, s) = mean_sd(&xs);
                line.push_str(&format!(" {name}_mean={} {name}_sd={}", num(m), num(s)));
            }
        }
        lines.push(line);
    }
    for r in rows {
        if let Some(e) = &r.error {
            lines.push(format!("# failed variant={} n={} nu={} repeat={}: {}", r.variant, r.n, num(r.nu), r.repeat, e.replace('\n', " ")));
        }
    }
    lines
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Csv(e.to_string());
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for r in rows {
        w.write_all(csv_row(r)?.as_bytes()).map_err(io)?;
    }
    for line in summary_lines(rows) {
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io { path: path.to_path_buf(), source: e };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let file = File::create(path).map_err(io)?;
    write_csv(rows, BufWriter::new(file)).map_err(|e| match e {
        HarnessError::Csv(m) => HarnessError::Io { path: path.to_path_buf(), source: std::io::Error::other(m) },
        e => e,
    })
}

/// Parses rows back from an emitted file, skipping the footer. The `error`
/// field is not stored in the body and reads back as `None`.
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    let body: String = BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e }))
        .filter(|l| !matches!(l, Ok(s) if s.starts_with('#')))
        .map(|l| l.map(|s| s + "\n"))
        .collect::<Result<_, _>>()?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| HarnessError::Csv(e.to_string()))?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Csv(format!("{}: unexpected header", path.display())));
    }
    let bad = |what: &str| HarnessError::Csv(format!("{}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::Csv(e.to_string()))?;
        let f = |i: usize| -> Result<Option<f64>, HarnessError> {
            match &rec[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(CSV_HEADER.split(',').nth(i).unwrap_or("field"))),
            }
        };
        rows.push(ResultRow {
            exp: rec[0].to_string(),
            variant: rec[1].to_string(),
            n: rec[2].parse().map_err(|_| bad("n"))?,
            nu: f(3)?.ok_or_else(|| bad("nu"))?,
            lambda: f(4)?.ok_or_else(|| bad("lambda"))?,
            repeat: rec[5].parse().map_err(|_| bad("repeat"))?,
            j_hat_hat: f(6)?,
            j_hat_test: f(7)?,
            j_star: f(8)?,
            boot_bias: f(9)?,
            corrected: f(10)?,
            misspec: f(11)?,
            reusing: f(12)?,
            ms: f(13)?,
            error: None,
        });
    }
    Ok(rows)
}

/// The file without its `#` footer.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

//! Plain-text formats: delimiter-separated sample files, ECDF tables and
//! process dumps. Numbers are written in Rust's shortest round-trip form.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::Ecdf;
use crate::model::Sample;
use crate::process::StepProcess;
use crate::transport::{pair_costs, AnchorSet, Assignment};

fn split_row(line: &str, delimiter: char) -> Vec<&str> {
    if delimiter.is_whitespace() {
        line.split_whitespace().collect()
    } else {
        line.split(delimiter).map(str::trim).collect()
    }
}

/// Optional header names and numeric rows.
pub type Table = (Option<Vec<String>>, Vec<Vec<f64>>);

/// Parses rows of numbers. A first line that does not parse is taken as a
/// header; blank lines and lines starting with `#` are skipped.
pub fn parse_table(text: &str, delimiter: char) -> Result<Table> {
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_row(line, delimiter);
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(Error::Parse(format!(
                            "line {}: expected {} fields, found {}",
                            lineno + 1,
                            first.len(),
                            values.len()
                        )));
                    }
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("line {}: non-finite value", lineno + 1)));
                }
                rows.push(values);
            }
            Err(_) if rows.is_empty() && header.is_none() => {
                header = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", lineno + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok((header, rows))
}

/// A sample file: `p` covariate columns followed by the response.
pub fn parse_sample(text: &str, delimiter: char) -> Result<Sample> {
    let (_, rows) = parse_table(text, delimiter)?;
    let width = rows[0].len();
    if width < 2 {
        return Err(Error::Parse(
            "a sample needs at least one covariate and a response".into(),
        ));
    }
    let y: Vec<f64> = rows.iter().map(|r| r[width - 1]).collect();
    let x: Vec<f64> = rows.iter().flat_map(|r| r[..width - 1].iter().copied()).collect();
    Sample::new(x, width - 1, y)
}

/// Covariates only, one point per row.
pub fn parse_points(text: &str, delimiter: char) -> Result<(Vec<f64>, usize)> {
    let (_, rows) = parse_table(text, delimiter)?;
    let p = rows[0].len();
    Ok((rows.into_iter().flatten().collect(), p))
}

/// Columns `value, level` with level `i / r` at the `i`-th smallest value.
pub fn format_ecdf(ecdf: &Ecdf, delimiter: char) -> String {
    let mut out = format!("value{delimiter}level\n");
    let r = ecdf.len();
    for (i, v) in ecdf.values().iter().enumerate() {
        let _ = writeln!(out, "{v}{delimiter}{}", (i + 1) as f64 / r as f64);
    }
    out
}

/// Columns `x1, ..., xp, value` over the evaluation set.
pub fn format_process(proc: &StepProcess, delimiter: char) -> String {
    let p = proc.p();
    let mut out = String::new();
    let head: Vec<String> = (1..=p).map(|k| format!("x{k}")).chain(["value".to_string()]).collect();
    out.push_str(&head.join(&delimiter.to_string()));
    out.push('\n');
    for (x, v) in proc.eval_points().chunks_exact(p).zip(proc.eval_values()) {
        for c in x {
            let _ = write!(out, "{c}{delimiter}");
        }
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Columns `i, sigma_i, cost_i` (zero-based indices), then a `total` line.
pub fn format_assignment(x: &[f64], anchors: &AnchorSet, assignment: &Assignment, delimiter: char) -> String {
    let costs = pair_costs(x, anchors, &assignment.sigma);
    let mut out = format!("i{delimiter}sigma{delimiter}cost\n");
    for (i, (s, c)) in assignment.sigma.iter().zip(&costs).enumerate() {
        let _ = writeln!(out, "{i}{delimiter}{s}{delimiter}{c}");
    }
    let _ = writeln!(out, "# total{delimiter}{}", assignment.cost);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{build_process, GridSpec};
    use crate::transport::{generate_anchors, solve_assignment, AnchorMode};

    #[test]
    fn sample_with_and_without_header() {
        let a = parse_sample("x,y\n1,2\n3,4\n5,7\n", ',').unwrap();
        let b = parse_sample("1,2\n3,4\n\n# note\n5,7\n", ',').unwrap();
        assert_eq!(a, b);
        assert_eq!(a.p(), 1);
        assert_eq!(a.y(), &[2.0, 4.0, 7.0]);
        let t = parse_sample("1 2 3\n4 5 6\n7 8 9\n", ' ').unwrap();
        assert_eq!(t.p(), 2);
        assert_eq!(t.x(1), &[4.0, 5.0]);
    }

    #[test]
    fn malformed_tables() {
        assert!(parse_sample("1,2\n3\n", ',').is_err());
        assert!(parse_sample("x,y\n", ',').is_err());
        assert!(parse_sample("1,2\n3,abc\n", ',').is_err());
        assert!(parse_sample("1\n2\n", ',').is_err());
        assert!(parse_sample("1,2\n3,inf\n", ',').is_err());
    }

    #[test]
    fn ecdf_table() {
        let e = Ecdf::from_values(vec![0.5, 0.25]);
        assert_eq!(format_ecdf(&e, ','), "value,level\n0.25,0.5\n0.5,1\n");
    }

    #[test]
    fn process_table() {
        let proc = build_process(&[1.0, -1.0], &[0.5, 1.0], 1, GridSpec::default_for(1)).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(format_process(&proc, '\t'), format!("x1\tvalue\n0.5\t{s}\n1\t0\n"));
    }

    #[test]
    fn assignment_table() {
        let anchors = generate_anchors(2, 1, AnchorMode::Halton).unwrap();
        let x = [0.3, 0.7];
        let a = solve_assignment(&x, &anchors).unwrap();
        let text = format_assignment(&x, &anchors, &a, ',');
        assert!(text.starts_with("i,sigma,cost\n"));
        assert!(text.trim_end().ends_with(&format!("# total,{}", a.cost)));
    }
}

//! Trajectory CSV writer and a minimal numeric CSV reader.
//!
//! Values are written with 17 significant digits so they round-trip exactly.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulation::Trajectory;

/// `t,x1..xn,theta_hat1..p,rho[,a_hat1..p],u1..m,V,Q`
pub fn trajectory_header(n: usize, p: usize, m: usize, momentum: bool) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=p).map(|i| format!("theta_hat{i}")));
    cols.push("rho".into());
    if momentum {
        cols.extend((1..=p).map(|i| format!("a_hat{i}")));
    }
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.push("V".into());
    cols.push("Q".into());
    cols
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Indices of the rows written for a given stride: every `stride`-th sample
/// plus the last one.
pub fn output_rows(len: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut rows: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && rows.last() != Some(&(len - 1)) {
        rows.push(len - 1);
    }
    rows
}

/// Row-major table of a trajectory, one row per sample.
pub fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.times
        .iter()
        .zip(&traj.samples)
        .map(|(t, s)| {
            let mut row = vec![*t];
            row.extend_from_slice(s.state.x.as_slice());
            row.extend_from_slice(s.state.est.theta_hat.as_slice());
            row.push(s.state.est.rho);
            if let Some(a) = &s.state.est.a_hat {
                row.extend_from_slice(a.as_slice());
            }
            row.extend_from_slice(s.u.as_slice());
            row.push(s.v);
            row.push(s.q);
            row
        })
        .collect()
}

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory, header: &[String], stride: usize) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let rows = trajectory_rows(traj);
    for k in output_rows(rows.len(), stride) {
        let line: Vec<String> = rows[k].iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Header plus numeric rows. Empty fields parse as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|f| {
                    let f = f.trim();
                    if f.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        f.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("row {}: `{f}` is not a number", i + 1)))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(1, 1, 1, false).join(","), "t,x1,theta_hat1,rho,u1,V,Q");
        assert_eq!(
            trajectory_header(2, 2, 1, true).join(","),
            "t,x1,x2,theta_hat1,theta_hat2,rho,a_hat1,a_hat2,u1,V,Q"
        );
    }

    #[test]
    fn values_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 12345.678901234567, 0.0] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn stride_keeps_last_row() {
        assert_eq!(output_rows(7, 3), vec![0, 3, 6]);
        assert_eq!(output_rows(8, 3), vec![0, 3, 6, 7]);
        assert_eq!(output_rows(1, 100), vec![0]);
        assert!(output_rows(0, 2).is_empty());
    }

    #[test]
    fn parse_table() {
        let t = CsvTable::parse("t,V\n0,1\n1,\n").unwrap();
        assert_eq!(t.column("t").unwrap(), vec![0.0, 1.0]);
        assert!(t.column("V").unwrap()[1].is_nan());
        assert!(t.column("Q").is_none());
        assert!(CsvTable::parse("t,V\n0\n").is_err());
    }
}

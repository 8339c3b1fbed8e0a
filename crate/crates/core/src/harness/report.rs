//! CSV reports with the generating configuration embedded as `#` comment lines, plus
//! optional gnuplot scripts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::config::{ExperimentConfig, ExperimentKind};

/// A rectangular result table plus summary key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<(String, String)>,
}

impl Table {
    pub fn new(headers: Vec<&'static str>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, header: &str) -> Option<Vec<&str>> {
        let i = self.headers.iter().position(|h| *h == header)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Render `table` as CSV preceded by the config and summary as comment lines.
pub fn render_csv(table: &Table, config: &ExperimentConfig) -> Result<Vec<u8>> {
    let mut head = String::new();
    head.push_str("# offerset report\n");
    for line in config.to_toml().lines() {
        let _ = writeln!(head, "# {line}");
    }
    for (k, v) in &table.summary {
        let _ = writeln!(head, "# result.{k} = {v}");
    }
    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(&table.headers)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(w.into_inner().expect("flushed writer into Vec"))
}

pub fn write_csv(table: &Table, config: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table, config)?)?;
    Ok(())
}

/// Read back the data rows of a report written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((headers, rows))
}

/// A gnuplot script plotting the CSV at `csv_path`.
pub fn plot_script(kind: ExperimentKind, csv_path: &str) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\nset grid\n",
    );
    match kind {
        ExperimentKind::SampleProbs => {
            let _ = write!(
                s,
                "set xlabel 'distance to user'\nset ylabel 'sampling probability'\n\
                 plot '{csv_path}' using 1:2 with lines title 'p', \\\n\
                 \x20    '' using 1:3 with lines dashtype 2 title '0.95 p', \\\n\
                 \x20    '' using 1:4:5 with yerrorbars pointtype 7 pointsize 0.4 title 'empirical'\n"
            );
        }
        ExperimentKind::Benchmark => {
            let _ = write!(
                s,
                "set logscale x\nset xlabel 'sigma'\nset ylabel 'average conversion'\n\
                 plot '{csv_path}' using 1:(strcol(2) eq 'lss' ? $3 : 1/0) with linespoints title 'lss', \\\n\
                 \x20    '' using 1:(strcol(2) eq 'mean' ? $3 : 1/0) with linespoints title 'mean', \\\n\
                 \x20    '' using 1:(strcol(2) eq 'last' ? $3 : 1/0) with linespoints title 'last'\n"
            );
        }
        ExperimentKind::Scaling => {
            let _ = write!(
                s,
                "set logscale xy\nset xlabel 'n'\n\
                 plot '{csv_path}' using 1:5 with linespoints title 'query seconds', \\\n\
                 \x20    '' using 1:7 with linespoints axes x1y2 title 'candidates'\n\
                 set y2tics\nset logscale y2\nreplot\n"
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_comments() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        t.push(vec!["2.5".into(), "z".into()]);
        t.note("checked", 3);
        let cfg = ExperimentConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&t, &cfg, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# offerset report\n"));
        assert!(text.contains("# result.checked = 3\n"));
        let (h, rows) = read_csv(&path).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, t.rows);
        assert_eq!(t.column("b").unwrap(), vec!["x,y", "z"]);
        // the embedded config parses back to the original
        let embedded: String = text
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("# ") && !l.starts_with("# result."))
            .map(|l| format!("{}\n", &l[2..]))
            .collect();
        assert_eq!(ExperimentConfig::from_toml(&embedded).unwrap(), cfg);
    }

    #[test]
    fn plot_scripts_reference_the_data() {
        for kind in [
            ExperimentKind::SampleProbs,
            ExperimentKind::Benchmark,
            ExperimentKind::Scaling,
        ] {
            let s = plot_script(kind, "out.csv");
            assert!(s.contains("'out.csv'"));
            assert!(s.contains("separator ','"));
        }
    }
}

//! Delimiter-separated tables: the interval log exchanged between the
//! simulator and the post-processing, and the generic table layout used for
//! every other output.
//!
//! Every table is UTF-8 and looks like
//!
//! ```text
//! # rfiqkd <kind> v1
//! col_a,col_b,...
//! ...rows...
//! # end rows=<n>
//! ```
//!
//! The trailer makes truncated files detectable even when they were cut on a
//! row boundary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::protocol::{BasisPair, Intensity};
use crate::tally::{CellTable, Counts, IntervalTally};

pub const SCHEMA_PREFIX: &str = "# rfiqkd";
pub const SCHEMA_VERSION: u32 = 1;
pub const INTERVAL_LOG_KIND: &str = "interval-log";
const TRAILER_PREFIX: &str = "# end rows=";

/// A header plus string rows, written with a schema comment and trailer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub kind: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, header: Vec<String>) -> Self {
        Table {
            kind: kind.to_owned(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SCHEMA_PREFIX} {} v{SCHEMA_VERSION}", self.kind);
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        let _ = writeln!(out, "{TRAILER_PREFIX}{}", self.rows.len());
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Table> {
        let fail = |line: usize, reason: String| Error::Format {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, schema) = lines.next().ok_or_else(|| fail(1, "empty file".into()))?;
        let kind = schema
            .strip_prefix(SCHEMA_PREFIX)
            .map(str::trim)
            .and_then(|rest| rest.strip_suffix(&format!(" v{SCHEMA_VERSION}")))
            .ok_or_else(|| {
                fail(
                    1,
                    format!("expected schema line `{SCHEMA_PREFIX} <kind> v{SCHEMA_VERSION}`"),
                )
            })?;

        let (_, header) = lines
            .next()
            .ok_or_else(|| fail(2, "missing header row".into()))?;
        let header: Vec<String> = header.split(',').map(str::to_owned).collect();

        let mut rows = Vec::new();
        let mut trailer = None;
        for (line_no, line) in lines {
            if let Some(n) = line.strip_prefix(TRAILER_PREFIX) {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| fail(line_no, format!("malformed trailer `{line}`")))?;
                trailer = Some((line_no, n));
                continue;
            }
            if trailer.is_some() {
                return Err(fail(line_no, "content after end-of-table trailer".into()));
            }
            if line.starts_with('#') {
                return Err(fail(
                    line_no,
                    "unexpected comment line inside table body".into(),
                ));
            }
            let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
            if fields.len() != header.len() {
                return Err(fail(
                    line_no,
                    format!("expected {} fields, found {}", header.len(), fields.len()),
                ));
            }
            rows.push((line_no, fields));
        }
        let last_line = text.lines().count();
        let (t_line, declared) = trailer.ok_or_else(|| {
            fail(
                last_line,
                "missing `# end rows=` trailer (truncated file?)".into(),
            )
        })?;
        if declared != rows.len() {
            return Err(fail(
                t_line,
                format!("trailer declares {declared} rows, found {}", rows.len()),
            ));
        }
        Ok(Table {
            kind: kind.to_owned(),
            header,
            rows: rows.into_iter().map(|(_, r)| r).collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Table::parse(&text, path)
    }
}

/// Column names of the 15 cells: `signal_XX_count, signal_XX_errors, ...`.
pub fn cell_columns() -> Vec<String> {
    Intensity::ALL
        .iter()
        .flat_map(|k| {
            BasisPair::ALL
                .iter()
                .flat_map(move |p| [format!("{k}_{p}_count"), format!("{k}_{p}_errors")])
        })
        .collect()
}

pub fn cell_fields(cells: &CellTable<Counts>) -> Vec<String> {
    cells
        .iter()
        .flat_map(|(_, _, c)| [c.detections.to_string(), c.errors.to_string()])
        .collect()
}

fn interval_header(with_truth: bool) -> Vec<String> {
    let mut h = vec!["index".to_owned(), "t_start_s".to_owned()];
    h.extend(cell_columns());
    if with_truth {
        h.push("true_theta_rad".to_owned());
    }
    h
}

/// Interval log as a table. The ground-truth column is emitted only when
/// every tally carries it.
pub fn interval_table(tallies: &[IntervalTally]) -> Table {
    let with_truth = !tallies.is_empty() && tallies.iter().all(|t| t.true_theta.is_some());
    let mut table = Table::new(INTERVAL_LOG_KIND, interval_header(with_truth));
    for t in tallies {
        let mut row = vec![t.index.to_string(), t.t_start.to_string()];
        row.extend(cell_fields(&t.cells));
        if with_truth {
            row.push(t.true_theta.expect("checked above").to_string());
        }
        table.push(row);
    }
    table
}

pub fn write_log(tallies: &[IntervalTally], path: &Path) -> Result<()> {
    interval_table(tallies).write(path)
}

pub fn read_log(path: &Path) -> Result<Vec<IntervalTally>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(&text, path)
}

pub fn parse_log(text: &str, origin: &Path) -> Result<Vec<IntervalTally>> {
    let table = Table::parse(text, origin)?;
    let fail = |line: usize, reason: String| Error::Format {
        path: PathBuf::from(origin),
        line,
        reason,
    };
    if table.kind != INTERVAL_LOG_KIND {
        return Err(fail(
            1,
            format!("expected an {INTERVAL_LOG_KIND}, found `{}`", table.kind),
        ));
    }
    let with_truth = if table.header == interval_header(true) {
        true
    } else if table.header == interval_header(false) {
        false
    } else {
        return Err(fail(2, "unexpected interval-log header".into()));
    };

    // the body holds no comment lines, so row i sits on line i + 3
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 3;
            let int = |j: usize| -> Result<u64> {
                row[j].parse::<u64>().map_err(|_| {
                    fail(
                        line,
                        format!("column `{}`: `{}` is not a count", table.header[j], row[j]),
                    )
                })
            };
            let float = |j: usize| -> Result<f64> {
                row[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        fail(
                            line,
                            format!("column `{}`: `{}` is not a number", table.header[j], row[j]),
                        )
                    })
            };
            let index = int(0)?;
            let t_start = float(1)?;
            let mut cells = CellTable::<Counts>::default();
            let mut col = 2;
            for k in Intensity::ALL {
                for p in BasisPair::ALL {
                    let c = Counts::new(int(col)?, int(col + 1)?);
                    if c.errors > c.detections {
                        return Err(fail(
                            line,
                            format!(
                                "{k}_{p}: {} errors exceed {} detections",
                                c.errors, c.detections
                            ),
                        ));
                    }
                    cells[(k, p)] = c;
                    col += 2;
                }
            }
            let true_theta = if with_truth { Some(float(col)?) } else { None };
            Ok(IntervalTally {
                index,
                t_start,
                cells,
                true_theta,
            })
        })
        .collect()
}

//! Time-stamped per-cell state counts recorded during a simulation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Sir,
    Spd,
}

impl SimKind {
    pub fn states(self) -> &'static [&'static str] {
        match self {
            SimKind::Sir => &["S", "I", "R"],
            SimKind::Spd => &["C", "D"],
        }
    }

    pub fn time_column(self) -> &'static str {
        match self {
            SimKind::Sir => "t",
            SimKind::Spd => "round",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SimKind::Sir => "sir",
            SimKind::Spd => "spd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// `counts[cell][state]`.
    pub counts: Vec<Vec<usize>>,
}

impl Snapshot {
    pub fn cell_total(&self, cell: usize) -> usize {
        self.counts[cell].iter().sum()
    }

    /// Count of each state over the whole network.
    pub fn totals(&self) -> Vec<usize> {
        let states = self.counts.first().map_or(0, Vec::len);
        let mut out = vec![0; states];
        for cell in &self.counts {
            for (o, c) in out.iter_mut().zip(cell) {
                *o += c;
            }
        }
        out
    }

    /// Fraction of one state within a cell; `None` for empty cells.
    pub fn fraction(&self, cell: usize, state: usize) -> Option<f64> {
        let total = self.cell_total(cell);
        (total > 0).then(|| self.counts[cell][state] as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub kind: SimKind,
    pub width: usize,
    pub height: usize,
    /// Strictly increasing in time.
    pub snapshots: Vec<Snapshot>,
    /// Time at which the run stopped by its own rule (no infectious agents,
    /// or a strategy fixed point); `None` if it was cut off.
    pub terminal_time: Option<f64>,
}

impl SimTrace {
    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trace has at least one snapshot")
    }

    /// Snapshot closest in time to `t`; the earlier one wins an exact tie.
    pub fn nearest(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().min_by(|a, b| {
            (a.time - t)
                .abs()
                .total_cmp(&(b.time - t).abs())
                .then(a.time.total_cmp(&b.time))
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.kind.time_column(), "X", "Y"];
        header.extend(self.kind.states());
        w.write_record(&header)?;
        for snap in &self.snapshots {
            for (cell, counts) in snap.counts.iter().enumerate() {
                let mut rec = vec![
                    format_time(snap.time),
                    (cell % self.width).to_string(),
                    (cell / self.width).to_string(),
                ];
                rec.extend(counts.iter().map(usize::to_string));
                w.write_record(&rec)?;
            }
        }
        crate::error::finish_csv(w)
    }

    /// Parses a trace CSV. The kind is recognized from the header; the last
    /// snapshot is taken as terminal.
    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let kind = [SimKind::Sir, SimKind::Spd]
            .into_iter()
            .find(|k| {
                let mut expected = vec![k.time_column(), "X", "Y"];
                expected.extend(k.states());
                header == expected
            })
            .ok_or_else(|| bad(1, format!("unrecognized trace header {header:?}")))?;
        let states = kind.states().len();

        let mut rows: Vec<(f64, usize, usize, Vec<usize>)> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = idx + 2;
            let time: f64 = record[0]
                .parse()
                .map_err(|_| bad(line, format!("bad time {:?}", &record[0])))?;
            let int = |col: usize| -> Result<usize> {
                record
                    .get(col)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(line, format!("bad integer in column {col}")))
            };
            let counts = (0..states)
                .map(|s| int(3 + s))
                .collect::<Result<Vec<_>>>()?;
            rows.push((time, int(1)?, int(2)?, counts));
        }
        let width = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let height = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let cells = width * height;
        if cells == 0 || !rows.len().is_multiple_of(cells) {
            return Err(bad(0, "trace rows do not form whole snapshots".into()));
        }

        let mut snapshots: Vec<Snapshot> = Vec::new();
        for chunk in rows.chunks(cells) {
            let time = chunk[0].0;
            let mut counts = vec![Vec::new(); cells];
            for (t, x, y, c) in chunk {
                if *t != time {
                    return Err(bad(0, format!("snapshot at t={time} is incomplete")));
                }
                counts[y * width + x] = c.clone();
            }
            if counts.iter().any(Vec::is_empty) {
                return Err(bad(0, format!("snapshot at t={time} repeats a cell")));
            }
            if snapshots.last().is_some_and(|s| s.time >= time) {
                return Err(bad(0, "snapshot times must increase".into()));
            }
            snapshots.push(Snapshot { time, counts });
        }
        let terminal_time = snapshots.last().map(|s| s.time);
        Ok(SimTrace {
            kind,
            width,
            height,
            snapshots,
            terminal_time,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}

/// Times are multiples of a decimal step; printing them rounded to 1e-9
/// keeps `0.03` from rendering as `0.030000000000000002`.
pub fn format_time(t: f64) -> String {
    let rounded = (t * 1e9).round() / 1e9;
    format!("{rounded}")
}

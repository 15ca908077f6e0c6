//! Session datasets: time-binned spike counts with location labels, movement
//! direction, context tags and subdataset segmentation, plus the lag-window
//! feature construction used by all decoders.
//!
//! The on-disk format is a plain CSV with header
//! `t,context,subdataset,location,direction,n0,...,n{P-1}`, one row per
//! timepoint. `context` is `task` or `fr`; `direction` is `F`, `B` or `none`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_CLASSES: usize = 3;

/// Experimental context of a subdataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Task,
    FreeRunning,
}

impl Context {
    pub const ALL: [Context; 2] = [Context::Task, Context::FreeRunning];

    pub fn tag(self) -> &'static str {
        match self {
            Context::Task => "task",
            Context::FreeRunning => "fr",
        }
    }

    pub fn parse(s: &str) -> Option<Context> {
        match s {
            "task" => Some(Context::Task),
            "fr" => Some(Context::FreeRunning),
            _ => None,
        }
    }

    /// The opposite context.
    pub fn other(self) -> Context {
        match self {
            Context::Task => Context::FreeRunning,
            Context::FreeRunning => Context::Task,
        }
    }
}

/// Movement direction label for one timepoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    /// Timepoints without clear movement; excluded from every design.
    NoMovement,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "F",
            Direction::Backward => "B",
            Direction::NoMovement => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "F" => Some(Direction::Forward),
            "B" => Some(Direction::Backward),
            "none" => Some(Direction::NoMovement),
            _ => None,
        }
    }
}

/// Confound stratum selector for design construction. `AnyMovement` pools
/// forward and backward timepoints (the no-stratification ablation);
/// no-movement timepoints are excluded either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Direction(Direction),
    AnyMovement,
}

impl Stratum {
    pub fn matches(self, d: Direction) -> bool {
        match self {
            Stratum::Direction(want) => d == want,
            Stratum::AnyMovement => d != Direction::NoMovement,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Stratum::Direction(d) => d.tag(),
            Stratum::AnyMovement => "all",
        }
    }
}

/// A recording session: spike counts per 40 ms bin for `P` neurons over `T`
/// timepoints, with per-timepoint labels. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDataset {
    times: Vec<u64>,
    contexts: Vec<Context>,
    subdatasets: Vec<u32>,
    locations: Vec<u8>,
    directions: Vec<Direction>,
    spikes: Vec<u32>, // row-major T x P
    n_neurons: usize,
    n_classes: usize,
}

impl SessionDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        times: Vec<u64>,
        contexts: Vec<Context>,
        subdatasets: Vec<u32>,
        locations: Vec<u8>,
        directions: Vec<Direction>,
        spikes: Vec<u32>,
        n_neurons: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let t = times.len();
        for (name, len) in [
            ("context", contexts.len()),
            ("subdataset", subdatasets.len()),
            ("location", locations.len()),
            ("direction", directions.len()),
        ] {
            if len != t {
                return Err(Error::Config(format!(
                    "{name} column has {len} entries, expected {t}"
                )));
            }
        }
        if spikes.len() != t * n_neurons {
            return Err(Error::Config(format!(
                "spike matrix has {} entries, expected {}",
                spikes.len(),
                t * n_neurons
            )));
        }
        let mut ctx_of: HashMap<u32, Context> = HashMap::new();
        for row in 0..t {
            if locations[row] as usize >= n_classes {
                return Err(Error::Parse {
                    row: row + 1,
                    column: "location".into(),
                    message: format!(
                        "label {} out of range for {} classes",
                        locations[row], n_classes
                    ),
                });
            }
            match ctx_of.entry(subdatasets[row]) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(contexts[row]);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    if *e.get() != contexts[row] {
                        return Err(Error::AmbiguousContext(subdatasets[row]));
                    }
                }
            }
        }
        Ok(SessionDataset {
            times,
            contexts,
            subdatasets,
            locations,
            directions,
            spikes,
            n_neurons,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn time(&self, row: usize) -> u64 {
        self.times[row]
    }

    pub fn context(&self, row: usize) -> Context {
        self.contexts[row]
    }

    pub fn subdataset(&self, row: usize) -> u32 {
        self.subdatasets[row]
    }

    pub fn location(&self, row: usize) -> u8 {
        self.locations[row]
    }

    pub fn direction(&self, row: usize) -> Direction {
        self.directions[row]
    }

    pub fn spike_row(&self, row: usize) -> &[u32] {
        &self.spikes[row * self.n_neurons..(row + 1) * self.n_neurons]
    }

    /// Unique subdataset ids for a context, in ascending order.
    pub fn subdataset_ids(&self, context: Context) -> Vec<u32> {
        let mut ids: Vec<u32> = Vec::new();
        for row in 0..self.len() {
            if self.contexts[row] == context && !ids.contains(&self.subdatasets[row]) {
                ids.push(self.subdatasets[row]);
            }
        }
        ids.sort_unstable();
        ids
    }

    pub fn has_context(&self, context: Context) -> bool {
        self.contexts.iter().any(|&c| c == context)
    }

    /// Load a session from the CSV schema described in the module docs.
    pub fn from_csv(path: &Path, n_classes: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        let fixed = ["t", "context", "subdataset", "location", "direction"];
        if headers.len() < fixed.len() + 1 {
            return Err(Error::MalformedHeader(format!(
                "expected at least {} columns, found {}",
                fixed.len() + 1,
                headers.len()
            )));
        }
        for (i, want) in fixed.iter().enumerate() {
            if &headers[i] != *want {
                return Err(Error::MalformedHeader(format!(
                    "column {} is '{}', expected '{}'",
                    i,
                    &headers[i],
                    want
                )));
            }
        }
        let n_neurons = headers.len() - fixed.len();
        for (i, got) in headers.iter().skip(fixed.len()).enumerate() {
            let want = format!("n{i}");
            if got != want {
                return Err(Error::MalformedHeader(format!(
                    "neuron column {} is '{}', expected '{}'",
                    fixed.len() + i,
                    got,
                    want
                )));
            }
        }

        let mut times = Vec::new();
        let mut contexts = Vec::new();
        let mut subdatasets = Vec::new();
        let mut locations = Vec::new();
        let mut directions = Vec::new();
        let mut spikes = Vec::new();
        let parse_int = |row: usize, column: &str, s: &str| -> Result<u64> {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                row,
                column: column.to_string(),
                message: format!("'{s}' is not a non-negative integer"),
            })
        };
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let row = idx + 1;
            if record.len() != headers.len() {
                return Err(Error::RowLength {
                    row,
                    expected: headers.len(),
                    found: record.len(),
                });
            }
            times.push(parse_int(row, "t", &record[0])?);
            contexts.push(Context::parse(record[1].trim()).ok_or_else(|| Error::Parse {
                row,
                column: "context".into(),
                message: format!("unknown context tag '{}'", &record[1]),
            })?);
            subdatasets.push(parse_int(row, "subdataset", &record[2])? as u32);
            locations.push(parse_int(row, "location", &record[3])? as u8);
            directions.push(Direction::parse(record[4].trim()).ok_or_else(|| Error::Parse {
                row,
                column: "direction".into(),
                message: format!("unknown direction tag '{}'", &record[4]),
            })?);
            for i in 0..n_neurons {
                let count = parse_int(row, &format!("n{i}"), &record[fixed.len() + i])?;
                spikes.push(count as u32);
            }
        }
        SessionDataset::new(
            times,
            contexts,
            subdatasets,
            locations,
            directions,
            spikes,
            n_neurons,
            n_classes,
        )
    }

    /// Write the session back out in the same CSV schema.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "t,context,subdataset,location,direction")?;
        for i in 0..self.n_neurons {
            write!(file, ",n{i}")?;
        }
        writeln!(file)?;
        for row in 0..self.len() {
            write!(
                file,
                "{},{},{},{},{}",
                self.times[row],
                self.contexts[row].tag(),
                self.subdatasets[row],
                self.locations[row],
                self.directions[row].tag()
            )?;
            for &s in self.spike_row(row) {
                write!(file, ",{s}")?;
            }
            writeln!(file)?;
        }
        file.flush()?;
        Ok(())
    }
}

/// Load a session CSV with the default three-location labeling.
pub fn load_session(path: &Path) -> Result<SessionDataset> {
    SessionDataset::from_csv(path, DEFAULT_N_CLASSES)
}

pub fn save_session(ds: &SessionDataset, path: &Path) -> Result<()> {
    ds.to_csv(path)
}

/// Train/test partition request: target proportion for the alpha (train)
/// side and the RNG seed used to permute subdatasets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub proportion_alpha: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(proportion_alpha: f64, seed: u64) -> Result<Self> {
        if !(proportion_alpha > 0.0 && proportion_alpha < 1.0) {
            return Err(Error::Config(format!(
                "proportion_alpha must lie strictly in (0,1), got {proportion_alpha}"
            )));
        }
        Ok(SplitSpec {
            proportion_alpha,
            seed,
        })
    }
}

/// Lag-stacked design matrix: row r holds the spike vectors at timepoints
/// `t, t-1, ..., t-lag` for some anchor `t`, concatenated newest-first.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDesign {
    features: Vec<u32>, // rows x n_features
    n_features: usize,
    labels: Vec<u8>,
    row_time: Vec<usize>,
    lag: usize,
    n_classes: usize,
}

impl WindowedDesign {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_row(&self, r: usize) -> &[u32] {
        &self.features[r * self.n_features..(r + 1) * self.n_features]
    }

    pub fn label(&self, r: usize) -> u8 {
        self.labels[r]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Dataset row index of the window anchor for design row `r`.
    pub fn row_time(&self, r: usize) -> usize {
        self.row_time[r]
    }

    pub fn row_times(&self) -> &[usize] {
        &self.row_time
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New design holding the given rows of this one, in order.
    pub fn subset(&self, idx: &[usize]) -> WindowedDesign {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        let mut labels = Vec::with_capacity(idx.len());
        let mut row_time = Vec::with_capacity(idx.len());
        for &r in idx {
            features.extend_from_slice(self.feature_row(r));
            labels.push(self.labels[r]);
            row_time.push(self.row_time[r]);
        }
        WindowedDesign {
            features,
            n_features: self.n_features,
            labels,
            row_time,
            lag: self.lag,
            n_classes: self.n_classes,
        }
    }
}

/// Anchors `t` whose whole lag window lies inside one subdataset, with
/// direction matching the stratum and the requested context.
pub fn valid_window_rows(
    ds: &SessionDataset,
    lag: usize,
    stratum: Stratum,
    context: Context,
) -> Vec<usize> {
    let mut rows = Vec::new();
    // Length of the run of same-subdataset rows ending at t, capped at lag+1.
    let mut run = 0usize;
    for t in 0..ds.len() {
        if t == 0 || ds.subdataset(t) != ds.subdataset(t - 1) {
            run = 1;
        } else if run <= lag {
            run += 1;
        }
        if run >= lag + 1 && stratum.matches(ds.direction(t)) && ds.context(t) == context {
            rows.push(t);
        }
    }
    rows
}

/// Materialize the lag-window features for the given anchors (which may
/// repeat, e.g. after oversampling). Each anchor must be a valid window.
pub fn materialize_rows(ds: &SessionDataset, lag: usize, rows: &[usize]) -> WindowedDesign {
    let p = ds.n_neurons();
    let n_features = p * (lag + 1);
    let mut features = Vec::with_capacity(rows.len() * n_features);
    let mut labels = Vec::with_capacity(rows.len());
    for &t in rows {
        debug_assert!(t >= lag);
        for b in 0..=lag {
            features.extend_from_slice(ds.spike_row(t - b));
        }
        labels.push(ds.location(t));
    }
    WindowedDesign {
        features,
        n_features,
        labels,
        row_time: rows.to_vec(),
        lag,
        n_classes: ds.n_classes(),
    }
}

/// Build the full windowed design for one stratum and context.
pub fn build_windowed(
    ds: &SessionDataset,
    lag: usize,
    stratum: Stratum,
    context: Context,
) -> Result<WindowedDesign> {
    let rows = valid_window_rows(ds, lag, stratum, context);
    if rows.is_empty() {
        return Err(Error::EmptyDesign(format!(
            "no valid rows for lag {lag}, stratum {}, context {}",
            stratum.tag(),
            context.tag()
        )));
    }
    Ok(materialize_rows(ds, lag, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn tiny_dataset() -> SessionDataset {
        // Two subdatasets of length 10 each; one task, one fr. Direction F
        // throughout; location cycles 0,1,2.
        let t = 20usize;
        let times: Vec<u64> = (0..t as u64).collect();
        let contexts: Vec<Context> = (0..t)
            .map(|i| {
                if i < 10 {
                    Context::Task
                } else {
                    Context::FreeRunning
                }
            })
            .collect();
        let subdatasets: Vec<u32> = (0..t).map(|i| if i < 10 { 0 } else { 1 }).collect();
        let locations: Vec<u8> = (0..t).map(|i| (i % 3) as u8).collect();
        let directions = vec![Direction::Forward; t];
        let spikes: Vec<u32> = (0..t as u32 * 2).collect(); // P=2
        SessionDataset::new(
            times,
            contexts,
            subdatasets,
            locations,
            directions,
            spikes,
            2,
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_matrix_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "t,context,subdataset,location,direction,n0,n1").unwrap();
        writeln!(f, "0,task,0,0,F,0,0").unwrap();
        writeln!(f, "1,task,0,1,F,0,0").unwrap();
        writeln!(f, "2,task,0,2,B,0,0").unwrap();
        drop(f);
        let ds = load_session(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_neurons(), 2);
        let total: u32 = (0..3).map(|r| ds.spike_row(r).iter().sum::<u32>()).sum();
        assert_eq!(total, 0);
        assert_eq!(ds.location(1), 1);
        assert_eq!(ds.direction(2), Direction::Backward);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "t,context,subdataset,location,direction,n0").unwrap();
        writeln!(f, "0,task,0,5,F,1").unwrap();
        drop(f);
        let err = load_session(&path).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "location");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn distinct_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cases: [(&str, &str); 4] = [
            ("t,ctx,subdataset,location,direction,n0\n", "header"),
            (
                "t,context,subdataset,location,direction,n0\n0,task,0,0,F,2.5\n",
                "spike",
            ),
            (
                "t,context,subdataset,location,direction,n0\n0,sleep,0,0,F,1\n",
                "context",
            ),
            (
                "t,context,subdataset,location,direction,n0\n0,task,0,0,F,1,9\n",
                "rowlen",
            ),
        ];
        for (i, (content, which)) in cases.iter().enumerate() {
            let path = dir.path().join(format!("case{i}.csv"));
            std::fs::write(&path, content).unwrap();
            let err = load_session(&path).unwrap_err();
            match (*which, &err) {
                ("header", Error::MalformedHeader(_)) => {}
                ("spike", Error::Parse { column, .. }) => assert_eq!(column, "n0"),
                ("context", Error::Parse { column, .. }) => assert_eq!(column, "context"),
                ("rowlen", Error::RowLength { found, .. }) => assert_eq!(*found, 7),
                _ => panic!("case {which}: unexpected error {err:?}"),
            }
        }
    }

    #[test]
    fn save_load_round_trip_is_identical() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        save_session(&ds, &path).unwrap();
        let back = SessionDataset::from_csv(&path, 3).unwrap();
        assert_eq!(ds, back);
        // And byte-identical when rewritten.
        let path2 = dir.path().join("rt2.csv");
        save_session(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn subdataset_context_must_be_consistent() {
        let err = SessionDataset::new(
            vec![0, 1],
            vec![Context::Task, Context::FreeRunning],
            vec![0, 0],
            vec![0, 0],
            vec![Direction::Forward; 2],
            vec![0, 0],
            1,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::AmbiguousContext(0)));
    }

    #[test]
    fn lag_zero_window_is_identity() {
        let ds = tiny_dataset();
        let d = build_windowed(
            &ds,
            0,
            Stratum::Direction(Direction::Forward),
            Context::Task,
        )
        .unwrap();
        assert_eq!(d.n_rows(), 10);
        assert_eq!(d.n_features(), 2);
        for r in 0..d.n_rows() {
            assert_eq!(d.feature_row(r), ds.spike_row(d.row_time(r)));
            assert_eq!(d.label(r), ds.location(d.row_time(r)));
        }
    }

    #[test]
    fn lag_nine_on_twelve_points_gives_three_rows() {
        let t = 12usize;
        let ds = SessionDataset::new(
            (0..t as u64).collect(),
            vec![Context::Task; t],
            vec![0; t],
            (0..t).map(|i| (i % 3) as u8).collect(),
            vec![Direction::Forward; t],
            vec![1; t],
            1,
            3,
        )
        .unwrap();
        let d = build_windowed(
            &ds,
            9,
            Stratum::Direction(Direction::Forward),
            Context::Task,
        )
        .unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.row_times(), &[9, 10, 11]);
        assert_eq!(d.n_features(), 10);
    }

    #[test]
    fn windows_respect_subdataset_boundaries() {
        let ds = tiny_dataset(); // two subdatasets of 10
        for context in Context::ALL {
            let d = build_windowed(
                &ds,
                9,
                Stratum::Direction(Direction::Forward),
                context,
            )
            .unwrap();
            assert_eq!(d.n_rows(), 1); // only the last point of each segment
            let t = d.row_time(0);
            for b in 0..=9 {
                assert_eq!(ds.subdataset(t - b), ds.subdataset(t));
            }
        }
    }

    #[test]
    fn oversized_lag_yields_empty_design_error() {
        let ds = tiny_dataset();
        let err = build_windowed(
            &ds,
            10,
            Stratum::Direction(Direction::Forward),
            Context::Task,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyDesign(_)));
    }

    #[test]
    fn split_spec_validates_proportion() {
        assert!(SplitSpec::new(0.5, 0).is_ok());
        assert!(SplitSpec::new(0.0, 0).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }
}

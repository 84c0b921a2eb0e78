// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reading channel matrices and network snapshot series.
//!
//! # Channel matrix files
//!
//! One channel per line: the channel id, then `T` non-negative integers.
//! Fields are separated by commas, tabs or runs of spaces (detected from the
//! first non-comment line). Lines starting with `#` and blank lines are
//! ignored. A header line is recognised when its first field is empty or one
//! of `id`, `channel`, `channel_id` (any case); its remaining fields are
//! epoch labels and are not interpreted.
//!
//! ```text
//! channel,1,2,3,4
//! a,0,0,1,1
//! b,1,0,1,0
//! ```
//!
//! # Network snapshot files
//!
//! A roster of node labels, the number of epochs, then undirected weighted
//! edges `epoch u v [weight]` with 1-based epochs (weight defaults to 1).
//! Repeated edges within an epoch have their weights added; self-loops are
//! rejected.
//!
//! ```text
//! nodes: alice bob carol
//! epochs: 3
//! 1 alice bob 2
//! 3 bob carol 1
//! ```

use crate::error::{Error, Result};
use crate::multichannel::ChannelMatrix;
use crate::series::{ChannelSeries, SeriesKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Delim {
    Comma,
    Tab,
    Space,
}

impl Delim {
    fn detect(line: &str) -> Self {
        if line.contains(',') {
            Delim::Comma
        } else if line.contains('\t') {
            Delim::Tab
        } else {
            Delim::Space
        }
    }

    fn split(self, line: &str) -> Vec<&str> {
        match self {
            Delim::Comma => line.split(',').map(str::trim).collect(),
            Delim::Tab => line.split('\t').map(str::trim).collect(),
            Delim::Space => line.split_whitespace().collect(),
        }
    }
}

fn is_header(first: &str) -> bool {
    matches!(
        first.to_ascii_lowercase().as_str(),
        "" | "id" | "channel" | "channel_id"
    )
}

/// Parses channel-matrix text.
pub fn parse_channel_matrix(text: &str, kind: SeriesKind) -> Result<ChannelMatrix> {
    let mut delim = None;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<u64>> = Vec::new();
    let mut seen = HashSet::new();
    let mut width = None;
    let mut header_allowed = true;
    for (r, raw) in text.lines().enumerate() {
        let row = r + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let d = *delim.get_or_insert_with(|| Delim::detect(line));
        let fields = d.split(line);
        if header_allowed && is_header(fields[0]) {
            header_allowed = false;
            width = Some(fields.len());
            continue;
        }
        header_allowed = false;
        if fields.len() < 3 {
            return Err(Error::parse(
                row,
                fields.len() + 1,
                "a channel needs an id and at least 2 values",
            ));
        }
        match width {
            Some(w) if w != fields.len() => {
                return Err(Error::parse(
                    row,
                    fields.len().min(w) + 1,
                    format!("ragged row: {} fields, expected {w}", fields.len()),
                ))
            }
            _ => width = Some(fields.len()),
        }
        let id = fields[0];
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(row, 1, format!("duplicate channel id `{id}`")));
        }
        let mut values = Vec::with_capacity(fields.len() - 1);
        for (c, f) in fields.iter().enumerate().skip(1) {
            let v: u64 = f.parse().map_err(|_| {
                let what = if f.starts_with('-') {
                    "negative entry"
                } else {
                    "not a non-negative integer"
                };
                Error::parse(row, c + 1, format!("`{f}`: {what}"))
            })?;
            if kind == SeriesKind::Binary && v > 1 {
                return Err(Error::parse(row, c + 1, format!("value {v} in a binary matrix")));
            }
            values.push(v);
        }
        ids.push(id.to_string());
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, 1, "no channels found"));
    }
    ChannelMatrix::new(kind, ids, rows)
}

pub fn load_channel_matrix(path: impl AsRef<Path>, kind: SeriesKind) -> Result<ChannelMatrix> {
    parse_channel_matrix(&std::fs::read_to_string(path)?, kind)
}

/// Parses a single series: integers separated by commas, tabs, spaces or
/// newlines, with `#` comments. Column numbers count fields within a line.
pub fn parse_series(text: &str, kind: SeriesKind) -> Result<ChannelSeries> {
    let mut values = Vec::new();
    for (r, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        for (c, f) in fields.enumerate() {
            let v: u64 = f.parse().map_err(|_| {
                let what = if f.starts_with('-') {
                    "negative entry"
                } else {
                    "not a non-negative integer"
                };
                Error::parse(r + 1, c + 1, format!("`{f}`: {what}"))
            })?;
            if kind == SeriesKind::Binary && v > 1 {
                return Err(Error::parse(r + 1, c + 1, format!("value {v} in a binary series")));
            }
            values.push(v);
        }
    }
    ChannelSeries::new(kind, values)
}

pub fn load_series(path: impl AsRef<Path>, kind: SeriesKind) -> Result<ChannelSeries> {
    parse_series(&std::fs::read_to_string(path)?, kind)
}

/// Comma-separated rendering with an `channel,1,...,T` header.
pub fn format_channel_matrix(matrix: &ChannelMatrix) -> String {
    let mut out = String::from("channel");
    for t in 1..=matrix.len() {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (id, row) in matrix.channel_ids().iter().zip(matrix.rows()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_channel_matrix(matrix: &ChannelMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_channel_matrix(matrix))?;
    Ok(())
}

/// Undirected weighted snapshots over a fixed node roster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSeries {
    node_ids: Vec<String>,
    /// Per epoch: `(u, v) -> weight` with `u < v`.
    snapshots: Vec<BTreeMap<(usize, usize), u64>>,
}

impl NetworkSeries {
    /// Builds a series from `(epoch, u, v, weight)` edges, epochs 0-based.
    pub fn new(node_ids: Vec<String>, epochs: usize, edges: &[(usize, usize, usize, u64)]) -> Result<Self> {
        let n = node_ids.len();
        let mut distinct = HashSet::new();
        if let Some(dup) = node_ids.iter().find(|id| !distinct.insert(id.as_str())) {
            return Err(Error::Series(format!("node `{dup}` listed twice")));
        }
        let mut snapshots = vec![BTreeMap::new(); epochs];
        for &(e, u, v, w) in edges {
            if e >= epochs {
                return Err(Error::Series(format!("epoch {} outside 1..={epochs}", e + 1)));
            }
            if u >= n || v >= n {
                return Err(Error::Series(format!("node index outside roster of {n}")));
            }
            if u == v {
                return Err(Error::Series(format!("self-loop on `{}`", node_ids[u])));
            }
            *snapshots[e].entry((u.min(v), u.max(v))).or_insert(0) += w;
        }
        Ok(Self { node_ids, snapshots })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn epochs(&self) -> usize {
        self.snapshots.len()
    }

    /// Weight of edge `{u, v}` at `epoch` (0-based), 0 when absent.
    pub fn weight(&self, epoch: usize, u: usize, v: usize) -> u64 {
        self.snapshots[epoch].get(&(u.min(v), u.max(v))).copied().unwrap_or(0)
    }
}

/// Parses network snapshot text.
pub fn parse_network(text: &str) -> Result<NetworkSeries> {
    let mut roster: Option<Vec<String>> = None;
    let mut epochs: Option<usize> = None;
    let mut index = HashMap::new();
    let mut edges = Vec::new();
    for (r, raw) in text.lines().enumerate() {
        let row = r + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("nodes:") {
            let ids: Vec<String> = rest
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            for (k, id) in ids.iter().enumerate() {
                if index.insert(id.clone(), k).is_some() {
                    return Err(Error::parse(row, k + 2, format!("node `{id}` listed twice")));
                }
            }
            roster = Some(ids);
            continue;
        }
        if let Some(rest) = line.strip_prefix("epochs:") {
            epochs = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::parse(row, 2, format!("bad epoch count `{}`", rest.trim())))?,
            );
            continue;
        }
        let (Some(_), Some(t)) = (&roster, epochs) else {
            return Err(Error::parse(
                row,
                1,
                "edge line before the `nodes:` and `epochs:` headers",
            ));
        };
        let f: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if !(3..=4).contains(&f.len()) {
            return Err(Error::parse(row, 1, "expected `epoch u v [weight]`"));
        }
        let epoch: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(row, 1, format!("bad epoch `{}`", f[0])))?;
        if epoch == 0 || epoch > t {
            return Err(Error::parse(row, 1, format!("epoch {epoch} outside 1..={t}")));
        }
        let node = |c: usize| {
            index
                .get(f[c])
                .copied()
                .ok_or_else(|| Error::parse(row, c + 1, format!("unknown node `{}`", f[c])))
        };
        let (u, v) = (node(1)?, node(2)?);
        if u == v {
            return Err(Error::parse(row, 3, format!("self-loop on `{}`", f[1])));
        }
        let w: u64 = match f.get(3) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::parse(row, 4, format!("`{s}`: weight must be a non-negative integer")))?,
            None => 1,
        };
        edges.push((epoch - 1, u, v, w));
    }
    let roster = roster.ok_or_else(|| Error::parse(1, 1, "missing `nodes:` header"))?;
    let epochs = epochs.ok_or_else(|| Error::parse(1, 1, "missing `epochs:` header"))?;
    NetworkSeries::new(roster, epochs, &edges)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSeries> {
    parse_network(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Edge present (weight > 0) or not.
    Binary,
    /// Integer edge weight.
    Weighted,
}

impl FromStr for EdgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(EdgeMode::Binary),
            "weighted" => Ok(EdgeMode::Weighted),
            other => Err(Error::config(format!("unknown edge mode `{other}`"))),
        }
    }
}

/// One channel per unordered node pair `(i, j)`, `i < j`, in lexicographic
/// order of roster indices, labelled `u--v`.
pub fn edge_channels(series: &NetworkSeries, mode: EdgeMode) -> Result<ChannelMatrix> {
    let n = series.nodes();
    let t = series.epochs();
    let pairs = n * n.saturating_sub(1) / 2;
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let mut rows = vec![vec![0u64; t]; pairs];
    for (e, snap) in series.snapshots.iter().enumerate() {
        for (&(i, j), &w) in snap {
            let v = match mode {
                EdgeMode::Binary => u64::from(w > 0),
                EdgeMode::Weighted => w,
            };
            rows[offset(i) + j - i - 1][e] = v;
        }
    }
    let mut ids = Vec::with_capacity(pairs);
    for i in 0..n {
        for j in i + 1..n {
            ids.push(format!("{}--{}", series.node_ids[i], series.node_ids[j]));
        }
    }
    let kind = match mode {
        EdgeMode::Binary => SeriesKind::Binary,
        EdgeMode::Weighted => SeriesKind::Count,
    };
    ChannelMatrix::new(kind, ids, rows)
}

/// One count channel per node: the total weight of its incident edges.
pub fn degree_channels(series: &NetworkSeries) -> Result<ChannelMatrix> {
    let mut rows = vec![vec![0u64; series.epochs()]; series.nodes()];
    for (e, snap) in series.snapshots.iter().enumerate() {
        for (&(i, j), &w) in snap {
            rows[i][e] += w;
            rows[j][e] += w;
        }
    }
    ChannelMatrix::new(SeriesKind::Count, series.node_ids.clone(), rows)
}

/// Drops channels with more than `max_constant` zeros (or, for binary
/// channels, more than `max_constant` ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelFilter {
    pub max_constant: usize,
}

impl ChannelFilter {
    /// Drops only channels that are entirely constant at the boundary value.
    pub fn lenient(len: usize) -> Self {
        Self {
            max_constant: len.saturating_sub(1),
        }
    }
}

/// Returns the kept channels (original order) and the ids of dropped ones.
pub fn filter_channels(matrix: &ChannelMatrix, filter: ChannelFilter) -> Result<(ChannelMatrix, Vec<String>)> {
    if filter.max_constant > matrix.len() {
        return Err(Error::config(format!(
            "filter threshold {} exceeds series length {}",
            filter.max_constant,
            matrix.len()
        )));
    }
    let keep: Vec<bool> = matrix
        .rows()
        .map(|row| {
            let zeros = row.iter().filter(|&&v| v == 0).count();
            let ones = row.iter().filter(|&&v| v == 1).count();
            match matrix.kind() {
                SeriesKind::Binary => zeros <= filter.max_constant && ones <= filter.max_constant,
                SeriesKind::Count => zeros <= filter.max_constant,
            }
        })
        .collect();
    let dropped = matrix
        .channel_ids()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| !k)
        .map(|(id, _)| id.clone())
        .collect();
    Ok((matrix.select(|j| keep[j]), dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_with_and_without_header() {
        let m = parse_channel_matrix("a,0,1,1\nb,1,0,0\n", SeriesKind::Binary).unwrap();
        assert_eq!((m.channels(), m.len()), (2, 3));
        let m = parse_channel_matrix("# note\nid\tt1\tt2\tt3\na\t0\t1\t1\n\nb\t1\t0\t0\n", SeriesKind::Binary).unwrap();
        assert_eq!(m.channel_ids(), &["a".to_string(), "b".to_string()]);
        let m = parse_channel_matrix("x 3 4 5\ny 0 0 9\n", SeriesKind::Count).unwrap();
        assert_eq!(m.row(1), &[0, 0, 9]);
    }

    #[test]
    fn single_series() {
        let s = parse_series("# x\n0 1 1\n0,1\n", SeriesKind::Binary).unwrap();
        assert_eq!(s.values(), &[0, 1, 1, 0, 1]);
        let err = parse_series("0 1\n1 3 0\n", SeriesKind::Binary).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 2, .. }), "{err}");
        assert!(parse_series("4\n", SeriesKind::Count).is_err());
    }

    #[test]
    fn reports_coordinates() {
        let err = parse_channel_matrix("a,0,1,1\nb,1,2,0\n", SeriesKind::Binary).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 3, .. }), "{err}");
        let err = parse_channel_matrix("a,0,1,1\nb,1,0\n", SeriesKind::Binary).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
        let err = parse_channel_matrix("a,0,-1,1\n", SeriesKind::Count).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 3, .. }), "{err}");
        let err = parse_channel_matrix("a,0,1.5,1\n", SeriesKind::Count).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 3, .. }), "{err}");
        assert!(parse_channel_matrix("# nothing\n", SeriesKind::Count).is_err());
        assert!(parse_channel_matrix("a,1,2\na,3,4\n", SeriesKind::Count).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in (2usize..12).prop_flat_map(|t| proptest::collection::vec(proptest::collection::vec(0u64..50, t), 1..10))) {
            let m = ChannelMatrix::unlabeled(SeriesKind::Count, rows).unwrap();
            let back = parse_channel_matrix(&format_channel_matrix(&m), SeriesKind::Count).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn edge_order_does_not_matter(edges in proptest::collection::vec((0usize..4, 0usize..5, 0usize..5, 1u64..4), 0..30), seed: u64) {
            let edges: Vec<_> = edges.into_iter().filter(|e| e.1 != e.2).collect();
            let ids: Vec<String> = (0..5).map(|k| format!("n{k}")).collect();
            let a = NetworkSeries::new(ids.clone(), 4, &edges).unwrap();
            let mut shuffled = edges.clone();
            let k = (seed as usize) % (shuffled.len().max(1));
            shuffled.rotate_left(k);
            shuffled.reverse();
            let b = NetworkSeries::new(ids, 4, &shuffled).unwrap();
            prop_assert_eq!(edge_channels(&a, EdgeMode::Weighted).unwrap(), edge_channels(&b, EdgeMode::Weighted).unwrap());
            prop_assert_eq!(degree_channels(&a).unwrap(), degree_channels(&b).unwrap());
        }

        #[test]
        fn filter_keeps_values_and_order(rows in (4usize..10).prop_flat_map(|t| proptest::collection::vec(proptest::collection::vec(0u64..=1, t), 1..12)), k in 0usize..10) {
            let m = ChannelMatrix::unlabeled(SeriesKind::Binary, rows).unwrap();
            let f = ChannelFilter { max_constant: k.min(m.len()) };
            let (kept, dropped) = filter_channels(&m, f).unwrap();
            prop_assert_eq!(kept.channels() + dropped.len(), m.channels());
            let mut cursor = 0;
            for j in 0..kept.channels() {
                while m.channel_ids()[cursor] != kept.channel_ids()[j] {
                    cursor += 1;
                }
                prop_assert_eq!(m.row(cursor), kept.row(j));
            }
        }
    }

    fn roster(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("v{k}")).collect()
    }

    #[test]
    fn edge_channel_counts() {
        let s = NetworkSeries::new(roster(3), 2, &[]).unwrap();
        assert_eq!(edge_channels(&s, EdgeMode::Binary).unwrap().channels(), 3);
        let s = NetworkSeries::new(roster(100), 2, &[]).unwrap();
        assert_eq!(edge_channels(&s, EdgeMode::Binary).unwrap().channels(), 4950);
        let s = NetworkSeries::new(roster(4), 2, &[(0, 2, 1, 5)]).unwrap();
        let m = edge_channels(&s, EdgeMode::Weighted).unwrap();
        assert_eq!(m.channel_ids()[3], "v1--v2");
        for j in 0..m.channels() {
            let want: &[u64] = if j == 3 { &[5, 0] } else { &[0, 0] };
            assert_eq!(m.row(j), want);
        }
        let b = edge_channels(&s, EdgeMode::Binary).unwrap();
        assert_eq!(b.row(3), &[1, 0]);
        assert_eq!(b.kind(), SeriesKind::Binary);
    }

    #[test]
    fn degree_examples() {
        let s = NetworkSeries::new(roster(3), 2, &[]).unwrap();
        let d = degree_channels(&s).unwrap();
        assert!(d.rows().all(|r| r.iter().all(|&v| v == 0)));
        let s = NetworkSeries::new(roster(3), 2, &[(0, 0, 1, 1), (0, 1, 2, 1), (0, 2, 0, 1)]).unwrap();
        let d = degree_channels(&s).unwrap();
        assert!(d.rows().all(|r| r[0] == 2));
        let s = NetworkSeries::new(roster(4), 2, &[(1, 0, 1, 1), (1, 0, 2, 2), (1, 0, 3, 3)]).unwrap();
        let d = degree_channels(&s).unwrap();
        let col: Vec<u64> = d.rows().map(|r| r[1]).collect();
        assert_eq!(col, vec![6, 1, 2, 3]);
    }

    #[test]
    fn network_text_format() {
        let text = "# toy\nnodes: a b c\nepochs: 3\n1 a b 2\n1 b a 1\n3 b c\n";
        let s = parse_network(text).unwrap();
        assert_eq!((s.nodes(), s.epochs()), (3, 3));
        assert_eq!(s.weight(0, 0, 1), 3);
        assert_eq!(s.weight(2, 1, 2), 1);
        assert!(parse_network("nodes: a b\nepochs: 2\n1 a a 1\n").is_err());
        assert!(parse_network("nodes: a b\nepochs: 2\n3 a b 1\n").is_err());
        assert!(matches!(
            parse_network("nodes: a b\nepochs: 2\n1 a z 1\n"),
            Err(Error::Parse { row: 3, column: 3, .. })
        ));
        assert!(parse_network("1 a b 1\n").is_err());
    }

    #[test]
    fn filter_examples() {
        let mut row = vec![0u64; 46];
        row.extend([1u64; 4]);
        let diverse: Vec<u64> = (0..50).map(|t| t % 2).collect();
        let m = ChannelMatrix::new(
            SeriesKind::Binary,
            vec!["sparse".into(), "diverse".into()],
            vec![row, diverse],
        )
        .unwrap();
        let (kept, dropped) = filter_channels(&m, ChannelFilter { max_constant: 45 }).unwrap();
        assert_eq!(dropped, vec!["sparse".to_string()]);
        assert_eq!(kept.channel_ids(), &["diverse".to_string()]);
        let mut c = vec![0u64; 44];
        c.extend([3u64; 4]);
        let m = ChannelMatrix::unlabeled(SeriesKind::Count, vec![c]).unwrap();
        let (kept, dropped) = filter_channels(&m, ChannelFilter { max_constant: 44 }).unwrap();
        assert_eq!((kept.channels(), dropped.len()), (1, 0));
        assert!(filter_channels(&m, ChannelFilter { max_constant: 49 }).is_err());
    }
}

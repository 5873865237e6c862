//! Text formats for tensors, graphs, labels and result tables.
//!
//! Tensor files hold one observed entry per line, `i j k value`, after a
//! `# dims I1 I2 I3` directive. Graph files hold one observed pair per line,
//! `i j weight`; the pair is stored in both orientations. Fields may be
//! separated by whitespace or commas, indices are 0-based, other `#` lines
//! are comments, and one non-numeric header row (such as `i,j,k,value`) is
//! skipped. Every table written here starts with a header row and prints
//! floats in shortest round-trip form.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cgtf_core::community::Partition;
use cgtf_core::multilinear::{Mask3, Matrix, ObservedTensor, Tensor3};
use cgtf_core::solver::ObservedGraph;
use nalgebra::DMatrix;

enum Line<'a> {
    Blank,
    Directive(Vec<&'a str>),
    Fields(Vec<&'a str>),
}

fn split(line: &str) -> Line<'_> {
    let t = line.trim();
    if t.is_empty() {
        return Line::Blank;
    }
    if let Some(rest) = t.strip_prefix('#') {
        return Line::Directive(rest.split_whitespace().collect());
    }
    Line::Fields(
        t.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect(),
    )
}

fn is_header(fields: &[&str]) -> bool {
    fields.iter().all(|f| f.parse::<f64>().is_err())
}

fn index(field: &str, bound: usize, what: &str, line: usize) -> Result<usize> {
    let v: usize = field.parse().with_context(|| {
        format!("line {line}: {what} index {field:?} is not a non-negative integer")
    })?;
    if v >= bound {
        bail!("line {line}: {what} index {v} out of range 0..{bound}");
    }
    Ok(v)
}

fn value(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .with_context(|| format!("line {line}: value {field:?} is not a number"))?;
    if !v.is_finite() {
        bail!("line {line}: value {v} is not finite");
    }
    if v < 0.0 {
        bail!("line {line}: negative value {v}");
    }
    Ok(v)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_tensor(text: &str) -> Result<ObservedTensor> {
    let mut dims: Option<[usize; 3]> = None;
    let mut header_seen = false;
    let mut entries = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        match split(raw) {
            Line::Blank => {}
            Line::Directive(words) => {
                if words.first() == Some(&"dims") {
                    if dims.is_some() {
                        bail!("line {line}: repeated dims directive");
                    }
                    if words.len() != 4 {
                        bail!("line {line}: expected `# dims I1 I2 I3`");
                    }
                    let mut d = [0; 3];
                    for (slot, w) in d.iter_mut().zip(&words[1..]) {
                        *slot = w
                            .parse()
                            .with_context(|| format!("line {line}: bad dimension {w:?}"))?;
                        if *slot == 0 {
                            bail!("line {line}: dimensions must be positive");
                        }
                    }
                    dims = Some(d);
                }
            }
            Line::Fields(f) => {
                if !header_seen && entries.is_empty() && is_header(&f) {
                    header_seen = true;
                    continue;
                }
                let Some(d) = dims else {
                    bail!("line {line}: entry before `# dims` directive");
                };
                if f.len() != 4 {
                    bail!(
                        "line {line}: expected `i j k value`, found {} fields",
                        f.len()
                    );
                }
                let i = index(f[0], d[0], "first", line)?;
                let j = index(f[1], d[1], "second", line)?;
                let k = index(f[2], d[2], "third", line)?;
                entries.push((line, i, j, k, value(f[3], line)?));
            }
        }
    }
    let Some(d) = dims else {
        bail!("missing `# dims I1 I2 I3` directive");
    };
    let mut t = Tensor3::zeros(d);
    let mut mask = Mask3::full(d, false);
    for (line, i, j, k, v) in entries {
        if mask.is_observed(i, j, k) {
            bail!("line {line}: duplicate entry ({i}, {j}, {k})");
        }
        mask.set(i, j, k, true);
        t.set(i, j, k, v);
    }
    Ok(ObservedTensor::new(t, mask)?)
}

pub fn load_tensor(path: &Path) -> Result<ObservedTensor> {
    parse_tensor(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn parse_graph(text: &str, n: usize) -> Result<ObservedGraph> {
    let mut g = Matrix::zeros(n, n);
    let mut mask = DMatrix::from_element(n, n, false);
    let mut seen = HashSet::new();
    let mut observed_all = false;
    let mut header_seen = false;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        match split(raw) {
            Line::Blank => {}
            Line::Directive(words) => match words.as_slice() {
                ["observed-all"] => observed_all = true,
                ["nodes", count] => {
                    let m: usize = count
                        .parse()
                        .with_context(|| format!("line {line}: bad node count"))?;
                    if m != n {
                        bail!("line {line}: file declares {m} nodes, expected {n}");
                    }
                }
                _ => {}
            },
            Line::Fields(f) => {
                if !header_seen && seen.is_empty() && is_header(&f) {
                    header_seen = true;
                    continue;
                }
                if f.len() != 3 {
                    bail!(
                        "line {line}: expected `i j weight`, found {} fields",
                        f.len()
                    );
                }
                let i = index(f[0], n, "first", line)?;
                let j = index(f[1], n, "second", line)?;
                let w = value(f[2], line)?;
                if !seen.insert((i.min(j), i.max(j))) {
                    bail!("line {line}: duplicate pair ({i}, {j})");
                }
                g[(i, j)] = w;
                g[(j, i)] = w;
                mask[(i, j)] = true;
                mask[(j, i)] = true;
            }
        }
    }
    if observed_all {
        mask.fill(true);
    }
    Ok(ObservedGraph::new(g, mask)?)
}

pub fn load_graph(path: &Path, n: usize) -> Result<ObservedGraph> {
    parse_graph(&read(path)?, n).with_context(|| format!("in {}", path.display()))
}

/// `node,label` rows with 1-based labels.
pub fn parse_labels(text: &str) -> Result<Partition> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let Line::Fields(f) = split(raw) else {
            continue;
        };
        if !header_seen && rows.is_empty() && is_header(&f) {
            header_seen = true;
            continue;
        }
        if f.len() != 2 {
            bail!("line {line}: expected `node label`");
        }
        let node: usize = f[0]
            .parse()
            .with_context(|| format!("line {line}: bad node {:?}", f[0]))?;
        let label: usize = f[1]
            .parse()
            .with_context(|| format!("line {line}: bad label {:?}", f[1]))?;
        if node != rows.len() {
            bail!("line {line}: expected node {}, found {node}", rows.len());
        }
        rows.push(label);
    }
    Ok(Partition::from_labels(rows)?)
}

pub fn load_labels(path: &Path) -> Result<Partition> {
    parse_labels(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn format_tensor(t: &ObservedTensor) -> String {
    let [i1, i2, i3] = t.dims();
    let mut s = format!("# dims {i1} {i2} {i3}\ni,j,k,value\n");
    for k in 0..i3 {
        for j in 0..i2 {
            for i in 0..i1 {
                if t.mask().is_observed(i, j, k) {
                    writeln!(s, "{i},{j},{k},{:?}", t.data().get(i, j, k)).unwrap();
                }
            }
        }
    }
    s
}

/// Observed pairs with `i <= j`.
pub fn format_graph(g: &ObservedGraph) -> String {
    let n = g.n();
    let mut s = format!("# nodes {n}\ni,j,weight\n");
    for i in 0..n {
        for j in i..n {
            if g.mask()[(i, j)] {
                writeln!(s, "{i},{j},{:?}", g.values()[(i, j)]).unwrap();
            }
        }
    }
    s
}

pub fn format_labels(p: &Partition) -> String {
    let mut s = String::from("node,label\n");
    for (node, label) in p.labels().iter().enumerate() {
        writeln!(s, "{node},{label}").unwrap();
    }
    s
}

/// A header row and data rows, all fields already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

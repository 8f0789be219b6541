//! TUDataset text format: `DS_A.txt` (1-indexed `i, j` edge lines),
//! `DS_graph_indicator.txt`, `DS_graph_labels.txt` and the optional
//! `DS_node_labels.txt`, `DS_node_attributes.txt`, `DS_edge_attributes.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{DataError, LabeledDataset};
use crate::graph::{Graph, NodeData};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TuOptions {
    /// Use the first edge-attribute column as edge weight (weight-swap attacks).
    pub use_edge_weights: bool,
}

struct TuFile {
    path: PathBuf,
    lines: Vec<(usize, String)>,
}

impl TuFile {
    fn read(path: PathBuf) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Self { path, lines })
    }

    fn read_optional(path: PathBuf) -> Result<Option<Self>, DataError> {
        if path.exists() {
            Self::read(path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn parse_err(&self, line: usize, message: impl Into<String>) -> DataError {
        DataError::Parse { file: self.path.clone(), line, message: message.into() }
    }

    fn index_err(&self, line: usize, message: impl Into<String>) -> DataError {
        DataError::InconsistentIndex { file: self.path.clone(), line, message: message.into() }
    }

    fn fields<T: std::str::FromStr>(&self, line: usize, text: &str) -> Result<Vec<T>, DataError> {
        text.split(',')
            .map(|f| {
                f.trim().parse::<T>().map_err(|_| self.parse_err(line, format!("cannot parse field `{}`", f.trim())))
            })
            .collect()
    }

    fn single<T: std::str::FromStr>(&self, line: usize, text: &str) -> Result<T, DataError> {
        let mut f = self.fields::<T>(line, text)?;
        if f.len() != 1 {
            return Err(self.parse_err(line, format!("expected one value, found {}", f.len())));
        }
        Ok(f.remove(0))
    }
}

fn dataset_name(dir: &Path) -> Result<String, DataError> {
    let entries = std::fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|n| n.strip_suffix("_A.txt").map(str::to_owned))
        .collect();
    names.sort();
    names.into_iter().next().ok_or_else(|| DataError::Parse {
        file: dir.to_path_buf(),
        line: 0,
        message: "no *_A.txt file found".into(),
    })
}

pub fn parse_tudataset(dir: impl AsRef<Path>) -> Result<LabeledDataset, DataError> {
    parse_tudataset_with(dir, TuOptions::default())
}

pub fn parse_tudataset_with(dir: impl AsRef<Path>, opts: TuOptions) -> Result<LabeledDataset, DataError> {
    let dir = dir.as_ref();
    let name = dataset_name(dir)?;
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator = TuFile::read(file("graph_indicator"))?;
    let graph_labels = TuFile::read(file("graph_labels"))?;
    let adjacency = TuFile::read(file("A"))?;
    let node_labels = TuFile::read_optional(file("node_labels"))?;
    let node_attrs = TuFile::read_optional(file("node_attributes"))?;
    let edge_attrs = if opts.use_edge_weights { TuFile::read_optional(file("edge_attributes"))? } else { None };

    let raw_labels: Vec<i64> =
        graph_labels.lines.iter().map(|(ln, l)| graph_labels.single(*ln, l)).collect::<Result<_, _>>()?;
    let num_graphs = raw_labels.len();
    let classes: BTreeMap<i64, usize> = {
        let mut uniq: Vec<i64> = raw_labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let labels: Vec<usize> = raw_labels.iter().map(|l| classes[l]).collect();

    // node (0-based global) -> (graph, local id)
    let mut owner = Vec::with_capacity(indicator.lines.len());
    let mut sizes = vec![0usize; num_graphs];
    for (ln, l) in &indicator.lines {
        let gid: usize = indicator.single(*ln, l)?;
        if gid == 0 || gid > num_graphs {
            return Err(indicator.index_err(*ln, format!("graph {gid} is not among the {num_graphs} labelled graphs")));
        }
        owner.push((gid - 1, sizes[gid - 1]));
        sizes[gid - 1] += 1;
    }
    let num_nodes = owner.len();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(graph_labels.index_err(empty + 1, format!("graph {} has no nodes", empty + 1)));
    }

    let mut per_graph: Vec<NodeData> = sizes.iter().map(|&s| NodeData::Labels(vec![0; s])).collect();
    if let Some(attrs) = &node_attrs {
        if attrs.lines.len() != num_nodes {
            return Err(attrs.index_err(
                attrs.lines.last().map_or(0, |l| l.0),
                format!("{} attribute rows for {num_nodes} nodes", attrs.lines.len()),
            ));
        }
        let mut rows: Vec<Vec<Vec<f64>>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (node, (ln, l)) in attrs.lines.iter().enumerate() {
            rows[owner[node].0].push(attrs.fields(*ln, l)?);
        }
        per_graph = rows.into_iter().map(NodeData::Features).collect();
    } else if let Some(nl) = &node_labels {
        if nl.lines.len() != num_nodes {
            return Err(nl.index_err(
                nl.lines.last().map_or(0, |l| l.0),
                format!("{} node labels for {num_nodes} nodes", nl.lines.len()),
            ));
        }
        let raw: Vec<i64> =
            nl.lines.iter().map(|(ln, l)| nl.fields::<i64>(*ln, l).map(|f| f[0])).collect::<Result<_, _>>()?;
        let shift = raw.iter().copied().min().unwrap_or(0).min(0);
        let mut out: Vec<Vec<u32>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (node, l) in raw.into_iter().enumerate() {
            out[owner[node].0].push((l - shift) as u32);
        }
        per_graph = out.into_iter().map(NodeData::Labels).collect();
    }

    let mut graphs = per_graph.into_iter().map(Graph::new).collect::<Result<Vec<_>, _>>()?;

    if let Some(ea) = &edge_attrs {
        if ea.lines.len() != adjacency.lines.len() {
            return Err(ea.index_err(
                ea.lines.last().map_or(0, |l| l.0),
                format!("{} edge attributes for {} edges", ea.lines.len(), adjacency.lines.len()),
            ));
        }
        for g in &mut graphs {
            g.set_weighted(true);
        }
    }

    for (row, (ln, l)) in adjacency.lines.iter().enumerate() {
        let f: Vec<usize> = adjacency.fields(*ln, l)?;
        if f.len() != 2 {
            return Err(adjacency.parse_err(*ln, format!("expected `i, j`, found {} fields", f.len())));
        }
        let (i, j) = (f[0], f[1]);
        for x in [i, j] {
            if x == 0 || x > num_nodes {
                return Err(
                    adjacency.index_err(*ln, format!("node {x} outside 1..={num_nodes} (the format is 1-indexed)"))
                );
            }
        }
        let (gi, ui) = owner[i - 1];
        let (gj, uj) = owner[j - 1];
        if gi != gj {
            return Err(adjacency.index_err(*ln, format!("edge {i}-{j} spans graphs {} and {}", gi + 1, gj + 1)));
        }
        if ui == uj || graphs[gi].has_edge(ui, uj) {
            continue;
        }
        match &edge_attrs {
            Some(ea) => {
                let (eln, el) = &ea.lines[row];
                let w = ea.fields::<f64>(*eln, el)?[0];
                graphs[gi].add_weighted_edge(ui, uj, w).map_err(|e| ea.parse_err(*eln, e.to_string()))?;
            }
            None => graphs[gi].add_edge(ui, uj)?,
        }
    }

    LabeledDataset::new(graphs, labels, classes.len())
}

/// Writes `ds` in the TUDataset format under `dir` with prefix `name`.
/// Edges are emitted in both directions, as in the published datasets.
pub fn write_tudataset(ds: &LabeledDataset, dir: impl AsRef<Path>, name: &str) -> Result<(), DataError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let (mut a, mut ind, mut gl, mut nl, mut na, mut ea) =
        (String::new(), String::new(), String::new(), String::new(), String::new(), String::new());
    let any_weighted = ds.graphs.iter().any(Graph::is_weighted);
    let mut offset = 0;
    for (gi, (g, label)) in ds.graphs.iter().zip(&ds.labels).enumerate() {
        writeln!(gl, "{label}").unwrap();
        for _ in 0..g.num_nodes() {
            writeln!(ind, "{}", gi + 1).unwrap();
        }
        match g.node_data() {
            NodeData::Labels(l) => l.iter().for_each(|x| writeln!(nl, "{x}").unwrap()),
            NodeData::Features(f) => f.iter().for_each(|row| {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
                writeln!(na, "{}", cells.join(", ")).unwrap();
            }),
        }
        for (e, w) in g.edges() {
            for (x, y) in [(e.lo(), e.hi()), (e.hi(), e.lo())] {
                writeln!(a, "{}, {}", offset + x + 1, offset + y + 1).unwrap();
                if any_weighted {
                    writeln!(ea, "{w:?}").unwrap();
                }
            }
        }
        offset += g.num_nodes();
    }
    let write = |suffix: &str, body: &str| {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        std::fs::write(&path, body).map_err(|e| DataError::io(&path, e))
    };
    write("A", &a)?;
    write("graph_indicator", &ind)?;
    write("graph_labels", &gl)?;
    if !nl.is_empty() {
        write("node_labels", &nl)?;
    }
    if !na.is_empty() {
        write("node_attributes", &na)?;
    }
    if any_weighted {
        write("edge_attributes", &ea)?;
    }
    Ok(())
}

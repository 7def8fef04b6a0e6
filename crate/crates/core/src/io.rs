//! Persistence of graphs, measures, datasets, and distance matrices, plus
//! ingestion of raw vector datasets into graph-supported measures.
//!
//! Formats:
//! * graph JSON: `{"nodes": [[f64,...],...], "edges": [[u,v,w],...],
//!   "root": id, "meta": {...}}` with 0-based dense node ids;
//! * measure: CSV rows `node_id,mass`, or JSON `[[node_id, mass], ...]`;
//!   a measures collection is a JSON array of such row arrays;
//! * dataset: JSON lines `{"points": [[...],...], "weights": [...],
//!   "label": "..."}`, weights optional (uniform when omitted);
//! * matrix: CSV with 17-significant-digit values, or JSON nested arrays;
//!   both round-trip f64 bit-exactly.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, NodeId};
use crate::measure::Measure;

/// Mass drift tolerated by the measure loaders before rejecting a file;
/// anything smaller is silently renormalized.
pub const LOAD_MASS_DRIFT: f64 = 1e-9;

/// On-disk output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Infer from a path extension (`.csv` or `.json`).
    pub fn from_path(path: &Path) -> Result<Format> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            other => Err(Error::invalid(format!(
                "cannot infer format from extension {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// 17-significant-digit rendering; parses back to the identical f64.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.16e}")
    }
}

// ---------------------------------------------------------------------------
// graphs

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<Vec<f64>>,
    edges: Vec<(usize, usize, f64)>,
    root: usize,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

pub fn save_graph(graph: &Graph, path: &Path) -> Result<()> {
    let file = GraphFile {
        nodes: graph.nodes().to_vec(),
        edges: graph.edges().iter().map(|e| (e.u, e.v, e.w)).collect(),
        root: graph.root(),
        meta: graph.meta().clone(),
    };
    let body = serde_json::to_string_pretty(&file).map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads and fully validates a graph file, including connectivity.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: GraphFile =
        serde_json::from_str(&body).map_err(|e| Error::io(path.display().to_string(), e))?;
    let edges = file
        .edges
        .into_iter()
        .map(|(u, v, w)| Edge { u, v, w })
        .collect();
    let mut graph = Graph::new(file.nodes, edges, file.root)?;
    *graph.meta_mut() = file.meta;
    graph.validate_connected()?;
    Ok(graph)
}

// ---------------------------------------------------------------------------
// measures

pub fn save_measure(measure: &Measure, path: &Path, format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => {
            let mut s = String::new();
            for (node, mass) in measure.iter() {
                s.push_str(&format!("{node},{}\n", fmt_f64(mass)));
            }
            s
        }
        Format::Json => {
            let rows: Vec<(usize, f64)> = measure.iter().collect();
            serde_json::to_string(&rows).map_err(|e| Error::io(path.display().to_string(), e))?
        }
    };
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a single measure, renormalizing drift up to [`LOAD_MASS_DRIFT`] and
/// rejecting anything farther from unit mass.
pub fn load_measure(path: &Path) -> Result<Measure> {
    let format = Format::from_path(path)?;
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let rows: Vec<(usize, f64)> = match format {
        Format::Csv => parse_measure_csv(&body, path)?,
        Format::Json => {
            serde_json::from_str(&body).map_err(|e| Error::io(path.display().to_string(), e))?
        }
    };
    measure_from_rows(rows)
}

fn parse_measure_csv(body: &str, path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::io(path.display().to_string(), format!("bad row at line {}", lineno + 1));
        let node: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let mass: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        rows.push((node, mass));
    }
    Ok(rows)
}

fn measure_from_rows(rows: Vec<(usize, f64)>) -> Result<Measure> {
    let (support, mass): (Vec<usize>, Vec<f64>) = rows.into_iter().unzip();
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > LOAD_MASS_DRIFT {
        return Err(Error::invalid(format!(
            "measure mass {total} drifts more than {LOAD_MASS_DRIFT:e} from 1"
        )));
    }
    Measure::normalized(support, mass)
}

/// A measures collection: JSON array of per-measure `[node_id, mass]` rows.
pub fn save_measures(measures: &[Measure], path: &Path) -> Result<()> {
    let rows: Vec<Vec<(usize, f64)>> = measures.iter().map(|m| m.iter().collect()).collect();
    let body = serde_json::to_string(&rows).map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_measures(path: &Path) -> Result<Vec<Measure>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let rows: Vec<Vec<(usize, f64)>> =
        serde_json::from_str(&body).map_err(|e| Error::io(path.display().to_string(), e))?;
    rows.into_iter().map(measure_from_rows).collect()
}

// ---------------------------------------------------------------------------
// raw datasets and ingestion

/// One raw item: weighted points in ℝⁿ, optionally labeled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawItem {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A list of raw items, e.g. documents as weighted word vectors.
#[derive(Debug, Clone, Default)]
pub struct RawDataset {
    pub items: Vec<RawItem>,
}

impl RawDataset {
    /// Total number of points across items.
    pub fn n_points(&self) -> usize {
        self.items.iter().map(|it| it.points.len()).sum()
    }

    /// All points flattened in item order.
    pub fn flat_points(&self) -> Vec<Vec<f64>> {
        self.items
            .iter()
            .flat_map(|it| it.points.iter().cloned())
            .collect()
    }
}

pub fn load_dataset_jsonl(path: &Path) -> Result<RawDataset> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut items = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut item: RawItem = serde_json::from_str(line).map_err(|e| {
            Error::io(path.display().to_string(), format!("line {}: {e}", lineno + 1))
        })?;
        if item.points.is_empty() {
            return Err(Error::invalid(format!("item at line {} has no points", lineno + 1)));
        }
        if item.weights.is_empty() {
            item.weights = vec![1.0; item.points.len()];
        }
        if item.weights.len() != item.points.len() {
            return Err(Error::invalid(format!(
                "item at line {}: {} weights for {} points",
                lineno + 1,
                item.weights.len(),
                item.points.len()
            )));
        }
        if item.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!(
                "item at line {} has a negative or non-finite weight",
                lineno + 1
            )));
        }
        items.push(item);
    }
    Ok(RawDataset { items })
}

pub fn save_dataset_jsonl(dataset: &RawDataset, path: &Path) -> Result<()> {
    let mut body = String::new();
    for item in &dataset.items {
        body.push_str(&serde_json::to_string(item).map_err(|e| Error::io(path.display().to_string(), e))?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Maps every flattened raw point to its graph node.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SupportAssignment {
    pub node_of_point: Vec<NodeId>,
}

impl SupportAssignment {
    /// Nearest-centroid assignment of points to graph nodes, ties to the
    /// smallest node id. The alternative to reusing the clustering run's
    /// membership recorded at build time.
    pub fn nearest_centroid(points: &[Vec<f64>], graph: &Graph) -> Self {
        let node_of_point = points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (id, c) in graph.nodes().iter().enumerate() {
                    let d: f64 = p
                        .iter()
                        .zip(c)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if d < best_d {
                        best_d = d;
                        best = id;
                    }
                }
                best
            })
            .collect();
        SupportAssignment { node_of_point }
    }
}

pub fn save_assignment(assignment: &SupportAssignment, path: &Path) -> Result<()> {
    let body = serde_json::to_string(&assignment.node_of_point)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_assignment(path: &Path) -> Result<SupportAssignment> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let node_of_point: Vec<NodeId> =
        serde_json::from_str(&body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(SupportAssignment { node_of_point })
}

/// Turns each raw item into a probability measure on graph nodes: point
/// weights aggregate onto their assigned nodes (in ascending node order) and
/// normalize to total mass 1. Items convert independently and in parallel.
pub fn ingest(
    dataset: &RawDataset,
    graph: &Graph,
    assignment: &SupportAssignment,
) -> Result<Vec<Measure>> {
    if assignment.node_of_point.len() != dataset.n_points() {
        return Err(Error::invalid(format!(
            "assignment covers {} points, dataset has {}",
            assignment.node_of_point.len(),
            dataset.n_points()
        )));
    }
    if let Some(&bad) = assignment
        .node_of_point
        .iter()
        .find(|&&n| n >= graph.n_nodes())
    {
        return Err(Error::UnknownNode(bad));
    }
    let mut offsets = Vec::with_capacity(dataset.items.len());
    let mut off = 0;
    for item in &dataset.items {
        offsets.push(off);
        off += item.points.len();
    }
    dataset
        .items
        .par_iter()
        .zip(offsets)
        .map(|(item, off)| {
            let mut per_node: std::collections::BTreeMap<NodeId, f64> =
                std::collections::BTreeMap::new();
            for (k, &w) in item.weights.iter().enumerate() {
                *per_node.entry(assignment.node_of_point[off + k]).or_insert(0.0) += w;
            }
            let (support, weights): (Vec<NodeId>, Vec<f64>) = per_node.into_iter().unzip();
            Measure::normalized(support, weights)
                .map_err(|e| Error::invalid(format!("item {:?}: {e}", item.label)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// matrices

/// Writes a square symmetric matrix; CSV gets 17-significant-digit values so
/// a reload reproduces the exact bits.
pub fn save_matrix(values: &[Vec<f64>], path: &Path, format: Format) -> Result<()> {
    let n = values.len();
    if values.iter().any(|row| row.len() != n) {
        return Err(Error::invalid("matrix is not square"));
    }
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (values[i][j], values[j][i]);
            let equal = a == b || (a.is_nan() && b.is_nan());
            if !equal {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    let body = match format {
        Format::Csv => {
            let mut s = String::new();
            for row in values {
                let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            s
        }
        Format::Json => {
            serde_json::to_string(values).map_err(|e| Error::io(path.display().to_string(), e))?
        }
    };
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let format = Format::from_path(path)?;
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let values: Vec<Vec<f64>> = match format {
        Format::Csv => body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',')
                    .map(|cell| {
                        cell.trim().parse::<f64>().map_err(|e| {
                            Error::io(path.display().to_string(), format!("bad cell {cell:?}: {e}"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?,
        Format::Json => {
            serde_json::from_str(&body).map_err(|e| Error::io(path.display().to_string(), e))?
        }
    };
    let n = values.len();
    if values.iter().any(|row| row.len() != n) {
        return Err(Error::io(path.display().to_string(), "matrix is not square"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_cluster_graph, Density};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("sobolev_transport_io_tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(format!("{}_{name}", std::process::id()))
    }

    #[test]
    fn graph_round_trip() {
        let points: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 13) as f64]).collect();
        let (g, _) = build_cluster_graph(&points, 6, Density::Log, 4).unwrap();
        let path = tmp("graph.json");
        save_graph(&g, &path).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(back.n_nodes(), g.n_nodes());
        assert_eq!(back.root(), g.root());
        for (a, b) in back.edges().iter().zip(g.edges()) {
            assert_eq!((a.u, a.v), (b.u, b.v));
            assert_eq!(a.w.to_bits(), b.w.to_bits());
        }
        assert_eq!(back.meta(), g.meta());
    }

    #[test]
    fn measure_round_trip_and_drift_policy() {
        let m = Measure::new(vec![3, 1, 4], vec![0.25, 0.5, 0.25]).unwrap();
        for fmtname in ["m.csv", "m.json"] {
            let path = tmp(fmtname);
            save_measure(&m, &path, Format::from_path(&path).unwrap()).unwrap();
            let back = load_measure(&path).unwrap();
            assert_eq!(back, m);
        }
        // small drift renormalizes, large drift rejects
        let path = tmp("drift.csv");
        fs::write(&path, "0,0.5\n1,0.5000000001\n").unwrap();
        let loaded = load_measure(&path).unwrap();
        assert!((loaded.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        fs::write(&path, "0,0.5\n1,0.6\n").unwrap();
        assert!(load_measure(&path).is_err());
    }

    #[test]
    fn matrix_round_trip_exact() {
        let vals = vec![
            vec![0.0, 1.0 / 3.0, 2.0f64.sqrt()],
            vec![1.0 / 3.0, 0.0, 1e-17],
            vec![2.0f64.sqrt(), 1e-17, 0.0],
        ];
        for name in ["mat.csv", "mat.json"] {
            let path = tmp(name);
            save_matrix(&vals, &path, Format::from_path(&path).unwrap()).unwrap();
            let back = load_matrix(&path).unwrap();
            for (ra, rb) in back.iter().zip(&vals) {
                for (a, b) in ra.iter().zip(rb) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn one_by_one_zero_matrix_writes_plain_zero() {
        let path = tmp("zero.csv");
        save_matrix(&[vec![0.0]], &path, Format::Csv).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim(), "0");
        assert_eq!(load_matrix(&path).unwrap(), vec![vec![0.0]]);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let path = tmp("asym.csv");
        let vals = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(save_matrix(&vals, &path, Format::Csv).is_err());
    }

    #[test]
    fn ingest_merges_and_normalizes() {
        let points = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.1, 0.0]];
        let (g, assign) = build_cluster_graph(&points, 2, Density::Log, 0).unwrap();
        let dataset = RawDataset {
            items: vec![
                RawItem {
                    points: vec![vec![0.0, 0.0]],
                    weights: vec![5.0],
                    label: None,
                },
                RawItem {
                    points: vec![vec![0.0, 0.0], vec![0.1, 0.0]],
                    weights: vec![1.0, 3.0],
                    label: Some("merge".into()),
                },
            ],
        };
        // assignment over the dataset's own flattened points
        let assignment = SupportAssignment {
            node_of_point: vec![assign[0], assign[0], assign[2]],
        };
        let measures = ingest(&dataset, &g, &assignment).unwrap();
        assert_eq!(measures[0].masses(), &[1.0]);
        // both points of item 1 map to the same node (0 and 0.1 share a cluster)
        assert_eq!(measures[1].len(), 1);
        assert_eq!(measures[1].masses(), &[1.0]);
    }

    #[test]
    fn ingest_rejects_zero_weight_item() {
        let points = vec![vec![0.0], vec![1.0]];
        let (g, _) = build_cluster_graph(&points, 2, Density::Log, 0).unwrap();
        let dataset = RawDataset {
            items: vec![RawItem {
                points: vec![vec![0.0]],
                weights: vec![0.0],
                label: Some("empty".into()),
            }],
        };
        let assignment = SupportAssignment {
            node_of_point: vec![0],
        };
        assert!(ingest(&dataset, &g, &assignment).is_err());
    }

    #[test]
    fn uniform_weights_split_evenly() {
        let path = tmp("data.jsonl");
        fs::write(
            &path,
            r#"{"points": [[0.0], [1.0], [0.9]], "label": "u"}
"#,
        )
        .unwrap();
        let ds = load_dataset_jsonl(&path).unwrap();
        assert_eq!(ds.items[0].weights, vec![1.0, 1.0, 1.0]);
        let points = ds.flat_points();
        let (g, assign) = build_cluster_graph(&points, 2, Density::Log, 0).unwrap();
        let assignment = SupportAssignment {
            node_of_point: assign,
        };
        let measures = ingest(&ds, &g, &assignment).unwrap();
        let total: f64 = measures[0].masses().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        // 1.0 and 0.9 share a cluster: masses 1/3 and 2/3
        let mut ms = measures[0].masses().to_vec();
        ms.sort_by(f64::total_cmp);
        assert!((ms[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((ms[1] - 2.0 / 3.0).abs() < 1e-12);
    }
}

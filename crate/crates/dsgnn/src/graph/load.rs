//! File ingestion: edge lists, node tables, and multi-graph dataset
//! directories in the common bioinformatics benchmark layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSet};
use crate::tensor::Tensor;

/// Loads a whitespace-separated edge list ("u v" per line, `#` comments).
///
/// External ids may be sparse; they are remapped to dense 0-based ids in
/// first-appearance order and, when a remap actually happened, a sidecar
/// `<path>.idmap.csv` with `external_id,internal_id` rows is written.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut id_of: BTreeMap<u64, usize> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();

    let intern = |ext: u64, order: &mut Vec<u64>, id_of: &mut BTreeMap<u64, usize>| -> usize {
        *id_of.entry(ext).or_insert_with(|| {
            order.push(ext);
            order.len() - 1
        })
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse = |field: Option<&str>, lineno: usize| -> Result<u64> {
            let field = field.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected two node ids".into(),
            })?;
            if field.starts_with('-') {
                return Err(Error::Validation(format!(
                    "{}:{}: negative node id {field}",
                    path.display(),
                    lineno + 1
                )));
            }
            field.parse::<u64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("invalid node id {field:?}"),
            })
        };
        let u = parse(fields.next(), lineno)?;
        let v = parse(fields.next(), lineno)?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "expected exactly two node ids".into(),
            });
        }
        let ui = intern(u, &mut order, &mut id_of);
        let vi = intern(v, &mut order, &mut id_of);
        edges.push((ui, vi));
    }

    let n = order.len();
    let graph = Graph::from_edges(n, &edges)?;
    if graph.self_loops_dropped() > 0 {
        eprintln!(
            "warning: {}: self_loops_dropped={}",
            path.display(),
            graph.self_loops_dropped()
        );
    }

    let identity = order.iter().enumerate().all(|(i, &ext)| ext == i as u64);
    if identity {
        Ok(graph)
    } else {
        let map: Vec<(u64, usize)> = order.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let sidecar = path.with_extension(format!(
            "{}idmap.csv",
            path.extension()
                .map(|e| format!("{}.", e.to_string_lossy()))
                .unwrap_or_default()
        ));
        let mut f = fs::File::create(&sidecar)?;
        writeln!(f, "external_id,internal_id")?;
        for &(ext, int) in &map {
            writeln!(f, "{ext},{int}")?;
        }
        Ok(graph.with_id_map(map))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTableMode {
    Attributes,
    Labels,
}

/// Attaches a CSV node table ("node_id,v1,..,vD" or "node_id,class") to a
/// graph. Missing rows become zero attributes / unlabeled nodes.
pub fn load_node_table(path: impl AsRef<Path>, graph: &Graph, mode: NodeTableMode) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let ext_to_int: Option<BTreeMap<u64, usize>> = graph
        .id_map()
        .map(|m| m.iter().copied().collect());

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width: Option<usize> = None;
    let mut seen = vec![false; graph.n()];

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let first = fields[0];
        // optional header: skip a first line whose id field is not numeric
        if lineno == 0 && first.parse::<u64>().is_err() {
            continue;
        }
        let ext: u64 = first.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: format!("invalid node id {first:?}"),
        })?;
        let node = match &ext_to_int {
            Some(map) => *map.get(&ext).ok_or_else(|| {
                Error::Validation(format!("node id {ext} not present in graph"))
            })?,
            None => {
                let id = ext as usize;
                if id >= graph.n() {
                    return Err(Error::Validation(format!(
                        "node id {ext} out of range 0..{}",
                        graph.n()
                    )));
                }
                id
            }
        };
        if seen[node] {
            return Err(Error::Validation(format!(
                "duplicate node_id {ext} in {}",
                path.display()
            )));
        }
        seen[node] = true;
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("invalid value {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Format(format!(
                    "{}:{}: row has {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    values.len(),
                    w
                )))
            }
            _ => {}
        }
        rows.push((node, values));
    }

    match mode {
        NodeTableMode::Attributes => {
            let d = width.unwrap_or(0);
            if d == 0 {
                return Err(Error::Format(format!(
                    "{}: attribute table has no value columns",
                    path.display()
                )));
            }
            let mut attrs = Tensor::zeros(graph.n(), d);
            for (node, values) in rows {
                attrs.row_mut(node).copy_from_slice(&values);
            }
            graph.clone().with_attributes(attrs)
        }
        NodeTableMode::Labels => {
            let mut labels: Vec<Option<u32>> = vec![None; graph.n()];
            for (node, values) in rows {
                if values.len() != 1 {
                    return Err(Error::Format(format!(
                        "label rows must be \"node_id,class\", got {} columns",
                        values.len() + 1
                    )));
                }
                let class = values[0];
                if class < 0.0 || class.fract() != 0.0 {
                    return Err(Error::Format(format!("invalid class id {class}")));
                }
                labels[node] = Some(class as u32);
            }
            graph.clone().with_node_labels(labels)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Loads a multi-graph dataset directory:
/// `A.txt` (1-based "u,v" edge pairs), `graph_indicator.txt` (node -> graph
/// id), `graph_labels.txt`, optional `node_labels.txt` / `node_attributes.txt`.
///
/// Categorical node labels expand to one-hot attributes when no continuous
/// attributes are present.
pub fn load_graph_dataset(dir: impl AsRef<Path>) -> Result<GraphSet> {
    let dir = dir.as_ref();
    let need = |name: &str| -> Result<Vec<String>> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::Validation(format!(
                "dataset directory {} is missing {name}",
                dir.display()
            )));
        }
        read_lines(&p)
    };

    let indicator: Vec<usize> = need("graph_indicator.txt")?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.parse::<usize>().map_err(|_| Error::Parse {
                path: dir.join("graph_indicator.txt"),
                line: i + 1,
                msg: format!("invalid graph id {l:?}"),
            })
        })
        .collect::<Result<_>>()?;
    let n_total = indicator.len();
    if n_total == 0 {
        return Err(Error::Validation("graph_indicator.txt is empty".into()));
    }
    let t = *indicator.iter().max().unwrap();
    // indicator values must cover 1..=t with no gaps
    let mut counts = vec![0usize; t + 1];
    for (i, &g) in indicator.iter().enumerate() {
        if g == 0 || g > t {
            return Err(Error::Validation(format!(
                "graph_indicator.txt line {}: graph ids are 1-based",
                i + 1
            )));
        }
        counts[g] += 1;
    }
    if counts[1..].iter().any(|&c| c == 0) {
        return Err(Error::Validation(
            "graph_indicator.txt has gaps in graph ids".into(),
        ));
    }

    // node id -> (graph, local id)
    let mut local_of = Vec::with_capacity(n_total);
    let mut next_local = vec![0usize; t + 1];
    for &g in &indicator {
        local_of.push((g - 1, next_local[g]));
        next_local[g] += 1;
    }

    let mut edges_per_graph: Vec<Vec<(usize, usize)>> = vec![Vec::new(); t];
    for (i, line) in need("A.txt")?.iter().enumerate() {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                path: dir.join("A.txt"),
                line: i + 1,
                msg: "expected \"u,v\"".into(),
            });
        }
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| Error::Parse {
                path: dir.join("A.txt"),
                line: i + 1,
                msg: format!("invalid node id {s:?}"),
            })?;
            if v == 0 || v > n_total {
                return Err(Error::Validation(format!(
                    "A.txt line {}: node id {v} outside 1..={n_total}",
                    i + 1
                )));
            }
            Ok(v)
        };
        let (u, v) = (parse(parts[0])?, parse(parts[1])?);
        let (gu, lu) = local_of[u - 1];
        let (gv, lv) = local_of[v - 1];
        if gu != gv {
            return Err(Error::Validation(format!(
                "A.txt line {}: edge joins nodes of graphs {} and {}",
                i + 1,
                gu + 1,
                gv + 1
            )));
        }
        edges_per_graph[gu].push((lu, lv));
    }

    let label_lines = need("graph_labels.txt")?;
    if label_lines.len() != t {
        return Err(Error::Validation(format!(
            "graph_labels.txt has {} labels for {t} graphs",
            label_lines.len()
        )));
    }
    let raw_labels: Vec<i64> = label_lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.parse::<i64>().map_err(|_| Error::Parse {
                path: dir.join("graph_labels.txt"),
                line: i + 1,
                msg: format!("invalid graph label {l:?}"),
            })
        })
        .collect::<Result<_>>()?;
    // remap arbitrary label values to dense 0-based classes
    let mut classes: Vec<i64> = raw_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let graph_labels: Vec<u32> = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap() as u32)
        .collect();

    let attr_path = dir.join("node_attributes.txt");
    let nlabel_path = dir.join("node_labels.txt");
    let node_attrs: Option<Vec<Vec<f64>>> = if attr_path.exists() {
        let lines = read_lines(&attr_path)?;
        if lines.len() != n_total {
            return Err(Error::Validation(format!(
                "node_attributes.txt has {} rows for {n_total} nodes",
                lines.len()
            )));
        }
        Some(
            lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    l.split(',')
                        .map(|f| {
                            f.trim().parse::<f64>().map_err(|_| Error::Parse {
                                path: attr_path.clone(),
                                line: i + 1,
                                msg: format!("invalid attribute {f:?}"),
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let node_labels: Option<Vec<u32>> = if nlabel_path.exists() {
        let lines = read_lines(&nlabel_path)?;
        if lines.len() != n_total {
            return Err(Error::Validation(format!(
                "node_labels.txt has {} rows for {n_total} nodes",
                lines.len()
            )));
        }
        Some(
            lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    l.parse::<u32>().map_err(|_| Error::Parse {
                        path: nlabel_path.clone(),
                        line: i + 1,
                        msg: format!("invalid node label {l:?}"),
                    })
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    // attribute matrix per node: continuous attrs win; otherwise one-hot of
    // categorical node labels; otherwise constant 1.
    let n_label_classes = node_labels
        .as_ref()
        .map(|ls| ls.iter().map(|&l| l as usize + 1).max().unwrap_or(1));

    let mut graphs = Vec::with_capacity(t);
    for (gi, edges) in edges_per_graph.iter().enumerate() {
        let n = counts[gi + 1];
        let mut graph = Graph::from_edges(n, edges)?;
        let mut attrs = match (&node_attrs, n_label_classes) {
            (Some(_), _) => Tensor::zeros(n, node_attrs.as_ref().unwrap()[0].len()),
            (None, Some(c)) => Tensor::zeros(n, c),
            (None, None) => Tensor::full(n, 1, 1.0),
        };
        for (node, &(g, local)) in local_of.iter().enumerate() {
            if g != gi {
                continue;
            }
            if let Some(rows) = &node_attrs {
                let row = &rows[node];
                if row.len() != attrs.cols() {
                    return Err(Error::Format(format!(
                        "node_attributes.txt row {} has {} values, expected {}",
                        node + 1,
                        row.len(),
                        attrs.cols()
                    )));
                }
                attrs.row_mut(local).copy_from_slice(row);
            } else if let Some(labels) = &node_labels {
                attrs.set(local, labels[node] as usize, 1.0);
            }
        }
        graph = graph.with_attributes(attrs)?;
        if let Some(labels) = &node_labels {
            let mut per_node = vec![None; n];
            for (node, &(g, local)) in local_of.iter().enumerate() {
                if g == gi {
                    per_node[local] = Some(labels[node]);
                }
            }
            graph = graph.with_node_labels(per_node)?;
        }
        graphs.push(graph);
    }

    GraphSet::new(graphs, Some(graph_labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
    }

    #[test]
    fn edge_list_path_graph() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        fs::write(&p, "0 1\n1 2\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
    }

    #[test]
    fn edge_list_reversed_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        fs::write(&p, "0 1\n1 0\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degrees(), &[1, 1]);
    }

    #[test]
    fn edge_list_self_loop_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        fs::write(&p, "0 0\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.self_loops_dropped(), 1);
    }

    #[test]
    fn edge_list_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        fs::write(&p, "0 x\n").unwrap();
        match load_edge_list(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&p, "0 -3\n").unwrap();
        assert!(matches!(load_edge_list(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn edge_list_comments_and_sparse_ids_emit_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.edges");
        fs::write(&p, "# comment\n10 20\n20 30\n").unwrap();
        let g = load_edge_list(&p).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.degrees(), &[1, 2, 1]);
        let sidecar = dir.path().join("g.edges.idmap.csv");
        let text = fs::read_to_string(sidecar).unwrap();
        assert!(text.contains("10,0"));
        assert!(text.contains("30,2"));
    }

    #[test]
    fn node_table_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "0,1.0,2.0\n1,3.0,4.0\n2,5.0,6.0\n").unwrap();
        let g = load_node_table(&p, &g, NodeTableMode::Attributes).unwrap();
        let a = g.attributes().unwrap();
        assert_eq!(a.shape(), (3, 2));
        assert_eq!(a.get(2, 1), 6.0);
    }

    #[test]
    fn node_table_partial_labels() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = dir.path().join("y.csv");
        fs::write(&p, "0,1\n2,0\n").unwrap();
        let g = load_node_table(&p, &g, NodeTableMode::Labels).unwrap();
        let labels = g.node_labels().unwrap();
        assert_eq!(labels, &[Some(1), None, Some(0)]);
    }

    #[test]
    fn node_table_inconsistent_columns() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "0,1.0,2.0\n1,3.0,4.0,5.0\n").unwrap();
        assert!(matches!(
            load_node_table(&p, &g, NodeTableMode::Attributes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn node_table_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "0,1.0\n0,2.0\n").unwrap();
        assert!(matches!(
            load_node_table(&p, &g, NodeTableMode::Attributes),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dataset_dir_triangle_plus_edge() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "A.txt", "1,2\n2,1\n2,3\n3,2\n1,3\n3,1\n4,5\n5,4\n");
        write_file(dir.path(), "graph_indicator.txt", "1\n1\n1\n2\n2\n");
        write_file(dir.path(), "graph_labels.txt", "1\n-1\n");
        let set = load_graph_dataset(dir.path()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.graph(0).n(), 3);
        assert_eq!(set.graph(1).n(), 2);
        assert_eq!(set.graph_labels().unwrap(), &[1, 0]);
    }

    #[test]
    fn dataset_dir_one_hot_node_labels() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "A.txt", "1,2\n2,1\n");
        write_file(dir.path(), "graph_indicator.txt", "1\n1\n2\n");
        write_file(dir.path(), "graph_labels.txt", "0\n1\n");
        write_file(dir.path(), "node_labels.txt", "0\n1\n2\n");
        let set = load_graph_dataset(dir.path()).unwrap();
        assert_eq!(set.attr_dim(), 3);
        assert_eq!(set.graph(0).attributes().unwrap().row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(set.graph(1).attributes().unwrap().row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dataset_dir_cross_graph_edge_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "A.txt", "1,3\n");
        write_file(dir.path(), "graph_indicator.txt", "1\n1\n2\n");
        write_file(dir.path(), "graph_labels.txt", "0\n1\n");
        assert!(matches!(
            load_graph_dataset(dir.path()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dataset_dir_indicator_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "A.txt", "1,2\n");
        write_file(dir.path(), "graph_indicator.txt", "1\n1\n3\n");
        write_file(dir.path(), "graph_labels.txt", "0\n1\n0\n");
        assert!(matches!(
            load_graph_dataset(dir.path()),
            Err(Error::Validation(_))
        ));
    }
}

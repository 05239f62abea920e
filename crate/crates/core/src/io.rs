//! Text and binary file formats for datasets, probabilities and features.
//!
//! * edges: `u<TAB>v` per line, `#` comments
//! * labels: `#C=<int>` header, then `node<TAB>l0,l1,...` per line
//! * features: headerless CSV, or `.bin` = `n: u32, D: u32` little-endian
//!   header followed by `n * D` little-endian `f64` values
//! * splits: `node<TAB>train|val|test`

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LabelSets, Role, Split};

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, line)| (i + 1, line.map_err(|e| Error::io(&owned, e)))))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected a node id, got {tok:?}")))
}

/// Reads an edge list. Returns the pairs in file order.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (no, line) in read_lines(path)? {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(parse_err(path, no, "expected two node ids"));
        };
        edges.push((parse_id(path, no, a)?, parse_id(path, no, b)?));
    }
    Ok(edges)
}

/// Reads a label file: number of labels plus `(node, labels)` entries.
pub fn read_labels(path: &Path) -> Result<(usize, Vec<(usize, Vec<usize>)>)> {
    let mut declared = None;
    let mut rows = Vec::new();
    for (no, line) in read_lines(path)? {
        let line = line?;
        let trimmed = line.trim();
        if let Some(c) = trimmed.strip_prefix("#C=") {
            let c = c
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, no, "malformed #C= header"))?;
            declared = Some(c);
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (id, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((id, rest)) => (id, rest.trim()),
            None => (trimmed, ""),
        };
        let node = parse_id(path, no, id)?;
        let labels = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(path, no, format!("bad label id {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        if let Some(c) = declared {
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::Index {
                    what: "label",
                    index: bad,
                    limit: c,
                });
            }
        }
        rows.push((node, labels));
    }
    let c = match declared {
        Some(c) => c,
        None => rows
            .iter()
            .flat_map(|(_, l)| l.iter().copied())
            .max()
            .map_or(1, |m| m + 1),
    };
    Ok((c, rows))
}

/// Reads features from CSV, or from the binary layout when the extension is `bin`.
pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    if path.extension().is_some_and(|e| e == "bin") {
        read_features_bin(path)
    } else {
        read_features_csv(path)
    }
}

fn read_features_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(path, line, "ragged feature row"));
        }
        for field in record.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad real {field:?}")))?;
            data.push(x);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data)
        .map_err(|e| Error::shape(e.to_string()))
}

fn read_features_bin(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(parse_err(path, 0, "binary features shorter than header"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n * d * 8 {
        return Err(parse_err(
            path,
            0,
            format!("expected {} bytes of data for {n}x{d}, found {}", n * d * 8, body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((n, d), data).expect("length checked"))
}

pub fn write_features_bin(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut out = Vec::with_capacity(8 + x.len() * 8);
    out.extend_from_slice(&(x.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(x.ncols() as u32).to_le_bytes());
    for v in x.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_features_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in x.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads split assignments as `(node, role)` pairs.
pub fn read_split_entries(path: &Path) -> Result<Vec<(usize, Role)>> {
    let mut out = Vec::new();
    for (no, line) in read_lines(path)? {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(id), Some(role), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(parse_err(path, no, "expected node id and role"));
        };
        let role = match role {
            "train" => Role::Train,
            "val" => Role::Val,
            "test" => Role::Test,
            other => return Err(parse_err(path, no, format!("unknown role {other:?}"))),
        };
        out.push((parse_id(path, no, id)?, role));
    }
    Ok(out)
}

/// Loads a dataset from its component files.
///
/// The node count is the largest id seen in the edge or label file plus one,
/// or the feature row count if that is larger. Without a split file every node
/// is unassigned.
pub fn load_dataset(
    edge_path: &Path,
    label_path: &Path,
    feature_path: Option<&Path>,
    split_path: Option<&Path>,
) -> Result<Dataset> {
    let edges = read_edges(edge_path)?;
    let (c, label_rows) = read_labels(label_path)?;
    let features = feature_path.map(read_features).transpose()?;

    let max_edge = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let max_label = label_rows.iter().map(|(v, _)| v + 1).max().unwrap_or(0);
    let mut n = max_edge.max(max_label);
    if let Some(x) = &features {
        if x.nrows() < n {
            return Err(Error::shape(format!(
                "feature file has {} rows but node ids reach {}",
                x.nrows(),
                n - 1
            )));
        }
        n = x.nrows();
    }

    let graph = Graph::from_edges(n, edges)?;
    let mut sets = vec![Vec::new(); n];
    for (v, labels) in label_rows {
        sets[v] = labels;
    }
    let labels = LabelSets::new(c, sets)?;

    let split = match split_path {
        Some(p) => {
            let mut split = Split::unassigned(n);
            for (v, role) in read_split_entries(p)? {
                if v >= n {
                    return Err(Error::Index {
                        what: "node",
                        index: v,
                        limit: n,
                    });
                }
                if split.role(v) != Role::Unassigned {
                    return Err(Error::arg(format!("node {v} assigned twice in {}", p.display())));
                }
                split.set(v, role);
            }
            Some(split)
        }
        None => None,
    };
    Dataset::padded(graph, features, labels, split)
}

/// File locations of a dataset saved with [`save_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub labels: PathBuf,
    pub features: Option<PathBuf>,
    pub splits: Option<PathBuf>,
}

impl DatasetFiles {
    /// Standard file names inside `dir`; optional files only if present on disk.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            edges: dir.join("edges.tsv"),
            labels: dir.join("labels.tsv"),
            features: opt("features.csv").or_else(|| opt("features.bin")),
            splits: opt("splits.tsv"),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        load_dataset(
            &self.edges,
            &self.labels,
            self.features.as_deref(),
            self.splits.as_deref(),
        )
    }
}

fn io(p: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(p, e)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `dataset` into `dir` using the standard file names.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles {
        edges: dir.join("edges.tsv"),
        labels: dir.join("labels.tsv"),
        features: dataset.features().map(|_| dir.join("features.csv")),
        splits: dataset
            .split()
            .roles()
            .iter()
            .any(|&r| r != Role::Unassigned)
            .then(|| dir.join("splits.tsv")),
    };

    let mut w = create(&files.edges)?;
    for (u, v) in dataset.graph().edges() {
        writeln!(w, "{u}\t{v}").map_err(io(&files.edges))?;
    }
    w.flush().map_err(io(&files.edges))?;

    let mut w = create(&files.labels)?;
    writeln!(w, "#C={}", dataset.num_labels()).map_err(io(&files.labels))?;
    for (v, set) in dataset.labels().iter().enumerate() {
        let joined: Vec<String> = set.iter().map(usize::to_string).collect();
        writeln!(w, "{v}\t{}", joined.join(",")).map_err(io(&files.labels))?;
    }
    w.flush().map_err(io(&files.labels))?;

    if let (Some(path), Some(x)) = (&files.features, dataset.features()) {
        write_features_csv(path, x)?;
    }
    if let Some(path) = &files.splits {
        let mut w = create(path)?;
        for (v, role) in dataset.split().roles().iter().enumerate() {
            if *role != Role::Unassigned {
                writeln!(w, "{v}\t{}", role.as_str()).map_err(io(path))?;
            }
        }
        w.flush().map_err(io(path))?;
    }
    Ok(files)
}

/// Writes a probability matrix as `node_id,p_0,...,p_{C-1}`.
pub fn write_probabilities(path: &Path, probs: &Array2<f64>) -> Result<()> {
    write_node_matrix(path, "p", probs)
}

/// Reads a matrix written by [`write_probabilities`]; rows are placed by node id.
pub fn read_probabilities(path: &Path) -> Result<Array2<f64>> {
    read_node_matrix(path)
}

pub(crate) fn write_node_matrix(path: &Path, prefix: &str, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_id".to_string()];
    header.extend((0..m.ncols()).map(|j| format!("{prefix}_{j}")));
    w.write_record(&header)?;
    for (v, row) in m.rows().into_iter().enumerate() {
        let mut rec = vec![v.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_node_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let width = reader.headers()?.len().saturating_sub(1);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width + 1 {
            return Err(parse_err(path, line, "row width differs from header"));
        }
        let id = parse_id(path, line, &record[0])?;
        let vals = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad real {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, vals));
    }
    let n = rows.len();
    let mut out = Array2::zeros((n, width));
    let mut seen = vec![false; n];
    for (id, vals) in rows {
        if id >= n || seen[id] {
            return Err(Error::Index {
                what: "node",
                index: id,
                limit: n,
            });
        }
        seen[id] = true;
        for (j, x) in vals.into_iter().enumerate() {
            out[[id, j]] = x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_node_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "# comment\n0\t1\n");
        let l = write(dir.path(), "l.tsv", "#C=2\n0\t0\n1\t1\n");
        let d = load_dataset(&e, &l, None, None).unwrap();
        assert_eq!(d.graph().degrees(), vec![1, 1]);
        assert_eq!(d.labels().to_dense(), array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(!d.split().is_assigned());
    }

    #[test]
    fn duplicate_reverse_edge() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n1\t0\n");
        let l = write(dir.path(), "l.tsv", "#C=1\n0\t0\n1\t0\n");
        let d = load_dataset(&e, &l, None, None).unwrap();
        assert_eq!(d.graph().num_edges(), 1);
        assert_eq!(d.graph().degrees(), vec![1, 1]);
    }

    #[test]
    fn label_only_nodes_are_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n");
        let l = write(dir.path(), "l.tsv", "#C=2\n0\t0\n3\t1,0\n");
        let d = load_dataset(&e, &l, None, None).unwrap();
        assert_eq!(d.num_nodes(), 4);
        assert_eq!(d.graph().degree(3), 0);
        assert_eq!(d.labels().get(3), &[0, 1]);
        assert!(d.labels().get(2).is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n1\tx\n");
        let l = write(dir.path(), "l.tsv", "#C=1\n");
        match load_dataset(&e, &l, None, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn label_beyond_declared_count() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n");
        let l = write(dir.path(), "l.tsv", "#C=2\n0\t2\n");
        assert!(matches!(
            load_dataset(&e, &l, None, None),
            Err(Error::Index { what: "label", .. })
        ));
    }

    #[test]
    fn split_node_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n");
        let l = write(dir.path(), "l.tsv", "#C=1\n");
        let s = write(dir.path(), "s.tsv", "0\ttrain\n5\ttest\n");
        assert!(matches!(
            load_dataset(&e, &l, None, Some(&s)),
            Err(Error::Index { what: "node", index: 5, .. })
        ));
    }

    #[test]
    fn binary_and_csv_features_agree() {
        let dir = tempfile::tempdir().unwrap();
        let x = array![[1.5, -2.0, 0.1], [3.0, 1e-300, 7.25]];
        let bin = dir.path().join("f.bin");
        let csv = dir.path().join("f.csv");
        write_features_bin(&bin, &x).unwrap();
        write_features_csv(&csv, &x).unwrap();
        assert_eq!(read_features(&bin).unwrap(), x);
        assert_eq!(read_features(&csv).unwrap(), x);
    }

    #[test]
    fn probability_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = array![[0.1, 0.9], [0.333333333333, 1.0 / 3.0]];
        let path = dir.path().join("p.csv");
        write_probabilities(&path, &p).unwrap();
        assert_eq!(read_probabilities(&path).unwrap(), p);
    }
}

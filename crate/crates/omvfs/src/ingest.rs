//! Stream ingestion: manifest parsing, aligned chunk readers for dense
//! CSV and sparse COO sources, and chunk normalization.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{MultiViewChunk, ViewSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    /// One instance per row, comma-separated, no header.
    DenseCsv,
    /// Text triplets `row col value` (0-based) after a `%rows cols`
    /// header line. Duplicate entries are summed; absent entries are
    /// exact zeros.
    SparseCoo,
}

#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub path: PathBuf,
    pub format: SourceFormat,
}

/// A validated stream description: views, their data sources, and the
/// optional label source.
#[derive(Debug, Clone)]
pub struct StreamDescriptor {
    pub views: Vec<ViewSpec>,
    pub sources: Vec<SourceSpec>,
    pub total_rows: Option<usize>,
    pub label_source: Option<PathBuf>,
}

#[derive(Deserialize)]
struct ManifestDoc {
    views: Vec<ManifestView>,
    labels: Option<String>,
    rows: Option<usize>,
}

#[derive(Deserialize)]
struct ManifestView {
    id: u32,
    name: Option<String>,
    dim: usize,
    path: String,
    format: String,
}

fn parse_coo_header(path: &Path) -> Result<(usize, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    let trimmed = line.trim();
    let stripped = trimmed.strip_prefix('%').ok_or_else(|| {
        Error::Manifest(format!(
            "{}: sparse source must start with a %rows cols header",
            path.display()
        ))
    })?;
    let mut it = stripped.split_whitespace();
    let rows = it
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| Error::Manifest(format!("{}: malformed header", path.display())))?;
    let cols = it
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| Error::Manifest(format!("{}: malformed header", path.display())))?;
    Ok((rows, cols))
}

/// Reads and validates a manifest document. Source paths resolve
/// relative to the manifest's directory; each source must exist and its
/// header (when it has one) must agree with the declared view dim.
pub fn read_manifest(locator: &Path) -> Result<StreamDescriptor> {
    let text = std::fs::read_to_string(locator).map_err(|e| Error::io(locator, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", locator.display())))?;
    if doc.views.is_empty() {
        return Err(Error::Manifest("at least one view required".into()));
    }
    let base = locator.parent().unwrap_or_else(|| Path::new("."));

    let mut views = Vec::new();
    let mut sources = Vec::new();
    let mut declared_rows: Option<usize> = doc.rows;
    for (i, mv) in doc.views.iter().enumerate() {
        if doc.views[..i].iter().any(|o| o.id == mv.id) {
            return Err(Error::Manifest(format!("duplicate view id {}", mv.id)));
        }
        if mv.dim < 1 {
            return Err(Error::Manifest(format!("view {}: dim must be >= 1", mv.id)));
        }
        let format = match mv.format.as_str() {
            "csv" => SourceFormat::DenseCsv,
            "coo" => SourceFormat::SparseCoo,
            other => {
                return Err(Error::Manifest(format!(
                    "view {}: unknown format {other:?}",
                    mv.id
                )))
            }
        };
        let path = base.join(&mv.path);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
        match format {
            SourceFormat::SparseCoo => {
                let (rows, cols) = parse_coo_header(&path)?;
                if cols != mv.dim {
                    return Err(Error::Manifest(format!(
                        "view {}: manifest declares dim {} but data header declares {}",
                        mv.id, mv.dim, cols
                    )));
                }
                match declared_rows {
                    Some(r) if r != rows => {
                        return Err(Error::Manifest(format!(
                            "view {}: declares {} rows, expected {}",
                            mv.id, rows, r
                        )))
                    }
                    None => declared_rows = Some(rows),
                    _ => {}
                }
            }
            SourceFormat::DenseCsv => {
                let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
                let mut reader = BufReader::new(file);
                let mut line = String::new();
                reader.read_line(&mut line).map_err(|e| Error::io(&path, e))?;
                let trimmed = line.trim();
                if !trimmed.is_empty() {
                    let fields = trimmed.split(',').count();
                    if fields != mv.dim {
                        return Err(Error::Manifest(format!(
                            "view {}: manifest declares dim {} but data header declares {}",
                            mv.id, mv.dim, fields
                        )));
                    }
                }
            }
        }
        views.push(ViewSpec::new(
            mv.id,
            mv.dim,
            mv.name.clone().unwrap_or_else(|| format!("view{}", mv.id)),
        ));
        sources.push(SourceSpec { path, format });
    }

    let label_source = match &doc.labels {
        Some(rel) => {
            let path = base.join(rel);
            if !path.exists() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ));
            }
            Some(path)
        }
        None => None,
    };

    Ok(StreamDescriptor {
        views,
        sources,
        total_rows: declared_rows,
        label_source,
    })
}

enum ViewReader {
    Dense {
        reader: BufReader<File>,
        path: PathBuf,
    },
    Coo {
        rows: usize,
        /// Triplets sorted by (row, col) with duplicates summed.
        triplets: Vec<(usize, usize, f64)>,
        cursor: usize,
        cols: usize,
    },
}

/// Single-consumer, row-aligned chunk reader over all views of a
/// stream. Multiple independent readers over the same files are safe.
pub struct StreamReader {
    views: Vec<ViewSpec>,
    readers: Vec<ViewReader>,
    labels: Option<Vec<i64>>,
    pos: usize,
    next_t: usize,
    done: bool,
}

fn load_coo(path: &Path, dim: usize) -> Result<ViewReader> {
    let (rows, cols) = parse_coo_header(path)?;
    if cols != dim {
        return Err(Error::Manifest(format!(
            "{}: header declares {} columns, expected {}",
            path.display(),
            cols,
            dim
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<f64> {
            tok.and_then(|t| t.parse::<f64>().ok()).ok_or_else(|| {
                Error::Stream(format!(
                    "{}: malformed triplet at line {}",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let r = parse(it.next())? as usize;
        let c = parse(it.next())? as usize;
        let value = parse(it.next())?;
        if r >= rows || c >= cols {
            return Err(Error::Stream(format!(
                "{}: index ({r}, {c}) outside {rows}x{cols}",
                path.display()
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Stream(format!(
                "negative value in {} at row {r} col {c}",
                path.display()
            )));
        }
        triplets.push((r, c, value));
    }
    triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
    // sum duplicates
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
    for (r, c, v) in triplets {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    Ok(ViewReader::Coo {
        rows,
        triplets: merged,
        cursor: 0,
        cols,
    })
}

/// Opens a positioned reader at row 0 of every view.
pub fn open_stream(desc: &StreamDescriptor) -> Result<StreamReader> {
    let mut readers = Vec::new();
    for (spec, source) in desc.views.iter().zip(&desc.sources) {
        readers.push(match source.format {
            SourceFormat::DenseCsv => {
                let file = File::open(&source.path).map_err(|e| Error::io(&source.path, e))?;
                ViewReader::Dense {
                    reader: BufReader::new(file),
                    path: source.path.clone(),
                }
            }
            SourceFormat::SparseCoo => load_coo(&source.path, spec.dim)?,
        });
    }
    let labels = match &desc.label_source {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut labels = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                labels.push(trimmed.parse::<i64>().map_err(|_| {
                    Error::Stream(format!(
                        "{}: malformed label at line {}",
                        path.display(),
                        i + 1
                    ))
                })?);
            }
            Some(labels)
        }
        None => None,
    };
    Ok(StreamReader {
        views: desc.views.clone(),
        readers,
        labels,
        pos: 0,
        next_t: 1,
        done: false,
    })
}

impl StreamReader {
    /// Rows consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    fn read_view_rows(
        view: &ViewSpec,
        reader: &mut ViewReader,
        start_row: usize,
        m: usize,
    ) -> Result<Array2<f64>> {
        match reader {
            ViewReader::Dense { reader, path } => {
                let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
                let mut line = String::new();
                while rows.len() < m {
                    line.clear();
                    let n = reader.read_line(&mut line).map_err(|e| Error::io(&*path, e))?;
                    if n == 0 {
                        break;
                    }
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        continue;
                    }
                    let abs_row = start_row + rows.len();
                    let mut parsed = Vec::with_capacity(view.dim);
                    for (c, tok) in trimmed.split(',').enumerate() {
                        let value: f64 = tok.trim().parse().map_err(|_| {
                            Error::Stream(format!(
                                "view {} row {abs_row}: malformed value {tok:?}",
                                view.view_id
                            ))
                        })?;
                        if !value.is_finite() {
                            return Err(Error::Stream(format!(
                                "non-finite value in view {} at row {abs_row} col {c}",
                                view.view_id
                            )));
                        }
                        if value < 0.0 {
                            return Err(Error::Stream(format!(
                                "negative value in view {} at row {abs_row} col {c}",
                                view.view_id
                            )));
                        }
                        parsed.push(value);
                    }
                    if parsed.len() != view.dim {
                        return Err(Error::Stream(format!(
                            "view {} row {abs_row}: expected {} columns, found {}",
                            view.view_id,
                            view.dim,
                            parsed.len()
                        )));
                    }
                    rows.push(parsed);
                }
                let mut x = Array2::zeros((rows.len(), view.dim));
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        x[[i, j]] = v;
                    }
                }
                Ok(x)
            }
            ViewReader::Coo {
                rows,
                triplets,
                cursor,
                cols,
            } => {
                let remaining = rows.saturating_sub(start_row);
                let take = remaining.min(m);
                let mut x = Array2::zeros((take, *cols));
                let end_row = start_row + take;
                while *cursor < triplets.len() && triplets[*cursor].0 < end_row {
                    let (r, c, v) = triplets[*cursor];
                    if r >= start_row {
                        x[[r - start_row, c]] = v;
                    }
                    *cursor += 1;
                }
                Ok(x)
            }
        }
    }

    /// Returns the next chunk of up to `m` aligned rows, or `None` once
    /// the stream is exhausted (and on every later call).
    pub fn next_chunk(&mut self, m: usize) -> Result<Option<MultiViewChunk>> {
        if m == 0 {
            return Err(Error::InvalidParam("chunk_size must be >= 1".into()));
        }
        if self.done {
            return Ok(None);
        }
        let start = self.pos;
        let mut mats = Vec::with_capacity(self.views.len());
        for (view, reader) in self.views.iter().zip(self.readers.iter_mut()) {
            mats.push(Self::read_view_rows(view, reader, start, m)?);
        }
        let r_max = mats.iter().map(|x| x.nrows()).max().unwrap_or(0);
        for (view, x) in self.views.iter().zip(&mats) {
            if x.nrows() != r_max {
                return Err(Error::Stream(format!(
                    "view {} ended at row {}, expected {}",
                    view.view_id,
                    start + x.nrows(),
                    start + r_max
                )));
            }
        }
        if r_max == 0 {
            self.done = true;
            return Ok(None);
        }
        let labels = match &self.labels {
            Some(all) => {
                if all.len() < start + r_max {
                    return Err(Error::Stream(format!(
                        "labels ended at row {}, expected {}",
                        all.len(),
                        start + r_max
                    )));
                }
                Some(all[start..start + r_max].to_vec())
            }
            None => None,
        };
        self.pos += r_max;
        if r_max < m {
            self.done = true;
        }
        let chunk = MultiViewChunk {
            t: self.next_t,
            rows: r_max,
            per_view: mats,
            labels,
        };
        self.next_t += 1;
        Ok(Some(chunk))
    }
}

/// Chunk normalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    None,
    /// Scale each nonzero row of each view to unit l2 norm; causal and
    /// the default for streaming runs.
    RowL2,
    /// Scale each nonzero column to unit l2 norm within the chunk; for
    /// streams with stationary column scale.
    ColumnL2InChunk,
}

impl NormalizeMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::None),
            "row-l2" => Ok(Self::RowL2),
            "column-l2-in-chunk" | "col-l2" => Ok(Self::ColumnL2InChunk),
            other => Err(Error::InvalidParam(format!(
                "unknown normalization mode {other:?}"
            ))),
        }
    }
}

/// Total function on valid chunks: zero rows and columns pass through
/// unchanged, nonnegativity is preserved, and both non-trivial modes are
/// idempotent.
pub fn normalize_chunk(chunk: &MultiViewChunk, mode: NormalizeMode) -> MultiViewChunk {
    let per_view = chunk
        .per_view
        .iter()
        .map(|x| match mode {
            NormalizeMode::None => x.clone(),
            NormalizeMode::RowL2 => {
                let mut out = x.clone();
                for mut row in out.rows_mut() {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.mapv_inplace(|v| v / norm);
                    }
                }
                out
            }
            NormalizeMode::ColumnL2InChunk => {
                let mut out = x.clone();
                for mut col in out.columns_mut() {
                    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        col.mapv_inplace(|v| v / norm);
                    }
                }
                out
            }
        })
        .collect();
    MultiViewChunk {
        t: chunk.t,
        rows: chunk.rows,
        per_view,
        labels: chunk.labels.clone(),
    }
}

//! End-to-end runners shared by the command-line interface and the
//! verification suites: streaming selection, evaluation sweeps, the
//! drift protocol, and the scaling benchmark.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, Axis};
use serde::Serialize;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::ingest::{self, NormalizeMode, StreamDescriptor};
use crate::optimizer::{self, ChunkReport};
use crate::synth::{self, PlantSpec};
use crate::types::{FeatureRanking, HyperParams, ModelState, MultiViewChunk, ViewSpec};

#[derive(Debug, Clone, Serialize)]
pub struct SelectSummary {
    pub chunks: usize,
    pub rows: usize,
    pub seconds: f64,
    pub out_dir: PathBuf,
}

/// Streams a manifest through the solver and writes per-view rankings,
/// the chunk-report JSONL, and a final checkpoint into `out_dir`.
pub fn run_select(
    manifest: &Path,
    params: HyperParams,
    norm: NormalizeMode,
    out_dir: &Path,
) -> Result<SelectSummary> {
    let desc = ingest::read_manifest(manifest)?;
    let mut state = ModelState::new(params, desc.views.clone())?;
    let mut reader = ingest::open_stream(&desc)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let start = Instant::now();
    let mut reports = Vec::new();
    let mut rows = 0usize;
    let m = state.params.chunk_size;
    while let Some(chunk) = reader.next_chunk(m)? {
        rows += chunk.rows;
        let chunk = ingest::normalize_chunk(&chunk, norm);
        if let Some(report) = optimizer::process_chunk(&mut state, &chunk)? {
            eprintln!(
                "chunk {}: {} iters, objective {:.6e}",
                report.t, report.iters, report.objective
            );
            reports.push(report);
        }
    }
    let seconds = start.elapsed().as_secs_f64();

    for v in 0..state.n_views() {
        let ranking = optimizer::rank_features(&state, v);
        let id = state.views[v].view_id;
        optimizer::write_ranking_json(&ranking, &out_dir.join(format!("ranking_view{id}.json")))?;
        optimizer::write_ranking_csv(&ranking, &out_dir.join(format!("ranking_view{id}.csv")))?;
    }
    optimizer::write_reports_jsonl(&reports, &out_dir.join("chunks.jsonl"))?;
    checkpoint::save(&state, &out_dir.join("checkpoint.json"))?;

    Ok(SelectSummary {
        chunks: reports.len(),
        rows,
        seconds,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Runs the solver over in-memory view matrices, chunking by
/// `params.chunk_size`. Returns the final state and per-chunk reports.
pub fn run_select_in_memory(
    views_data: &[Array2<f64>],
    views: Vec<ViewSpec>,
    params: HyperParams,
    norm: NormalizeMode,
) -> Result<(ModelState, Vec<ChunkReport>)> {
    let mut state = ModelState::new(params, views)?;
    let reports = drive_in_memory(&mut state, views_data, norm, 0, views_data[0].nrows())?;
    Ok((state, reports))
}

/// Feeds rows `[start, end)` of in-memory views through the solver in
/// chunks of `params.chunk_size`.
pub fn drive_in_memory(
    state: &mut ModelState,
    views_data: &[Array2<f64>],
    norm: NormalizeMode,
    start: usize,
    end: usize,
) -> Result<Vec<ChunkReport>> {
    let m = state.params.chunk_size;
    let mut reports = Vec::new();
    let mut pos = start;
    let mut t = state.t + 1;
    while pos < end {
        let stop = (pos + m).min(end);
        let per_view: Vec<Array2<f64>> = views_data
            .iter()
            .map(|x| x.slice(s![pos..stop, ..]).to_owned())
            .collect();
        let chunk = MultiViewChunk {
            t,
            rows: stop - pos,
            per_view,
            labels: None,
        };
        let chunk = ingest::normalize_chunk(&chunk, norm);
        if let Some(report) = optimizer::process_chunk(state, &chunk)? {
            reports.push(report);
        }
        pos = stop;
        t += 1;
    }
    Ok(reports)
}

/// All views of a stream stacked in memory, plus labels when present.
pub type FullStream = (Vec<Array2<f64>>, Option<Vec<i64>>);

/// Loads an entire stream into memory (no normalization); used by the
/// evaluation and drift commands.
pub fn load_full_stream(desc: &StreamDescriptor) -> Result<FullStream> {
    let mut reader = ingest::open_stream(desc)?;
    let mut parts: Vec<Vec<Array2<f64>>> = vec![Vec::new(); desc.views.len()];
    let mut labels: Option<Vec<i64>> = None;
    while let Some(chunk) = reader.next_chunk(4096)? {
        for (v, x) in chunk.per_view.into_iter().enumerate() {
            parts[v].push(x);
        }
        if let Some(l) = chunk.labels {
            labels.get_or_insert_with(Vec::new).extend(l);
        }
    }
    let views = parts
        .into_iter()
        .enumerate()
        .map(|(v, blocks)| {
            if blocks.is_empty() {
                Ok(Array2::zeros((0, desc.views[v].dim)))
            } else {
                let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
                ndarray::concatenate(Axis(0), &views)
                    .map_err(|e| Error::Shape(format!("stream concatenation: {e}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((views, labels))
}

fn load_ranking(path: &Path) -> Result<FeatureRanking> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub p: usize,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub out_csv: PathBuf,
}

fn distinct_classes(truth: &[i64]) -> usize {
    let set: std::collections::HashSet<i64> = truth.iter().copied().collect();
    set.len()
}

/// Evaluates rankings at every selection count in `p_list` and writes a
/// CSV of (p, ACC, NMI). Rows whose count is infeasible for some view
/// carry an error note; the remaining rows are still evaluated.
pub fn run_eval(
    manifest: &Path,
    rankings_dir: &Path,
    p_list: &[usize],
    k: Option<usize>,
    seed: u64,
    out_csv: &Path,
) -> Result<EvalSummary> {
    let desc = ingest::read_manifest(manifest)?;
    let (data, labels) = load_full_stream(&desc)?;
    let truth = labels.ok_or_else(|| Error::Eval("evaluation requires labels".into()))?;
    let rankings: Vec<FeatureRanking> = desc
        .views
        .iter()
        .map(|v| load_ranking(&rankings_dir.join(format!("ranking_view{}.json", v.view_id))))
        .collect::<Result<Vec<_>>>()?;
    let k = k.unwrap_or_else(|| distinct_classes(&truth));

    let mut rows = Vec::new();
    for &p in p_list {
        let counts = vec![p; desc.views.len()];
        match eval::evaluate_selection(&rankings, &counts, &data, &truth, k, seed) {
            Ok(report) => rows.push(EvalRow {
                p,
                acc: Some(report.acc),
                nmi: Some(report.nmi),
                note: String::new(),
            }),
            Err(e) => rows.push(EvalRow {
                p,
                acc: None,
                nmi: None,
                note: e.to_string(),
            }),
        }
    }

    let mut body = String::from("p,acc,nmi,note\n");
    for r in &rows {
        let acc = r.acc.map(|v| v.to_string()).unwrap_or_else(|| "error".into());
        let nmi = r.nmi.map(|v| v.to_string()).unwrap_or_else(|| "error".into());
        body.push_str(&format!("{},{},{},{}\n", r.p, acc, nmi, r.note));
    }
    std::fs::write(out_csv, body).map_err(|e| Error::io(out_csv, e))?;
    Ok(EvalSummary {
        rows,
        out_csv: out_csv.to_path_buf(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftRow {
    pub window: usize,
    pub track: &'static str,
    pub p: usize,
    pub acc: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftSummary {
    pub rows: Vec<DriftRow>,
    pub final_adaptive_nmi: f64,
    pub final_static_nmi: f64,
}

/// Two-track drift protocol over a labeled stream: an adaptive track
/// re-ranks features online, a static track freezes the ranking learned
/// from the first `static_train_rows` instances. Both are evaluated on
/// consecutive windows with the same selection count.
pub fn run_drift(
    manifest: &Path,
    params: HyperParams,
    norm: NormalizeMode,
    window: usize,
    static_p: usize,
    static_train_rows: usize,
    out_csv: Option<&Path>,
) -> Result<DriftSummary> {
    let desc = ingest::read_manifest(manifest)?;
    let (data, labels) = load_full_stream(&desc)?;
    let truth = labels.ok_or_else(|| Error::Eval("drift evaluation requires labels".into()))?;
    let n = data[0].nrows();
    if window == 0 || window > n {
        return Err(Error::InvalidParam(format!(
            "window {window} outside stream of {n} rows"
        )));
    }
    let k_eval = distinct_classes(&truth);
    let seed = params.seed;

    // static track: rank from the leading stretch only
    let mut static_state = ModelState::new(params.clone(), desc.views.clone())?;
    drive_in_memory(
        &mut static_state,
        &data,
        norm,
        0,
        static_train_rows.min(n),
    )?;
    let static_rankings: Vec<FeatureRanking> = (0..desc.views.len())
        .map(|v| optimizer::rank_features(&static_state, v))
        .collect();

    // adaptive track: process the whole stream, pausing at window ends
    let mut state = ModelState::new(params, desc.views.clone())?;
    let windows = n / window;
    let mut rows = Vec::new();
    let counts = vec![static_p; desc.views.len()];
    for w in 0..windows {
        let (lo, hi) = (w * window, (w + 1) * window);
        drive_in_memory(&mut state, &data, norm, lo, hi)?;
        let window_data: Vec<Array2<f64>> = data
            .iter()
            .map(|x| x.slice(s![lo..hi, ..]).to_owned())
            .collect();
        let window_truth = &truth[lo..hi];

        let adaptive: Vec<FeatureRanking> = (0..desc.views.len())
            .map(|v| optimizer::rank_features(&state, v))
            .collect();
        let rep_a =
            eval::evaluate_selection(&adaptive, &counts, &window_data, window_truth, k_eval, seed)?;
        let rep_s = eval::evaluate_selection(
            &static_rankings,
            &counts,
            &window_data,
            window_truth,
            k_eval,
            seed,
        )?;
        rows.push(DriftRow {
            window: w,
            track: "adaptive",
            p: static_p,
            acc: rep_a.acc,
            nmi: rep_a.nmi,
        });
        rows.push(DriftRow {
            window: w,
            track: "static",
            p: static_p,
            acc: rep_s.acc,
            nmi: rep_s.nmi,
        });
    }

    if let Some(path) = out_csv {
        let mut body = String::from("window,track,p,acc,nmi\n");
        for r in &rows {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                r.window, r.track, r.p, r.acc, r.nmi
            ));
        }
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }

    let last = rows.len() - 2;
    Ok(DriftSummary {
        final_adaptive_nmi: rows[last].nmi,
        final_static_nmi: rows[last + 1].nmi,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub seconds: f64,
}

/// Times the core streaming loop on synthetic data for every grid
/// point. Generation and chunk slicing are excluded from the timed
/// section; iteration counts are pinned by the caller's `params`.
pub fn run_bench(
    n_grid: &[usize],
    d_grid: &[usize],
    params: &HyperParams,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if n_grid.is_empty() || d_grid.is_empty() {
        return Err(Error::InvalidParam("benchmark grids must be nonempty".into()));
    }
    let mut out = Vec::new();
    for &n in n_grid {
        for &d in d_grid {
            let spec = PlantSpec {
                n,
                dims: vec![d, d],
                k: params.k,
                informative: vec![(d / 10).max(1), (d / 10).max(1)],
                noise_scale: 0.5,
                drift_period: 0,
                dominant_share: 0.7,
                seed,
            };
            let data = synth::generate_data(&spec)?;
            let views: Vec<ViewSpec> = data
                .views
                .iter()
                .enumerate()
                .map(|(i, x)| ViewSpec::new(i as u32, x.ncols(), format!("view{i}")))
                .collect();
            let chunks: Vec<MultiViewChunk> = {
                let m = params.chunk_size;
                let mut chunks = Vec::new();
                let mut pos = 0;
                let mut t = 1;
                while pos < n {
                    let stop = (pos + m).min(n);
                    chunks.push(MultiViewChunk {
                        t,
                        rows: stop - pos,
                        per_view: data
                            .views
                            .iter()
                            .map(|x| x.slice(s![pos..stop, ..]).to_owned())
                            .collect(),
                        labels: None,
                    });
                    pos = stop;
                    t += 1;
                }
                chunks
            };
            let mut state = ModelState::new(params.clone(), views)?;
            let start = Instant::now();
            for chunk in &chunks {
                optimizer::process_chunk(&mut state, chunk)?;
            }
            out.push(BenchRow {
                n,
                d,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(out)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut body = String::from("n,d,seconds\n");
    for r in rows {
        body.push_str(&format!("{},{},{}\n", r.n, r.d, r.seconds));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Convenience wrapper for evaluating one selection count directly from
/// in-memory data.
pub fn evaluate_at(
    rankings: &[FeatureRanking],
    p: usize,
    data: &[Array2<f64>],
    truth: &[i64],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let counts = vec![p; rankings.len()];
    eval::evaluate_selection(rankings, &counts, data, truth, k, seed)
}

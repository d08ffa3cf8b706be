//! Per-chunk alternating multiplicative updates, incremental aggregation
//! of past chunks, the buffered objective, and feature ranking.
//!
//! One alternating iteration updates the buffered cluster indicator U
//! once, then every view's feature-selection matrix V once. Both updates
//! rescale entries by a square-rooted ratio of nonnegative terms, so
//! nonnegativity and exact zeros are preserved. The V update reads only
//! the aggregation matrices and the newest chunk; buffering therefore
//! has no effect on the V trajectory.

use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Zip};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{self, LaplacianPair};
use crate::types::{FeatureRanking, ModelState, MultiViewChunk};

/// Telemetry for one processed chunk; serialized as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct ChunkReport {
    pub t: usize,
    pub iters: usize,
    pub objective: f64,
    pub millis: f64,
}

/// Number of workers for per-view updates, capped by the OMVFS_THREADS
/// environment variable (default 1).
fn view_workers(n_views: usize) -> usize {
    match std::env::var("OMVFS_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n.min(n_views),
        _ => 1,
    }
}

fn resolve_sigmas(state: &mut ModelState, chunk: &MultiViewChunk) -> Result<()> {
    if state.sigmas.is_none() {
        let seed = state.params.seed;
        let sigmas = chunk
            .per_view
            .iter()
            .map(|x| graph::median_bandwidth(x.view(), seed))
            .collect::<Result<Vec<_>>>()?;
        state.sigmas = Some(sigmas);
    }
    Ok(())
}

/// Extends the buffer with a new chunk: evicts the oldest chunk when the
/// buffer is full, slides every view's similarity matrix, and appends a
/// freshly drawn cluster indicator block (i.i.d. uniform on (0, 1]).
pub fn init_chunk(state: &mut ModelState, chunk: &MultiViewChunk) -> Result<()> {
    let u_new = state.rng.positive_matrix(chunk.rows, state.params.k);
    init_chunk_with_u(state, chunk, u_new)
}

/// `init_chunk` with an externally supplied indicator block for the new
/// rows; used by tests that need to pin the U trajectory.
pub fn init_chunk_with_u(
    state: &mut ModelState,
    chunk: &MultiViewChunk,
    u_new: Array2<f64>,
) -> Result<()> {
    if chunk.rows == 0 {
        return Err(Error::InvalidParam("chunk must have at least one row".into()));
    }
    chunk.validate(&state.views)?;
    if u_new.nrows() != chunk.rows || u_new.ncols() != state.params.k {
        return Err(Error::Shape(format!(
            "indicator block is {}x{}, expected {}x{}",
            u_new.nrows(),
            u_new.ncols(),
            chunk.rows,
            state.params.k
        )));
    }
    if !u_new.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::InvalidParam(
            "indicator block must be nonnegative and finite".into(),
        ));
    }
    resolve_sigmas(state, chunk)?;
    let sigmas = state.sigmas.as_ref().unwrap();

    let evict_rows = if state.buffer.num_chunks() == state.params.buffer_chunks {
        self::evictable_rows(state)
    } else {
        0
    };

    let mut w_new = Vec::with_capacity(state.n_views());
    for ((x, x_buf), (w_buf, &sigma)) in chunk
        .per_view
        .iter()
        .zip(&state.buffer.x_bufs)
        .zip(state.buffer.w_bufs.iter().zip(sigmas))
    {
        let x_new = x.view();
        let retained = x_buf.slice(s![evict_rows.., ..]);
        let cross = graph::gaussian_block(x_new, retained, sigma)?;
        let self_block = graph::gaussian_block(x_new, x_new, sigma)?;
        w_new.push(graph::slide_similarity(w_buf, &cross, &self_block, evict_rows)?);
    }
    state.buffer.slide(evict_rows, &chunk.per_view, u_new, w_new);
    Ok(())
}

fn evictable_rows(state: &ModelState) -> usize {
    state.buffer.chunk_range(0).len()
}

/// Combined graph regularizer for the current buffer.
pub fn regularizer_pair(state: &ModelState) -> Result<LaplacianPair> {
    let laplacians: Vec<Array2<f64>> = state
        .buffer
        .w_bufs
        .iter()
        .map(graph::laplacian_unchecked)
        .collect();
    graph::combine_and_split(&laplacians, &state.params.alpha)
}

/// One multiplicative update of the buffered cluster indicator.
pub fn update_u(state: &mut ModelState) -> Result<()> {
    let pair = regularizer_pair(state)?;
    update_u_with(state, &pair)
}

/// `update_u` against a precomputed regularizer pair (fixed within a
/// chunk's inner loop).
pub fn update_u_with(state: &mut ModelState, pair: &LaplacianPair) -> Result<()> {
    if state.buffer.is_empty() {
        return Err(Error::InvalidParam("buffer is empty".into()));
    }
    let gamma = state.params.gamma;
    let eps = state.params.norm_eps;
    let k = state.params.k;
    let u = &state.buffer.u_buf;

    let mut num = pair.m_neg.dot(u);
    num.scaled_add(gamma, u);
    for (x, v) in state.buffer.x_bufs.iter().zip(&state.v_mats) {
        num += &x.dot(v);
    }

    let mut vtv = Array2::<f64>::zeros((k, k));
    for v in &state.v_mats {
        vtv += &v.t().dot(v);
    }
    let mut den = u.dot(&vtv);
    let gram = u.t().dot(u);
    den.scaled_add(gamma, &u.dot(&gram));
    den += &pair.m_pos.dot(u);

    let mut u_next = u.clone();
    Zip::from(&mut u_next)
        .and(&num)
        .and(&den)
        .for_each(|x, &n, &d| *x *= (n / d.max(eps)).sqrt());
    if !u_next.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence("non-finite value in U update".into()));
    }
    state.buffer.u_buf = u_next;
    Ok(())
}

/// Core of the V update; pure in its inputs so views can run in
/// parallel.
fn v_step(
    v_mat: &Array2<f64>,
    x_t: ArrayView2<'_, f64>,
    u_t: ArrayView2<'_, f64>,
    a_prev: &Array2<f64>,
    b_prev: &Array2<f64>,
    beta: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    let num = b_prev + &x_t.t().dot(&u_t);
    let gram = a_prev + &u_t.t().dot(&u_t);
    let mut den = v_mat.dot(&gram);
    let half_beta = 0.5 * beta;
    for (j, mut den_row) in den.outer_iter_mut().enumerate() {
        let row = v_mat.row(j);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = half_beta / norm.max(eps);
        Zip::from(&mut den_row)
            .and(&row)
            .for_each(|d, &v| *d += scale * v);
    }
    let mut v_next = v_mat.clone();
    Zip::from(&mut v_next)
        .and(&num)
        .and(&den)
        .for_each(|x, &n, &d| *x *= (n / d.max(eps)).sqrt());
    if !v_next.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence("non-finite value in V update".into()));
    }
    Ok(v_next)
}

/// One multiplicative update of a view's feature-selection matrix. Reads
/// only the aggregation matrices and the newest buffered chunk.
pub fn update_v(state: &mut ModelState, view: usize) -> Result<()> {
    if state.buffer.is_empty() {
        return Err(Error::InvalidParam("buffer is empty".into()));
    }
    let r = state.buffer.newest_range();
    let u_t = state.buffer.u_buf.slice(s![r.clone(), ..]);
    let x_t = state.buffer.x_bufs[view].slice(s![r, ..]);
    let next = v_step(
        &state.v_mats[view],
        x_t,
        u_t,
        &state.agg.a,
        &state.agg.b[view],
        state.params.beta[view],
        state.params.norm_eps,
    )?;
    state.v_mats[view] = next;
    Ok(())
}

/// Updates every view's V once against the same U snapshot, optionally
/// spreading views over OMVFS_THREADS workers. Results are identical
/// regardless of schedule.
fn update_all_v(state: &mut ModelState, workers: usize) -> Result<()> {
    let n_v = state.n_views();
    if workers <= 1 || n_v == 1 {
        for v in 0..n_v {
            update_v(state, v)?;
        }
        return Ok(());
    }

    let r = state.buffer.newest_range();
    let u_t = state.buffer.u_buf.slice(s![r.clone(), ..]);
    let a_prev = &state.agg.a;
    let eps = state.params.norm_eps;
    let v_mats = &state.v_mats;
    let x_bufs = &state.buffer.x_bufs;
    let b = &state.agg.b;
    let beta = &state.params.beta;
    let range = r;

    let mut results: Vec<Option<Result<Array2<f64>>>> = (0..n_v).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let views: Vec<usize> = (w..n_v).step_by(workers).collect();
            let range = range.clone();
            handles.push(scope.spawn(move || {
                views
                    .into_iter()
                    .map(|v| {
                        let x_t = x_bufs[v].slice(s![range.clone(), ..]);
                        (v, v_step(&v_mats[v], x_t, u_t, a_prev, &b[v], beta[v], eps))
                    })
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            for (v, res) in h.join().expect("view worker panicked") {
                results[v] = Some(res);
            }
        }
    });
    for (v, res) in results.into_iter().enumerate() {
        state.v_mats[v] = res.expect("missing view result")?;
    }
    Ok(())
}

fn l21_norm(m: &Array2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum()
}

/// Objective restricted to the buffer: per-view reconstruction error and
/// graph trace, row-sparsity penalties, and the orthogonality penalty on
/// the buffered indicator.
pub fn buffered_objective(state: &ModelState) -> f64 {
    match regularizer_pair(state) {
        Ok(pair) => buffered_objective_with(state, &pair),
        Err(_) => 0.0,
    }
}

pub(crate) fn buffered_objective_with(state: &ModelState, pair: &LaplacianPair) -> f64 {
    if state.buffer.is_empty() {
        return 0.0;
    }
    let u = &state.buffer.u_buf;
    let mut total = 0.0;
    for ((x, v), beta) in state
        .buffer
        .x_bufs
        .iter()
        .zip(&state.v_mats)
        .zip(&state.params.beta)
    {
        let recon = u.dot(&v.t());
        total += Zip::from(x).and(&recon).fold(0.0, |acc, &a, &b| {
            let d = a - b;
            acc + d * d
        });
        total += beta * l21_norm(v);
    }
    // trace(U' M U) with the per-view alpha weights folded into M
    let mu = &pair.m_pos.dot(u) - &pair.m_neg.dot(u);
    total += Zip::from(u).and(&mu).fold(0.0, |acc, &a, &b| acc + a * b);

    let gram = u.t().dot(u);
    let k = state.params.k;
    let mut orth = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = gram[[i, j]] - if i == j { 1.0 } else { 0.0 };
            orth += d * d;
        }
    }
    total + state.params.gamma * orth
}

/// Folds the newest buffered chunk into the aggregation matrices:
/// A += U_t'U_t (symmetrized), B^(v) += X_t^(v)'U_t.
pub fn aggregate(state: &mut ModelState) -> Result<()> {
    if state.buffer.is_empty() {
        return Err(Error::InvalidParam("buffer is empty".into()));
    }
    let r = state.buffer.newest_range();
    let u_t = state.buffer.u_buf.slice(s![r.clone(), ..]);
    let gram = u_t.t().dot(&u_t);
    let gram_t = gram.t().to_owned();
    state.agg.a += &((&gram + &gram_t) * 0.5);
    for v in 0..state.n_views() {
        let x_t = state.buffer.x_bufs[v].slice(s![r.clone(), ..]);
        let inc = x_t.t().dot(&u_t);
        state.agg.b[v] += &inc;
    }
    Ok(())
}

/// Runs the full per-chunk procedure: buffer extension, alternating
/// updates until the relative objective change drops below `inner_tol`
/// (or `max_inner_iters`), then aggregation. Returns `None` for an empty
/// chunk, which leaves the state untouched.
pub fn process_chunk(
    state: &mut ModelState,
    chunk: &MultiViewChunk,
) -> Result<Option<ChunkReport>> {
    if chunk.rows == 0 {
        return Ok(None);
    }
    let start = Instant::now();
    init_chunk(state, chunk)?;
    let pair = regularizer_pair(state)?;
    let workers = view_workers(state.n_views());

    let mut trace = vec![buffered_objective_with(state, &pair)];
    let mut iters = 0;
    for _ in 0..state.params.max_inner_iters {
        update_u_with(state, &pair)?;
        update_all_v(state, workers)?;
        iters += 1;
        let prev = *trace.last().unwrap();
        let obj = buffered_objective_with(state, &pair);
        trace.push(obj);
        if (obj - prev).abs() / prev.max(state.params.norm_eps) < state.params.inner_tol {
            break;
        }
    }
    aggregate(state)?;
    state.t += 1;
    let objective = *trace.last().unwrap();
    state.objective_trace.push(trace);
    Ok(Some(ChunkReport {
        t: state.t,
        iters,
        objective,
        millis: start.elapsed().as_secs_f64() * 1e3,
    }))
}

/// Features of a view ordered by descending row l2 norm of V, ties
/// broken by ascending feature index.
pub fn rank_features(state: &ModelState, view: usize) -> FeatureRanking {
    let v = &state.v_mats[view];
    let scores: Vec<f64> = v
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let sorted_scores = order.iter().map(|&i| scores[i]).collect();
    FeatureRanking {
        view_id: state.views[view].view_id,
        order,
        scores: sorted_scores,
    }
}

pub fn write_ranking_json(ranking: &FeatureRanking, path: &Path) -> Result<()> {
    let json = serde_json::to_string(ranking).expect("ranking serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Two-column CSV (index, score), one row per rank position.
pub fn write_ranking_csv(ranking: &FeatureRanking, path: &Path) -> Result<()> {
    let mut out = String::from("index,score\n");
    for (i, s) in ranking.order.iter().zip(&ranking.scores) {
        out.push_str(&format!("{i},{s}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One JSON object per line, one line per processed chunk.
pub fn write_reports_jsonl(reports: &[ChunkReport], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

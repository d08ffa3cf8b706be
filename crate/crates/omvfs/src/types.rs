//! Core domain types: stream geometry, hyperparameters, chunk payloads,
//! and the mutable state of the streaming solver.

use std::ops::Range;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One feature space (modality) of the stream. Rows are aligned across
/// views: row `i` of every view describes the same instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view_id: u32,
    pub dim: usize,
    pub name: String,
}

impl ViewSpec {
    pub fn new(view_id: u32, dim: usize, name: impl Into<String>) -> Self {
        Self {
            view_id,
            dim,
            name: name.into(),
        }
    }
}

/// How the Gaussian kernel bandwidth is chosen for each view's
/// similarity graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthPolicy {
    /// Estimate once from the first chunk (median pairwise distance) and
    /// freeze it, so that all buffered kernel blocks stay consistent.
    MedianHeuristic,
    /// Use the given bandwidth for every view.
    Fixed(f64),
}

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Number of clusters K.
    pub k: usize,
    /// Nominal rows per incoming chunk (m).
    pub chunk_size: usize,
    /// Sliding-buffer capacity in chunks (s).
    pub buffer_chunks: usize,
    /// Per-view weight of the graph regularizer.
    pub alpha: Vec<f64>,
    /// Per-view weight of the row-sparsity penalty on V.
    pub beta: Vec<f64>,
    /// Orthogonality penalty on the cluster indicator; large by default
    /// and rarely changed.
    pub gamma: f64,
    pub kernel_bandwidth: BandwidthPolicy,
    /// Relative objective change below which the inner loop stops.
    pub inner_tol: f64,
    /// Cap on alternating iterations per chunk.
    pub max_inner_iters: usize,
    /// Smoothing constant for zero row norms and multiplicative-update
    /// denominators.
    pub norm_eps: f64,
    pub seed: u64,
}

impl HyperParams {
    /// Defaults for a stream with `n_views` views and `k` clusters.
    pub fn defaults(n_views: usize, k: usize) -> Self {
        Self {
            k,
            chunk_size: 200,
            buffer_chunks: 2,
            alpha: vec![1.0; n_views],
            beta: vec![1.0; n_views],
            gamma: 1e7,
            kernel_bandwidth: BandwidthPolicy::MedianHeuristic,
            inner_tol: 1e-4,
            max_inner_iters: 200,
            norm_eps: 1e-10,
            seed: 42,
        }
    }
}

/// Checks every `HyperParams` and `ViewSpec` invariant, reporting the
/// first violation by name.
pub fn validate(params: &HyperParams, views: &[ViewSpec]) -> Result<()> {
    if views.is_empty() {
        return Err(Error::InvalidParam("at least one view required".into()));
    }
    for (i, v) in views.iter().enumerate() {
        if v.dim < 1 {
            return Err(Error::InvalidParam(format!(
                "view {} dim must be >= 1",
                v.view_id
            )));
        }
        if views[..i].iter().any(|w| w.view_id == v.view_id) {
            return Err(Error::InvalidParam(format!(
                "duplicate view id {}",
                v.view_id
            )));
        }
    }
    if params.k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if params.chunk_size < 1 {
        return Err(Error::InvalidParam("chunk_size must be >= 1".into()));
    }
    if params.buffer_chunks < 1 {
        return Err(Error::InvalidParam("buffer_chunks must be >= 1".into()));
    }
    if params.alpha.len() != views.len() {
        return Err(Error::InvalidParam(format!(
            "alpha arity mismatch: {} weights for {} views",
            params.alpha.len(),
            views.len()
        )));
    }
    if params.beta.len() != views.len() {
        return Err(Error::InvalidParam(format!(
            "beta arity mismatch: {} weights for {} views",
            params.beta.len(),
            views.len()
        )));
    }
    if params.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidParam(
            "alpha must be finite and nonnegative".into(),
        ));
    }
    if params.beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::InvalidParam(
            "beta must be finite and nonnegative".into(),
        ));
    }
    if !params.gamma.is_finite() || params.gamma < 0.0 {
        return Err(Error::InvalidParam(
            "gamma must be finite and nonnegative".into(),
        ));
    }
    if let BandwidthPolicy::Fixed(sigma) = params.kernel_bandwidth {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidParam(
                "kernel bandwidth must be positive".into(),
            ));
        }
    }
    if !params.inner_tol.is_finite() || params.inner_tol <= 0.0 {
        return Err(Error::InvalidParam("inner_tol must be positive".into()));
    }
    if params.max_inner_iters < 1 {
        return Err(Error::InvalidParam("max_inner_iters must be >= 1".into()));
    }
    if !params.norm_eps.is_finite() || params.norm_eps <= 0.0 {
        return Err(Error::InvalidParam("norm_eps must be positive".into()));
    }
    Ok(())
}

/// One time step of aligned nonnegative data across all views. Labels,
/// when present, are for evaluation only; optimizer operations never
/// read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewChunk {
    /// 1-based time index.
    pub t: usize,
    /// Actual row count; the final chunk of a stream may be short.
    pub rows: usize,
    pub per_view: Vec<Array2<f64>>,
    pub labels: Option<Vec<i64>>,
}

impl MultiViewChunk {
    /// Validates shape, alignment and nonnegativity against the stream's
    /// view list.
    pub fn validate(&self, views: &[ViewSpec]) -> Result<()> {
        if self.per_view.len() != views.len() {
            return Err(Error::Shape(format!(
                "chunk has {} views, stream declares {}",
                self.per_view.len(),
                views.len()
            )));
        }
        for (x, v) in self.per_view.iter().zip(views) {
            if x.nrows() != self.rows {
                return Err(Error::Shape(format!(
                    "view {} chunk has {} rows, expected {}",
                    v.view_id,
                    x.nrows(),
                    self.rows
                )));
            }
            if x.ncols() != v.dim {
                return Err(Error::Shape(format!(
                    "view {} chunk has {} columns, expected {}",
                    v.view_id,
                    x.ncols(),
                    v.dim
                )));
            }
            if !x.iter().all(|e| e.is_finite() && *e >= 0.0) {
                return Err(Error::Stream(format!(
                    "view {} chunk contains negative or non-finite values",
                    v.view_id
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.rows {
                return Err(Error::Shape(format!(
                    "chunk has {} labels for {} rows",
                    labels.len(),
                    self.rows
                )));
            }
        }
        Ok(())
    }
}

/// The sliding window of recent chunks: stacked data, the buffered
/// cluster indicator, and per-view similarity matrices over exactly the
/// buffered rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferState {
    pub x_bufs: Vec<Array2<f64>>,
    pub u_buf: Array2<f64>,
    pub w_bufs: Vec<Array2<f64>>,
    /// Start row offset of each buffered chunk, oldest first.
    pub chunk_boundaries: Vec<usize>,
}

impl BufferState {
    pub fn empty(views: &[ViewSpec], k: usize) -> Self {
        Self {
            x_bufs: views.iter().map(|v| Array2::zeros((0, v.dim))).collect(),
            u_buf: Array2::zeros((0, k)),
            w_bufs: views.iter().map(|_| Array2::zeros((0, 0))).collect(),
            chunk_boundaries: Vec::new(),
        }
    }

    pub fn num_chunks(&self) -> usize {
        self.chunk_boundaries.len()
    }

    pub fn rows(&self) -> usize {
        self.u_buf.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    /// Row range of the i-th buffered chunk (0 = oldest).
    pub fn chunk_range(&self, i: usize) -> Range<usize> {
        let start = self.chunk_boundaries[i];
        let end = self
            .chunk_boundaries
            .get(i + 1)
            .copied()
            .unwrap_or_else(|| self.rows());
        start..end
    }

    /// Row range of the most recently appended chunk.
    pub fn newest_range(&self) -> Range<usize> {
        self.chunk_range(self.num_chunks() - 1)
    }

    /// Drops the oldest `evict_rows` rows, appends the new chunk, and
    /// installs the already-slid similarity matrices.
    pub(crate) fn slide(
        &mut self,
        evict_rows: usize,
        x_new: &[Array2<f64>],
        u_new: Array2<f64>,
        w_new: Vec<Array2<f64>>,
    ) {
        use ndarray::{concatenate, s, Axis};

        let appended = u_new.nrows();
        for (buf, x) in self.x_bufs.iter_mut().zip(x_new) {
            *buf = concatenate![Axis(0), buf.slice(s![evict_rows.., ..]), x.view()];
        }
        self.u_buf = concatenate![Axis(0), self.u_buf.slice(s![evict_rows.., ..]), u_new.view()];
        self.w_bufs = w_new;

        if evict_rows > 0 {
            self.chunk_boundaries.remove(0);
            for b in &mut self.chunk_boundaries {
                *b -= evict_rows;
            }
        }
        self.chunk_boundaries
            .push(self.u_buf.nrows() - appended);
    }
}

/// Running sums that compress all past chunks sufficiently for the V
/// update: `a` accumulates UᵀU, `b[v]` accumulates X^(v)ᵀU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateState {
    pub a: Array2<f64>,
    pub b: Vec<Array2<f64>>,
}

impl AggregateState {
    pub fn zeros(views: &[ViewSpec], k: usize) -> Self {
        Self {
            a: Array2::zeros((k, k)),
            b: views.iter().map(|v| Array2::zeros((v.dim, k))).collect(),
        }
    }
}

/// Deterministic generator state carried by the model. Serializes as
/// (seed, stream position) so a restored checkpoint continues the exact
/// random stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }

    /// Uniform draw on (0, 1], strictly positive.
    pub fn open_closed(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    /// Matrix with i.i.d. entries uniform on (0, 1], filled row-major.
    pub fn positive_matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| self.open_closed())
    }
}

impl PartialEq for StreamRng {
    fn eq(&self, other: &Self) -> bool {
        self.inner.get_seed() == other.inner.get_seed()
            && self.inner.get_word_pos() == other.inner.get_word_pos()
    }
}

#[derive(Serialize, Deserialize)]
struct RngRepr {
    seed: [u8; 32],
    word_pos_hi: u64,
    word_pos_lo: u64,
}

impl Serialize for StreamRng {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let pos = self.inner.get_word_pos();
        RngRepr {
            seed: self.inner.get_seed(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for StreamRng {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = RngRepr::deserialize(de)?;
        let mut rng = ChaCha8Rng::from_seed(repr.seed);
        rng.set_word_pos(((repr.word_pos_hi as u128) << 64) | repr.word_pos_lo as u128);
        Ok(Self { inner: rng })
    }
}

/// Full state of the streaming solver. Owned by exactly one stream
/// processor at a time; safe to move between threads, not to mutate
/// concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: HyperParams,
    pub views: Vec<ViewSpec>,
    /// Per-view D_v x K feature-selection matrices.
    pub v_mats: Vec<Array2<f64>>,
    pub agg: AggregateState,
    pub buffer: BufferState,
    /// Number of chunks fully processed.
    pub t: usize,
    /// Inner-loop objective values, one trace per processed chunk.
    pub objective_trace: Vec<Vec<f64>>,
    /// Kernel bandwidth per view, resolved from the policy at the first
    /// chunk and frozen thereafter.
    pub sigmas: Option<Vec<f64>>,
    pub rng: StreamRng,
}

impl ModelState {
    pub fn new(params: HyperParams, views: Vec<ViewSpec>) -> Result<Self> {
        validate(&params, &views)?;
        let mut rng = StreamRng::new(params.seed);
        let v_mats = views
            .iter()
            .map(|v| rng.positive_matrix(v.dim, params.k))
            .collect();
        let sigmas = match params.kernel_bandwidth {
            BandwidthPolicy::Fixed(sigma) => Some(vec![sigma; views.len()]),
            BandwidthPolicy::MedianHeuristic => None,
        };
        Ok(Self {
            agg: AggregateState::zeros(&views, params.k),
            buffer: BufferState::empty(&views, params.k),
            v_mats,
            t: 0,
            objective_trace: Vec::new(),
            sigmas,
            rng,
            params,
            views,
        })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Rows of the cluster indicator belonging to the newest buffered
    /// chunk.
    pub fn current_u(&self) -> ndarray::ArrayView2<'_, f64> {
        let r = self.buffer.newest_range();
        self.buffer.u_buf.slice(ndarray::s![r, ..])
    }

    /// Total elements retained across all model matrices; used to check
    /// that memory does not grow with stream length.
    pub fn retained_matrix_elements(&self) -> usize {
        let b: usize = self.buffer.x_bufs.iter().map(|x| x.len()).sum::<usize>()
            + self.buffer.u_buf.len()
            + self.buffer.w_bufs.iter().map(|w| w.len()).sum::<usize>();
        let v: usize = self.v_mats.iter().map(|v| v.len()).sum();
        let agg: usize = self.agg.a.len() + self.agg.b.iter().map(|b| b.len()).sum::<usize>();
        b + v + agg
    }

    /// Panics on any violated structural invariant; test support.
    pub fn assert_invariants(&self) {
        let k = self.params.k;
        let rows = self.buffer.rows();
        assert_eq!(self.v_mats.len(), self.views.len());
        for (v, spec) in self.v_mats.iter().zip(&self.views) {
            assert_eq!(v.shape(), [spec.dim, k], "V shape for view {}", spec.view_id);
            assert!(v.iter().all(|e| e.is_finite() && *e >= 0.0), "V nonnegative");
        }
        assert_eq!(self.buffer.u_buf.ncols(), k);
        assert!(self.buffer.u_buf.iter().all(|e| e.is_finite() && *e >= 0.0));
        assert!(self.buffer.num_chunks() <= self.params.buffer_chunks);
        for (i, (x, w)) in self
            .buffer
            .x_bufs
            .iter()
            .zip(&self.buffer.w_bufs)
            .enumerate()
        {
            assert_eq!(x.nrows(), rows, "x_buf rows for view {i}");
            assert!(x.iter().all(|e| *e >= 0.0), "x_buf nonnegative");
            assert_eq!(w.shape(), [rows, rows], "w_buf shape for view {i}");
            for r in 0..rows {
                assert!((w[[r, r]] - 1.0).abs() < 1e-12, "w_buf unit diagonal");
                for c in 0..rows {
                    assert!(w[[r, c]] >= 0.0 && w[[r, c]] <= 1.0, "w_buf range");
                    assert_eq!(w[[r, c]], w[[c, r]], "w_buf symmetry");
                }
            }
        }
        if self.buffer.num_chunks() > 0 {
            assert_eq!(self.buffer.chunk_boundaries[0], 0);
            for i in 0..self.buffer.num_chunks() {
                assert!(!self.buffer.chunk_range(i).is_empty(), "empty buffered chunk");
            }
        }
        assert_eq!(self.agg.a.shape(), [k, k]);
        assert!(self.agg.a.iter().all(|e| *e >= 0.0));
        for r in 0..k {
            for c in 0..k {
                assert_eq!(self.agg.a[[r, c]], self.agg.a[[c, r]], "A symmetry");
            }
        }
        for (b, spec) in self.agg.b.iter().zip(&self.views) {
            assert_eq!(b.shape(), [spec.dim, k]);
            assert!(b.iter().all(|e| *e >= 0.0));
        }
    }
}

/// Per-view feature importance: indices in descending order of the l2
/// norms of the matching rows of V, ties broken by ascending index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    #[serde(rename = "view")]
    pub view_id: u32,
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

//! Buffered similarity graphs: Gaussian kernel blocks, sliding-window
//! maintenance, Laplacians, and the signed split of the combined
//! regularizer.

use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Elementwise split of the combined regularizer M = sum_v alpha_v L^(v)
/// into nonnegative parts with M = m_pos - m_neg and
/// min(m_pos, m_neg) = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub m_pos: Array2<f64>,
    pub m_neg: Array2<f64>,
}

/// Gaussian kernel block between new rows and buffered rows:
/// entry (i, j) = exp(-||x_new_i - x_buf_j||^2 / (2 sigma^2)).
///
/// Distances are accumulated directly per coordinate so that identical
/// rows yield exactly 1.0.
pub fn gaussian_block(
    x_new: ArrayView2<'_, f64>,
    x_buf: ArrayView2<'_, f64>,
    sigma: f64,
) -> Result<Array2<f64>> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParam(
            "kernel bandwidth must be positive".into(),
        ));
    }
    if x_new.ncols() != x_buf.ncols() {
        return Err(Error::Shape(format!(
            "kernel blocks need matching dims, got {} and {}",
            x_new.ncols(),
            x_buf.ncols()
        )));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(Array2::from_shape_fn(
        (x_new.nrows(), x_buf.nrows()),
        |(i, j)| {
            let d2: f64 = x_new
                .row(i)
                .iter()
                .zip(x_buf.row(j).iter())
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum();
            (-d2 / denom).exp()
        },
    ))
}

/// Median pairwise Euclidean distance over at most 500 rows, sampled
/// deterministically from `seed` when the input is larger. Even counts
/// take the midpoint of the two central distances.
pub fn median_bandwidth(x: ArrayView2<'_, f64>, seed: u64) -> Result<f64> {
    const SAMPLE_CAP: usize = 500;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Degenerate(
            "median bandwidth needs at least 2 rows".into(),
        ));
    }
    let idx: Vec<usize> = if n <= SAMPLE_CAP {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, SAMPLE_CAP).into_vec()
    };
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d2: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(p, q)| {
                    let d = p - q;
                    d * d
                })
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median <= 0.0 {
        return Err(Error::Degenerate(
            "degenerate sample, supply sigma explicitly".into(),
        ));
    }
    Ok(median)
}

/// Slides the buffered similarity matrix: drops the oldest `evict_rows`
/// rows/columns of `w_prev`, then borders the retained block with the
/// new-versus-retained `cross` block and the new chunk's `self_block`.
///
/// `cross` must be (new rows x retained rows), i.e. computed against the
/// buffer after eviction.
pub fn slide_similarity(
    w_prev: &Array2<f64>,
    cross: &Array2<f64>,
    self_block: &Array2<f64>,
    evict_rows: usize,
) -> Result<Array2<f64>> {
    let n_prev = w_prev.nrows();
    if w_prev.ncols() != n_prev {
        return Err(Error::Shape("similarity matrix must be square".into()));
    }
    if evict_rows > n_prev {
        return Err(Error::Shape(format!(
            "cannot evict {evict_rows} rows from a {n_prev}-row similarity"
        )));
    }
    let m_t = self_block.nrows();
    if self_block.ncols() != m_t {
        return Err(Error::Shape("self block must be square".into()));
    }
    for i in 0..m_t {
        if (self_block[[i, i]] - 1.0).abs() > 1e-12 {
            return Err(Error::Shape("self block must have unit diagonal".into()));
        }
        for j in 0..i {
            if (self_block[[i, j]] - self_block[[j, i]]).abs() > 1e-12 {
                return Err(Error::Shape("self block must be symmetric".into()));
            }
        }
    }
    let retained = w_prev.slice(s![evict_rows.., evict_rows..]);
    let n_b = retained.nrows();
    if cross.nrows() != m_t || cross.ncols() != n_b {
        return Err(Error::Shape(format!(
            "cross block is {}x{}, expected {}x{}",
            cross.nrows(),
            cross.ncols(),
            m_t,
            n_b
        )));
    }
    let top = concatenate![Axis(1), retained, cross.t()];
    let bottom = concatenate![Axis(1), cross.view(), self_block.view()];
    Ok(concatenate![Axis(0), top, bottom])
}

/// Unnormalized graph Laplacian L = diag(row sums of w) - w.
pub fn laplacian(w: &Array2<f64>) -> Result<Array2<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::Shape("similarity matrix must be square".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (w[[i, j]] - w[[j, i]]).abs() > 1e-12 {
                return Err(Error::Shape(
                    "similarity matrix must be symmetric".into(),
                ));
            }
        }
    }
    Ok(laplacian_unchecked(w))
}

pub(crate) fn laplacian_unchecked(w: &Array2<f64>) -> Array2<f64> {
    let row_sums = w.sum_axis(Axis(1));
    let mut l = -w.clone();
    for (i, s) in row_sums.iter().enumerate() {
        l[[i, i]] += s;
    }
    l
}

/// Weighted sum M = sum_v alpha_v L^(v), split elementwise by sign into
/// nonnegative factors.
pub fn combine_and_split(laplacians: &[Array2<f64>], alpha: &[f64]) -> Result<LaplacianPair> {
    if laplacians.is_empty() {
        return Err(Error::Shape("no laplacians to combine".into()));
    }
    if laplacians.len() != alpha.len() {
        return Err(Error::Shape(format!(
            "{} laplacians for {} alpha weights",
            laplacians.len(),
            alpha.len()
        )));
    }
    let shape = laplacians[0].raw_dim();
    let mut m = Array2::<f64>::zeros(shape);
    for (l, &a) in laplacians.iter().zip(alpha) {
        if l.raw_dim() != shape {
            return Err(Error::Shape("laplacian shapes differ across views".into()));
        }
        m.scaled_add(a, l);
    }
    let m_pos = m.mapv(|x| x.max(0.0));
    let m_neg = m.mapv(|x| (-x).max(0.0));
    Ok(LaplacianPair { m_pos, m_neg })
}

/// Writes a matrix as dense CSV; debugging aid for inspecting W and L.
pub fn dump_dense_csv(m: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

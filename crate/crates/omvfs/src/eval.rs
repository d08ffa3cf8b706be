//! Clustering-based evaluation of selected features: multi-view
//! spherical k-means, accuracy under optimal cluster-to-class matching,
//! and normalized mutual information.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::FeatureRanking;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub labels_pred: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
    pub selected_counts: Vec<usize>,
    pub seed: u64,
}

pub fn write_report_json(report: &EvalReport, path: &std::path::Path) -> Result<()> {
    let json = serde_json::to_string(report).expect("report serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

fn distinct_nonzero_rows(x: &Array2<f64>) -> usize {
    let mut seen = std::collections::HashSet::new();
    for row in x.rows() {
        if row.iter().any(|v| *v != 0.0) {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            seen.insert(key);
        }
    }
    seen.len()
}

/// Multi-view spherical k-means: each view's rows are l2-normalized,
/// views are concatenated with equal weight, and the joint rows are
/// clustered by cosine similarity with mean-then-renormalize centroid
/// steps and a k-means++-style seeding. Deterministic for a fixed seed.
pub fn spherical_kmeans_multiview(
    views: &[Array2<f64>],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    const MAX_ITERS: usize = 300;
    if k < 1 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if views.is_empty() {
        return Err(Error::Eval("at least one view required".into()));
    }
    let n = views[0].nrows();
    if views.iter().any(|v| v.nrows() != n) {
        return Err(Error::Shape("views disagree on row count".into()));
    }
    if n == 0 {
        return Err(Error::Eval("no instances to cluster".into()));
    }
    let normalized: Vec<Array2<f64>> = views.iter().map(normalize_rows).collect();
    for v in &normalized {
        if distinct_nonzero_rows(v) < k {
            return Err(Error::Degenerate("degenerate clustering input".into()));
        }
    }
    let parts: Vec<_> = normalized.iter().map(|v| v.view()).collect();
    let data = normalize_rows(&ndarray::concatenate(Axis(1), &parts).expect("aligned views"));
    if k == 1 {
        return Ok(vec![0; n]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| a.dot(&b);

    // k-means++-style seeding under cosine distance
    let mut centroids: Vec<ndarray::Array1<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centroids.push(data.row(first).to_owned());
    while centroids.len() < k {
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                centroids
                    .iter()
                    .map(|c| (1.0 - cos(data.row(i), c.view())).max(0.0))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dist.iter().map(|d| d * d).sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d * d;
                if acc >= r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all rows coincide with a centroid; take the first unused row
            (0..n)
                .find(|i| centroids.iter().all(|c| c.view() != data.row(*i)))
                .unwrap_or(0)
        };
        centroids.push(data.row(next).to_owned());
    }

    let mut labels = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let sim = cos(data.row(i), centroid.view());
                if sim > best_sim {
                    best_sim = sim;
                    best = c;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }

        let dim = data.ncols();
        let mut sums = vec![ndarray::Array1::<f64>::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += &data.row(i);
            counts[l] += 1;
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] == 0 {
                // move the worst-fitting row into the empty cluster
                let mut worst = 0;
                let mut worst_sim = f64::INFINITY;
                for i in 0..n {
                    if reseeded.contains(&i) {
                        continue;
                    }
                    let sim = cos(data.row(i), centroids[labels[i]].view());
                    if sim < worst_sim {
                        worst_sim = sim;
                        worst = i;
                    }
                }
                reseeded.push(worst);
                centroids[c] = data.row(worst).to_owned();
                changed = true;
                continue;
            }
            let mut mean = sums[c].mapv(|v| v / counts[c] as f64);
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                mean.mapv_inplace(|v| v / norm);
            }
            centroids[c] = mean;
        }
        if !changed {
            break;
        }
    }
    Ok(labels)
}

fn contingency(pred: &[i64], truth: &[i64]) -> (Vec<Vec<usize>>, usize, usize) {
    let pred_ids: BTreeMap<i64, usize> = {
        let mut m = BTreeMap::new();
        for &p in pred {
            let next = m.len();
            m.entry(p).or_insert(next);
        }
        m
    };
    let truth_ids: BTreeMap<i64, usize> = {
        let mut m = BTreeMap::new();
        for &t in truth {
            let next = m.len();
            m.entry(t).or_insert(next);
        }
        m
    };
    let mut counts = vec![vec![0usize; truth_ids.len()]; pred_ids.len()];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[pred_ids[&p]][truth_ids[&t]] += 1;
    }
    (counts, pred_ids.len(), truth_ids.len())
}

/// Minimum-cost assignment on a square cost matrix; returns the column
/// assigned to each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Clustering accuracy: the best one-to-one mapping from predicted
/// clusters to true classes, found by optimal assignment on the
/// confusion matrix.
pub fn accuracy(pred: &[i64], truth: &[i64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Eval(format!(
            "label length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Eval("empty label vectors".into()));
    }
    let (counts, np, nt) = contingency(pred, truth);
    let side = np.max(nt);
    let max_count = counts
        .iter()
        .flatten()
        .copied()
        .max()
        .unwrap_or(0) as f64;
    // pad to square and convert the maximization to a min-cost problem
    let mut cost = vec![vec![max_count; side]; side];
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = max_count - c as f64;
        }
    }
    let assign = hungarian_min(&cost);
    let mut matched = 0usize;
    for (i, &j) in assign.iter().enumerate() {
        if i < np && j < nt {
            matched += counts[i][j];
        }
    }
    Ok(matched as f64 / truth.len() as f64)
}

/// Normalized mutual information with natural-log entropies, normalized
/// by sqrt(H(pred) * H(truth)). Identical partitions (up to relabeling)
/// score 1; if either partition is constant and they differ, the score
/// is 0.
pub fn nmi(pred: &[i64], truth: &[i64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Eval(format!(
            "label length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Eval("empty label vectors".into()));
    }
    let (counts, np, nt) = contingency(pred, truth);
    let n = truth.len() as f64;

    let identical = np == nt
        && counts
            .iter()
            .all(|row| row.iter().filter(|&&c| c > 0).count() == 1)
        && (0..nt).all(|j| (0..np).filter(|&i| counts[i][j] > 0).count() == 1);
    if identical {
        return Ok(1.0);
    }

    let row_sums: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> = (0..nt)
        .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();
    let h = |sums: &[f64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| {
                let p = s / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = h(&row_sums);
    let h_truth = h(&col_sums);
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..np {
        for j in 0..nt {
            let c = counts[i][j] as f64;
            if c > 0.0 {
                mi += (c / n) * ((n * c) / (row_sums[i] * col_sums[j])).ln();
            }
        }
    }
    Ok((mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

/// Restricts each view to its top-p features, clusters, and scores ACC
/// and NMI against the ground truth.
pub fn evaluate_selection(
    rankings: &[FeatureRanking],
    p: &[usize],
    data: &[Array2<f64>],
    truth: &[i64],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    if rankings.len() != data.len() || p.len() != data.len() {
        return Err(Error::Eval(
            "rankings, selection counts and views must have equal arity".into(),
        ));
    }
    let n = data.first().map(|d| d.nrows()).unwrap_or(0);
    if truth.len() != n {
        return Err(Error::Eval(format!(
            "{} labels for {} instances",
            truth.len(),
            n
        )));
    }
    let mut restricted = Vec::with_capacity(data.len());
    for ((ranking, &p_v), x) in rankings.iter().zip(p).zip(data) {
        if p_v == 0 {
            return Err(Error::Eval("empty selection".into()));
        }
        if p_v > x.ncols() {
            return Err(Error::Eval(format!(
                "selection of {} features exceeds view dim {}",
                p_v,
                x.ncols()
            )));
        }
        restricted.push(x.select(Axis(1), &ranking.order[..p_v]));
    }
    let labels = spherical_kmeans_multiview(&restricted, k, seed)?;
    let pred: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    Ok(EvalReport {
        acc: accuracy(&pred, truth)?,
        nmi: nmi(&pred, truth)?,
        labels_pred: labels,
        selected_counts: p.to_vec(),
        seed,
    })
}

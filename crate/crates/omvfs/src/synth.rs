//! Synthetic multi-view streams with planted informative features,
//! cluster structure, and an optional dominant-class drift schedule.
//! Ground truth (labels, planted sets, regime priors) is emitted
//! alongside the data for verification.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::FeatureRanking;

/// Mean value of an informative feature for instances of its own
/// cluster is drawn once per feature from [SIGNAL_HIGH_MIN,
/// SIGNAL_HIGH_MAX]; everyone else sees SIGNAL_LOW. The per-feature
/// spread keeps rankings stable instead of tie-broken by noise.
const SIGNAL_HIGH_MIN: f64 = 2.0;
const SIGNAL_HIGH_MAX: f64 = 4.0;
const SIGNAL_LOW: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub n: usize,
    /// Per-view feature dimensionality.
    pub dims: Vec<usize>,
    pub k: usize,
    /// Per-view count of planted informative features.
    pub informative: Vec<usize>,
    pub noise_scale: f64,
    /// Instances between dominant-class switches; 0 keeps the stream
    /// stationary.
    pub drift_period: usize,
    /// Fraction of the class prior carried by the two dominant classes.
    pub dominant_share: f64,
    pub seed: u64,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParam("n must be >= 1".into()));
        }
        if self.dims.is_empty() || self.dims.len() != self.informative.len() {
            return Err(Error::InvalidParam(
                "dims and informative must have equal, nonzero arity".into(),
            ));
        }
        if self.k < 1 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        for (d, i) in self.dims.iter().zip(&self.informative) {
            if i > d {
                return Err(Error::InvalidParam(format!(
                    "{i} informative features exceed view dim {d}"
                )));
            }
        }
        if self.drift_period > 0 && self.k < 2 {
            return Err(Error::InvalidParam("drift requires k >= 2".into()));
        }
        if !self.noise_scale.is_finite() || self.noise_scale < 0.0 {
            return Err(Error::InvalidParam("noise_scale must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.dominant_share) {
            return Err(Error::InvalidParam(
                "dominant_share must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One stretch of the stream with fixed class priors.
#[derive(Debug, Clone, Serialize)]
pub struct Regime {
    pub start: usize,
    pub end: usize,
    pub dominant: Vec<usize>,
    pub priors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub views: Vec<Array2<f64>>,
    pub labels: Vec<i64>,
    /// Per view: sorted indices of the planted informative features.
    pub informative_sets: Vec<Vec<usize>>,
    /// Per view: (feature index, owning cluster) for every planted
    /// feature.
    pub feature_clusters: Vec<Vec<(usize, usize)>>,
    /// Per view: own-cluster mean of each planted feature, aligned with
    /// `informative_sets`.
    pub feature_strengths: Vec<Vec<f64>>,
    pub regimes: Vec<Regime>,
}

fn regime_priors(k: usize, dominant: &[usize], share: f64) -> Vec<f64> {
    let mut priors = vec![0.0; k];
    if k <= dominant.len() {
        for p in priors.iter_mut() {
            *p = 1.0 / k as f64;
        }
        return priors;
    }
    let rest = (1.0 - share) / (k - dominant.len()) as f64;
    for (c, p) in priors.iter_mut().enumerate() {
        *p = if dominant.contains(&c) {
            share / dominant.len() as f64
        } else {
            rest
        };
    }
    priors
}

fn pick_dominant_pair(rng: &mut ChaCha8Rng, k: usize, previous: Option<&[usize]>) -> Vec<usize> {
    let n_pairs = k * (k - 1) / 2;
    loop {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k);
        while b == a {
            b = rng.random_range(0..k);
        }
        let mut pair = vec![a.min(b), a.max(b)];
        pair.dedup();
        if n_pairs == 1 {
            return pair;
        }
        if previous.map(|p| p != pair.as_slice()).unwrap_or(true) {
            return pair;
        }
    }
}

/// Builds the stream in memory. Instances of a cluster share elevated
/// means on that cluster's slice of the planted features; everything
/// else is clipped Gaussian noise.
pub fn generate_data(spec: &PlantSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let informative_sets: Vec<Vec<usize>> = spec
        .dims
        .iter()
        .zip(&spec.informative)
        .map(|(&d, &count)| {
            let mut idx = rand::seq::index::sample(&mut rng, d, count).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    // round-robin ownership so every cluster gets a near-equal slice
    let feature_clusters: Vec<Vec<(usize, usize)>> = informative_sets
        .iter()
        .map(|set| {
            set.iter()
                .enumerate()
                .map(|(pos, &f)| (f, pos % spec.k))
                .collect()
        })
        .collect();
    let feature_strengths: Vec<Vec<f64>> = informative_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|_| SIGNAL_HIGH_MIN + (SIGNAL_HIGH_MAX - SIGNAL_HIGH_MIN) * rng.random::<f64>())
                .collect()
        })
        .collect();

    let regimes: Vec<Regime> = if spec.drift_period == 0 {
        vec![Regime {
            start: 0,
            end: spec.n,
            dominant: Vec::new(),
            priors: vec![1.0 / spec.k as f64; spec.k],
        }]
    } else {
        let count = spec.n.div_ceil(spec.drift_period);
        let mut regimes = Vec::with_capacity(count);
        let mut previous: Option<Vec<usize>> = None;
        for r in 0..count {
            let dominant = pick_dominant_pair(&mut rng, spec.k, previous.as_deref());
            let priors = regime_priors(spec.k, &dominant, spec.dominant_share);
            regimes.push(Regime {
                start: r * spec.drift_period,
                end: ((r + 1) * spec.drift_period).min(spec.n),
                dominant: dominant.clone(),
                priors,
            });
            previous = Some(dominant);
        }
        regimes
    };

    let mut labels = Vec::with_capacity(spec.n);
    for regime in &regimes {
        for _ in regime.start..regime.end {
            let r = rng.random::<f64>();
            let mut acc = 0.0;
            let mut class = spec.k - 1;
            for (c, &p) in regime.priors.iter().enumerate() {
                acc += p;
                if r < acc {
                    class = c;
                    break;
                }
            }
            labels.push(class as i64);
        }
    }

    let mut views = Vec::with_capacity(spec.dims.len());
    for (v, &dim) in spec.dims.iter().enumerate() {
        let mut owner: Vec<Option<(usize, f64)>> = vec![None; dim];
        for (&(f, c), &s) in feature_clusters[v].iter().zip(&feature_strengths[v]) {
            owner[f] = Some((c, s));
        }
        let mut x = Array2::<f64>::zeros((spec.n, dim));
        for i in 0..spec.n {
            let class = labels[i] as usize;
            for d in 0..dim {
                let value = match owner[d] {
                    Some((c, strength)) => {
                        let mean = if c == class { strength } else { SIGNAL_LOW };
                        mean + spec.noise_scale * normal.sample(&mut rng)
                    }
                    None => spec.noise_scale * normal.sample(&mut rng),
                };
                x[[i, d]] = value.max(0.0);
            }
        }
        views.push(x);
    }

    Ok(GeneratedData {
        views,
        labels,
        informative_sets,
        feature_clusters,
        feature_strengths,
        regimes,
    })
}

#[derive(Serialize)]
struct SidecarDoc<'a> {
    seed: u64,
    n: usize,
    k: usize,
    dims: &'a [usize],
    noise_scale: f64,
    dominant_share: f64,
    signal_high_range: (f64, f64),
    signal_low: f64,
    informative_sets: &'a [Vec<usize>],
    feature_clusters: &'a [Vec<(usize, usize)>],
    feature_strengths: &'a [Vec<f64>],
    regimes: &'a [Regime],
}

#[derive(Serialize)]
struct ManifestViewDoc {
    id: u32,
    name: String,
    dim: usize,
    path: String,
    format: String,
}

#[derive(Serialize)]
struct ManifestDocOut {
    views: Vec<ManifestViewDoc>,
    labels: String,
    rows: usize,
}

/// Writes the generated stream in the ingest formats: one dense CSV per
/// view, a labels file, the manifest, and a ground-truth sidecar.
/// Returns the manifest path.
pub fn write_dataset(data: &GeneratedData, spec: &PlantSpec, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut views = Vec::new();
    for (v, x) in data.views.iter().enumerate() {
        let file = format!("view{v}.csv");
        let path = out_dir.join(&file);
        let mut body = String::new();
        for row in x.rows() {
            let line: Vec<String> = row.iter().map(|e| format!("{e}")).collect();
            body.push_str(&line.join(","));
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        views.push(ManifestViewDoc {
            id: v as u32,
            name: format!("view{v}"),
            dim: x.ncols(),
            path: file,
            format: "csv".into(),
        });
    }

    let labels_path = out_dir.join("labels.txt");
    let body: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&labels_path, body).map_err(|e| Error::io(&labels_path, e))?;

    let manifest = ManifestDocOut {
        views,
        labels: "labels.txt".into(),
        rows: spec.n,
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    let sidecar = SidecarDoc {
        seed: spec.seed,
        n: spec.n,
        k: spec.k,
        dims: &spec.dims,
        noise_scale: spec.noise_scale,
        dominant_share: spec.dominant_share,
        signal_high_range: (SIGNAL_HIGH_MIN, SIGNAL_HIGH_MAX),
        signal_low: SIGNAL_LOW,
        informative_sets: &data.informative_sets,
        feature_clusters: &data.feature_clusters,
        feature_strengths: &data.feature_strengths,
        regimes: &data.regimes,
    };
    let sidecar_path = out_dir.join("truth.json");
    std::fs::write(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| Error::io(&sidecar_path, e))?;

    Ok(manifest_path)
}

/// Generates and writes a dataset; returns the manifest path and the
/// in-memory truth.
pub fn generate(spec: &PlantSpec, out_dir: &Path) -> Result<(PathBuf, GeneratedData)> {
    let data = generate_data(spec)?;
    let manifest = write_dataset(&data, spec, out_dir)?;
    Ok((manifest, data))
}

/// Fraction of the top-p ranked features that belong to the planted
/// informative set.
pub fn selection_precision(ranking: &FeatureRanking, informative: &[usize], p: usize) -> f64 {
    if p == 0 {
        return 0.0;
    }
    let set: std::collections::HashSet<usize> = informative.iter().copied().collect();
    let hits = ranking.order.iter().take(p).filter(|f| set.contains(f)).count();
    hits as f64 / p as f64
}

//! Full-batch reference solver for the joint objective. Used as a
//! small-instance oracle against the streaming optimizer; its update
//! loops are written independently of the streaming code paths.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::graph::{self, LaplacianPair};
use crate::types::{BandwidthPolicy, HyperParams, StreamRng};

#[derive(Debug, Clone)]
pub struct OfflineOptions {
    /// Iteration cap; the batch solver may need more rounds than the
    /// per-chunk loop.
    pub max_iters: usize,
    /// Scale every column of every view to unit l2 norm before solving.
    pub column_normalize: bool,
    /// Refuse instances larger than this row count.
    pub n_cap: usize,
    /// Optional injected initialization for comparisons against the
    /// streaming solver.
    pub init: Option<OfflineInit>,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            column_normalize: true,
            n_cap: 5000,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfflineInit {
    pub u: Array2<f64>,
    pub v_mats: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct OfflineFit {
    pub u: Array2<f64>,
    pub v_mats: Vec<Array2<f64>>,
    pub objective_trace: Vec<f64>,
    pub iters: usize,
}

/// Scales each nonzero column to unit l2 norm; zero columns pass
/// through.
pub fn normalize_columns(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    out
}

fn l21(m: &Array2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum()
}

fn objective_core(
    xs: &[Array2<f64>],
    u: &Array2<f64>,
    v_mats: &[Array2<f64>],
    pair: &LaplacianPair,
    params: &HyperParams,
) -> f64 {
    let mut total = 0.0;
    for ((x, v), beta) in xs.iter().zip(v_mats).zip(&params.beta) {
        let recon = u.dot(&v.t());
        total += Zip::from(x).and(&recon).fold(0.0, |acc, &a, &b| {
            let d = a - b;
            acc + d * d
        });
        total += beta * l21(v);
    }
    let mu = &pair.m_pos.dot(u) - &pair.m_neg.dot(u);
    total += Zip::from(u).and(&mu).fold(0.0, |acc, &a, &b| acc + a * b);

    let gram = u.t().dot(u);
    let k = u.ncols();
    let mut orth = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = gram[[i, j]] - if i == j { 1.0 } else { 0.0 };
            orth += d * d;
        }
    }
    total + params.gamma * orth
}

fn build_graph(xs: &[Array2<f64>], params: &HyperParams) -> Result<LaplacianPair> {
    let laplacians = xs
        .iter()
        .map(|x| {
            let sigma = match params.kernel_bandwidth {
                BandwidthPolicy::Fixed(s) => s,
                BandwidthPolicy::MedianHeuristic => {
                    graph::median_bandwidth(x.view(), params.seed)?
                }
            };
            let w = graph::gaussian_block(x.view(), x.view(), sigma)?;
            graph::laplacian(&w)
        })
        .collect::<Result<Vec<_>>>()?;
    graph::combine_and_split(&laplacians, &params.alpha)
}

/// Objective over the full data with full-graph Laplacians; the input is
/// taken as given (apply `normalize_columns` beforehand if wanted).
pub fn objective_offline(
    x_all: &[Array2<f64>],
    u: &Array2<f64>,
    v_mats: &[Array2<f64>],
    params: &HyperParams,
) -> Result<f64> {
    let pair = build_graph(x_all, params)?;
    Ok(objective_core(x_all, u, v_mats, &pair, params))
}

fn check_inputs(x_all: &[Array2<f64>], params: &HyperParams, opts: &OfflineOptions) -> Result<usize> {
    if x_all.is_empty() {
        return Err(Error::InvalidParam("at least one view required".into()));
    }
    let n = x_all[0].nrows();
    if x_all.iter().any(|x| x.nrows() != n) {
        return Err(Error::Shape("views disagree on row count".into()));
    }
    if n > opts.n_cap {
        return Err(Error::InvalidParam(format!(
            "instance count {} exceeds offline cap {}",
            n, opts.n_cap
        )));
    }
    if params.alpha.len() != x_all.len() || params.beta.len() != x_all.len() {
        return Err(Error::InvalidParam(
            "alpha/beta arity does not match view count".into(),
        ));
    }
    if x_all.iter().any(|x| x.iter().any(|v| *v < 0.0)) {
        return Err(Error::InvalidParam("data must be nonnegative".into()));
    }
    Ok(n)
}

/// Alternating multiplicative solver over the full data. Draws V then U
/// from the seed when no initialization is injected, mirroring the
/// streaming solver's draw order so equal seeds give equal starts.
pub fn solve_offline(
    x_all: &[Array2<f64>],
    params: &HyperParams,
    opts: &OfflineOptions,
) -> Result<OfflineFit> {
    let n = check_inputs(x_all, params, opts)?;
    let k = params.k;
    let eps = params.norm_eps;

    let xs: Vec<Array2<f64>> = if opts.column_normalize {
        x_all.iter().map(normalize_columns).collect()
    } else {
        x_all.to_vec()
    };
    let pair = build_graph(&xs, params)?;

    let (mut u, mut v_mats) = match &opts.init {
        Some(init) => {
            if init.u.nrows() != n || init.u.ncols() != k || init.v_mats.len() != xs.len() {
                return Err(Error::Shape("injected initialization has wrong shape".into()));
            }
            (init.u.clone(), init.v_mats.clone())
        }
        None => {
            let mut rng = StreamRng::new(params.seed);
            let v_mats: Vec<Array2<f64>> = xs
                .iter()
                .map(|x| rng.positive_matrix(x.ncols(), k))
                .collect();
            (rng.positive_matrix(n, k), v_mats)
        }
    };

    let mut trace = vec![objective_core(&xs, &u, &v_mats, &pair, params)];
    let mut iters = 0;
    for _ in 0..opts.max_iters {
        u = step_u(&xs, &u, &v_mats, &pair, params.gamma, eps)?;
        for (v, (x, beta)) in v_mats.iter_mut().zip(xs.iter().zip(&params.beta)) {
            *v = step_v(v, x, &u, *beta, eps)?;
        }
        iters += 1;
        let prev = *trace.last().unwrap();
        let obj = objective_core(&xs, &u, &v_mats, &pair, params);
        trace.push(obj);
        if (obj - prev).abs() / prev.max(eps) < params.inner_tol {
            break;
        }
    }
    Ok(OfflineFit {
        u,
        v_mats,
        objective_trace: trace,
        iters,
    })
}

/// Single-view specialization; delegates to the joint solver with one
/// view so both paths share one trace.
pub fn solve_single_view(
    x: &Array2<f64>,
    params: &HyperParams,
    opts: &OfflineOptions,
) -> Result<OfflineFit> {
    solve_offline(std::slice::from_ref(x), params, opts)
}

fn step_u(
    xs: &[Array2<f64>],
    u: &Array2<f64>,
    v_mats: &[Array2<f64>],
    pair: &LaplacianPair,
    gamma: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    let k = u.ncols();
    let mut num = pair.m_neg.dot(u);
    num.scaled_add(gamma, u);
    for (x, v) in xs.iter().zip(v_mats) {
        num += &x.dot(v);
    }
    let mut vtv = Array2::<f64>::zeros((k, k));
    for v in v_mats {
        vtv += &v.t().dot(v);
    }
    let mut den = u.dot(&vtv);
    den.scaled_add(gamma, &u.dot(&u.t().dot(u)));
    den += &pair.m_pos.dot(u);

    let mut next = u.clone();
    Zip::from(&mut next)
        .and(&num)
        .and(&den)
        .for_each(|x, &n, &d| *x *= (n / d.max(eps)).sqrt());
    if !next.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence("non-finite value in batch U update".into()));
    }
    Ok(next)
}

fn step_v(
    v: &Array2<f64>,
    x: &Array2<f64>,
    u: &Array2<f64>,
    beta: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    let num = x.t().dot(u);
    let gram = u.t().dot(u);
    let mut den = v.dot(&gram);
    let half_beta = 0.5 * beta;
    for (j, mut den_row) in den.outer_iter_mut().enumerate() {
        let row = v.row(j);
        let norm = row.iter().map(|e| e * e).sum::<f64>().sqrt();
        let scale = half_beta / norm.max(eps);
        Zip::from(&mut den_row)
            .and(&row)
            .for_each(|d, &e| *d += scale * e);
    }
    let mut next = v.clone();
    Zip::from(&mut next)
        .and(&num)
        .and(&den)
        .for_each(|e, &n, &d| *e *= (n / d.max(eps)).sqrt());
    if !next.iter().all(|e| e.is_finite()) {
        return Err(Error::Divergence("non-finite value in batch V update".into()));
    }
    Ok(next)
}

//! Exact t-SNE (O(n²) per iteration) for visualizing class separability.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::MlError;
use crate::rng;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, seed: 0, learning_rate: 200.0, early_exaggeration: 12.0, exaggeration_iters: 250 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// KL(P‖Q) of the initial layout
    pub kl_initial: f64,
    pub kl_final: f64,
    /// (iteration, KL) every 50 iterations
    pub kl_history: Vec<(usize, f64)>,
}

fn sq_dists(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()).collect())
        .collect()
}

/// Row `i` of the conditional affinities with entropy ln(perplexity),
/// found by bisection on the precision.
fn conditional_row(d: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut p = vec![0.0; d.len()];
    // shift by the nearest distance for numerical range
    let dmin = d.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    for _ in 0..200 {
        let mut sum = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            p[j] = if j == i { 0.0 } else { (-(dj - dmin) * beta).exp() };
            sum += p[j];
        }
        let mut h = 0.0;
        for (j, pj) in p.iter_mut().enumerate() {
            *pj /= sum;
            if *pj > 0.0 {
                h += *pj * beta * (d[j] - dmin);
            }
        }
        h += sum.ln();
        if (h - target).abs() < 1e-10 {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    p
}

fn kl(p: &[Vec<f64>], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2));
            }
        }
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)) / z).max(1e-300);
                s += p[i][j] * (p[i][j] / q).ln();
            }
        }
    }
    s
}

pub fn tsne_embed(x: &[Vec<f64>], opts: &TsneOptions) -> Result<TsneResult, MlError> {
    let n = x.len();
    if !(opts.perplexity > 0.0) || 3.0 * opts.perplexity > n as f64 {
        return Err(MlError::Perplexity { perplexity: opts.perplexity, n, max: n as f64 / 3.0 });
    }
    if let Some((row, column)) =
        x.iter().enumerate().find_map(|(i, r)| r.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
    {
        return Err(MlError::NonFinite { row, column });
    }
    let d = sq_dists(x);
    let cond: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| conditional_row(&d[i], i, opts.perplexity)).collect();
    let p: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12) }).collect())
        .collect();

    let mut r = rng::stream(opts.seed, 0);
    let nd = Normal::new(0.0, 1e-4).unwrap();
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [nd.sample(&mut r), nd.sample(&mut r)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let kl_initial = kl(&p, &y);
    let mut kl_history = vec![(0, kl_initial)];

    for it in 0..opts.iterations {
        let exag = if it < opts.exaggeration_iters { opts.early_exaggeration } else { 1.0 };
        let momentum = if it < opts.exaggeration_iters { 0.5 } else { 0.8 };
        let num: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)) })
                    .collect()
            })
            .collect();
        let z: f64 = num.iter().map(|r| r.iter().sum::<f64>()).sum();
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i != j {
                        let m = (exag * p[i][j] - num[i][j] / z) * num[i][j];
                        g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                        g[1] += 4.0 * m * (y[i][1] - y[j][1]);
                    }
                }
                g
            })
            .collect();
        for i in 0..n {
            for a in 0..2 {
                gains[i][a] = if update[i][a] * grad[i][a] < 0.0 { gains[i][a] + 0.2 } else { (gains[i][a] * 0.8f64).max(0.01) };
                update[i][a] = momentum * update[i][a] - opts.learning_rate * gains[i][a] * grad[i][a];
                y[i][a] += update[i][a];
            }
        }
        let c = [y.iter().map(|v| v[0]).sum::<f64>() / n as f64, y.iter().map(|v| v[1]).sum::<f64>() / n as f64];
        y.iter_mut().for_each(|v| {
            v[0] -= c[0];
            v[1] -= c[1];
        });
        if (it + 1) % 50 == 0 {
            kl_history.push((it + 1, kl(&p, &y)));
        }
    }
    let kl_final = kl(&p, &y);
    Ok(TsneResult { embedding: y, kl_initial, kl_final, kl_history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_feasibility() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        match tsne_embed(&x, &TsneOptions::default()) {
            Err(MlError::Perplexity { max, .. }) => assert!((max - 20.0 / 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conditional_rows_hit_perplexity() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin() * 3.0, i as f64 * 0.1]).collect();
        let d = sq_dists(&x);
        for i in [0, 17, 39] {
            let p = conditional_row(&d[i], i, 10.0);
            let h: f64 = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
            assert!((h.exp() - 10.0).abs() < 1e-6, "{}", h.exp());
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use codeq::channel::{ChannelModel, GOOD};
use codeq::queueing::QueueChain;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `tables[n][c][d][e]` for every `n <= max_n`, by walking every state
/// path and every error pattern.
pub fn enumerate_joint(model: &ChannelModel, max_n: usize) -> Vec<Vec<Vec<Vec<f64>>>> {
    let s = model.num_states();
    let mut tables: Vec<_> = (0..=max_n).map(|n| vec![vec![vec![0.0; n + 1]; s]; s]).collect();
    for c in 0..s {
        walk_errors(model, max_n, 0, c, c, 0, 1.0, &mut tables);
    }
    tables
}

#[allow(clippy::too_many_arguments)]
fn walk_errors(
    model: &ChannelModel,
    max_n: usize,
    depth: usize,
    start: usize,
    state: usize,
    errors: usize,
    prob: f64,
    tables: &mut [Vec<Vec<Vec<f64>>>],
) {
    tables[depth][start][state][errors] += prob;
    if depth == max_n {
        return;
    }
    let eps = model.crossover(state);
    for next in 0..model.num_states() {
        let t = model.transition(state, next);
        if t == 0.0 {
            continue;
        }
        if eps > 0.0 {
            walk_errors(model, max_n, depth + 1, start, next, errors + 1, prob * eps * t, tables);
        }
        if eps < 1.0 {
            walk_errors(model, max_n, depth + 1, start, next, errors, prob * (1.0 - eps) * t, tables);
        }
    }
}

/// `table[c][d][n_g]` by walking every state path.
pub fn enumerate_occupancy(model: &ChannelModel, n: usize) -> Vec<Vec<Vec<f64>>> {
    let mut table = vec![vec![vec![0.0; n + 1]; 2]; 2];
    for c in 0..2 {
        walk_states(model, n, c, c, 0, 1.0, &mut table);
    }
    table
}

fn walk_states(
    model: &ChannelModel,
    left: usize,
    start: usize,
    state: usize,
    good: usize,
    prob: f64,
    table: &mut [Vec<Vec<f64>>],
) {
    if left == 0 {
        table[start][state][good] += prob;
        return;
    }
    let visit = usize::from(state == GOOD);
    for next in 0..2 {
        let t = model.transition(state, next);
        if t > 0.0 {
            walk_states(model, left - 1, start, next, good + visit, prob * t, table);
        }
    }
}

/// Explicit transition matrix of the chain cut at `levels` levels. Mass
/// that would leave the top level stays on the top level.
pub fn assemble_truncated(chain: &QueueChain, levels: usize) -> DMatrix<f64> {
    let s = chain.block_dim;
    let mut t = DMatrix::zeros(levels * s, levels * s);
    let mut put = |from: usize, to: usize, block: &DMatrix<f64>| {
        let to = to.min(levels - 1);
        for r in 0..s {
            for c in 0..s {
                t[(from * s + r, to * s + c)] += block[(r, c)];
            }
        }
    };
    for q in 0..levels {
        if q == 0 {
            put(0, 0, &chain.a_hat);
            for (i, f) in chain.f_hat.iter().enumerate() {
                put(0, i + 1, f);
            }
        } else {
            put(q, q - 1, &chain.b);
            put(q, q, &chain.a);
            for (i, f) in chain.f.iter().enumerate() {
                put(q, q + i + 1, f);
            }
        }
    }
    t
}

/// Stationary vector by repeated squaring of the transition matrix.
pub fn power_iteration(t: &DMatrix<f64>) -> Vec<f64> {
    let mut m = t.clone();
    for _ in 0..60 {
        let mut next = &m * &m;
        for mut row in next.row_iter_mut() {
            let sum: f64 = row.sum();
            row /= sum;
        }
        let change = (&next - &m).amax();
        m = next;
        if change < 1e-15 {
            break;
        }
    }
    (0..m.ncols()).map(|c| m.column(c).mean()).collect()
}

fn random_row(rng: &mut ChaCha8Rng, width: usize, density: f64) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..width)
            .map(|_| if rng.random::<f64>() < density { rng.random::<f64>() } else { 0.0 })
            .collect();
        if row.iter().any(|&v| v > 0.0) {
            return row;
        }
    }
}

/// Random stable chain with `dim` phases and jumps up to `jumps`, with
/// stability factor below `max_factor`.
pub fn random_chain(rng: &mut ChaCha8Rng, dim: usize, jumps: usize, max_factor: f64) -> QueueChain {
    loop {
        let down_bias = 1.0 + 3.0 * rng.random::<f64>();
        let mut b = DMatrix::zeros(dim, dim);
        let mut a = DMatrix::zeros(dim, dim);
        let mut f = vec![DMatrix::zeros(dim, dim); jumps];
        let mut a_hat = DMatrix::zeros(dim, dim);
        let mut f_hat = vec![DMatrix::zeros(dim, dim); jumps];
        for r in 0..dim {
            let mut w = random_row(rng, dim * (jumps + 2), 0.8);
            for v in w[..dim].iter_mut() {
                *v *= down_bias * (jumps as f64);
            }
            for (j, v) in w.iter_mut().enumerate().skip(2 * dim) {
                *v /= (1 + j / dim) as f64;
            }
            let total: f64 = w.iter().sum();
            for c in 0..dim {
                b[(r, c)] = w[c] / total;
                a[(r, c)] = w[dim + c] / total;
                for (i, fi) in f.iter_mut().enumerate() {
                    fi[(r, c)] = w[(i + 2) * dim + c] / total;
                }
            }
            let wh = random_row(rng, dim * (jumps + 1), 0.8);
            let total: f64 = wh.iter().sum();
            for c in 0..dim {
                a_hat[(r, c)] = wh[c] / total;
                for (i, fi) in f_hat.iter_mut().enumerate() {
                    fi[(r, c)] = wh[(i + 1) * dim + c] / total;
                }
            }
        }
        let chain = QueueChain::from_blocks(a_hat, f_hat, b, a, f).expect("stochastic blocks");
        if chain.service.stability_factor < max_factor && is_irreducible(&chain) {
            return chain;
        }
    }
}

// Phase process B + A + ΣF must be irreducible for a unique stationary law.
fn is_irreducible(chain: &QueueChain) -> bool {
    let s = chain.block_dim;
    let mut phase = &chain.b + &chain.a;
    for f in &chain.f {
        phase += f;
    }
    let mut reach = phase.map(|v| if v > 0.0 { 1.0 } else { 0.0 }) + DMatrix::identity(s, s);
    for _ in 0..s {
        reach = (&reach * &reach).map(|v: f64| if v > 0.0 { 1.0 } else { 0.0 });
    }
    reach.iter().all(|&v| v > 0.0) && chain.b.iter().any(|&v| v > 0.0)
}

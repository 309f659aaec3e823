//! Brute-force references. Everything here enumerates ordered word
//! sequences, binary topic vectors and ordered second-layer draws directly
//! from the joint energy, without any of the library's closed forms.

#![allow(dead_code, clippy::needless_range_loop)]

use orsm_core::ModelParams;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn random_params<R: Rng>(f: usize, k: usize, scale: f64, rng: &mut R) -> ModelParams {
    let normal = Normal::new(0.0, scale).unwrap();
    let mut draw = |n: usize| (0..n).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
    let w = draw(f * k);
    let a = draw(f);
    let b = draw(k);
    ModelParams::from_parts(f, k, w, a, b).unwrap()
}

/// All sequences of length `len` over `0..k`.
pub fn sequences(k: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..k).map(move |w| {
                    let mut t = s.clone();
                    t.push(w);
                    t
                })
            })
            .collect();
    }
    out
}

pub fn binary_vectors(f: usize) -> Vec<Vec<u8>> {
    (0..1u32 << f).map(|c| (0..f).map(|j| ((c >> j) & 1) as u8).collect()).collect()
}

pub fn counts_of(seq: &[usize], k: usize) -> Vec<u32> {
    let mut c = vec![0u32; k];
    for &w in seq {
        c[w] += 1;
    }
    c
}

/// Joint energy with every word and every second-layer draw written out
/// as its own softmax unit.
pub fn joint_energy(p: &ModelParams, words: &[usize], h1: &[u8], h2: &[usize]) -> f64 {
    let (f, k) = (p.n_hidden(), p.vocab_size());
    let total = (words.len() + h2.len()) as f64;
    let mut e = 0.0;
    for j in 0..f {
        if h1[j] == 1 {
            for &w in words.iter().chain(h2) {
                e -= p.weights[j * k + w];
            }
            e -= total * p.hidden_bias[j];
        }
    }
    for &w in words.iter().chain(h2) {
        e -= p.word_bias[w];
    }
    e
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln Z` by summing over every (ordered words, topics, ordered softmaxes).
pub fn log_z(p: &ModelParams, n: usize, m: usize) -> f64 {
    let k = p.vocab_size();
    let words = sequences(k, n);
    let h2s = sequences(k, m);
    let mut terms = Vec::new();
    for h in binary_vectors(p.n_hidden()) {
        for v in &words {
            for h2 in &h2s {
                terms.push(-joint_energy(p, v, &h, h2));
            }
        }
    }
    lse(&terms)
}

/// `ln p` of one particular ordering of the words with counts `v`.
pub fn log_prob(p: &ModelParams, m: usize, v: &[u32]) -> f64 {
    let k = p.vocab_size();
    let words: Vec<usize> = v.iter().enumerate().flat_map(|(w, &c)| std::iter::repeat_n(w, c as usize)).collect();
    let mut terms = Vec::new();
    for h in binary_vectors(p.n_hidden()) {
        for h2 in &sequences(k, m) {
            terms.push(-joint_energy(p, &words, &h, h2));
        }
    }
    lse(&terms) - log_z(p, words.len(), m)
}

/// Marginal `P(h1)` for documents of length `n`, indexed like
/// [`binary_vectors`].
pub fn topic_marginal(p: &ModelParams, n: usize, m: usize) -> Vec<f64> {
    let k = p.vocab_size();
    let words = sequences(k, n);
    let h2s = sequences(k, m);
    let per_h: Vec<f64> = binary_vectors(p.n_hidden())
        .iter()
        .map(|h| {
            let mut terms = Vec::new();
            for v in &words {
                for h2 in &h2s {
                    terms.push(-joint_energy(p, v, h, h2));
                }
            }
            lse(&terms)
        })
        .collect();
    let z = lse(&per_h);
    per_h.iter().map(|x| (x - z).exp()).collect()
}

pub fn topic_index(h: &[u8]) -> usize {
    h.iter().enumerate().map(|(j, &b)| (b as usize) << j).sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Precision at each relevant rank, averaged.
pub fn brute_average_precision(relevant: &[bool]) -> f64 {
    let mut precisions = Vec::new();
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            let hits = relevant[..=i].iter().filter(|&&x| x).count();
            precisions.push(hits as f64 / (i + 1) as f64);
        }
    }
    precisions.iter().sum::<f64>() / precisions.len() as f64
}

pub fn brute_cosine(x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    d / (nx * ny)
}

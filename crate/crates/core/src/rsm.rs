//! Replicated Softmax RBM: energy, conditionals, multinomial sampling and
//! CD-k training.
//!
//! The CD trainer takes a number `M` of extra softmax units. Each document's
//! bottom-up input is then scaled by `s = 1 + M/N` (hidden bias by `s·N`),
//! which is how the two-layer model is pretrained; `M = 0` is plain RSM
//! training.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_in_place};
use crate::params::{ModelParams, TrainHyper};
use crate::rng;

/// `E(v, h) = -hᵀ W v - b·v - N a·h` for a count vector `v` summing to `n`.
pub fn rsm_energy(params: &ModelParams, v: &[u32], h: &[u8], n: u32) -> Result<f64> {
    params.check_visible(v.len())?;
    params.check_hidden(h.len())?;
    let total: u64 = v.iter().map(|&c| c as u64).sum();
    if total != n as u64 {
        return Err(Error::shape(format!("counts sum to {total}, expected N={n}")));
    }
    let mut interaction = 0.0;
    let mut hidden = 0.0;
    for (j, &hj) in h.iter().enumerate() {
        if hj != 0 {
            interaction += params
                .row(j)
                .iter()
                .zip(v)
                .map(|(w, &c)| w * c as f64)
                .sum::<f64>();
            hidden += params.hidden_bias[j];
        }
    }
    let visible: f64 = v.iter().zip(&params.word_bias).map(|(&c, b)| c as f64 * b).sum();
    Ok(-interaction - visible - n as f64 * hidden)
}

/// Activation probabilities `σ(s·(W v) + s·N·a)`.
///
/// `scale = 1` gives the exact RSM posterior; `scale = 1 + M/N` gives the
/// scaled bottom-up pass of the two-layer model. `v` may be real-valued
/// (mean-field reconstructions) but must sum to `n`.
pub fn hidden_given_visible(params: &ModelParams, v: &[f64], n: f64, scale: f64) -> Result<Vec<f64>> {
    params.check_visible(v.len())?;
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("bottom-up scale {scale} must be >= 1")));
    }
    let total: f64 = v.iter().sum();
    if (total - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::shape(format!("counts sum to {total}, expected N={n}")));
    }
    Ok(hidden_probs(params, v, n, scale))
}

#[inline]
pub(crate) fn hidden_probs(params: &ModelParams, v: &[f64], n: f64, scale: f64) -> Vec<f64> {
    let bias_factor = scale * n;
    params
        .project_up(v)
        .into_iter()
        .zip(&params.hidden_bias)
        .map(|(x, a)| sigmoid(scale * x + bias_factor * a))
        .collect()
}

/// Softmax over words of `Wᵀ h + b`. Accepts binary or mean-field `h`.
pub fn word_distribution_given_hidden(params: &ModelParams, h: &[f64]) -> Result<Vec<f64>> {
    params.check_hidden(h.len())?;
    Ok(word_probs(params, h))
}

#[inline]
pub(crate) fn word_probs(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    let mut logits = params.project_down(h);
    softmax_in_place(&mut logits);
    logits
}

/// Draws a multinomial count vector with `n` trials.
///
/// Uses sequential conditional binomials, so it costs `O(K)` regardless of
/// `n`. No randomness is consumed when `n == 0`.
pub fn sample_counts<R: Rng + ?Sized>(dist: &[f64], n: u32, rng: &mut R) -> Result<Vec<u32>> {
    if dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("distribution has negative or nonfinite entries"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("distribution sums to {total}, not 1")));
    }
    Ok(multinomial(dist, n, rng))
}

pub(crate) fn multinomial<R: Rng + ?Sized>(dist: &[f64], n: u32, rng: &mut R) -> Vec<u32> {
    let mut out = vec![0u32; dist.len()];
    let mut remaining = n;
    let mut mass = 1.0f64;
    let last = dist.len().saturating_sub(1);
    for (k, &p) in dist.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == last {
            out[k] = remaining;
            remaining = 0;
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let q = if mass > 0.0 { (p / mass).min(1.0) } else { 1.0 };
        let draw = if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining as u64, q).expect("valid binomial").sample(rng) as u32
        };
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    // Mass lost to rounding on the tail: put any leftover on the last word
    // with positive probability.
    if remaining > 0 {
        if let Some(k) = dist.iter().rposition(|&p| p > 0.0) {
            out[k] += remaining;
        }
    }
    out
}

pub(crate) fn sample_binary<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect()
}

/// One alternating Gibbs sweep of the RSM: `h ~ p(h | v)`, then
/// `v ~ Multinomial(N, p(w | h))`.
pub fn gibbs_sweep<R: Rng + ?Sized>(params: &ModelParams, v: &[u32], rng: &mut R) -> Result<(Vec<u8>, Vec<u32>)> {
    params.check_visible(v.len())?;
    let n: u32 = v.iter().sum();
    let vf: Vec<f64> = v.iter().map(|&c| c as f64).collect();
    let p = hidden_probs(params, &vf, n as f64, 1.0);
    let h = sample_binary(&p, rng);
    let dist = word_probs(params, &h);
    let v_new = multinomial(&dist, n, rng);
    Ok((h.iter().map(|&x| x as u8).collect(), v_new))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CdDiagnostics {
    /// Mean over documents of the squared error between the empirical word
    /// distribution and its final reconstruction.
    pub reconstruction_error: f64,
    /// Batch mean of the positive-phase hidden probabilities.
    pub mean_hidden_activity: f64,
    pub learning_rate: f64,
}

/// Sufficient statistics of one document's positive and negative phase.
pub(crate) struct PhaseStats {
    pub pos_hidden: Vec<f64>,
    pub pos_visible: Vec<f64>,
    pub neg_hidden: Vec<f64>,
    pub neg_visible: Vec<f64>,
    /// Multiplier of the hidden bias, `N + M`.
    pub bias_factor: f64,
    /// Empirical word distribution `v / N`.
    pub word_freq: Vec<f64>,
    pub recon_error: f64,
}

fn cd_phases(params: &ModelParams, doc: &Document, k: usize, extra: u32, rng: &mut rng::ModelRng) -> PhaseStats {
    let kk = params.vocab_size();
    let n = doc.len() as f64;
    let scale = 1.0 + extra as f64 / n;
    let v = doc.dense(kk);
    let pos_hidden = hidden_probs(params, &v, n, scale);

    let mut h = sample_binary(&pos_hidden, rng);
    let mut dist = Vec::new();
    let mut neg_hidden = Vec::new();
    let mut recon = Vec::new();
    for step in 1..=k {
        dist = word_probs(params, &h);
        recon = dist.iter().map(|p| n * p).collect();
        neg_hidden = hidden_probs(params, &recon, n, scale);
        if step < k {
            h = sample_binary(&neg_hidden, rng);
        }
    }
    let word_freq: Vec<f64> = v.iter().map(|c| c / n).collect();
    let recon_error = word_freq.iter().zip(&dist).map(|(a, b)| (a - b) * (a - b)).sum();
    // Pseudo-visible units: the M extra units each carry v/N, so the
    // visible statistics are scaled by s.
    let pos_visible = v.iter().map(|x| scale * x).collect();
    let neg_visible = recon.iter().map(|x| scale * x).collect();
    PhaseStats {
        pos_hidden,
        pos_visible,
        neg_hidden,
        neg_visible,
        bias_factor: scale * n,
        word_freq,
        recon_error,
    }
}

/// One CD-k update on a minibatch.
///
/// `extra_softmaxes` is `M`: each document's bottom-up pass is scaled by
/// `1 + M/N`. `step` is the global update counter used for learning-rate
/// decay. Negative chains run in parallel on index-derived streams seeded
/// from one draw of `rng`; statistics are reduced in batch order.
pub fn cd_k_update<R: Rng + ?Sized>(
    params: &mut ModelParams,
    batch: &[&Document],
    k: usize,
    hyper: &TrainHyper,
    step: u64,
    extra_softmaxes: u32,
    rng: &mut R,
) -> Result<CdDiagnostics> {
    if batch.is_empty() {
        return Err(Error::invalid("minibatch is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("CD requires k >= 1"));
    }
    let kk = params.vocab_size();
    let ff = params.n_hidden();
    for d in batch {
        if d.max_word().is_some_and(|w| w as usize >= kk) {
            return Err(Error::shape(format!("document word id exceeds K={kk}")));
        }
    }
    let base = rng::fork_seed(rng);
    let snapshot: &ModelParams = params;
    let stats: Vec<PhaseStats> = batch
        .par_iter()
        .enumerate()
        .map(|(i, d)| cd_phases(snapshot, d, k, extra_softmaxes, &mut rng::stream(base, i as u64)))
        .collect();

    let (mean_hidden, recon) = batch_means(&stats);
    let lr = hyper.learning_rate_at(step);
    let diagnostics = CdDiagnostics {
        reconstruction_error: recon,
        mean_hidden_activity: mean_hidden.iter().sum::<f64>() / ff as f64,
        learning_rate: lr,
    };
    apply_phase_stats(params, &stats, hyper, step)?;
    Ok(diagnostics)
}

fn batch_means(stats: &[PhaseStats]) -> (Vec<f64>, f64) {
    let ff = stats[0].pos_hidden.len();
    let mut mean_hidden = vec![0.0; ff];
    let mut recon = 0.0;
    for s in stats {
        for (m, p) in mean_hidden.iter_mut().zip(&s.pos_hidden) {
            *m += p;
        }
        recon += s.recon_error;
    }
    let bsz = stats.len() as f64;
    mean_hidden.iter_mut().for_each(|m| *m /= bsz);
    (mean_hidden, recon / bsz)
}

/// Gradient step from per-document positive and negative statistics,
/// averaged over the batch, with weight decay and the sparsity penalty.
/// Parameters are left untouched when the step size is zero or the result
/// would be nonfinite.
pub(crate) fn apply_phase_stats(params: &mut ModelParams, stats: &[PhaseStats], hyper: &TrainHyper, step: u64) -> Result<()> {
    let lr = hyper.learning_rate_at(step);
    if lr == 0.0 || stats.is_empty() {
        return Ok(());
    }
    let kk = params.vocab_size();
    let ff = params.n_hidden();
    let bsz = stats.len() as f64;
    let (mean_hidden, _) = batch_means(stats);
    let mut mean_freq = vec![0.0; kk];
    for s in stats {
        for (m, f) in mean_freq.iter_mut().zip(&s.word_freq) {
            *m += f;
        }
    }
    mean_freq.iter_mut().for_each(|m| *m /= bsz);

    let sparsity = sparsity_gradient(&mean_hidden, hyper);
    let mut hidden_grad = vec![0.0; ff];
    let mut word_grad = vec![0.0; kk];
    for s in stats {
        for j in 0..ff {
            hidden_grad[j] += s.bias_factor * (s.pos_hidden[j] - s.neg_hidden[j]);
        }
        for k in 0..kk {
            word_grad[k] += s.pos_visible[k] - s.neg_visible[k];
        }
    }

    let wd = hyper.weight_decay;
    let snapshot: &ModelParams = params;
    let mut new_weights = vec![0.0; ff * kk];
    new_weights.par_chunks_mut(kk).enumerate().for_each(|(j, row)| {
        for s in stats {
            let (ph, nh) = (s.pos_hidden[j], s.neg_hidden[j]);
            for ((g, pv), nv) in row.iter_mut().zip(&s.pos_visible).zip(&s.neg_visible) {
                *g += ph * pv - nh * nv;
            }
        }
        for ((g, &w), &f) in row.iter_mut().zip(snapshot.row(j)).zip(&mean_freq) {
            *g = w + lr * (*g / bsz - wd * w + sparsity[j] * f);
        }
    });
    let new_hidden: Vec<f64> = (0..ff)
        .map(|j| params.hidden_bias[j] + lr * (hidden_grad[j] / bsz + sparsity[j]))
        .collect();
    let new_word: Vec<f64> = (0..kk).map(|k| params.word_bias[k] + lr * word_grad[k] / bsz).collect();

    if !new_weights.iter().chain(&new_hidden).chain(&new_word).all(|x| x.is_finite()) {
        return Err(Error::Numeric {
            step,
            msg: "nonfinite parameter after update".into(),
        });
    }
    params.weights = new_weights;
    params.hidden_bias = new_hidden;
    params.word_bias = new_word;
    Ok(())
}

/// Ascent direction of `-λ KL(ρ ‖ q̄)` pushed through the logistic, per
/// hidden unit: `λ (ρ/q̄ - (1-ρ)/(1-q̄)) q̄ (1-q̄)`.
pub(crate) fn sparsity_gradient(mean_hidden: &[f64], hyper: &TrainHyper) -> Vec<f64> {
    let (rho, lambda) = (hyper.sparsity_target, hyper.sparsity_weight);
    mean_hidden
        .iter()
        .map(|&q| {
            if lambda == 0.0 {
                return 0.0;
            }
            let q = q.clamp(1e-6, 1.0 - 1e-6);
            lambda * (rho / q - (1.0 - rho) / (1.0 - q)) * q * (1.0 - q)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Global update counter after this epoch.
    pub updates: u64,
    pub learning_rate: f64,
    pub cd_k: usize,
    pub reconstruction_error: f64,
    pub mean_hidden_activity: f64,
}

/// Runs `epochs` passes of CD training over `documents`, shuffling each
/// epoch with `rng`. `on_epoch` sees one report per epoch.
pub fn train_cd<R: Rng + ?Sized>(
    params: &mut ModelParams,
    documents: &[&Document],
    hyper: &TrainHyper,
    epochs: usize,
    extra_softmaxes: u32,
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    hyper.validate()?;
    if documents.is_empty() {
        return Err(Error::invalid("no training documents"));
    }
    let mut order: Vec<usize> = (0..documents.len()).collect();
    let mut updates = 0u64;
    let mut reports = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let (mut recon, mut act, mut batches) = (0.0, 0.0, 0usize);
        let mut last = CdDiagnostics::default();
        let mut k = hyper.cd_schedule.k_at(updates);
        for chunk in order.chunks(hyper.minibatch_size) {
            let batch: Vec<&Document> = chunk.iter().map(|&i| documents[i]).collect();
            k = hyper.cd_schedule.k_at(updates);
            last = cd_k_update(params, &batch, k, hyper, updates, extra_softmaxes, rng)?;
            recon += last.reconstruction_error;
            act += last.mean_hidden_activity;
            batches += 1;
            updates += 1;
        }
        let report = EpochReport {
            epoch,
            updates,
            learning_rate: last.learning_rate,
            cd_k: k,
            reconstruction_error: recon / batches as f64,
            mean_hidden_activity: act / batches as f64,
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}

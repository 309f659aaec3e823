//! Over-Replicated Softmax: a two-layer Boltzmann machine whose second layer
//! is `M` softmax units tied to the visible weights.
//!
//! For a document of `N` words the joint energy is
//!
//! ```text
//! E(v, h1, h2) = -h1ᵀ W (v + h2) - b·(v + h2) - (M + N) a·h1
//! ```
//!
//! where `v` and `h2` are count vectors summing to `N` and `M`. Because the
//! `M` softmaxes are exchangeable, the second layer is stored as counts.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::math::{binary_entropy, dot, entropy, log_sum_exp, sigmoid, softmax_in_place};
use crate::params::{ModelParams, TrainHyper};
use crate::rng;
use crate::rsm::{self, multinomial, sample_binary, EpochReport, PhaseStats};

/// Default number of second-layer softmax units.
pub const DEFAULT_SOFTMAXES: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct OrsmModel {
    pub params: ModelParams,
    m: u32,
}

impl OrsmModel {
    pub fn new(params: ModelParams, softmaxes: u32) -> Self {
        OrsmModel { params, m: softmaxes }
    }

    /// Number of hidden softmax units `M`; zero means a plain RSM.
    pub fn softmaxes(&self) -> u32 {
        self.m
    }

    pub fn n_hidden(&self) -> usize {
        self.params.n_hidden()
    }

    pub fn vocab_size(&self) -> usize {
        self.params.vocab_size()
    }

    /// Multiplier of the hidden bias for a document of `n` words.
    #[inline]
    fn bias_factor(&self, n: f64) -> f64 {
        n + self.m as f64
    }
}

/// Fully factorised posterior over `(h1, h2)`: Bernoulli means for the
/// topics and one word distribution shared by all `M` softmaxes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GibbsState {
    pub v_counts: Vec<u32>,
    pub h1: Vec<u8>,
    pub h2_counts: Vec<u32>,
}

impl GibbsState {
    pub fn len(&self) -> u32 {
        self.v_counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn orsm_energy(model: &OrsmModel, v: &[u32], h1: &[u8], h2: &[u32]) -> Result<f64> {
    let p = &model.params;
    p.check_visible(v.len())?;
    p.check_hidden(h1.len())?;
    let n: u64 = v.iter().map(|&c| c as u64).sum();
    let m: u64 = h2.iter().map(|&c| c as u64).sum();
    if model.m == 0 && h2.is_empty() {
        // empty second layer
    } else if h2.len() != p.vocab_size() || m != model.m as u64 {
        return Err(Error::shape(format!(
            "second-layer counts must have length K and sum to M={}",
            model.m
        )));
    }
    let combined: Vec<f64> = (0..p.vocab_size())
        .map(|k| v[k] as f64 + h2.get(k).copied().unwrap_or(0) as f64)
        .collect();
    let mut interaction = 0.0;
    let mut hidden = 0.0;
    for (j, &hj) in h1.iter().enumerate() {
        if hj != 0 {
            interaction += dot(p.row(j), &combined);
            hidden += p.hidden_bias[j];
        }
    }
    let visible = dot(&combined, &p.word_bias);
    Ok(-interaction - visible - model.bias_factor(n as f64) * hidden)
}

/// Topic update: `μ1 ← σ(W (v + M μ2) + (M + N) a)`.
pub fn update_topics(model: &OrsmModel, v: &[f64], n: f64, mu2: &[f64]) -> Vec<f64> {
    let m = model.m as f64;
    let input: Vec<f64> = v.iter().zip(mu2).map(|(x, q)| x + m * q).collect();
    let bias = model.bias_factor(n);
    model
        .params
        .project_up(&input)
        .into_iter()
        .zip(&model.params.hidden_bias)
        .map(|(x, a)| sigmoid(x + bias * a))
        .collect()
}

/// Second-layer update: `μ2 ← softmax(Wᵀ μ1 + b)`.
pub fn update_softmaxes(model: &OrsmModel, mu1: &[f64]) -> Vec<f64> {
    rsm::word_probs(&model.params, mu1)
}

/// Fast approximate posterior: one bottom-up pass with the weights scaled by
/// `1 + M/N`. With `M = 0` this is the exact RSM posterior.
pub fn fast_infer(model: &OrsmModel, v: &[f64], n: f64) -> Result<Vec<f64>> {
    if !(n >= 1.0) {
        return Err(Error::invalid("document length must be at least 1"));
    }
    rsm::hidden_given_visible(&model.params, v, n, 1.0 + model.m as f64 / n)
}

pub const DEFAULT_MF_TOL: f64 = 1e-6;
pub const DEFAULT_MF_ITERS: usize = 50;

/// Mean-field inference by alternating layer updates.
///
/// Starts from the fast posterior with `μ2` from one softmax update, then
/// cycles topic and softmax updates until the largest change is below `tol`
/// or `max_iters` cycles ran. Returns the state and the cycles used.
pub fn mean_field_infer(model: &OrsmModel, v: &[f64], max_iters: usize, tol: f64) -> Result<(MeanFieldState, usize)> {
    if max_iters == 0 {
        return Err(Error::invalid("mean-field needs at least one iteration"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("mean-field tolerance must be positive"));
    }
    model.params.check_visible(v.len())?;
    let n: f64 = v.iter().sum();
    fast_infer(model, v, n)?;
    Ok(mean_field_run(model, v, n, max_iters, tol))
}

pub(crate) fn mean_field_run(model: &OrsmModel, v: &[f64], n: f64, max_iters: usize, tol: f64) -> (MeanFieldState, usize) {
    let mut mu1 = rsm::hidden_probs(&model.params, v, n, 1.0 + model.m as f64 / n);
    let mut mu2 = update_softmaxes(model, &mu1);
    let mut used = 0;
    for it in 1..=max_iters {
        used = it;
        let new1 = update_topics(model, v, n, &mu2);
        let new2 = update_softmaxes(model, &new1);
        let delta = max_abs_diff(&new1, &mu1).max(max_abs_diff(&new2, &mu2));
        mu1 = new1;
        mu2 = new2;
        if delta < tol {
            break;
        }
    }
    (MeanFieldState { mu1, mu2 }, used)
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `E_Q[-E] + H(Q)` for the mean-field distribution `mf`; subtracting
/// `ln Z(θ, N)` gives a lower bound on the ordered-word log-probability.
pub fn tractable_bound(model: &OrsmModel, v: &[f64], mf: &MeanFieldState) -> Result<f64> {
    let p = &model.params;
    p.check_visible(v.len())?;
    p.check_hidden(mf.mu1.len())?;
    if mf.mu2.len() != p.vocab_size() {
        return Err(Error::shape("mu2 must have length K"));
    }
    if mf.mu1.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::invalid("mu1 entries must lie in [0, 1]"));
    }
    if mf.mu2.iter().any(|&x| !(x >= 0.0)) || (mf.mu2.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("mu2 must be a probability vector"));
    }
    let n: f64 = v.iter().sum();
    Ok(bound_unchecked(model, v, n, mf))
}

pub(crate) fn bound_unchecked(model: &OrsmModel, v: &[f64], n: f64, mf: &MeanFieldState) -> f64 {
    let p = &model.params;
    let m = model.m as f64;
    let combined: Vec<f64> = v.iter().zip(&mf.mu2).map(|(x, q)| x + m * q).collect();
    let up = p.project_up(&combined);
    let interaction = dot(&up, &mf.mu1);
    let visible = dot(&combined, &p.word_bias);
    let hidden = model.bias_factor(n) * dot(&mf.mu1, &p.hidden_bias);
    let ent1: f64 = mf.mu1.iter().map(|&q| binary_entropy(q)).sum();
    let ent2 = if model.m == 0 { 0.0 } else { m * entropy(&mf.mu2) };
    interaction + visible + hidden + ent1 + ent2
}

/// One alternating Gibbs transition: `h1 | v + h2`, then `v` and `h2`
/// independently from the shared word distribution given `h1`.
pub fn gibbs_transition<R: Rng + ?Sized>(model: &OrsmModel, state: &GibbsState, rng: &mut R) -> Result<GibbsState> {
    let p = &model.params;
    p.check_visible(state.v_counts.len())?;
    let h2_sum: u32 = state.h2_counts.iter().sum();
    let h2_ok = state.h2_counts.len() == p.vocab_size() || (model.m == 0 && state.h2_counts.is_empty());
    if !h2_ok || h2_sum != model.m {
        return Err(Error::shape(format!("second-layer counts must sum to M={}", model.m)));
    }
    Ok(tempered_transition(model, 1.0, state, rng))
}

/// Gibbs transition for the intermediate model whose weights are `beta·W`
/// (biases unchanged).
pub(crate) fn tempered_transition<R: Rng + ?Sized>(model: &OrsmModel, beta: f64, state: &GibbsState, rng: &mut R) -> GibbsState {
    let p = &model.params;
    let n: u32 = state.v_counts.iter().sum();
    let combined: Vec<f64> = (0..p.vocab_size())
        .map(|k| state.v_counts[k] as f64 + state.h2_counts.get(k).copied().unwrap_or(0) as f64)
        .collect();
    let probs = tempered_hidden(model, beta, &combined, n as f64);
    let h1 = sample_binary(&probs, rng);
    let dist = tempered_words(model, beta, &h1);
    let v_counts = multinomial(&dist, n, rng);
    let h2_counts = multinomial(&dist, model.m, rng);
    GibbsState {
        v_counts,
        h1: h1.iter().map(|&x| x as u8).collect(),
        h2_counts,
    }
}

pub(crate) fn tempered_hidden(model: &OrsmModel, beta: f64, combined: &[f64], n: f64) -> Vec<f64> {
    let bias = model.bias_factor(n);
    model
        .params
        .project_up(combined)
        .into_iter()
        .zip(&model.params.hidden_bias)
        .map(|(x, a)| sigmoid(beta * x + bias * a))
        .collect()
}

pub(crate) fn tempered_words(model: &OrsmModel, beta: f64, h1: &[f64]) -> Vec<f64> {
    let scaled: Vec<f64> = h1.iter().map(|h| beta * h).collect();
    let mut logits = model.params.project_down(&scaled);
    softmax_in_place(&mut logits);
    logits
}

/// Natural log of the unnormalised prior mass of `h1`:
/// `(M+N) a·h1 + (N + M) ln Σ_k exp(Wᵀh1 + b)_k`, i.e. the product of the
/// two RBM factors (visible words and hidden softmaxes) with biases.
pub fn log_prior_weight(model: &OrsmModel, n: u32, h1: &[u8]) -> Result<f64> {
    model.params.check_hidden(h1.len())?;
    if h1.iter().any(|&x| x > 1) {
        return Err(Error::invalid("h1 must be binary"));
    }
    let h: Vec<f64> = h1.iter().map(|&x| x as f64).collect();
    let logits = model.params.project_down(&h);
    let lse = log_sum_exp(&logits);
    let nf = n as f64;
    let m = model.m as f64;
    Ok(model.bias_factor(nf) * dot(&model.params.hidden_bias, &h) + nf * lse + m * lse)
}

pub fn prior_weight(model: &OrsmModel, n: u32, h1: &[u8]) -> Result<f64> {
    log_prior_weight(model, n, h1).map(f64::exp)
}

/// Scaled CD pretraining: CD-k where each document's bottom-up pass uses
/// `1 + M/N` times the weights. Identical to [`rsm::train_cd`] with `M` extra
/// units.
pub fn pretrain<R: Rng + ?Sized>(
    model: &mut OrsmModel,
    documents: &[&Document],
    hyper: &TrainHyper,
    epochs: usize,
    rng: &mut R,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    let m = model.m;
    rsm::train_cd(&mut model.params, documents, hyper, epochs, m, rng, on_epoch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SapConfig {
    pub epochs: usize,
    /// Markov chains per training document.
    pub chains_per_doc: usize,
    pub mf_steps: usize,
    pub gibbs_steps: usize,
}

impl Default for SapConfig {
    fn default() -> Self {
        SapConfig {
            epochs: 10,
            chains_per_doc: 1,
            mf_steps: 5,
            gibbs_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SapReport {
    pub epoch: usize,
    pub updates: u64,
    pub learning_rate: f64,
    /// Squared error between word frequencies and the mean-field
    /// reconstruction `softmax(Wᵀμ1 + b)`.
    pub reconstruction_error: f64,
    pub mean_topic_activity: f64,
    /// Mean per-word [`tractable_bound`] on the probe documents, without the
    /// partition function.
    pub probe_bound: f64,
}

fn sap_document(model: &OrsmModel, doc: &Document, config: &SapConfig, rng: &mut rng::ModelRng) -> PhaseStats {
    let p = &model.params;
    let kk = p.vocab_size();
    let ff = p.n_hidden();
    let m = model.m as f64;
    let n = doc.len() as f64;
    let v = doc.dense(kk);
    let (mf, _) = mean_field_run(model, &v, n, config.mf_steps, 0.0);

    let pos_visible: Vec<f64> = v.iter().zip(&mf.mu2).map(|(x, q)| x + m * q).collect();
    let mut neg_hidden = vec![0.0; ff];
    let mut neg_visible = vec![0.0; kk];
    for _ in 0..config.chains_per_doc {
        let mut h1 = sample_binary(&mf.mu1, rng);
        let mut probs = Vec::new();
        let mut combined = Vec::new();
        for step in 0..config.gibbs_steps {
            let dist = rsm::word_probs(p, &h1);
            let vc = multinomial(&dist, doc.len(), rng);
            let hc = multinomial(&dist, model.m, rng);
            combined = vc.iter().zip(&hc).map(|(&a, &b)| (a + b) as f64).collect();
            probs = tempered_hidden(model, 1.0, &combined, n);
            if step + 1 < config.gibbs_steps {
                h1 = sample_binary(&probs, rng);
            }
        }
        // Rao-Blackwellised: topic probabilities instead of sampled states.
        for (acc, x) in neg_hidden.iter_mut().zip(&probs) {
            *acc += x;
        }
        for (acc, x) in neg_visible.iter_mut().zip(&combined) {
            *acc += x;
        }
    }
    let chains = config.chains_per_doc as f64;
    neg_hidden.iter_mut().for_each(|x| *x /= chains);
    neg_visible.iter_mut().for_each(|x| *x /= chains);

    let recon = update_softmaxes(model, &mf.mu1);
    let word_freq: Vec<f64> = v.iter().map(|c| c / n).collect();
    let recon_error = word_freq.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
    PhaseStats {
        pos_hidden: mf.mu1,
        pos_visible,
        neg_hidden,
        neg_visible,
        bias_factor: model.bias_factor(n),
        word_freq,
        recon_error,
    }
}

/// Stochastic-approximation fine-tuning.
///
/// Per minibatch: data statistics from `mf_steps` mean-field cycles; model
/// statistics from per-document chains started at a sample of the
/// mean-field topic posterior and advanced `gibbs_steps` alternating steps.
/// Chains run in parallel on index-derived streams and are reduced in batch
/// order.
///
/// Note the chain statistics pair `h1` with `v + h2` from the same state, so
/// the topic probabilities are evaluated at the final `(v, h2)` draw.
pub fn sap_train<R: Rng + ?Sized>(
    model: &mut OrsmModel,
    documents: &[&Document],
    hyper: &TrainHyper,
    config: &SapConfig,
    probe: &[&Document],
    rng: &mut R,
    mut on_epoch: impl FnMut(&SapReport),
) -> Result<Vec<SapReport>> {
    hyper.validate()?;
    if config.mf_steps == 0 || config.gibbs_steps == 0 || config.chains_per_doc == 0 {
        return Err(Error::invalid("mean-field steps, Gibbs steps and chains must be positive"));
    }
    if documents.is_empty() {
        return Err(Error::invalid("no training documents"));
    }
    let kk = model.vocab_size();
    if documents.iter().chain(probe).any(|d| d.max_word().is_some_and(|w| w as usize >= kk)) {
        return Err(Error::shape(format!("document word id exceeds K={kk}")));
    }
    let mut order: Vec<usize> = (0..documents.len()).collect();
    let mut updates = 0u64;
    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let (mut recon, mut act, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(hyper.minibatch_size) {
            let base = rng::fork_seed(rng);
            let snapshot: &OrsmModel = model;
            let stats: Vec<PhaseStats> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, &d)| sap_document(snapshot, documents[d], config, &mut rng::stream(base, i as u64)))
                .collect();
            let bsz = stats.len() as f64;
            recon += stats.iter().map(|s| s.recon_error).sum::<f64>() / bsz;
            act += stats.iter().map(|s| s.pos_hidden.iter().sum::<f64>()).sum::<f64>() / (bsz * model.n_hidden() as f64);
            rsm::apply_phase_stats(&mut model.params, &stats, hyper, updates)?;
            updates += 1;
            batches += 1;
        }
        let report = SapReport {
            epoch,
            updates,
            learning_rate: hyper.learning_rate_at(updates.saturating_sub(1)),
            reconstruction_error: recon / batches as f64,
            mean_topic_activity: act / batches as f64,
            probe_bound: probe_bound(model, probe),
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}

fn probe_bound(model: &OrsmModel, probe: &[&Document]) -> f64 {
    if probe.is_empty() {
        return f64::NAN;
    }
    let total: f64 = probe
        .par_iter()
        .map(|d| {
            let v = d.dense(model.vocab_size());
            let n = d.len() as f64;
            let (mf, _) = mean_field_run(model, &v, n, DEFAULT_MF_ITERS, DEFAULT_MF_TOL);
            bound_unchecked(model, &v, n, &mf) / n
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / probe.len() as f64
}

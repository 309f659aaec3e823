//! Partition functions and held-out log-probabilities.
//!
//! Exact values come from enumerating the `2^F` topic configurations with
//! words and second-layer softmaxes summed out in closed form. Realistic
//! models use Annealed Importance Sampling from the biases-only model
//! (`W = 0`), whose partition function is closed-form.
//!
//! All log-probabilities here are for the ordered word sequence; add
//! [`crate::math::ln_multinomial_coefficient`] for the bag-of-words event.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::math::{dot, ln_multinomial_coefficient, log_sum_exp, softplus};
use crate::orsm::{self, GibbsState, OrsmModel, DEFAULT_MF_ITERS, DEFAULT_MF_TOL};
use crate::params::ModelParams;
use crate::rng;
use crate::rsm::multinomial;

/// Largest hidden layer the enumeration oracles accept.
pub const MAX_EXACT_HIDDEN: usize = 25;

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct LogAcc {
    max: f64,
    sum: f64,
}

impl LogAcc {
    fn new() -> Self {
        LogAcc {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

fn check_enumerable(params: &ModelParams) -> Result<()> {
    if params.n_hidden() > MAX_EXACT_HIDDEN {
        return Err(Error::invalid(format!(
            "exact enumeration needs F <= {MAX_EXACT_HIDDEN}, got F={}",
            params.n_hidden()
        )));
    }
    Ok(())
}

fn bits(code: u64, f: usize) -> Vec<f64> {
    (0..f).map(|j| ((code >> j) & 1) as f64).collect()
}

/// Visits every binary topic vector with its word logits `Wᵀh + b`.
fn for_each_topic_config(params: &ModelParams, mut visit: impl FnMut(&[f64], &[f64])) {
    let f = params.n_hidden();
    for code in 0..(1u64 << f) {
        let h = bits(code, f);
        let logits = params.project_down(&h);
        visit(&h, &logits);
    }
}

/// `ln Z(θ, N)` for `M` second-layer softmaxes (`M = 0`: RSM), by
/// enumeration of `h1`.
pub fn exact_log_z(params: &ModelParams, m: u32, n: u32) -> Result<f64> {
    check_enumerable(params)?;
    let total = (n + m) as f64;
    let mut acc = LogAcc::new();
    for_each_topic_config(params, |h, logits| {
        acc.add(total * dot(&params.hidden_bias, h) + total * log_sum_exp(logits));
    });
    Ok(acc.value())
}

fn log_unnormalized_enumerated(params: &ModelParams, m: u32, v: &[u32]) -> f64 {
    let n: u32 = v.iter().sum();
    let total = (n + m) as f64;
    let mut acc = LogAcc::new();
    for_each_topic_config(params, |h, logits| {
        let data: f64 = v.iter().zip(logits).map(|(&c, s)| c as f64 * s).sum();
        acc.add(total * dot(&params.hidden_bias, h) + data + m as f64 * log_sum_exp(logits));
    });
    acc.value()
}

/// Exact ordered-word `ln p(v)` with the second layer summed out.
pub fn exact_log_prob(params: &ModelParams, m: u32, v: &[u32]) -> Result<f64> {
    check_enumerable(params)?;
    params.check_visible(v.len())?;
    let n: u32 = v.iter().sum();
    if n == 0 {
        return Err(Error::invalid("document must contain at least one word"));
    }
    Ok(log_unnormalized_enumerated(params, m, v) - exact_log_z(params, m, n)?)
}

/// Exact bag-of-words `ln p(v̂)`, including the multinomial coefficient.
pub fn exact_log_prob_bag(params: &ModelParams, m: u32, v: &[u32]) -> Result<f64> {
    Ok(exact_log_prob(params, m, v)? + ln_multinomial_coefficient(v))
}

/// Gradient of [`exact_log_prob`] with respect to `{W, a, b}`, returned in a
/// [`ModelParams`] container: posterior minus model expectations of the
/// sufficient statistics, both by enumeration.
pub fn exact_log_prob_gradient(params: &ModelParams, m: u32, v: &[u32]) -> Result<ModelParams> {
    check_enumerable(params)?;
    params.check_visible(v.len())?;
    let (f, k) = (params.n_hidden(), params.vocab_size());
    let n: u32 = v.iter().sum();
    let total = (n + m) as f64;
    let mf = m as f64;

    // (log weight, h, softmax of logits) for every configuration
    let mut configs = Vec::with_capacity(1 << f);
    for_each_topic_config(params, |h, logits| {
        let lse = log_sum_exp(logits);
        let pi: Vec<f64> = logits.iter().map(|s| (s - lse).exp()).collect();
        let prior = total * dot(&params.hidden_bias, h);
        let data: f64 = v.iter().zip(logits).map(|(&c, s)| c as f64 * s).sum();
        configs.push((prior + data + mf * lse, prior + total * lse, h.to_vec(), pi));
    });
    let post_norm = log_sum_exp(&configs.iter().map(|c| c.0).collect::<Vec<_>>());
    let model_norm = log_sum_exp(&configs.iter().map(|c| c.1).collect::<Vec<_>>());

    let mut grad = ModelParams::zeros(f, k);
    for (lu, lz, h, pi) in &configs {
        let wu = (lu - post_norm).exp();
        let wz = (lz - model_norm).exp();
        for j in 0..f {
            if h[j] == 0.0 {
                continue;
            }
            grad.hidden_bias[j] += (wu - wz) * total;
            for kk in 0..k {
                grad.weights[j * k + kk] += wu * (v[kk] as f64 + mf * pi[kk]) - wz * total * pi[kk];
            }
        }
        for kk in 0..k {
            grad.word_bias[kk] += wu * (v[kk] as f64 + mf * pi[kk]) - wz * total * pi[kk];
        }
    }
    Ok(grad)
}

/// RSM unnormalised log-probability with the topics summed out:
/// `b·v + Σ_j ln(1 + exp(N a_j + (W v)_j))`.
pub fn rsm_log_unnormalized(params: &ModelParams, v: &[f64]) -> Result<f64> {
    params.check_visible(v.len())?;
    let n: f64 = v.iter().sum();
    let up = params.project_up(v);
    let hidden: f64 = up
        .iter()
        .zip(&params.hidden_bias)
        .map(|(x, a)| softplus(x + n * a))
        .sum();
    Ok(dot(&params.word_bias, v) + hidden)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisConfig {
    /// Inverse temperatures, strictly increasing from exactly 0 to exactly 1.
    pub schedule: Vec<f64>,
    pub n_chains: usize,
    pub sweeps_per_beta: usize,
}

impl AisConfig {
    /// `n_betas` uniformly spaced inverse temperatures.
    pub fn uniform(n_betas: usize, n_chains: usize, sweeps_per_beta: usize) -> Self {
        let schedule = if n_betas < 2 {
            vec![0.0, 1.0]
        } else {
            let last = (n_betas - 1) as f64;
            (0..n_betas).map(|i| i as f64 / last).collect()
        };
        AisConfig {
            schedule,
            n_chains,
            sweeps_per_beta,
        }
    }

    pub fn n_betas(&self) -> usize {
        self.schedule.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.len() < 2 || s[0] != 0.0 || *s.last().unwrap() != 1.0 {
            return Err(Error::invalid("AIS schedule must run from exactly 0 to exactly 1"));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("AIS schedule must be strictly increasing"));
        }
        if self.n_chains == 0 || self.sweeps_per_beta == 0 {
            return Err(Error::invalid("AIS needs at least one chain and one sweep per temperature"));
        }
        Ok(())
    }
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig::uniform(1000, 128, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisEstimate {
    /// Document length this partition function belongs to.
    pub n: u32,
    pub log_z: f64,
    /// Sample variance of the chain log-weights (NaN when read from a cache
    /// file, which does not store it).
    pub log_weight_variance: f64,
    pub effective_sample_size: f64,
    /// Chains discarded for a nonfinite weight.
    pub dropped_chains: usize,
}

/// `ln Z` of the biases-only model at `β = 0`.
pub fn base_log_z(params: &ModelParams, m: u32, n: u32) -> f64 {
    let total = (n + m) as f64;
    let hidden: f64 = params.hidden_bias.iter().map(|&a| softplus(total * a)).sum();
    hidden + total * log_sum_exp(&params.word_bias)
}

/// Topic-marginalised log density of `c = v + h2` at inverse temperature
/// `beta`, minus the `b·c` term, which cancels between temperatures.
fn tempered_log_f(params: &ModelParams, up: &[f64], bias_factor: f64, beta: f64) -> f64 {
    up.iter()
        .zip(&params.hidden_bias)
        .map(|(u, a)| softplus(beta * u + bias_factor * a))
        .sum()
}

fn ais_chain(model: &OrsmModel, n: u32, config: &AisConfig, rng: &mut rng::ModelRng) -> f64 {
    let p = &model.params;
    let m = model.softmaxes();
    let bias_factor = (n + m) as f64;
    let mut base_dist = p.word_bias.clone();
    crate::math::softmax_in_place(&mut base_dist);
    let mut state = GibbsState {
        v_counts: multinomial(&base_dist, n, rng),
        h1: vec![0; p.n_hidden()],
        h2_counts: multinomial(&base_dist, m, rng),
    };
    let betas = &config.schedule;
    let mut log_w = 0.0;
    for i in 1..betas.len() {
        let combined: Vec<f64> = state
            .v_counts
            .iter()
            .zip(&state.h2_counts)
            .map(|(&a, &b)| (a + b) as f64)
            .collect();
        let up = p.project_up(&combined);
        log_w += tempered_log_f(p, &up, bias_factor, betas[i]) - tempered_log_f(p, &up, bias_factor, betas[i - 1]);
        if i + 1 < betas.len() {
            for _ in 0..config.sweeps_per_beta {
                state = orsm::tempered_transition(model, betas[i], &state, rng);
            }
        }
    }
    log_w
}

/// AIS estimate of `ln Z(θ, N)` for the model with `M` softmaxes.
///
/// Chains run in parallel on streams derived from one draw of `rng`; the
/// reduction is in chain order.
pub fn ais_log_z<R: Rng + ?Sized>(params: &ModelParams, m: u32, n: u32, config: &AisConfig, rng: &mut R) -> Result<AisEstimate> {
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("document length must be positive"));
    }
    let model = OrsmModel::new(params.clone(), m);
    let base = rng::fork_seed(rng);
    let weights: Vec<f64> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| ais_chain(&model, n, config, &mut rng::stream(base, c as u64)))
        .collect();
    let kept: Vec<f64> = weights.iter().copied().filter(|w| w.is_finite()).collect();
    let dropped = weights.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Numeric {
            step: 0,
            msg: format!("all {} AIS chains produced nonfinite weights", weights.len()),
        });
    }
    let count = kept.len() as f64;
    let lse = log_sum_exp(&kept);
    let mean = kept.iter().sum::<f64>() / count;
    let variance = kept.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / count;
    let doubled: Vec<f64> = kept.iter().map(|w| 2.0 * w).collect();
    let ess = (2.0 * lse - log_sum_exp(&doubled)).exp().min(count);
    Ok(AisEstimate {
        n,
        log_z: base_log_z(params, m, n) + lse - count.ln(),
        log_weight_variance: variance,
        effective_sample_size: ess,
        dropped_chains: dropped,
    })
}

/// Partition-function estimates keyed by document length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AisCache {
    pub entries: BTreeMap<u32, AisEstimate>,
}

impl AisCache {
    pub fn get(&self, n: u32) -> Result<&AisEstimate> {
        self.entries.get(&n).ok_or(Error::MissingLength(n))
    }

    pub fn insert(&mut self, estimate: AisEstimate) {
        self.entries.insert(estimate.n, estimate);
    }

    pub fn covers(&self, documents: &[&Document]) -> bool {
        documents.iter().all(|d| self.entries.contains_key(&d.len()))
    }

    /// One AIS run per distinct length in `documents` not already cached.
    /// Each length gets its own stream derived from `seed`, so the result
    /// does not depend on which lengths were cached before.
    pub fn fill(&mut self, model: &OrsmModel, documents: &[&Document], config: &AisConfig, seed: u64) -> Result<()> {
        let mut lengths: Vec<u32> = documents.iter().map(|d| d.len()).collect();
        lengths.sort_unstable();
        lengths.dedup();
        for n in lengths {
            if self.entries.contains_key(&n) {
                continue;
            }
            let est = ais_log_z(&model.params, model.softmaxes(), n, config, &mut rng::stream(seed, n as u64))?;
            self.insert(est);
        }
        Ok(())
    }
}

/// Ordered-word log-probability estimate for one document.
///
/// For `M = 0` the topics are summed out exactly; for `M > 0` this is the
/// mean-field bound, so the result is a lower bound given an exact `ln Z`.
pub fn log_prob_estimate(model: &OrsmModel, v: &[f64], estimate: &AisEstimate) -> Result<f64> {
    let n: f64 = v.iter().sum();
    if (n - estimate.n as f64).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "partition function is for N={}, document has N={n}",
            estimate.n
        )));
    }
    if model.softmaxes() == 0 {
        return Ok(rsm_log_unnormalized(&model.params, v)? - estimate.log_z);
    }
    let (mf, _) = orsm::mean_field_infer(model, v, DEFAULT_MF_ITERS, DEFAULT_MF_TOL)?;
    Ok(orsm::tractable_bound(model, v, &mf)? - estimate.log_z)
}

/// Average per-word test perplexity `exp(-1/L Σ_l ln p(v_l) / N_l)`.
///
/// For `M > 0` this is an upper bound.
pub fn perplexity(model: &OrsmModel, documents: &[&Document], cache: &AisCache) -> Result<f64> {
    if documents.is_empty() {
        return Err(Error::invalid("no documents to evaluate"));
    }
    for d in documents {
        cache.get(d.len())?;
    }
    let per_word: Vec<f64> = documents
        .par_iter()
        .map(|d| {
            let v = d.dense(model.vocab_size());
            let est = cache.get(d.len())?;
            Ok(log_prob_estimate(model, &v, est)? / d.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(perplexity_from_log_probs(&per_word))
}

/// `exp(-mean(x))` over per-word log-probabilities.
pub fn perplexity_from_log_probs(per_word: &[f64]) -> f64 {
    (-per_word.iter().sum::<f64>() / per_word.len() as f64).exp()
}

/// Perplexity of the add-one smoothed unigram model fitted on `train`.
pub fn unigram_perplexity(vocab_size: usize, train: &[&Document], test: &[&Document]) -> f64 {
    let logp = crate::params::log_unigram(vocab_size, train);
    let per_word: Vec<f64> = test
        .iter()
        .map(|d| d.counts().iter().map(|&(w, c)| c as f64 * logp[w as usize]).sum::<f64>() / d.len() as f64)
        .collect();
    perplexity_from_log_probs(&per_word)
}

//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TextError;
use crate::artifact;

const LDA_MAGIC: &[u8; 8] = b"SRLDA\0\0\0";
const LDA_VERSION: u32 = 1;

/// Dense token index built from the fitting corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    index: BTreeMap<String, u32>,
    terms: Vec<String>,
    doc_freq: Vec<u32>,
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        let terms: Vec<String> = df.keys().cloned().collect();
        let doc_freq = df.values().copied().collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { index, terms, doc_freq }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }

    fn encode<S: AsRef<str>>(&self, doc: &[S]) -> Vec<u32> {
        doc.iter().filter_map(|t| self.get(t.as_ref())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Symmetric doc-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub sweeps: usize,
    pub infer_sweeps: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { topics: 10, alpha: None, beta: 0.01, sweeps: 1000, infer_sweeps: 100, seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub vocab: Vocabulary,
    /// Row-major `topics x vocab` topic-word distribution.
    phi: Vec<f64>,
}

impl LdaModel {
    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn phi_row(&self, k: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[k * v..(k + 1) * v]
    }

    pub fn phi(&self, k: usize, w: u32) -> f64 {
        self.phi[k * self.vocab.len() + w as usize]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TextError> {
        Ok(artifact::encode(LDA_MAGIC, LDA_VERSION, self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TextError> {
        Ok(artifact::decode(LDA_MAGIC, LDA_VERSION, bytes)?)
    }

    /// Topic proportions for one document (see [`lda_infer`]).
    pub fn infer<S: AsRef<str>>(&self, doc: &[S]) -> Vec<f64> {
        lda_infer(self, doc)
    }
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64], total: f64) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// Fits a topic model on tokenised documents. Documents are expected to come
/// from the training split only.
pub fn lda_fit<S: AsRef<str>>(docs: &[Vec<S>], config: LdaConfig) -> Result<LdaModel, TextError> {
    let k = config.topics;
    if k == 0 {
        return Err(TextError::Config("topics must be >= 1".into()));
    }
    if [config.beta, config.alpha()].iter().any(|p| p.is_nan() || *p <= 0.0) {
        return Err(TextError::Config("priors must be positive".into()));
    }
    let vocab = Vocabulary::build(docs);
    if vocab.is_empty() {
        return Err(TextError::EmptyVocabulary);
    }
    let encoded: Vec<Vec<u32>> = docs.iter().map(|d| vocab.encode(d)).filter(|d| !d.is_empty()).collect();
    if encoded.len() < k {
        return Err(TextError::TooFewDocuments { needed: k, got: encoded.len() });
    }

    let v = vocab.len();
    let alpha = config.alpha();
    let beta = config.beta;
    let vbeta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut doc_topic = vec![0u32; encoded.len() * k];
    let mut topic_word = vec![0u32; k * v];
    let mut topic_total = vec![0u32; k];
    let mut assign: Vec<Vec<u32>> = Vec::with_capacity(encoded.len());
    for (d, doc) in encoded.iter().enumerate() {
        let z: Vec<u32> = doc
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                doc_topic[d * k + t] += 1;
                topic_word[t * v + w as usize] += 1;
                topic_total[t] += 1;
                t as u32
            })
            .collect();
        assign.push(z);
    }

    let mut weights = vec![0.0; k];
    for _ in 0..config.sweeps {
        for (d, doc) in encoded.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = assign[d][i] as usize;
                doc_topic[d * k + old] -= 1;
                topic_word[old * v + w] -= 1;
                topic_total[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (doc_topic[d * k + t] as f64 + alpha) * (topic_word[t * v + w] as f64 + beta)
                        / (topic_total[t] as f64 + vbeta);
                    weights[t] = p;
                    total += p;
                }
                let new = sample_index(&mut rng, &weights, total);
                doc_topic[d * k + new] += 1;
                topic_word[new * v + w] += 1;
                topic_total[new] += 1;
                assign[d][i] = new as u32;
            }
        }
    }

    let mut phi = vec![0.0; k * v];
    for t in 0..k {
        let denom = topic_total[t] as f64 + vbeta;
        for w in 0..v {
            phi[t * v + w] = (topic_word[t * v + w] as f64 + beta) / denom;
        }
    }
    Ok(LdaModel { config, vocab, phi })
}

fn doc_seed(seed: u64, doc: &[u32]) -> u64 {
    // FNV-1a over the encoded tokens, so inference does not depend on call order
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for &w in doc {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Topic proportions for a document under a frozen topic-word distribution.
///
/// Out-of-vocabulary tokens are ignored; a document with no known tokens gets
/// the prior proportions (uniform, as the prior is symmetric).
pub fn lda_infer<S: AsRef<str>>(model: &LdaModel, doc: &[S]) -> Vec<f64> {
    let k = model.topics();
    let alpha = model.config.alpha();
    let words = model.vocab.encode(doc);
    if words.is_empty() {
        return vec![1.0 / k as f64; k];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(model.config.seed, &words));
    let mut counts = vec![0u32; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            counts[t] += 1;
            t
        })
        .collect();
    let sweeps = model.config.infer_sweeps.max(1);
    let burn_in = sweeps / 2;
    let mut acc = vec![0.0; k];
    let mut kept = 0usize;
    let mut weights = vec![0.0; k];
    for sweep in 0..sweeps {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                let p = (counts[t] as f64 + alpha) * model.phi(t, w);
                weights[t] = p;
                total += p;
            }
            let t = sample_index(&mut rng, &weights, total);
            counts[t] += 1;
            z[i] = t;
        }
        if sweep >= burn_in {
            for t in 0..k {
                acc[t] += counts[t] as f64;
            }
            kept += 1;
        }
    }
    let n = words.len() as f64;
    let denom = n + k as f64 * alpha;
    let mut theta: Vec<f64> = acc.iter().map(|&c| (c / kept as f64 + alpha) / denom).collect();
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|x| *x /= s);
    theta
}

//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! Symmetric priors alpha = 50/K and beta = 0.01; estimates are read from the
//! final sample (no averaging across sweeps). Small corpora and desk-scale
//! topic counts keep the dense count matrices cheap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::profiling::{Corpus, ProfilingError, Result};

/// Hyperparameters fixed by convention.
pub const LDA_BETA: f64 = 0.01;

pub fn lda_alpha(k: usize) -> f64 {
    50.0 / k as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TopicModel {
    pub k: usize,
    /// K x V; each row a probability distribution over words
    pub word_topic: Matrix,
    /// D x K; each row a probability distribution over topics
    pub doc_topic: Matrix,
    pub seed: u64,
    pub gibbs_iters: usize,
}

/// Collapsed Gibbs sampling: every token's topic is resampled conditioned on
/// all other assignments, `iters` full sweeps; deterministic in `seed`.
pub fn fit_lda(corpus: &Corpus, k: usize, seed: u64, iters: usize) -> Result<TopicModel> {
    let v = corpus.vocab_size();
    if k == 0 || k > v {
        return Err(ProfilingError::TooManyTopics { k, vocab: v });
    }
    let alpha = lda_alpha(k);
    let beta = LDA_BETA;
    let vbeta = v as f64 * beta;
    let d = corpus.n_documents();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_dk = vec![vec![0f64; k]; d];
    let mut n_kw = vec![vec![0f64; v]; k];
    let mut n_k = vec![0f64; k];
    // topic assignment per (doc, token position)
    let mut z: Vec<Vec<usize>> = corpus
        .documents
        .iter()
        .map(|doc| doc.tokens.iter().map(|_| 0usize).collect())
        .collect();

    for (di, doc) in corpus.documents.iter().enumerate() {
        for (ti, &w) in doc.tokens.iter().enumerate() {
            let topic = rng.gen_range(0..k);
            z[di][ti] = topic;
            n_dk[di][topic] += 1.0;
            n_kw[topic][w] += 1.0;
            n_k[topic] += 1.0;
        }
    }

    let mut probs = vec![0f64; k];
    for _ in 0..iters {
        for (di, doc) in corpus.documents.iter().enumerate() {
            for (ti, &w) in doc.tokens.iter().enumerate() {
                let old = z[di][ti];
                n_dk[di][old] -= 1.0;
                n_kw[old][w] -= 1.0;
                n_k[old] -= 1.0;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (n_dk[di][t] + alpha) * (n_kw[t][w] + beta) / (n_k[t] + vbeta);
                    probs[t] = p;
                    total += p;
                }
                let mut mark = rng.gen::<f64>() * total;
                let mut new = k - 1;
                for (t, &p) in probs.iter().enumerate() {
                    if mark < p {
                        new = t;
                        break;
                    }
                    mark -= p;
                }

                z[di][ti] = new;
                n_dk[di][new] += 1.0;
                n_kw[new][w] += 1.0;
                n_k[new] += 1.0;
            }
        }
    }

    let mut word_topic = Matrix::zeros(k, v);
    for t in 0..k {
        for w in 0..v {
            word_topic.set(t, w, (n_kw[t][w] + beta) / (n_k[t] + vbeta));
        }
    }
    let mut doc_topic = Matrix::zeros(d, k);
    for (di, doc) in corpus.documents.iter().enumerate() {
        let len = doc.tokens.len() as f64;
        for t in 0..k {
            doc_topic.set(di, t, (n_dk[di][t] + alpha) / (len + k as f64 * alpha));
        }
    }

    Ok(TopicModel {
        k,
        word_topic,
        doc_topic,
        seed,
        gibbs_iters: iters,
    })
}

//! Reviewer group profiles.
//!
//! Users become "documents" whose words are the categories of the venues they
//! review. A topic model over those documents embeds each user in topic
//! space; k-means over the embedding yields discrete group profiles. Topic
//! count and group count are selected by UMass coherence and the silhouette
//! heuristic respectively.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cluster;
use crate::ingest::Dataset;
use crate::lda::{self, TopicModel};
use crate::linalg::Matrix;
use crate::seeds;

#[derive(Debug, Error)]
pub enum ProfilingError {
    #[error("corpus is empty (no user has any category token)")]
    EmptyCorpus,
    #[error("topic count {k} exceeds vocabulary size {vocab}")]
    TooManyTopics { k: usize, vocab: usize },
    #[error("top_n must be at least 2, got {0}")]
    BadTopN(usize),
    #[error("top word {word:?} has zero document count")]
    ZeroDocCount { word: String },
    #[error("need at least {need} users, have {have}")]
    TooFewUsers { need: usize, have: usize },
    #[error("empty search range [{lo}, {hi}]")]
    EmptyRange { lo: usize, hi: usize },
}

pub type Result<T> = std::result::Result<T, ProfilingError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub user_id: String,
    /// vocabulary indices, ascending (bag semantics: duplicates kept)
    pub tokens: Vec<usize>,
}

/// Canonical corpus: vocabulary indexed lexicographically, documents sorted
/// by user id, tokens sorted within each document. The canonical form makes
/// every downstream fit independent of input record order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: BTreeMap<String, usize>,
    pub vocab_list: Vec<String>,
}

impl Corpus {
    /// Build the canonical corpus from raw (user, token bag) pairs; empty
    /// bags are dropped.
    pub fn from_raw(docs: Vec<(String, Vec<String>)>) -> Result<Corpus> {
        let vocab_set: BTreeSet<&String> = docs.iter().flat_map(|(_, ts)| ts.iter()).collect();
        let vocab_list: Vec<String> = vocab_set.into_iter().cloned().collect();
        let vocabulary: BTreeMap<String, usize> = vocab_list
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut documents: Vec<Document> = docs
            .into_iter()
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(user_id, ts)| {
                let mut tokens: Vec<usize> = ts.iter().map(|t| vocabulary[t]).collect();
                tokens.sort_unstable();
                Document { user_id, tokens }
            })
            .collect();
        documents.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        if documents.is_empty() {
            return Err(ProfilingError::EmptyCorpus);
        }
        Ok(Corpus {
            documents,
            vocabulary,
            vocab_list,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_list.len()
    }

    pub fn n_documents(&self) -> usize {
        self.documents.len()
    }
}

/// One document per user holding the categories of every venue they reviewed
/// (duplicates kept); users with no reviews are omitted.
pub fn build_documents(dataset: &Dataset) -> Result<Corpus> {
    let mut bags: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for review in &dataset.reviews {
        let Some(venue) = dataset.venues.get(&review.venue_id) else {
            continue;
        };
        bags.entry(review.user_id.as_str())
            .or_default()
            .extend(venue.categories.iter().cloned());
    }
    Corpus::from_raw(
        bags.into_iter()
            .map(|(u, ts)| (u.to_string(), ts))
            .collect(),
    )
}

/// Lowercase, strip digits and special characters, collapse whitespace runs
/// to single underscores. Returns None when nothing survives.
pub fn normalize_token(token: &str) -> Option<String> {
    let cleaned: String = token
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphabetic() {
                c
            } else if c.is_whitespace() {
                ' '
            } else {
                // digits and special characters vanish
                '\u{0}'
            }
        })
        .filter(|&c| c != '\u{0}')
        .collect();
    let joined = cleaned.split_whitespace().collect::<Vec<_>>().join("_");
    if joined.is_empty() {
        None
    } else {
        Some(joined)
    }
}

/// Apply [`normalize_token`] to every token; emptied tokens and documents
/// are dropped and the vocabulary is rebuilt.
pub fn preprocess(corpus: &Corpus) -> Result<Corpus> {
    let docs: Vec<(String, Vec<String>)> = corpus
        .documents
        .iter()
        .map(|d| {
            let tokens: Vec<String> = d
                .tokens
                .iter()
                .filter_map(|&t| normalize_token(&corpus.vocab_list[t]))
                .collect();
            (d.user_id.clone(), tokens)
        })
        .collect();
    Corpus::from_raw(docs)
}

/// Per-document sets of distinct word indices, for coherence counting.
fn document_word_sets(corpus: &Corpus) -> Vec<BTreeSet<usize>> {
    corpus
        .documents
        .iter()
        .map(|d| d.tokens.iter().copied().collect())
        .collect()
}

/// UMass coherence per topic and its mean over topics.
///
/// For each topic's `top_n` most probable words (ties to the smaller word
/// index), score = sum over ordered pairs (i < j) of
/// `ln((codoc(w_i, w_j) + 1) / doc_count(w_j))`, with counts taken from the
/// training corpus.
pub fn umass_coherence(
    model: &TopicModel,
    corpus: &Corpus,
    top_n: usize,
) -> Result<(Vec<f64>, f64)> {
    if top_n < 2 {
        return Err(ProfilingError::BadTopN(top_n));
    }
    let doc_sets = document_word_sets(corpus);
    let mut doc_count = vec![0usize; corpus.vocab_size()];
    for set in &doc_sets {
        for &w in set {
            doc_count[w] += 1;
        }
    }
    let codoc = |a: usize, b: usize| -> usize {
        doc_sets
            .iter()
            .filter(|s| s.contains(&a) && s.contains(&b))
            .count()
    };

    let n = top_n.min(corpus.vocab_size());
    let mut scores = Vec::with_capacity(model.k);
    for topic in 0..model.k {
        let mut order: Vec<usize> = (0..corpus.vocab_size()).collect();
        order.sort_by(|&a, &b| {
            model
                .word_topic
                .get(topic, b)
                .partial_cmp(&model.word_topic.get(topic, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        let top = &order[..n];
        let mut score = 0.0;
        for i in 0..top.len() {
            for j in (i + 1)..top.len() {
                let dj = doc_count[top[j]];
                if dj == 0 {
                    return Err(ProfilingError::ZeroDocCount {
                        word: corpus.vocab_list[top[j]].clone(),
                    });
                }
                score += ((codoc(top[i], top[j]) + 1) as f64 / dj as f64).ln();
            }
        }
        scores.push(score);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok((scores, mean))
}

/// Mean coherence for every topic count in `[k_min, k_max]`; the winner is
/// the argmax, ties to the smallest count. Returns (K*, per-K table).
pub fn select_topic_count(
    corpus: &Corpus,
    k_min: usize,
    k_max: usize,
    seed: u64,
    gibbs_iters: usize,
    top_n: usize,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if k_min > k_max || k_min == 0 {
        return Err(ProfilingError::EmptyRange { lo: k_min, hi: k_max });
    }
    let mut table = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in k_min..=k_max.min(corpus.vocab_size()) {
        let model = lda::fit_lda(corpus, k, seeds::derive_seed(seed, &format!("lda_k{k}")), gibbs_iters)?;
        let (_, mean) = umass_coherence(&model, corpus, top_n)?;
        table.push((k, mean));
        match best {
            Some((_, b)) if mean <= b => {}
            _ => best = Some((k, mean)),
        }
    }
    let (k_star, _) = best.ok_or(ProfilingError::EmptyRange { lo: k_min, hi: k_max })?;
    Ok((k_star, table))
}

/// Users embedded in topic space: row i of `matrix` is `users[i]`'s
/// doc-topic distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicEmbedding {
    pub users: Vec<String>,
    pub matrix: Matrix,
}

impl TopicEmbedding {
    pub fn from_model(model: &TopicModel, corpus: &Corpus) -> TopicEmbedding {
        TopicEmbedding {
            users: corpus.documents.iter().map(|d| d.user_id.clone()).collect(),
            matrix: model.doc_topic.clone(),
        }
    }
}

/// Discrete user groups in topic space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupModel {
    pub k: usize,
    pub centroids: Matrix,
    pub assignment: BTreeMap<String, usize>,
    /// silhouette score of the selected k
    pub silhouette: f64,
}

/// K-means over the embedding for every k in `[k_min, k_max]`, selecting the
/// best mean silhouette (ties to the smallest k). Also returns the per-k
/// silhouette table.
pub fn cluster_users(
    embedding: &TopicEmbedding,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<(GroupModel, Vec<(usize, f64)>)> {
    let n = embedding.users.len();
    if n < 2 || n <= k_min {
        return Err(ProfilingError::TooFewUsers {
            need: k_min + 1,
            have: n,
        });
    }
    if k_min < 2 || k_min > k_max {
        return Err(ProfilingError::EmptyRange { lo: k_min, hi: k_max });
    }
    let hi = k_max.min(n - 1);
    let mut table = Vec::new();
    let mut best: Option<(usize, f64, cluster::KMeansFit)> = None;
    for k in k_min..=hi {
        let fit = cluster::kmeans(
            &embedding.matrix,
            k,
            seeds::derive_seed(seed, &format!("kmeans_k{k}")),
            10,
            300,
        );
        let sil = cluster::mean_silhouette(&embedding.matrix, &fit.assignment, k);
        table.push((k, sil));
        match &best {
            Some((_, b, _)) if sil <= *b => {}
            _ => best = Some((k, sil, fit)),
        }
    }
    let (k_star, sil, fit) = best.ok_or(ProfilingError::EmptyRange { lo: k_min, hi })?;
    let assignment: BTreeMap<String, usize> = embedding
        .users
        .iter()
        .cloned()
        .zip(fit.assignment.iter().copied())
        .collect();
    Ok((
        GroupModel {
            k: k_star,
            centroids: fit.centroids,
            assignment,
            silhouette: sil,
        },
        table,
    ))
}

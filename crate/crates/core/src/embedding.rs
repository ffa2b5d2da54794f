//! Text embedding providers used by the column index.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;
use thiserror::Error;

use crate::http::{EndpointConfig, HttpError, JsonClient};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("embedding response was malformed: {0}")]
    Malformed(String),
}

/// Maps texts to equal-dimension real vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier written into index files; a cached index built by a
    /// provider with a different name is rebuilt rather than reused.
    fn name(&self) -> String;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed(texts)
    }
}

/// Offline embedder: lowercase character trigrams hashed into a fixed number
/// of buckets, TF-IDF weighted and L2-normalised.
///
/// Without [`HashingEmbedder::fit`] every bucket has IDF 1.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    idf: Option<Vec<f32>>,
    default_idf: f32,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 4096;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder {
            dim,
            idf: None,
            default_idf: 1.0,
        }
    }

    /// Learns smoothed IDF weights, `ln((1 + N) / (1 + df)) + 1`, from a corpus.
    pub fn fit(dim: usize, corpus: &[String]) -> Self {
        let mut embedder = HashingEmbedder::new(dim);
        let mut df = vec![0u32; dim];
        for text in corpus {
            let mut seen = vec![false; dim];
            for bucket in embedder.buckets(text) {
                if !seen[bucket] {
                    seen[bucket] = true;
                    df[bucket] += 1;
                }
            }
        }
        let n = corpus.len() as f64;
        let idf = df
            .iter()
            .map(|&d| (((1.0 + n) / (1.0 + f64::from(d))).ln() + 1.0) as f32)
            .collect();
        embedder.idf = Some(idf);
        embedder.default_idf = ((1.0 + n).ln() + 1.0) as f32;
        embedder
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn buckets(&self, text: &str) -> Vec<usize> {
        trigrams(text)
            .iter()
            .map(|g| {
                let mut h = FnvHasher::default();
                h.write(g.as_bytes());
                (h.finish() % self.dim as u64) as usize
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f64; self.dim];
        for bucket in self.buckets(text) {
            v[bucket] += 1.0;
        }
        for (i, x) in v.iter_mut().enumerate() {
            if *x != 0.0 {
                let idf = self.idf.as_ref().map_or(self.default_idf, |w| w[i]);
                *x *= f64::from(idf);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; self.dim]
        }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> String {
        format!("hashing-trigram-tfidf-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Character trigrams of the lowercased, whitespace-collapsed text padded with
/// one space on each side. Texts shorter than three characters yield a single
/// gram.
pub fn trigrams(text: &str) -> Vec<String> {
    let normalized = text
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if normalized.is_empty() {
        return Vec::new();
    }
    let padded: Vec<char> = format!(" {normalized} ").chars().collect();
    if padded.len() < 3 {
        return vec![padded.iter().collect()];
    }
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Embeddings endpoint speaking the OpenAI `/embeddings` wire format.
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    batch_size: usize,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

impl RemoteEmbedder {
    pub fn new(config: EndpointConfig, model: impl Into<String>) -> Result<Self, EmbedError> {
        Ok(RemoteEmbedder {
            client: JsonClient::new(config)?,
            model: model.into(),
            batch_size: 256,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let response = self.client.post(&EmbeddingRequest {
            model: &self.model,
            input: texts,
        })?;
        let data = response
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or_else(|| EmbedError::Malformed(format!("{}: missing data array", self.client.url())))?;
        let mut out: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(|i| i.as_u64())
                .map_or(pos, |i| i as usize);
            let vector = item
                .get("embedding")
                .and_then(|e| e.as_array())
                .ok_or_else(|| EmbedError::Malformed("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| EmbedError::Malformed("non-numeric embedding".into()))?;
            let slot = out
                .get_mut(index)
                .ok_or_else(|| EmbedError::Malformed(format!("index {index} out of range")))?;
            *slot = Some(vector);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| EmbedError::Malformed(format!("no embedding for input {i}"))))
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            out.extend(self.embed_batch(batch)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing::ScriptedServer;
    use crate::http::RetryPolicy;
    use std::time::Duration;

    #[test]
    fn trigrams_pad_and_lowercase() {
        assert_eq!(trigrams("Ab"), vec![" ab", "ab "]);
        assert_eq!(trigrams("  "), Vec::<String>::new());
        assert_eq!(trigrams("x"), vec![" x "]);
        assert_eq!(trigrams("a  B").len(), 3);
    }

    #[test]
    fn vectors_are_unit_length_or_zero() {
        let e = HashingEmbedder::fit(512, &["alpha beta".into(), "gamma".into()]);
        let v = e.embed_one("alpha");
        let norm: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!(e.embed_one("").iter().all(|x| *x == 0.0));
        assert_eq!(v.len(), 512);
    }

    #[test]
    fn identical_texts_embed_identically() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed_one("customer age"), e.embed_one("Customer   AGE"));
    }

    #[test]
    fn remote_embedder_orders_by_index_and_sends_model() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let server = ScriptedServer::start(vec![(500, "{}".into()), (200, body.into())]);
        let config = EndpointConfig {
            url: server.url.clone(),
            api_key: Some("k".into()),
            timeout: Duration::from_secs(5),
            retry: RetryPolicy {
                max_attempts: 3,
                initial_backoff: Duration::from_millis(1),
            },
        };
        let embedder = RemoteEmbedder::new(config, "text-embedding-3-large").unwrap();
        let out = embedder.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let requests = server.finish();
        let sent: serde_json::Value = serde_json::from_str(&requests[1]).unwrap();
        assert_eq!(sent["model"], "text-embedding-3-large");
        assert_eq!(sent["input"], serde_json::json!(["a", "b"]));
    }
}

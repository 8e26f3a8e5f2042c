use std::collections::BTreeSet;

/// Maps text to a unit-norm vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f32>;
    fn dim(&self) -> usize;
}

/// Offline embedder: each token hashes (FNV-1a, seeded) to a signed coordinate.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { seed: 0x5eed, dim: 64 }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Vec<f32> {
        let dim = self.dim.max(1);
        let mut v = vec![0f64; dim];
        for tok in tokenize(text) {
            let h = fnv1a(self.seed, tok.as_bytes());
            for k in 0..2u64 {
                let hk = fnv1a(h ^ k, &k.to_le_bytes());
                let sign = if hk >> 63 == 1 { -1.0 } else { 1.0 };
                v[(hk % dim as u64) as usize] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut e = vec![0f32; dim];
            e[0] = 1.0;
            return e;
        }
        v.iter().map(|x| (x / norm) as f32).collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "because",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has",
    "have", "he", "her", "here", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me",
    "min", "more", "my", "no", "not", "of", "on", "or", "our", "out", "she", "should", "so", "some", "than",
    "that", "the", "their", "them", "then", "there", "they", "this", "to", "today", "too", "up", "us", "was",
    "we", "were", "what", "when", "which", "while", "who", "why", "will", "with", "would", "you", "your",
];

/// Lowercase word tokens; `_` is kept so link ids stay whole.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Token set minus stopwords and bare numbers.
pub fn extract_keywords(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .filter(|t| !STOPWORDS.contains(&t.as_str()) && !t.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashEmbedder::default();
        for text in ["", "severe delay on Ave_2_link_2", "coffee"] {
            let v = e.embed(text);
            let n: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert_eq!(v, e.embed(text));
        }
    }

    #[test]
    fn keywords_drop_stopwords() {
        let k = extract_keywords("The metro was late at 8 on Ave_2_link_2");
        assert!(k.contains("metro") && k.contains("late") && k.contains("ave_2_link_2"));
        assert!(!k.contains("the") && !k.contains("8"));
    }
}

//! Generated corpora with known topic structure, for tests and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RawDocument;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub words_per_topic: usize,
    pub docs_per_topic: usize,
    pub tokens_per_doc: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics: 2,
            words_per_topic: 10,
            docs_per_topic: 100,
            tokens_per_doc: 30,
            seed: 0,
        }
    }
}

fn letters(mut n: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Word `i` of topic `t`; topics never share words and every word survives
/// [`tokenize`](super::tokenize) unchanged.
pub fn topic_word(topic: usize, i: usize) -> String {
    format!("topic{}word{}", letters(topic), letters(i))
}

/// Each document draws `tokens_per_doc` tokens uniformly from its topic's
/// words. Documents are labelled by topic and ordered topic by topic.
pub fn topic_corpus(cfg: &SyntheticConfig) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut docs = Vec::with_capacity(cfg.topics * cfg.docs_per_topic);
    for t in 0..cfg.topics {
        for d in 0..cfg.docs_per_topic {
            let words: Vec<String> = (0..cfg.tokens_per_doc)
                .map(|_| topic_word(t, rng.gen_range(0..cfg.words_per_topic)))
                .collect();
            docs.push(RawDocument {
                doc_id: format!("{}/{d:05}", letters(t)),
                label: Some(t as u32),
                text: words.join(" "),
            });
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn words_are_disjoint_and_tokenizable() {
        let a = topic_word(0, 3);
        assert_eq!(tokenize(&a), vec![a.clone()]);
        assert_ne!(topic_word(0, 1), topic_word(1, 1));
        assert_eq!(letters(26), "ba");
    }

    #[test]
    fn corpus_shape() {
        let docs = topic_corpus(&SyntheticConfig::default());
        assert_eq!(docs.len(), 200);
        assert_eq!(docs.iter().filter(|d| d.label == Some(1)).count(), 100);
        assert_eq!(tokenize(&docs[0].text).len(), 30);
        assert_eq!(docs, topic_corpus(&SyntheticConfig::default()));
    }
}

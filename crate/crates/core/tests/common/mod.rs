#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topicmine::corpus::Document;

const SYLLABLES: [&str; 16] = [
    "ka", "zo", "mi", "tu", "re", "po", "vi", "lu", "sa", "ne", "go", "fi", "da", "bo", "xe", "hu",
];

/// A pronounceable pseudo-word, unique per index, that the stemmer and
/// stop lists leave alone.
pub fn word(i: usize) -> String {
    let mut s = String::from("q");
    let mut x = i;
    loop {
        s.push_str(SYLLABLES[x % 16]);
        x /= 16;
        if x == 0 {
            break;
        }
    }
    s.push('x');
    s
}

pub fn doc(id: usize, tokens: Vec<String>) -> Document {
    Document {
        id,
        raw: tokens.join(" "),
        tokens,
    }
}

pub struct Planted {
    pub docs: Vec<Document>,
    /// Planted topic per document, `None` for scatter.
    pub labels: Vec<Option<usize>>,
}

impl Planted {
    pub fn lines(&self) -> String {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&d.raw);
            out.push('\n');
        }
        out
    }
}

/// Topic `t` owns `own[t]` words; consecutive topics share `shared` extra
/// words; a background pool of `background` words is common to all.
pub struct TopicSpec {
    pub topics: usize,
    pub docs_per_topic: Vec<usize>,
    pub own: Vec<usize>,
    pub shared: usize,
    pub background: usize,
    pub len: (usize, usize),
    /// Probability that a token comes from the topic's own words.
    pub p_own: f64,
    pub p_shared: f64,
    pub scatter: usize,
    /// Scatter documents draw from this many rare words (plus the
    /// background at the topics' background rate); 0 means the whole
    /// vocabulary.
    pub scatter_pool: usize,
}

pub fn planted(spec: &TopicSpec, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let own_start: Vec<usize> = spec
        .own
        .iter()
        .scan(0, |acc, &o| {
            let s = *acc;
            *acc += o;
            Some(s)
        })
        .collect();
    let shared_base: usize = spec.own.iter().sum();
    let bg_base = shared_base + spec.topics * spec.shared;
    let total_words = bg_base + spec.background;
    let mut entries = Vec::new();
    for t in 0..spec.topics {
        for _ in 0..spec.docs_per_topic[t] {
            let len = rng.gen_range(spec.len.0..=spec.len.1);
            let tokens = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < spec.p_own {
                        word(own_start[t] + rng.gen_range(0..spec.own[t]))
                    } else if u < spec.p_own + spec.p_shared && spec.shared > 0 {
                        // shared with the next topic or the previous one
                        let side = if rng.gen_bool(0.5) {
                            t
                        } else {
                            (t + spec.topics - 1) % spec.topics
                        };
                        word(shared_base + side * spec.shared + rng.gen_range(0..spec.shared))
                    } else {
                        word(bg_base + rng.gen_range(0..spec.background.max(1)))
                    }
                })
                .collect();
            entries.push((tokens, Some(t)));
        }
    }
    for _ in 0..spec.scatter {
        let len = rng.gen_range(spec.len.0..=spec.len.1);
        let p_bg = 1.0 - spec.p_own - spec.p_shared;
        let tokens = (0..len)
            .map(|_| {
                if spec.scatter_pool == 0 {
                    word(rng.gen_range(0..total_words))
                } else if rng.gen_bool(p_bg.clamp(0.0, 1.0)) {
                    word(bg_base + rng.gen_range(0..spec.background.max(1)))
                } else {
                    word(total_words + rng.gen_range(0..spec.scatter_pool))
                }
            })
            .collect();
        entries.push((tokens, None));
    }
    entries.shuffle(&mut rng);
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (i, (tokens, l)) in entries.into_iter().enumerate() {
        docs.push(doc(i, tokens));
        labels.push(l);
    }
    Planted { docs, labels }
}

//! Seeded generator of Arabic-looking multi-label tweets.
//!
//! Each label owns a small lexicon of words that are already in normalized
//! form; a tweet draws one cue word per active label plus filler words, so
//! the labels are recoverable from the tokens.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Example, NUM_LABELS};

pub const LEXICON: [[&str; 4]; NUM_LABELS] = [
    ["غضب", "زعل", "عصبي", "قهر"],
    ["انتظار", "ترقب", "متشوق", "قادم"],
    ["قرف", "مقرف", "اشمئزاز", "بشع"],
    ["خوف", "رعب", "قلق", "مرعب"],
    ["فرح", "سعيد", "ضحك", "بهجه"],
    ["حب", "عشق", "غرام", "حبيبي"],
    ["تفاؤل", "امل", "خير", "مستقبل"],
    ["تشاؤم", "ياس", "فشل", "مستحيل"],
    ["حزن", "بكاء", "دموع", "الم"],
    ["مفاجاه", "صدمه", "عجيب", "مدهش"],
    ["ثقه", "صادق", "امين", "اعتماد"],
    ["خبر", "مباراه", "طقس", "جدول"],
];

pub const FILLER: [&str; 10] = [
    "هذا", "كان", "جدا", "الناس", "بعد", "عندما", "نحن", "هناك", "لكن", "ايضا",
];

/// Noise that the preprocessing pipeline is expected to remove or rewrite.
const DECORATIONS: [&str; 9] = ["!!", "؟", "...", "😂", "😡", "😢", "lol", "2024", "#"];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Independent Bernoulli rate per label.
    pub prevalence: [f64; NUM_LABELS],
    pub seed: u64,
    /// Label `NUM_LABELS - 1` is switched on when no label was drawn.
    pub force_one_label: bool,
    pub decorate: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 100,
            prevalence: [
                0.30, 0.12, 0.15, 0.15, 0.22, 0.20, 0.20, 0.15, 0.28, 0.06, 0.08, 0.03,
            ],
            seed: 2018,
            force_one_label: true,
            decorate: false,
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut labels = vec![0u8; NUM_LABELS];
        for (l, &p) in labels.iter_mut().zip(&cfg.prevalence) {
            *l = rng.random_bool(p.clamp(0.0, 1.0)) as u8;
        }
        if cfg.force_one_label && labels.iter().all(|&v| v == 0) {
            labels[NUM_LABELS - 1] = 1;
        }

        let mut words: Vec<String> = Vec::new();
        for (c, _) in labels.iter().enumerate().filter(|(_, &v)| v == 1) {
            words.push(LEXICON[c].choose(&mut rng).unwrap().to_string());
        }
        for _ in 0..rng.random_range(1..=3) {
            words.push(FILLER.choose(&mut rng).unwrap().to_string());
        }
        words.shuffle(&mut rng);
        if cfg.decorate && rng.random_bool(0.6) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, DECORATIONS.choose(&mut rng).unwrap().to_string());
        }
        examples.push(Example {
            id: format!("syn-{i:05}"),
            raw_text: words.join(" "),
            labels,
        });
    }
    Dataset::new(examples).expect("generated labels have schema width")
}

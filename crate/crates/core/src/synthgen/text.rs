//! Free-text fields assembled from the gazetteer, keyword and filler pools.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::textmine::builtin_terms;

const FILLER: &[&str] = &[
    "near", "outside", "next", "behind", "opposite", "corner", "entrance", "side", "back", "front", "every", "night",
    "morning", "evening", "usually", "often", "seen", "there", "around", "most", "days", "weeks", "left", "right",
    "main", "old", "big", "small", "green", "by", "the", "of", "and",
];
const APPEARANCE: &[&str] = &[
    "man", "woman", "person", "young", "older", "tall", "short", "slim", "beard", "grey", "dark", "blonde", "hair",
    "wearing", "black", "blue", "red", "green", "coat", "jacket", "hoodie", "jeans", "hat", "scarf", "boots",
    "trainers", "glasses", "rucksack", "thin", "white", "brown", "cap",
];
const CONCERNS: &[&str] = &[
    "looks",
    "unwell",
    "cold",
    "thin",
    "tired",
    "worried",
    "vulnerable",
    "alone",
    "wet",
    "hungry",
    "limping",
    "seems",
    "confused",
    "quiet",
    "needs",
    "help",
    "support",
    "struggling",
    "injured",
    "weak",
];

pub struct TextPools {
    location: Vec<&'static str>,
    sleep: Vec<&'static str>,
    beg: Vec<&'static str>,
    activity: Vec<&'static str>,
}

/// What the generator decided about an alert before writing its text.
#[derive(Debug, Clone, Copy)]
pub struct TextPlan {
    /// Level of descriptive detail in [0, 1].
    pub detail: f64,
    pub sleeping: bool,
    pub begging: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertText {
    pub location: Option<String>,
    pub appearance: Option<String>,
    pub concerns: Option<String>,
}

impl AlertText {
    pub fn word_count(&self) -> usize {
        [&self.location, &self.appearance, &self.concerns]
            .iter()
            .map(|f| f.as_deref().map_or(0, |s| s.split_whitespace().count()))
            .sum()
    }
}

impl TextPools {
    pub fn builtin() -> Self {
        let mut t = builtin_terms();
        let mut take = |k: &str| t.remove(k).unwrap_or_default();
        Self { location: take("location"), sleep: take("sleep"), beg: take("beg"), activity: take("activity") }
    }

    fn pad(&self, rng: &mut ChaCha8Rng, words: &mut Vec<String>, target: usize, pool: &[&str]) {
        while words.len() < target {
            let w = pool.choose(rng).expect("non-empty pool");
            let at = rng.random_range(0..=words.len());
            words.insert(at, (*w).to_string());
        }
    }

    fn push_term(words: &mut Vec<String>, term: &str) {
        words.extend(term.split_whitespace().map(str::to_string));
    }

    pub fn write(&self, rng: &mut ChaCha8Rng, plan: TextPlan) -> AlertText {
        let d = plan.detail;
        let count =
            |rng: &mut ChaCha8Rng, mean: f64| Poisson::new(mean.max(0.1)).expect("positive mean").sample(rng) as usize;

        let location = if rng.random_bool(0.03) {
            None
        } else {
            let mut w = Vec::new();
            Self::push_term(&mut w, self.location.choose(rng).expect("terms"));
            if rng.random_bool(0.2 + 0.6 * d) {
                Self::push_term(&mut w, self.location.choose(rng).expect("terms"));
            }
            if plan.sleeping {
                Self::push_term(&mut w, self.sleep.choose(rng).expect("terms"));
            }
            let target = w.len() + count(rng, 1.0 + 9.0 * d);
            self.pad(rng, &mut w, target, FILLER);
            Some(w.join(" "))
        };

        let appearance = if rng.random_bool(0.15 * (1.0 - d)) {
            None
        } else {
            let mut w = Vec::new();
            let target = 1 + count(rng, 1.0 + 9.0 * d);
            self.pad(rng, &mut w, target, APPEARANCE);
            Some(w.join(" "))
        };

        let concerns = if !plan.begging && rng.random_bool(0.25 + 0.4 * (1.0 - d)) {
            None
        } else {
            let mut w = Vec::new();
            if plan.sleeping && rng.random_bool(0.5) {
                Self::push_term(&mut w, self.sleep.choose(rng).expect("terms"));
            }
            if plan.begging {
                Self::push_term(&mut w, self.beg.choose(rng).expect("terms"));
            }
            if rng.random_bool(0.5) {
                Self::push_term(&mut w, self.activity.choose(rng).expect("terms"));
            }
            let target = w.len() + count(rng, 0.5 + 7.0 * d);
            self.pad(rng, &mut w, target.max(1), CONCERNS);
            Some(w.join(" "))
        };

        AlertText { location, appearance, concerns }
    }
}

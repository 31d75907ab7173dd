//! Randomly generated traveler profiles.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const VOCAB_SOURCE: &str = include_str!("../../assets/profile_vocab.txt");

/// Parsed profile vocabulary asset.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    sections: BTreeMap<String, Vec<String>>,
    traits: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.to_string());
                sections.entry(name.to_string()).or_default();
                continue;
            }
            let section = current
                .as_ref()
                .ok_or_else(|| format!("line {}: value outside a section", n + 1))?;
            sections
                .get_mut(section)
                .expect("inserted on header")
                .push(line.to_string());
        }
        let traits = sections
            .remove("traits")
            .unwrap_or_default()
            .into_iter()
            .map(|pair| {
                pair.split_once('|')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| format!("trait axis `{pair}` is not `pole|opposite`"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if traits.len() != 5 {
            return Err(format!("expected 5 trait axes, found {}", traits.len()));
        }
        for field in FIELDS {
            if sections.get(field).is_none_or(|v| v.is_empty()) {
                return Err(format!("missing or empty section [{field}]"));
            }
        }
        Ok(Vocabulary { sections, traits })
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> &'static Vocabulary {
        static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| Vocabulary::parse(VOCAB_SOURCE).expect("bundled vocabulary is valid"))
    }

    pub fn values(&self, section: &str) -> &[String] {
        self.sections.get(section).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn trait_axes(&self) -> &[(String, String)] {
        &self.traits
    }
}

const FIELDS: [&str; 9] = [
    "first_names",
    "last_names",
    "gender",
    "age_bracket",
    "income_level",
    "occupation",
    "education",
    "risk_preference",
    "trip_purpose",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub gender: String,
    pub age_bracket: String,
    pub income_level: String,
    pub occupation: String,
    pub education: String,
    pub risk_preference: String,
    pub trip_purpose: String,
    /// One entry per trait axis; `true` selects the first pole (extroverted, agreeable,
    /// conscientious, neurotic, open to experience).
    pub traits: [bool; 5],
    pub selfish: bool,
}

impl Profile {
    pub fn trait_words(&self) -> Vec<&str> {
        Vocabulary::builtin()
            .trait_axes()
            .iter()
            .zip(self.traits)
            .map(|((pos, neg), first)| if first { pos.as_str() } else { neg.as_str() })
            .collect()
    }

    /// Second-person profile paragraph used at the top of the prompt.
    pub fn describe(&self) -> String {
        let words = self.trait_words();
        let (last, init) = words.split_last().expect("five trait axes");
        let mut text = format!(
            "Your name is {}. You are a {} character, aged between {}, with a {} income level, {}, with {}, {}, and traveling for {}. You are a character who is {}, and {}.",
            self.name,
            self.gender,
            self.age_bracket,
            self.income_level,
            self.occupation,
            self.education,
            self.risk_preference,
            self.trip_purpose,
            init.join(", "),
            last
        );
        if self.selfish {
            text.push_str(" You are selfish.");
        }
        text
    }
}

/// Deterministic profile for `seed`; every field drawn uniformly from the vocabulary.
pub fn sample_profile(seed: u64) -> Profile {
    let vocab = Vocabulary::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |section: &str| {
        vocab
            .values(section)
            .choose(&mut rng)
            .expect("non-empty section")
            .clone()
    };
    let name = format!("{} {}", pick("first_names"), pick("last_names"));
    let gender = pick("gender");
    let age_bracket = pick("age_bracket");
    let income_level = pick("income_level");
    let occupation = pick("occupation");
    let education = pick("education");
    let risk_preference = pick("risk_preference");
    let trip_purpose = pick("trip_purpose");
    let traits = std::array::from_fn(|_| rng.random_bool(0.5));
    Profile {
        name,
        gender,
        age_bracket,
        income_level,
        occupation,
        education,
        risk_preference,
        trip_purpose,
        traits,
        selfish: false,
    }
}

//! Deterministic offline paraphraser.
//!
//! Rewrites the dialogue's final message through seeded synonym
//! substitution and clause reordering. The goal is determinism and label
//! safety, not linguistic quality: the synonym table ships with the crate
//! and excludes debt markers.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{GatewayError, GatewayKind, GenerationClient, GenerationResult, Message};

const SYNONYMS_SRC: &str = include_str!("../../resources/synonyms.txt");

fn synonyms() -> &'static HashMap<&'static str, Vec<&'static str>> {
    static MAP: OnceLock<HashMap<&'static str, Vec<&'static str>>> = OnceLock::new();
    MAP.get_or_init(|| {
        SYNONYMS_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                let word = parts.next()?;
                let alts: Vec<&'static str> = parts.collect();
                if alts.is_empty() {
                    None
                } else {
                    Some((word, alts))
                }
            })
            .collect()
    })
}

pub struct MockClient {
    seed: u64,
}

impl MockClient {
    pub fn new(seed: u64) -> Self {
        MockClient { seed }
    }

    fn variant_rng(&self, dialogue: &[Message], variant: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for message in dialogue {
            hasher.update([message.role as u8]);
            hasher.update(message.content.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update(variant.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed_bytes = [0u8; 8];
        seed_bytes.copy_from_slice(&digest[..8]);
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed_bytes))
    }
}

fn rewrite(original: &str, rng: &mut ChaCha8Rng) -> String {
    let table = synonyms();
    let mut tokens: Vec<String> = original.split_whitespace().map(str::to_string).collect();
    for token in &mut tokens {
        let key = token.to_lowercase();
        if let Some(alts) = table.get(key.as_str()) {
            if rng.gen_bool(0.6) {
                *token = alts[rng.gen_range(0..alts.len())].to_string();
            }
        }
    }
    if tokens.len() >= 4 && rng.gen_bool(0.5) {
        let cut = rng.gen_range(1..tokens.len());
        tokens.rotate_left(cut);
    }
    tokens.join(" ")
}

impl GenerationClient for MockClient {
    fn generate(&self, dialogue: &[Message], n: usize) -> Result<GenerationResult, GatewayError> {
        if n == 0 || dialogue.is_empty() {
            return Err(GatewayError::Config(
                "generation needs n >= 1 and a non-empty dialogue".into(),
            ));
        }
        let original = dialogue.last().expect("non-empty dialogue").content.trim();
        let mut paraphrases: Vec<String> = Vec::with_capacity(n);
        for variant in 1..=n as u64 {
            let mut rng = self.variant_rng(dialogue, variant);
            let mut text = rewrite(original, &mut rng);
            if text.eq_ignore_ascii_case(original) || text.is_empty() {
                text = format!("rephrased: {original}");
            }
            // Distinct variants; collisions get a deterministic marker.
            if paraphrases.iter().any(|p| p.eq_ignore_ascii_case(&text)) {
                text = format!("take {variant}: {text}");
            }
            paraphrases.push(text);
        }
        let raw_response = paraphrases
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}. {p}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(GenerationResult {
            paraphrases,
            raw_response,
            latency_ms: 0,
            attempts: 1,
        })
    }

    fn kind(&self) -> GatewayKind {
        GatewayKind::Mock
    }
}

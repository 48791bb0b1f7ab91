//! Seeded stock sentences for quick test messages.

use rand::seq::IndexedRandom;

use crate::seed::{derive_seed, rng_from, tag};

pub const PHRASES: &[&str] = &[
    "To satisfy some very young mathematician.",
    "It should be obvious.",
    "The bits suggested it.",
    "Because the array was told to.",
    "A tall engineer wanted it.",
    "To fool the eavesdropper.",
    "The second receiver insisted.",
    "Nobody asked the sidelobes.",
    "It was in the calibration.",
    "Some rich hacker wanted it that way.",
    "The phase knew best.",
    "To please a very tired grad student.",
    "Two beams are better than one.",
    "Because the pseudoinverse said so.",
    "It seemed like a good idea at the time.",
    "The symbol clock was late again.",
];

/// `count` phrases drawn with replacement, reproducible from `seed` and the
/// draw index.
pub fn generate_messages(seed: u64, draw: u64, count: usize) -> Vec<String> {
    let mut rng = rng_from(derive_seed(seed, &[tag::PHRASE, draw]));
    (0..count).map(|_| PHRASES.choose(&mut rng).expect("pool is non-empty").to_string()).collect()
}

//! Toolkit for synthesizing parallel English/gibberish domain corpora from a
//! WordNet-style lexicon and evaluating answer backends on ontology-learning
//! tasks (relation extraction and taxonomy discovery).
//!
//! The pipeline stages, in order:
//!
//! 1. [`lexicon`] — load the lexicon graph.
//! 2. [`miner`] — mine a domain by breadth-first exploration from roots.
//! 3. [`linker`] — link in-domain form mentions inside definitions.
//! 4. [`translator`] / [`propagator`] — generate collision-free gibberish
//!    forms and propagate them into a parallel corpus.
//! 5. [`tasks`] — build evaluation instances and fine-tuning exports.
//! 6. [`runner`] — execute instances against an answer backend.
//! 7. [`scorer`] — compute ground-truth and alignment metrics.
//!
//! All randomness flows from a single corpus seed through [`sub_seed`].

pub mod error;
pub mod lexicon;
pub mod linker;
pub mod miner;
pub mod propagator;
pub mod runner;
pub mod scorer;
pub mod tasks;
pub mod translator;

pub use error::{Error, Result};

/// Hex-encoded SHA-256 digest, used to tie pipeline artifacts to their
/// inputs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Derives a per-stage seed from the corpus seed, so that stages draw from
/// independent deterministic streams. Labels are fixed per call site
/// ("stall", "negatives", "finetune-split").
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the seed through SplitMix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = seed ^ h;
    state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Shared fixtures for the integration and acceptance suites: a hand-built
//! twelve-concept dessert domain and a seeded random-lexicon generator with
//! homonym clusters, multiword forms and cyclic definition dependencies.

// each test target compiles this module separately and uses a subset of it
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Cursor;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gibberlex::lexicon::{load_lexicon, ConceptId, Lexicon, RelationKind};
use gibberlex::linker::{link_definitions, DefinitionLink};
use gibberlex::miner::{mine_domain, Domain};
use gibberlex::propagator::{propagate_with_stats, ParallelCorpus, PropagateStats};

/// Twelve concepts around sweets: a homonym pair (sweet noun/adjective),
/// multiword forms ("icing sugar", "egg white", "sugar candy"), a holonym
/// edge, a derivation edge and a topic edge.
pub const TWELVE: &[&str] = &[
    r#"{"id":"sugar","pos":"n","forms":["sugar"],"definition":"a white crystalline carbohydrate used as a sweetener","relations":[]}"#,
    r#"{"id":"fruit","pos":"n","forms":["fruit"],"definition":"the ripened reproductive body of a plant","relations":[]}"#,
    r#"{"id":"sweet-a","pos":"a","forms":["sweet"],"definition":"having a taste like that of sugar","relations":[]}"#,
    r#"{"id":"sweet-n","pos":"n","forms":["sweet"],"definition":"a dish served as the last course of a meal, usually a confection","relations":[]}"#,
    r#"{"id":"confection","pos":"n","forms":["confection"],"definition":"a food rich in sugar","relations":[{"kind":"hypernym","target":"sweet-n"}]}"#,
    r#"{"id":"dessert","pos":"n","forms":["dessert"],"definition":"a sweet course served at the end of a meal","relations":[{"kind":"hypernym","target":"sweet-n"}]}"#,
    r#"{"id":"macaron","pos":"n","forms":["macaron"],"definition":"a sweet confection made with egg white, icing sugar and ground almond","relations":[{"kind":"hypernym","target":"confection"}]}"#,
    r#"{"id":"candy","pos":"n","forms":["candy","sugar candy"],"definition":"a rich sweet made of boiled sugar","relations":[{"kind":"hypernym","target":"confection"}]}"#,
    r#"{"id":"compote","pos":"n","forms":["compote"],"definition":"dessert of stewed fruit","relations":[{"kind":"hypernym","target":"dessert"},{"kind":"topic","target":"fruit"}]}"#,
    r#"{"id":"icing-sugar","pos":"n","forms":["icing sugar","powdered sugar"],"definition":"sugar ground into a fine powder","relations":[{"kind":"hypernym","target":"sugar"}]}"#,
    r#"{"id":"egg-white","pos":"n","forms":["egg white"],"definition":"the white part of an egg, used in confection making","relations":[{"kind":"holonym","target":"macaron"},{"kind":"topic","target":"confection"}]}"#,
    r#"{"id":"sweetness","pos":"n","forms":["sweetness"],"definition":"the taste experience when sugar is in the mouth","relations":[{"kind":"derivation","target":"sweet-a"}]}"#,
];

pub struct Pipeline {
    pub lex: Lexicon,
    pub domain: Domain,
    pub links: Vec<DefinitionLink>,
    pub corpus: ParallelCorpus,
    pub stats: PropagateStats,
}

pub fn twelve_concepts(seed: u64) -> Pipeline {
    let lex = load_lexicon(Cursor::new(TWELVE.join("\n"))).expect("fixture loads");
    let roots = vec![
        ConceptId::from("sweet-n"),
        ConceptId::from("sweet-a"),
        ConceptId::from("sugar"),
    ];
    build_pipeline(lex, &roots, 5, seed)
}

pub fn build_pipeline(lex: Lexicon, roots: &[ConceptId], depth: usize, seed: u64) -> Pipeline {
    let relations: BTreeSet<RelationKind> = [
        RelationKind::Hyponym,
        RelationKind::Derivation,
        RelationKind::Topic,
    ]
    .into();
    let domain = mine_domain(&lex, roots, &relations, depth).expect("domain mines");
    let links = link_definitions(&lex, &domain).expect("links build");
    let (corpus, stats) = propagate_with_stats(&lex, &domain, &links, seed).expect("propagates");
    Pipeline {
        lex,
        domain,
        links,
        corpus,
        stats,
    }
}

const FILLERS: &[&str] = &[
    "the", "a", "of", "made", "with", "plain", "kind", "sort", "object", "used", "for", "small",
    "large", "common", "found", "near", "inside", "broad", "narrow", "thing",
];

/// Spell an index with letters only; the matcher tokenizes on alphabetic
/// runs, so forms must not contain digits.
fn alpha(mut i: usize) -> String {
    let mut out = String::new();
    loop {
        out.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    out
}

/// A random lexicon plus the roots that reach its in-domain portion.
pub struct RandomLexicon {
    pub lex: Lexicon,
    pub roots: Vec<ConceptId>,
    pub depth: usize,
}

/// Generates up to `max_concepts` concepts. Roughly 80% hang off a hypernym
/// tree under the first concept (the domain); the rest are disconnected and
/// act as out-of-domain homonyms when they reuse a form. Definitions mention
/// other concepts' forms, including forced mutual-mention cycles and
/// self-references.
pub fn random_lexicon(seed: u64, max_concepts: usize) -> RandomLexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=max_concepts.max(3));
    let in_domain = ((n * 4).div_ceil(5)).max(2);

    // forms first, so definitions can mention them
    let mut forms: Vec<Vec<String>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut own = Vec::new();
        let reuse_earlier = i > 0 && rng.random_range(0..100) < 15;
        if reuse_earlier {
            let j = rng.random_range(0..i);
            own.push(forms[j][0].clone());
        } else {
            let style = rng.random_range(0..100);
            if style < 20 {
                own.push(format!("wug{} lem{}", alpha(i), alpha(rng.random_range(0..n))));
            } else if style < 30 {
                own.push(format!("wug{}-lem{}", alpha(i), alpha(rng.random_range(0..n))));
            } else {
                own.push(format!("wug{}", alpha(i)));
            }
        }
        if rng.random_range(0..100) < 20 {
            own.push(format!("alt{}", alpha(i)));
        }
        forms.push(own);
    }

    let mut mentions: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, slots) in mentions.iter_mut().enumerate() {
        if rng.random_range(0..100) < 60 {
            for _ in 0..rng.random_range(1..=3usize) {
                slots.push(rng.random_range(0..n));
            }
        }
        if rng.random_range(0..100) < 10 {
            slots.push(i); // self-reference
        }
    }
    // forced mutual-mention cycles
    for _ in 0..(n / 10).max(1) {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            mentions[i].push(j);
            mentions[j].push(i);
        }
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut words: Vec<String> = Vec::new();
        for _ in 0..rng.random_range(3..=8usize) {
            words.push(FILLERS[rng.random_range(0..FILLERS.len())].to_owned());
        }
        for &target in &mentions[i] {
            let position = rng.random_range(0..=words.len());
            words.insert(position, forms[target][0].clone());
        }
        let definition = words.join(" ");
        let mut relations = Vec::new();
        if i > 0 && i < in_domain {
            let parent = rng.random_range(0..i.min(in_domain));
            relations.push(format!(
                r#"{{"kind":"hypernym","target":"c{parent:04}"}}"#
            ));
        }
        // occasional extra edge, cycles included
        if i < in_domain && rng.random_range(0..100) < 10 {
            let other = rng.random_range(0..in_domain);
            if other != i {
                relations.push(format!(
                    r#"{{"kind":"hypernym","target":"c{other:04}"}}"#
                ));
            }
        }
        let forms_json = forms[i]
            .iter()
            .map(|f| format!("{f:?}"))
            .collect::<Vec<_>>()
            .join(",");
        records.push(format!(
            r#"{{"id":"c{i:04}","pos":"n","forms":[{forms_json}],"definition":"{definition}","relations":[{}]}}"#,
            relations.join(",")
        ));
    }

    let lex = load_lexicon(Cursor::new(records.join("\n"))).expect("random lexicon loads");
    RandomLexicon {
        lex,
        roots: vec![ConceptId::from("c0000")],
        depth: n,
        }
}

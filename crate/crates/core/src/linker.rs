//! Mention detection: find occurrences of in-domain written forms inside
//! definitions and record them as dependency links.
//!
//! Matching is case-insensitive, aligned to word boundaries, and greedy
//! longest-match left to right so that multiword terms shadow their
//! sub-terms ("icing sugar" wins over "sugar"). A hyphen joining two letters
//! is part of the word, so "meringue-based" is a single token and does not
//! contain a "meringue" mention.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lexicon::{fold, ConceptId, Lexicon};
use crate::miner::Domain;

/// One mention of an in-domain form inside a concept's definition.
///
/// `span` holds byte offsets into the owner's UTF-8 definition; the spanned
/// text case-folds to `form` (plus an optional plural suffix when enabled).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionLink {
    pub concept_id: ConceptId,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub form: String,
    pub referenced: BTreeSet<ConceptId>,
}

/// A raw span match, before ownership and references are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormMatch {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub form: String,
}

/// Matcher over a fixed vocabulary of case-folded forms.
#[derive(Debug, Clone)]
pub struct FormMatcher {
    forms: BTreeSet<String>,
    max_tokens: usize,
    plural_tolerant: bool,
}

impl FormMatcher {
    pub fn new(forms: impl IntoIterator<Item = String>) -> Self {
        Self::with_plural_tolerance(forms, false)
    }

    /// `plural_tolerant` additionally matches a form followed by a trailing
    /// "s" or "es". Off by default: the plural suffix is lost on
    /// substitution, which breaks invertibility.
    pub fn with_plural_tolerance(
        forms: impl IntoIterator<Item = String>,
        plural_tolerant: bool,
    ) -> Self {
        let forms: BTreeSet<String> = forms.into_iter().map(|f| fold(&f)).collect();
        let max_tokens = forms
            .iter()
            .map(|f| tokenize(f).len())
            .max()
            .unwrap_or(0)
            .max(1);
        FormMatcher {
            forms,
            max_tokens,
            plural_tolerant,
        }
    }

    pub fn forms(&self) -> &BTreeSet<String> {
        &self.forms
    }

    /// All maximal non-overlapping matches, scanning greedily left to right
    /// and preferring the longest candidate at each position.
    pub fn find_matches(&self, text: &str) -> Vec<FormMatch> {
        let tokens = tokenize(text);
        let mut matches = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut hit = None;
            let upper = (i + self.max_tokens).min(tokens.len());
            for j in (i..upper).rev() {
                let start = tokens[i].0;
                let end = tokens[j].1;
                let surface = &text[start..end];
                if let Some(form) = self.lookup(surface) {
                    hit = Some((j, start, end, surface.to_owned(), form));
                    break;
                }
            }
            match hit {
                Some((j, start, end, surface, form)) => {
                    matches.push(FormMatch {
                        start,
                        end,
                        surface,
                        form,
                    });
                    i = j + 1;
                }
                None => i += 1,
            }
        }
        matches
    }

    fn lookup(&self, surface: &str) -> Option<String> {
        let folded = fold(surface);
        if self.forms.contains(&folded) {
            return Some(folded);
        }
        if self.plural_tolerant {
            for suffix in ["es", "s"] {
                if let Some(stem) = folded.strip_suffix(suffix) {
                    if self.forms.contains(stem) {
                        return Some(stem.to_owned());
                    }
                }
            }
        }
        None
    }
}

/// Word tokens as byte ranges. A token is a maximal run of alphabetic
/// characters, where a hyphen directly between two letters belongs to the
/// token.
pub fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let is_word_char = |k: usize| -> bool {
        let (_, c) = chars[k];
        if c.is_alphabetic() {
            return true;
        }
        c == '-'
            && k > 0
            && k + 1 < chars.len()
            && chars[k - 1].1.is_alphabetic()
            && chars[k + 1].1.is_alphabetic()
    };
    let mut tokens = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        if is_word_char(k) {
            let start = chars[k].0;
            while k < chars.len() && is_word_char(k) {
                k += 1;
            }
            let end = if k < chars.len() {
                chars[k].0
            } else {
                text.len()
            };
            tokens.push((start, end));
        } else {
            k += 1;
        }
    }
    tokens
}

/// Vocabulary of a domain: every case-folded written form of every member.
pub fn domain_forms(lex: &Lexicon, domain: &Domain) -> BTreeSet<String> {
    let mut forms = BTreeSet::new();
    for id in &domain.members {
        if let Some(concept) = lex.get(id) {
            forms.extend(concept.folded_forms());
        }
    }
    forms
}

/// Index from case-folded form to the member ids carrying it.
fn member_form_index(lex: &Lexicon, domain: &Domain) -> BTreeMap<String, BTreeSet<ConceptId>> {
    let mut index: BTreeMap<String, BTreeSet<ConceptId>> = BTreeMap::new();
    for id in &domain.members {
        if let Some(concept) = lex.get(id) {
            for form in concept.folded_forms() {
                index.entry(form).or_default().insert(id.clone());
            }
        }
    }
    index
}

/// Detect every in-domain form mention in every member definition. Each link
/// references all members carrying the matched form. Output is ordered by
/// owner id, then span start.
pub fn link_definitions(lex: &Lexicon, domain: &Domain) -> Result<Vec<DefinitionLink>> {
    link_definitions_with(lex, domain, false)
}

/// As [`link_definitions`], optionally matching plural surfaces. Plural
/// matches make the later substitution lossy, so the flag is off by default.
pub fn link_definitions_with(
    lex: &Lexicon,
    domain: &Domain,
    plural_tolerant: bool,
) -> Result<Vec<DefinitionLink>> {
    let index = member_form_index(lex, domain);
    let matcher = FormMatcher::with_plural_tolerance(index.keys().cloned(), plural_tolerant);
    let mut links = Vec::new();
    for id in &domain.members {
        let Some(concept) = lex.get(id) else { continue };
        for m in matcher.find_matches(&concept.definition) {
            let referenced = index.get(&m.form).cloned().unwrap_or_default();
            debug_assert!(!referenced.is_empty());
            links.push(DefinitionLink {
                concept_id: id.clone(),
                start: m.start,
                end: m.end,
                surface: m.surface,
                form: m.form,
                referenced,
            });
        }
    }
    Ok(links)
}

/// Member concepts whose links reference no member other than themselves.
/// A definition mentioning only the owner's own form counts as free.
pub fn dependency_free(domain: &Domain, links: &[DefinitionLink]) -> BTreeSet<ConceptId> {
    let mut blocked = BTreeSet::new();
    for link in links {
        if link.referenced.iter().any(|r| *r != link.concept_id) {
            blocked.insert(link.concept_id.clone());
        }
    }
    domain
        .members
        .iter()
        .filter(|id| !blocked.contains(*id))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{load_lexicon, RelationKind};
    use crate::miner::mine_domain;
    use std::io::Cursor;

    #[test]
    fn tokens_keep_internal_hyphens() {
        let text = "a meringue-based sweet, sugar-free.";
        let spans: Vec<&str> = tokenize(text)
            .into_iter()
            .map(|(s, e)| &text[s..e])
            .collect();
        assert_eq!(spans, vec!["a", "meringue-based", "sweet", "sugar-free"]);
    }

    #[test]
    fn matcher_finds_simple_mentions() {
        let matcher = FormMatcher::new(["sugar".into(), "apple".into()]);
        let text = "an apple covered with sugar";
        let found = matcher.find_matches(text);
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].form, "apple");
        assert_eq!(found[1].form, "sugar");
        assert_eq!(&text[found[1].start..found[1].end], "sugar");
    }

    #[test]
    fn longest_match_shadows_subterms() {
        let matcher = FormMatcher::new(["icing sugar".into(), "sugar".into()]);
        let found = matcher.find_matches("dusted with icing sugar on top");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].form, "icing sugar");
    }

    #[test]
    fn hyphenated_tokens_do_not_leak_matches() {
        let matcher = FormMatcher::new(["meringue".into(), "sugar".into()]);
        let found = matcher.find_matches("a meringue-based sweet with sugar");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].form, "sugar");
    }

    #[test]
    fn matching_is_case_insensitive() {
        let matcher = FormMatcher::new(["sugar".into()]);
        let found = matcher.find_matches("Sugar is sweet");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].surface, "Sugar");
        assert_eq!(found[0].form, "sugar");
    }

    #[test]
    fn plural_tolerance_is_opt_in() {
        let strict = FormMatcher::new(["macaron".into()]);
        assert!(strict.find_matches("two macarons").is_empty());
        let tolerant = FormMatcher::with_plural_tolerance(["macaron".into()], true);
        let found = tolerant.find_matches("two macarons");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].form, "macaron");
        assert_eq!(found[0].surface, "macarons");
    }

    fn fixture() -> (Lexicon, Domain) {
        let records = [
            r#"{"id":"sugar","pos":"n","forms":["sugar"],"definition":"a crystalline carbohydrate","relations":[]}"#,
            r#"{"id":"apple","pos":"n","forms":["apple"],"definition":"a pome fruit","relations":[{"kind":"hypernym","target":"sugar"}]}"#,
            r#"{"id":"toffee","pos":"n","forms":["toffee apple"],"definition":"an apple covered with sugar","relations":[{"kind":"hypernym","target":"apple"}]}"#,
            r#"{"id":"selfish","pos":"n","forms":["selfish"],"definition":"a selfish thing","relations":[{"kind":"hypernym","target":"sugar"}]}"#,
        ];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("sugar")],
            &[RelationKind::Hyponym].into(),
            3,
        )
        .unwrap();
        (lex, domain)
    }

    #[test]
    fn links_reference_all_members_with_the_form() {
        let (lex, domain) = fixture();
        let links = link_definitions(&lex, &domain).unwrap();
        let toffee_links: Vec<_> = links
            .iter()
            .filter(|l| l.concept_id == ConceptId::from("toffee"))
            .collect();
        assert_eq!(toffee_links.len(), 2);
        assert_eq!(toffee_links[0].form, "apple");
        assert_eq!(toffee_links[0].referenced, [ConceptId::from("apple")].into());
        assert_eq!(toffee_links[1].form, "sugar");
    }

    #[test]
    fn definition_without_mentions_yields_no_links() {
        let (lex, domain) = fixture();
        let links = link_definitions(&lex, &domain).unwrap();
        assert!(!links.iter().any(|l| l.concept_id == ConceptId::from("sugar")));
    }

    #[test]
    fn self_reference_does_not_block_dependency_freedom() {
        let (lex, domain) = fixture();
        let links = link_definitions(&lex, &domain).unwrap();
        let free = dependency_free(&domain, &links);
        // sugar mentions nothing; selfish mentions only its own form
        assert!(free.contains(&ConceptId::from("sugar")));
        assert!(free.contains(&ConceptId::from("selfish")));
        assert!(!free.contains(&ConceptId::from("toffee")));
        assert!(free.contains(&ConceptId::from("apple")));
    }

    #[test]
    fn fully_cyclic_definitions_have_no_free_concepts() {
        let records = [
            r#"{"id":"a","pos":"n","forms":["alpha"],"definition":"opposite of beta","relations":[]}"#,
            r#"{"id":"b","pos":"n","forms":["beta"],"definition":"opposite of alpha","relations":[{"kind":"hypernym","target":"a"}]}"#,
        ];
        let lex = load_lexicon(Cursor::new(records.join("\n"))).unwrap();
        let domain = mine_domain(
            &lex,
            &[ConceptId::from("a")],
            &[RelationKind::Hyponym].into(),
            2,
        )
        .unwrap();
        let links = link_definitions(&lex, &domain).unwrap();
        assert!(dependency_free(&domain, &links).is_empty());
    }

    #[test]
    fn link_segments_reconstruct_the_definition() {
        let (lex, domain) = fixture();
        let links = link_definitions(&lex, &domain).unwrap();
        for id in &domain.members {
            let def = &lex.get(id).unwrap().definition;
            let mut rebuilt = String::new();
            let mut cursor = 0;
            for link in links.iter().filter(|l| &l.concept_id == id) {
                assert!(link.start >= cursor, "overlapping links");
                rebuilt.push_str(&def[cursor..link.start]);
                rebuilt.push_str(&link.surface);
                cursor = link.end;
            }
            rebuilt.push_str(&def[cursor..]);
            assert_eq!(&rebuilt, def);
        }
    }

    #[test]
    fn relinking_is_stable() {
        let (lex, domain) = fixture();
        assert_eq!(
            link_definitions(&lex, &domain).unwrap(),
            link_definitions(&lex, &domain).unwrap()
        );
    }
}

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::identifier::{compact_isbn, isbn13};
use super::BibRef;

/// Comparison key for duplicate detection and holdings lookup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedKey(String);

impl NormalizedKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn isbn(raw: &str) -> Self {
        NormalizedKey(format!("isbn:{}", isbn_digits(raw)))
    }

    /// Serial key without a year, as used by holdings.
    pub fn issn(raw: &str) -> Self {
        NormalizedKey(format!("issn:{}", compact_isbn(raw)))
    }

    pub fn title(raw: &str) -> Self {
        NormalizedKey(normalize_title(raw))
    }

    /// Normalizes a key as written in a holdings file: `isbn:` and `issn:`
    /// prefixes keep their identifier form, anything else is a title.
    pub fn from_raw(raw: &str) -> Self {
        let trimmed = raw.trim();
        let lower = trimmed.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("isbn:") {
            Self::isbn(rest)
        } else if let Some(rest) = lower.strip_prefix("issn:") {
            Self::issn(rest)
        } else {
            Self::title(trimmed)
        }
    }
}

impl fmt::Display for NormalizedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases, replaces every non-alphanumeric character with a space and
/// collapses whitespace runs.
pub fn normalize_title(title: &str) -> String {
    let spaced: String = title
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn isbn_digits(raw: &str) -> String {
    isbn13(raw).unwrap_or_else(|| compact_isbn(raw))
}

fn non_empty(field: &Option<String>) -> Option<&str> {
    field.as_deref().map(str::trim).filter(|v| !v.is_empty())
}

/// ISBN beats ISSN+year beats normalized title. A record with none of those
/// falls back to its DOI or PMID so identifier-only records never collide on
/// an empty title.
pub fn dedupe_key(bib: &BibRef) -> NormalizedKey {
    if let Some(isbn) = non_empty(&bib.isbn).filter(|i| !compact_isbn(i).is_empty()) {
        return NormalizedKey::isbn(isbn);
    }
    if let Some(issn) = non_empty(&bib.issn).filter(|i| !compact_isbn(i).is_empty()) {
        let year = bib.year.map(|y| y.to_string()).unwrap_or_default();
        return NormalizedKey(format!("issn:{}|{year}", compact_isbn(issn)));
    }
    let title = normalize_title(&bib.title);
    if !title.is_empty() {
        return NormalizedKey(title);
    }
    if let Some(doi) = non_empty(&bib.doi) {
        return NormalizedKey(format!("doi:{}", doi.to_ascii_lowercase()));
    }
    if let Some(pmid) = non_empty(&bib.pmid) {
        return NormalizedKey(format!("pmid:{pmid}"));
    }
    NormalizedKey(String::new())
}

/// Keys under which a library may list its holdings of this item, most
/// specific first: ISBN, ISSN (no year), then the title of the holding unit
/// (the journal for articles, the host book for chapters).
pub fn holdings_keys(bib: &BibRef) -> Vec<NormalizedKey> {
    let mut keys = Vec::new();
    if let Some(isbn) = non_empty(&bib.isbn) {
        keys.push(NormalizedKey::isbn(isbn));
    }
    if let Some(issn) = non_empty(&bib.issn) {
        keys.push(NormalizedKey::issn(issn));
    }
    let unit_title = match bib.kind {
        super::BibKind::Article | super::BibKind::Chapter => {
            non_empty(&bib.container_title).unwrap_or(bib.title.as_str())
        }
        _ => bib.title.as_str(),
    };
    let title = NormalizedKey::title(unit_title);
    if !title.0.is_empty() {
        keys.push(title);
    }
    keys.dedup();
    keys
}

/// Groups indices of citations sharing a dedupe key. Only groups of two or
/// more are returned, ordered by key; indices ascend within a group.
pub fn find_duplicate_requests(refs: &[BibRef]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<NormalizedKey, Vec<usize>> = BTreeMap::new();
    for (i, bib) in refs.iter().enumerate() {
        groups.entry(dedupe_key(bib)).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() >= 2).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bibliography::BibKind;

    #[test]
    fn same_isbn_different_titles() {
        let a = BibRef::book("First title", "978-1-2345-6789-7");
        let b = BibRef::book("Another", "9781234567897");
        assert_eq!(dedupe_key(&a), dedupe_key(&b));
        assert_eq!(dedupe_key(&a).as_str(), "isbn:9781234567897");
    }

    #[test]
    fn title_normalization_by_hand() {
        // "The Art-of X!" -> lowercase "the art-of x!" -> punctuation to
        // spaces "the art of x " -> collapse/trim "the art of x".
        let a = BibRef::new(BibKind::Book, "The Art-of X!");
        let b = BibRef::new(BibKind::Book, "the art of x");
        assert_eq!(dedupe_key(&a).as_str(), "the art of x");
        assert_eq!(dedupe_key(&a), dedupe_key(&b));
    }

    #[test]
    fn issn_year_disambiguates() {
        let a = BibRef::article("T", "J", 2020).with_issn("1234-5678");
        let b = BibRef::article("T", "J", 2021).with_issn("1234-5678");
        assert_ne!(dedupe_key(&a), dedupe_key(&b));
        assert_eq!(dedupe_key(&a).as_str(), "issn:12345678|2020");
    }

    #[test]
    fn doi_only_records_do_not_collide() {
        let a = BibRef::new(BibKind::Article, "").with_doi("10.1/a").with_issn("");
        let b = BibRef::new(BibKind::Article, "").with_doi("10.1/b");
        assert_ne!(dedupe_key(&a), dedupe_key(&b));
    }

    #[test]
    fn duplicate_groups() {
        assert!(find_duplicate_requests(&[]).is_empty());
        let refs = vec![
            BibRef::book("A", "9781234567897"),
            BibRef::book("Zed", "0-306-40615-2"),
            BibRef::book("B", "978 1 2345 6789 7"),
        ];
        assert_eq!(find_duplicate_requests(&refs), vec![vec![0, 2]]);
    }

    #[test]
    fn holdings_keys_for_an_article() {
        let a = BibRef::article("On X", "Journal of Y", 1999).with_issn("1234-5678");
        let keys: Vec<_> = holdings_keys(&a).into_iter().map(|k| k.0).collect();
        assert_eq!(keys, vec!["issn:12345678", "journal of y"]);
        assert_eq!(NormalizedKey::from_raw("ISSN:1234-5678").as_str(), "issn:12345678");
    }
}

//! Bibliographic citations: the record every request is about, plus OpenURL
//! import, identifier resolution, open-access lookup and duplicate detection.

mod identifier;
mod key;
mod openurl;
mod source;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use identifier::Identifier;
pub use key::{dedupe_key, find_duplicate_requests, holdings_keys, normalize_title, NormalizedKey};
pub use openurl::{parse_openurl, render_openurl};
pub use source::{
    check_open_access, resolve_identifier, FixtureRecord, FixtureSource, MetadataSource, OaSource,
    UnavailableSource,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BibError {
    #[error("citation has no mappable field")]
    EmptyCitation,
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("invalid citation: {0}")]
    InvalidBib(String),
    #[error("malformed identifier {0:?}")]
    MalformedIdentifier(String),
    #[error("identifier {0} not found")]
    NotFound(String),
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("fixture file: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BibKind {
    Article,
    Book,
    Chapter,
    Thesis,
}

impl BibKind {
    /// Books and chapters: copies from these fall under excerpt limits.
    pub fn is_monograph(self) -> bool {
        matches!(self, BibKind::Book | BibKind::Chapter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageRange {
    pub start: u32,
    pub end: u32,
}

impl PageRange {
    pub fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end.saturating_sub(self.start) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A citation for an article, book, chapter or thesis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BibRef {
    pub kind: BibKind,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pages: Option<PageRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isbn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publisher: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

fn present(field: &Option<String>) -> bool {
    field.as_deref().is_some_and(|v| !v.trim().is_empty())
}

impl BibRef {
    /// An empty record of the given kind; fill fields with struct update
    /// syntax or the builder-style setters.
    pub fn new(kind: BibKind, title: impl Into<String>) -> Self {
        Self {
            kind,
            title: title.into(),
            authors: Vec::new(),
            container_title: None,
            year: None,
            volume: None,
            issue: None,
            pages: None,
            doi: None,
            pmid: None,
            isbn: None,
            issn: None,
            publisher: None,
            language: None,
        }
    }

    pub fn article(title: impl Into<String>, journal: impl Into<String>, year: i32) -> Self {
        Self {
            container_title: Some(journal.into()),
            year: Some(year),
            ..Self::new(BibKind::Article, title)
        }
    }

    pub fn book(title: impl Into<String>, isbn: impl Into<String>) -> Self {
        Self { isbn: Some(isbn.into()), ..Self::new(BibKind::Book, title) }
    }

    pub fn with_doi(mut self, doi: impl Into<String>) -> Self {
        self.doi = Some(doi.into());
        self
    }

    pub fn with_issn(mut self, issn: impl Into<String>) -> Self {
        self.issn = Some(issn.into());
        self
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.year = Some(year);
        self
    }

    pub fn with_pages(mut self, start: u32, end: u32) -> Self {
        self.pages = Some(PageRange::new(start, end));
        self
    }

    pub fn has_title(&self) -> bool {
        !self.title.trim().is_empty()
    }

    pub fn validate(&self) -> Result<(), BibError> {
        if !(self.has_title() || present(&self.doi) || present(&self.pmid) || present(&self.isbn)) {
            return Err(BibError::InvalidBib(
                "one of title, doi, pmid or isbn is required".into(),
            ));
        }
        if let Some(p) = self.pages {
            if p.start < 1 || p.start > p.end {
                return Err(BibError::InvalidBib(format!(
                    "page range {}-{} is not ascending from 1",
                    p.start, p.end
                )));
            }
        }
        match self.kind {
            BibKind::Article if !(present(&self.container_title) || present(&self.issn)) => Err(
                BibError::InvalidBib("an article needs a journal title or ISSN".into()),
            ),
            BibKind::Chapter if !(present(&self.container_title) || present(&self.isbn)) => Err(
                BibError::InvalidBib("a chapter needs a host book title or ISBN".into()),
            ),
            _ => Ok(()),
        }
    }

    /// One-line citation used in panels and notifications.
    pub fn short_citation(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.authors.first() {
            out.push_str(first);
            if self.authors.len() > 1 {
                out.push_str(" et al.");
            }
            out.push_str(". ");
        }
        if self.has_title() {
            out.push_str(self.title.trim());
        } else if let Some(id) = self.doi.as_ref().or(self.isbn.as_ref()).or(self.pmid.as_ref()) {
            out.push_str(id);
        }
        if let Some(c) = &self.container_title {
            out.push_str(". ");
            out.push_str(c);
        }
        if let Some(y) = self.year {
            out.push_str(&format!(" ({y})"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requires_title_or_identifier() {
        let mut b = BibRef::new(BibKind::Book, "  ");
        assert!(matches!(b.validate(), Err(BibError::InvalidBib(_))));
        b.isbn = Some("9781234567897".into());
        assert!(b.validate().is_ok());
    }

    #[test]
    fn page_range_must_ascend_from_one() {
        let b = BibRef::book("B", "9781234567897").with_pages(10, 4);
        assert!(b.validate().is_err());
        let b = BibRef::book("B", "9781234567897").with_pages(0, 4);
        assert!(b.validate().is_err());
        let b = BibRef::book("B", "9781234567897").with_pages(4, 4);
        assert!(b.validate().is_ok());
    }

    #[test]
    fn article_and_chapter_need_a_container() {
        let a = BibRef::new(BibKind::Article, "On X");
        assert!(a.validate().is_err());
        assert!(a.clone().with_issn("1234-5678").validate().is_ok());
        let c = BibRef::new(BibKind::Chapter, "Ch. 3");
        assert!(c.validate().is_err());
        let c = BibRef { isbn: Some("9781234567897".into()), ..c };
        assert!(c.validate().is_ok());
    }
}

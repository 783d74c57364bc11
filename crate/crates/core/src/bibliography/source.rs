use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{dedupe_key, BibError, BibRef, Identifier};

/// Looks citations up by identifier. Production adapters may call out to a
/// registry; the bundled one reads a fixture file.
pub trait MetadataSource: Send + Sync {
    /// `Ok(None)` means the identifier is unknown; `Err` means the source
    /// itself failed.
    fn lookup(&self, id: &Identifier) -> Result<Option<BibRef>, BibError>;
}

/// Finds a registered open-access copy of a citation.
pub trait OaSource: Send + Sync {
    fn find_open_access(&self, bib: &BibRef) -> Result<Option<Url>, BibError>;
}

/// Fills a citation from an identifier such as `10.5555/demo1` or
/// `isbn:9781234567897`.
pub fn resolve_identifier(raw: &str, source: &dyn MetadataSource) -> Result<BibRef, BibError> {
    let id = Identifier::parse(raw)?;
    source.lookup(&id)?.ok_or_else(|| BibError::NotFound(id.to_string()))
}

pub fn check_open_access(bib: &BibRef, source: &dyn OaSource) -> Result<Option<Url>, BibError> {
    source.find_open_access(bib)
}

/// One entry of the fixture file: an identifier, the citation fields, and an
/// optional open-access URL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub identifier: Identifier,
    #[serde(flatten)]
    pub bib: BibRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oa_url: Option<Url>,
}

/// In-memory metadata and open-access source backed by a JSON array of
/// [`FixtureRecord`]s. Immutable after loading, so it can be shared freely.
#[derive(Debug, Clone, Default)]
pub struct FixtureSource {
    records: Vec<FixtureRecord>,
    by_id: HashMap<Identifier, usize>,
    oa_by_key: HashMap<String, Url>,
}

impl FixtureSource {
    pub fn from_records(records: Vec<FixtureRecord>) -> Result<Self, BibError> {
        let mut source = FixtureSource::default();
        for mut record in records {
            match &record.identifier {
                Identifier::Doi(d) if record.bib.doi.is_none() => record.bib.doi = Some(d.clone()),
                Identifier::Pmid(p) if record.bib.pmid.is_none() => record.bib.pmid = Some(p.clone()),
                Identifier::Isbn(i) if record.bib.isbn.is_none() => record.bib.isbn = Some(i.clone()),
                _ => {}
            }
            record
                .bib
                .validate()
                .map_err(|e| BibError::Fixture(format!("{}: {e}", record.identifier)))?;
            let idx = source.records.len();
            if source.by_id.insert(record.identifier.clone(), idx).is_some() {
                return Err(BibError::Fixture(format!("duplicate identifier {}", record.identifier)));
            }
            if let Some(url) = &record.oa_url {
                for key in lookup_keys(&record.bib) {
                    source.oa_by_key.entry(key).or_insert_with(|| url.clone());
                }
            }
            source.records.push(record);
        }
        Ok(source)
    }

    pub fn from_json(json: &str) -> Result<Self, BibError> {
        let records: Vec<FixtureRecord> =
            serde_json::from_str(json).map_err(|e| BibError::Fixture(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn load(path: &Path) -> Result<Self, BibError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| BibError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }
}

fn lookup_keys(bib: &BibRef) -> Vec<String> {
    let mut keys = Vec::new();
    for raw in [
        bib.doi.as_deref().map(|d| format!("doi:{d}")),
        bib.pmid.as_deref().map(|p| format!("pmid:{p}")),
        bib.isbn.as_deref().map(|i| format!("isbn:{i}")),
    ]
    .into_iter()
    .flatten()
    {
        if let Ok(id) = Identifier::parse(&raw) {
            keys.push(id.to_string());
        }
    }
    keys.push(format!("key:{}", dedupe_key(bib)));
    keys
}

impl MetadataSource for FixtureSource {
    fn lookup(&self, id: &Identifier) -> Result<Option<BibRef>, BibError> {
        Ok(self.by_id.get(id).map(|&i| self.records[i].bib.clone()))
    }
}

impl OaSource for FixtureSource {
    fn find_open_access(&self, bib: &BibRef) -> Result<Option<Url>, BibError> {
        Ok(lookup_keys(bib).iter().find_map(|k| self.oa_by_key.get(k).cloned()))
    }
}

/// A source that always fails; stands in for an unreachable service.
#[derive(Debug, Clone, Default)]
pub struct UnavailableSource;

impl MetadataSource for UnavailableSource {
    fn lookup(&self, _id: &Identifier) -> Result<Option<BibRef>, BibError> {
        Err(BibError::SourceUnavailable("metadata source is down".into()))
    }
}

impl OaSource for UnavailableSource {
    fn find_open_access(&self, _bib: &BibRef) -> Result<Option<Url>, BibError> {
        Err(BibError::SourceUnavailable("open access source is down".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bibliography::BibKind;

    const FIXTURE: &str = r#"[
        {"identifier": "10.5555/demo1", "kind": "article", "title": "Demo article",
         "container_title": "Journal of Demos", "year": 2020, "oa_url": "https://repo.example.org/demo1.pdf"},
        {"identifier": "10.5555/closed", "kind": "article", "title": "Closed article",
         "container_title": "Journal of Demos", "year": 2021},
        {"identifier": "isbn:9781234567897", "kind": "book", "title": "A Demo Book", "year": 2018}
    ]"#;

    #[test]
    fn resolves_fixture_dois() {
        let src = FixtureSource::from_json(FIXTURE).unwrap();
        let b = resolve_identifier("10.5555/demo1", &src).unwrap();
        assert_eq!(b.title, "Demo article");
        assert_eq!(b.doi.as_deref(), Some("10.5555/demo1"));
        assert_eq!(b.kind, BibKind::Article);
        assert_eq!(resolve_identifier("10.5555/absent", &src), Err(BibError::NotFound("doi:10.5555/absent".into())));
        assert!(matches!(resolve_identifier("doi:banana", &src), Err(BibError::MalformedIdentifier(_))));
        assert_eq!(resolve_identifier("isbn:978-1-2345-6789-7", &src).unwrap().title, "A Demo Book");
    }

    #[test]
    fn open_access_lookup() {
        let src = FixtureSource::from_json(FIXTURE).unwrap();
        let oa = BibRef::article("whatever", "J", 2020).with_doi("10.5555/demo1");
        assert_eq!(
            check_open_access(&oa, &src).unwrap().unwrap().as_str(),
            "https://repo.example.org/demo1.pdf"
        );
        // Same normalized key, no DOI.
        let by_title = BibRef::article("DEMO article!", "Journal of Demos", 2020);
        assert!(check_open_access(&by_title, &src).unwrap().is_some());
        let closed = BibRef::article("x", "J", 2021).with_doi("10.5555/closed");
        assert_eq!(check_open_access(&closed, &src).unwrap(), None);
        assert!(matches!(
            check_open_access(&closed, &UnavailableSource),
            Err(BibError::SourceUnavailable(_))
        ));
    }

    #[test]
    fn rejects_duplicate_fixture_ids() {
        let json = r#"[{"identifier":"10.1/a","kind":"book","title":"A"},{"identifier":"doi:10.1/A","kind":"book","title":"B"}]"#;
        assert!(matches!(FixtureSource::from_json(json), Err(BibError::Fixture(_))));
    }
}

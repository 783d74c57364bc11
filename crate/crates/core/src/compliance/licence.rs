use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ComplianceError, DeliveryMethod};
use crate::bibliography::{normalize_title, BibKind, BibRef};
use crate::request::{Flow, UnfulfilReason};

/// Per-container supply terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LicenceRecord {
    pub publisher: String,
    /// ISSN or journal title.
    pub container: String,
    pub ill_digital_allowed: bool,
    pub allowed_methods: BTreeSet<DeliveryMethod>,
    pub cross_border_allowed: bool,
}

impl LicenceRecord {
    pub fn validate(&self) -> Result<(), ComplianceError> {
        if !self.ill_digital_allowed && self.allowed_methods.iter().any(|m| m.is_digital()) {
            return Err(ComplianceError::InvalidLicence(format!(
                "{}: digital supply not allowed but digital methods listed",
                self.container
            )));
        }
        Ok(())
    }
}

fn container_key(raw: &str) -> String {
    let compact: String = raw.chars().filter(|c| *c != '-' && !c.is_whitespace()).collect();
    let looks_like_issn = compact.len() == 8
        && compact[..7].chars().all(|c| c.is_ascii_digit())
        && compact[7..].chars().all(|c| c.is_ascii_digit() || c == 'x' || c == 'X');
    if looks_like_issn {
        format!("issn:{}", compact.to_ascii_uppercase())
    } else {
        normalize_title(raw)
    }
}

/// Licence records keyed by container. Reloading replaces the whole store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LicenceStore {
    records: BTreeMap<String, LicenceRecord>,
}

#[derive(Debug, Deserialize)]
struct LicenceRow {
    publisher: String,
    container: String,
    ill_digital_allowed: String,
    methods: String,
    cross_border: String,
}

fn parse_bool(field: &str, value: &str) -> Result<bool, ComplianceError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" => Ok(false),
        other => Err(ComplianceError::InvalidLicence(format!("{field}: not a boolean: {other:?}"))),
    }
}

impl LicenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: LicenceRecord) -> Result<(), ComplianceError> {
        record.validate()?;
        self.records.insert(container_key(&record.container), record);
        Ok(())
    }

    /// Reads `publisher,container,ill_digital_allowed,methods,cross_border`
    /// with pipe-separated methods.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ComplianceError> {
        let mut store = LicenceStore::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, row) in rdr.deserialize::<LicenceRow>().enumerate() {
            let row = row.map_err(|e| ComplianceError::InvalidLicence(format!("row {}: {e}", i + 2)))?;
            let allowed_methods = row
                .methods
                .split('|')
                .filter(|m| !m.trim().is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()?;
            store.insert(LicenceRecord {
                publisher: row.publisher,
                container: row.container,
                ill_digital_allowed: parse_bool("ill_digital_allowed", &row.ill_digital_allowed)?,
                allowed_methods,
                cross_border_allowed: parse_bool("cross_border", &row.cross_border)?,
            })?;
        }
        Ok(store)
    }

    /// Licence for the bib's container: ISSN first, then container title
    /// (the title itself for books and theses).
    pub fn lookup(&self, bib: &BibRef) -> Option<&LicenceRecord> {
        let by_issn = bib.issn.as_deref().and_then(|i| self.records.get(&container_key(i)));
        by_issn.or_else(|| {
            let title = match bib.kind {
                BibKind::Article | BibKind::Chapter => bib.container_title.as_deref()?,
                BibKind::Book | BibKind::Thesis => &bib.title,
            };
            self.records.get(&normalize_title(title))
        })
    }

    /// Inserts every record of `other`, replacing records for the same
    /// container.
    pub fn merge(&mut self, other: LicenceStore) {
        self.records.extend(other.records);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyrightPolicy {
    pub monograph_excerpt_max_fraction: f64,
    pub newsstand_digital_allowed: bool,
    pub domestic_country: String,
    /// Methods allowed when no licence record matches.
    pub statutory_default: BTreeSet<DeliveryMethod>,
}

impl CopyrightPolicy {
    pub fn new(domestic_country: impl Into<String>) -> Self {
        CopyrightPolicy {
            monograph_excerpt_max_fraction: 0.10,
            newsstand_digital_allowed: false,
            domestic_country: domestic_country.into(),
            statutory_default: [DeliveryMethod::Postal, DeliveryMethod::Sed].into_iter().collect(),
        }
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.monograph_excerpt_max_fraction = fraction;
        self
    }

    fn fraction_basis_points(&self) -> u64 {
        (self.monograph_excerpt_max_fraction.clamp(0.0, 1.0) * 10_000.0).round() as u64
    }
}

/// Everything the gate looks at for one supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyQuery {
    pub bib: BibRef,
    pub flow: Flow,
    #[serde(default)]
    pub excerpt_pages: Option<u32>,
    #[serde(default)]
    pub total_pages: Option<u32>,
    pub borrower_country: String,
    /// Methods the borrower can take; empty means any.
    #[serde(default)]
    pub requested_methods: BTreeSet<DeliveryMethod>,
    /// Newspaper or newsstand magazine.
    #[serde(default)]
    pub newsstand: bool,
}

impl SupplyQuery {
    pub fn new(bib: BibRef, flow: Flow, borrower_country: impl Into<String>) -> Self {
        SupplyQuery {
            bib,
            flow,
            excerpt_pages: None,
            total_pages: None,
            borrower_country: borrower_country.into(),
            requested_methods: BTreeSet::new(),
            newsstand: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyDecision {
    Allow(BTreeSet<DeliveryMethod>),
    Deny { reason: UnfulfilReason, detail: String },
}

impl SupplyDecision {
    fn deny(detail: impl Into<String>) -> Self {
        SupplyDecision::Deny { reason: UnfulfilReason::LicenceOrCopyright, detail: detail.into() }
    }

    pub fn is_allowed(&self) -> bool {
        matches!(self, SupplyDecision::Allow(_))
    }
}

/// Licence and copyright gate. Digital methods are withdrawn where the
/// licence or the newsstand rule forbids them; a request left with no
/// usable method is denied.
pub fn check_supply_allowed(
    query: &SupplyQuery,
    licences: &LicenceStore,
    policy: &CopyrightPolicy,
) -> Result<SupplyDecision, ComplianceError> {
    let copy = query.flow == Flow::NonReturnable;
    if copy && query.bib.kind.is_monograph() {
        let excerpt = query.excerpt_pages.or(query.bib.pages.map(|p| p.len()));
        let (Some(excerpt), Some(total)) = (excerpt, query.total_pages) else {
            return Err(ComplianceError::MissingPageCounts);
        };
        if u64::from(excerpt) * 10_000 > policy.fraction_basis_points() * u64::from(total) {
            return Ok(SupplyDecision::deny(format!(
                "excerpt of {excerpt} pages exceeds {} of {total}",
                policy.monograph_excerpt_max_fraction
            )));
        }
    }

    let licence = licences.lookup(&query.bib);
    let cross_border = !query.borrower_country.eq_ignore_ascii_case(&policy.domestic_country);
    if cross_border && licence.is_some_and(|l| !l.cross_border_allowed) {
        return Ok(SupplyDecision::deny(format!("licence forbids supply outside {}", policy.domestic_country)));
    }

    let mut allowed: BTreeSet<DeliveryMethod> = match licence {
        Some(l) => l.allowed_methods.clone(),
        None => policy.statutory_default.clone(),
    };
    if licence.is_some_and(|l| !l.ill_digital_allowed) {
        allowed.retain(|m| !m.is_digital());
    }
    if query.newsstand && !policy.newsstand_digital_allowed {
        allowed.retain(|m| !m.is_digital());
    }
    let methods: BTreeSet<_> = if query.requested_methods.is_empty() {
        allowed
    } else {
        query.requested_methods.intersection(&allowed).copied().collect()
    };
    if methods.is_empty() {
        let why = if query.newsstand && !policy.newsstand_digital_allowed {
            "newsstand material cannot be supplied digitally"
        } else if licence.is_some_and(|l| !l.ill_digital_allowed) {
            "licence forbids digital interlibrary supply"
        } else {
            "no requested delivery method is permitted"
        };
        return Ok(SupplyDecision::deny(why));
    }
    Ok(SupplyDecision::Allow(methods))
}

#[cfg(test)]
mod tests {
    use super::*;
    use DeliveryMethod::*;

    fn chapter(pages: u32) -> SupplyQuery {
        let mut bib = BibRef::new(BibKind::Chapter, "Ch");
        bib.container_title = Some("Host".into());
        let mut q = SupplyQuery::new(bib, Flow::NonReturnable, "IT");
        q.excerpt_pages = Some(pages);
        q.total_pages = Some(300);
        q
    }

    fn digital_only(mut q: SupplyQuery) -> SupplyQuery {
        q.requested_methods = [Sed, Url].into_iter().collect();
        q
    }

    #[test]
    fn ten_percent_rule_is_inclusive() {
        let store = LicenceStore::new();
        let policy = CopyrightPolicy::new("IT");
        assert!(check_supply_allowed(&chapter(30), &store, &policy).unwrap().is_allowed());
        assert!(!check_supply_allowed(&chapter(31), &store, &policy).unwrap().is_allowed());
        assert!(!check_supply_allowed(&chapter(40), &store, &policy).unwrap().is_allowed());
        let mut q = chapter(30);
        q.total_pages = None;
        assert_eq!(check_supply_allowed(&q, &store, &policy), Err(ComplianceError::MissingPageCounts));
    }

    #[test]
    fn licence_methods_intersect() {
        let store = LicenceStore::from_csv(
            "publisher,container,ill_digital_allowed,methods,cross_border\nAcme,1234-5678,true,SED,false\n".as_bytes(),
        )
        .unwrap();
        let policy = CopyrightPolicy::new("IT");
        let bib = BibRef::article("A", "J", 2020).with_issn("1234-5678");
        let q = SupplyQuery::new(bib.clone(), Flow::NonReturnable, "IT");
        assert_eq!(check_supply_allowed(&q, &store, &policy).unwrap(), SupplyDecision::Allow([Sed].into()));
        let abroad = SupplyQuery::new(bib, Flow::NonReturnable, "FR");
        let d = check_supply_allowed(&abroad, &store, &policy).unwrap();
        assert!(matches!(d, SupplyDecision::Deny { reason: UnfulfilReason::LicenceOrCopyright, .. }));
    }

    #[test]
    fn newsstand_and_statutory_default() {
        let store = LicenceStore::new();
        let policy = CopyrightPolicy::new("DE");
        let bib = BibRef::article("Story", "Daily News", 2021);
        let mut q = digital_only(SupplyQuery::new(bib.clone(), Flow::NonReturnable, "DE"));
        q.newsstand = true;
        assert!(!check_supply_allowed(&q, &store, &policy).unwrap().is_allowed());
        let plain = SupplyQuery::new(bib, Flow::NonReturnable, "DE");
        assert_eq!(check_supply_allowed(&plain, &store, &policy).unwrap(), SupplyDecision::Allow([Postal, Sed].into()));
    }

    #[test]
    fn record_invariant() {
        let bad = "publisher,container,ill_digital_allowed,methods,cross_border\nAcme,J,false,SED|POSTAL,true\n";
        assert!(LicenceStore::from_csv(bad.as_bytes()).is_err());
    }
}

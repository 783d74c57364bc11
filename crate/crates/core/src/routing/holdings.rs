use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::RoutingError;
use crate::bibliography::{holdings_keys, BibKind, BibRef, NormalizedKey};
use crate::ids::PartnerId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Holding {
    pub partner: PartnerId,
    pub year_start: i32,
    pub year_end: i32,
}

/// Which partner holds which title or serial run, by year.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HoldingsIndex {
    entries: BTreeMap<NormalizedKey, BTreeSet<Holding>>,
}

#[derive(Debug, Deserialize)]
struct HoldingRow {
    key: String,
    partner_id: String,
    #[serde(default)]
    year_start: Option<i32>,
    #[serde(default)]
    year_end: Option<i32>,
}

impl HoldingsIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        key: NormalizedKey,
        partner: impl Into<PartnerId>,
        year_start: i32,
        year_end: i32,
    ) -> Result<(), RoutingError> {
        if year_start > year_end {
            return Err(RoutingError::InvalidHolding(format!(
                "{key}: year_start {year_start} > year_end {year_end}"
            )));
        }
        self.entries
            .entry(key)
            .or_default()
            .insert(Holding { partner: partner.into(), year_start, year_end });
        Ok(())
    }

    /// Reads `key,partner_id,year_start,year_end` rows. Empty years mean an
    /// open-ended run.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, RoutingError> {
        let mut index = HoldingsIndex::new();
        index.extend_from_csv(reader)?;
        Ok(index)
    }

    pub fn extend_from_csv<R: Read>(&mut self, reader: R) -> Result<usize, RoutingError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut n = 0;
        for (line, row) in rdr.deserialize::<HoldingRow>().enumerate() {
            let row = row.map_err(|e| RoutingError::InvalidHolding(format!("row {}: {e}", line + 2)))?;
            if row.key.is_empty() || row.partner_id.is_empty() {
                return Err(RoutingError::InvalidHolding(format!("row {}: empty key or partner", line + 2)));
            }
            self.insert(
                NormalizedKey::from_raw(&row.key),
                row.partner_id,
                row.year_start.unwrap_or(i32::MIN),
                row.year_end.unwrap_or(i32::MAX),
            )?;
            n += 1;
        }
        Ok(n)
    }

    /// Adds every holding of `other`.
    pub fn merge(&mut self, other: HoldingsIndex) {
        for (key, set) in other.entries {
            self.entries.entry(key).or_default().extend(set);
        }
    }

    pub fn holdings(&self, key: &NormalizedKey) -> impl Iterator<Item = &Holding> {
        self.entries.get(key).into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Partners holding the item. Articles come from serial runs and must fall
/// inside a held year range; monographs match on key alone.
pub fn match_holdings(bib: &BibRef, index: &HoldingsIndex) -> BTreeSet<PartnerId> {
    let serial = bib.kind == BibKind::Article;
    let mut out = BTreeSet::new();
    for key in holdings_keys(bib) {
        for h in index.holdings(&key) {
            let held = if serial {
                bib.year.is_some_and(|y| h.year_start <= y && y <= h.year_end)
            } else {
                true
            };
            if held {
                out.insert(h.partner.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn serial_index() -> HoldingsIndex {
        HoldingsIndex::from_csv("key,partner_id,year_start,year_end\nissn:1234-5678,L2,1990,2005\n".as_bytes())
            .unwrap()
    }

    #[test]
    fn serial_year_interval() {
        let idx = serial_index();
        let hit = BibRef::article("On X", "J", 1999).with_issn("1234-5678");
        assert_eq!(match_holdings(&hit, &idx), BTreeSet::from([PartnerId::from("L2")]));
        let miss = BibRef::article("On X", "J", 2010).with_issn("1234-5678");
        assert!(match_holdings(&miss, &idx).is_empty());
        let mut no_year = hit.clone();
        no_year.year = None;
        assert!(match_holdings(&no_year, &idx).is_empty());
    }

    #[test]
    fn monographs_ignore_years() {
        let idx = HoldingsIndex::from_csv(
            "key,partner_id,year_start,year_end\nisbn:9781234567897,L3,,\nThe Art of X,L4,2000,2000\n".as_bytes(),
        )
        .unwrap();
        let b = BibRef::book("The Art-of X!", "978-1-2345-6789-7").with_year(1950);
        let got: Vec<_> = match_holdings(&b, &idx).into_iter().map(|p| p.to_string()).collect();
        assert_eq!(got, vec!["L3", "L4"]);
    }

    #[test]
    fn rejects_inverted_ranges() {
        let err = HoldingsIndex::from_csv("key,partner_id,year_start,year_end\nissn:1,L2,2005,1990\n".as_bytes());
        assert!(matches!(err, Err(RoutingError::InvalidHolding(_))));
    }
}

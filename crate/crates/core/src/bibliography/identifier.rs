use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BibError;

/// A persistent identifier used to look a citation up.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Identifier {
    Doi(String),
    Pmid(String),
    /// Always held as 13 digits.
    Isbn(String),
}

impl Identifier {
    /// Accepts `doi:…`, `pmid:…`, `isbn:…`, a bare DOI (`10.…`) or a
    /// `https://doi.org/…` link.
    pub fn parse(raw: &str) -> Result<Self, BibError> {
        let malformed = || BibError::MalformedIdentifier(raw.to_owned());
        let text = raw.trim();
        let (scheme, value) = match text.split_once(':') {
            Some((s, v)) if matches!(s.to_ascii_lowercase().as_str(), "doi" | "pmid" | "isbn") => {
                (s.to_ascii_lowercase(), v.trim())
            }
            _ => {
                let lower = text.to_ascii_lowercase();
                let bare = ["https://doi.org/", "http://doi.org/", "https://dx.doi.org/"]
                    .iter()
                    .find_map(|p| lower.starts_with(p).then(|| &text[p.len()..]))
                    .unwrap_or(text);
                ("doi".to_owned(), bare)
            }
        };
        match scheme.as_str() {
            "doi" => {
                let doi = value.to_ascii_lowercase();
                let valid = doi.starts_with("10.")
                    && doi
                        .split_once('/')
                        .is_some_and(|(prefix, suffix)| prefix.len() > 3 && !suffix.is_empty());
                if valid {
                    Ok(Identifier::Doi(doi))
                } else {
                    Err(malformed())
                }
            }
            "pmid" => {
                if !value.is_empty() && value.len() <= 9 && value.chars().all(|c| c.is_ascii_digit()) {
                    Ok(Identifier::Pmid(value.trim_start_matches('0').to_owned()))
                } else {
                    Err(malformed())
                }
            }
            _ => isbn13(value).map(Identifier::Isbn).ok_or_else(malformed),
        }
    }

    pub fn scheme(&self) -> &'static str {
        match self {
            Identifier::Doi(_) => "doi",
            Identifier::Pmid(_) => "pmid",
            Identifier::Isbn(_) => "isbn",
        }
    }

    pub fn value(&self) -> &str {
        match self {
            Identifier::Doi(v) | Identifier::Pmid(v) | Identifier::Isbn(v) => v,
        }
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scheme(), self.value())
    }
}

impl FromStr for Identifier {
    type Err = BibError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Identifier::parse(s)
    }
}

impl TryFrom<String> for Identifier {
    type Error = BibError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Identifier::parse(&s)
    }
}

impl From<Identifier> for String {
    fn from(id: Identifier) -> String {
        id.to_string()
    }
}

/// Strips separators and keeps digits plus a trailing check character `X`.
pub(crate) fn compact_isbn(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_ascii_digit() || *c == 'x' || *c == 'X')
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

/// Validates an ISBN-10 or ISBN-13 checksum and returns the 13-digit form.
pub(crate) fn isbn13(raw: &str) -> Option<String> {
    let digits = compact_isbn(raw);
    match digits.len() {
        13 if digits.chars().all(|c| c.is_ascii_digit()) && isbn13_check(&digits[..12]) == digits.as_bytes()[12] => {
            Some(digits)
        }
        10 => {
            let body = &digits[..9];
            if !body.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            let sum: u32 = body
                .bytes()
                .enumerate()
                .map(|(i, b)| (10 - i as u32) * u32::from(b - b'0'))
                .sum();
            let check = (11 - sum % 11) % 11;
            let expected = if check == 10 { b'X' } else { b'0' + check as u8 };
            if digits.as_bytes()[9] != expected {
                return None;
            }
            let mut out = format!("978{body}");
            let c = isbn13_check(&out);
            out.push(c as char);
            Some(out)
        }
        _ => None,
    }
}

fn isbn13_check(first12: &str) -> u8 {
    let sum: u32 = first12
        .bytes()
        .enumerate()
        .map(|(i, b)| u32::from(b - b'0') * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    b'0' + ((10 - sum % 10) % 10) as u8
}

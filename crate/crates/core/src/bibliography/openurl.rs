use percent_encoding::{percent_decode_str, utf8_percent_encode, NON_ALPHANUMERIC};

use super::{BibError, BibKind, BibRef, PageRange};

#[derive(Default)]
struct Fields {
    genre: Option<String>,
    atitle: Option<String>,
    btitle: Option<String>,
    jtitle: Option<String>,
    title: Option<String>,
    date: Option<String>,
    volume: Option<String>,
    issue: Option<String>,
    spage: Option<String>,
    epage: Option<String>,
    pages: Option<String>,
    doi: Option<String>,
    pmid: Option<String>,
    isbn: Option<String>,
    issn: Option<String>,
    publisher: Option<String>,
    authors: Vec<String>,
}

impl Fields {
    fn has_content(&self) -> bool {
        [
            &self.atitle, &self.btitle, &self.jtitle, &self.title, &self.date, &self.volume,
            &self.issue, &self.spage, &self.epage, &self.pages, &self.doi, &self.pmid, &self.isbn,
            &self.issn, &self.publisher,
        ]
        .iter()
        .any(|f| f.is_some())
            || !self.authors.is_empty()
    }
}

fn decode(component: &str) -> Result<String, BibError> {
    let bytes = component.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let ok = bytes.len() >= i + 3
                && bytes[i + 1].is_ascii_hexdigit()
                && bytes[i + 2].is_ascii_hexdigit();
            if !ok {
                return Err(BibError::MalformedQuery(format!("bad escape in {component:?}")));
            }
            i += 3;
        } else {
            i += 1;
        }
    }
    let plus_as_space = component.replace('+', " ");
    percent_decode_str(&plus_as_space)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|_| BibError::MalformedQuery(format!("{component:?} is not UTF-8")))
}

fn set(slot: &mut Option<String>, value: String) {
    let value = value.trim().to_owned();
    if !value.is_empty() && slot.is_none() {
        *slot = Some(value);
    }
}

/// Maps an OpenURL (0.1 or 1.0 KEV, `rft.` prefixes optional) onto a
/// citation. Unknown keys are ignored.
pub fn parse_openurl(query: &str) -> Result<BibRef, BibError> {
    let query = query.trim().trim_start_matches('?');
    let mut f = Fields::default();
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (raw_key, raw_value) = pair.split_once('=').unwrap_or((pair, ""));
        let key = decode(raw_key)?.to_ascii_lowercase();
        let value = decode(raw_value)?;
        let key = key.strip_prefix("rft.").unwrap_or(&key);
        match key {
            "genre" => set(&mut f.genre, value.to_ascii_lowercase()),
            "atitle" => set(&mut f.atitle, value),
            "btitle" => set(&mut f.btitle, value),
            "jtitle" => set(&mut f.jtitle, value),
            "title" => set(&mut f.title, value),
            "date" => set(&mut f.date, value),
            "volume" => set(&mut f.volume, value),
            "issue" => set(&mut f.issue, value),
            "spage" => set(&mut f.spage, value),
            "epage" => set(&mut f.epage, value),
            "pages" => set(&mut f.pages, value),
            "doi" => set(&mut f.doi, value),
            "pmid" => set(&mut f.pmid, value),
            "isbn" => set(&mut f.isbn, value),
            "issn" => set(&mut f.issn, value),
            "pub" | "publisher" => set(&mut f.publisher, value),
            "au" => {
                let v = value.trim();
                if !v.is_empty() {
                    f.authors.push(v.to_owned());
                }
            }
            "id" | "rft_id" => {
                let lower = value.to_ascii_lowercase();
                if let Some(doi) = lower.strip_prefix("info:doi/").or_else(|| lower.strip_prefix("doi:")) {
                    set(&mut f.doi, doi.to_owned());
                } else if let Some(pmid) =
                    lower.strip_prefix("info:pmid/").or_else(|| lower.strip_prefix("pmid:"))
                {
                    set(&mut f.pmid, pmid.to_owned());
                }
            }
            _ => {}
        }
    }
    if !f.has_content() {
        return Err(BibError::EmptyCitation);
    }

    let kind = match f.genre.as_deref() {
        Some("article" | "journal" | "issue" | "proceeding" | "conference" | "preprint") => BibKind::Article,
        Some("book") => BibKind::Book,
        Some("bookitem" | "chapter") => BibKind::Chapter,
        Some("dissertation" | "thesis") => BibKind::Thesis,
        _ if f.atitle.is_some() => BibKind::Article,
        _ => BibKind::Book,
    };

    let (title, container) = match kind {
        BibKind::Article => match f.atitle.take() {
            Some(a) => (Some(a), f.jtitle.take().or(f.title.take())),
            None => (f.title.take(), f.jtitle.take()),
        },
        BibKind::Chapter => (f.atitle.take().or(f.title.take()), f.btitle.take()),
        BibKind::Book => (f.btitle.take().or(f.title.take()).or(f.atitle.take()), None),
        BibKind::Thesis => (f.title.take().or(f.btitle.take()).or(f.atitle.take()), None),
    };

    let year = f.date.as_deref().and_then(first_year);
    let pages = parse_pages(f.spage.as_deref(), f.epage.as_deref(), f.pages.as_deref());

    let bib = BibRef {
        kind,
        title: title.unwrap_or_default(),
        authors: f.authors,
        container_title: container,
        year,
        volume: f.volume,
        issue: f.issue,
        pages,
        doi: f.doi,
        pmid: f.pmid,
        isbn: f.isbn,
        issn: f.issn,
        publisher: f.publisher,
        language: None,
    };
    bib.validate()?;
    Ok(bib)
}

fn first_year(date: &str) -> Option<i32> {
    let bytes = date.as_bytes();
    (0..bytes.len().saturating_sub(3))
        .find(|&i| bytes[i..i + 4].iter().all(u8::is_ascii_digit))
        .and_then(|i| date[i..i + 4].parse().ok())
}

fn parse_pages(spage: Option<&str>, epage: Option<&str>, pages: Option<&str>) -> Option<PageRange> {
    let num = |s: &str| s.trim().parse::<u32>().ok();
    match (spage.and_then(num), epage.and_then(num)) {
        (Some(s), Some(e)) => Some(PageRange::new(s, e)),
        (Some(s), None) => Some(PageRange::new(s, s)),
        _ => {
            let (s, e) = pages?.split_once('-')?;
            Some(PageRange::new(num(s)?, num(e)?))
        }
    }
}

/// Writes the mappable fields of a citation as an OpenURL 0.1 query string.
pub fn render_openurl(bib: &BibRef) -> String {
    let mut pairs: Vec<(&str, String)> = Vec::new();
    let genre = match bib.kind {
        BibKind::Article => "article",
        BibKind::Book => "book",
        BibKind::Chapter => "bookitem",
        BibKind::Thesis => "dissertation",
    };
    pairs.push(("genre", genre.into()));
    match bib.kind {
        BibKind::Article => {
            if bib.has_title() {
                pairs.push(("atitle", bib.title.clone()));
            }
            if let Some(c) = &bib.container_title {
                pairs.push(("jtitle", c.clone()));
            }
        }
        BibKind::Chapter => {
            if bib.has_title() {
                pairs.push(("atitle", bib.title.clone()));
            }
            if let Some(c) = &bib.container_title {
                pairs.push(("btitle", c.clone()));
            }
        }
        BibKind::Book => {
            if bib.has_title() {
                pairs.push(("btitle", bib.title.clone()));
            }
        }
        BibKind::Thesis => {
            if bib.has_title() {
                pairs.push(("title", bib.title.clone()));
            }
        }
    }
    for au in &bib.authors {
        pairs.push(("au", au.clone()));
    }
    if let Some(y) = bib.year {
        pairs.push(("date", y.to_string()));
    }
    let optional = [
        ("volume", &bib.volume),
        ("issue", &bib.issue),
        ("doi", &bib.doi),
        ("pmid", &bib.pmid),
        ("isbn", &bib.isbn),
        ("issn", &bib.issn),
        ("pub", &bib.publisher),
    ];
    for (k, v) in optional {
        if let Some(v) = v {
            pairs.push((k, v.clone()));
        }
    }
    if let Some(p) = bib.pages {
        pairs.push(("spage", p.start.to_string()));
        pairs.push(("epage", p.end.to_string()));
    }
    pairs
        .into_iter()
        .map(|(k, v)| format!("{k}={}", utf8_percent_encode(&v, NON_ALPHANUMERIC)))
        .collect::<Vec<_>>()
        .join("&")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn article_fields() {
        let b = parse_openurl("genre=article&atitle=On+X&jtitle=J.+Y&date=2019&doi=10.1/x").unwrap();
        assert_eq!(b.kind, BibKind::Article);
        assert_eq!(b.title, "On X");
        assert_eq!(b.container_title.as_deref(), Some("J. Y"));
        assert_eq!(b.year, Some(2019));
        assert_eq!(b.doi.as_deref(), Some("10.1/x"));
    }

    #[test]
    fn book_from_rft_keys() {
        let b = parse_openurl("rft.isbn=9781234567897&btitle=B").unwrap();
        assert_eq!(b.kind, BibKind::Book);
        assert_eq!(b.isbn.as_deref(), Some("9781234567897"));
        assert_eq!(b.title, "B");
    }

    #[test]
    fn empty_and_unknown_only() {
        assert_eq!(parse_openurl(""), Err(BibError::EmptyCitation));
        assert_eq!(parse_openurl("sid=foo&genre=article"), Err(BibError::EmptyCitation));
    }

    #[test]
    fn malformed_escapes() {
        assert!(matches!(parse_openurl("atitle=%zz"), Err(BibError::MalformedQuery(_))));
        assert!(matches!(parse_openurl("atitle=%ff%fe&jtitle=J"), Err(BibError::MalformedQuery(_))));
        assert!(matches!(parse_openurl("atitle=50%"), Err(BibError::MalformedQuery(_))));
    }

    #[test]
    fn rft_id_and_pages() {
        let b = parse_openurl(
            "url_ver=Z39.88-2004&rft.genre=article&rft.atitle=T&rft.issn=1234-5678&rft.spage=5&rft.epage=9&rft_id=info:doi/10.1000/ABC&rft.au=Smith&rft.au=Jones",
        )
        .unwrap();
        assert_eq!(b.doi.as_deref(), Some("10.1000/abc"));
        assert_eq!(b.pages, Some(PageRange::new(5, 9)));
        assert_eq!(b.authors, vec!["Smith", "Jones"]);
    }

    #[test]
    fn kind_defaults() {
        assert_eq!(parse_openurl("atitle=A&jtitle=J").unwrap().kind, BibKind::Article);
        assert_eq!(parse_openurl("title=A").unwrap().kind, BibKind::Book);
        assert_eq!(parse_openurl("genre=dissertation&title=A").unwrap().kind, BibKind::Thesis);
        assert_eq!(parse_openurl("genre=bookitem&atitle=C&btitle=H").unwrap().container_title.as_deref(), Some("H"));
    }

    #[test]
    fn reversed_pages_are_invalid() {
        assert!(matches!(
            parse_openurl("genre=article&atitle=A&jtitle=J&spage=9&epage=5"),
            Err(BibError::InvalidBib(_))
        ));
    }
}

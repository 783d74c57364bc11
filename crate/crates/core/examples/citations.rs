//! Parse an OpenURL, resolve identifiers against a fixture source and spot
//! duplicate requests.

use interlend_core::bibliography::{
    check_open_access, dedupe_key, find_duplicate_requests, parse_openurl, render_openurl, resolve_identifier, BibRef,
    FixtureSource, Identifier,
};

const FIXTURE: &str = r#"[
  {"identifier": "doi:10.5555/demo1", "kind": "article", "title": "Shared Print Retention at Scale",
   "container_title": "Interlending Quarterly", "issn": "1234-5679", "year": 2019,
   "pages": {"start": 41, "end": 58}, "oa_url": "https://repository.example/demo1.pdf"},
  {"identifier": "isbn:9781234567897", "kind": "book", "title": "Resource Sharing Handbook", "year": 2016}
]"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let link = "ctx_ver=Z39.88-2004&rft.genre=article&rft.atitle=Shared%20Print%20Retention%20at%20Scale\
                &rft.jtitle=Interlending%20Quarterly&rft.issn=1234-5679&rft.date=2019&rft.spage=41&rft.epage=58";
    let bib = parse_openurl(link)?;
    println!("parsed:     {}", bib.short_citation());
    println!("dedupe key: {}", dedupe_key(&bib).as_str());
    println!("round trip: {}", render_openurl(&bib));

    let source = FixtureSource::from_json(FIXTURE)?;
    for raw in ["10.5555/demo1", "https://doi.org/10.5555/demo1", "isbn:978-1-234-56789-7", "pmid:1"] {
        match resolve_identifier(raw, &source) {
            Ok(found) => println!("{raw:<32} -> {}", found.short_citation()),
            Err(e) => println!("{raw:<32} -> {e}"),
        }
    }
    println!("identifier scheme of a bare DOI: {}", Identifier::parse("10.5555/demo1")?.scheme());

    if let Some(url) = check_open_access(&bib, &source)? {
        println!("open access copy: {url}");
    }

    let batch = vec![
        bib.clone(),
        BibRef::book("Resource Sharing Handbook", "9781234567897"),
        BibRef { title: "SHARED PRINT RETENTION AT SCALE.".into(), ..bib },
    ];
    println!("duplicate groups: {:?}", find_duplicate_requests(&batch));
    Ok(())
}

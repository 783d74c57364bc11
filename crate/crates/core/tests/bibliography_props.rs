use std::collections::BTreeMap;

use interlend_core::bibliography::{
    dedupe_key, find_duplicate_requests, normalize_title, parse_openurl, render_openurl, BibKind, BibRef, PageRange,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9]{0,7}"
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..5).prop_map(|w| w.join(" "))
}

fn bibref() -> impl Strategy<Value = BibRef> {
    (
        prop_oneof![Just(BibKind::Article), Just(BibKind::Book), Just(BibKind::Chapter), Just(BibKind::Thesis)],
        phrase(),
        prop::collection::vec(phrase(), 0..3),
        phrase(),
        prop::option::of(1800i32..2030),
        prop::option::of("[0-9]{1,3}"),
        prop::option::of("[0-9]{1,2}"),
        prop::option::of((1u32..500, 0u32..60)),
        prop::option::of("10\\.[0-9]{4}/[a-z0-9]{1,8}"),
        prop::option::of("[0-9]{6,8}"),
        prop::option::of("97[89][0-9]{10}"),
        prop::option::of("[0-9]{4}-[0-9]{4}"),
    )
        .prop_map(|(kind, title, authors, container, year, volume, issue, pages, doi, pmid, isbn, issn)| BibRef {
            container_title: matches!(kind, BibKind::Article | BibKind::Chapter).then_some(container),
            authors,
            year,
            volume,
            issue,
            pages: pages.map(|(s, n)| PageRange::new(s, s + n)),
            doi,
            pmid,
            isbn,
            issn,
            ..BibRef::new(kind, title)
        })
}

/// Title key written out longhand.
fn hand_normalized(title: &str) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for c in title.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

#[test]
fn title_variants_share_a_key() {
    let a = BibRef::new(BibKind::Book, "The Art-of X!");
    let b = BibRef::new(BibKind::Book, "the art of x");
    assert_eq!(dedupe_key(&a), dedupe_key(&b));
    assert_eq!(dedupe_key(&a).as_str(), "the art of x");
}

#[test]
fn year_separates_serial_keys() {
    let a = BibRef::article("A", "J", 2020).with_issn("1234-5678");
    let b = BibRef::article("A", "J", 2021).with_issn("1234-5678");
    assert_ne!(dedupe_key(&a), dedupe_key(&b));
}

#[test]
fn empty_and_small_inputs() {
    assert!(find_duplicate_requests(&[]).is_empty());
    let refs = [
        BibRef::book("One", "9781234567897"),
        BibRef::book("Two", "978-1-2345-6789-7"),
        BibRef::book("Three", "9780000000002"),
    ];
    assert_eq!(find_duplicate_requests(&refs), vec![vec![0, 1]]);
}

#[test]
fn duplicates_match_pairwise_comparison() {
    let titles = ["Alpha", "alpha!", "Beta", "BETA", "Gamma", "Delta"];
    let isbns = ["9781234567897", "978-1-2345-6789-7", "9780000000002"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let refs: Vec<BibRef> = (0..100)
            .map(|_| {
                let title = titles[rng.random_range(0..titles.len())];
                match rng.random_range(0..3) {
                    0 => BibRef::book(title, isbns[rng.random_range(0..isbns.len())]),
                    1 => BibRef::article(title, "J", rng.random_range(2019..2022))
                        .with_issn(["1234-5678", "8765-4321"][rng.random_range(0..2)]),
                    _ => BibRef::new(BibKind::Book, title),
                }
            })
            .collect();
        let keys: Vec<_> = refs.iter().map(dedupe_key).collect();
        // Pairwise union: i and j are together iff their keys are equal.
        let mut expected: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for i in 0..refs.len() {
            let partners = (0..refs.len()).filter(|&j| j != i && keys[i] == keys[j]).count();
            if partners > 0 {
                expected.entry(keys[i].as_str().to_string()).or_default().push(i);
            }
        }
        let expected: Vec<Vec<usize>> = expected.into_values().collect();
        let got = find_duplicate_requests(&refs);
        assert_eq!(got, expected);
        let mut seen = vec![false; refs.len()];
        for g in &got {
            for &i in g {
                assert!(!seen[i], "index {i} in two groups");
                seen[i] = true;
            }
        }
    }
}

proptest! {
    #[test]
    fn openurl_round_trip(bib in bibref()) {
        let parsed = parse_openurl(&render_openurl(&bib)).unwrap();
        prop_assert_eq!(parsed, bib);
    }

    #[test]
    fn dedupe_key_is_stable(bib in bibref()) {
        prop_assert_eq!(dedupe_key(&bib), dedupe_key(&bib.clone()));
    }

    #[test]
    fn title_normalization_is_idempotent(title in "\\PC{0,40}") {
        let once = normalize_title(&title);
        prop_assert_eq!(normalize_title(&once), once.clone());
        prop_assert_eq!(once, hand_normalized(&title));
    }
}

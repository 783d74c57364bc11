//! Decide whether a copy may be supplied, build the image package and let
//! the retention sweep remove it.

use chrono::Duration;
use interlend_core::bibliography::{BibKind, BibRef};
use interlend_core::clock::reference_epoch;
use interlend_core::compliance::{
    check_supply_allowed, deliver, make_hardcopy, CopyrightPolicy, DeliveryMethod, HardcopyOptions, LicenceRecord,
    LicenceStore, PackageRegistry, Payload, SourcePage, SupplyQuery, SyntheticRasterizer,
};
use interlend_core::request::Flow;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut licences = LicenceStore::new();
    licences.insert(LicenceRecord {
        publisher: "Example Press".into(),
        container: "1234-5679".into(),
        ill_digital_allowed: true,
        allowed_methods: [DeliveryMethod::Sed, DeliveryMethod::Postal].into(),
        cross_border_allowed: false,
    })?;
    let policy = CopyrightPolicy::new("BE");
    let article = BibRef::article("Shared Print Retention", "Interlending Quarterly", 2019)
        .with_issn("1234-5679")
        .with_pages(41, 52);

    for country in ["BE", "FR"] {
        let q = SupplyQuery::new(article.clone(), Flow::NonReturnable, country);
        println!("article to {country}: {:?}", check_supply_allowed(&q, &licences, &policy)?);
    }
    for pages in [30, 31] {
        let q = SupplyQuery {
            excerpt_pages: Some(pages),
            total_pages: Some(300),
            ..SupplyQuery::new(BibRef::new(BibKind::Chapter, "Long chapter"), Flow::NonReturnable, "BE")
        };
        println!("{pages}/300 pages allowed: {}", check_supply_allowed(&q, &licences, &policy)?.is_allowed());
    }

    let created = reference_epoch();
    let source = SourcePage::synthetic(article.pages.map_or(1, |p| p.len()));
    let package = make_hardcopy("PKG-1", &source, &SyntheticRasterizer, &HardcopyOptions::default(), created)?;
    println!("package: {} pages at {} dpi, kept until {}", package.page_count, package.dpi, package.retention_until);
    let receipt = deliver(&[DeliveryMethod::Sed].into(), Payload::Package(&package), DeliveryMethod::Sed, created)?;
    println!("delivered: {:?} {:?}", receipt.method, receipt.package_id);

    let mut registry = PackageRegistry::new();
    registry.insert(package);
    println!("purged on day 6: {:?}", registry.purge_expired(created + Duration::days(6)));
    println!("purged on day 8: {:?}", registry.purge_expired(created + Duration::days(8)));
    println!("audit: {:?}", registry.audit_log());
    Ok(())
}

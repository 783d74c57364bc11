//! Build a rota from holdings and pods, then spread requests across
//! equally loaded partners.

use std::collections::BTreeMap;

use interlend_core::bibliography::{BibRef, NormalizedKey};
use interlend_core::clock::reference_epoch;
use interlend_core::ids::{LibraryId, PartnerId};
use interlend_core::request::Flow;
use interlend_core::routing::{
    build_rota, rank_partners, select_partner, HoldingsIndex, LoadView, Partner, PartnerDirectory, PartnerKind, Pod,
    RotaInputs, RotaRequest, RoutingConfig, ServiceHours,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut partners: Vec<Partner> = ["BE-LIE", "BE-NAM", "BE-MON", "FR-LIL"]
        .into_iter()
        .map(|id| Partner { service_hours: ServiceHours::always(), ..Partner::network_node(id) })
        .collect();
    partners.push(Partner::of_kind("VENDOR", PartnerKind::PurchaseVendor));
    partners.push(Partner::of_kind("BROKER", PartnerKind::ExternalBroker));
    let directory: PartnerDirectory = partners.iter().cloned().collect();

    let mut holdings = HoldingsIndex::new();
    for lib in ["BE-NAM", "BE-MON", "FR-LIL"] {
        holdings.insert(NormalizedKey::issn("1234-5679"), lib, 1990, 2024)?;
    }
    let pods = [
        Pod::new("wallonia", ["BE-LIE", "BE-NAM", "BE-MON"].map(PartnerId::from)),
        Pod { reciprocal: false, ..Pod::new("border", ["BE-LIE", "FR-LIL"].map(PartnerId::from)) },
    ];

    let requester = LibraryId::from("BE-LIE");
    let bib = BibRef::article("Shared Print Retention", "Interlending Quarterly", 2019).with_issn("1234-5679");
    let cfg = RoutingConfig { include_all_libraries: true, ..RoutingConfig::default() };
    let req = RotaRequest { requester: &requester, bib: &bib, flow: Flow::NonReturnable };
    let inputs = RotaInputs { partners: &directory, holdings: &holdings, pod_eligible: false, load: None };
    println!("rota: {}", build_rota(req, &cfg, &pods, inputs)?);

    let mut view = LoadView::new(reference_epoch());
    view.loads.insert("BE-NAM".into(), 3);
    let pool: Vec<&Partner> = partners.iter().filter(|p| p.kind == PartnerKind::NetworkNode).collect();
    let ranked: Vec<String> = rank_partners(&pool, &view).iter().map(ToString::to_string).collect();
    println!("ranked with BE-NAM busy: {}", ranked.join(" > "));

    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    for _ in 0..40 {
        let pick = select_partner(&pool, &view).expect("pool is not empty");
        view.record_assignment(&pick);
        *counts.entry(pick.to_string()).or_default() += 1;
    }
    println!("40 assignments: {counts:?}");
    Ok(())
}

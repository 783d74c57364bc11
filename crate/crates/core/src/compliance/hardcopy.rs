use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::ComplianceError;
use crate::clock::Timestamp;

pub const SED_DPI: u32 = 200;

pub const DEFAULT_DISCLAIMER: &str = "This copy is supplied for the private study of the requesting patron. \
Print it once and delete the electronic file. Further copying or redistribution is not permitted.";

/// One page of the document to be copied, as handed over by the scanner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePage {
    pub ordinal: u32,
    pub descriptor: String,
}

impl SourcePage {
    pub fn new(ordinal: u32, descriptor: impl Into<String>) -> Self {
        SourcePage { ordinal, descriptor: descriptor.into() }
    }

    /// `count` pages numbered from 1 with synthetic descriptors.
    pub fn synthetic(count: u32) -> Vec<SourcePage> {
        (1..=count).map(|n| SourcePage::new(n, format!("page-{n}"))).collect()
    }
}

/// A page after conversion to an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterPage {
    pub ordinal: u32,
    pub dpi: u32,
    pub width_px: u32,
    pub height_px: u32,
}

/// Converts pages to images at a fixed resolution.
pub trait Rasterizer {
    fn rasterize(&self, page: &SourcePage, dpi: u32) -> Result<RasterPage, String>;
}

/// Emits A4-sized page descriptors without touching any image data.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticRasterizer;

impl Rasterizer for SyntheticRasterizer {
    fn rasterize(&self, page: &SourcePage, dpi: u32) -> Result<RasterPage, String> {
        // A4 is 8.27 x 11.69 inches.
        Ok(RasterPage { ordinal: page.ordinal, dpi, width_px: dpi * 827 / 100, height_px: dpi * 1169 / 100 })
    }
}

/// Fails on the given page ordinal.
#[derive(Debug, Clone, Copy)]
pub struct FailingRasterizer(pub u32);

impl Rasterizer for FailingRasterizer {
    fn rasterize(&self, page: &SourcePage, dpi: u32) -> Result<RasterPage, String> {
        if page.ordinal == self.0 {
            Err(format!("page {} could not be decoded", page.ordinal))
        } else {
            SyntheticRasterizer.rasterize(page, dpi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardcopyOptions {
    pub dpi: u32,
    pub disclaimer_text: String,
    pub retention_days: i64,
    pub delete_after_first_download: bool,
}

impl Default for HardcopyOptions {
    fn default() -> Self {
        HardcopyOptions {
            dpi: SED_DPI,
            disclaimer_text: DEFAULT_DISCLAIMER.to_string(),
            retention_days: 7,
            delete_after_first_download: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PageKind {
    Disclaimer,
    Content,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPage {
    pub ordinal: u32,
    pub kind: PageKind,
}

/// The machine-readable description of a package. Field order is fixed, so
/// `serde_json::to_string` is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub package_id: String,
    pub dpi: u32,
    pub pages: Vec<ManifestPage>,
    pub created_at: Timestamp,
    pub retention_until: Timestamp,
    pub delete_after_first_download: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryPackage {
    pub package_id: String,
    /// Source pages plus the disclaimer.
    pub page_count: u32,
    pub dpi: u32,
    pub disclaimer_text: String,
    pub created_at: Timestamp,
    pub retention_until: Timestamp,
    pub delete_after_first_download: bool,
    pub downloaded: bool,
    pub pages: Vec<RasterPage>,
}

impl DeliveryPackage {
    pub fn source_page_count(&self) -> u32 {
        self.page_count - 1
    }

    pub fn manifest(&self) -> Manifest {
        let mut pages = vec![ManifestPage { ordinal: 0, kind: PageKind::Disclaimer }];
        pages.extend(self.pages.iter().map(|p| ManifestPage { ordinal: p.ordinal, kind: PageKind::Content }));
        Manifest {
            package_id: self.package_id.clone(),
            dpi: self.dpi,
            pages,
            created_at: self.created_at,
            retention_until: self.retention_until,
            delete_after_first_download: self.delete_after_first_download,
        }
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string(&self.manifest()).expect("manifest serializes")
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        self.retention_until < now
    }
}

/// Rasterizes every page and prepends the disclaimer page.
pub fn make_hardcopy(
    package_id: impl Into<String>,
    source_pages: &[SourcePage],
    rasterizer: &dyn Rasterizer,
    options: &HardcopyOptions,
    now: Timestamp,
) -> Result<DeliveryPackage, ComplianceError> {
    if source_pages.is_empty() {
        return Err(ComplianceError::EmptySource);
    }
    let pages = source_pages
        .iter()
        .map(|p| rasterizer.rasterize(p, options.dpi).map_err(ComplianceError::RasterizerFailure))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(bad) = pages.iter().find(|p| p.dpi != options.dpi) {
        return Err(ComplianceError::RasterizerFailure(format!("page {} came back at {} dpi", bad.ordinal, bad.dpi)));
    }
    let page_count = u32::try_from(pages.len() + 1).map_err(|_| ComplianceError::RasterizerFailure("too many pages".into()))?;
    Ok(DeliveryPackage {
        package_id: package_id.into(),
        page_count,
        dpi: options.dpi,
        disclaimer_text: options.disclaimer_text.clone(),
        created_at: now,
        retention_until: now + Duration::days(options.retention_days),
        delete_after_first_download: options.delete_after_first_download,
        downloaded: false,
        pages,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurgeRecord {
    pub package_id: String,
    pub at: Timestamp,
    pub reason: String,
}

/// Packages held for download, with an audit trail of purges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageRegistry {
    packages: BTreeMap<String, DeliveryPackage>,
    audit: Vec<PurgeRecord>,
    next: u64,
}

impl PackageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}-PKG-{:06}", self.next)
    }

    pub fn insert(&mut self, package: DeliveryPackage) {
        self.packages.insert(package.package_id.clone(), package);
    }

    pub fn get(&self, id: &str) -> Option<&DeliveryPackage> {
        self.packages.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DeliveryPackage> {
        self.packages.values()
    }

    pub fn len(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn audit_log(&self) -> &[PurgeRecord] {
        &self.audit
    }

    pub fn mark_downloaded(&mut self, id: &str) -> Result<(), ComplianceError> {
        let pkg = self.packages.get_mut(id).ok_or_else(|| ComplianceError::UnknownPackage(id.to_string()))?;
        pkg.downloaded = true;
        Ok(())
    }

    /// Removes packages past retention and downloaded single-shot ones.
    pub fn purge_expired(&mut self, now: Timestamp) -> Vec<String> {
        let mut purged = Vec::new();
        self.packages.retain(|id, pkg| {
            let reason = if pkg.is_expired(now) {
                Some("retention elapsed")
            } else if pkg.delete_after_first_download && pkg.downloaded {
                Some("downloaded once")
            } else {
                None
            };
            match reason {
                Some(reason) => {
                    self.audit.push(PurgeRecord { package_id: id.clone(), at: now, reason: reason.into() });
                    purged.push(id.clone());
                    false
                }
                None => true,
            }
        });
        purged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::reference_epoch;

    #[test]
    fn twelve_pages_make_thirteen_entries() {
        let pkg = make_hardcopy("P1", &SourcePage::synthetic(12), &SyntheticRasterizer, &HardcopyOptions::default(), reference_epoch())
            .unwrap();
        assert_eq!(pkg.page_count, 13);
        let m = pkg.manifest();
        assert_eq!(m.pages.len(), 13);
        assert_eq!(m.pages[0].kind, PageKind::Disclaimer);
        assert_eq!(m.dpi, 200);
    }

    #[test]
    fn manifest_json_is_exact() {
        let pkg = make_hardcopy("P1", &SourcePage::synthetic(1), &SyntheticRasterizer, &HardcopyOptions::default(), reference_epoch())
            .unwrap();
        assert_eq!(
            pkg.manifest_json(),
            r#"{"package_id":"P1","dpi":200,"pages":[{"ordinal":0,"kind":"disclaimer"},{"ordinal":1,"kind":"content"}],"created_at":"2024-01-01T00:00:00Z","retention_until":"2024-01-08T00:00:00Z","delete_after_first_download":false}"#
        );
    }

    #[test]
    fn failures() {
        let opts = HardcopyOptions::default();
        assert_eq!(make_hardcopy("P", &[], &SyntheticRasterizer, &opts, reference_epoch()), Err(ComplianceError::EmptySource));
        assert!(matches!(
            make_hardcopy("P", &SourcePage::synthetic(3), &FailingRasterizer(2), &opts, reference_epoch()),
            Err(ComplianceError::RasterizerFailure(_))
        ));
    }

    #[test]
    fn purge_rules() {
        let t0 = reference_epoch();
        let mut reg = PackageRegistry::new();
        let opts = HardcopyOptions::default();
        let single = HardcopyOptions { delete_after_first_download: true, ..opts.clone() };
        reg.insert(make_hardcopy("keep", &SourcePage::synthetic(2), &SyntheticRasterizer, &opts, t0).unwrap());
        reg.insert(make_hardcopy("once", &SourcePage::synthetic(2), &SyntheticRasterizer, &single, t0).unwrap());
        reg.mark_downloaded("once").unwrap();
        assert_eq!(reg.purge_expired(t0 + Duration::days(6)), vec!["once".to_string()]);
        assert!(reg.purge_expired(t0 + Duration::days(7)).is_empty(), "retention is inclusive of day 7");
        assert_eq!(reg.purge_expired(t0 + Duration::days(8)), vec!["keep".to_string()]);
        assert_eq!(reg.audit_log().len(), 2);
    }
}

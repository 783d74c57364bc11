//! Core model for federated interlibrary resource sharing.
//!
//! Everything here is synchronous and free of I/O apart from CSV readers
//! over `std::io::Read`. Time comes from an injected [`clock::Clock`] and
//! money is integer cents.
//!
//! * [`bibliography`]: citations, identifiers, OpenURL and open-access lookup
//! * [`request`]: the request state machine and its engine
//! * [`routing`]: partners, holdings, rotas and load-aware selection
//! * [`acquisition`]: purchase triggers and evidence-based selection
//! * [`compliance`]: licence gating, hardcopy packages and delivery
//! * [`ledger`]: lending balance, invoices, statistics and cost scenarios

pub mod acquisition;
pub mod bibliography;
pub mod clock;
pub mod compliance;
pub mod ids;
pub mod ledger;
pub mod money;
pub mod request;
pub mod routing;

pub use money::Money;

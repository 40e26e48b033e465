//! Event model, URL anonymization, storage, reconstruction and analytics for
//! privacy-preserving browser interaction logs.

pub mod event;
pub mod analytics;
pub mod interval;
pub mod navigation;
pub mod reconstruct;
pub mod report;
pub mod simulator;
pub mod store;
pub mod url_privacy;

pub use event::{EventRecord, Family, Millis};
pub use reconstruct::{reconstruct, ReconstructionConfig, SessionTimeline};
pub use url_privacy::{hash_url, UrlDigest, UrlLevel};

//! Cross-modal feature learning between event-camera streams and color images.
//!
//! The crate covers the whole pipeline: event streams and their EVT file
//! format, a DVS simulator with a procedural toy dataset, event-image
//! encoders, a small reverse-mode autodiff core with the generator /
//! classifier / discriminator networks and their losses, alternating
//! adversarial training, and Euclidean retrieval with mAP and acc@K.

pub mod encode;
pub mod event;
pub mod ingest;
pub mod neural;
pub mod par;
pub mod raster;
pub mod retrieval;
pub mod train;

pub mod channel;
pub mod construction;
pub mod polar_core;
pub mod reconcile;
pub mod bench;

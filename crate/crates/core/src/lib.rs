//! Cold-chain custody ledger.

pub mod bench;
pub mod contract;
pub mod exec;
pub mod ledger;
pub mod store;
pub mod sensor;
pub mod sim;
pub mod types;

pub use exec::Exec;

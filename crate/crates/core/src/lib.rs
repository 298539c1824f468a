pub mod basis;
pub mod collective;
pub mod config;
pub mod error;
pub mod evolution;
pub mod lambda;
pub mod liouville;
pub mod oracle;
pub mod run;
pub mod sparse;

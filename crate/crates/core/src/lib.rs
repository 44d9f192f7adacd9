pub mod kb;
pub mod rules;
pub mod dsl;
pub mod olap;
pub mod retrieval;
pub mod notify;
pub mod runtime;

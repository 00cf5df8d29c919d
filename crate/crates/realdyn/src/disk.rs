//! Placeholder.
use thiserror::Error;
#[derive(Error, Debug)]
pub enum TraceError {
    #[error("placeholder")]
    Todo,
}

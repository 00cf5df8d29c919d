//! Placeholder.
use thiserror::Error;
#[derive(Error, Debug)]
pub enum ConjError {
    #[error("placeholder")]
    Todo,
}

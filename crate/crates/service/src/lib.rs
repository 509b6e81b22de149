//! HTTP service and command-line front end for the fairaudit toolkit.

pub mod cli;
pub mod error;
pub mod http;
pub mod ops;
pub mod state;

pub use error::{ServiceError, ServiceResult};

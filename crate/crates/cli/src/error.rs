//! Exit-code classification.

use std::fmt;

use topicseg::ingest::IngestError;
use topicseg::topics::TopicError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_UPSTREAM: i32 = 3;

/// Misuse of the tool: bad configuration or stages run out of order.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Map an error chain to an exit code. Anything not recognized as usage or
/// upstream counts as a data error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<IngestError>() {
            if e.is_upstream() {
                return EXIT_UPSTREAM;
            }
        }
        if let Some(e) = cause.downcast_ref::<TopicError>() {
            if e.is_upstream() {
                return EXIT_UPSTREAM;
            }
        }
    }
    EXIT_DATA
}

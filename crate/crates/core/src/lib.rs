pub mod beta;
pub mod corpus;
pub mod elicitation;
pub mod error;
pub mod extraction;
pub mod money;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod pipeline;
pub mod report;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod wire;

pub use error::{Error, Result};
pub use money::Money;

//! File formats, reports, synthetic workloads and ablation sweeps.

mod bench;
mod formats;
mod generate;
mod report;

pub use bench::*;
pub use formats::*;
pub use generate::*;
pub use report::*;

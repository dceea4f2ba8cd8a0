//! Run manifest: what was run, with which settings, and what it produced.

use std::path::PathBuf;

use barcode_growth::orbit_enum::EnumConfig;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub enumeration: EnumConfig,
    pub resolution: usize,
    pub threads: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub bgrowth: &'static str,
    pub barcode_growth: &'static str,
}

/// No timestamps: identical runs give byte-identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: RunConfig,
    pub versions: Versions,
    /// Artifact file names, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: String, argv: Vec<String>, config: RunConfig) -> Self {
        Manifest {
            command,
            argv,
            config,
            versions: Versions {
                bgrowth: env!("CARGO_PKG_VERSION"),
                barcode_growth: barcode_growth::VERSION,
            },
            outputs: Vec::new(),
        }
    }
}

//! Constructive side of barcode growth for toric-integrable systems.
//!
//! The crate enumerates closed Reeb orbit classes of toric domains and fixed
//! tori of completely integrable Hamiltonians on toric manifolds, counts the
//! generators of the corresponding Floer-type complexes, and certifies
//! polynomial upper bounds `C_n s^n + C_0` on them. Around that kernel sit the
//! persistence tools needed to talk about barcodes (counting, truncation,
//! bottleneck distance, matrix reduction), a mollification pipeline for
//! non-smooth convex domains, and log-ratio bounds on the symplectic
//! Banach–Mazur distance between radial domains.
//!
//! Modules:
//! - [`barcode`]: bars, barcodes, `b_ε(s)`, truncation, bottleneck distance, growth fits.
//! - [`filtered_complex`]: filtered complexes over `F_p`, reduction and a rank oracle.
//! - [`toric_geometry`]: radial descriptors, faces, Gauss maps, period coefficients.
//! - [`orbit_enum`]: orbit-class enumeration, generator counts, bound certificates.
//! - [`delzant`]: Delzant polytopes, face lattices and fixed-point counts of `φ_H^k`.
//! - [`mollify`]: mollification of non-smooth convex radial profiles.
//! - [`bm_metric`]: Banach–Mazur upper bounds and ladder `b_ε` estimates.

pub mod barcode;
pub mod bm_metric;
pub mod delzant;
pub mod error;
pub mod filtered_complex;
pub mod mollify;
pub mod orbit_enum;
pub mod toric_geometry;

mod linalg;
mod simplex;

pub use barcode::{Bar, Barcode, GrowthSamples};
pub use error::{Error, Result};
pub use filtered_complex::FilteredComplex;
pub use orbit_enum::{BoundCertificate, GeneratorCount, OrbitClass};
pub use toric_geometry::{Descriptor, Face, ToricDomain};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

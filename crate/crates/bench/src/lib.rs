//! Fixed scenes for the benchmarks.

use crownmerge::{generate_random, generate_ring, LabeledRaster};

/// The ring scene used for acceptance: 8 ring ISOLs and 4 outliers.
pub fn ring() -> LabeledRaster {
    generate_ring(0, 8, 2, 4, 192).expect("ring fits").raster
}

/// `n` random blobs on a `size` square.
pub fn random(n: usize, size: usize) -> LabeledRaster {
    generate_random(17, n, size).expect("scene fits").raster
}

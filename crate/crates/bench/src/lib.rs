//! Seeded fixtures shared by the benchmarks.

use barcode_growth::barcode::{Bar, Barcode};
use barcode_growth::filtered_complex::random_simplicial;
use barcode_growth::FilteredComplex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random simplicial complex over `F_2` with between `max_generators / 2`
/// and `max_generators` simplices.
pub fn complex(seed: u64, max_generators: usize) -> FilteredComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let c = random_simplicial(&mut rng, max_generators, 2, true).expect("valid generator budget");
        if 2 * c.len() >= max_generators {
            return c;
        }
    }
}

/// Random barcode with `bars` finite bars and one infinite bar.
pub fn barcode(seed: u64, bars: usize) -> Barcode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Bar> = (0..bars)
        .map(|_| {
            let a = rng.gen_range(0.0..10.0);
            Bar::new(a, a + rng.gen_range(0.01..3.0)).expect("positive length")
        })
        .collect();
    out.push(Bar::infinite(rng.gen_range(0.0..1.0)).expect("finite start"));
    Barcode::new(out)
}

//! Synthetic datasets and CSV persistence.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mmd::SampleSet;

/// Mixture centers of the grid benchmark: the lattice {-4,-2,0,2,4}^2,
/// enumerated row-major.
pub fn grid_centers() -> Vec<Vec<f64>> {
    let axis = [-4.0, -2.0, 0.0, 2.0, 4.0];
    let mut centers = Vec::with_capacity(25);
    for &cx in &axis {
        for &cy in &axis {
            centers.push(vec![cx, cy]);
        }
    }
    centers
}

/// Isotropic noise level of the grid mixture.
pub const GRID_SIGMA: f64 = 0.05;

/// Draw `n` samples from the 25-Gaussian grid mixture: a uniformly chosen
/// center plus isotropic normal noise with sigma 0.05.
pub fn grid_dataset(n: usize, seed: u64) -> SampleSet {
    let centers = grid_centers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        points.push(vec![c[0] + GRID_SIGMA * dx, c[1] + GRID_SIGMA * dy]);
    }
    SampleSet::new(2, points).expect("grid samples are 2-d")
}

/// `n` i.i.d. draws from the standard normal in `R^h`.
pub fn gaussian_prior_sample(n: usize, h: usize, seed: u64) -> Result<SampleSet> {
    if h == 0 {
        return Err(Error::invalid("prior dimension must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(prior_from_rng(&mut rng, n, h))
}

/// Draw `n` standard-normal points from an existing stream. Used by the
/// training loop so every draw comes from one seeded sequence.
pub fn prior_from_rng(rng: &mut ChaCha8Rng, n: usize, h: usize) -> SampleSet {
    let points = (0..n)
        .map(|_| (0..h).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    SampleSet::new(h, points).expect("prior samples are h-d")
}

/// Format a float so that parsing the text recovers the value bit-exactly
/// (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one sample per row, comma-separated, 17 significant digits.
pub fn write_csv(path: impl AsRef<Path>, set: &SampleSet) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for point in set.points() {
        let row: Vec<String> = point.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a sample set written by [`write_csv`]. Ragged or malformed rows are
/// reported with their line number; an empty file has no inferable
/// dimension and is an error.
pub fn read_csv(path: impl AsRef<Path>) -> Result<SampleSet> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut dim = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("not a number: `{}`", field.trim()),
            })?;
            row.push(v);
        }
        if points.is_empty() {
            dim = row.len();
        } else if row.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {dim} fields, found {}", row.len()),
            });
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::invalid(
            "empty CSV: no rows to infer the sample dimension from",
        ));
    }
    SampleSet::new(dim, points)
}

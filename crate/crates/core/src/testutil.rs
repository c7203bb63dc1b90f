//! Helpers shared by the unit tests.

/// Relative disagreement with a floor, so near-zero quantities are compared
/// absolutely instead of blowing up the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

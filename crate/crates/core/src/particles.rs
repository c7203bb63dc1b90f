//! Free-particle gradient descent on the MMD landscape, plus permutation
//! matching of the final configuration against the target set.
//!
//! With a Coulomb kernel the landscape has no spurious local extrema, so
//! descent should land on a permutation of the targets. The descent is
//! steepest descent with an energy safeguard: a step that would increase the
//! estimate is retried at half the step scale, and the scale recovers
//! geometrically afterwards (capped at the nominal rate). The safeguard
//! matters: near a target the smoothed kernel's curvature is of order
//! 1/epsilon^2, far stiffer than any fixed rate can handle, and an unguarded
//! step there catapults the particle away (see the module tests).

use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, kernel_grad, KernelFamily, KernelSpec};
use crate::mmd::{mmd_unbiased, SampleSet};

pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_ITERS: usize = 20_000;
pub const DEFAULT_RECORD_EVERY: usize = 100;

/// Snapshot of the descent state: iteration, energy, and the free positions
/// flattened row-major.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub energy: f64,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub positions: SampleSet,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Set when the kernel is not Coulomb: the permutation-optimum claim
    /// does not apply and the run is a comparison.
    pub comparison_mode: bool,
}

/// Gradient descent of `init` toward `targets` under `spec`'s kernel.
///
/// Particles are visited in index order; each takes a backtracking step
/// against its own gradient of `mmd_unbiased(targets, free)`, with a
/// per-particle step scale that halves when a move would raise the energy
/// and regrows by 1.1x on acceptance. One iteration is one sweep over all
/// particles. Recorded energies are nonincreasing by construction.
///
/// Per-particle scales are essential here. Near a target the smoothed
/// kernel's curvature is of order 1/epsilon^2, so a freshly captured
/// particle tolerates only O(epsilon^2 / lr)-sized scales, while far
/// particles sit in an almost flat field (the U-statistic coefficients
/// cancel the net monopole) and need scales far above `lr` to move at all.
/// No single global rate serves both; fixed steps additionally catapult
/// particles off the stiff core (worst for h = 3).
pub fn particle_descent(
    spec: &KernelSpec,
    targets: &SampleSet,
    init: &SampleSet,
    lr: f64,
    iters: usize,
    record_every: usize,
) -> Result<DescentResult> {
    if targets.dim() != init.dim() {
        return Err(Error::DimensionMismatch(targets.dim(), init.dim()));
    }
    if !(lr > 0.0) || record_every == 0 {
        return Err(Error::invalid("lr and record_every must be positive"));
    }
    if targets.len() <= spec.h || init.len() <= spec.h {
        return Err(Error::invalid(format!(
            "need more particles than the latent dimension (N > h = {})",
            spec.h
        )));
    }
    for (i, a) in targets.points().iter().enumerate() {
        for b in targets.points().iter().skip(i + 1) {
            if a == b {
                return Err(Error::invalid("targets must be pairwise distinct"));
            }
        }
    }
    let comparison_mode = spec.family != KernelFamily::Coulomb;

    let mut free = init.clone();
    let energy = mmd_unbiased(spec, targets, &free)?;
    // Acceptance below is per particle: moving one particle changes the
    // total energy by exactly the difference of its own interaction terms.
    let mut scales = vec![lr; free.len()];
    let mut trajectory = Vec::with_capacity(iters / record_every + 2);
    let record =
        |trajectory: &mut Vec<TrajectoryRecord>, iter: usize, energy: f64, set: &SampleSet| {
            trajectory.push(TrajectoryRecord {
                iter,
                energy,
                positions: set.points().iter().flatten().copied().collect(),
            });
        };
    record(&mut trajectory, 0, energy, &free);

    let nq = free.len() as f64;
    let np = targets.len() as f64;
    let self_coeff = 2.0 / (nq * (nq - 1.0));
    let cross_coeff = 2.0 / (np * nq);

    // Interaction of particle `m` (at `at`) with the rest of the system,
    // with the estimator's coefficients. Moving only `m` changes the energy
    // by the difference of this quantity.
    let interaction = |points: &[Vec<f64>], m: usize, at: &[f64]| -> Result<f64> {
        let mut e = 0.0;
        for (j, qj) in points.iter().enumerate() {
            if j != m {
                e += self_coeff * kernel_eval(spec, at, qj)?;
            }
        }
        for p in targets.points() {
            e -= cross_coeff * kernel_eval(spec, at, p)?;
        }
        Ok(e)
    };

    for it in 1..=iters {
        for m in 0..free.len() {
            let grad = point_grad(spec, targets, &free, m, self_coeff, cross_coeff)?;
            if grad.iter().all(|g| *g == 0.0) {
                continue;
            }
            let current = interaction(free.points(), m, &free.points()[m])?;
            let scale_in = scales[m];
            let mut scale = scale_in;
            let mut accepted = false;
            for _ in 0..40 {
                let candidate: Vec<f64> = free.points()[m]
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| x - scale * g)
                    .collect();
                let trial = interaction(free.points(), m, &candidate)?;
                if trial <= current {
                    free.set_point(m, candidate)?;
                    scales[m] = (scale * 1.1).min(MAX_SCALE);
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                // Blocked along its own gradient; retry next sweep a notch
                // slower once the rest of the system has moved.
                scales[m] = scale_in * 0.5;
            }
        }
        let energy = mmd_unbiased(spec, targets, &free)?;
        if it % record_every == 0 || it == iters {
            record(&mut trajectory, it, energy, &free);
        }
    }

    Ok(DescentResult {
        positions: free,
        trajectory,
        comparison_mode,
    })
}

const MAX_SCALE: f64 = 1e9;

/// Gradient of the estimator with respect to the single particle `m`.
fn point_grad(
    spec: &KernelSpec,
    targets: &SampleSet,
    free: &SampleSet,
    m: usize,
    self_coeff: f64,
    cross_coeff: f64,
) -> Result<Vec<f64>> {
    let qm = &free.points()[m];
    let mut g = vec![0.0; free.dim()];
    for (j, qj) in free.points().iter().enumerate() {
        if j != m {
            let kg = kernel_grad(spec, qm, qj)?;
            for (gi, ki) in g.iter_mut().zip(&kg) {
                *gi += self_coeff * ki;
            }
        }
    }
    for p in targets.points() {
        let kg = kernel_grad(spec, qm, p)?;
        for (gi, ki) in g.iter_mut().zip(&kg) {
            *gi -= cross_coeff * ki;
        }
    }
    Ok(g)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Find a bijection `pi` with `|q_i - t_{pi(i)}| <= tol` for every `i`, if
/// one exists. Exhaustive search up to 8 points; minimum-cost assignment on
/// the distance matrix (then the tolerance check) beyond that.
pub fn match_permutation(
    q: &SampleSet,
    targets: &SampleSet,
    tol: f64,
) -> Result<Option<Vec<usize>>> {
    if q.len() != targets.len() {
        return Err(Error::DimensionMismatch(q.len(), targets.len()));
    }
    if q.dim() != targets.dim() {
        return Err(Error::DimensionMismatch(q.dim(), targets.dim()));
    }
    if tol < 0.0 {
        return Err(Error::invalid("tolerance must be >= 0"));
    }
    let n = q.len();
    if n == 0 {
        return Ok(Some(Vec::new()));
    }
    let dist: Vec<Vec<f64>> = q
        .points()
        .iter()
        .map(|a| targets.points().iter().map(|b| distance(a, b)).collect())
        .collect();

    if n <= 8 {
        let mut assigned = vec![usize::MAX; n];
        let mut used = vec![false; n];
        if search(&dist, tol, 0, &mut assigned, &mut used) {
            Ok(Some(assigned))
        } else {
            Ok(None)
        }
    } else {
        let assignment = hungarian_min_cost(&dist);
        let feasible = assignment
            .iter()
            .enumerate()
            .all(|(i, &j)| dist[i][j] <= tol);
        Ok(feasible.then_some(assignment))
    }
}

fn search(
    dist: &[Vec<f64>],
    tol: f64,
    i: usize,
    assigned: &mut [usize],
    used: &mut [bool],
) -> bool {
    if i == dist.len() {
        return true;
    }
    for j in 0..dist.len() {
        if !used[j] && dist[i][j] <= tol {
            used[j] = true;
            assigned[i] = j;
            if search(dist, tol, i + 1, assigned, used) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

/// O(n^3) Hungarian algorithm with potentials; returns, for each row, the
/// column of a minimum-total-cost perfect assignment.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_row = vec![0usize; n + 1]; // row matched to each column, 1-based; 0 = free
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if col_row[j] > 0 {
            assign[col_row[j] - 1] = j - 1;
        }
    }
    assign
}

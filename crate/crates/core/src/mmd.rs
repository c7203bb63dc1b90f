//! Unbiased MMD estimation and signed-charge energy landscapes.
//!
//! `mmd_unbiased` is a U-statistic: the same-set sums skip the diagonal so
//! the estimator is unbiased for the squared population discrepancy, and it
//! can go negative. Sample counts may differ between the two sets; the
//! coefficients become `1/(Np(Np-1))`, `-2/(Np*Nq)`, `1/(Nq(Nq-1))`.
//!
//! `ChargeSystem` carries signed point charges. Its pair energy (excluding
//! self-interactions) is the discrete analogue of the MMD regularizer and is
//! what the landscape scans plot: positive charges stand in for prior
//! samples, negative ones for encoded samples.
//!
//! Summation order is fixed (row-major over index pairs) so results are
//! bit-reproducible.

use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, kernel_grad, KernelSpec};

/// An ordered collection of equal-dimension points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sample dimension must be >= 1"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(p.len(), dim));
            }
        }
        Ok(SampleSet { dim, points })
    }

    /// Empty set with a declared dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        SampleSet::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn push(&mut self, point: Vec<f64>) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(point.len(), self.dim));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn set_point(&mut self, index: usize, point: Vec<f64>) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(point.len(), self.dim));
        }
        self.points[index] = point;
        Ok(())
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    /// One sample per row.
    pub fn to_matrix(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((self.len(), self.dim));
        for (i, p) in self.points.iter().enumerate() {
            for (j, &v) in p.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    pub fn from_matrix(m: &ndarray::Array2<f64>) -> Result<Self> {
        SampleSet::new(
            m.ncols(),
            m.rows().into_iter().map(|r| r.to_vec()).collect(),
        )
    }
}

/// Signed point charges: one charge value per position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSystem {
    pub positions: Vec<Vec<f64>>,
    pub charges: Vec<f64>,
}

impl ChargeSystem {
    pub fn new(positions: Vec<Vec<f64>>, charges: Vec<f64>) -> Result<Self> {
        if positions.len() != charges.len() {
            return Err(Error::DimensionMismatch(positions.len(), charges.len()));
        }
        if let Some(first) = positions.first() {
            let dim = first.len();
            for p in &positions {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch(p.len(), dim));
                }
            }
        }
        Ok(ChargeSystem { positions, charges })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn require_pair(p: &SampleSet, q: &SampleSet) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    if p.len() < 2 || q.len() < 2 {
        return Err(Error::invalid(
            "unbiased MMD needs at least 2 samples per set",
        ));
    }
    Ok(())
}

/// Unbiased MMD^2 estimate between sample sets `p` and `q`.
pub fn mmd_unbiased(spec: &KernelSpec, p: &SampleSet, q: &SampleSet) -> Result<f64> {
    require_pair(p, q)?;
    let np = p.len() as f64;
    let nq = q.len() as f64;

    let mut self_p = 0.0;
    for (i, a) in p.points().iter().enumerate() {
        for (j, b) in p.points().iter().enumerate() {
            if i != j {
                self_p += kernel_eval(spec, a, b)?;
            }
        }
    }
    let mut self_q = 0.0;
    for (i, a) in q.points().iter().enumerate() {
        for (j, b) in q.points().iter().enumerate() {
            if i != j {
                self_q += kernel_eval(spec, a, b)?;
            }
        }
    }
    let mut cross = 0.0;
    for a in p.points() {
        for b in q.points() {
            cross += kernel_eval(spec, a, b)?;
        }
    }

    Ok(self_p / (np * (np - 1.0)) - 2.0 * cross / (np * nq) + self_q / (nq * (nq - 1.0)))
}

/// Gradient of `mmd_unbiased(p, q)` with respect to each point of `q`.
pub fn mmd_grad_q(spec: &KernelSpec, p: &SampleSet, q: &SampleSet) -> Result<Vec<Vec<f64>>> {
    require_pair(p, q)?;
    let np = p.len() as f64;
    let nq = q.len() as f64;
    let self_coeff = 2.0 / (nq * (nq - 1.0));
    let cross_coeff = 2.0 / (np * nq);

    let mut grads = Vec::with_capacity(q.len());
    for (m, qm) in q.points().iter().enumerate() {
        let mut g = vec![0.0; q.dim()];
        for (j, qj) in q.points().iter().enumerate() {
            if j != m {
                let kg = kernel_grad(spec, qm, qj)?;
                for (gi, ki) in g.iter_mut().zip(&kg) {
                    *gi += self_coeff * ki;
                }
            }
        }
        for pi in p.points() {
            let kg = kernel_grad(spec, qm, pi)?;
            for (gi, ki) in g.iter_mut().zip(&kg) {
                *gi -= cross_coeff * ki;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Pair interaction energy `sum_{i<j} q_i q_j k(z_i, z_j)`.
///
/// Self terms (`i = j`) are excluded: under a singular Coulomb kernel they
/// are position-independent infinities that shift but never reshape the
/// landscape.
pub fn charge_energy(spec: &KernelSpec, sys: &ChargeSystem) -> Result<f64> {
    let mut energy = 0.0;
    for i in 0..sys.len() {
        for j in (i + 1)..sys.len() {
            energy +=
                sys.charges[i] * sys.charges[j] * kernel_eval(spec, &sys.positions[i], &sys.positions[j])?;
        }
    }
    Ok(energy)
}

/// Energy samples of a landscape scan; `None` marks a singular cell (a free
/// charge coincided with a fixed one under an exact Coulomb kernel).
#[derive(Debug, Clone, PartialEq)]
pub enum Landscape {
    /// One free charge: energies along `grid`.
    Line {
        grid: Vec<f64>,
        energy: Vec<Option<f64>>,
    },
    /// Two free charges: `energy[i][j]` for positions `(grid[i], grid[j])`.
    /// Exchange-symmetric by construction, bitwise.
    Heat {
        grid: Vec<f64>,
        energy: Vec<Vec<Option<f64>>>,
    },
}

/// Scan the energy of `fixed` plus one or two free unit negative charges
/// over `grid` locations (1-D positions).
pub fn landscape_scan(
    spec: &KernelSpec,
    fixed: &ChargeSystem,
    n_free: usize,
    grid: &[f64],
) -> Result<Landscape> {
    if fixed.is_empty() || fixed.charges.iter().any(|&c| c <= 0.0) {
        return Err(Error::invalid(
            "landscape scan requires fixed charges to be positive",
        ));
    }
    if fixed.positions[0].len() != 1 {
        return Err(Error::invalid("landscape scan is one-dimensional"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }

    let eval_at = |free: &[f64]| -> Result<Option<f64>> {
        let mut positions = fixed.positions.clone();
        let mut charges = fixed.charges.clone();
        for &z in free {
            positions.push(vec![z]);
            charges.push(-1.0);
        }
        let sys = ChargeSystem::new(positions, charges)?;
        match charge_energy(spec, &sys) {
            Ok(e) => Ok(Some(e)),
            Err(Error::Singularity) => Ok(None),
            Err(e) => Err(e),
        }
    };

    match n_free {
        1 => {
            let mut energy = Vec::with_capacity(grid.len());
            for &z in grid {
                energy.push(eval_at(&[z])?);
            }
            Ok(Landscape::Line {
                grid: grid.to_vec(),
                energy,
            })
        }
        2 => {
            // Fill i <= j and mirror, so the scan is exchange-symmetric
            // bitwise regardless of summation order.
            let n = grid.len();
            let mut energy = vec![vec![None; n]; n];
            for i in 0..n {
                for j in i..n {
                    let e = eval_at(&[grid[i], grid[j]])?;
                    energy[i][j] = e;
                    energy[j][i] = e;
                }
            }
            Ok(Landscape::Heat {
                grid: grid.to_vec(),
                energy,
            })
        }
        other => Err(Error::invalid(format!(
            "n_free must be 1 or 2, got {other}"
        ))),
    }
}

/// Count strict interior local minima of a 1-D array. A plateau of equal
/// values counts once, provided the array strictly descends into it and
/// strictly ascends out of it.
pub fn count_local_minima(values: &[f64]) -> Result<usize> {
    if values.len() < 3 {
        return Err(Error::invalid(
            "local-minima counting needs at least 3 values",
        ));
    }
    let mut count = 0;
    let mut i = 1;
    while i < values.len() {
        if values[i] < values[i - 1] {
            // Descended; skip the plateau of equal values, then check for a
            // strict ascent.
            let mut j = i;
            while j + 1 < values.len() && values[j + 1] == values[j] {
                j += 1;
            }
            if j + 1 < values.len() && values[j + 1] > values[j] {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(count)
}

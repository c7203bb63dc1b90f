//! Closed-form kernels and their gradients.
//!
//! The Coulomb kernel is the fundamental solution of the Poisson equation in
//! `R^h`; away from the singularity it is harmonic, which is what gives the
//! MMD landscape its global attraction/repulsion structure. Gaussian and
//! inverse-multiquadric kernels are provided for comparison runs.
//!
//! All Coulomb forms take the squared distance with an additive `epsilon^2`
//! smoothing term, so `epsilon > 0` keeps value and gradient finite at
//! coincident points. With `epsilon = 0` the `h = 2` and `h > 2` forms
//! diverge at coincidence and evaluating them there is an error; the `h = 1`
//! form `-|r|/2` stays finite (its gradient at zero still does not exist).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Coulomb,
    Gaussian,
    Imq,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::Coulomb => write!(f, "coulomb"),
            KernelFamily::Gaussian => write!(f, "gaussian"),
            KernelFamily::Imq => write!(f, "imq"),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coulomb" => Ok(KernelFamily::Coulomb),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "imq" => Ok(KernelFamily::Imq),
            other => Err(Error::invalid(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel selector: family plus the parameters the family actually reads.
///
/// `h` drives the Coulomb exponent (`beta = h - 2`) and the default IMQ
/// offset; `epsilon` is the singularity-smoothing length; `sigma` is the
/// Gaussian bandwidth; `c` the IMQ offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub h: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub c: f64,
}

/// Smoothing length used for training and particle descent.
pub const DEFAULT_EPSILON: f64 = 1e-3;

impl KernelSpec {
    /// Coulomb kernel for latent dimension `h` with smoothing `epsilon`.
    pub fn coulomb(h: usize, epsilon: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Coulomb,
            h,
            epsilon,
            sigma: 1.0,
            c: 2.0 * h as f64,
        }
    }

    /// Gaussian kernel with bandwidth `sigma`.
    pub fn gaussian(h: usize, sigma: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            h,
            epsilon: 0.0,
            sigma,
            c: 2.0 * h as f64,
        }
    }

    /// Inverse multiquadric with the default offset `c = 2h`, tying the
    /// length scale to the prior's expected squared norm.
    pub fn imq(h: usize) -> Self {
        KernelSpec {
            family: KernelFamily::Imq,
            h,
            epsilon: 0.0,
            sigma: 1.0,
            c: 2.0 * h as f64,
        }
    }

    /// Inverse multiquadric with an explicit offset.
    pub fn imq_with_offset(h: usize, c: f64) -> Self {
        KernelSpec {
            c,
            ..KernelSpec::imq(h)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::invalid("kernel dimension h must be >= 1"));
        }
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite and >= 0"));
        }
        if self.family == KernelFamily::Gaussian && !(self.sigma > 0.0) {
            return Err(Error::invalid("gaussian bandwidth sigma must be > 0"));
        }
        if self.family == KernelFamily::Imq && !(self.c > 0.0) {
            return Err(Error::invalid("imq offset c must be > 0"));
        }
        Ok(())
    }
}

/// Surface area of the unit ball in `R^h`: `2 pi^{h/2} / Gamma(h/2)`.
///
/// Computed by the two-step recurrence `S_{h+2} = (2 pi / h) S_h` from
/// `S_1 = 2` and `S_2 = 2 pi`, which is exact for integer `h` without a
/// gamma-function dependency.
pub fn unit_ball_surface(h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::invalid("unit_ball_surface requires h >= 1"));
    }
    let mut s = if h % 2 == 1 {
        2.0
    } else {
        2.0 * std::f64::consts::PI
    };
    let mut k = 2 - h % 2;
    while k < h {
        s *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    Ok(s)
}

fn check_dims(z: &[f64], z2: &[f64]) -> Result<()> {
    if z.len() != z2.len() {
        return Err(Error::DimensionMismatch(z.len(), z2.len()));
    }
    Ok(())
}

fn sq_dist(z: &[f64], z2: &[f64]) -> f64 {
    z.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Kernel value `k(z, z')`. Symmetric in its arguments.
pub fn kernel_eval(spec: &KernelSpec, z: &[f64], z2: &[f64]) -> Result<f64> {
    spec.validate()?;
    check_dims(z, z2)?;
    let d2 = sq_dist(z, z2);
    match spec.family {
        KernelFamily::Coulomb => {
            let r2 = d2 + spec.epsilon * spec.epsilon;
            match spec.h {
                1 => Ok(-0.5 * r2.sqrt()),
                2 => {
                    if r2 == 0.0 {
                        return Err(Error::Singularity);
                    }
                    Ok(-r2.ln() / (4.0 * std::f64::consts::PI))
                }
                h => {
                    if r2 == 0.0 {
                        return Err(Error::Singularity);
                    }
                    let beta = (h - 2) as f64;
                    Ok(r2.powf(-beta / 2.0) / (beta * unit_ball_surface(h)?))
                }
            }
        }
        KernelFamily::Gaussian => Ok((-d2 / (2.0 * spec.sigma * spec.sigma)).exp()),
        KernelFamily::Imq => Ok(spec.c / (spec.c + d2)),
    }
}

/// Gradient of `kernel_eval` with respect to the first argument.
/// Antisymmetric: `kernel_grad(z, z') = -kernel_grad(z', z)`.
pub fn kernel_grad(spec: &KernelSpec, z: &[f64], z2: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_dims(z, z2)?;
    let d2 = sq_dist(z, z2);
    let diff: Vec<f64> = z.iter().zip(z2).map(|(a, b)| a - b).collect();
    let scale = match spec.family {
        KernelFamily::Coulomb => {
            let r2 = d2 + spec.epsilon * spec.epsilon;
            if r2 == 0.0 {
                // -|r|/2 is finite at zero for h = 1 but not differentiable.
                return Err(Error::Singularity);
            }
            match spec.h {
                1 => -0.5 / r2.sqrt(),
                h => -r2.powf(-(h as f64) / 2.0) / unit_ball_surface(h)?,
            }
        }
        KernelFamily::Gaussian => {
            let s2 = spec.sigma * spec.sigma;
            -(-d2 / (2.0 * s2)).exp() / s2
        }
        KernelFamily::Imq => {
            let denom = spec.c + d2;
            -2.0 * spec.c / (denom * denom)
        }
    };
    Ok(diff.into_iter().map(|d| d * scale).collect())
}

/// Central-finite-difference Laplacian of the kernel at `z`, holding `z'`
/// fixed. For an exact (`epsilon = 0`) Coulomb kernel away from `z'` this is
/// near zero: the kernel is harmonic off the singularity.
pub fn harmonicity_check(spec: &KernelSpec, z: &[f64], z2: &[f64], step: f64) -> Result<f64> {
    if spec.family != KernelFamily::Coulomb {
        return Err(Error::invalid(
            "harmonicity_check applies to the coulomb family only",
        ));
    }
    if spec.epsilon != 0.0 {
        return Err(Error::invalid("harmonicity_check requires epsilon = 0"));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("step must be > 0"));
    }
    check_dims(z, z2)?;
    if sq_dist(z, z2) == 0.0 {
        return Err(Error::Singularity);
    }
    let center = kernel_eval(spec, z, z2)?;
    let mut laplacian = 0.0;
    let mut probe = z.to_vec();
    for i in 0..z.len() {
        probe[i] = z[i] + step;
        let plus = kernel_eval(spec, &probe, z2)?;
        probe[i] = z[i] - step;
        let minus = kernel_eval(spec, &probe, z2)?;
        probe[i] = z[i];
        laplacian += (plus - 2.0 * center + minus) / (step * step);
    }
    Ok(laplacian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn surface_area_known_values() {
        assert_relative_eq!(unit_ball_surface(1).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(
            unit_ball_surface(2).unwrap(),
            2.0 * PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            unit_ball_surface(3).unwrap(),
            4.0 * PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            unit_ball_surface(4).unwrap(),
            2.0 * PI * PI,
            max_relative = 1e-14
        );
        assert!(unit_ball_surface(0).is_err());
    }

    #[test]
    fn coulomb_values_at_unit_distance() {
        let k3 = kernel_eval(&KernelSpec::coulomb(3, 0.0), &[1.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert_relative_eq!(k3, 1.0 / (4.0 * PI), max_relative = 1e-12);

        let k2 = kernel_eval(&KernelSpec::coulomb(2, 0.0), &[1.0, 0.0], &[0.0; 2]).unwrap();
        assert_eq!(k2, 0.0);

        let k4 = kernel_eval(
            &KernelSpec::coulomb(4, 0.0),
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0; 4],
        )
        .unwrap();
        assert_relative_eq!(k4, 1.0 / (4.0 * PI * PI), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_at_coincidence_is_one() {
        let spec = KernelSpec::gaussian(2, 1.0);
        let z = [0.3, -0.7];
        assert_eq!(kernel_eval(&spec, &z, &z).unwrap(), 1.0);
        assert_eq!(kernel_grad(&spec, &z, &z).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn coulomb_singularity_rules() {
        let z = [0.5, 0.5];
        // h = 1 stays finite at coincidence (value -epsilon/2 = 0 here) ...
        let h1 = KernelSpec::coulomb(1, 0.0);
        assert_eq!(kernel_eval(&h1, &[1.0], &[1.0]).unwrap(), 0.0);
        // ... but has no gradient there, and h >= 2 diverges outright.
        assert!(matches!(
            kernel_grad(&h1, &[1.0], &[1.0]),
            Err(Error::Singularity)
        ));
        for h in [2usize, 3, 5] {
            let spec = KernelSpec::coulomb(h, 0.0);
            let p: Vec<f64> = z.iter().cycle().take(h).cloned().collect();
            assert!(matches!(
                kernel_eval(&spec, &p, &p),
                Err(Error::Singularity)
            ));
        }
        // Smoothing removes the singularity.
        let smoothed = KernelSpec::coulomb(3, 1e-3);
        let p = [0.5, 0.5, 0.5];
        let diag = kernel_eval(&smoothed, &p, &p).unwrap();
        assert_relative_eq!(diag, 1.0 / (4.0 * PI * 1e-3), max_relative = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = KernelSpec::gaussian(2, 1.0);
        assert!(matches!(
            kernel_eval(&spec, &[1.0, 2.0], &[1.0]),
            Err(Error::DimensionMismatch(2, 1))
        ));
    }

    #[test]
    fn coulomb_gradient_known_value() {
        let g = kernel_grad(&KernelSpec::coulomb(3, 0.0), &[1.0, 0.0, 0.0], &[0.0; 3]).unwrap();
        assert_relative_eq!(g[0], -1.0 / (4.0 * PI), max_relative = 1e-12);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn symmetry_and_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            KernelSpec::coulomb(3, 1e-3),
            KernelSpec::coulomb(2, 0.0),
            KernelSpec::coulomb(1, 0.0),
            KernelSpec::gaussian(3, 1.0),
            KernelSpec::imq(3),
        ];
        for spec in &specs {
            for _ in 0..50 {
                let a = random_point(&mut rng, 3);
                let b = random_point(&mut rng, 3);
                let kab = kernel_eval(spec, &a, &b).unwrap();
                let kba = kernel_eval(spec, &b, &a).unwrap();
                assert_eq!(kab, kba, "symmetry violated for {spec:?}");
                let gab = kernel_grad(spec, &a, &b).unwrap();
                let gba = kernel_grad(spec, &b, &a).unwrap();
                for (x, y) in gab.iter().zip(&gba) {
                    assert_eq!(*x, -*y, "antisymmetry violated for {spec:?}");
                }
            }
        }
    }

    use crate::testutil::rel_err;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1e-5;
        let specs = [
            KernelSpec::coulomb(1, 1e-3),
            KernelSpec::coulomb(2, 1e-3),
            KernelSpec::coulomb(3, 0.0),
            KernelSpec::coulomb(4, 1e-2),
            KernelSpec::gaussian(3, 1.0),
            KernelSpec::gaussian(3, 0.5),
            KernelSpec::imq(3),
        ];
        for spec in &specs {
            for _ in 0..100 {
                let a = random_point(&mut rng, 3);
                let mut b = random_point(&mut rng, 3);
                // Keep clear of the singular core so central differences of
                // the exact kernel stay well conditioned.
                if sq_dist(&a, &b) < 0.01 {
                    b[0] += 0.5;
                }
                let grad = kernel_grad(spec, &a, &b).unwrap();
                for i in 0..a.len() {
                    let mut ap = a.clone();
                    let mut am = a.clone();
                    ap[i] += step;
                    am[i] -= step;
                    let fd = (kernel_eval(spec, &ap, &b).unwrap()
                        - kernel_eval(spec, &am, &b).unwrap())
                        / (2.0 * step);
                    assert!(
                        rel_err(grad[i], fd) < 1e-6,
                        "{spec:?}: grad {} vs fd {}",
                        grad[i],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn harmonicity_of_exact_coulomb() {
        let checks = [
            (2usize, vec![2.0, 0.0]),
            (3, vec![1.0, 0.0, 0.0]),
            (4, vec![0.8, 0.4, -0.3, 1.1]),
        ];
        for (h, z) in checks {
            let spec = KernelSpec::coulomb(h, 0.0);
            let lap = harmonicity_check(&spec, &z, &vec![0.0; h], 1e-3).unwrap();
            assert!(lap.abs() < 1e-4, "h={h}: laplacian {lap}");
        }
        // At several radii in [0.5, 5].
        let spec = KernelSpec::coulomb(3, 0.0);
        for r in [0.5, 1.5, 5.0] {
            let lap = harmonicity_check(&spec, &[r, 0.0, 0.0], &[0.0; 3], 1e-3).unwrap();
            assert!(lap.abs() < 1e-4);
        }
    }

    #[test]
    fn harmonicity_check_rejects_non_coulomb() {
        let spec = KernelSpec::gaussian(2, 1.0);
        assert!(harmonicity_check(&spec, &[1.0, 0.0], &[0.0, 0.0], 1e-3).is_err());
        let smoothed = KernelSpec::coulomb(2, 1e-3);
        assert!(harmonicity_check(&smoothed, &[1.0, 0.0], &[0.0, 0.0], 1e-3).is_err());
    }

    #[test]
    fn monotone_decay_in_distance() {
        let radii: Vec<f64> = (1..60).map(|i| 0.1 * i as f64).collect();
        for spec in [
            KernelSpec::coulomb(3, 0.0),
            KernelSpec::coulomb(5, 0.0),
            KernelSpec::gaussian(1, 1.0),
            KernelSpec::imq(1),
        ] {
            let dim = if spec.family == KernelFamily::Coulomb {
                spec.h
            } else {
                1
            };
            let origin = vec![0.0; dim];
            let mut prev = f64::INFINITY;
            for r in &radii {
                let mut z = vec![0.0; dim];
                z[0] = *r;
                let k = kernel_eval(&spec, &z, &origin).unwrap();
                assert!(k < prev, "{spec:?} not strictly decreasing at r={r}");
                prev = k;
            }
        }
    }

    #[test]
    fn epsilon_smoothing_converges_to_exact_kernel() {
        let z = [1.3, -0.4, 0.2];
        let z2 = [0.1, 0.5, -0.9];
        for h in [2usize, 3] {
            let exact = kernel_eval(&KernelSpec::coulomb(h, 0.0), &z, &z2).unwrap();
            let mut prev_err = f64::INFINITY;
            for eps in [1e-2, 1e-4, 1e-6] {
                let v = kernel_eval(&KernelSpec::coulomb(h, eps), &z, &z2).unwrap();
                let err = (v - exact).abs();
                assert!(err < prev_err, "h={h} eps={eps}: {err} !< {prev_err}");
                prev_err = err;
            }
        }
    }
}

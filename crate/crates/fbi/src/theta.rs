//! Jacobi theta oracle for the flat-band vectors.
//!
//! At the magic coupling the kernel vector at any `k` is the `k = 0` kernel
//! vector times a ratio of theta functions that moves its zero from the
//! origin to `r* = (|Omega| / 2 pi) (k_2, -k_1)`.

use crate::bands::FlatBandPair;
use crate::error::{Error, Result};
use crate::lattice::{MoireLattice, Vec2, MOMENTUM_TOL};
use num_complex::Complex64;
use std::f64::consts::PI;

const THETA_MAX_TERMS: usize = 200;

/// `theta_1(z | tau) = 2 sum_n (-1)^n q^{(n+1/2)^2} sin((2n+1) z)`,
/// `q = exp(i pi tau)`.
pub fn theta1(z: Complex64, tau: Complex64) -> Result<Complex64> {
    if tau.im <= 0.0 {
        return Err(Error::ThetaSeries);
    }
    let i = Complex64::i();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale: f64 = 0.0;
    for n in 0..THETA_MAX_TERMS {
        let h = n as f64 + 0.5;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let term = (i * PI * tau * h * h).exp() * ((2 * n + 1) as f64 * z).sin() * sign;
        sum += term;
        scale = scale.max(term.norm());
        if n >= 1 && term.norm() <= 1e-17 * scale {
            return Ok(sum * 2.0);
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(Error::ThetaSeries)
}

/// Zero of the kernel spinor at fiber `k`.
pub fn zero_location(lattice: &MoireLattice, k: Vec2) -> Vec2 {
    Vec2::new(k.y, -k.x) * (lattice.area / (2.0 * PI))
}

pub struct ThetaOracle<'a> {
    lattice: &'a MoireLattice,
    u0: &'a FlatBandPair,
    a1: Complex64,
    tau: Complex64,
}

impl<'a> ThetaOracle<'a> {
    pub fn new(lattice: &'a MoireLattice, u0: &'a FlatBandPair) -> Result<Self> {
        if u0.k.norm() > MOMENTUM_TOL {
            return Err(Error::Precondition("theta oracle needs the k = 0 kernel vector".into()));
        }
        let a1 = MoireLattice::complex(lattice.a1);
        let a2 = MoireLattice::complex(lattice.a2);
        Ok(ThetaOracle { lattice, u0, a1, tau: a2 / a1 })
    }

    /// `F_k(r)`, periodic in `r` with a single zero at `r*`.
    pub fn factor(&self, k: Vec2, r: Vec2) -> Result<Complex64> {
        let i = Complex64::i();
        let kc = MoireLattice::complex(k);
        let z = MoireLattice::complex(r);
        let zk = MoireLattice::complex(zero_location(self.lattice, k));
        let beta = i * 0.5 * kc * self.a1.conj() / self.a1;
        let envelope = (-i * 0.5 * kc * z.conj() + beta * z).exp();
        let num = theta1(PI * (z - zk) / self.a1, self.tau)?;
        let den = theta1(PI * z / self.a1, self.tau)?;
        Ok(envelope * num / den)
    }

    /// `F_k(r) u_0(r)` on the given points, normalized over the sample.
    pub fn sample(&self, k: Vec2, points: &[Vec2]) -> Result<Vec<[Complex64; 2]>> {
        let mut out = Vec::with_capacity(points.len());
        for &r in points {
            let f = self.factor(k, r)?;
            let u = self.u0.kernel_spinor(self.lattice, r);
            out.push([f * u[0], f * u[1]]);
        }
        normalize(&mut out);
        Ok(out)
    }
}

/// Points `((i + offset)/n) a1 + ((j + offset)/n) a2` covering the cell.
pub fn cell_samples(lattice: &MoireLattice, n: usize, offset: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(lattice.a1 * ((i as f64 + offset) / n as f64) + lattice.a2 * ((j as f64 + offset) / n as f64));
        }
    }
    out
}

pub fn normalize(v: &mut [[Complex64; 2]]) {
    let n = v.iter().map(|x| x[0].norm_sqr() + x[1].norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            x[0] /= n;
            x[1] /= n;
        }
    }
}

/// `|<a, b>| / (|a| |b|)` for sampled spinor fields.
pub fn sample_overlap(a: &[[Complex64; 2]], b: &[[Complex64; 2]]) -> f64 {
    let mut ip = Complex64::new(0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ip += x[0].conj() * y[0] + x[1].conj() * y[1];
        na += x[0].norm_sqr() + x[1].norm_sqr();
        nb += y[0].norm_sqr() + y[1].norm_sqr();
    }
    ip.norm() / (na * nb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_is_odd_and_quasi_periodic() {
        let tau = Complex64::new(-0.5, 3f64.sqrt() / 2.0);
        let z = Complex64::new(0.3, 0.2);
        let a = theta1(z, tau).unwrap();
        let b = theta1(-z, tau).unwrap();
        assert!((a + b).norm() < 1e-14);
        let c = theta1(z + PI, tau).unwrap();
        assert!((a + c).norm() < 1e-13);
        // theta_1(z + pi tau) = -exp(-i pi tau - 2 i z) theta_1(z)
        let i = Complex64::i();
        let d = theta1(z + PI * tau, tau).unwrap();
        let expect = -(-i * PI * tau - 2.0 * i * z).exp() * a;
        assert!((d - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn theta_zero_at_origin() {
        let tau = Complex64::new(0.0, 1.0);
        assert!(theta1(Complex64::new(0.0, 0.0), tau).unwrap().norm() < 1e-16);
    }

    #[test]
    fn lower_half_plane_rejected() {
        assert!(theta1(Complex64::new(0.1, 0.0), Complex64::new(0.0, -1.0)).is_err());
    }
}

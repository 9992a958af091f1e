//! Conservation laws with an entropy pair: inviscid Burgers and the
//! compressible Euler equations in one and two dimensions.
//!
//! States are plain slices of conservative variables. Two-point and
//! directional outputs are written into caller-provided buffers laid out
//! direction-major: entry `axis · n_vars + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of conserved components of any law here.
pub const MAX_VARS: usize = 4;

pub trait ConservationLaw: Clone + Send + Sync + std::fmt::Debug {
    fn n_vars(&self) -> usize;
    fn dim(&self) -> usize;

    /// Checks that `u` lies in the admissible set.
    fn validate(&self, u: &[f64]) -> Result<()>;

    fn flux(&self, u: &[f64], axis: usize, out: &mut [f64]);

    /// Convex entropy `S(u)`.
    fn entropy(&self, u: &[f64]) -> f64;

    /// `v = ∂S/∂u`.
    fn entropy_variables(&self, u: &[f64], out: &mut [f64]);

    /// Inverse of [`entropy_variables`](Self::entropy_variables).
    fn conservative_from_entropy(&self, v: &[f64], out: &mut [f64]) -> Result<()>;

    /// Entropy potential `ψ` in direction `axis`.
    fn potential(&self, u: &[f64], axis: usize) -> f64;

    /// `∂u/∂v`, column-major `n × n`.
    fn jacobian_dudv(&self, u: &[f64], out: &mut [f64]);

    /// Entropy-conservative two-point flux for every direction at once.
    /// Both states must be admissible.
    fn ec_flux(&self, ul: &[f64], ur: &[f64], out: &mut [f64]);

    /// Largest characteristic speed along the unit vector `n`.
    fn wavespeed(&self, u: &[f64], n: [f64; 2]) -> f64;

    /// Exterior state imposing a slip wall (or the state itself where the
    /// law has no wall treatment).
    fn mirror_state(&self, u: &[f64], n: [f64; 2], out: &mut [f64]);

    fn normal_flux(&self, u: &[f64], n: [f64; 2], out: &mut [f64]) {
        let nv = self.n_vars();
        let mut f = [0.0; MAX_VARS];
        out[..nv].iter_mut().for_each(|x| *x = 0.0);
        for (axis, &na) in n.iter().enumerate().take(self.dim()) {
            if na != 0.0 {
                self.flux(u, axis, &mut f[..nv]);
                for c in 0..nv {
                    out[c] += na * f[c];
                }
            }
        }
    }

    fn normal_potential(&self, u: &[f64], n: [f64; 2]) -> f64 {
        (0..self.dim()).map(|a| n[a] * self.potential(u, a)).sum()
    }

    fn ec_normal_flux(&self, ul: &[f64], ur: &[f64], n: [f64; 2], out: &mut [f64]) {
        let nv = self.n_vars();
        let mut f = [0.0; 2 * MAX_VARS];
        self.ec_flux(ul, ur, &mut f);
        for c in 0..nv {
            out[c] = (0..self.dim()).map(|a| n[a] * f[a * nv + c]).sum();
        }
    }

    /// `ec_flux` with admissibility checks on both arguments.
    fn ec_flux_checked(&self, ul: &[f64], ur: &[f64], out: &mut [f64]) -> Result<()> {
        self.validate(ul)?;
        self.validate(ur)?;
        self.ec_flux(ul, ur, out);
        Ok(())
    }

    /// Local Lax–Friedrichs term `−(λ/2)(u_R − u_L)` added to a numerical
    /// flux with `u_L` interior and `u_R` exterior along the outward `n`.
    fn lax_friedrichs_penalty(
        &self,
        ul: &[f64],
        ur: &[f64],
        n: [f64; 2],
        out: &mut [f64],
    ) -> Result<()> {
        self.validate(ul)?;
        self.validate(ur)?;
        let lam = self.wavespeed(ul, n).max(self.wavespeed(ur, n));
        for c in 0..self.n_vars() {
            out[c] = -0.5 * lam * (ur[c] - ul[c]);
        }
        Ok(())
    }

    /// Numerical wall flux along `n`: the entropy-conservative flux against
    /// the mirror state, plus the Lax–Friedrichs penalty if `dissipative`.
    fn wall_flux(&self, u: &[f64], n: [f64; 2], dissipative: bool, out: &mut [f64]) -> Result<()> {
        let nv = self.n_vars();
        let mut up = [0.0; MAX_VARS];
        self.mirror_state(u, n, &mut up[..nv]);
        self.validate(u)?;
        self.ec_normal_flux(&up[..nv], u, n, out);
        if dissipative {
            let mut pen = [0.0; MAX_VARS];
            self.lax_friedrichs_penalty(u, &up[..nv], n, &mut pen[..nv])?;
            for c in 0..nv {
                out[c] += pen[c];
            }
        }
        Ok(())
    }
}

/// Logarithmic mean `(a − b)/(ln a − ln b)`.
///
/// Near-equal arguments go through `(a + b)·f / (2 atanh f)` with
/// `f = |a − b|/(a + b)`, switching to the Ismail–Roe series for `f² < 10⁻⁴`.
#[inline]
pub fn log_mean(a: f64, b: f64) -> f64 {
    let f = (a - b).abs() / (a + b);
    let u = f * f;
    if u < 1e-4 {
        let g = 1.0 + u * (1.0 / 3.0 + u * (1.0 / 5.0 + u * (1.0 / 7.0 + u / 9.0)));
        0.5 * (a + b) / g
    } else if f < 0.5 {
        0.5 * (a + b) * f / f.atanh()
    } else {
        (a - b) / (a / b).ln()
    }
}

pub fn log_mean_checked(a: f64, b: f64) -> Result<f64> {
    for v in [a, b] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "log-mean argument",
                value: v,
            });
        }
    }
    Ok(log_mean(a, b))
}

/// Inviscid Burgers, `f = u²/2`, `S = u²/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Burgers;

impl ConservationLaw for Burgers {
    fn n_vars(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        1
    }

    fn validate(&self, u: &[f64]) -> Result<()> {
        if !u[0].is_finite() {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "u",
                value: u[0],
            });
        }
        Ok(())
    }

    fn flux(&self, u: &[f64], _axis: usize, out: &mut [f64]) {
        out[0] = 0.5 * u[0] * u[0];
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        0.5 * u[0] * u[0]
    }

    fn entropy_variables(&self, u: &[f64], out: &mut [f64]) {
        out[0] = u[0];
    }

    fn conservative_from_entropy(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = v[0];
        self.validate(out)
    }

    fn potential(&self, u: &[f64], _axis: usize) -> f64 {
        u[0] * u[0] * u[0] / 6.0
    }

    fn jacobian_dudv(&self, _u: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn ec_flux(&self, ul: &[f64], ur: &[f64], out: &mut [f64]) {
        let (a, b) = (ul[0], ur[0]);
        out[0] = (a * a + a * b + b * b) / 6.0;
    }

    fn wavespeed(&self, u: &[f64], n: [f64; 2]) -> f64 {
        u[0].abs() * n[0].abs()
    }

    fn mirror_state(&self, u: &[f64], _n: [f64; 2], out: &mut [f64]) {
        out[0] = -u[0];
    }
}

/// Compressible Euler equations in `D` dimensions with an ideal-gas law.
/// Components: `[ρ, ρu₁, …, ρu_D, E]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Euler<const D: usize> {
    pub gamma: f64,
}

pub type Euler1d = Euler<1>;
pub type Euler2d = Euler<2>;

impl<const D: usize> Default for Euler<D> {
    fn default() -> Self {
        Self { gamma: 1.4 }
    }
}

impl<const D: usize> Euler<D> {
    pub fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    #[inline]
    fn velocity(u: &[f64]) -> [f64; 2] {
        let mut vel = [0.0; 2];
        for a in 0..D {
            vel[a] = u[1 + a] / u[0];
        }
        vel
    }

    #[inline]
    pub fn pressure(&self, u: &[f64]) -> f64 {
        let ke: f64 = (0..D).map(|a| u[1 + a] * u[1 + a]).sum::<f64>() / u[0];
        (self.gamma - 1.0) * (u[D + 1] - 0.5 * ke)
    }

    /// Conservative state from `[ρ, u₁, …, u_D, p]`.
    pub fn from_primitive(&self, w: &[f64]) -> Vec<f64> {
        let rho = w[0];
        let mut u = vec![0.0; D + 2];
        u[0] = rho;
        let mut ke = 0.0;
        for a in 0..D {
            u[1 + a] = rho * w[1 + a];
            ke += w[1 + a] * w[1 + a];
        }
        u[D + 1] = w[D + 1] / (self.gamma - 1.0) + 0.5 * rho * ke;
        u
    }

    /// `[ρ, u₁, …, u_D, p]` from a conservative state.
    pub fn primitive(&self, u: &[f64]) -> Vec<f64> {
        let vel = Self::velocity(u);
        let mut w = vec![u[0]];
        w.extend_from_slice(&vel[..D]);
        w.push(self.pressure(u));
        w
    }

    pub fn sound_speed(&self, u: &[f64]) -> f64 {
        (self.gamma * self.pressure(u) / u[0]).sqrt()
    }
}

impl<const D: usize> ConservationLaw for Euler<D> {
    fn n_vars(&self) -> usize {
        D + 2
    }

    fn dim(&self) -> usize {
        D
    }

    fn validate(&self, u: &[f64]) -> Result<()> {
        if let Some(&bad) = u[..D + 2].iter().find(|x| !x.is_finite()) {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "non-finite component",
                value: bad,
            });
        }
        if !(u[0] > 0.0) {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "density",
                value: u[0],
            });
        }
        let p = self.pressure(u);
        if !(p > 0.0) {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "pressure",
                value: p,
            });
        }
        Ok(())
    }

    fn flux(&self, u: &[f64], axis: usize, out: &mut [f64]) {
        let p = self.pressure(u);
        let un = u[1 + axis] / u[0];
        out[0] = u[1 + axis];
        for a in 0..D {
            out[1 + a] = u[1 + a] * un;
        }
        out[1 + axis] += p;
        out[D + 1] = un * (u[D + 1] + p);
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        let p = self.pressure(u);
        let s = p.ln() - self.gamma * u[0].ln();
        -u[0] * s / (self.gamma - 1.0)
    }

    fn entropy_variables(&self, u: &[f64], out: &mut [f64]) {
        let g = self.gamma;
        let rho = u[0];
        let p = self.pressure(u);
        let s = p.ln() - g * rho.ln();
        let vel = Self::velocity(u);
        let q2: f64 = vel[..D].iter().map(|x| x * x).sum();
        let beta = rho / p;
        out[0] = (g - s) / (g - 1.0) - 0.5 * beta * q2;
        for a in 0..D {
            out[1 + a] = beta * vel[a];
        }
        out[D + 1] = -beta;
    }

    fn conservative_from_entropy(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let g = self.gamma;
        let ve = v[D + 1];
        if !(ve < 0.0) || !ve.is_finite() {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "last entropy variable",
                value: ve,
            });
        }
        // θ = p/ρ, and v₁ fixes s = ln(p/ρ^γ).
        let theta = -1.0 / ve;
        let vm2: f64 = v[1..=D].iter().map(|x| x * x).sum();
        let s = g - (g - 1.0) * (v[0] - 0.5 * vm2 / ve);
        let rho = ((theta.ln() - s) / (g - 1.0)).exp();
        let p = rho * theta;
        out[0] = rho;
        let mut ke = 0.0;
        for a in 0..D {
            let ua = theta * v[1 + a];
            out[1 + a] = rho * ua;
            ke += ua * ua;
        }
        out[D + 1] = p / (g - 1.0) + 0.5 * rho * ke;
        if !(rho > 0.0 && rho.is_finite() && p.is_finite()) {
            return Err(Error::Inadmissible {
                point: 0,
                quantity: "density",
                value: rho,
            });
        }
        Ok(())
    }

    fn potential(&self, u: &[f64], axis: usize) -> f64 {
        u[1 + axis]
    }

    fn jacobian_dudv(&self, u: &[f64], out: &mut [f64]) {
        let n = D + 2;
        let g = self.gamma;
        let rho = u[0];
        let e = u[D + 1];
        let p = self.pressure(u);
        let vel = Self::velocity(u);
        let h = (e + p) / rho;
        let a2 = g * p / rho;
        let mut set = |i: usize, j: usize, x: f64| {
            out[j * n + i] = x;
            out[i * n + j] = x;
        };
        set(0, 0, rho);
        for a in 0..D {
            set(0, 1 + a, rho * vel[a]);
            for b in 0..D {
                let mut x = rho * vel[a] * vel[b];
                if a == b {
                    x += p;
                }
                set(1 + a, 1 + b, x);
            }
            set(1 + a, D + 1, rho * vel[a] * h);
        }
        set(0, D + 1, e);
        set(D + 1, D + 1, rho * h * h - a2 * p / (g - 1.0));
    }

    fn ec_flux(&self, ul: &[f64], ur: &[f64], out: &mut [f64]) {
        let g = self.gamma;
        let (rl, rr) = (ul[0], ur[0]);
        let (pl, pr) = (self.pressure(ul), self.pressure(ur));
        let (vl, vr) = (Self::velocity(ul), Self::velocity(ur));
        let (bl, br) = (0.5 * rl / pl, 0.5 * rr / pr);
        let rho_log = log_mean(rl, rr);
        let beta_log = log_mean(bl, br);
        let p_avg = 0.5 * (rl + rr) / (bl + br);
        let mut avg = [0.0; 2];
        let mut u2_avg = 0.0;
        for a in 0..D {
            avg[a] = 0.5 * (vl[a] + vr[a]);
            u2_avg += 2.0 * avg[a] * avg[a] - 0.5 * (vl[a] * vl[a] + vr[a] * vr[a]);
        }
        let e_avg = rho_log / (2.0 * beta_log * (g - 1.0)) + 0.5 * rho_log * u2_avg;
        let n = D + 2;
        for axis in 0..D {
            let o = &mut out[axis * n..(axis + 1) * n];
            let un = avg[axis];
            let mass = rho_log * un;
            o[0] = mass;
            for b in 0..D {
                o[1 + b] = mass * avg[b];
            }
            o[1 + axis] += p_avg;
            o[D + 1] = (e_avg + p_avg) * un;
        }
    }

    fn wavespeed(&self, u: &[f64], n: [f64; 2]) -> f64 {
        let vel = Self::velocity(u);
        let un: f64 = (0..D).map(|a| vel[a] * n[a]).sum();
        un.abs() + self.sound_speed(u)
    }

    fn mirror_state(&self, u: &[f64], n: [f64; 2], out: &mut [f64]) {
        let mn: f64 = (0..D).map(|a| u[1 + a] * n[a]).sum();
        out[0] = u[0];
        for a in 0..D {
            out[1 + a] = u[1 + a] - 2.0 * mn * n[a];
        }
        out[D + 1] = u[D + 1];
    }
}

/// Which conservation law a run uses; the numerical kernels are generic
/// and the pipeline dispatches on this tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Burgers,
    Euler,
}

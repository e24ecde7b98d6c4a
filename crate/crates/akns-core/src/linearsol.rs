//! Solutions of the bare linear problem: dispersion closures, discrete
//! exponential kernels, Airy and heat kernels, and Cole-Hopf solutions of
//! the viscous matrix Burgers equation.

use std::f64::consts::PI;

use crate::{c64, CMat, Error, Result, C64};

/// Per-mode spectral data for one time flow. mu and mu.hat are slaved to
/// kappa and kappa.hat through the weights; lambda holds the flow-n
/// frequencies.
#[derive(Clone, Debug)]
pub struct DispersionParams {
    pub w1: C64,
    pub w2: C64,
    pub what1: Option<C64>,
    pub what2: Option<C64>,
    pub n: u32,
    pub kappa: Vec<C64>,
    pub mu: Vec<C64>,
    pub kappa_hat: Vec<C64>,
    pub mu_hat: Vec<C64>,
    pub lambda_n: Vec<C64>,
    pub lambda_hat_n: Vec<C64>,
}

impl DispersionParams {
    pub fn modes(&self) -> usize {
        self.kappa.len()
    }

    pub fn hat_modes(&self) -> usize {
        self.kappa_hat.len()
    }

    /// Attaches the second weight pair used by the first flow.
    pub fn with_hat_weights(mut self, what1: C64, what2: C64) -> Result<DispersionParams> {
        if (what1 - what2).norm() <= 1e-14 * (what1.norm() + what2.norm()) {
            return Err(Error::InvalidParameter(
                "hat weights must be distinct".into(),
            ));
        }
        self.what1 = Some(what1);
        self.what2 = Some(what2);
        Ok(self)
    }

    /// Transport speed of the first flow, (what1 - what2)/(w1 - w2).
    /// None until hat weights are attached.
    pub fn transport_speed(&self) -> Option<C64> {
        match (self.what1, self.what2) {
            (Some(a), Some(b)) => Some((a - b) / (self.w1 - self.w2)),
            _ => None,
        }
    }
}

/// Completes mode data from the weight constraints: w1 kappa + w2 mu = 0
/// fixes mu per mode, and the flow-n frequencies follow as
/// lambda = (-1)^n kappa^n - mu^n (hatted: (-1)^n mu.hat^n - kappa.hat^n).
/// Integral-convergence sign conditions are enforced here rather than at
/// first use.
pub fn close_dispersion(
    w1: C64,
    w2: C64,
    kappa: Vec<C64>,
    kappa_hat: Vec<C64>,
    n: u32,
) -> Result<DispersionParams> {
    if n == 0 {
        return Err(Error::UnsupportedOrder(0));
    }
    if w2.norm() <= 1e-14 {
        return Err(Error::InvalidParameter("w2 must be nonzero".into()));
    }
    if (w1 - w2).norm() <= 1e-14 * (w1.norm() + w2.norm()) {
        return Err(Error::InvalidParameter("w1 and w2 must differ".into()));
    }
    if kappa.is_empty() && kappa_hat.is_empty() {
        return Err(Error::InvalidParameter("at least one mode required".into()));
    }
    let ratio = -w1 / w2;
    let sign = if n % 2 == 1 {
        c64(-1.0, 0.0)
    } else {
        c64(1.0, 0.0)
    };
    let mu: Vec<C64> = kappa.iter().map(|k| ratio * k).collect();
    let mu_hat: Vec<C64> = kappa_hat.iter().map(|k| ratio * k).collect();
    let lambda_n: Vec<C64> = kappa
        .iter()
        .zip(&mu)
        .map(|(k, m)| sign * k.powu(n) - m.powu(n))
        .collect();
    let lambda_hat_n: Vec<C64> = kappa_hat
        .iter()
        .zip(&mu_hat)
        .map(|(k, m)| sign * m.powu(n) - k.powu(n))
        .collect();

    let scale = |k: &C64, m: &C64| k.norm().powi(n as i32) + m.norm().powi(n as i32);
    let degenerate = lambda_n
        .iter()
        .zip(kappa.iter().zip(&mu))
        .all(|(l, (k, m))| l.norm() <= 1e-13 * scale(k, m).max(1e-300))
        && lambda_hat_n
            .iter()
            .zip(kappa_hat.iter().zip(&mu_hat))
            .all(|(l, (k, m))| l.norm() <= 1e-13 * scale(k, m).max(1e-300));
    if degenerate {
        return Err(Error::DegenerateDispersion(format!(
            "all flow-{} frequencies vanish for weights ({}, {})",
            n, w1, w2
        )));
    }

    for (bi, mb) in mu.iter().enumerate() {
        for (gi, mg) in mu_hat.iter().enumerate() {
            if (mb + mg).re <= 0.0 {
                return Err(Error::ConvergenceViolation(format!(
                    "Re(mu[{}] + mu.hat[{}]) = {} must be positive",
                    bi,
                    gi,
                    (mb + mg).re
                )));
            }
        }
    }
    for (gi, kg) in kappa_hat.iter().enumerate() {
        for (ai, ka) in kappa.iter().enumerate() {
            if (kg + ka).re <= 0.0 {
                return Err(Error::ConvergenceViolation(format!(
                    "Re(kappa.hat[{}] + kappa[{}]) = {} must be positive",
                    gi,
                    ai,
                    (kg + ka).re
                )));
            }
        }
    }

    Ok(DispersionParams {
        w1,
        w2,
        what1: None,
        what2: None,
        n,
        kappa,
        mu,
        kappa_hat,
        mu_hat,
        lambda_n,
        lambda_hat_n,
    })
}

pub const AIRY_VALIDATED: f64 = 15.0;
const AIRY_CUT: f64 = 7.0;
const AI_ZERO: f64 = 0.355_028_053_887_817_24;
const AI_NEG_SLOPE_ZERO: f64 = 0.258_819_403_792_806_79;

fn airy_maclaurin(z: f64) -> f64 {
    let z3 = z * z * z;
    let mut f_term = 1.0;
    let mut g_term = z;
    let mut f_sum = f_term;
    let mut g_sum = g_term;
    for k in 0..200 {
        let kf = k as f64;
        f_term *= z3 / ((3.0 * kf + 2.0) * (3.0 * kf + 3.0));
        g_term *= z3 / ((3.0 * kf + 3.0) * (3.0 * kf + 4.0));
        f_sum += f_term;
        g_sum += g_term;
        if f_term.abs() < 1e-22 && g_term.abs() < 1e-22 {
            break;
        }
    }
    AI_ZERO * f_sum - AI_NEG_SLOPE_ZERO * g_sum
}

// u_{k+1} = u_k (6k+1)(6k+5) / (72(k+1)), the classical asymptotic
// coefficients; both tails are summed to their smallest term.

fn airy_decaying(z: f64) -> f64 {
    let xi = (2.0 / 3.0) * z.powf(1.5);
    let pre = (-xi).exp() / (2.0 * PI.sqrt() * z.powf(0.25));
    let mut u = 1.0;
    let mut sum = 1.0;
    let mut prev = 1.0;
    for k in 0..40u32 {
        let kf = k as f64;
        u *= (6.0 * kf + 1.0) * (6.0 * kf + 5.0) / (72.0 * (kf + 1.0));
        let mag = u / xi.powi(k as i32 + 1);
        if mag >= prev {
            break;
        }
        prev = mag;
        sum += if k % 2 == 0 { -mag } else { mag };
    }
    pre * sum
}

fn airy_oscillatory(zeta: f64) -> f64 {
    let z = -zeta;
    let xi = (2.0 / 3.0) * z.powf(1.5);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut u = 1.0;
    let mut prev = 1.0;
    for k in 1..40u32 {
        let kf = (k - 1) as f64;
        u *= (6.0 * kf + 1.0) * (6.0 * kf + 5.0) / (72.0 * kf + 72.0);
        let mag = u / xi.powi(k as i32);
        if mag >= prev {
            break;
        }
        prev = mag;
        if k % 2 == 0 {
            p += if (k / 2) % 2 == 1 { -mag } else { mag };
        } else {
            q += if ((k - 1) / 2) % 2 == 1 { -mag } else { mag };
        }
    }
    let phase = xi + PI / 4.0;
    (phase.sin() * p - phase.cos() * q) / (PI.sqrt() * z.powf(0.25))
}

/// Ai on the validated window [-15, 15], absolute error below 1e-10:
/// Maclaurin pair series for |zeta| <= 7, damped asymptotic series above,
/// oscillatory asymptotic pair below.
pub fn airy_function(zeta: f64) -> Result<f64> {
    if !zeta.is_finite() || zeta.abs() > AIRY_VALIDATED {
        return Err(Error::OutOfValidatedRange {
            arg: zeta,
            lo: -AIRY_VALIDATED,
            hi: AIRY_VALIDATED,
        });
    }
    Ok(if zeta > AIRY_CUT {
        airy_decaying(zeta)
    } else if zeta < -AIRY_CUT {
        airy_oscillatory(zeta)
    } else {
        airy_maclaurin(zeta)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    DiscreteExponential,
    Airy,
    Heat,
}

#[derive(Clone, Debug)]
enum KernelData {
    Discrete {
        params: DispersionParams,
        b: Vec<CMat>,
        bhat: Vec<CMat>,
    },
    Airy {
        s: f64,
        m: CMat,
        mhat: CMat,
    },
    Heat {
        s: f64,
        diffusion: f64,
        t_horizon: f64,
        m: CMat,
        mhat: CMat,
    },
}

/// A concrete solution pair (f, f.hat) of the bare linear problem.
#[derive(Clone, Debug)]
pub struct LinearKernel {
    pub kind: KernelKind,
    pub n_flow: u32,
    reference_t: f64,
    data: KernelData,
}

fn airy_nu(s: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::OutOfValidatedRange {
            arg: t,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let cube = -3.0 * (1.0 + s * s * s) * t;
    if cube.abs() < 1e-30 {
        return Err(Error::SingularScaling(format!(
            "cube scale vanishes at s = {}",
            s
        )));
    }
    Ok(cube.cbrt())
}

fn gaussian_bump(zeta: f64, variance2: f64) -> f64 {
    // variance2 = 2 * (diffusion * time); the profile integrates to 1.
    (-zeta * zeta / (2.0 * variance2)).exp() / (2.0 * PI * variance2).sqrt()
}

impl LinearKernel {
    pub fn n_dim(&self) -> usize {
        match &self.data {
            KernelData::Discrete { b, .. } => b[0].nrows(),
            KernelData::Airy { m, .. } | KernelData::Heat { m, .. } => m.nrows(),
        }
    }

    pub fn m_dim(&self) -> usize {
        match &self.data {
            KernelData::Discrete { b, .. } => b[0].ncols(),
            KernelData::Airy { m, .. } | KernelData::Heat { m, .. } => m.ncols(),
        }
    }

    /// Natural evaluation time: the construction time for Airy kernels,
    /// half the horizon for heat kernels, zero for discrete sums.
    pub fn reference_t(&self) -> f64 {
        self.reference_t
    }

    pub fn dispersion(&self) -> Option<&DispersionParams> {
        match &self.data {
            KernelData::Discrete { params, .. } => Some(params),
            _ => None,
        }
    }

    pub fn f(&self, x: f64, z: f64, t: f64) -> Result<CMat> {
        match &self.data {
            KernelData::Discrete { params, b, .. } => {
                let mut acc = CMat::zeros(b[0].nrows(), b[0].ncols());
                for (a, ba) in b.iter().enumerate() {
                    let expo = params.lambda_n[a] * c64(t, 0.0)
                        - params.kappa[a] * c64(x, 0.0)
                        - params.mu[a] * c64(z, 0.0);
                    acc += ba * expo.exp();
                }
                Ok(acc)
            }
            KernelData::Airy { s, m, .. } => {
                let nu = airy_nu(*s, t)?;
                let ai = airy_function((x + s * z) / nu)?;
                Ok(m * c64(ai / nu, 0.0))
            }
            KernelData::Heat { s, diffusion, m, .. } => {
                if !(t > 0.0) {
                    return Err(Error::OutOfValidatedRange {
                        arg: t,
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
                let g = gaussian_bump(x + s * z, 2.0 * diffusion * t);
                Ok(m * c64(g, 0.0))
            }
        }
    }

    pub fn f_hat(&self, x: f64, z: f64, t: f64) -> Result<CMat> {
        match &self.data {
            KernelData::Discrete { params, bhat, .. } => {
                let mut acc = CMat::zeros(bhat[0].nrows(), bhat[0].ncols());
                for (a, ba) in bhat.iter().enumerate() {
                    let expo = params.lambda_hat_n[a] * c64(t, 0.0)
                        - params.mu_hat[a] * c64(x, 0.0)
                        - params.kappa_hat[a] * c64(z, 0.0);
                    acc += ba * expo.exp();
                }
                Ok(acc)
            }
            KernelData::Airy { s, mhat, .. } => {
                let nu = airy_nu(*s, t)?;
                let ai = airy_function((s * x + z) / nu)?;
                Ok(mhat * c64(ai / nu, 0.0))
            }
            KernelData::Heat {
                s,
                diffusion,
                t_horizon,
                mhat,
                ..
            } => {
                // The hatted block diffuses backwards; it is a forward heat
                // profile in the remaining time to the horizon.
                let remaining = t_horizon - t;
                if !(remaining > 0.0) {
                    return Err(Error::OutOfValidatedRange {
                        arg: t,
                        lo: 0.0,
                        hi: *t_horizon,
                    });
                }
                let g = gaussian_bump(s * x + z, 2.0 * diffusion * remaining);
                Ok(mhat * c64(g, 0.0))
            }
        }
    }
}

/// Exponential-sum kernel over the modes of p, one amplitude per mode.
pub fn discrete_kernel(p: DispersionParams, b: Vec<CMat>, bhat: Vec<CMat>) -> Result<LinearKernel> {
    if b.len() != p.modes() || bhat.len() != p.hat_modes() {
        return Err(Error::GridMismatch(format!(
            "amplitude counts ({}, {}) must match mode counts ({}, {})",
            b.len(),
            bhat.len(),
            p.modes(),
            p.hat_modes()
        )));
    }
    if b.is_empty() || bhat.is_empty() {
        return Err(Error::InvalidParameter(
            "discrete kernel needs at least one mode on each side".into(),
        ));
    }
    let (n, m) = (b[0].nrows(), b[0].ncols());
    if b.iter().any(|a| a.nrows() != n || a.ncols() != m)
        || bhat.iter().any(|a| a.nrows() != m || a.ncols() != n)
    {
        return Err(Error::ShapeMismatch(
            "amplitudes must be N x M and M x N across all modes".into(),
        ));
    }
    let n_flow = p.n;
    Ok(LinearKernel {
        kind: KernelKind::DiscreteExponential,
        n_flow,
        reference_t: 0.0,
        data: KernelData::Discrete { params: p, b, bhat },
    })
}

/// Self-similar third-flow kernel from delta initial data:
/// f = (1/nu) Ai((x+sz)/nu) m with s = -w1/w2 and nu^3 = -3(1+s^3)t.
pub fn airy_kernel(w1: f64, w2: f64, t: f64, m: CMat, mhat: CMat) -> Result<LinearKernel> {
    if w2.abs() <= 1e-14 {
        return Err(Error::InvalidParameter("w2 must be nonzero".into()));
    }
    let s = -w1 / w2;
    if (1.0 + s * s * s).abs() <= 1e-12 {
        return Err(Error::SingularScaling(format!(
            "1 + s^3 vanishes for weights ({}, {})",
            w1, w2
        )));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("t must be positive".into()));
    }
    if mhat.nrows() != m.ncols() || mhat.ncols() != m.nrows() {
        return Err(Error::ShapeMismatch(
            "init matrices must be N x M and M x N".into(),
        ));
    }
    Ok(LinearKernel {
        kind: KernelKind::Airy,
        n_flow: 3,
        reference_t: t,
        data: KernelData::Airy { s, m, mhat },
    })
}

/// Second-flow kernel from delta initial data: a forward Gaussian in
/// x + sz for f and a horizon-reversed one in sx + z for f.hat, both with
/// diffusion 1 - s^2.
pub fn heat_kernel(
    w1: f64,
    w2: f64,
    t_horizon: f64,
    m: CMat,
    mhat: CMat,
) -> Result<LinearKernel> {
    if w2.abs() <= 1e-14 {
        return Err(Error::InvalidParameter("w2 must be nonzero".into()));
    }
    let s = -w1 / w2;
    let diffusion = 1.0 - s * s;
    if diffusion <= 1e-12 {
        return Err(Error::SingularScaling(format!(
            "heat scaling needs |w1| < |w2|, got diffusion {}",
            diffusion
        )));
    }
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if mhat.nrows() != m.ncols() || mhat.ncols() != m.nrows() {
        return Err(Error::ShapeMismatch(
            "init matrices must be N x M and M x N".into(),
        ));
    }
    Ok(LinearKernel {
        kind: KernelKind::Heat,
        n_flow: 2,
        reference_t: t_horizon / 2.0,
        data: KernelData::Heat {
            s,
            diffusion,
            t_horizon,
            m,
            mhat,
        },
    })
}

/// Positive heat-equation solutions usable as Cole-Hopf potentials. The
/// time argument is shifted by t_shift so the profiles are smooth at
/// tau_hat = 0.
#[derive(Clone, Copy, Debug)]
pub enum PhiProfile {
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        floor: f64,
        center: f64,
        t_shift: f64,
    },
    TwoHump {
        amplitude: f64,
        floor: f64,
        separation: f64,
        t_shift: f64,
    },
}

impl PhiProfile {
    fn heat_bump(nu_hat: f64, chi: f64, tt: f64) -> (f64, f64) {
        let v = 4.0 * nu_hat * tt;
        let g = (-chi * chi / v).exp() / (PI * v).sqrt();
        (g, -2.0 * chi / v * g)
    }

    /// (phi, d phi / d chi) at one point.
    pub fn phi_and_slope(&self, nu_hat: f64, chi: f64, tau_hat: f64) -> Result<(f64, f64)> {
        match *self {
            PhiProfile::Constant { value } => Ok((value, 0.0)),
            PhiProfile::Gaussian {
                amplitude,
                floor,
                center,
                t_shift,
            } => {
                let tt = tau_hat + t_shift;
                if !(tt > 0.0) {
                    return Err(Error::OutOfValidatedRange {
                        arg: tau_hat,
                        lo: -t_shift,
                        hi: f64::INFINITY,
                    });
                }
                let (g, dg) = Self::heat_bump(nu_hat, chi - center, tt);
                Ok((floor + amplitude * g, amplitude * dg))
            }
            PhiProfile::TwoHump {
                amplitude,
                floor,
                separation,
                t_shift,
            } => {
                let tt = tau_hat + t_shift;
                if !(tt > 0.0) {
                    return Err(Error::OutOfValidatedRange {
                        arg: tau_hat,
                        lo: -t_shift,
                        hi: f64::INFINITY,
                    });
                }
                let half = separation / 2.0;
                let (g1, d1) = Self::heat_bump(nu_hat, chi - half, tt);
                let (g2, d2) = Self::heat_bump(nu_hat, chi + half, tt);
                Ok((floor + amplitude * (g1 + g2), amplitude * (d1 + d2)))
            }
        }
    }
}

/// K(chi, tau) = f(chi, kappa tau) b with f the scalar Cole-Hopf profile.
/// Solves the viscous matrix Burgers equation with viscosity kappa nu_hat.
#[derive(Clone, Debug)]
pub struct BurgersSolution {
    pub nu_hat: f64,
    pub kappa: f64,
    pub b: CMat,
    pub profile: PhiProfile,
}

impl BurgersSolution {
    pub fn viscosity(&self) -> f64 {
        self.kappa * self.nu_hat
    }

    /// The scalar profile f(chi, tau_hat) = -2 nu_hat d_chi log phi.
    pub fn scalar_profile(&self, chi: f64, tau_hat: f64) -> Result<f64> {
        let (phi, slope) = self.profile.phi_and_slope(self.nu_hat, chi, tau_hat)?;
        if !(phi > 0.0) {
            return Err(Error::NonPositivePhi {
                phi,
                chi,
                tau: tau_hat,
            });
        }
        Ok(-2.0 * self.nu_hat * slope / phi)
    }

    pub fn eval(&self, chi: f64, tau: f64) -> Result<CMat> {
        let f = self.scalar_profile(chi, self.kappa * tau)?;
        Ok(&self.b * c64(f, 0.0))
    }
}

/// Builds the matrix Cole-Hopf solution from a rank-projector-like matrix
/// b with b^2 = kappa b; kappa is recovered from traces and checked.
pub fn cole_hopf_burgers(profile: PhiProfile, nu_hat: f64, b: CMat) -> Result<BurgersSolution> {
    if !(nu_hat > 0.0) {
        return Err(Error::InvalidParameter("nu_hat must be positive".into()));
    }
    if b.nrows() != b.ncols() || b.nrows() == 0 {
        return Err(Error::ShapeMismatch("b must be square".into()));
    }
    let tr = b.trace();
    let bb = &b * &b;
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if tr.norm() <= 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidParameter(
            "b has vanishing trace, so kappa would be zero".into(),
        ));
    }
    let kappa_c = bb.trace() / tr;
    if kappa_c.im.abs() > 1e-12 * kappa_c.norm().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa = {} must be real to rescale time",
            kappa_c
        )));
    }
    let kappa = kappa_c.re;
    let dev = (&bb - &b * kappa_c)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if dev > 1e-12 * (scale * scale).max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "b^2 = kappa b fails by {:.3e}",
            dev
        )));
    }
    if kappa.abs() <= 1e-12 {
        return Err(Error::InvalidParameter("kappa must be nonzero".into()));
    }
    Ok(BurgersSolution {
        nu_hat,
        kappa,
        b,
        profile,
    })
}

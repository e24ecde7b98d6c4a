//! Residual verdicts on sampled data: PDE residuals for the printed
//! equations of motion, zero-curvature residuals of the Lax pairs, and
//! conservation drift along trajectories.
//!
//! Residuals are interior-only; the stencil boundary layer is excluded
//! because the equations live on the decaying line. Every verdict pairs
//! the measured residual with an estimated finite-difference floor so a
//! failure is attributable to the data rather than the stencil.

use crate::glm::{Kernel2D, Support};
use crate::grid::{Grid1D, Trajectory};
use crate::hierarchy::{build_u_matrix, derive_eom, time_component, LaxComponent};
use crate::linearsol::LinearKernel;
use crate::ncalg::NcPoly;
use crate::par;
use crate::riccati::{charge_report, ChargeReport};
use crate::{c64, CMat, Error, Result, C64};

pub use crate::fd::{fd_derivative, Boundary, FdScheme};

/// Equation selector. Each variant carries the full parameter set its
/// residual form needs, so an incompletely specified equation is
/// unrepresentable. The weighted families live in the original variables;
/// the compact forms are their weightless normalizations, with the hatted
/// side taken from [`derive_eom`] so the two derivations cross-check.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum EquationId {
    /// w1 dx f + w2 dz f = 0, and f.hat with the weights swapped.
    LinearSpace { w1: C64, w2: C64 },
    /// dt f - dx^n f + (-1)^n dz^n f = 0 on both kernels.
    LinearTime { n: u32 },
    /// dt U = (W.hat - kappa W) dx U with kappa = (w.hat1 - w.hat2)/(w1 - w2);
    /// both blocks move at the common speed w.hat1 - kappa w1.
    TransportS3 { w1: C64, w2: C64, what1: C64, what2: C64 },
    /// dt u - (w1+w2)/h dx^2 u + 2(w1+w2)/(h w1 w2) u u.hat u = 0 with
    /// h = w1 - w2; the hatted side runs on reversed time.
    NlsS3 { w1: C64, w2: C64 },
    /// dt u - E/h^2 dx^3 u + 3E/(h^2 w1 w2)(u u.hat dx u + dx u u.hat u) = 0
    /// with E = w1^2 + w2^2 + w1 w2; the hatted side swaps the fields.
    MkdvS3 { w1: C64, w2: C64 },
    /// dt u - dx u = 0.
    TransportS4,
    /// dt u + dx^2 u - 2 u u.hat u = 0.
    NlsS4,
    /// Both sides taken verbatim from derive_eom(3).
    MkdvS4Derived,
    /// dt K + dx K K = nu dx^2 K on a square matrix field.
    BurgersViscous { nu: f64 },
    /// dt K + dx K K = 0.
    BurgersInviscid,
    /// Ai'' = zeta Ai, pointwise on each frame.
    AiryOde,
}

impl EquationId {
    pub fn name(&self) -> &'static str {
        match self {
            EquationId::LinearSpace { .. } => "linear_space",
            EquationId::LinearTime { .. } => "linear_time",
            EquationId::TransportS3 { .. } => "transport_s3",
            EquationId::NlsS3 { .. } => "nls_s3",
            EquationId::MkdvS3 { .. } => "mkdv_s3",
            EquationId::TransportS4 => "transport_s4",
            EquationId::NlsS4 => "nls_s4",
            EquationId::MkdvS4Derived => "mkdv_s4_derived",
            EquationId::BurgersViscous { .. } => "burgers_viscous",
            EquationId::BurgersInviscid => "burgers_inviscid",
            EquationId::AiryOde => "airy_ode",
        }
    }

    /// Hierarchy flow whose time axis the equation differentiates along;
    /// None when the time variable is not a hierarchy flow (Burgers runs
    /// on its own rescaled clock, the Airy identity has none).
    pub fn flow(&self) -> Option<u32> {
        match self {
            EquationId::LinearSpace { .. } => None,
            EquationId::LinearTime { n } => Some(*n),
            EquationId::TransportS3 { .. } | EquationId::TransportS4 => Some(1),
            EquationId::NlsS3 { .. } | EquationId::NlsS4 => Some(2),
            EquationId::MkdvS3 { .. } | EquationId::MkdvS4Derived => Some(3),
            EquationId::BurgersViscous { .. } | EquationId::BurgersInviscid => None,
            EquationId::AiryOde => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let pair = |w1: C64, w2: C64| {
            if (w1 - w2).norm() <= 1e-14 * (w1.norm() + w2.norm()).max(1.0) {
                return Err(Error::InvalidParameter("w1 and w2 must differ".into()));
            }
            Ok(())
        };
        let nonzero = |w: C64, name: &str| {
            if w.norm() <= 1e-14 {
                return Err(Error::InvalidParameter(format!("{} must be nonzero", name)));
            }
            Ok(())
        };
        match *self {
            EquationId::LinearSpace { w1, w2 } => pair(w1, w2),
            EquationId::LinearTime { n } => {
                if n == 0 || n > 6 {
                    return Err(Error::InvalidParameter(format!(
                        "flow order {} outside the stencil-supported range 1..=6",
                        n
                    )));
                }
                Ok(())
            }
            EquationId::TransportS3 { w1, w2, .. } => pair(w1, w2),
            EquationId::NlsS3 { w1, w2 } | EquationId::MkdvS3 { w1, w2 } => {
                pair(w1, w2)?;
                nonzero(w1, "w1")?;
                nonzero(w2, "w2")
            }
            EquationId::BurgersViscous { nu } => {
                if !(nu.is_finite() && nu > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "viscosity {} must be positive",
                        nu
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Kernel-pair time series on the tensor grid; frame k sits at
/// t = t0 + k dt along the flow's own time axis.
#[derive(Clone, Debug)]
pub struct KernelFrames {
    pub flow: u32,
    pub t0: f64,
    pub dt: f64,
    pub f: Vec<Kernel2D>,
    pub fhat: Vec<Kernel2D>,
}

impl KernelFrames {
    pub fn new(
        flow: u32,
        t0: f64,
        dt: f64,
        f: Vec<Kernel2D>,
        fhat: Vec<Kernel2D>,
    ) -> Result<KernelFrames> {
        if f.is_empty() || f.len() != fhat.len() {
            return Err(Error::GridMismatch(format!(
                "kernel series needs matching nonzero frame counts, got ({}, {})",
                f.len(),
                fhat.len()
            )));
        }
        let g = f[0].grid();
        let (n, m) = (f[0].block_rows(), f[0].block_cols());
        for k in f.iter().chain(fhat.iter()) {
            if k.support() != Support::Full {
                return Err(Error::InvalidParameter(
                    "linear-problem residuals need full-plane kernels".into(),
                ));
            }
            if k.grid() != g {
                return Err(Error::GridMismatch(
                    "kernel frames disagree on the grid".into(),
                ));
            }
        }
        if f.iter().any(|k| k.block_rows() != n || k.block_cols() != m)
            || fhat.iter().any(|k| k.block_rows() != m || k.block_cols() != n)
        {
            return Err(Error::GridMismatch(
                "f.hat blocks must be the transpose shape of f across all frames".into(),
            ));
        }
        Ok(KernelFrames { flow, t0, dt, f, fhat })
    }

    /// Samples both kernels of a bare linear solution at uniform times.
    pub fn sample(
        kernel: &LinearKernel,
        grid: Grid1D,
        t0: f64,
        dt: f64,
        steps: usize,
    ) -> Result<KernelFrames> {
        let (n, m) = (kernel.n_dim(), kernel.m_dim());
        let mut f = Vec::with_capacity(steps);
        let mut fhat = Vec::with_capacity(steps);
        for k in 0..steps {
            let t = t0 + k as f64 * dt;
            f.push(Kernel2D::sample(grid, n, m, Support::Full, |x, z| {
                kernel.f(x, z, t)
            })?);
            fhat.push(Kernel2D::sample(grid, m, n, Support::Full, |x, z| {
                kernel.f_hat(x, z, t)
            })?);
        }
        KernelFrames::new(kernel.n_flow, t0, dt, f, fhat)
    }

    pub fn x_grid(&self) -> Grid1D {
        self.f[0].grid()
    }

    pub fn steps(&self) -> usize {
        self.f.len()
    }
}

/// What a residual is evaluated on: (u, u.hat) trajectories for the
/// equations of motion, kernel pairs for the bare linear problem.
pub enum FieldData<'a> {
    Fields(&'a Trajectory),
    Kernels(&'a KernelFrames),
}

/// Interior sup-norm residual with its per-point map, row-major. For
/// trajectory equations rows are evaluated frames and cols evaluated grid
/// points; kernel equations map x by z, maximized over frames. `fd_floor`
/// is an order-of-magnitude estimate of the discretization error (largest
/// term magnitude times dx^p + dt^p), not a bound: residual above it is
/// attributable to the data, residual at it says the data passed at this
/// resolution.
#[derive(Clone, Debug)]
pub struct PdeReport {
    pub residual: f64,
    pub fd_floor: f64,
    pub rows: usize,
    pub cols: usize,
    pub map: Vec<f64>,
}

fn sup(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn poly_max_deriv(p: &NcPoly) -> usize {
    p.terms()
        .flat_map(|(w, _)| w.factors().iter().map(|s| s.deriv as usize))
        .max()
        .unwrap_or(0)
}

fn lax_max_deriv(v: &LaxComponent) -> usize {
    v.lambda_terms
        .values()
        .flat_map(|b| [&b.a, &b.b, &b.c, &b.d])
        .map(poly_max_deriv)
        .max()
        .unwrap_or(0)
}

/// Assembles the left-hand side of the selected equation with centered
/// stencils and returns the interior sup norm with the per-point map.
pub fn pde_residual(eq: EquationId, data: &FieldData, scheme: &FdScheme) -> Result<PdeReport> {
    eq.validate()?;
    let kernel_eq = matches!(
        eq,
        EquationId::LinearSpace { .. } | EquationId::LinearTime { .. }
    );
    match (kernel_eq, data) {
        (true, FieldData::Kernels(kf)) => kernel_residual(eq, kf, scheme),
        (true, FieldData::Fields(_)) => Err(Error::GridMismatch(format!(
            "{} acts on kernel data, got a field trajectory",
            eq.name()
        ))),
        (false, FieldData::Fields(traj)) => field_residual(eq, traj, scheme),
        (false, FieldData::Kernels(_)) => Err(Error::GridMismatch(format!(
            "{} acts on field trajectories, got kernel data",
            eq.name()
        ))),
    }
}

fn field_residual(eq: EquationId, traj: &Trajectory, scheme: &FdScheme) -> Result<PdeReport> {
    if let Some(nf) = eq.flow() {
        if traj.flow != nf {
            return Err(Error::GridMismatch(format!(
                "{} differentiates along the flow-{} axis, trajectory advances flow {}",
                eq.name(),
                nf,
                traj.flow
            )));
        }
    }
    if matches!(
        eq,
        EquationId::BurgersViscous { .. } | EquationId::BurgersInviscid
    ) && traj.frames[0].n_dim != traj.frames[0].m_dim
    {
        return Err(Error::GridMismatch(format!(
            "{} acts on square fields, got {}x{}",
            eq.name(),
            traj.frames[0].m_dim,
            traj.frames[0].n_dim
        )));
    }
    // The compact forms keep the printed u-side and take the hatted side
    // from the curvature derivation, so the residual checks both routes.
    let (rhs_u, rhs_uhat) = match eq {
        EquationId::TransportS4 => {
            let (_, h) = derive_eom(1)?;
            (None, Some(h))
        }
        EquationId::NlsS4 => {
            let (_, h) = derive_eom(2)?;
            (None, Some(h))
        }
        EquationId::MkdvS4Derived => {
            let (g, h) = derive_eom(3)?;
            (Some(g), Some(h))
        }
        _ => (None, None),
    };
    let mut dmax = match eq {
        EquationId::TransportS3 { .. } | EquationId::TransportS4 | EquationId::BurgersInviscid => 1,
        EquationId::NlsS3 { .. }
        | EquationId::NlsS4
        | EquationId::BurgersViscous { .. }
        | EquationId::AiryOde => 2,
        EquationId::MkdvS3 { .. } | EquationId::MkdvS4Derived => 3,
        EquationId::LinearSpace { .. } | EquationId::LinearTime { .. } => {
            unreachable!("kernel equations dispatch to kernel_residual")
        }
    };
    for p in rhs_u.iter().chain(rhs_uhat.iter()) {
        dmax = dmax.max(poly_max_deriv(p));
    }
    let needs_time = !matches!(eq, EquationId::AiryOde);
    let grid = traj.x_grid();
    let (dx, dt, steps) = (grid.dx, traj.dt, traj.steps());
    let x_idx: Vec<usize> = scheme.interior(grid.len, dmax).collect();
    let t_idx: Vec<usize> = if needs_time {
        scheme.interior(steps, 1).collect()
    } else {
        (0..steps).collect()
    };
    if x_idx.is_empty() || t_idx.is_empty() {
        return Err(Error::GridMismatch(format!(
            "grid too short for the order-{} stencil: {} frames, {} points",
            scheme.order, steps, grid.len
        )));
    }
    let (rows, cols) = (t_idx.len(), x_idx.len());
    let columns: Vec<Result<Vec<(f64, f64)>>> = par::map_range(cols, |ci| {
        let i = x_idx[ci];
        let u_col: Vec<CMat> = if needs_time {
            traj.frames.iter().map(|f| f.u[i].clone()).collect()
        } else {
            Vec::new()
        };
        let uh_col: Vec<CMat> = if needs_time {
            traj.frames.iter().map(|f| f.uhat[i].clone()).collect()
        } else {
            Vec::new()
        };
        let mut out = Vec::with_capacity(rows);
        for &k in &t_idx {
            let fr = &traj.frames[k];
            let cell = match eq {
                EquationId::TransportS3 { w1, w2, what1, what2 } => {
                    let kap = (what1 - what2) / (w1 - w2);
                    let c = what1 - kap * w1;
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let cxu = scheme.matrix_deriv(&fr.u, i, 1, dx)? * c;
                    let cxuh = scheme.matrix_deriv(&fr.uhat, i, 1, dx)? * c;
                    let sc = sup(&dtu).max(sup(&cxu)).max(sup(&dtuh)).max(sup(&cxuh));
                    (sup(&(&dtu - &cxu)).max(sup(&(&dtuh - &cxuh))), sc)
                }
                EquationId::NlsS3 { w1, w2 } => {
                    let h = w1 - w2;
                    let c2 = (w1 + w2) / h;
                    let c3 = (w1 + w2) * c64(2.0, 0.0) / (h * w1 * w2);
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let d2u = scheme.matrix_deriv(&fr.u, i, 2, dx)? * c2;
                    let d2uh = scheme.matrix_deriv(&fr.uhat, i, 2, dx)? * c2;
                    let cu = &fr.u[i] * &fr.uhat[i] * &fr.u[i] * c3;
                    let cuh = &fr.uhat[i] * &fr.u[i] * &fr.uhat[i] * c3;
                    let ru = &dtu - &d2u + &cu;
                    // the hatted flow runs on reversed time
                    let ruh = -&dtuh - &d2uh + &cuh;
                    let sc = sup(&dtu)
                        .max(sup(&d2u))
                        .max(sup(&cu))
                        .max(sup(&dtuh))
                        .max(sup(&d2uh))
                        .max(sup(&cuh));
                    (sup(&ru).max(sup(&ruh)), sc)
                }
                EquationId::MkdvS3 { w1, w2 } => {
                    let h = w1 - w2;
                    let e = w1 * w1 + w2 * w2 + w1 * w2;
                    let a3 = e / (h * h);
                    let b3 = e * c64(3.0, 0.0) / (h * h * w1 * w2);
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let d3u = scheme.matrix_deriv(&fr.u, i, 3, dx)? * a3;
                    let d3uh = scheme.matrix_deriv(&fr.uhat, i, 3, dx)? * a3;
                    let dxu = scheme.matrix_deriv(&fr.u, i, 1, dx)?;
                    let dxuh = scheme.matrix_deriv(&fr.uhat, i, 1, dx)?;
                    let cu = (&fr.u[i] * &fr.uhat[i] * &dxu + &dxu * &fr.uhat[i] * &fr.u[i]) * b3;
                    let cuh =
                        (&fr.uhat[i] * &fr.u[i] * &dxuh + &dxuh * &fr.u[i] * &fr.uhat[i]) * b3;
                    let ru = &dtu - &d3u + &cu;
                    let ruh = &dtuh - &d3uh + &cuh;
                    let sc = sup(&dtu)
                        .max(sup(&d3u))
                        .max(sup(&cu))
                        .max(sup(&dtuh))
                        .max(sup(&d3uh))
                        .max(sup(&cuh));
                    (sup(&ru).max(sup(&ruh)), sc)
                }
                EquationId::TransportS4 => {
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let dxu = scheme.matrix_deriv(&fr.u, i, 1, dx)?;
                    let rh = rhs_uhat.as_ref().unwrap().eval(fr, i, scheme)?;
                    let sc = sup(&dtu).max(sup(&dxu)).max(sup(&dtuh)).max(sup(&rh));
                    (sup(&(&dtu - &dxu)).max(sup(&(&dtuh - &rh))), sc)
                }
                EquationId::NlsS4 => {
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let d2u = scheme.matrix_deriv(&fr.u, i, 2, dx)?;
                    let cu = &fr.u[i] * &fr.uhat[i] * &fr.u[i] * c64(2.0, 0.0);
                    let rh = rhs_uhat.as_ref().unwrap().eval(fr, i, scheme)?;
                    let ru = &dtu + &d2u - &cu;
                    let sc = sup(&dtu)
                        .max(sup(&d2u))
                        .max(sup(&cu))
                        .max(sup(&dtuh))
                        .max(sup(&rh));
                    (sup(&ru).max(sup(&(&dtuh - &rh))), sc)
                }
                EquationId::MkdvS4Derived => {
                    let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let dtuh = scheme.matrix_deriv(&uh_col, k, 1, dt)?;
                    let gu = rhs_u.as_ref().unwrap().eval(fr, i, scheme)?;
                    let gh = rhs_uhat.as_ref().unwrap().eval(fr, i, scheme)?;
                    let sc = sup(&dtu).max(sup(&gu)).max(sup(&dtuh)).max(sup(&gh));
                    (sup(&(&dtu - &gu)).max(sup(&(&dtuh - &gh))), sc)
                }
                EquationId::BurgersViscous { nu } => {
                    let dtk = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let adv = scheme.matrix_deriv(&fr.u, i, 1, dx)? * &fr.u[i];
                    let visc = scheme.matrix_deriv(&fr.u, i, 2, dx)? * c64(nu, 0.0);
                    let r = &dtk + &adv - &visc;
                    (sup(&r), sup(&dtk).max(sup(&adv)).max(sup(&visc)))
                }
                EquationId::BurgersInviscid => {
                    let dtk = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                    let adv = scheme.matrix_deriv(&fr.u, i, 1, dx)? * &fr.u[i];
                    (sup(&(&dtk + &adv)), sup(&dtk).max(sup(&adv)))
                }
                EquationId::AiryOde => {
                    let d2 = scheme.matrix_deriv(&fr.u, i, 2, dx)?;
                    let zy = &fr.u[i] * c64(grid.x(i), 0.0);
                    (sup(&(&d2 - &zy)), sup(&d2).max(sup(&zy)))
                }
                EquationId::LinearSpace { .. } | EquationId::LinearTime { .. } => {
                    unreachable!("kernel equations dispatch to kernel_residual")
                }
            };
            out.push(cell);
        }
        Ok(out)
    });
    assemble(columns, rows, cols, true, dx, if needs_time { dt } else { 0.0 }, scheme)
}

fn kernel_residual(eq: EquationId, kf: &KernelFrames, scheme: &FdScheme) -> Result<PdeReport> {
    let (dspace, needs_time) = match eq {
        EquationId::LinearSpace { .. } => (1usize, false),
        EquationId::LinearTime { n } => {
            if kf.flow != n {
                return Err(Error::GridMismatch(format!(
                    "linear_time differentiates along the flow-{} axis, kernels advance flow {}",
                    n, kf.flow
                )));
            }
            (n as usize, true)
        }
        _ => unreachable!("field equations dispatch to field_residual"),
    };
    let grid = kf.x_grid();
    let (dx, dt, steps) = (grid.dx, kf.dt, kf.steps());
    let hw = scheme.half_width(dspace);
    let idx: Vec<usize> = scheme.interior(grid.len, dspace).collect();
    let t_idx: Vec<usize> = if needs_time {
        scheme.interior(steps, 1).collect()
    } else {
        (0..steps).collect()
    };
    if idx.is_empty() || t_idx.is_empty() {
        return Err(Error::GridMismatch(format!(
            "grid too short for the order-{} stencil: {} frames, {} points",
            scheme.order, steps, grid.len
        )));
    }
    let (rows, cols) = (idx.len(), idx.len());
    let sign = if dspace % 2 == 0 {
        c64(1.0, 0.0)
    } else {
        c64(-1.0, 0.0)
    };
    let row_data: Vec<Result<Vec<(f64, f64)>>> = par::map_range(rows, |a| {
        let i = idx[a];
        let mut out = Vec::with_capacity(cols);
        for &j in &idx {
            let mut worst = 0.0_f64;
            let mut sc = 0.0_f64;
            for side in 0..2 {
                let stack: &[Kernel2D] = if side == 0 { &kf.f } else { &kf.fhat };
                for &k in &t_idx {
                    let ker = &stack[k];
                    let xwin: Vec<CMat> = (i - hw..=i + hw).map(|ii| ker.block(ii, j)).collect();
                    let zwin: Vec<CMat> = (j - hw..=j + hw).map(|jj| ker.block(i, jj)).collect();
                    let dxn = scheme.matrix_deriv(&xwin, hw, dspace, dx)?;
                    let dzn = scheme.matrix_deriv(&zwin, hw, dspace, dx)?;
                    let (r, s) = match eq {
                        EquationId::LinearSpace { w1, w2 } => {
                            let (wx, wz) = if side == 0 { (w1, w2) } else { (w2, w1) };
                            let tx = dxn * wx;
                            let tz = dzn * wz;
                            (sup(&(&tx + &tz)), sup(&tx).max(sup(&tz)))
                        }
                        _ => {
                            let tcol: Vec<CMat> = stack.iter().map(|f2| f2.block(i, j)).collect();
                            let dtf = scheme.matrix_deriv(&tcol, k, 1, dt)?;
                            let tz = dzn * sign;
                            let r = &dtf - &dxn + &tz;
                            (sup(&r), sup(&dtf).max(sup(&dxn)).max(sup(&tz)))
                        }
                    };
                    worst = worst.max(r);
                    sc = sc.max(s);
                }
            }
            out.push((worst, sc));
        }
        Ok(out)
    });
    assemble(row_data, rows, cols, false, dx, if needs_time { dt } else { 0.0 }, scheme)
}

fn assemble(
    chunks: Vec<Result<Vec<(f64, f64)>>>,
    rows: usize,
    cols: usize,
    by_column: bool,
    dx: f64,
    dt: f64,
    scheme: &FdScheme,
) -> Result<PdeReport> {
    // field_residual parallelizes over columns, kernel_residual over rows;
    // the map is row-major either way.
    let mut map = vec![0.0; rows * cols];
    let mut residual = 0.0_f64;
    let mut scale = 0.0_f64;
    for (o, chunk) in chunks.into_iter().enumerate() {
        for (inner, (r, s)) in chunk?.into_iter().enumerate() {
            let pos = if by_column {
                inner * cols + o
            } else {
                o * cols + inner
            };
            map[pos] = r;
            residual = residual.max(r);
            scale = scale.max(s);
        }
    }
    let p = scheme.order as i32;
    let fd_floor = scale * (dx.powi(p) + if dt > 0.0 { dt.powi(p) } else { 0.0 });
    Ok(PdeReport { residual, fd_floor, rows, cols, map })
}

/// Worst-case curvature residual over the sampled spectral parameters.
#[derive(Clone, Debug)]
pub struct ZcReport {
    pub residual: f64,
    pub fd_floor: f64,
    pub per_lambda: Vec<(C64, f64)>,
}

/// Sup norm of dt U - dx V^(n) + [U, V^(n)] over interior points and
/// frames, maximized over the lambda samples. The trajectory must advance
/// the same flow the time component generates.
pub fn zero_curvature_residual(
    n: u32,
    traj: &Trajectory,
    lambdas: &[C64],
    scheme: &FdScheme,
) -> Result<ZcReport> {
    if traj.flow != n {
        return Err(Error::GridMismatch(format!(
            "V^({}) differentiates along the flow-{} axis, trajectory advances flow {}",
            n, n, traj.flow
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one lambda sample required".into(),
        ));
    }
    let u_op = build_u_matrix();
    let v_op = time_component(n)?;
    let grid = traj.x_grid();
    let (dx, dt, steps) = (grid.dx, traj.dt, traj.steps());
    let inner: Vec<usize> = scheme.interior(grid.len, lax_max_deriv(&v_op)).collect();
    let hw = scheme.half_width(1);
    let t_idx: Vec<usize> = scheme.interior(steps, 1).collect();
    if inner.len() < 2 * hw + 1 || t_idx.is_empty() {
        return Err(Error::GridMismatch(format!(
            "grid too short for the order-{} stencil: {} frames, {} points",
            scheme.order, steps, grid.len
        )));
    }
    let n_eval = inner.len() - 2 * hw;
    let mut per_lambda = Vec::with_capacity(lambdas.len());
    let mut residual = 0.0_f64;
    let mut scale = 0.0_f64;
    for &lam in lambdas {
        // V on every evaluated frame across the inner range (the outer x
        // stencil reads hw neighbors), U on every frame at the evaluated
        // points (the time stencil reads the full column).
        let v_tab: Vec<Vec<CMat>> = par::map_range(t_idx.len(), |a| {
            let fr = &traj.frames[t_idx[a]];
            inner
                .iter()
                .map(|&i| v_op.eval(lam, fr, i, scheme))
                .collect::<Result<Vec<CMat>>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let u_tab: Vec<Vec<CMat>> = par::map_range(steps, |k| {
            let fr = &traj.frames[k];
            (0..n_eval)
                .map(|q| u_op.eval(lam, fr, inner[q + hw], scheme))
                .collect::<Result<Vec<CMat>>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let cells: Vec<Result<(f64, f64)>> = par::map_range(n_eval, |q| {
            let u_col: Vec<CMat> = (0..steps).map(|k| u_tab[k][q].clone()).collect();
            let mut worst = 0.0_f64;
            let mut sc = 0.0_f64;
            for (a, &k) in t_idx.iter().enumerate() {
                let dtu = scheme.matrix_deriv(&u_col, k, 1, dt)?;
                let dxv = scheme.matrix_deriv(&v_tab[a][q..q + 2 * hw + 1], hw, 1, dx)?;
                let uu = &u_tab[k][q];
                let vv = &v_tab[a][q + hw];
                let comm = uu * vv - vv * uu;
                let r = &dtu - &dxv + &comm;
                worst = worst.max(sup(&r));
                sc = sc.max(sup(&dtu)).max(sup(&dxv)).max(sup(&comm));
            }
            Ok((worst, sc))
        });
        let mut lam_res = 0.0_f64;
        for c in cells {
            let (r, s) = c?;
            lam_res = lam_res.max(r);
            scale = scale.max(s);
        }
        per_lambda.push((lam, lam_res));
        residual = residual.max(lam_res);
    }
    let p = scheme.order as i32;
    Ok(ZcReport {
        residual,
        fd_floor: scale * (dx.powi(p) + dt.powi(p)),
        per_lambda,
    })
}

/// Charge reports for k = 1..=kmax along one trajectory.
pub fn conservation_drift(kmax: u32, traj: &Trajectory) -> Result<Vec<ChargeReport>> {
    if kmax == 0 {
        return Err(Error::InvalidParameter("kmax must be at least 1".into()));
    }
    (1..=kmax).map(|k| charge_report(k, traj)).collect()
}

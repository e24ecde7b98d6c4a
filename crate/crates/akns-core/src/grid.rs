//! Uniform grids and sampled block fields.

use crate::par;
use crate::{CMat, Error, Result};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Grid1D {
    pub x0: f64,
    pub dx: f64,
    pub len: usize,
}

impl Grid1D {
    pub fn new(x0: f64, dx: f64, len: usize) -> Grid1D {
        assert!(dx > 0.0 && len >= 1);
        Grid1D { x0, dx, len }
    }

    /// Inclusive endpoints; len = round((b - a)/dx) + 1.
    pub fn from_range(a: f64, b: f64, dx: f64) -> Grid1D {
        assert!(b > a && dx > 0.0);
        let len = ((b - a) / dx).round() as usize + 1;
        Grid1D { x0: a, dx, len }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn last(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.x(i))
    }
}

/// (u, u.hat) samples on a spatial grid at one instant. u is M x N,
/// u.hat is N x M.
#[derive(Clone, Debug)]
pub struct GridField {
    pub grid: Grid1D,
    pub n_dim: usize,
    pub m_dim: usize,
    pub u: Vec<CMat>,
    pub uhat: Vec<CMat>,
}

impl GridField {
    pub fn new(grid: Grid1D, n_dim: usize, m_dim: usize, u: Vec<CMat>, uhat: Vec<CMat>) -> Result<GridField> {
        if u.len() != grid.len || uhat.len() != grid.len {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got u: {}, u.hat: {}",
                grid.len,
                u.len(),
                uhat.len()
            )));
        }
        for s in &u {
            if s.nrows() != m_dim || s.ncols() != n_dim {
                return Err(Error::GridMismatch(format!(
                    "u sample is {}x{}, expected {}x{}",
                    s.nrows(),
                    s.ncols(),
                    m_dim,
                    n_dim
                )));
            }
        }
        for s in &uhat {
            if s.nrows() != n_dim || s.ncols() != m_dim {
                return Err(Error::GridMismatch(format!(
                    "u.hat sample is {}x{}, expected {}x{}",
                    s.nrows(),
                    s.ncols(),
                    n_dim,
                    m_dim
                )));
            }
        }
        Ok(GridField { grid, n_dim, m_dim, u, uhat })
    }

    /// Samples a pointwise evaluator over the grid in parallel.
    pub fn sample<F>(grid: Grid1D, n_dim: usize, m_dim: usize, f: F) -> Result<GridField>
    where
        F: Fn(f64) -> Result<(CMat, CMat)> + Sync,
    {
        let pairs: Vec<Result<(CMat, CMat)>> = par::map_range(grid.len, |i| f(grid.x(i)));
        let mut u = Vec::with_capacity(grid.len);
        let mut uhat = Vec::with_capacity(grid.len);
        for p in pairs {
            let (a, b) = p?;
            u.push(a);
            uhat.push(b);
        }
        GridField::new(grid, n_dim, m_dim, u, uhat)
    }

    /// Sup of entrywise moduli over both components.
    pub fn sup_norm(&self) -> f64 {
        let per_point = par::map_range(self.grid.len, |i| {
            let a = self.u[i].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let b = self.uhat[i].iter().map(|z| z.norm()).fold(0.0, f64::max);
            a.max(b)
        });
        per_point.into_iter().fold(0.0, f64::max)
    }

    /// Max modulus of u at the two spatial ends, the boundary-decay gauge.
    pub fn edge_magnitude(&self) -> f64 {
        let edge = |m: &CMat| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        edge(&self.u[0])
            .max(edge(&self.u[self.grid.len - 1]))
            .max(edge(&self.uhat[0]))
            .max(edge(&self.uhat[self.grid.len - 1]))
    }
}

/// Time series of GridFields on a shared spatial grid; frame k sits at
/// t = t0 + k dt along one fixed flow's time axis.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub flow: u32,
    pub t0: f64,
    pub dt: f64,
    pub frames: Vec<GridField>,
}

impl Trajectory {
    pub fn new(flow: u32, t0: f64, dt: f64, frames: Vec<GridField>) -> Result<Trajectory> {
        if frames.is_empty() {
            return Err(Error::GridMismatch("trajectory needs at least one frame".into()));
        }
        let g = frames[0].grid;
        let (n, m) = (frames[0].n_dim, frames[0].m_dim);
        for f in &frames[1..] {
            if f.grid != g || f.n_dim != n || f.m_dim != m {
                return Err(Error::GridMismatch(
                    "trajectory frames disagree on grid or block sizes".into(),
                ));
            }
        }
        Ok(Trajectory { flow, t0, dt, frames })
    }

    pub fn sample<F>(
        flow: u32,
        x_grid: Grid1D,
        t0: f64,
        dt: f64,
        steps: usize,
        n_dim: usize,
        m_dim: usize,
        f: F,
    ) -> Result<Trajectory>
    where
        F: Fn(f64, f64) -> Result<(CMat, CMat)> + Sync,
    {
        let frames: Vec<Result<GridField>> = par::map_range(steps, |k| {
            let t = t0 + k as f64 * dt;
            GridField::sample(x_grid, n_dim, m_dim, |x| f(x, t))
        });
        let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
        Trajectory::new(flow, t0, dt, frames)
    }

    pub fn x_grid(&self) -> Grid1D {
        self.frames[0].grid
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.frames.len()
    }
}

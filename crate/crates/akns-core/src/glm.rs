//! Gelfand-Levitan-Marchenko solver on a truncated domain.
//!
//! The four kernel blocks A, B, C, D are recovered from the bare kernels
//! (f, f.hat) row by row: on each truncation row x_i the integral system is
//! discretized with composite trapezoid weights on [x_i, X_max] and the
//! A-eliminated normal form is solved for B(x_i, .), after which A follows
//! by one quadrature; C and D are the mirror pair. Rows are processed by a
//! backward bordered sweep that grows the resolvent one grid point at a
//! time, so the whole solve costs O(G^3) instead of O(G^4) for G rows.
//!
//! Independent routes for cross-checking: [`resolvent_fields`] inverts the
//! discretized g = id - f.hat f directly (the textbook route, O(G^4)), and
//! [`neumann_fields`] sums the geometric series of the product operator.
//! [`factorization_check`] verifies K+ + F + K+F = K- on test functions and
//! [`integral_riccati_residual`] checks the kernel Riccati system satisfied
//! by gamma = kernel of C(id + A)^{-1}.

use crate::grid::{Grid1D, GridField};
use crate::par;
use crate::{c64, gates, CMat, Error, Result, C64};

/// Where a kernel is allowed to be nonzero relative to the diagonal.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Support {
    /// z >= x, the K+ family.
    Upper,
    /// z <= x, the K- family.
    Lower,
    Full,
}

/// Matrix kernel sampled on the tensor grid {(x_i, x_j)}. Out-of-support
/// blocks are structurally zero: they are never stored and never writable.
#[derive(Clone, Debug)]
pub struct Kernel2D {
    grid: Grid1D,
    block_rows: usize,
    block_cols: usize,
    support: Support,
    data: CMat,
}

impl Kernel2D {
    pub fn zeros(grid: Grid1D, block_rows: usize, block_cols: usize, support: Support) -> Kernel2D {
        assert!(block_rows > 0 && block_cols > 0);
        let data = CMat::zeros(grid.len * block_rows, grid.len * block_cols);
        Kernel2D { grid, block_rows, block_cols, support, data }
    }

    /// Samples an evaluator over the in-support part of the grid, rows in
    /// parallel.
    pub fn sample<F>(
        grid: Grid1D,
        block_rows: usize,
        block_cols: usize,
        support: Support,
        f: F,
    ) -> Result<Kernel2D>
    where
        F: Fn(f64, f64) -> Result<CMat> + Sync,
    {
        let mut out = Kernel2D::zeros(grid, block_rows, block_cols, support);
        let rows: Vec<Result<Vec<(usize, CMat)>>> = par::map_range(grid.len, |i| {
            let mut row = Vec::new();
            for j in 0..grid.len {
                if !out.in_support(i, j) {
                    continue;
                }
                let blk = f(grid.x(i), grid.x(j))?;
                if blk.nrows() != block_rows || blk.ncols() != block_cols {
                    return Err(Error::ShapeMismatch(format!(
                        "kernel sample at ({}, {}) is {}x{}, expected {}x{}",
                        i,
                        j,
                        blk.nrows(),
                        blk.ncols(),
                        block_rows,
                        block_cols
                    )));
                }
                row.push((j, blk));
            }
            Ok(row)
        });
        for (i, row) in rows.into_iter().enumerate() {
            for (j, blk) in row? {
                out.set_block(i, j, &blk);
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn len(&self) -> usize {
        self.grid.len
    }

    pub fn is_empty(&self) -> bool {
        self.grid.len == 0
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        match self.support {
            Support::Upper => j >= i,
            Support::Lower => j <= i,
            Support::Full => true,
        }
    }

    /// Block copy; out-of-support reads are exactly zero.
    pub fn block(&self, i: usize, j: usize) -> CMat {
        if !self.in_support(i, j) {
            return CMat::zeros(self.block_rows, self.block_cols);
        }
        self.data
            .view((i * self.block_rows, j * self.block_cols), (self.block_rows, self.block_cols))
            .into_owned()
    }

    /// Writing outside the declared support is a structural bug.
    pub fn set_block(&mut self, i: usize, j: usize, blk: &CMat) {
        assert!(
            self.in_support(i, j),
            "block ({}, {}) is outside the declared support",
            i,
            j
        );
        assert!(blk.nrows() == self.block_rows && blk.ncols() == self.block_cols);
        self.data
            .view_mut((i * self.block_rows, j * self.block_cols), (self.block_rows, self.block_cols))
            .copy_from(blk);
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sup distance between two kernels on identical grids.
    pub fn sup_distance(&self, other: &Kernel2D) -> f64 {
        assert!(self.grid == other.grid);
        assert!(self.block_rows == other.block_rows && self.block_cols == other.block_cols);
        (&self.data - &other.data).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// GLM output: the four kernel blocks, their diagonal traces, and the
/// reconstructed fields u = -h C(x,x), u.hat = h B(x,x) with h = w1 - w2.
#[derive(Clone, Debug)]
pub struct GlmSolution {
    pub a: Kernel2D,
    pub b: Kernel2D,
    pub c: Kernel2D,
    pub d: Kernel2D,
    pub b_diag: Vec<CMat>,
    pub c_diag: Vec<CMat>,
    pub u: Vec<CMat>,
    pub uhat: Vec<CMat>,
    pub h: C64,
    /// min over rows of log|det| of the discretized (I - f.hat f) proxy.
    pub min_log_det: f64,
}

impl GlmSolution {
    pub fn grid(&self) -> Grid1D {
        self.b.grid
    }

    pub fn n_dim(&self) -> usize {
        self.b.block_rows
    }

    pub fn m_dim(&self) -> usize {
        self.b.block_cols
    }

    /// Field samples as a GridField (u is M x N, u.hat is N x M).
    pub fn grid_field(&self) -> Result<GridField> {
        GridField::new(self.grid(), self.n_dim(), self.m_dim(), self.u.clone(), self.uhat.clone())
    }

    pub fn factorization_residual(&self, f: &Kernel2D, fhat: &Kernel2D) -> Result<f64> {
        factorization_check(&self.a, &self.b, &self.c, &self.d, f, fhat)
    }
}

fn trap_weights(g: usize, dx: f64) -> Vec<f64> {
    if g == 1 {
        return vec![0.0];
    }
    let mut w = vec![dx; g];
    w[0] = 0.5 * dx;
    w[g - 1] = 0.5 * dx;
    w
}

fn scale_block_cols(m: &mut CMat, w: &[f64], blk: usize) {
    debug_assert_eq!(m.ncols(), w.len() * blk);
    for (bi, &wv) in w.iter().enumerate() {
        let s = c64(wv, 0.0);
        for c in bi * blk..(bi + 1) * blk {
            for r in 0..m.nrows() {
                m[(r, c)] *= s;
            }
        }
    }
}

fn scale_block_rows(m: &mut CMat, w: &[f64], blk: usize) {
    debug_assert_eq!(m.nrows(), w.len() * blk);
    for (bi, &wv) in w.iter().enumerate() {
        let s = c64(wv, 0.0);
        for r in bi * blk..(bi + 1) * blk {
            for c in 0..m.ncols() {
                m[(r, c)] *= s;
            }
        }
    }
}

/// Validates a bare kernel pair: shared grid, full support, transposed block
/// shapes, and corner decay at (X_max, X_max) for truncation admissibility.
fn check_pair(f: &Kernel2D, fhat: &Kernel2D) -> Result<(usize, usize)> {
    if f.grid != fhat.grid {
        return Err(Error::GridMismatch("f and f.hat live on different grids".into()));
    }
    if f.support != Support::Full || fhat.support != Support::Full {
        return Err(Error::InvalidParameter("bare kernels must carry full support".into()));
    }
    let (n, m) = (f.block_rows, f.block_cols);
    if fhat.block_rows != m || fhat.block_cols != n {
        return Err(Error::ShapeMismatch(format!(
            "f is {}x{} blocked, f.hat is {}x{}, expected the transpose shape",
            n, m, fhat.block_rows, fhat.block_cols
        )));
    }
    let l = f.grid.len;
    let corner = f
        .block(l - 1, l - 1)
        .iter()
        .chain(fhat.block(l - 1, l - 1).iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if corner > gates::TRUNCATION_DECAY {
        return Err(Error::TruncationInadmissible { norm: corner, gate: gates::TRUNCATION_DECAY });
    }
    Ok((n, m))
}

/// Backward bordered sweep maintaining inv = (I - W_s Krow W_r Kcol)^{-1}
/// restricted to [x_i, X_max], together with log|det|. Extending one row is
/// a rank-(s + 2r) Sherman-Morrison-Woodbury correction (the old leftmost
/// trapezoid weight doubles and the new point enters the inner sums) plus a
/// Schur bordering with the new first block row and column.
struct Sweep<'a> {
    krow: &'a CMat,
    kcol: &'a CMat,
    s: usize,
    r: usize,
    len: usize,
    dx: f64,
    start: usize,
    inv: CMat,
    log_det: f64,
}

impl<'a> Sweep<'a> {
    fn new(krow: &'a CMat, kcol: &'a CMat, s: usize, r: usize, len: usize, dx: f64) -> Sweep<'a> {
        Sweep {
            krow,
            kcol,
            s,
            r,
            len,
            dx,
            start: len - 1,
            inv: CMat::identity(s, s),
            log_det: 0.0,
        }
    }

    fn singular(&self) -> Error {
        Error::SingularResolvent { det_abs: self.log_det.exp(), floor: gates::FREDHOLM_PROXY }
    }

    fn extend(&mut self) -> Result<()> {
        let (s, r) = (self.s, self.r);
        let i = self.start - 1;
        let half = 0.5 * self.dx;
        let g_old = self.len - 1 - i;
        let m_old = g_old * s;
        let g_new = g_old + 1;
        let w_new = trap_weights(g_new, self.dx);
        let w_old = trap_weights(g_old, self.dx);

        // Rank update on the trailing block: row-weight bump at the old
        // leftmost point, inner-weight bump there, and the new inner point.
        let k = s + 2 * r;
        let mut u = CMat::zeros(m_old, k);
        u.view_mut((0, 0), (s, s)).fill_with_identity();
        let mut u2 = self.krow.view(((i + 1) * s, (i + 1) * r), (m_old, r)).into_owned();
        scale_block_rows(&mut u2, &w_old, s);
        u.view_mut((0, s), (m_old, r)).copy_from(&u2);
        let mut u3 = self.krow.view(((i + 1) * s, i * r), (m_old, r)).into_owned();
        scale_block_rows(&mut u3, &w_old, s);
        u.view_mut((0, s + r), (m_old, r)).copy_from(&u3);

        let mut v = CMat::zeros(k, m_old);
        let mut kr = self.krow.view(((i + 1) * s, i * r), (s, g_new * r)).into_owned();
        scale_block_cols(&mut kr, &w_new, r);
        let q = &kr * self.kcol.view((i * r, (i + 1) * s), (g_new * r, m_old));
        v.view_mut((0, 0), (s, m_old)).copy_from(&(q * c64(half, 0.0)));
        v.view_mut((s, 0), (r, m_old))
            .copy_from(&(self.kcol.view(((i + 1) * r, (i + 1) * s), (r, m_old)) * c64(half, 0.0)));
        v.view_mut((s + r, 0), (r, m_old))
            .copy_from(&(self.kcol.view((i * r, (i + 1) * s), (r, m_old)) * c64(half, 0.0)));

        let ru = &self.inv * &u;
        let vr = &v * &self.inv;
        let small = CMat::identity(k, k) - &v * &ru;
        let lu = small.lu();
        let det = lu.determinant();
        if !det.norm().is_finite() || det.norm() == 0.0 {
            return Err(self.singular());
        }
        self.log_det += det.norm().ln();
        let small_inv = lu.try_inverse().ok_or_else(|| self.singular())?;
        self.inv += &ru * small_inv * &vr;

        // Bordering with the new first block (grid row i, weight dx/2).
        let mut kr_i = self.krow.view((i * s, i * r), (s, g_new * r)).into_owned();
        scale_block_cols(&mut kr_i, &w_new, r);
        let p_row = (&kr_i * self.kcol.view((i * r, i * s), (g_new * r, g_new * s))) * c64(half, 0.0);
        let alpha = CMat::identity(s, s) - p_row.view((0, 0), (s, s));
        let beta = -p_row.view((0, s), (s, m_old)).into_owned();

        let mut kr_col = self.krow.view(((i + 1) * s, i * r), (m_old, g_new * r)).into_owned();
        scale_block_cols(&mut kr_col, &w_new, r);
        let mut p_col = &kr_col * self.kcol.view((i * r, i * s), (g_new * r, s));
        scale_block_rows(&mut p_col, &w_new[1..], s);
        let gamma = -p_col;

        let rg = &self.inv * &gamma;
        let br = &beta * &self.inv;
        let schur = alpha - &beta * &rg;
        let lu = schur.lu();
        let det = lu.determinant();
        if !det.norm().is_finite() || det.norm() == 0.0 {
            return Err(self.singular());
        }
        self.log_det += det.norm().ln();
        let s_inv = lu.try_inverse().ok_or_else(|| self.singular())?;

        let m_new = m_old + s;
        let mut ninv = CMat::zeros(m_new, m_new);
        ninv.view_mut((0, 0), (s, s)).copy_from(&s_inv);
        ninv.view_mut((0, s), (s, m_old)).copy_from(&(-(&s_inv * &br)));
        ninv.view_mut((s, 0), (m_old, s)).copy_from(&(-(&rg * &s_inv)));
        ninv.view_mut((s, s), (m_old, m_old)).copy_from(&(&self.inv + &rg * &s_inv * &br));
        self.inv = ninv;
        self.start = i;
        Ok(())
    }
}

/// Solves the truncated GLM system for all four kernel blocks.
///
/// The row systems are the A-eliminated normal form
/// B (I - W f.hat W f) = -f and its mirror; substituting A = -B W f.hat
/// back reproduces the original coupled pair identically, so the discrete
/// block equations hold to machine precision by construction.
pub fn solve_glm(f: &Kernel2D, fhat: &Kernel2D, w1: C64, w2: C64) -> Result<GlmSolution> {
    let (n, m) = check_pair(f, fhat)?;
    let h = w1 - w2;
    if h.norm() < 1e-14 {
        return Err(Error::InvalidParameter("w1 = w2 leaves no field normalization".into()));
    }
    let grid = f.grid;
    let l = grid.len;
    let dx = grid.dx;

    let mut ak = Kernel2D::zeros(grid, n, n, Support::Upper);
    let mut bk = Kernel2D::zeros(grid, n, m, Support::Upper);
    let mut ck = Kernel2D::zeros(grid, m, n, Support::Upper);
    let mut dk = Kernel2D::zeros(grid, m, m, Support::Upper);
    let mut b_diag = vec![CMat::zeros(n, m); l];
    let mut c_diag = vec![CMat::zeros(m, n); l];
    let mut u = vec![CMat::zeros(m, n); l];
    let mut uhat = vec![CMat::zeros(n, m); l];

    let mut sweep_b = Sweep::new(&fhat.data, &f.data, m, n, l, dx);
    let mut sweep_c = Sweep::new(&f.data, &fhat.data, n, m, l, dx);
    let mut min_log_det = f64::INFINITY;
    let floor_log = gates::FREDHOLM_PROXY.ln();

    for i in (0..l).rev() {
        if i + 1 < l {
            sweep_b.extend()?;
            sweep_c.extend()?;
        }
        let ld = sweep_b.log_det.min(sweep_c.log_det);
        min_log_det = min_log_det.min(ld);
        if ld < floor_log {
            return Err(Error::SingularResolvent {
                det_abs: ld.exp(),
                floor: gates::FREDHOLM_PROXY,
            });
        }

        let g = l - i;
        let w = trap_weights(g, dx);

        let b_row = -(f.data.view((i * n, i * m), (n, g * m)) * &sweep_b.inv);
        let mut bw = b_row.clone();
        scale_block_cols(&mut bw, &w, m);
        let a_row = -(&bw * fhat.data.view((i * m, i * n), (g * m, g * n)));

        let c_row = -(fhat.data.view((i * m, i * n), (m, g * n)) * &sweep_c.inv);
        let mut cw = c_row.clone();
        scale_block_cols(&mut cw, &w, n);
        let d_row = -(&cw * f.data.view((i * n, i * m), (g * n, g * m)));

        bk.data.view_mut((i * n, i * m), (n, g * m)).copy_from(&b_row);
        ak.data.view_mut((i * n, i * n), (n, g * n)).copy_from(&a_row);
        ck.data.view_mut((i * m, i * n), (m, g * n)).copy_from(&c_row);
        dk.data.view_mut((i * m, i * m), (m, g * m)).copy_from(&d_row);

        b_diag[i] = b_row.view((0, 0), (n, m)).into_owned();
        c_diag[i] = c_row.view((0, 0), (m, n)).into_owned();
        u[i] = &c_diag[i] * (-h);
        uhat[i] = &b_diag[i] * h;
    }

    Ok(GlmSolution {
        a: ak,
        b: bk,
        c: ck,
        d: dk,
        b_diag,
        c_diag,
        u,
        uhat,
        h,
        min_log_det,
    })
}

/// Reference route: per row, build the discretized g = id - f.hat f and
/// g.hat = id - f f.hat, invert them directly, and read off B = -f g^{-1},
/// C = -f.hat g.hat^{-1}. Costs O(G^4); meant for moderate grids and as the
/// independent cross-check of [`solve_glm`].
pub fn resolvent_fields(f: &Kernel2D, fhat: &Kernel2D) -> Result<(Kernel2D, Kernel2D)> {
    let (n, m) = check_pair(f, fhat)?;
    let grid = f.grid;
    let l = grid.len;
    let dx = grid.dx;

    let rows: Vec<Result<(CMat, CMat)>> = par::map_range(l, |i| {
        let g = l - i;
        if g == 1 {
            let bf = -f.block(i, i);
            let cf = -fhat.block(i, i);
            return Ok((bf, cf));
        }
        let w = trap_weights(g, dx);
        let w_inv: Vec<f64> = w.iter().map(|&x| 1.0 / x).collect();

        let mut fh = fhat.data.view((i * m, i * n), (g * m, g * n)).into_owned();
        scale_block_cols(&mut fh, &w, n);
        let mut ff = f.data.view((i * n, i * m), (g * n, g * m)).into_owned();
        scale_block_cols(&mut ff, &w, m);

        let gmat = CMat::identity(g * m, g * m) - &fh * &ff;
        let lu = gmat.lu();
        let det = lu.determinant().norm();
        if !(det.is_finite() && det >= gates::FREDHOLM_PROXY) {
            return Err(Error::SingularResolvent { det_abs: det, floor: gates::FREDHOLM_PROXY });
        }
        let ginv = lu.try_inverse().ok_or(Error::SingularResolvent {
            det_abs: det,
            floor: gates::FREDHOLM_PROXY,
        })?;

        let ghat = CMat::identity(g * n, g * n) - &ff * &fh;
        let lu = ghat.lu();
        let det = lu.determinant().norm();
        if !(det.is_finite() && det >= gates::FREDHOLM_PROXY) {
            return Err(Error::SingularResolvent { det_abs: det, floor: gates::FREDHOLM_PROXY });
        }
        let ghinv = lu.try_inverse().ok_or(Error::SingularResolvent {
            det_abs: det,
            floor: gates::FREDHOLM_PROXY,
        })?;

        // Kernel extraction undoes the operator weighting: B = -f W G^{-1} W^{-1}.
        let mut frow = f.data.view((i * n, i * m), (n, g * m)).into_owned();
        scale_block_cols(&mut frow, &w, m);
        let mut b_row = -(&frow * &ginv);
        scale_block_cols(&mut b_row, &w_inv, m);

        let mut fhrow = fhat.data.view((i * m, i * n), (m, g * n)).into_owned();
        scale_block_cols(&mut fhrow, &w, n);
        let mut c_row = -(&fhrow * &ghinv);
        scale_block_cols(&mut c_row, &w_inv, n);

        Ok((b_row, c_row))
    });

    let mut bk = Kernel2D::zeros(grid, n, m, Support::Upper);
    let mut ck = Kernel2D::zeros(grid, m, n, Support::Upper);
    for (i, row) in rows.into_iter().enumerate() {
        let (b_row, c_row) = row?;
        let g = l - i;
        bk.data.view_mut((i * n, i * m), (n, g * m)).copy_from(&b_row);
        ck.data.view_mut((i * m, i * n), (m, g * n)).copy_from(&c_row);
    }
    Ok((bk, ck))
}

/// Geometric-series route for (id - f.hat f)^{-1}: sums id + sum_k T^k with
/// T the weighted product operator, per row. Returns (B, C, q) where q is
/// the largest per-row Hilbert-Schmidt norm of the product kernel; the
/// series is refused for q >= 1.
pub fn neumann_fields(
    f: &Kernel2D,
    fhat: &Kernel2D,
    terms: usize,
) -> Result<(Kernel2D, Kernel2D, f64)> {
    let (n, m) = check_pair(f, fhat)?;
    let grid = f.grid;
    let l = grid.len;
    let dx = grid.dx;

    let rows: Vec<Result<(CMat, CMat, f64)>> = par::map_range(l, |i| {
        let g = l - i;
        if g == 1 {
            return Ok((-f.block(i, i), -fhat.block(i, i), 0.0));
        }
        let w = trap_weights(g, dx);

        let mut fh = fhat.data.view((i * m, i * n), (g * m, g * n)).into_owned();
        scale_block_cols(&mut fh, &w, n);
        let prod = &fh * f.data.view((i * n, i * m), (g * n, g * m));
        // Hilbert-Schmidt norm of the product kernel with both quadrature
        // weights restored; dominates the spectral radius.
        let mut hs = 0.0;
        for a in 0..g {
            for b in 0..g {
                let blk = prod.view((a * m, b * m), (m, m));
                let s2: f64 = blk.iter().map(|z| z.norm_sqr()).sum();
                hs += w[a] * w[b] * s2;
            }
        }
        let hs = hs.sqrt();
        if hs >= 1.0 {
            return Err(Error::ConvergenceViolation(format!(
                "Neumann series needs ||f.hat f|| < 1, got {hs:.3e} on row {i}"
            )));
        }

        let mut t = prod.clone();
        scale_block_rows(&mut t, &w, m);

        let f_row = f.data.view((i * n, i * m), (n, g * m)).into_owned();
        let mut acc = f_row.clone();
        let mut sum = f_row.clone();
        for _ in 0..terms {
            acc = &acc * &t;
            sum += &acc;
        }
        let b_row = -sum;

        let mut ffw = f.data.view((i * n, i * m), (g * n, g * m)).into_owned();
        scale_block_cols(&mut ffw, &w, m);
        let prod_hat = &ffw * fhat.data.view((i * m, i * n), (g * m, g * n));
        let mut that = prod_hat.clone();
        scale_block_rows(&mut that, &w, n);

        let fh_row = fhat.data.view((i * m, i * n), (m, g * n)).into_owned();
        let mut acc = fh_row.clone();
        let mut sum = fh_row.clone();
        for _ in 0..terms {
            acc = &acc * &that;
            sum += &acc;
        }
        let c_row = -sum;

        Ok((b_row, c_row, hs))
    });

    let mut bk = Kernel2D::zeros(grid, n, m, Support::Upper);
    let mut ck = Kernel2D::zeros(grid, m, n, Support::Upper);
    let mut worst = 0.0f64;
    for (i, row) in rows.into_iter().enumerate() {
        let (b_row, c_row, hs) = row?;
        let g = l - i;
        bk.data.view_mut((i * n, i * m), (n, g * m)).copy_from(&b_row);
        ck.data.view_mut((i * m, i * n), (m, g * n)).copy_from(&c_row);
        worst = worst.max(hs);
    }
    Ok((bk, ck, worst))
}

fn stack_blocks(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let n = a.nrows();
    let m = d.nrows();
    let mut out = CMat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, m)).copy_from(b);
    out.view_mut((n, 0), (m, n)).copy_from(c);
    out.view_mut((n, n), (m, m)).copy_from(d);
    out
}

fn check_blocks(
    a: &Kernel2D,
    b: &Kernel2D,
    c: &Kernel2D,
    d: &Kernel2D,
    f: &Kernel2D,
    fhat: &Kernel2D,
) -> Result<(usize, usize)> {
    let (n, m) = (b.block_rows, b.block_cols);
    for k in [a, c, d, fhat] {
        if k.grid != b.grid || f.grid != b.grid {
            return Err(Error::GridMismatch("factorization inputs live on different grids".into()));
        }
    }
    let shapes_ok = a.block_rows == n
        && a.block_cols == n
        && c.block_rows == m
        && c.block_cols == n
        && d.block_rows == m
        && d.block_cols == m
        && f.block_rows == n
        && f.block_cols == m
        && fhat.block_rows == m
        && fhat.block_cols == n;
    if !shapes_ok {
        return Err(Error::ShapeMismatch("kernel block shapes do not assemble".into()));
    }
    Ok((n, m))
}

/// K-(x, z) for z <= x from the displayed identity
/// K-(x, z) = F(x, z) + int_x^X K+(x, y) F(y, z) dy.
///
/// The diagonal z = x uses the same formula; by the discrete GLM equation
/// the value there equals -K+(x, x), which is exactly the convention that
/// makes the factorization identity hold on the grid.
pub fn k_minus_kernel(
    a: &Kernel2D,
    b: &Kernel2D,
    c: &Kernel2D,
    d: &Kernel2D,
    f: &Kernel2D,
    fhat: &Kernel2D,
) -> Result<Kernel2D> {
    let (n, m) = check_blocks(a, b, c, d, f, fhat)?;
    let nm = n + m;
    let grid = b.grid;
    let l = grid.len;
    let dx = grid.dx;

    let rows: Vec<Vec<CMat>> = par::map_range(l, |i| {
        let g = l - i;
        let w = trap_weights(g, dx);
        let mut out = Vec::with_capacity(i + 1);
        for j in 0..=i {
            let mut km = stack_blocks(
                &CMat::zeros(n, n),
                &f.block(i, j),
                &fhat.block(i, j),
                &CMat::zeros(m, m),
            );
            for (kk, &wk) in w.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                let y = i + kk;
                let kp = stack_blocks(&a.block(i, y), &b.block(i, y), &c.block(i, y), &d.block(i, y));
                let fb = stack_blocks(
                    &CMat::zeros(n, n),
                    &f.block(y, j),
                    &fhat.block(y, j),
                    &CMat::zeros(m, m),
                );
                km += kp * fb * c64(wk, 0.0);
            }
            out.push(km);
        }
        out
    });

    let mut kminus = Kernel2D::zeros(grid, nm, nm, Support::Lower);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, blk) in row.into_iter().enumerate() {
            kminus.set_block(i, j, &blk);
        }
    }
    Ok(kminus)
}

/// Applies the factorization identity K+ + F + K+F = K- to a basis of
/// Gaussian bump test functions and returns the sup residual over the grid.
///
/// With K+ taken from [`solve_glm`] on the same grid the identity is exact
/// by construction; with K+ sampled from closed forms the residual is pure
/// trapezoid error and shrinks at second order.
pub fn factorization_check(
    a: &Kernel2D,
    b: &Kernel2D,
    c: &Kernel2D,
    d: &Kernel2D,
    f: &Kernel2D,
    fhat: &Kernel2D,
) -> Result<f64> {
    let (n, m) = check_blocks(a, b, c, d, f, fhat)?;
    let nm = n + m;
    let grid = b.grid;
    let l = grid.len;
    let dx = grid.dx;
    let kminus = k_minus_kernel(a, b, c, d, f, fhat)?;

    let span = grid.last() - grid.x0;
    let sigma = span / 8.0;
    let centers = [
        grid.x0 + 0.25 * span,
        grid.x0 + 0.5 * span,
        grid.x0 + 0.75 * span,
    ];
    let w_full = trap_weights(l, dx);

    let n_tests = nm * centers.len();
    let residuals: Vec<f64> = par::map_range(n_tests, |t| {
        let dir = t % nm;
        let center = centers[t / nm];
        let phi: Vec<CMat> = (0..l)
            .map(|j| {
                let mut v = CMat::zeros(nm, 1);
                let arg = (grid.x(j) - center) / sigma;
                v[(dir, 0)] = c64((-arg * arg).exp(), 0.0);
                v
            })
            .collect();

        // F phi over the whole line.
        let f_phi: Vec<CMat> = (0..l)
            .map(|i| {
                let mut acc = CMat::zeros(nm, 1);
                for j in 0..l {
                    let fb = stack_blocks(
                        &CMat::zeros(n, n),
                        &f.block(i, j),
                        &fhat.block(i, j),
                        &CMat::zeros(m, m),
                    );
                    acc += fb * &phi[j] * c64(w_full[j], 0.0);
                }
                acc
            })
            .collect();

        let apply_kp = |rhs: &[CMat]| -> Vec<CMat> {
            (0..l)
                .map(|i| {
                    let g = l - i;
                    let w = trap_weights(g, dx);
                    let mut acc = CMat::zeros(nm, 1);
                    for (kk, &wk) in w.iter().enumerate() {
                        if wk == 0.0 {
                            continue;
                        }
                        let j = i + kk;
                        let kp = stack_blocks(
                            &a.block(i, j),
                            &b.block(i, j),
                            &c.block(i, j),
                            &d.block(i, j),
                        );
                        acc += kp * &rhs[j] * c64(wk, 0.0);
                    }
                    acc
                })
                .collect()
        };

        let kp_phi = apply_kp(&phi);
        let kp_fphi = apply_kp(&f_phi);

        let mut worst = 0.0f64;
        for i in 0..l {
            let w_low = trap_weights(i + 1, dx);
            let mut km_phi = CMat::zeros(nm, 1);
            for (j, &wj) in w_low.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                km_phi += kminus.block(i, j) * &phi[j] * c64(wj, 0.0);
            }
            let res = &kp_phi[i] + &f_phi[i] + &kp_fphi[i] - km_phi;
            worst = worst.max(res.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        worst
    });

    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Residuals of the integral Riccati system satisfied by the kernel gamma
/// of C (id + A)^{-1}.
#[derive(Clone, Copy, Debug)]
pub struct RiccatiReport {
    /// sup |u(x) + h gamma(x, x)|.
    pub diagonal: f64,
    /// sup of the kernel equation
    /// w1 d_z gamma + w2 d_x gamma - int gamma u.hat gamma.
    pub kernel_pde: f64,
}

/// Builds gamma row by row through the block back-substitution
/// gamma (I + W A) = C (A is upper-supported, so the system is triangular)
/// and evaluates both Riccati identities in the weak quadrature sense.
pub fn integral_riccati_residual(glm: &GlmSolution, w1: C64, w2: C64) -> Result<RiccatiReport> {
    let n = glm.n_dim();
    let m = glm.m_dim();
    let grid = glm.grid();
    let l = grid.len;
    let dx = grid.dx;
    let h = w1 - w2;

    let rows: Vec<Result<Vec<CMat>>> = par::map_range(l, |i| {
        let g = l - i;
        let mut row: Vec<CMat> = Vec::with_capacity(g);
        for bb in 0..g {
            // The composition gamma A truncates at y = z by upper support,
            // so each column integrates over [x_i, x_{i+bb}] (Volterra
            // marching); weighting the full row range instead would put an
            // O(dx) jump artifact at the y = z endpoint.
            let w = trap_weights(bb + 1, dx);
            let mut rhs = glm.c.block(i, i + bb);
            for (aa, gam) in row.iter().enumerate() {
                if w[aa] == 0.0 {
                    continue;
                }
                rhs -= gam * glm.a.block(i + aa, i + bb) * c64(w[aa], 0.0);
            }
            let lhs = CMat::identity(n, n) + glm.a.block(i + bb, i + bb) * c64(w[bb], 0.0);
            let lu = lhs.lu();
            let det = lu.determinant().norm();
            if !(det.is_finite() && det >= gates::FREDHOLM_PROXY) {
                return Err(Error::SingularA(format!(
                    "|det(I + wA)| = {det:.3e} at (x, z) = ({}, {})",
                    grid.x(i),
                    grid.x(i + bb)
                )));
            }
            let inv = lu.try_inverse().ok_or_else(|| {
                Error::SingularA(format!("inversion failed at row {i}, column {}", i + bb))
            })?;
            row.push(rhs * inv);
        }
        Ok(row)
    });

    let mut gamma = Kernel2D::zeros(grid, m, n, Support::Upper);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (k, blk) in row.into_iter().enumerate() {
            gamma.set_block(i, i + k, &blk);
        }
    }

    let mut diagonal = 0.0f64;
    for i in 0..l {
        let res = &glm.u[i] + gamma.block(i, i) * h;
        diagonal = diagonal.max(res.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    // Kernel PDE at interior points z > x; the integrand vanishes beyond
    // y = z by upper support, so the quadrature runs on [x, z]. Order-4
    // stencils keep the finite-difference truncation below the O(dx^2)
    // quadrature error of the solution itself.
    let d1 = |m2: CMat, m1: CMat, p1: CMat, p2: CMat| {
        (m2 - m1 * c64(8.0, 0.0) + p1 * c64(8.0, 0.0) - p2) * c64(1.0 / (12.0 * dx), 0.0)
    };
    let pde: Vec<f64> = par::map_range(l, |i| {
        if i < 2 || i + 2 >= l {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for j in (i + 2)..(l - 2) {
            let dz = d1(
                gamma.block(i, j - 2),
                gamma.block(i, j - 1),
                gamma.block(i, j + 1),
                gamma.block(i, j + 2),
            );
            let dxg = d1(
                gamma.block(i - 2, j),
                gamma.block(i - 1, j),
                gamma.block(i + 1, j),
                gamma.block(i + 2, j),
            );
            let lhs = dz * w1 + dxg * w2;

            let pts = j - i + 1;
            let w = trap_weights(pts, dx);
            let mut rhs = CMat::zeros(m, n);
            for (kk, &wk) in w.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                let y = i + kk;
                rhs += gamma.block(i, y) * &glm.uhat[y] * gamma.block(y, j) * c64(wk, 0.0);
            }
            let res = lhs - rhs;
            worst = worst.max(res.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        worst
    });

    Ok(RiccatiReport {
        diagonal,
        kernel_pde: pde.into_iter().fold(0.0, f64::max),
    })
}

/// Sup residual of the four first-order constraint equations coupling the
/// kernel blocks to the diagonal fields, evaluated with centered
/// differences at interior points z > x.
pub fn constraint_residuals(glm: &GlmSolution, w1: C64, w2: C64) -> Result<f64> {
    let grid = glm.grid();
    let l = grid.len;
    let dx = grid.dx;
    let h = w1 - w2;
    if l < 7 {
        return Err(Error::InvalidParameter("constraint stencil needs at least 7 grid points".into()));
    }

    // Order-4 stencils: the kernels carry steep exponentials, and order-2
    // differencing would dominate the residual over the solver's own
    // O(dx^2) quadrature error.
    let d1 = |m2: CMat, m1: CMat, p1: CMat, p2: CMat| {
        (m2 - m1 * c64(8.0, 0.0) + p1 * c64(8.0, 0.0) - p2) * c64(1.0 / (12.0 * dx), 0.0)
    };
    let per_row: Vec<f64> = par::map_range(l, |i| {
        if i < 2 || i + 2 >= l {
            return 0.0;
        }
        let bii = &glm.b_diag[i];
        let cii = &glm.c_diag[i];
        let mut worst = 0.0f64;
        for j in (i + 2)..(l - 2) {
            let dx4 = |k: &Kernel2D| {
                d1(k.block(i - 2, j), k.block(i - 1, j), k.block(i + 1, j), k.block(i + 2, j))
            };
            let dy4 = |k: &Kernel2D| {
                d1(k.block(i, j - 2), k.block(i, j - 1), k.block(i, j + 1), k.block(i, j + 2))
            };
            let dax = dx4(&glm.a);
            let day = dy4(&glm.a);
            let ddx = dx4(&glm.d);
            let ddy = dy4(&glm.d);
            let dbx = dx4(&glm.b);
            let dby = dy4(&glm.b);
            let dcx = dx4(&glm.c);
            let dcy = dy4(&glm.c);

            let r1 = (dax + day) * w1 + bii * glm.c.block(i, j) * h;
            let r2 = (ddx + ddy) * w2 - cii * glm.b.block(i, j) * h;
            let r3 = dbx * w1 + dby * w2 + bii * glm.d.block(i, j) * h;
            let r4 = dcx * w2 + dcy * w1 - cii * glm.a.block(i, j) * h;

            for r in [&r1, &r2, &r3, &r4] {
                worst = worst.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        worst
    });

    Ok(per_row.into_iter().fold(0.0, f64::max))
}

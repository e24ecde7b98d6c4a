//! Finite-difference stencils of order 2 and 4 for derivative orders up to 6.
//!
//! Weights come from Fornberg's recursion for arbitrary node sets, so the
//! centered interior stencils and the one-sided boundary stencils share one
//! code path. Interior stencils are centered and symmetric; the boundary is
//! handled per policy: ShrinkDomain refuses indices whose centered stencil
//! leaves the grid, OneSided shifts the window and keeps nominal order.

use crate::{CMat, Error, Result, C64};
use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Boundary {
    ShrinkDomain,
    OneSided,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FdScheme {
    pub order: usize,
    pub boundary: Boundary,
}

impl FdScheme {
    pub fn new(order: usize, boundary: Boundary) -> Result<FdScheme> {
        if order != 2 && order != 4 {
            return Err(Error::InvalidParameter(format!(
                "finite-difference order {} not supported (2 or 4)",
                order
            )));
        }
        Ok(FdScheme { order, boundary })
    }

    pub fn order2() -> FdScheme {
        FdScheme { order: 2, boundary: Boundary::ShrinkDomain }
    }

    pub fn order4() -> FdScheme {
        FdScheme { order: 4, boundary: Boundary::ShrinkDomain }
    }

    /// Centered stencil half-width for derivative order d.
    pub fn half_width(&self, d: usize) -> usize {
        if d == 0 {
            0
        } else {
            (centered_width(d, self.order) - 1) / 2
        }
    }

    /// Indices whose centered stencil stays inside a grid of length `len`.
    pub fn interior(&self, len: usize, d: usize) -> std::ops::Range<usize> {
        let hw = self.half_width(d);
        if 2 * hw >= len {
            return 0..0;
        }
        hw..len - hw
    }

    /// Node window (start index, weights) for the d-th derivative at index i.
    fn window(&self, i: usize, len: usize, d: usize) -> Result<(usize, &'static [f64])> {
        let hw = self.half_width(d);
        if i >= hw && i + hw < len {
            let w = centered_weights(d, self.order);
            return Ok((i - hw, w));
        }
        match self.boundary {
            Boundary::ShrinkDomain => Err(Error::StencilOutOfRange {
                index: i,
                half_width: hw,
                len,
            }),
            Boundary::OneSided => {
                let width = d + self.order;
                if width > len {
                    return Err(Error::StencilOutOfRange {
                        index: i,
                        half_width: hw,
                        len,
                    });
                }
                let start = i.saturating_sub(width / 2).min(len - width);
                Ok((start, shifted_weights(d, self.order, i - start)))
            }
        }
    }

    pub fn deriv_scalar(&self, samples: &[C64], i: usize, d: usize, dx: f64) -> Result<C64> {
        if d == 0 {
            return Ok(samples[i]);
        }
        let (start, w) = self.window(i, samples.len(), d)?;
        let scale = dx.powi(d as i32);
        let mut acc = C64::new(0.0, 0.0);
        for (j, &wj) in w.iter().enumerate() {
            acc += samples[start + j] * wj;
        }
        Ok(acc / scale)
    }

    pub fn deriv_real(&self, samples: &[f64], i: usize, d: usize, dx: f64) -> Result<f64> {
        if d == 0 {
            return Ok(samples[i]);
        }
        let (start, w) = self.window(i, samples.len(), d)?;
        let scale = dx.powi(d as i32);
        let mut acc = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            acc += samples[start + j] * wj;
        }
        Ok(acc / scale)
    }

    pub fn matrix_deriv(&self, samples: &[CMat], i: usize, d: usize, dx: f64) -> Result<CMat> {
        if d == 0 {
            return Ok(samples[i].clone());
        }
        let (start, w) = self.window(i, samples.len(), d)?;
        let scale = dx.powi(d as i32);
        let mut acc = &samples[start] * C64::new(w[0], 0.0);
        for (j, &wj) in w.iter().enumerate().skip(1) {
            acc += &samples[start + j] * C64::new(wj, 0.0);
        }
        Ok(acc / C64::new(scale, 0.0))
    }
}

/// d-th derivative of a whole sample series; entries outside the valid range
/// under ShrinkDomain are not represented -- callers iterate `interior`.
pub fn fd_derivative(samples: &[C64], d: usize, scheme: &FdScheme, dx: f64) -> Result<Vec<C64>> {
    let idx: Vec<usize> = match scheme.boundary {
        Boundary::ShrinkDomain => scheme.interior(samples.len(), d).collect(),
        Boundary::OneSided => (0..samples.len()).collect(),
    };
    idx.into_iter()
        .map(|i| scheme.deriv_scalar(samples, i, d, dx))
        .collect()
}

fn centered_width(d: usize, order: usize) -> usize {
    2 * ((d + 1) / 2) - 1 + order
}

/// Fornberg weights for the m-th derivative at point z from nodes x.
fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

type WeightKey = (usize, usize, usize);

fn weight_table() -> &'static HashMap<WeightKey, Vec<f64>> {
    static TABLE: OnceLock<HashMap<WeightKey, Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for order in [2usize, 4] {
            for d in 1..=6usize {
                let wc = centered_width(d, order);
                let nodes: Vec<f64> = (0..wc).map(|j| j as f64).collect();
                let z = ((wc - 1) / 2) as f64;
                map.insert((order, d, usize::MAX), fornberg(z, &nodes, d));
                let wo = d + order;
                for pos in 0..wo {
                    let nodes: Vec<f64> = (0..wo).map(|j| j as f64).collect();
                    map.insert((order, d, pos), fornberg(pos as f64, &nodes, d));
                }
            }
        }
        map
    })
}

fn centered_weights(d: usize, order: usize) -> &'static [f64] {
    weight_table()
        .get(&(order, d, usize::MAX))
        .expect("derivative order up to 6")
}

fn shifted_weights(d: usize, order: usize, pos: usize) -> &'static [f64] {
    weight_table()
        .get(&(order, d, pos))
        .expect("derivative order up to 6")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn classic_stencils_recovered() {
        assert_eq!(centered_weights(1, 2), &[-0.5, 0.0, 0.5]);
        assert_eq!(centered_weights(2, 2), &[1.0, -2.0, 1.0]);
        let d1o4 = centered_weights(1, 4);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in d1o4.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }
        let d2o4 = centered_weights(2, 4);
        let expect = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in d2o4.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }
    }

    #[test]
    fn exact_on_quadratics_including_one_sided() {
        let scheme = FdScheme { order: 2, boundary: Boundary::OneSided };
        let dx = 0.1;
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * dx).collect();
        let samples: Vec<C64> = xs.iter().map(|&x| c(x * x)).collect();
        for i in 0..20 {
            let d = scheme.deriv_scalar(&samples, i, 1, dx).unwrap();
            assert_relative_eq!(d.re, 2.0 * xs[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn d0_is_identity() {
        let scheme = FdScheme::order4();
        let samples = vec![c(3.0), c(4.0), c(5.0)];
        assert_eq!(scheme.deriv_scalar(&samples, 1, 0, 0.5).unwrap(), c(4.0));
    }

    #[test]
    fn shrink_domain_rejects_edge() {
        let scheme = FdScheme::order4();
        let samples: Vec<C64> = (0..10).map(|i| c(i as f64)).collect();
        assert!(matches!(
            scheme.deriv_scalar(&samples, 0, 1, 0.1),
            Err(Error::StencilOutOfRange { .. })
        ));
        assert!(scheme.deriv_scalar(&samples, 2, 1, 0.1).is_ok());
    }

    #[test]
    fn observed_order_matches_nominal() {
        // Convergence order on sin(x) measured by step halving; must match
        // the nominal order within 0.2.
        for (order, d) in [(2usize, 1usize), (2, 2), (4, 1), (4, 2), (4, 3)] {
            let scheme = FdScheme { order, boundary: Boundary::ShrinkDomain };
            // Error at the fixed point x = 0.2 so both steps see the same
            // derivative constants.
            let err = |dx: f64| -> f64 {
                let n = 81;
                let samples: Vec<C64> =
                    (0..n).map(|i| c((i as f64 * dx).sin())).collect();
                let i = (0.2 / dx).round() as usize;
                let x = i as f64 * dx;
                let exact = match d {
                    1 => x.cos(),
                    2 => -x.sin(),
                    3 => -x.cos(),
                    _ => unreachable!(),
                };
                (scheme.deriv_scalar(&samples, i, d, dx).unwrap().re - exact).abs()
            };
            let e1 = err(0.02);
            let e2 = err(0.01);
            let observed = (e1 / e2).log2();
            assert!(
                (observed - order as f64).abs() < 0.2,
                "order {} d {}: observed {:.3}",
                order,
                d,
                observed
            );
        }
    }

    #[test]
    fn fourth_order_d2_accuracy() {
        let scheme = FdScheme::order4();
        let dx = 1e-2;
        let n = 201;
        let samples: Vec<C64> = (0..n).map(|i| c((i as f64 * dx).sin())).collect();
        let mut max_err: f64 = 0.0;
        for i in scheme.interior(n, 2) {
            let x = i as f64 * dx;
            let got = scheme.deriv_scalar(&samples, i, 2, dx).unwrap().re;
            max_err = max_err.max((got + x.sin()).abs());
        }
        assert!(max_err < 1e-7, "max err {:.3e}", max_err);
    }

    #[test]
    fn matrix_deriv_matches_scalar() {
        let scheme = FdScheme::order4();
        let dx = 0.05;
        let n = 30;
        let mats: Vec<CMat> = (0..n)
            .map(|i| {
                let x = i as f64 * dx;
                CMat::from_row_slice(1, 2, &[c(x.sin()), c(x * x * x)])
            })
            .collect();
        let m = scheme.matrix_deriv(&mats, 15, 2, dx).unwrap();
        let x = 15.0 * dx;
        assert_relative_eq!(m[(0, 0)].re, -x.sin(), epsilon = 1e-6);
        assert_relative_eq!(m[(0, 1)].re, 6.0 * x, epsilon = 1e-6);
    }
}

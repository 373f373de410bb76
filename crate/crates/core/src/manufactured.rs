//! Closed-form planning solution on `[0,1] x T` with `g(m) = m`:
//!
//! ```text
//! m = 1 + sin(2 pi x) sin(2 pi t)
//! u = -(1 / 2 pi) cot(2 pi t) log m
//! V = m + u_t - u_x^2 / 2
//! ```
//!
//! The density vanishes at `(1/4, 3/4)` and `(3/4, 1/4)`, where `Delta V` is unbounded.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{displacement_identity_check, supnorm_monitor};
use crate::grid::{ScalarField, TimeLayout, TorusGrid, VectorField};
use crate::problem::{delta_v_sup, Coupling};
use crate::residuals::{pde_residuals, PdeResiduals};

const TWO_PI: f64 = 2.0 * PI;

/// Below this `|sin(2 pi t)|` the value and its time derivative use the series in `s`.
pub const SERIES_THRESHOLD: f64 = 1e-4;
const SERIES_TERMS: usize = 6;

/// `S(y) = log(1 + y) / y = sum (-y)^j / (j + 1)`.
fn series(y: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for j in 0..SERIES_TERMS {
        sum += pow / (j + 1) as f64;
        pow *= -y;
    }
    sum
}

/// `S'(y)`.
fn series_prime(y: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for j in 1..SERIES_TERMS {
        sum += -(j as f64) * pow / (j + 1) as f64;
        pow *= -y;
    }
    sum
}

pub fn density(t: f64, x: f64) -> f64 {
    1.0 + (TWO_PI * x).sin() * (TWO_PI * t).sin()
}

/// `u(t, x)`, using the series branch near `sin(2 pi t) = 0`.
pub fn value(t: f64, x: f64) -> f64 {
    let (s, c) = (TWO_PI * t).sin_cos();
    let sigma = (TWO_PI * x).sin();
    if s.abs() < SERIES_THRESHOLD {
        return value_series(t, x);
    }
    let m = 1.0 + s * sigma;
    if m == 0.0 {
        return 0.0;
    }
    -(c / s) * (s * sigma).ln_1p() / TWO_PI
}

/// Series branch of [`value`], valid for small `|sin(2 pi t)|`.
pub fn value_series(t: f64, x: f64) -> f64 {
    let (s, c) = (TWO_PI * t).sin_cos();
    let sigma = (TWO_PI * x).sin();
    -c * sigma * series(s * sigma) / TWO_PI
}

/// Cotangent branch of [`value`]; singular at `sin(2 pi t) = 0`.
pub fn value_cot(t: f64, x: f64) -> f64 {
    let (s, c) = (TWO_PI * t).sin_cos();
    let sigma = (TWO_PI * x).sin();
    -(c / s) * (s * sigma).ln_1p() / TWO_PI
}

pub fn value_t(t: f64, x: f64) -> f64 {
    let (s, c) = (TWO_PI * t).sin_cos();
    let sigma = (TWO_PI * x).sin();
    let y = s * sigma;
    if s.abs() < SERIES_THRESHOLD {
        return y * series(y) - c * c * sigma * sigma * series_prime(y);
    }
    let m = 1.0 + y;
    y.ln_1p() / (s * s) - c * c * sigma / (s * m)
}

pub fn value_x(t: f64, x: f64) -> f64 {
    let c = (TWO_PI * t).cos();
    -c * (TWO_PI * x).cos() / density(t, x)
}

/// `V = m + u_t - u_x^2 / 2`, from the analytic derivatives.
pub fn potential(t: f64, x: f64) -> f64 {
    let ux = value_x(t, x);
    density(t, x) + value_t(t, x) - 0.5 * ux * ux
}

/// `w = -m u_x = cos(2 pi t) cos(2 pi x)`.
pub fn momentum(t: f64, x: f64) -> f64 {
    (TWO_PI * t).cos() * (TWO_PI * x).cos()
}

/// Sampled manufactured fields.
#[derive(Clone, Debug)]
pub struct ManufacturedFields {
    pub m: ScalarField,
    pub u: ScalarField,
    pub v: ScalarField,
}

fn check_grid(grid: &TorusGrid) -> Result<()> {
    if grid.dim() != 1 || (grid.horizon() - 1.0).abs() > 1e-14 {
        return Err(Error::InvalidArgument(format!("the manufactured solution needs d = 1 and T = 1, got {grid}")));
    }
    Ok(())
}

/// Samples `m`, `u`, `V` at cell centres on every time slice.
pub fn manufactured_fields(grid: &TorusGrid) -> Result<ManufacturedFields> {
    check_grid(grid)?;
    let m = ScalarField::from_fn(*grid, TimeLayout::Slices, |t, x, _| density(t, x));
    let u = ScalarField::from_fn(*grid, TimeLayout::Slices, |t, x, _| value(t, x));
    let v = ScalarField::from_fn(*grid, TimeLayout::Slices, |t, x, _| potential(t, x));
    if !v.is_finite() {
        return Err(Error::Domain("manufactured potential is singular on this grid".into()));
    }
    Ok(ManufacturedFields { m, u, v })
}

/// Exact momentum on the staggered layout (interval midpoints, faces).
pub fn manufactured_momentum(grid: &TorusGrid) -> Result<VectorField> {
    check_grid(grid)?;
    Ok(VectorField::from_fn(*grid, TimeLayout::Intervals, |_, t, x, _| momentum(t, x)))
}

/// Diagnostics of the sampled solution on one `n x n` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyLevel {
    pub n: usize,
    pub residuals: PdeResiduals,
    pub delta_v_sup: f64,
    pub min_m: f64,
    pub argmin_t: f64,
    pub argmin_x: f64,
    /// Displacement identity defects for `s = 2`.
    pub d1: f64,
    pub d2: f64,
}

/// Observed orders between consecutive levels (`log2` of the error ratio per halving).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOrders {
    pub hjb_l2: Vec<f64>,
    pub hjb_weighted_l2: Vec<f64>,
    pub fp_l2: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// Ratio of `max|Delta V|` between consecutive levels.
    pub delta_v_growth: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub levels: Vec<StudyLevel>,
    pub orders: StudyOrders,
}

impl RefinementStudy {
    /// Rows `n, hjb_l2, hjb_weighted_l2, fp_l2, hjb_linf, fp_linf, d1, d2`.
    pub fn residual_rows(&self) -> Vec<Vec<f64>> {
        self.levels
            .iter()
            .map(|l| {
                let r = &l.residuals;
                vec![l.n as f64, r.hjb_l2, r.hjb_weighted_l2, r.fp_l2, r.hjb_linf, r.fp_linf, l.d1, l.d2]
            })
            .collect()
    }

    /// Rows `n, max|Delta V|, min m, t, x`.
    pub fn blowup_rows(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|l| vec![l.n as f64, l.delta_v_sup, l.min_m, l.argmin_t, l.argmin_x]).collect()
    }
}

pub const RESIDUAL_COLUMNS: [&str; 8] = ["n", "hjb_l2", "hjb_weighted_l2", "fp_l2", "hjb_linf", "fp_linf", "d1", "d2"];
pub const BLOWUP_COLUMNS: [&str; 5] = ["n", "delta_v_sup", "min_m", "argmin_t", "argmin_x"];

pub fn study_level(n: usize) -> Result<StudyLevel> {
    let grid = TorusGrid::new_1d(n, n, 1.0)?;
    let f = manufactured_fields(&grid)?;
    let coupling = Coupling::power(1.0)?;
    let m0 = f.m.row(0).to_owned();
    let mt = f.m.row(n).to_owned();
    let residuals = pde_residuals(&f.m, &f.u, &f.v, &coupling, Some((&m0, &mt)))?;
    let sup = supnorm_monitor(&f.m);
    let defects = displacement_identity_check(&f.m, &f.u, &f.v, &coupling, 2.0)?;
    Ok(StudyLevel {
        n,
        residuals,
        delta_v_sup: delta_v_sup(&f.v),
        min_m: sup.min_m,
        argmin_t: sup.argmin_t,
        argmin_x: sup.argmin_x[0],
        d1: defects.d1,
        d2: defects.d2.expect("one-dimensional"),
    })
}

/// Samples the closed-form solution on `n x n` grids (`nx = nt = n`) and
/// tabulates residuals, identity defects and the growth of `max|Delta V|`.
pub fn refinement_study(levels: &[usize]) -> Result<RefinementStudy> {
    let levels = levels.iter().map(|n| study_level(*n)).collect::<Result<Vec<_>>>()?;
    let order = |e: &dyn Fn(&StudyLevel) -> f64| -> Vec<f64> {
        levels.windows(2).map(|w| (e(&w[0]) / e(&w[1])).log2() / (w[1].n as f64 / w[0].n as f64).log2()).collect()
    };
    let orders = StudyOrders {
        hjb_l2: order(&|l| l.residuals.hjb_l2),
        hjb_weighted_l2: order(&|l| l.residuals.hjb_weighted_l2),
        fp_l2: order(&|l| l.residuals.fp_l2),
        d1: order(&|l| l.d1),
        d2: order(&|l| l.d2),
        delta_v_growth: levels.windows(2).map(|w| w[1].delta_v_sup / w[0].delta_v_sup).collect(),
    };
    Ok(RefinementStudy { levels, orders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use approx::assert_relative_eq;

    #[test]
    fn density_zeros() {
        assert!(density(0.25, 0.75).abs() < 1e-15);
        assert!(density(0.75, 0.25).abs() < 1e-15);
    }

    #[test]
    fn value_closed_form_point() {
        // -log(1 + sqrt(2)/2) / (2 pi)
        let expected = -(1.0 + std::f64::consts::FRAC_1_SQRT_2).ln() / TWO_PI;
        assert_relative_eq!(value(0.125, 0.25), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, -0.085_116_06, epsilon = 1e-8);
    }

    #[test]
    fn series_limit_and_seam() {
        for x in [0.1, 0.25, 0.6, 0.9] {
            assert_relative_eq!(value(0.0, x), -(TWO_PI * x).sin() / TWO_PI, epsilon = 1e-15);
            // |sin 2 pi t| = 1e-4 exactly at the seam
            let t = (1e-4f64).asin() / TWO_PI;
            assert!((value_series(t, x) - value_cot(t, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn value_t_matches_finite_difference() {
        for (t, x) in [(0.1, 0.3), (0.4, 0.8), (0.6, 0.1), (1e-6, 0.3)] {
            let h = 1e-6;
            let fd = (value(t + h, x) - value(t - h, x)) / (2.0 * h);
            assert!((fd - value_t(t, x)).abs() < 1e-6, "t={t} x={x}");
            let fd = (value(t, x + h) - value(t, x - h)) / (2.0 * h);
            assert!((fd - value_x(t, x)).abs() < 1e-6);
        }
    }

    #[test]
    fn momentum_is_minus_m_ux() {
        for (t, x) in [(0.1, 0.3), (0.4, 0.8), (0.33, 0.9)] {
            assert_relative_eq!(momentum(t, x), -density(t, x) * value_x(t, x), epsilon = 1e-14);
        }
    }

    #[test]
    fn slices_have_unit_mass() {
        let g = TorusGrid::new_1d(64, 64, 1.0).unwrap();
        let f = manufactured_fields(&g).unwrap();
        for k in 0..=g.nt() {
            assert!((integrate(&f.m, k).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(f.u.is_finite() && f.v.is_finite());
    }

    #[test]
    fn small_study_shape() {
        let st = refinement_study(&[16, 32]).unwrap();
        assert_eq!(st.levels.len(), 2);
        assert_eq!(st.orders.fp_l2.len(), 1);
        assert!(st.orders.fp_l2[0] > 1.0);
        assert!(st.orders.delta_v_growth[0] > 1.0);
        assert_eq!(st.residual_rows()[1].len(), RESIDUAL_COLUMNS.len());
    }

    #[test]
    fn rejects_wrong_grid() {
        assert!(manufactured_fields(&TorusGrid::new_1d(8, 8, 2.0).unwrap()).is_err());
        assert!(manufactured_fields(&TorusGrid::new_2d(8, 8, 8, 1.0).unwrap()).is_err());
    }
}

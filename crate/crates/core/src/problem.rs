//! Planning-problem data: coupling, potential, end densities and the
//! smallness / positivity checks on them.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian, ScalarField, TimeLayout, TorusGrid};
use crate::manufactured;

/// Congestion term `g(m)` together with its antiderivative `G`, `G(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Coupling {
    /// `g(m) = m^alpha`.
    Power { alpha: f64 },
    /// Piecewise-linear `g` through `(m_i, g_i)`, extrapolated linearly.
    Tabulated { points: Vec<[f64; 2]> },
}

impl Coupling {
    pub fn power(alpha: f64) -> Result<Self> {
        let c = Coupling::Power { alpha };
        c.validate()?;
        Ok(c)
    }

    pub fn tabulated(points: Vec<[f64; 2]>) -> Result<Self> {
        let c = Coupling::Tabulated { points };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::Power { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::InvalidArgument(format!("coupling exponent must be positive, got {alpha}")));
                }
            }
            Coupling::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidArgument("tabulated coupling needs at least two points".into()));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("tabulated coupling has non-finite entries".into()));
                }
                if points[0][0] < 0.0 {
                    return Err(Error::InvalidArgument("tabulation must start at m >= 0".into()));
                }
                for (i, w) in points.windows(2).enumerate() {
                    if w[1][0] <= w[0][0] {
                        return Err(Error::InvalidArgument(format!(
                            "tabulation abscissae must increase strictly (points {i} and {})",
                            i + 1
                        )));
                    }
                    if w[1][1] < w[0][1] {
                        return Err(Error::InvalidArgument(format!(
                            "tabulated g decreases between m={} and m={}",
                            w[0][0], w[1][0]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Power exponent, if any.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Coupling::Power { alpha } => Some(*alpha),
            Coupling::Tabulated { .. } => None,
        }
    }

    fn segment(points: &[[f64; 2]], m: f64) -> usize {
        let last = points.len() - 2;
        let mut s = 0;
        while s < last && m > points[s + 1][0] {
            s += 1;
        }
        s
    }

    fn slope(points: &[[f64; 2]], s: usize) -> f64 {
        (points[s + 1][1] - points[s][1]) / (points[s + 1][0] - points[s][0])
    }

    /// `g(m)` for `m >= 0`.
    pub fn g(&self, m: f64) -> f64 {
        match self {
            Coupling::Power { alpha } => {
                if *alpha == 1.0 {
                    m
                } else {
                    m.powf(*alpha)
                }
            }
            Coupling::Tabulated { points } => {
                let s = Self::segment(points, m);
                points[s][1] + Self::slope(points, s) * (m - points[s][0])
            }
        }
    }

    /// `g'(m)`; one-sided (right) at tabulation nodes.
    pub fn g_prime(&self, m: f64) -> f64 {
        match self {
            Coupling::Power { alpha } => {
                if *alpha == 1.0 {
                    1.0
                } else {
                    alpha * m.powf(alpha - 1.0)
                }
            }
            Coupling::Tabulated { points } => Self::slope(points, Self::segment(points, m)),
        }
    }

    /// `G(m) = int_0^m g`.
    pub fn big_g(&self, m: f64) -> f64 {
        match self {
            Coupling::Power { alpha } => m.powf(alpha + 1.0) / (alpha + 1.0),
            Coupling::Tabulated { points } => {
                // piecewise integral of the linear interpolant, extrapolating the first
                // segment down to 0 and the last one upwards
                let lin = |s: usize, a: f64, b: f64| {
                    let ga = points[s][1] + Self::slope(points, s) * (a - points[s][0]);
                    let gb = points[s][1] + Self::slope(points, s) * (b - points[s][0]);
                    0.5 * (ga + gb) * (b - a)
                };
                let n = points.len();
                let mut total = 0.0;
                let mut a = 0.0;
                for s in 0..n - 1 {
                    let b = if s == n - 2 { m } else { points[s + 1][0].min(m) };
                    if b > a {
                        total += lin(s, a, b);
                        a = b;
                    }
                    if a >= m {
                        break;
                    }
                }
                total
            }
        }
    }
}

/// `(g(m), G(m))`.
pub fn coupling_eval(coupling: &Coupling, m: f64) -> Result<(f64, f64)> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::Domain(format!("coupling evaluated at m = {m}; need finite m >= 0")));
    }
    Ok((coupling.g(m), coupling.big_g(m)))
}

fn check_pressure_domain(z: f64, s: f64) -> Result<()> {
    if !(z >= 0.0) || !z.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!("pressure needs finite z >= 0, got z = {z}, s = {s}")));
    }
    if z == 0.0 && s < 0.0 {
        return Err(Error::Domain(format!("pressure undefined at z = 0 for s = {s} < 0")));
    }
    Ok(())
}

/// `P(z) = z U'(z) - U(z)` for `U(z) = z^s`, i.e. `(s - 1) z^s`.
pub fn pressure_p(z: f64, s: f64) -> Result<f64> {
    check_pressure_domain(z, s)?;
    Ok((s - 1.0) * z.powf(s))
}

/// `P'(z) = s (s - 1) z^(s-1)`.
pub fn pressure_p_prime(z: f64, s: f64) -> Result<f64> {
    check_pressure_domain(z, s)?;
    if s == 1.0 {
        return Ok(0.0);
    }
    if z == 0.0 && s < 1.0 {
        return Err(Error::Domain(format!("P' undefined at z = 0 for s = {s} < 1")));
    }
    Ok(s * (s - 1.0) * z.powf(s - 1.0))
}

/// The potential `V(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `A cos(2 pi x)`.
    Cosine {
        amplitude: f64,
    },
    /// The manufactured potential with the two-zero density (d = 1, T = 1, alpha = 1).
    Manufactured,
    /// Values given on the grid, `nt + 1` slices.
    Sampled(ScalarField),
}

impl PotentialSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::Cosine { .. } => "cosine",
            PotentialSpec::Manufactured => "manufactured",
            PotentialSpec::Sampled(_) => "sampled",
        }
    }

    /// Samples `V` at cell centres on every time slice.
    pub fn sample(&self, grid: &TorusGrid) -> Result<ScalarField> {
        match self {
            PotentialSpec::Zero => Ok(ScalarField::zeros(*grid, TimeLayout::Slices)),
            PotentialSpec::Cosine { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(Error::InvalidArgument("cosine amplitude must be finite".into()));
                }
                let a = *amplitude;
                Ok(ScalarField::from_fn(*grid, TimeLayout::Slices, move |_, x, _| {
                    a * (2.0 * std::f64::consts::PI * x).cos()
                }))
            }
            PotentialSpec::Manufactured => Ok(manufactured::manufactured_fields(grid)?.v),
            PotentialSpec::Sampled(v) => {
                grid.ensure_same(v.grid())?;
                if v.layout() != TimeLayout::Slices {
                    return Err(Error::GridMismatch("sampled potential must be slice-indexed".into()));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("sampled potential has non-finite values".into()));
                }
                Ok(v.clone())
            }
        }
    }
}

/// `max |Delta V|` over the grid, using the compact stencil.
pub fn delta_v_sup(v: &ScalarField) -> f64 {
    laplacian(v).sup_norm()
}

/// Validated problem data on a fixed grid.
#[derive(Clone, Debug)]
pub struct PlanningProblem {
    grid: TorusGrid,
    m0: Array1<f64>,
    mt: Array1<f64>,
    coupling: Coupling,
    potential: PotentialSpec,
    v: ScalarField,
    delta_v_sup: f64,
    k0: f64,
    rescale: [f64; 2],
}

fn normalize(grid: &TorusGrid, name: &str, m: &[f64]) -> Result<(Array1<f64>, f64)> {
    if m.len() != grid.cells() {
        return Err(Error::GridMismatch(format!("{name} has {} cells, grid has {}", m.len(), grid.cells())));
    }
    if let Some((c, v)) = m.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative; cell {c} holds {v}")));
    }
    let mut mass = 0.0;
    for v in m {
        mass += v;
    }
    mass *= grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument(format!("{name} has zero mass")));
    }
    let factor = 1.0 / mass;
    Ok((m.iter().map(|v| v * factor).collect(), factor))
}

impl PlanningProblem {
    /// Builds the problem, rescaling both end densities to unit mass.
    pub fn new(grid: TorusGrid, m0: &[f64], mt: &[f64], coupling: Coupling, potential: PotentialSpec) -> Result<Self> {
        coupling.validate()?;
        let (m0, f0) = normalize(&grid, "m0", m0)?;
        let (mt, ft) = normalize(&grid, "mT", mt)?;
        let v = potential.sample(&grid)?;
        let delta_v_sup = delta_v_sup(&v);
        let k0 = m0.iter().chain(mt.iter()).copied().fold(f64::INFINITY, f64::min);
        Ok(PlanningProblem { grid, m0, mt, coupling, potential, v, delta_v_sup, k0, rescale: [f0, ft] })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn m0(&self) -> &Array1<f64> {
        &self.m0
    }
    pub fn mt(&self) -> &Array1<f64> {
        &self.mt
    }
    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }
    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }
    /// Potential sampled on the problem grid.
    pub fn v(&self) -> &ScalarField {
        &self.v
    }
    /// Discrete `max |Delta V|` on this grid.
    pub fn delta_v_sup(&self) -> f64 {
        self.delta_v_sup
    }
    /// `min(m0, mT)` after normalization.
    pub fn k0(&self) -> f64 {
        self.k0
    }
    /// Factors applied to `m0` and `mT` to reach unit mass.
    pub fn rescale(&self) -> [f64; 2] {
        self.rescale
    }
}

/// Result of [`validate_problem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub grid: String,
    pub potential: String,
    pub delta_v_sup: f64,
    /// Supremum of admissible `p`: `2 / (T^2 |Delta V|)`.
    #[serde(with = "crate::serde_ext::float")]
    pub p_sup: f64,
    #[serde(with = "crate::serde_ext::opt_float")]
    pub p: Option<f64>,
    /// `2 - p T^2 |Delta V|`.
    #[serde(with = "crate::serde_ext::opt_float")]
    pub epsilon: Option<f64>,
    /// `epsilon > 0`, when `p` is given.
    pub p_admissible: Option<bool>,
    /// Some `p > 0` is admissible.
    pub smallness_holds: bool,
    pub k0: f64,
    /// `k0 > 0`.
    pub lower_bound_holds: bool,
    pub mass_rescale: [f64; 2],
}

impl ValidationReport {
    /// `2 - p T^2 |Delta V|` for any `p`.
    pub fn epsilon_for(&self, p: f64, horizon: f64) -> f64 {
        2.0 - p * horizon * horizon * self.delta_v_sup
    }
}

/// Checks the potential smallness condition and the positive lower bound of the end data.
pub fn validate_problem(problem: &PlanningProblem, p: Option<f64>) -> ValidationReport {
    let t = problem.grid.horizon();
    let dv = problem.delta_v_sup;
    let p_sup = if dv == 0.0 { f64::INFINITY } else { 2.0 / (t * t * dv) };
    let epsilon = p.map(|p| 2.0 - p * t * t * dv);
    ValidationReport {
        grid: problem.grid.to_string(),
        potential: problem.potential.name().to_string(),
        delta_v_sup: dv,
        p_sup,
        p,
        epsilon,
        p_admissible: epsilon.map(|e| e > 0.0),
        smallness_holds: p_sup > 0.0,
        k0: problem.k0,
        lower_bound_holds: problem.k0 > 0.0,
        mass_rescale: problem.rescale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(grid: &TorusGrid) -> Vec<f64> {
        vec![1.0; grid.cells()]
    }

    #[test]
    fn pressure_examples() {
        for z in [0.0, 0.3, 2.0, 17.0] {
            assert_eq!(pressure_p(z, 1.0).unwrap(), 0.0);
        }
        assert_eq!(pressure_p(2.0, 2.0).unwrap(), 4.0);
        assert!(pressure_p(-1.0, 2.0).is_err());
        assert!(pressure_p(0.0, -1.0).is_err());
        assert_relative_eq!(pressure_p_prime(2.0, 3.0).unwrap(), 24.0);
    }

    #[test]
    fn coupling_eval_power() {
        let c = Coupling::power(1.0).unwrap();
        assert_eq!(coupling_eval(&c, 3.0).unwrap(), (3.0, 4.5));
        assert!(coupling_eval(&c, -1.0).is_err());
        assert!(Coupling::power(0.0).is_err());
    }

    #[test]
    fn tabulated_coupling_matches_linear_power() {
        let tab = Coupling::tabulated(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        for m in [0.0, 0.5, 1.0, 1.7, 3.0] {
            assert_relative_eq!(tab.g(m), m, epsilon = 1e-15);
            assert_relative_eq!(tab.big_g(m), m * m / 2.0, epsilon = 1e-14);
            assert_relative_eq!(tab.g_prime(m), 1.0, epsilon = 1e-15);
        }
        assert!(Coupling::tabulated(vec![[0.0, 1.0], [1.0, 0.5]]).is_err());
        assert!(Coupling::tabulated(vec![[0.0, 1.0]]).is_err());
    }

    #[test]
    fn tabulated_antiderivative_by_pieces() {
        // g = 1 on [0,1], rises to 3 at m=2, slope 2 beyond
        let tab = Coupling::tabulated(vec![[0.0, 1.0], [1.0, 1.0], [2.0, 3.0]]).unwrap();
        assert_relative_eq!(tab.big_g(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(tab.big_g(2.0), 3.0, epsilon = 1e-15);
        assert_relative_eq!(tab.big_g(3.0), 3.0 + 4.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn big_g_derivative_is_g(m in 0.01f64..10.0, alpha in 0.2f64..4.0) {
            let c = Coupling::power(alpha).unwrap();
            let h = 1e-5 * m.max(1.0);
            let fd = (c.big_g(m + h) - c.big_g(m - h)) / (2.0 * h);
            prop_assert!((fd - c.g(m)).abs() <= 1e-8 * c.g(m).max(1.0));
        }

        #[test]
        fn pressure_nonnegative_for_s_at_least_one(z in 0.0f64..50.0, s in 1.0f64..6.0) {
            prop_assert!(pressure_p(z, s).unwrap() >= 0.0);
        }
    }

    #[test]
    fn zero_potential_has_infinite_p_sup() {
        let g = TorusGrid::new_1d(16, 8, 1.0).unwrap();
        let pr =
            PlanningProblem::new(g, &unit(&g), &unit(&g), Coupling::power(1.0).unwrap(), PotentialSpec::Zero).unwrap();
        let rep = validate_problem(&pr, Some(100.0));
        assert!(rep.p_sup.is_infinite());
        assert_eq!(rep.p_admissible, Some(true));
        assert!(rep.lower_bound_holds);
        assert_eq!(rep.k0, 1.0);
    }

    #[test]
    fn cosine_potential_delta_v_converges() {
        let a = 1.0 / (4.0 * PI * PI);
        let mut prev_err = f64::INFINITY;
        for nx in [16, 32, 64, 128, 256] {
            let g = TorusGrid::new_1d(nx, 4, 1.0).unwrap();
            let pr = PlanningProblem::new(
                g,
                &unit(&g),
                &unit(&g),
                Coupling::power(1.0).unwrap(),
                PotentialSpec::Cosine { amplitude: a },
            )
            .unwrap();
            // closed form: discrete symbol times the continuum value 1
            let h = 1.0 / nx as f64;
            let symbol = ((PI * h).sin() / (PI * h)).powi(2);
            let rep = validate_problem(&pr, Some(1.0));
            // the cosine is sampled at cell centres, so the max is attained only up to cos(pi h)
            assert!(rep.delta_v_sup <= symbol + 1e-12);
            let err = (rep.delta_v_sup - 1.0).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-3);
    }

    #[test]
    fn normalization_records_factor() {
        let g = TorusGrid::new_1d(8, 4, 1.0).unwrap();
        let m = vec![2.0; 8];
        let pr = PlanningProblem::new(g, &m, &unit(&g), Coupling::power(1.0).unwrap(), PotentialSpec::Zero).unwrap();
        assert_eq!(pr.rescale(), [0.5, 1.0]);
        assert!(pr.m0().iter().all(|v| (*v - 1.0).abs() < 1e-15));
        let bad = vec![-1.0; 8];
        assert!(PlanningProblem::new(g, &bad, &unit(&g), Coupling::power(1.0).unwrap(), PotentialSpec::Zero).is_err());
    }
}

//! A priori estimates checked on discrete trajectories: energies `int m^s`,
//! their convexity, the displacement identities, endpoint bounds and
//! sup-norm monitors.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_sq_center_row, integrate_row, laplacian, ScalarField, TimeLayout, TorusGrid};
use crate::problem::{delta_v_sup, pressure_p, pressure_p_prime, validate_problem, Coupling, PlanningProblem};

/// Default relative slack of certificates.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// Densities at or below this count as vacuum.
pub const VACUUM_FLOOR: f64 = 1e-8;

/// Negative values of `m` down to this size are treated as rounding and clipped.
const NEGATIVE_SLACK: f64 = 1e-10;

/// `f(t_k) = int m(t_k)^s dx` and its time differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrajectory {
    pub s: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Central differences inside, one-sided at the ends.
    pub first: Vec<f64>,
    /// Central second differences on interior slices; `nan` at both ends.
    #[serde(with = "crate::serde_ext::vec_float")]
    pub second: Vec<f64>,
}

impl EnergyTrajectory {
    /// Builds a trajectory from samples on a uniform time grid.
    pub fn from_samples(s: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidArgument("a trajectory needs at least two samples".into()));
        }
        let times = (0..n).map(|k| k as f64 * dt).collect();
        let mut first = vec![0.0; n];
        first[0] = (values[1] - values[0]) / dt;
        first[n - 1] = (values[n - 1] - values[n - 2]) / dt;
        for k in 1..n - 1 {
            first[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
        }
        let mut second = vec![f64::NAN; n];
        for k in 1..n - 1 {
            second[k] = (values[k + 1] - 2.0 * values[k] + values[k - 1]) / (dt * dt);
        }
        Ok(EnergyTrajectory { s, dt, times, values, first, second })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Plot-ready rows `t, f, f', f''` (one per slice).
    pub fn rows(&self) -> Vec<[f64; 4]> {
        (0..self.values.len()).map(|k| [self.times[k], self.values[k], self.first[k], self.second[k]]).collect()
    }
}

fn power_row(grid: &TorusGrid, m: &ScalarField, k: usize, s: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (c, &v) in m.row(k).iter().enumerate() {
        if !(v >= -NEGATIVE_SLACK) {
            return Err(Error::Domain(format!("negative density {v} at slice {k}, cell {c}")));
        }
        let v = v.max(0.0);
        if s < 0.0 && v == 0.0 {
            let (x, y) = grid.center(c);
            return Err(Error::Vacuum(format!(
                "m = 0 at t = {:.6}, x = ({x:.6}, {y:.6}) (slice {k}, cell {c}); negative exponent {s} undefined",
                grid.time(TimeLayout::Slices, k)
            )));
        }
        sum += if s == 1.0 { v } else { v.powf(s) };
    }
    Ok(sum * grid.cell_volume())
}

/// `int m^s` on every slice of `m`.
pub fn energy_trajectory(m: &ScalarField, s: f64) -> Result<EnergyTrajectory> {
    if !s.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent must be finite, got {s}")));
    }
    if m.layout() != TimeLayout::Slices {
        return Err(Error::GridMismatch("energy trajectories need slice-indexed densities".into()));
    }
    let grid = *m.grid();
    let values = (0..m.rows()).map(|k| power_row(&grid, m, k, s)).collect::<Result<Vec<_>>>()?;
    EnergyTrajectory::from_samples(s, grid.dt(), values)
}

/// `int m0^s` for a single slice.
pub fn slice_energy(grid: &TorusGrid, m: &Array1<f64>, s: f64) -> Result<f64> {
    let f = ScalarField::from_row(*grid, TimeLayout::Intervals, m.as_slice().expect("contiguous"))?;
    power_row(grid, &f, 0, s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityDefect {
    pub c: f64,
    /// `min_k f''(t_k) + c f(t_k)` over interior slices.
    pub defect: f64,
    pub argmin: usize,
    pub t_argmin: f64,
}

/// Smallest value of `f'' + c f` over the interior of the trajectory.
pub fn convexity_defect(f: &EnergyTrajectory, c: f64) -> Result<ConvexityDefect> {
    let n = f.values.len();
    if n < 3 {
        return Err(Error::InvalidArgument("convexity needs at least three slices".into()));
    }
    let mut best = (f64::INFINITY, 1);
    for k in 1..n - 1 {
        let d = f.second[k] + c * f.values[k];
        if d < best.0 {
            best = (d, k);
        }
    }
    Ok(ConvexityDefect { c, defect: best.0, argmin: best.1, t_argmin: f.times[best.1] })
}

/// Default constant `|s - 1| max|Delta V|` for the convexity test.
pub fn default_convexity_constant(s: f64, v: &ScalarField) -> f64 {
    (s - 1.0).abs() * delta_v_sup(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementDefects {
    pub s: f64,
    /// `max_k |(f_{k+1} - f_{k-1}) / 2dt - int P(m) Delta u|` over interior slices.
    pub d1: f64,
    /// Second-derivative identity defect (one dimension only).
    pub d2: Option<f64>,
}

/// Checks the first and second time-derivative identities of `int m^s`
/// along `(m, u)`.
///
/// First: `d/dt int U(m) = int P(m) Delta u`. Second (d = 1, equality):
/// `d^2/dt^2 int U(m) = int [P'(m) m (Delta u)^2 + P'(m) g'(m) |Dm|^2 + P(m) Delta V]`.
pub fn displacement_identity_check(
    m: &ScalarField,
    u: &ScalarField,
    v: &ScalarField,
    coupling: &Coupling,
    s: f64,
) -> Result<DisplacementDefects> {
    m.ensure_same(u)?;
    m.ensure_same(v)?;
    if m.layout() != TimeLayout::Slices {
        return Err(Error::GridMismatch("identities need slice-indexed fields".into()));
    }
    let grid = *m.grid();
    let in_gap = s > 0.0 && s < 1.0;
    if in_gap || (grid.dim() != 1 && s < 1.0) {
        return Err(Error::Domain(format!(
            "exponent s = {s} not supported in d = {}: need s >= 1, or s outside (0, 1) in one dimension",
            grid.dim()
        )));
    }
    let f = energy_trajectory(m, s)?;
    let lap_u = laplacian(u);
    let lap_v = laplacian(v);
    let (nt, cells) = (grid.nt(), grid.cells());
    let dt = grid.dt();
    let vol = grid.cell_volume();
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    let mut dm2 = vec![0.0; cells];
    let mut scratch = vec![0.0; cells];
    for k in 1..nt {
        let mrow = m.row(k);
        let mut first = 0.0;
        let mut second = 0.0;
        let mvec: Vec<f64> = mrow.iter().map(|v| v.max(0.0)).collect();
        grad_sq_center_row(&grid, &mvec, &mut dm2, &mut scratch);
        for c in 0..cells {
            let z = mvec[c];
            let p = pressure_p(z, s)?;
            let lu = lap_u.values()[[k, c]];
            first += p * lu;
            if grid.dim() == 1 {
                let pp = if z == 0.0 && s >= 1.0 { 0.0 } else { pressure_p_prime(z, s)? };
                second += pp * z * lu * lu + pp * coupling.g_prime(z) * dm2[c] + p * lap_v.values()[[k, c]];
            }
        }
        let df = (f.values[k + 1] - f.values[k - 1]) / (2.0 * dt);
        d1 = d1.max((df - first * vol).abs());
        d2 = d2.max((f.second[k] - second * vol).abs());
    }
    Ok(DisplacementDefects { s, d1, d2: (grid.dim() == 1).then_some(d2) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Endpoint bound for `f'' + c f >= 0`.
    Endpoint,
    /// `max_t int m^{p+1}`.
    Density,
    /// `max_t int m^{1-p}`.
    InverseDensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub horizon: f64,
    pub p: Option<f64>,
    pub epsilon: f64,
    pub bound: f64,
    pub observed: Option<f64>,
    /// `observed <= bound (1 + tolerance)`; `None` without an observation.
    pub pass: Option<bool>,
    pub tolerance: f64,
}

impl BoundCertificate {
    pub fn with_observed(mut self, observed: f64) -> Self {
        self.observed = Some(observed);
        self.pass = Some(observed <= self.bound * (1.0 + self.tolerance));
        self
    }
}

/// Sharp endpoint bound `2(a + b) / (2 - c T^2)` for non-negative `f` with
/// `f'' + c f >= 0`, `f(0) = a`, `f(T) = b`.
pub fn lemma_bound(a: f64, b: f64, c: f64, horizon: f64) -> Result<BoundCertificate> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "endpoint values must be finite and non-negative, got a = {a}, b = {b}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("need T > 0 and finite c, got T = {horizon}, c = {c}")));
    }
    let ct2 = c * horizon * horizon;
    if ct2 >= std::f64::consts::PI.powi(2) {
        return Err(Error::Domain(format!(
            "c T^2 = {ct2} >= pi^2: the family k sin(pi t / T) + 1 satisfies the hypothesis with f(0) = f(T) = 1 and is unbounded in k"
        )));
    }
    if ct2 >= 2.0 {
        return Err(Error::Domain(format!("c T^2 = {ct2} >= 2: outside the range where the endpoint bound holds")));
    }
    let epsilon = 2.0 - ct2;
    Ok(BoundCertificate {
        kind: BoundKind::Endpoint,
        a,
        b,
        c,
        horizon,
        p: None,
        epsilon,
        bound: 2.0 * (a + b) / epsilon,
        observed: None,
        pass: None,
        tolerance: 0.0,
    })
}

/// Density and (optionally) inverse-density certificates for a trajectory `m`.
///
/// Both bounds are `(2 / eps) (int m0^s + int mT^s)` with `eps = 2 - p T^2 max|Delta V|`
/// and `s = p + 1` (density) or `s = 1 - p` (inverse density).
pub fn density_bound(
    problem: &PlanningProblem,
    p: f64,
    m: &ScalarField,
    inverse: bool,
    tolerance: f64,
) -> Result<(BoundCertificate, Option<BoundCertificate>)> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must be positive, got {p}")));
    }
    problem.grid().ensure_same(m.grid())?;
    let report = validate_problem(problem, Some(p));
    let epsilon = report.epsilon.expect("p supplied");
    if epsilon <= 0.0 {
        return Err(Error::Domain(format!(
            "p = {p} is not admissible: eps = 2 - p T^2 |Delta V| = {epsilon} <= 0 (p must stay below {})",
            report.p_sup
        )));
    }
    let grid = problem.grid();
    let horizon = grid.horizon();
    let make = |kind: BoundKind, s: f64| -> Result<BoundCertificate> {
        let a = slice_energy(grid, problem.m0(), s)?;
        let b = slice_energy(grid, problem.mt(), s)?;
        let observed = energy_trajectory(m, s)?.max();
        Ok(BoundCertificate {
            kind,
            a,
            b,
            c: (s - 1.0).abs() * problem.delta_v_sup(),
            horizon,
            p: Some(p),
            epsilon,
            bound: 2.0 * (a + b) / epsilon,
            observed: None,
            pass: None,
            tolerance,
        }
        .with_observed(observed))
    };
    let density = make(BoundKind::Density, p + 1.0)?;
    let inverse = if inverse {
        if grid.dim() != 1 {
            return Err(Error::Domain("the inverse-density bound is one-dimensional".into()));
        }
        if p < 2.0 {
            return Err(Error::Domain(format!("the inverse-density bound needs p >= 2, got {p}")));
        }
        if !(problem.k0() > 0.0) {
            return Err(Error::Domain("the inverse-density bound needs positive end densities (k0 > 0)".into()));
        }
        Some(make(BoundKind::InverseDensity, 1.0 - p)?)
    } else {
        None
    };
    Ok((density, inverse))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupNormReport {
    pub max_m: f64,
    pub min_m: f64,
    /// `max 1/m`; `None` when vacuum is flagged.
    pub max_inverse: Option<f64>,
    pub vacuum: bool,
    /// Lower bound on `min m` between grid points implied by the local curvature.
    pub subcell_drop: f64,
    pub argmin_slice: usize,
    pub argmin_cell: usize,
    pub argmin_t: f64,
    pub argmin_x: [f64; 2],
}

/// Sup norms of `m` and `1/m`, with a vacuum flag.
///
/// Vacuum is flagged when `min m <= 1e-8`, or when the local curvature at the
/// grid minimum allows the continuum density to reach zero inside the
/// neighbouring cells: `min m <= sum_a |d_aa m| h_a^2 / 8`.
pub fn supnorm_monitor(m: &ScalarField) -> SupNormReport {
    let grid = *m.grid();
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut kmin, mut cmin) = (0, 0);
    for ((k, c), &v) in m.values().indexed_iter() {
        if v < min {
            min = v;
            kmin = k;
            cmin = c;
        }
        max = max.max(v);
    }
    let vals = m.values();
    let centre = vals[[kmin, cmin]];
    let mut drop = 0.0;
    for axis in 0..grid.dim() {
        let next = vals[[kmin, grid.neighbor(cmin, axis, true)]];
        let prev = vals[[kmin, grid.neighbor(cmin, axis, false)]];
        drop += (next - 2.0 * centre + prev).abs() / 8.0;
    }
    if m.layout() == TimeLayout::Slices && kmin > 0 && kmin + 1 < m.rows() {
        let next = vals[[kmin + 1, cmin]];
        let prev = vals[[kmin - 1, cmin]];
        drop += (next - 2.0 * centre + prev).abs() / 8.0;
    }
    let vacuum = min <= VACUUM_FLOOR || min <= drop;
    let (x, y) = grid.center(cmin);
    SupNormReport {
        max_m: max,
        min_m: min,
        max_inverse: if vacuum { None } else { Some(1.0 / min) },
        vacuum,
        subcell_drop: drop,
        argmin_slice: kmin,
        argmin_cell: cmin,
        argmin_t: grid.time(m.layout(), kmin),
        argmin_x: [x, y],
    }
}

/// Slice masses `int m(t_k)`.
pub fn slice_masses(m: &ScalarField) -> Vec<f64> {
    (0..m.rows()).map(|k| integrate_row(m.grid(), m.row(k))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::manufactured_fields;
    use crate::problem::PotentialSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_density_energy() {
        let g = TorusGrid::new_1d(8, 4, 1.0).unwrap();
        let m = ScalarField::constant(g, TimeLayout::Slices, 1.0);
        for s in [-2.0, 0.5, 1.0, 3.0] {
            assert!(energy_trajectory(&m, s).unwrap().values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn negative_exponent_reports_vacuum_location() {
        let g = TorusGrid::new_1d(8, 4, 1.0).unwrap();
        let mut m = ScalarField::constant(g, TimeLayout::Slices, 1.0);
        m.values_mut()[[2, 3]] = 0.0;
        let err = energy_trajectory(&m, -1.0).unwrap_err().to_string();
        assert!(err.contains("slice 2, cell 3"), "{err}");
        assert!(energy_trajectory(&m, 2.0).is_ok());
    }

    #[test]
    fn example_density_square_at_quarter() {
        let g = TorusGrid::new_1d(256, 256, 1.0).unwrap();
        let f = manufactured_fields(&g).unwrap();
        let e = energy_trajectory(&f.m, 2.0).unwrap();
        assert!((e.values[64] - 1.5).abs() < 1e-8);
    }

    #[test]
    fn convexity_of_quadratic_and_sine_family() {
        let n = 10;
        let dt = 1.0 / n as f64;
        let f = EnergyTrajectory::from_samples(2.0, dt, (0..=n).map(|k| (k as f64 * dt).powi(2)).collect()).unwrap();
        let d = convexity_defect(&f, 0.0).unwrap();
        assert!((d.defect - 2.0).abs() < 1e-10);
        let n = 200;
        let dt = 1.0 / n as f64;
        let f = EnergyTrajectory::from_samples(2.0, dt, (0..=n).map(|k| 1.0 + (PI * k as f64 * dt).sin()).collect())
            .unwrap();
        let d = convexity_defect(&f, PI * PI).unwrap();
        assert!((d.defect - PI * PI).abs() < 1e-3, "{}", d.defect);
    }

    proptest! {
        #[test]
        fn convex_samples_have_nonnegative_defect(a in -3.0f64..3.0, b in -3.0f64..3.0, q in 0.0f64..5.0, n in 3usize..40) {
            let dt = 1.0 / n as f64;
            let f = EnergyTrajectory::from_samples(2.0, dt, (0..=n).map(|k| {
                let t = k as f64 * dt;
                a + b * t + q * t * t
            }).collect()).unwrap();
            prop_assert!(convexity_defect(&f, 0.0).unwrap().defect >= -1e-12 * (1.0 + a.abs() + b.abs() + q) / (dt * dt));
        }
    }

    #[test]
    fn lemma_examples() {
        assert_eq!(lemma_bound(1.0, 1.0, 0.0, 1.0).unwrap().bound, 2.0);
        assert_eq!(lemma_bound(1.0, 1.0, 1.0, 1.0).unwrap().bound, 4.0);
        let err = lemma_bound(1.0, 1.0, PI * PI, 1.0).unwrap_err().to_string();
        assert!(err.contains("unbounded"), "{err}");
        assert!(lemma_bound(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(lemma_bound(-1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn endpoint_bound_holds_on_extremal_family() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let horizon: f64 = rng.random_range(0.25..3.0);
            let c = rng.random_range(0.0..1.999) / (horizon * horizon);
            let (a, b): (f64, f64) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
            // f'' + c f = 0, f(0) = a, f(T) = b
            let om = c.sqrt();
            let f = |t: f64| {
                if om * horizon < 1e-9 {
                    a + (b - a) * t / horizon
                } else {
                    a * (om * t).cos() + (b - a * (om * horizon).cos()) / (om * horizon).sin() * (om * t).sin()
                }
            };
            let samples: Vec<f64> = (0..=400).map(|k| f(horizon * k as f64 / 400.0)).collect();
            if samples.iter().any(|v| *v < 0.0) {
                continue;
            }
            let bound = lemma_bound(a, b, c, horizon).unwrap().bound;
            let max = samples.iter().copied().fold(0.0, f64::max);
            assert!(max <= bound * (1.0 + 1e-12), "a={a} b={b} c={c} T={horizon}: {max} > {bound}");
            checked += 1;
        }
    }

    #[test]
    fn constant_solution_identities_vanish() {
        let g = TorusGrid::new_1d(16, 8, 1.0).unwrap();
        let m = ScalarField::constant(g, TimeLayout::Slices, 1.0);
        let u = ScalarField::from_fn(g, TimeLayout::Slices, |t, _, _| -t);
        let v = ScalarField::zeros(g, TimeLayout::Slices);
        let d = displacement_identity_check(&m, &u, &v, &Coupling::power(1.0).unwrap(), 2.0).unwrap();
        assert!(d.d1 <= 1e-12 && d.d2.unwrap() <= 1e-12);
        assert!(displacement_identity_check(&m, &u, &v, &Coupling::power(1.0).unwrap(), 0.5).is_err());
    }

    #[test]
    fn density_bounds_for_unit_data() {
        let g = TorusGrid::new_1d(16, 8, 1.0).unwrap();
        let ones = vec![1.0; 16];
        let pr = PlanningProblem::new(g, &ones, &ones, Coupling::power(1.0).unwrap(), PotentialSpec::Zero).unwrap();
        let m = ScalarField::constant(g, TimeLayout::Slices, 1.0);
        let (d, inv) = density_bound(&pr, 1.0, &m, false, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(d.bound, 2.0);
        assert_eq!(d.observed, Some(1.0));
        assert_eq!(d.pass, Some(true));
        assert!(inv.is_none());
        let (_, inv) = density_bound(&pr, 2.0, &m, true, DEFAULT_TOLERANCE).unwrap();
        let inv = inv.unwrap();
        assert_eq!((inv.epsilon, inv.bound, inv.pass), (2.0, 2.0, Some(true)));
        // single-cell dip with max|Delta V| = 1: eps = 1 at p = 1, none at p = 2
        let mut v = ScalarField::zeros(g, TimeLayout::Slices);
        v.values_mut()[[0, 3]] = -0.5 * g.dx() * g.dx();
        let pr =
            PlanningProblem::new(g, &ones, &ones, Coupling::power(1.0).unwrap(), PotentialSpec::Sampled(v)).unwrap();
        assert!((pr.delta_v_sup() - 1.0).abs() < 1e-12);
        let (d, _) = density_bound(&pr, 1.0, &m, false, DEFAULT_TOLERANCE).unwrap();
        assert!((d.bound - 4.0).abs() < 1e-10);
        assert!(density_bound(&pr, 2.0, &m, false, DEFAULT_TOLERANCE).is_err());
    }

    #[test]
    fn supnorm_examples() {
        let g = TorusGrid::new_1d(16, 8, 1.0).unwrap();
        let r = supnorm_monitor(&ScalarField::constant(g, TimeLayout::Slices, 1.0));
        assert_eq!((r.max_m, r.max_inverse, r.vacuum), (1.0, Some(1.0), false));
        let g = TorusGrid::new_1d(256, 256, 1.0).unwrap();
        let f = manufactured_fields(&g).unwrap();
        let r = supnorm_monitor(&f.m);
        assert!(r.vacuum && r.min_m <= 2e-3);
        let near =
            |t: f64, x: f64| (r.argmin_t - t).abs() <= g.dt() + 1e-12 && (r.argmin_x[0] - x).abs() <= g.dx() + 1e-12;
        assert!(near(0.25, 0.75) || near(0.75, 0.25), "{r:?}");
    }
}

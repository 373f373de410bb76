//! Variational planning solver.
//!
//! Minimizes the discrete action
//!
//! ```text
//! dt |cell| [ sum_{k,c} |wb|^2 / (2 mb) + sum_{k,c} omega_k (G(z) - V z) ]
//! ```
//!
//! over `m` (slices), `w` (intervals x faces), their centred copies `mb`, `wb`
//! and a slice copy `z`, subject to the discrete continuity equation with fixed
//! end slices and the coupling `mb = I_t m`, `wb = I_a w`, `z = m`.
//! `omega_k` are trapezoidal weights in time.
//!
//! Douglas-Rachford splitting: the first function collects the continuity
//! indicator and the pointwise energies, the second is the indicator of the
//! interpolation graph. Both have exact proximal maps.

mod projection;
mod prox;
mod recover;

use std::time::Instant;

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_row, ScalarField, TimeLayout, TorusGrid, VectorField};
use crate::problem::PlanningProblem;
use crate::residuals::{pde_residuals, PdeResiduals};

pub use projection::{continuity_project, continuity_residual, ContinuityProjector, MASS_TOL};
pub use prox::{coupling_prox, kinetic_energy, kinetic_prox};
pub use recover::{recover_value, RecoveredValue, RecoveryStats, MAX_MASKED_FRACTION, VACUUM_FLOOR};

use projection::{interp_face, interp_time, InterpolationProjector};
use prox::kinetic_root;

/// How the iteration is started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `m(t) = (1 - t/T) m0 + (t/T) mT`, `w = 0`.
    Linear,
    /// User-provided `(m, w)`.
    Warm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Douglas-Rachford step.
    pub step: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
    pub max_iters: usize,
    /// Stop once `|X_{n+1} - X_n| / |X_n|` falls to this value.
    pub tolerance: f64,
    pub init: InitMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { step: 1.0, relaxation: 1.8, max_iters: 5000, tolerance: 1e-8, init: InitMode::Linear }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("solver.step must be positive, got {}", self.step)));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::Config(format!("solver.relaxation must lie in (0, 2), got {}", self.relaxation)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("solver.tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("solver.max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Normalized fixed-point residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Discrete action of the proximal iterate, per iteration.
    #[serde(with = "crate::serde_ext::vec_float")]
    pub energy_history: Vec<f64>,
    #[serde(with = "crate::serde_ext::float")]
    pub final_energy: f64,
    pub final_residual: f64,
    /// Max absolute discrete continuity residual of the returned `(m, w)`.
    pub continuity_residual: f64,
    /// Max over slices of `|mass - 1|`.
    pub max_mass_error: f64,
    pub min_density: f64,
    pub pde: Option<PdeResiduals>,
    pub recovery: Option<RecoveryStats>,
    /// Why the value could not be recovered, if it could not.
    pub recovery_error: Option<String>,
    /// Seconds; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Output of [`solve_planning`].
#[derive(Clone, Debug)]
pub struct Solution {
    pub m: ScalarField,
    pub w: VectorField,
    /// `None` when the density is too close to vacuum to recover `u`.
    pub u: Option<ScalarField>,
    pub report: SolveReport,
}

#[derive(Clone)]
struct State {
    m: Array2<f64>,
    w: Vec<Array2<f64>>,
    mb: Array2<f64>,
    wb: Vec<Array2<f64>>,
    z: Array2<f64>,
}

impl State {
    fn arrays(&self) -> impl Iterator<Item = &Array2<f64>> {
        std::iter::once(&self.m)
            .chain(self.w.iter())
            .chain(std::iter::once(&self.mb))
            .chain(self.wb.iter())
            .chain(std::iter::once(&self.z))
    }

    fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        std::iter::once(&mut self.m)
            .chain(self.w.iter_mut())
            .chain(std::iter::once(&mut self.mb))
            .chain(self.wb.iter_mut())
            .chain(std::iter::once(&mut self.z))
    }

    fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for a in self.arrays() {
            for v in a.iter() {
                s += v * v;
            }
        }
        s
    }

    fn from_primal(grid: &TorusGrid, m: Array2<f64>, w: Vec<Array2<f64>>) -> Self {
        let mb = interp_time(&m);
        let wb = w.iter().enumerate().map(|(a, wa)| interp_face(grid, a, wa)).collect();
        let z = m.clone();
        State { m, w, mb, wb, z }
    }
}

struct Splitting<'a> {
    problem: &'a PlanningProblem,
    grid: TorusGrid,
    step: f64,
    weights: Vec<f64>,
    continuity: ContinuityProjector,
    graph: InterpolationProjector,
}

impl<'a> Splitting<'a> {
    fn new(problem: &'a PlanningProblem, step: f64) -> Self {
        let grid = *problem.grid();
        let nt = grid.nt();
        let mut weights = vec![1.0; nt + 1];
        weights[0] = 0.5;
        weights[nt] = 0.5;
        Splitting {
            problem,
            grid,
            step,
            weights,
            continuity: ContinuityProjector::new(grid),
            graph: InterpolationProjector::new(grid),
        }
    }

    /// Continuity projection, kinetic prox and coupling prox.
    fn prox_first(&self, x: &State) -> Result<State> {
        let mut y = x.clone();
        self.continuity.project(&mut y.m, &mut y.w, self.problem.m0(), self.problem.mt())?;
        let sigma = self.step;
        let dim = self.grid.dim();
        let (nt, cells) = (self.grid.nt(), self.grid.cells());
        for k in 0..nt {
            for c in 0..cells {
                let mut w2 = 0.0;
                for a in 0..dim {
                    let v = y.wb[a][[k, c]];
                    w2 += v * v;
                }
                let m = kinetic_root(y.mb[[k, c]], w2, sigma);
                let f = if m > 0.0 { m / (m + sigma) } else { 0.0 };
                y.mb[[k, c]] = m;
                for a in 0..dim {
                    y.wb[a][[k, c]] *= f;
                }
            }
        }
        let coupling = self.problem.coupling();
        let v = self.problem.v().values();
        for k in 0..=nt {
            let s = sigma * self.weights[k];
            for c in 0..cells {
                y.z[[k, c]] = coupling_prox(y.z[[k, c]], s, coupling, v[[k, c]]);
            }
        }
        Ok(y)
    }

    fn project_graph(&self, r: &State) -> State {
        let (m, w) = self.graph.project(&r.m, &r.w, &r.mb, &r.wb, &r.z);
        State::from_primal(&self.grid, m, w)
    }

    fn energy(&self, y: &State) -> f64 {
        let (nt, cells) = (self.grid.nt(), self.grid.cells());
        let mut kin = 0.0;
        for k in 0..nt {
            for c in 0..cells {
                let mut w2 = 0.0;
                for wa in &y.wb {
                    w2 += wa[[k, c]] * wa[[k, c]];
                }
                kin += kinetic_energy(y.mb[[k, c]], w2);
            }
        }
        let coupling = self.problem.coupling();
        let v = self.problem.v().values();
        let mut pot = 0.0;
        for k in 0..=nt {
            let mut row = 0.0;
            for c in 0..cells {
                let z = y.z[[k, c]];
                row += coupling.big_g(z) - v[[k, c]] * z;
            }
            pot += self.weights[k] * row;
        }
        (kin + pot) * self.grid.dt() * self.grid.cell_volume()
    }
}

fn linear_start(problem: &PlanningProblem) -> (Array2<f64>, Vec<Array2<f64>>) {
    let grid = problem.grid();
    let (nt, cells) = (grid.nt(), grid.cells());
    let mut m = Array2::zeros((nt + 1, cells));
    for k in 0..=nt {
        let s = k as f64 / nt as f64;
        for c in 0..cells {
            m[[k, c]] = (1.0 - s) * problem.m0()[c] + s * problem.mt()[c];
        }
    }
    let w = (0..grid.dim()).map(|_| Array2::zeros((nt, cells))).collect();
    (m, w)
}

/// Solves the planning problem from the linear-interpolation start.
pub fn solve_planning(problem: &PlanningProblem, config: &SolverConfig) -> Result<Solution> {
    if config.init == InitMode::Warm {
        return Err(Error::Config("init = \"warm\" needs a warm start; use solve_planning_warm".into()));
    }
    let (m, w) = linear_start(problem);
    run(problem, config, m, w)
}

/// Solves the planning problem starting from `(m, w)`.
pub fn solve_planning_warm(
    problem: &PlanningProblem,
    config: &SolverConfig,
    m: &ScalarField,
    w: &VectorField,
) -> Result<Solution> {
    problem.grid().ensure_same(m.grid())?;
    problem.grid().ensure_same(w.grid())?;
    if m.layout() != TimeLayout::Slices || w.layout() != TimeLayout::Intervals {
        return Err(Error::GridMismatch("warm start needs slice-indexed m and interval-indexed w".into()));
    }
    if !m.is_finite() || !w.is_finite() {
        return Err(Error::InvalidArgument("warm start contains non-finite values".into()));
    }
    run(problem, config, m.values().clone(), w.components().to_vec())
}

fn run(problem: &PlanningProblem, config: &SolverConfig, m: Array2<f64>, w: Vec<Array2<f64>>) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let grid = *problem.grid();
    ContinuityProjector::check_masses(&grid, problem.m0(), problem.mt())?;
    let split = Splitting::new(problem, config.step);
    let mut x = State::from_primal(&grid, m, w);

    let mut residual_history = Vec::new();
    let mut energy_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let y = split.prox_first(&x)?;
        energy_history.push(split.energy(&y));
        let mut reflected = y.clone();
        for (r, xa) in reflected.arrays_mut().zip(x.arrays()) {
            Zip::from(r).and(xa).for_each(|r, xa| *r = 2.0 * *r - xa);
        }
        let zs = split.project_graph(&reflected);
        let denom = x.norm_sq().sqrt();
        let mut diff = 0.0;
        for ((xa, za), ya) in x.arrays_mut().zip(zs.arrays()).zip(y.arrays()) {
            Zip::from(xa).and(za).and(ya).for_each(|xa, za, ya| {
                let d = config.relaxation * (za - ya);
                diff += d * d;
                *xa += d;
            });
        }
        iterations += 1;
        let res = diff.sqrt() / denom.max(f64::MIN_POSITIVE);
        if !res.is_finite() {
            return Err(Error::Domain(format!("iteration {iterations} produced a non-finite state")));
        }
        residual_history.push(res);
        if res <= config.tolerance {
            converged = true;
            break;
        }
    }

    let y = split.prox_first(&x)?;
    let final_energy = split.energy(&y);
    let m = ScalarField::from_values(grid, TimeLayout::Slices, y.m)?;
    let w = VectorField::from_components(grid, TimeLayout::Intervals, y.w)?;
    let continuity_residual = continuity_residual(&m, &w)?;
    let mut max_mass_error: f64 = 0.0;
    for k in 0..=grid.nt() {
        max_mass_error = max_mass_error.max((integrate_row(&grid, m.row(k)) - 1.0).abs());
    }
    let min_density = m.min();

    let (u, pde, recovery, recovery_error) = match recover_value(&m, &w, problem) {
        Ok(rec) => {
            let pde = pde_residuals(&m, &rec.u, problem.v(), problem.coupling(), Some((problem.m0(), problem.mt())))?;
            (Some(rec.u), Some(pde), Some(rec.stats), None)
        }
        Err(Error::Vacuum(msg)) => (None, None, None, Some(msg)),
        Err(e) => return Err(e),
    };

    let report = SolveReport {
        iterations,
        converged,
        final_residual: residual_history.last().copied().unwrap_or(f64::NAN),
        residual_history,
        energy_history,
        final_energy,
        continuity_residual,
        max_mass_error,
        min_density,
        pde,
        recovery,
        recovery_error,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok(Solution { m, w, u, report })
}

/// Unit mass end densities `Z^{-1}(1 + a cos 2 pi x)` and its half-period shift.
pub fn bump_densities(grid: &TorusGrid, amplitude: f64) -> (Array1<f64>, Array1<f64>) {
    let m0 = ScalarField::from_fn(*grid, TimeLayout::Slices, |_, x, _| {
        1.0 + amplitude * (2.0 * std::f64::consts::PI * x).cos()
    });
    let mt = ScalarField::from_fn(*grid, TimeLayout::Slices, |_, x, _| {
        1.0 + amplitude * (2.0 * std::f64::consts::PI * (x - 0.5)).cos()
    });
    (m0.row(0).to_owned(), mt.row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Coupling, PotentialSpec};

    fn trivial(nx: usize, nt: usize) -> PlanningProblem {
        let grid = TorusGrid::new_1d(nx, nt, 1.0).unwrap();
        let ones = vec![1.0; nx];
        PlanningProblem::new(grid, &ones, &ones, Coupling::power(1.0).unwrap(), PotentialSpec::Zero).unwrap()
    }

    #[test]
    fn trivial_problem_converges_to_constant() {
        let pr = trivial(64, 32);
        let sol = solve_planning(&pr, &SolverConfig::default()).unwrap();
        let r = &sol.report;
        assert!(r.converged && r.iterations <= 500, "{} {}", r.iterations, r.final_residual);
        assert!(r.final_residual <= 1e-8);
        assert!(sol.m.values().iter().all(|v| (v - 1.0).abs() <= 1e-6));
        assert!(r.max_mass_error <= 1e-10);
        let pde = r.pde.as_ref().unwrap();
        assert!(pde.hjb_l2 <= 1e-6 && pde.fp_l2 <= 1e-6, "{pde:?}");
        let du = crate::grid::gradient(sol.u.as_ref().unwrap()).sup_norm();
        assert!(du <= 1e-6);
    }

    #[test]
    fn energy_bounded_below_and_running_min_monotone() {
        let pr = trivial(16, 8);
        let sol = solve_planning(&pr, &SolverConfig::default()).unwrap();
        let e = &sol.report.energy_history;
        assert!(e.iter().all(|v| v.is_finite()));
        // V = 0, so every term is non-negative; the minimizer has action 1/2
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.0);
        assert!((sol.report.final_energy - 0.5).abs() < 1e-8);
    }

    #[test]
    fn bump_transport_symmetry_and_mass() {
        let grid = TorusGrid::new_1d(32, 32, 1.0).unwrap();
        let (m0, mt) = bump_densities(&grid, 0.9);
        let pr = PlanningProblem::new(
            grid,
            m0.as_slice().unwrap(),
            mt.as_slice().unwrap(),
            Coupling::power(1.0).unwrap(),
            PotentialSpec::Zero,
        )
        .unwrap();
        let sol = solve_planning(&pr, &SolverConfig::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.continuity_residual <= 1e-10);
        assert!(sol.report.max_mass_error <= 1e-10);
        let (nt, n) = (grid.nt(), grid.nx());
        let mut err: f64 = 0.0;
        for k in 0..=nt {
            for i in 0..n {
                err = err.max((sol.m.values()[[nt - k, (i + n / 2) % n]] - sol.m.values()[[k, i]]).abs());
            }
        }
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let pr = trivial(16, 8);
        let cfg = SolverConfig { max_iters: 3, ..SolverConfig::default() };
        let sol = solve_planning(&pr, &cfg).unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 3);
        assert_eq!(sol.report.residual_history.len(), 3);
    }

    #[test]
    fn warm_start_from_solution_agrees() {
        let grid = TorusGrid::new_1d(16, 16, 1.0).unwrap();
        let (m0, mt) = bump_densities(&grid, 0.5);
        let pr = PlanningProblem::new(
            grid,
            m0.as_slice().unwrap(),
            mt.as_slice().unwrap(),
            Coupling::power(1.0).unwrap(),
            PotentialSpec::Zero,
        )
        .unwrap();
        let cold = solve_planning(&pr, &SolverConfig::default()).unwrap();
        let warm = solve_planning_warm(&pr, &SolverConfig::default(), &cold.m, &cold.w).unwrap();
        assert!(warm.report.converged);
        assert!(
            warm.report.iterations <= cold.report.iterations,
            "{} {}",
            warm.report.iterations,
            cold.report.iterations
        );
        let diff = (warm.m.values() - cold.m.values()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(diff < 1e-6);
    }

    #[test]
    fn solver_is_deterministic() {
        let grid = TorusGrid::new_1d(16, 16, 1.0).unwrap();
        let (m0, mt) = bump_densities(&grid, 0.5);
        let pr = PlanningProblem::new(
            grid,
            m0.as_slice().unwrap(),
            mt.as_slice().unwrap(),
            Coupling::power(2.0).unwrap(),
            PotentialSpec::Zero,
        )
        .unwrap();
        let cfg = SolverConfig { max_iters: 50, ..SolverConfig::default() };
        let a = solve_planning(&pr, &cfg).unwrap();
        let b = solve_planning(&pr, &cfg).unwrap();
        assert_eq!(a.m, b.m);
        assert_eq!(a.report.residual_history, b.report.residual_history);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { step: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { relaxation: 2.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }
}

//! Built-in run configurations.

use std::f64::consts::PI;

use crate::config::{AnalysisConfig, DensitySpec, PotentialConfig, ProblemConfig, RunConfig};
use crate::error::{Error, Result};
use crate::problem::Coupling;
use crate::solver::SolverConfig;

pub const SCENARIOS: [&str; 4] = ["trivial", "bump", "small-cosine-potential", "manufactured"];

/// Amplitude with `max|Delta V| = 1` for `V = A cos(2 pi x)` in the continuum.
pub const UNIT_LAPLACIAN_AMPLITUDE: f64 = 1.0 / (4.0 * PI * PI);

fn bump_ends(amplitude: f64) -> (DensitySpec, DensitySpec) {
    (DensitySpec::Cosine { amplitude, shift: 0.0 }, DensitySpec::Cosine { amplitude, shift: 0.5 })
}

fn problem(nx: usize, nt: usize, potential: PotentialConfig, m0: DensitySpec, mt: DensitySpec) -> ProblemConfig {
    ProblemConfig {
        dim: 1,
        nx,
        ny: None,
        nt,
        horizon: 1.0,
        coupling: Coupling::Power { alpha: 1.0 },
        potential,
        m0,
        mt,
    }
}

/// Returns the named scenario.
///
/// - `trivial`: `V = 0`, uniform ends, 64 x 32.
/// - `bump`: `V = 0`, `1 + cos(2 pi x)/2` moved by half a period, 64 x 64.
/// - `small-cosine-potential`: the bump under `V = cos(2 pi x) / (4 pi^2)`, 128 x 128, with
///   the `p = 1` density certificate and the `int m^2` trajectory.
/// - `manufactured`: the two-zero closed-form problem, 64 x 64.
pub fn scenario(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "trivial" => RunConfig {
            output_dir: None,
            problem: problem(64, 32, PotentialConfig::Zero, DensitySpec::Uniform, DensitySpec::Uniform),
            solver: SolverConfig::default(),
            analysis: AnalysisConfig { exponents: vec![2.0], certificates: vec![1.0], ..Default::default() },
        },
        "bump" => {
            let (m0, mt) = bump_ends(0.5);
            RunConfig {
                output_dir: None,
                problem: problem(64, 64, PotentialConfig::Zero, m0, mt),
                solver: SolverConfig::default(),
                analysis: AnalysisConfig { exponents: vec![2.0, -1.0], certificates: vec![1.0], ..Default::default() },
            }
        }
        "small-cosine-potential" => {
            let (m0, mt) = bump_ends(0.5);
            RunConfig {
                output_dir: None,
                problem: problem(128, 128, PotentialConfig::Cosine { amplitude: UNIT_LAPLACIAN_AMPLITUDE }, m0, mt),
                solver: SolverConfig::default(),
                analysis: AnalysisConfig { exponents: vec![2.0], certificates: vec![1.0], ..Default::default() },
            }
        }
        "manufactured" => RunConfig {
            output_dir: None,
            problem: problem(64, 64, PotentialConfig::Manufactured, DensitySpec::Uniform, DensitySpec::Uniform),
            solver: SolverConfig::default(),
            analysis: AnalysisConfig { exponents: vec![2.0], ..Default::default() },
        },
        other => {
            return Err(Error::Config(format!("unknown scenario {other:?}; available: {}", SCENARIOS.join(", "))));
        }
    };
    Ok(cfg)
}

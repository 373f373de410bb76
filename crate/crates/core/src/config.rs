//! TOML run configuration.
//!
//! ```toml
//! output_dir = "out/bump"
//!
//! [problem]
//! dim = 1
//! nx = 64
//! nt = 32
//! horizon = 1.0
//! coupling = { kind = "power", alpha = 1.0 }
//! potential = { kind = "cosine", amplitude = 0.025330295910584444 }
//! m0 = { kind = "cosine", amplitude = 0.5 }
//! mt = { kind = "cosine", amplitude = 0.5, shift = 0.5 }
//!
//! [solver]
//! max_iters = 2000
//!
//! [analysis]
//! exponents = [2.0, -1.0]
//! certificates = [1.0]
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TimeLayout, TorusGrid};
use crate::io::read_scalar;
use crate::moser::MoserParams;
use crate::problem::{Coupling, PlanningProblem, PotentialSpec};
use crate::solver::SolverConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// `1 + amplitude cos(2 pi (x - shift))`.
    Cosine {
        amplitude: f64,
        #[serde(default)]
        shift: f64,
    },
    /// One slice of a field file; negative indices count from the last slice.
    File {
        path: PathBuf,
        #[serde(default)]
        slice: isize,
    },
}

impl DensitySpec {
    pub fn sample(&self, grid: &TorusGrid, base: &Path) -> Result<Vec<f64>> {
        match self {
            DensitySpec::Uniform => Ok(vec![1.0; grid.cells()]),
            DensitySpec::Cosine { amplitude, shift } => {
                if !(amplitude.abs() <= 1.0 && shift.is_finite()) {
                    return Err(Error::Config(format!(
                        "cosine density needs |amplitude| <= 1 and finite shift, got {amplitude}, {shift}"
                    )));
                }
                Ok((0..grid.cells()).map(|c| 1.0 + amplitude * (2.0 * PI * (grid.center(c).0 - shift)).cos()).collect())
            }
            DensitySpec::File { path, slice } => {
                let (_, f) = read_scalar(&base.join(path))?;
                let fg = f.grid();
                if (fg.dim(), fg.nx(), fg.ny()) != (grid.dim(), grid.nx(), grid.ny()) {
                    return Err(Error::Config(format!("{}: spatial grid {fg} does not match {grid}", path.display())));
                }
                let rows = f.rows() as isize;
                let k = if *slice < 0 { rows + slice } else { *slice };
                if !(0..rows).contains(&k) {
                    return Err(Error::Config(format!("{}: slice {slice} outside 0..{rows}", path.display())));
                }
                Ok(f.row(k as usize).to_vec())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Cosine {
        amplitude: f64,
    },
    /// The potential of the closed-form two-zero solution (d = 1, T = 1).
    Manufactured,
    /// Slice-indexed field file on the problem grid.
    File {
        path: PathBuf,
    },
}

impl PotentialConfig {
    pub fn to_spec(&self, grid: &TorusGrid, base: &Path) -> Result<PotentialSpec> {
        Ok(match self {
            PotentialConfig::Zero => PotentialSpec::Zero,
            PotentialConfig::Cosine { amplitude } => PotentialSpec::Cosine { amplitude: *amplitude },
            PotentialConfig::Manufactured => PotentialSpec::Manufactured,
            PotentialConfig::File { path } => {
                let (_, v) = read_scalar(&base.join(path))?;
                grid.ensure_same(v.grid())?;
                if v.layout() != TimeLayout::Slices {
                    return Err(Error::Config(format!("{}: potential must be slice-indexed", path.display())));
                }
                PotentialSpec::Sampled(v)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub nx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    pub nt: usize,
    pub horizon: f64,
    pub coupling: Coupling,
    pub potential: PotentialConfig,
    pub m0: DensitySpec,
    pub mt: DensitySpec,
}

impl ProblemConfig {
    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::build(self.dim, self.nx, self.ny, self.nt, self.horizon)
    }

    /// Builds the problem; relative file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<PlanningProblem> {
        let grid = self.grid()?;
        let m0 = self.m0.sample(&grid, base)?;
        let mt = self.mt.sample(&grid, base)?;
        let potential = self.potential.to_spec(&grid, base)?;
        PlanningProblem::new(grid, &m0, &mt, self.coupling.clone(), potential)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Exponents `s` for energy trajectories `int m^s`.
    pub exponents: Vec<f64>,
    /// Values of `p` for the density bound.
    pub certificates: Vec<f64>,
    /// Also certify the inverse-density bound for each `p`.
    pub inverse: bool,
    /// Relative slack of the certificates (default 5%).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moser: Option<MoserParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moser_horizon: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
        cfg.solver.validate()?;
        cfg.problem.grid()?;
        cfg.problem.coupling.validate()?;
        if let Some(p) = &cfg.analysis.moser {
            p.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Slice-indexed field from a potential config, for tools that need `V` directly.
pub fn sample_potential(cfg: &ProblemConfig, base: &Path) -> Result<ScalarField> {
    let grid = cfg.grid()?;
    cfg.potential.to_spec(&grid, base)?.sample(&grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUMP: &str = r#"
output_dir = "out"

[problem]
dim = 1
nx = 16
nt = 8
horizon = 1.0
coupling = { kind = "power", alpha = 1.0 }
potential = { kind = "cosine", amplitude = 0.025 }
m0 = { kind = "cosine", amplitude = 0.5 }
mt = { kind = "cosine", amplitude = 0.5, shift = 0.5 }

[solver]
max_iters = 100

[analysis]
exponents = [2.0]
certificates = [1.0]
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::parse(BUMP, "bump.toml").unwrap();
        assert_eq!(cfg.solver.max_iters, 100);
        let pr = cfg.problem.build(Path::new(".")).unwrap();
        assert_eq!(pr.grid().nx(), 16);
        for c in 0..16 {
            assert!((pr.m0()[c] + pr.mt()[c] - 2.0).abs() < 1e-12);
        }
        assert!((pr.m0()[0] - 1.0 - 0.5 * (PI / 16.0).cos()).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(BUMP, "bump.toml").unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap(), "round-trip").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_field_has_location() {
        let text = BUMP.replace("max_iters = 100", "max_iter = 100");
        let err = RunConfig::parse(&text, "bump.toml").unwrap_err().to_string();
        assert!(err.contains("bump.toml") && err.contains("line") && err.contains("max_iter"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse(&BUMP.replace("nx = 16", "nx = 1"), "x").is_err());
        assert!(RunConfig::parse(&BUMP.replace("max_iters = 100", "relaxation = 2.5"), "x").is_err());
        let cfg = RunConfig::parse(&BUMP.replace("amplitude = 0.5 }", "amplitude = 1.5 }"), "x").unwrap();
        assert!(cfg.problem.build(Path::new(".")).is_err());
    }

    #[test]
    fn density_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new_1d(16, 8, 1.0).unwrap();
        let row: Vec<f64> = (0..16).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut f = ScalarField::from_row(g, TimeLayout::Slices, &row).unwrap();
        f.row_mut(8).fill(1.0);
        crate::io::write_scalar(&dir.path().join("m.bin"), "m", &f).unwrap();
        let text = BUMP
            .replace("m0 = { kind = \"cosine\", amplitude = 0.5 }", "m0 = { kind = \"file\", path = \"m.bin\" }")
            .replace(
                "mt = { kind = \"cosine\", amplitude = 0.5, shift = 0.5 }",
                "mt = { kind = \"file\", path = \"m.bin\", slice = -1 }",
            );
        let cfg = RunConfig::parse(&text, "x").unwrap();
        let pr = cfg.problem.build(dir.path()).unwrap();
        let mass: f64 = row.iter().sum::<f64>() / 16.0;
        assert!((pr.m0()[3] - row[3] / mass).abs() < 1e-12);
        assert!(pr.mt().iter().all(|v| *v == 1.0));
    }
}

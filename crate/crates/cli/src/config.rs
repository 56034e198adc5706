use std::path::{Path, PathBuf};

use nibm_core::ensemble::{BasisMode, SamplerMode};
use nibm_core::equilibrium::SolverSettings;
use nibm_core::graph::{ProblemConfig, Rounding, TransitionMatrix};
use serde::Deserialize;

use crate::CliError;

/// Contents of a run configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub transition: TransitionSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub temperature: f64,
}

/// Transition numbers as "num/den" strings, one array per starting point.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSection {
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub cells: usize,
    pub initial_cells: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub support_threshold: f64,
    pub refine_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverSettings::<f64>::default();
        Self {
            cells: s.cells,
            initial_cells: None,
            tol: s.tol,
            max_iters: s.max_iters,
            support_threshold: s.support_threshold,
            refine_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Exact,
    Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingKind {
    Strict,
    LargestRemainder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Hermite,
    Monomial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n: Option<usize>,
    pub seed: u64,
    pub steps: usize,
    pub bundles: usize,
    pub sampler: SamplerKind,
    pub max_rejects: usize,
    pub rounding: RoundingKind,
    pub basis: BasisKind,
    /// Points of the exported (1/n)K(x, x) curve.
    pub points: usize,
    /// Path counts for the L¹ comparison table.
    pub sequence: Vec<usize>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n: None,
            seed: 20_240_601,
            steps: 256,
            bundles: 1,
            sampler: SamplerKind::Exact,
            max_rejects: 1_000_000,
            rounding: RoundingKind::Strict,
            basis: BasisKind::Hermite,
            points: 801,
            sequence: vec![4, 8, 16],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub lens_nx: usize,
    pub lens_ny: usize,
    /// Test points per support for the boundary identities.
    pub points: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self { lens_nx: 600, lens_ny: 400, points: 101 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = Some(dir.clone());
        }
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(grid) = o.grid {
            self.solver.cells = grid;
            self.solver.initial_cells = Some(grid);
        }
        if o.seed.is_some() || o.n.is_some() {
            let e = self.ensemble.get_or_insert_with(EnsembleSection::default);
            if let Some(seed) = o.seed {
                e.seed = seed;
            }
            if let Some(n) = o.n {
                e.n = Some(n);
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn matrix(&self) -> Result<TransitionMatrix, CliError> {
        Ok(TransitionMatrix::parse(&self.transition.rows)?)
    }

    pub fn problem(&self) -> Result<ProblemConfig<f64>, CliError> {
        let p = &self.problem;
        Ok(ProblemConfig::new(p.a.clone(), p.b.clone(), p.t, p.temperature)?)
    }

    pub fn solver_settings(&self) -> SolverSettings<f64> {
        let s = &self.solver;
        SolverSettings {
            initial_cells: s.initial_cells.unwrap_or(s.cells),
            cells: s.cells,
            tol: s.tol,
            max_iters: s.max_iters,
            support_threshold: s.support_threshold,
        }
    }

    /// The ensemble section with a path count, or a missing-prerequisite error.
    pub fn ensemble(&self) -> Result<(&EnsembleSection, usize), CliError> {
        let e = self
            .ensemble
            .as_ref()
            .ok_or_else(|| CliError::MissingPrerequisite("no [ensemble] section".into()))?;
        let n = e.n.ok_or_else(|| CliError::MissingPrerequisite("ensemble path count n not set".into()))?;
        Ok((e, n))
    }
}

impl EnsembleSection {
    pub fn rounding(&self) -> Rounding {
        match self.rounding {
            RoundingKind::Strict => Rounding::Strict,
            RoundingKind::LargestRemainder => Rounding::LargestRemainder,
        }
    }

    pub fn basis(&self) -> BasisMode {
        match self.basis {
            BasisKind::Hermite => BasisMode::Hermite,
            BasisKind::Monomial => BasisMode::Monomial,
        }
    }

    pub fn sampler(&self) -> SamplerMode {
        match self.sampler {
            SamplerKind::Exact => SamplerMode::Exact,
            SamplerKind::Rejection => SamplerMode::Rejection { max_rejects: self.max_rejects },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[problem]\na = [0.0]\nb = [0.0]\nt = 0.5\ntemperature = 1.0\n[transition]\nrows = [[\"1\"]]\n";

    #[test]
    fn defaults_and_overrides() {
        let mut cfg = RunConfig::parse(BASE).unwrap();
        assert!(cfg.ensemble.is_none());
        assert_eq!(cfg.solver_settings().cells, 512);
        cfg.apply(&Overrides { grid: Some(64), n: Some(3), seed: Some(9), ..Overrides::default() });
        let (e, n) = cfg.ensemble().unwrap();
        assert_eq!((n, e.seed, e.steps), (3, 9, 256));
        assert_eq!(cfg.solver_settings().initial_cells, 64);
        assert_eq!(cfg.out_dir(), PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_rejected_in_every_section() {
        for extra in ["[solver]\nsteps = 3\n", "[ensemble]\nn = 2\ncolour = 1\n", "[output]\nfile = \"x\"\n", "[plot]\n"] {
            let err = RunConfig::parse(&format!("{BASE}{extra}")).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{extra}");
        }
    }

    #[test]
    fn rational_weights_survive_parsing() {
        let cfg = RunConfig::parse(&BASE.replace("[[\"1\"]]", "[[\"1/3\", \"2/3\"]]")).unwrap();
        let m = cfg.matrix().unwrap();
        assert_eq!(m.get(0, 1), num_rational::Rational64::new(2, 3));
    }

    #[test]
    fn sampler_and_rounding_names() {
        let cfg = RunConfig::parse(&format!("{BASE}[ensemble]\nsampler = \"rejection\"\nmax_rejects = 5\nrounding = \"largest-remainder\"\n")).unwrap();
        let e = cfg.ensemble.unwrap();
        assert_eq!(e.sampler(), SamplerMode::Rejection { max_rejects: 5 });
        assert_eq!(e.rounding(), Rounding::LargestRemainder);
    }
}

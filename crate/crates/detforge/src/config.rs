//! Strict JSON run configuration. Every field has a default; unknown fields
//! anywhere in the document are rejected.

use std::path::{Path, PathBuf};

use detforge_core::afqmc::AFQMCConfig;
use detforge_core::lucj::{OptimizeOptions, SqdOptions};
use detforge_core::sci::{DavidsonOptions, HciOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workflow {
    Fci,
    Hci,
    Sqd,
    LucjSample,
    Afqmc,
    Extrapolate,
    Pipeline,
    PlotData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub workflow: Option<Workflow>,
    pub fcidump: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub trial: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub seed: u64,
    pub davidson: DavidsonConfig,
    pub hci: HciConfig,
    pub lucj: LucjConfig,
    pub sqd: SqdConfig,
    pub optimize: Option<OptimizeConfig>,
    pub truncate: TruncateConfig,
    pub afqmc: AfqmcConfig,
    pub extrapolate: ExtrapolateConfig,
    pub plot: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workflow: None,
            fcidump: None,
            params: None,
            trial: None,
            points: None,
            seed: 0,
            davidson: DavidsonConfig::default(),
            hci: HciConfig::default(),
            lucj: LucjConfig::default(),
            sqd: SqdConfig::default(),
            optimize: None,
            truncate: TruncateConfig::default(),
            afqmc: AfqmcConfig::default(),
            extrapolate: ExtrapolateConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DavidsonConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub max_subspace: usize,
}

impl Default for DavidsonConfig {
    fn default() -> Self {
        let d = DavidsonOptions::default();
        Self { tol: d.tol, max_iters: d.max_iters, max_subspace: d.max_subspace }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HciConfig {
    pub epsilon1: f64,
    pub max_iters: usize,
    pub max_dets: usize,
}

impl Default for HciConfig {
    fn default() -> Self {
        let h = HciOptions::default();
        Self { epsilon1: h.epsilon1, max_iters: h.max_iters, max_dets: h.max_dets }
    }
}

/// Where LUCJ parameters come from when no parameter file is given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamInit {
    Zeros,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LucjConfig {
    pub init: ParamInit,
    pub shots: usize,
    pub flip_prob: f64,
}

impl Default for LucjConfig {
    fn default() -> Self {
        Self { init: ParamInit::Zeros, shots: 1000, flip_prob: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqdConfig {
    pub n_samples: usize,
    pub flip_prob: f64,
    pub n_batches: usize,
    pub recovery_rounds: usize,
    pub recover: bool,
}

impl Default for SqdConfig {
    fn default() -> Self {
        let s = SqdOptions::default();
        Self {
            n_samples: s.n_samples,
            flip_prob: s.flip_prob,
            n_batches: s.n_batches,
            recovery_rounds: s.recovery_rounds,
            recover: s.recover,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Subspace energy at the configured sampling settings.
    SqdEnergy,
    /// KL divergence to an HCI wavefunction at `hci.epsilon1`.
    KlHci,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub objective: ObjectiveKind,
    pub budget: usize,
    pub initial_radius: f64,
    pub min_radius: f64,
    pub freeze_jastrow: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let o = OptimizeOptions::default();
        Self {
            objective: ObjectiveKind::SqdEnergy,
            budget: o.budget,
            initial_radius: o.initial_radius,
            min_radius: o.min_radius,
            freeze_jastrow: o.freeze_jastrow,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncateConfig {
    /// Retained CI weights of the trial family, one AFQMC run each.
    pub weights: Vec<f64>,
}

impl Default for TruncateConfig {
    fn default() -> Self {
        Self { weights: vec![0.995] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AfqmcConfig {
    pub dtau: f64,
    pub n_walkers: usize,
    pub n_blocks: usize,
    pub steps_per_block: usize,
    pub reortho_interval: usize,
    pub measure_interval: usize,
    pub chol_cutoff: f64,
    pub equilibration: f64,
}

impl Default for AfqmcConfig {
    fn default() -> Self {
        let a = AFQMCConfig::default();
        Self {
            dtau: a.dtau,
            n_walkers: a.n_walkers,
            n_blocks: a.n_blocks,
            steps_per_block: a.steps_per_block,
            reortho_interval: a.reortho_interval,
            measure_interval: a.measure_interval,
            chol_cutoff: a.chol_cutoff,
            equilibration: a.equilibration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtrapolateConfig {
    /// Weight points by `1/σ²` when every point has an error bar.
    pub weighted: bool,
}

impl Default for ExtrapolateConfig {
    fn default() -> Self {
        Self { weighted: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotMethod {
    Hf,
    Sqd,
    Hci,
    AfqmcSqd,
    AfqmcHci,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub label: String,
    pub fcidump: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub geometries: Vec<Geometry>,
    pub methods: Vec<PlotMethod>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { geometries: Vec::new(), methods: vec![PlotMethod::Hf, PlotMethod::Sqd, PlotMethod::AfqmcSqd] }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.fcidump, &mut cfg.params, &mut cfg.trial, &mut cfg.points].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for g in &mut cfg.plot.geometries {
            if g.fcidump.is_relative() {
                g.fcidump = base.join(&g.fcidump);
            }
        }
        Ok(cfg)
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let a = &self.afqmc;
        if !(a.dtau > 0.0) {
            return bad(format!("afqmc.dtau must be positive, got {}", a.dtau));
        }
        if a.n_walkers == 0 || a.steps_per_block == 0 || a.reortho_interval == 0 || a.measure_interval == 0 {
            return bad("afqmc walker count and step intervals must be positive".into());
        }
        if a.steps_per_block % a.measure_interval != 0 {
            return bad("afqmc.steps_per_block must be a multiple of afqmc.measure_interval".into());
        }
        if !(0.0..1.0).contains(&a.equilibration) {
            return bad("afqmc.equilibration must lie in [0, 1)".into());
        }
        if !(a.chol_cutoff > 0.0) {
            return bad("afqmc.chol_cutoff must be positive".into());
        }
        for w in &self.truncate.weights {
            if !(*w > 0.0 && *w <= 1.0) {
                return bad(format!("truncation weight {w} outside (0, 1]"));
            }
        }
        for (name, p) in [("sqd.flip_prob", self.sqd.flip_prob), ("lucj.flip_prob", self.lucj.flip_prob)] {
            if !(0.0..0.5).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 0.5)"));
            }
        }
        if self.sqd.n_samples == 0 {
            return bad("sqd.n_samples must be positive".into());
        }
        if !(self.hci.epsilon1 > 0.0) {
            return bad("hci.epsilon1 must be positive".into());
        }
        Ok(())
    }

    pub fn davidson_options(&self) -> DavidsonOptions {
        DavidsonOptions { tol: self.davidson.tol, max_iters: self.davidson.max_iters, max_subspace: self.davidson.max_subspace }
    }

    pub fn hci_options(&self) -> HciOptions {
        HciOptions {
            epsilon1: self.hci.epsilon1,
            max_iters: self.hci.max_iters,
            max_dets: self.hci.max_dets,
            davidson: self.davidson_options(),
        }
    }

    pub fn sqd_options(&self) -> SqdOptions {
        SqdOptions {
            n_samples: self.sqd.n_samples,
            flip_prob: self.sqd.flip_prob,
            n_batches: self.sqd.n_batches,
            recovery_rounds: self.sqd.recovery_rounds,
            recover: self.sqd.recover,
            seed: self.seed,
            davidson: self.davidson_options(),
        }
    }

    pub fn afqmc_config(&self, seed: u64) -> AFQMCConfig {
        let a = &self.afqmc;
        AFQMCConfig {
            dtau: a.dtau,
            n_walkers: a.n_walkers,
            n_blocks: a.n_blocks,
            steps_per_block: a.steps_per_block,
            reortho_interval: a.reortho_interval,
            measure_interval: a.measure_interval,
            chol_cutoff: a.chol_cutoff,
            seed,
            equilibration: a.equilibration,
        }
    }
}

//! One function per subcommand. Each reads its inputs, runs the numerical
//! core and writes deterministic result files.

use std::path::{Path, PathBuf};

use detforge_core::afqmc::{prepare_trial, run_afqmc_with, AFQMCConfig, Trial};
use detforge_core::determinant::enumerate_space;
use detforge_core::extrapolate::{fit_linear, LinearFit, Point};
use detforge_core::hamiltonian::{build_subspace_hamiltonian, cholesky_decompose};
use detforge_core::lucj::{
    build_lucj_state, optimize_params, random_params, sample_configurations, sqd_pipeline, LUCJParams, Objective,
    OptimizeOptions, SampleBatch,
};
use detforge_core::sci::{davidson, energy_variance, hci, truncate_by_weight};
use detforge_core::{CIWavefunction, Determinant, Integrals};
use serde::{Deserialize, Serialize};

use crate::config::{ObjectiveKind, ParamInit, PlotMethod, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| CliError::Config(format!("missing {what}")))
}

fn rhf(ints: &Integrals) -> CIWavefunction {
    CIWavefunction::single(ints.norb, Determinant::aufbau(ints.nelec_alpha, ints.nelec_beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FciReport {
    pub norb: usize,
    pub nelec: [usize; 2],
    pub dimension: usize,
    pub energy: f64,
    pub hf_energy: f64,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
}

pub fn fci(cfg: &RunConfig, out: &Path, wavefunction: Option<&Path>, dump_ham: Option<&Path>) -> CliResult<FciReport> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let dets = enumerate_space(ints.norb, ints.nelec_alpha, ints.nelec_beta)?;
    let h = build_subspace_hamiltonian(&dets, &ints)?;
    let diag = davidson(&h, ints.norb, 1, cfg.davidson_options());
    let report = FciReport {
        norb: ints.norb,
        nelec: [ints.nelec_alpha, ints.nelec_beta],
        dimension: dets.len(),
        energy: diag.ground_energy(),
        hf_energy: ints.hartree_fock_energy(),
        converged: diag.converged,
        residual_norm: diag.residual_norms[0],
        iterations: diag.iterations,
    };
    if let Some(path) = wavefunction {
        let mut psi = diag.ground_state().clone();
        psi.sort_by_weight();
        io::write_wavefunction(path, &psi, Some(report.energy), Some(0.0))?;
    }
    if let Some(path) = dump_ham {
        io::write_hamiltonian(path, &dets, &ints)?;
    }
    io::write_json(out, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HciReport {
    pub epsilon1: f64,
    pub energy: f64,
    pub n_dets: usize,
    pub iterations: usize,
    /// `(determinants, energy)` after each iteration.
    pub history: Vec<(usize, f64)>,
    pub variance: f64,
}

pub fn hci_run(cfg: &RunConfig, out: &Path, wavefunction: Option<&Path>, dump_ham: Option<&Path>) -> CliResult<HciReport> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let run = hci(&rhf(&ints), &ints, cfg.hci_options())?;
    let var = energy_variance(&run.wavefunction, &ints)?;
    let report = HciReport {
        epsilon1: cfg.hci.epsilon1,
        energy: run.energy,
        n_dets: run.dets.len(),
        iterations: run.iterations,
        history: run.history.clone(),
        variance: var.variance,
    };
    if let Some(path) = wavefunction {
        let mut psi = run.wavefunction.clone();
        psi.sort_by_weight();
        io::write_wavefunction(path, &psi, Some(run.energy), Some(var.variance))?;
    }
    if let Some(path) = dump_ham {
        io::write_hamiltonian(path, &run.dets, &ints)?;
    }
    io::write_json(out, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub objective: ObjectiveKind,
    pub initial_value: f64,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub source: String,
    pub optimized: Option<OptimizeSummary>,
}

/// Parameter file if given, otherwise zeros or seeded random draws, then
/// the optional optimization stage.
pub fn resolve_params(cfg: &RunConfig, ints: &Integrals) -> CliResult<(LUCJParams, ParamsSummary)> {
    let (mut params, source) = match (&cfg.params, cfg.lucj.init) {
        (Some(path), _) => (io::read_params(path)?, "file".to_string()),
        (None, ParamInit::Zeros) => (LUCJParams::zeros(ints.norb), "zeros".to_string()),
        (None, ParamInit::Random) => (random_params(ints.norb, cfg.seed), "random".to_string()),
    };
    if params.norb != ints.norb {
        return Err(CliError::Config(format!("parameters are for {} orbitals, integrals have {}", params.norb, ints.norb)));
    }
    let mut optimized = None;
    if let Some(opt) = &cfg.optimize {
        let options = OptimizeOptions {
            budget: opt.budget,
            initial_radius: opt.initial_radius,
            min_radius: opt.min_radius,
            freeze_jastrow: opt.freeze_jastrow,
            seed: cfg.seed,
        };
        let reference;
        let objective = match opt.objective {
            ObjectiveKind::SqdEnergy => Objective::SqdEnergy { ints, options: cfg.sqd_options() },
            ObjectiveKind::KlHci => {
                reference = hci(&rhf(ints), ints, cfg.hci_options())?.wavefunction;
                Objective::KlToReference { reference: &reference, n_alpha: ints.nelec_alpha, n_beta: ints.nelec_beta }
            }
        };
        let result = optimize_params(&params, &objective, options)?;
        optimized = Some(OptimizeSummary {
            objective: opt.objective,
            initial_value: result.initial_value,
            value: result.value,
            evaluations: result.evaluations,
        });
        params = result.params;
    }
    Ok((params, ParamsSummary { source, optimized }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqdReport {
    pub energy: f64,
    pub hf_energy: f64,
    pub variance: f64,
    pub raw_h2: f64,
    pub dimension: usize,
    pub n_samples: usize,
    pub batch_energies: Vec<f64>,
    pub converged: bool,
    pub params: ParamsSummary,
}

pub fn sqd(cfg: &RunConfig, out: &Path, wavefunction: Option<&Path>, dump_ham: Option<&Path>) -> CliResult<SqdReport> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let (report, psi) = sqd_stage(cfg, &ints)?;
    if let Some(path) = wavefunction {
        io::write_wavefunction(path, &psi, Some(report.energy), Some(report.variance))?;
    }
    if let Some(path) = dump_ham {
        io::write_hamiltonian(path, &psi.dets, &ints)?;
    }
    io::write_json(out, &report)?;
    Ok(report)
}

fn sqd_stage(cfg: &RunConfig, ints: &Integrals) -> CliResult<(SqdReport, CIWavefunction)> {
    let (params, summary) = resolve_params(cfg, ints)?;
    let result = sqd_pipeline(&params, ints, &cfg.sqd_options())?;
    let mut psi = result.wavefunction;
    psi.sort_by_weight();
    let report = SqdReport {
        energy: result.energy,
        hf_energy: ints.hartree_fock_energy(),
        variance: result.variance.variance,
        raw_h2: result.variance.raw_h2,
        dimension: result.dimension,
        n_samples: result.n_samples,
        batch_energies: result.batch_energies,
        converged: result.converged,
        params: summary,
    };
    Ok((report, psi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub n_samples: usize,
    pub n_valid: usize,
    pub n_distinct: usize,
    pub flip_prob: f64,
    pub seed: u64,
}

pub fn lucj_sample(cfg: &RunConfig, out: &Path) -> CliResult<SampleReport> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let (params, _) = resolve_params(cfg, &ints)?;
    let reference = Determinant::aufbau(ints.nelec_alpha, ints.nelec_beta);
    let state = build_lucj_state(&params, &reference, ints.norb)?;
    let batch = sample_configurations(&state.wavefunction, cfg.lucj.shots, cfg.lucj.flip_prob, cfg.seed)?;
    let counts = SampleBatch::counts(&batch.raw);
    io::write_sample_counts(out, ints.norb, &counts)?;
    let report = SampleReport {
        n_samples: batch.raw.len(),
        n_valid: batch.valid.len(),
        n_distinct: counts.len(),
        flip_prob: cfg.lucj.flip_prob,
        seed: cfg.seed,
    };
    io::write_json(&io::sidecar(out), &report)?;
    Ok(report)
}

fn build_trial(cfg: &RunConfig, psi: &CIWavefunction, ints: &Integrals) -> CliResult<Trial> {
    let chol = cholesky_decompose(ints, cfg.afqmc.chol_cutoff)?;
    Ok(prepare_trial(psi, ints, &chol)?)
}

/// Runs AFQMC, streaming blocks to `series_path` and writing the summary to
/// its JSON sidecar.
pub fn afqmc_stage(cfg: &RunConfig, trial: &Trial, seed: u64, series_path: &Path) -> CliResult<io::SeriesSummary> {
    let config: AFQMCConfig = cfg.afqmc_config(seed);
    let mut writer = io::SeriesWriter::create(series_path)?;
    let mut write_error = None;
    let series = run_afqmc_with(trial, &config, |b| {
        if write_error.is_none() {
            write_error = writer.push(b).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let analysis = series.analyze(config.equilibration)?;
    let summary = io::SeriesSummary::new(&series, &analysis, &cfg.afqmc);
    io::write_json(&io::sidecar(series_path), &summary)?;
    Ok(summary)
}

pub fn afqmc(cfg: &RunConfig, out: &Path) -> CliResult<io::SeriesSummary> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let psi = io::read_wavefunction(require(&cfg.trial, "trial wavefunction path")?)?;
    if psi.norb != ints.norb {
        return Err(CliError::Config(format!("trial has {} orbitals, integrals have {}", psi.norb, ints.norb)));
    }
    let trial = build_trial(cfg, &psi, &ints)?;
    afqmc_stage(cfg, &trial, cfg.seed, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_points: usize,
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: Option<f64>,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub weighted: bool,
}

impl From<LinearFit> for FitReport {
    fn from(f: LinearFit) -> Self {
        Self {
            n_points: f.residuals.len(),
            intercept: f.intercept,
            slope: f.slope,
            intercept_stderr: f.intercept_stderr,
            r_squared: f.r_squared,
            residuals: f.residuals,
            weighted: f.weighted,
        }
    }
}

fn fit(cfg: &RunConfig, points: &[Point]) -> CliResult<FitReport> {
    let pts: Vec<Point> = if cfg.extrapolate.weighted {
        points.to_vec()
    } else {
        points.iter().map(|p| Point::new(p.variance, p.energy)).collect()
    };
    Ok(fit_linear(&pts)?.into())
}

pub fn extrapolate(cfg: &RunConfig, out: &Path) -> CliResult<FitReport> {
    let points = io::read_points(require(&cfg.points, "points path")?)?;
    let report = fit(cfg, &points)?;
    io::write_json(out, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    /// Truncation weights that produced this trial.
    pub weights: Vec<f64>,
    pub n_dets: usize,
    pub trial_energy: f64,
    pub variance: f64,
    pub series_file: String,
    pub afqmc_mean: f64,
    pub afqmc_stderr: f64,
    pub n_blocks: usize,
    pub n_discarded: usize,
    pub killed: u64,
    pub truncated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub norb: usize,
    pub nelec: [usize; 2],
    pub seed: u64,
    pub hf_energy: f64,
    pub sqd: SqdReport,
    pub trials: Vec<TrialReport>,
    /// AFQMC energies against trial variance; needs two or more trials with
    /// nonzero variance.
    pub extrapolation: Option<FitReport>,
    pub config: RunConfig,
}

const VARIANCE_FLOOR: f64 = 1e-10;

/// Per-trial AFQMC seeds are derived from the run seed and the trial index.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64 + 1)
}

/// LUCJ → SQD → truncation → AFQMC per truncated trial → extrapolation.
/// Writes `report.json`, the SQD wavefunction and one series per trial into
/// `out_dir`.
pub fn pipeline(cfg: &RunConfig, out_dir: &Path) -> CliResult<PipelineReport> {
    let ints = io::read_fcidump(require(&cfg.fcidump, "fcidump path")?)?;
    let (sqd_report, psi) = sqd_stage(cfg, &ints)?;
    io::write_wavefunction(&out_dir.join("sqd_wavefunction.csv"), &psi, Some(sqd_report.energy), Some(sqd_report.variance))?;
    let mut trials: Vec<TrialReport> = Vec::new();
    for &w in &cfg.truncate.weights {
        let truncated = truncate_by_weight(&psi, w);
        // Truncation keeps a prefix, so equal lengths mean equal trials.
        if let Some(t) = trials.iter_mut().find(|t| t.n_dets == truncated.len()) {
            t.weights.push(w);
            continue;
        }
        let i = trials.len();
        let variance = energy_variance(&truncated, &ints)?.variance;
        let trial = build_trial(cfg, &truncated, &ints)?;
        let name = format!("afqmc_trial{i}.csv");
        let summary = afqmc_stage(cfg, &trial, trial_seed(cfg.seed, i), &out_dir.join(&name))?;
        trials.push(TrialReport {
            weights: vec![w],
            n_dets: truncated.len(),
            trial_energy: trial.energy,
            variance,
            series_file: name,
            afqmc_mean: summary.mean,
            afqmc_stderr: summary.stderr,
            n_blocks: summary.n_blocks,
            n_discarded: summary.n_discarded,
            killed: summary.killed,
            truncated: summary.truncated,
        });
    }
    // Exact trials sit at zero variance, outside the fit's domain.
    let points: Vec<Point> = trials
        .iter()
        .filter(|t| t.variance > VARIANCE_FLOOR)
        .map(|t| Point::with_stderr(t.variance, t.afqmc_mean, t.afqmc_stderr))
        .collect();
    let extrapolation = if points.len() >= 2 { Some(fit(cfg, &points)?) } else { None };
    let report = PipelineReport {
        norb: ints.norb,
        nelec: [ints.nelec_alpha, ints.nelec_beta],
        seed: cfg.seed,
        hf_energy: ints.hartree_fock_energy(),
        sqd: sqd_report,
        trials,
        extrapolation,
        config: cfg.clone(),
    };
    io::write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub geometry: String,
    pub method: String,
    pub energy: f64,
    pub stderr: Option<f64>,
    pub variance: Option<f64>,
    pub reference: f64,
    pub error_mha: f64,
}

fn method_name(m: PlotMethod) -> &'static str {
    match m {
        PlotMethod::Hf => "hf",
        PlotMethod::Sqd => "sqd",
        PlotMethod::Hci => "hci",
        PlotMethod::AfqmcSqd => "afqmc-sqd",
        PlotMethod::AfqmcHci => "afqmc-hci",
    }
}

/// Energy-error table over a list of geometries against FCI, one row per
/// (geometry, method, truncation) in the order given by the config.
pub fn plot_data(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PlotRow>> {
    if cfg.plot.geometries.is_empty() {
        return Err(CliError::Config("plot.geometries is empty".into()));
    }
    let mut rows = Vec::new();
    for (gi, g) in cfg.plot.geometries.iter().enumerate() {
        let ints = io::read_fcidump(&g.fcidump)?;
        let dets = enumerate_space(ints.norb, ints.nelec_alpha, ints.nelec_beta)?;
        let h = build_subspace_hamiltonian(&dets, &ints)?;
        let reference = davidson(&h, ints.norb, 1, cfg.davidson_options()).ground_energy();
        let row = |method: String, energy: f64, stderr: Option<f64>, variance: Option<f64>| PlotRow {
            geometry: g.label.clone(),
            method,
            energy,
            stderr,
            variance,
            reference,
            error_mha: (energy - reference) * 1e3,
        };
        let mut sqd_psi = None;
        let mut hci_psi = None;
        for &m in &cfg.plot.methods {
            match m {
                PlotMethod::Hf => rows.push(row("hf".into(), ints.hartree_fock_energy(), None, None)),
                PlotMethod::Sqd | PlotMethod::AfqmcSqd => {
                    if sqd_psi.is_none() {
                        let (rep, psi) = sqd_stage(cfg, &ints)?;
                        sqd_psi = Some((rep.energy, rep.variance, psi));
                    }
                }
                PlotMethod::Hci | PlotMethod::AfqmcHci => {
                    if hci_psi.is_none() {
                        let run = hci(&rhf(&ints), &ints, cfg.hci_options())?;
                        let var = energy_variance(&run.wavefunction, &ints)?.variance;
                        let mut psi = run.wavefunction;
                        psi.sort_by_weight();
                        hci_psi = Some((run.energy, var, psi));
                    }
                }
            }
            let source = match m {
                PlotMethod::Sqd | PlotMethod::AfqmcSqd => sqd_psi.as_ref(),
                PlotMethod::Hci | PlotMethod::AfqmcHci => hci_psi.as_ref(),
                PlotMethod::Hf => None,
            };
            let Some((energy, variance, psi)) = source else { continue };
            match m {
                PlotMethod::Sqd | PlotMethod::Hci => rows.push(row(method_name(m).into(), *energy, None, Some(*variance))),
                _ => {
                    for (ti, &w) in cfg.truncate.weights.iter().enumerate() {
                        let truncated = truncate_by_weight(psi, w);
                        let var = energy_variance(&truncated, &ints)?.variance;
                        let trial = build_trial(cfg, &truncated, &ints)?;
                        let series = out.with_file_name(format!(
                            "{}_{}_{}_w{ti}.csv",
                            out.file_stem().and_then(|s| s.to_str()).unwrap_or("plot"),
                            g.label,
                            method_name(m)
                        ));
                        let s = afqmc_stage(cfg, &trial, trial_seed(cfg.seed, gi * 1000 + ti), &series)?;
                        rows.push(row(format!("{}@{w}", method_name(m)), s.mean, Some(s.stderr), Some(var)));
                    }
                }
            }
        }
    }
    io::write_rows(out, rows.iter())?;
    Ok(rows)
}

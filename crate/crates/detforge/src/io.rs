//! File formats: FCIDUMP, CI vectors, sample batches, LUCJ parameters,
//! estimator series and extrapolation points.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use detforge_core::afqmc::{BlockRecord, EstimatorSeries, ReblockReport, SeriesAnalysis};
use detforge_core::extrapolate::Point;
use detforge_core::fcidump::{emit_fcidump, parse_fcidump};
use detforge_core::lucj::LUCJParams;
use detforge_core::{CIWavefunction, Determinant, Integrals};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_fcidump(path: &Path) -> CliResult<Integrals> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    parse_fcidump(&text).map_err(|e| CliError::input(path, e))
}

pub fn write_fcidump(path: &Path, ints: &Integrals) -> CliResult<()> {
    write_text(path, &emit_fcidump(ints))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

/// Pretty JSON with a trailing newline. Field order follows the struct, so
/// identical values always serialize to identical bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_out(path, e))
}

fn csv_out(path: &Path, e: csv::Error) -> CliError {
    CliError::output(path, std::io::Error::other(e))
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_out(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::input(path, e))
}

/// `path` with its extension replaced by `json`.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct CiRow {
    bitstring: String,
    coefficient: f64,
}

/// Metadata stored next to a CI vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiSidecar {
    pub norb: usize,
    pub nelec: [usize; 2],
    pub energy: Option<f64>,
    pub variance: Option<f64>,
}

/// Writes `bitstring,coefficient` rows plus the JSON sidecar.
pub fn write_wavefunction(path: &Path, psi: &CIWavefunction, energy: Option<f64>, variance: Option<f64>) -> CliResult<()> {
    write_rows(
        path,
        psi.dets.iter().zip(&psi.coeffs).map(|(d, &c)| CiRow { bitstring: d.to_bitstring(psi.norb), coefficient: c }),
    )?;
    let nelec = psi.dets.first().map_or([0, 0], |d| [d.n_alpha(), d.n_beta()]);
    write_json(&sidecar(path), &CiSidecar { norb: psi.norb, nelec, energy, variance })
}

/// Reads a CI vector. The sidecar is optional; without it the orbital count
/// comes from the bitstring width.
pub fn read_wavefunction(path: &Path) -> CliResult<CIWavefunction> {
    let rows: Vec<CiRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::input(path, "no determinants"));
    }
    let mut dets = Vec::with_capacity(rows.len());
    let mut coeffs = Vec::with_capacity(rows.len());
    let mut norb = None;
    for (i, row) in rows.iter().enumerate() {
        let (d, n) = Determinant::from_bitstring(row.bitstring.trim())
            .map_err(|e| CliError::input(path, format!("row {}: {e}", i + 1)))?;
        if *norb.get_or_insert(n) != n {
            return Err(CliError::input(path, format!("row {}: bitstring width differs", i + 1)));
        }
        dets.push(d);
        coeffs.push(row.coefficient);
    }
    let side = sidecar(path);
    let norb = if side.exists() {
        let meta: CiSidecar = read_json(&side)?;
        meta.norb
    } else {
        norb.unwrap()
    };
    Ok(CIWavefunction::new(norb, dets, coeffs))
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    bitstring: String,
    count: usize,
}

/// `bitstring,count` in canonical configuration order.
pub fn write_sample_counts(path: &Path, norb: usize, counts: &[(Determinant, usize)]) -> CliResult<()> {
    write_rows(path, counts.iter().map(|(d, c)| CountRow { bitstring: d.to_bitstring(norb), count: *c }))
}

pub fn read_sample_counts(path: &Path) -> CliResult<Vec<(Determinant, usize)>> {
    let rows: Vec<CountRow> = read_rows(path)?;
    rows.into_iter()
        .map(|r| {
            let (d, _) = Determinant::from_bitstring(r.bitstring.trim()).map_err(|e| CliError::input(path, e))?;
            Ok((d, r.count))
        })
        .collect()
}

/// LUCJ parameters as dense row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub k1: Vec<Vec<f64>>,
    pub k2: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<bool>>>,
}

fn to_rows<T: Copy>(flat: &[T], n: usize) -> Vec<Vec<T>> {
    flat.chunks(n).map(|c| c.to_vec()).collect()
}

fn flatten<T: Copy>(rows: &[Vec<T>], n: usize, what: &str) -> Result<Vec<T>, String> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("{what} must be {n}×{n}"));
    }
    Ok(rows.concat())
}

impl ParamsFile {
    pub fn from_params(p: &LUCJParams) -> Self {
        Self {
            k1: to_rows(&p.k1, p.norb),
            k2: to_rows(&p.k2, p.norb),
            j: to_rows(&p.j, 2 * p.norb),
            mask: Some(to_rows(&p.mask, 2 * p.norb)),
        }
    }

    pub fn to_params(&self) -> Result<LUCJParams, String> {
        let n = self.k1.len();
        let mut p = LUCJParams::zeros(n);
        p.k1 = flatten(&self.k1, n, "k1")?;
        p.k2 = flatten(&self.k2, n, "k2")?;
        p.j = flatten(&self.j, 2 * n, "j")?;
        if let Some(mask) = &self.mask {
            p.mask = flatten(mask, 2 * n, "mask")?;
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

pub fn read_params(path: &Path) -> CliResult<LUCJParams> {
    let file: ParamsFile = read_json(path)?;
    file.to_params().map_err(|e| CliError::input(path, e))
}

pub fn write_params(path: &Path, p: &LUCJParams) -> CliResult<()> {
    write_json(path, &ParamsFile::from_params(p))
}

#[derive(Serialize, Deserialize)]
struct SeriesRow {
    block: usize,
    energy_re: f64,
    energy_im: f64,
    total_weight: f64,
}

impl From<&BlockRecord> for SeriesRow {
    fn from(b: &BlockRecord) -> Self {
        Self { block: b.block, energy_re: b.energy.re, energy_im: b.energy.im, total_weight: b.total_weight }
    }
}

/// Streams block records to CSV, flushing after each block so a run that
/// aborts leaves every completed block on disk.
pub struct SeriesWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> CliResult<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::output(path, e))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        // Header written eagerly so a run killed before its first block still
        // leaves a parseable file.
        inner
            .write_record(["block", "energy_re", "energy_im", "total_weight"])
            .map_err(|e| csv_out(path, e))?;
        inner.flush().map_err(|e| CliError::output(path, e))?;
        Ok(Self { path: path.to_path_buf(), inner })
    }

    pub fn push(&mut self, record: &BlockRecord) -> CliResult<()> {
        self.inner.serialize(SeriesRow::from(record)).map_err(|e| csv_out(&self.path, e))?;
        self.inner.flush().map_err(|e| CliError::output(&self.path, e))
    }
}

pub fn read_series(path: &Path) -> CliResult<Vec<(usize, f64, f64, f64)>> {
    let rows: Vec<SeriesRow> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| (r.block, r.energy_re, r.energy_im, r.total_weight)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReblockRow {
    pub block_size: usize,
    pub n_blocks: usize,
    pub mean: f64,
    pub stderr: f64,
    pub stderr_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReblockTable {
    pub levels: Vec<ReblockRow>,
    /// Plateau level index.
    pub optimal: usize,
    pub converged: bool,
    /// Qualifying level with the lowest mean.
    pub lowest_energy: usize,
    pub lowest_energy_mean: f64,
    pub lowest_energy_stderr: f64,
}

impl From<&ReblockReport> for ReblockTable {
    fn from(r: &ReblockReport) -> Self {
        let low = &r.levels[r.lowest_energy];
        Self {
            levels: r
                .levels
                .iter()
                .map(|l| ReblockRow {
                    block_size: l.block_size,
                    n_blocks: l.n_blocks,
                    mean: l.mean,
                    stderr: l.stderr,
                    stderr_error: l.stderr_error,
                })
                .collect(),
            optimal: r.optimal,
            converged: r.converged,
            lowest_energy: r.lowest_energy,
            lowest_energy_mean: low.mean,
            lowest_energy_stderr: low.stderr,
        }
    }
}

/// JSON summary written next to an estimator series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: f64,
    pub stderr: f64,
    pub n_blocks: usize,
    pub n_discarded: usize,
    pub trial_energy: f64,
    pub initial_energy: f64,
    pub killed: u64,
    pub truncated: u64,
    pub reblocking: ReblockTable,
    pub config: crate::config::AfqmcConfig,
    pub seed: u64,
}

impl SeriesSummary {
    pub fn new(series: &EstimatorSeries, analysis: &SeriesAnalysis, config: &crate::config::AfqmcConfig) -> Self {
        Self {
            mean: analysis.mean,
            stderr: analysis.stderr,
            n_blocks: series.blocks.len(),
            n_discarded: analysis.n_discarded,
            trial_energy: series.trial_energy,
            initial_energy: series.initial_energy,
            killed: series.stats.killed,
            truncated: series.stats.truncated,
            reblocking: ReblockTable::from(&analysis.report),
            config: config.clone(),
            seed: series.config.seed,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    variance: f64,
    energy: f64,
    #[serde(default)]
    stderr: Option<f64>,
}

/// `variance,energy,stderr` with an optional (possibly empty) last column.
pub fn read_points(path: &Path) -> CliResult<Vec<Point>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| CliError::input(path, e))?;
    let rows: Vec<PointRow> = r.deserialize().collect::<Result<_, _>>().map_err(|e| CliError::input(path, e))?;
    Ok(rows.into_iter().map(|r| Point { variance: r.variance, energy: r.energy, stderr: r.stderr }).collect())
}

pub fn write_points(path: &Path, points: &[Point]) -> CliResult<()> {
    write_rows(path, points.iter().map(|p| PointRow { variance: p.variance, energy: p.energy, stderr: p.stderr }))
}

/// Subspace Hamiltonian as `row,col,value` for the upper triangle. Indices
/// follow the order of `dets`, which need not be sorted.
pub fn write_hamiltonian(path: &Path, dets: &[Determinant], ints: &Integrals) -> CliResult<()> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_unstable_by_key(|&i| dets[i]);
    let sorted: Vec<Determinant> = order.iter().map(|&i| dets[i]).collect();
    let h = detforge_core::hamiltonian::build_subspace_hamiltonian(&sorted, ints)?;
    let mut triplets: Vec<(usize, usize, f64)> = h
        .triplets()
        .filter(|(i, j, _)| i <= j)
        .map(|(i, j, v)| (order[i].min(order[j]), order[i].max(order[j]), v))
        .collect();
    triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
    #[derive(Serialize)]
    struct Row {
        row: usize,
        col: usize,
        value: f64,
    }
    write_rows(path, triplets.into_iter().map(|(row, col, value)| Row { row, col, value }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use detforge_core::lucj::random_params;

    #[test]
    fn wavefunction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wf.csv");
        let psi = CIWavefunction::new(
            4,
            vec![Determinant::new(0b0011, 0b0011), Determinant::new(0b0101, 0b1001)],
            vec![0.9, -0.1 / 3.0],
        );
        write_wavefunction(&path, &psi, Some(-1.5), None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bitstring,coefficient\n0011|0011,0.9\n"), "{text}");
        let back = read_wavefunction(&path).unwrap();
        assert_eq!(back.dets, psi.dets);
        assert_eq!(back.coeffs, psi.coeffs);
        let meta: CiSidecar = read_json(&sidecar(&path)).unwrap();
        assert_eq!(meta, CiSidecar { norb: 4, nelec: [2, 2], energy: Some(-1.5), variance: None });
    }

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = random_params(3, 5);
        write_params(&path, &p).unwrap();
        assert_eq!(read_params(&path).unwrap(), p);
        std::fs::write(&path, r#"{"k1": [[0, 1], [1, 0]], "k2": [[0, 0], [0, 0]], "j": [[0,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]}"#).unwrap();
        assert!(matches!(read_params(&path), Err(CliError::Input { .. })));
    }

    #[test]
    fn points_with_and_without_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "variance,energy,stderr\n0.1,-1.0,0.01\n0.2,-0.9,\n").unwrap();
        let pts = read_points(&path).unwrap();
        assert_eq!(pts[0].stderr, Some(0.01));
        assert_eq!(pts[1].stderr, None);
        std::fs::write(&path, "variance,energy\n0.1,-1.0\n0.2,-0.9\n").unwrap();
        assert!(read_points(&path).unwrap().iter().all(|p| p.stderr.is_none()));
    }

    #[test]
    fn sample_counts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let counts = vec![(Determinant::new(0b011, 0b001), 7), (Determinant::new(0b101, 0b010), 2)];
        write_sample_counts(&path, 3, &counts).unwrap();
        assert_eq!(read_sample_counts(&path).unwrap(), counts);
    }
}

//! Grid sweeps over `(Bˣ, Bᶻ)`, per-node records, CSV output and boundary
//! detection from finite-difference extrema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::eigensolver::{ground_state, susceptibility_from_states, Axis, SolverOptions};
use crate::error::{Error, Result};
use crate::exact::{alpha_ratio, exact_mutual_information, mean_sz, von_neumann_entropy, Partition, ALPHA_FLOOR};
use crate::mice::{exact_specific_entropy, specific_entropy, MiceConfig, MiceMode};
use crate::mine::{estimate_mi, TrainConfig};
use crate::plugin::plugin_mi;
use crate::sampling::{sample_bitstrings_with_meta, DatasetMeta};
use crate::seeds;
use crate::spin_model::{ModelParams, MAX_SITES, MIN_SITES};
use crate::wavefunction::WaveFunction;

pub const CSV_HEADER: &str = "bx,bz,quantity,value,std,provenance,flags";
pub const BOUNDARY_HEADER: &str = "quantity,axis,fixed_field,location,derivative,flags";
pub const BOUNDARY_FILE: &str = "boundaries.csv";
pub const DEFAULT_DELTA: f64 = 0.001;
/// Nodes at `Bᶻ = 0` with smaller `Bˣ` sit in the degenerate AFM strip.
pub const MIN_BX_AT_ZERO_BZ: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Exact,
    Mine,
    Plugin,
    Mice,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Mine => "mine",
            Provenance::Plugin => "plugin",
            Provenance::Mice => "mice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantity {
    Energy,
    ExactMi,
    MineMi,
    PluginMi,
    MiceS0,
    ExactS0,
    Svn,
    Alpha,
    MeanSz,
    /// Fidelity susceptibility at fixed `Bˣ`, shifting `Bᶻ`.
    ChiX,
    /// Fidelity susceptibility at fixed `Bᶻ`, shifting `Bˣ`.
    ChiZ,
}

impl Quantity {
    pub const ALL: [Quantity; 11] = [
        Quantity::Energy,
        Quantity::ExactMi,
        Quantity::MineMi,
        Quantity::PluginMi,
        Quantity::MiceS0,
        Quantity::ExactS0,
        Quantity::Svn,
        Quantity::Alpha,
        Quantity::MeanSz,
        Quantity::ChiX,
        Quantity::ChiZ,
    ];

    /// Everything computable from the ground state alone.
    pub const EXACT: [Quantity; 6] = [
        Quantity::Energy,
        Quantity::ExactMi,
        Quantity::ExactS0,
        Quantity::Svn,
        Quantity::Alpha,
        Quantity::MeanSz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Energy => "energy",
            Quantity::ExactMi => "exact_mi",
            Quantity::MineMi => "mine_mi",
            Quantity::PluginMi => "plugin_mi",
            Quantity::MiceS0 => "mice_s0",
            Quantity::ExactS0 => "exact_s0",
            Quantity::Svn => "svn",
            Quantity::Alpha => "alpha",
            Quantity::MeanSz => "mean_sz",
            Quantity::ChiX => "chi_x",
            Quantity::ChiZ => "chi_z",
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            Quantity::MineMi => Provenance::Mine,
            Quantity::PluginMi => Provenance::Plugin,
            Quantity::MiceS0 => Provenance::Mice,
            _ => Provenance::Exact,
        }
    }

    pub fn needs_samples(self) -> bool {
        matches!(self, Quantity::MineMi | Quantity::PluginMi | Quantity::MiceS0)
    }

    /// Comma-separated names; `exact` and `all` expand to groups.
    pub fn parse_list(list: &str) -> Result<Vec<Quantity>> {
        let mut out = BTreeSet::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "all" => out.extend(Quantity::ALL),
                "exact" => out.extend(Quantity::EXACT),
                name => {
                    out.insert(name.parse::<Quantity>()?);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("empty quantity list".into()));
        }
        Ok(out.into_iter().collect())
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown quantity {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Half,
    Quarter,
}

impl PartitionKind {
    pub fn build(self, n_sites: usize) -> Result<Partition> {
        match self {
            PartitionKind::Half => Partition::half(n_sites),
            PartitionKind::Quarter => Partition::quarter(n_sites),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Half => "half",
            PartitionKind::Quarter => "quarter",
        }
    }
}

impl FromStr for PartitionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(PartitionKind::Half),
            "quarter" => Ok(PartitionKind::Quarter),
            other => Err(Error::Config(format!("unknown partition {other:?}, expected half or quarter"))),
        }
    }
}

/// Inclusive range `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FieldRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || stop < start || step <= 0.0 {
            return Err(Error::Config(format!("invalid range {start}:{stop}:{step}")));
        }
        if start < 0.0 {
            return Err(Error::Config(format!("fields must be non-negative, got {start}")));
        }
        Ok(Self { start, stop, step })
    }

    pub fn single(value: f64) -> Result<Self> {
        Self::new(value, value, 1.0)
    }

    /// Grid values, rounded to 1e-10 so that decimal steps print cleanly.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| round_field(self.start + i as f64 * self.step)).collect()
    }
}

impl FromStr for FieldRange {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {t:?} in range {s:?}")))
        };
        match parts.as_slice() {
            [v] => Self::single(num(v)?),
            [a, b, h] => Self::new(num(a)?, num(b)?, num(h)?),
            _ => Err(Error::Config(format!("range {s:?} must look like start:stop:step"))),
        }
    }
}

fn round_field(v: f64) -> f64 {
    let r = (v * 1e10).round() / 1e10;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_sites: usize,
    pub bx: FieldRange,
    pub bz: FieldRange,
    pub samples: usize,
    pub partition: PartitionKind,
    pub train: TrainConfig,
    pub mice: MiceConfig,
    pub solver: SolverOptions,
    pub seed: u64,
    pub delta: f64,
    pub out_dir: PathBuf,
    pub quantities: Vec<Quantity>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_sites: 16,
            bx: FieldRange { start: 0.2, stop: 3.0, step: 0.1 },
            bz: FieldRange { start: 0.0, stop: 3.0, step: 0.1 },
            samples: 15000,
            partition: PartitionKind::Half,
            train: TrainConfig::default(),
            mice: MiceConfig::default(),
            solver: SolverOptions::default(),
            seed: 0,
            delta: DEFAULT_DELTA,
            out_dir: PathBuf::from("sweep-out"),
            quantities: Quantity::EXACT.to_vec(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_SITES..=MAX_SITES).contains(&self.n_sites) {
            return Err(Error::Config(format!("n_sites must be in [{MIN_SITES}, {MAX_SITES}], got {}", self.n_sites)));
        }
        FieldRange::new(self.bx.start, self.bx.stop, self.bx.step)?;
        FieldRange::new(self.bz.start, self.bz.stop, self.bz.step)?;
        if self.bz.values()[0] == 0.0 && self.bx.start < MIN_BX_AT_ZERO_BZ - 1e-12 {
            return Err(Error::Config(format!(
                "Bx must start at {MIN_BX_AT_ZERO_BZ} or above when the Bz = 0 row is swept (degenerate ground states)"
            )));
        }
        if self.quantities.is_empty() {
            return Err(Error::Config("no quantities selected".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        self.partition.build(self.n_sites).map_err(|e| Error::Config(e.to_string()))?;
        if self.quantities.iter().any(|q| q.needs_samples())
            && self.samples == 0 {
                return Err(Error::Config("samples must be positive".into()));
            }
        if self.quantities.contains(&Quantity::MineMi) || self.quantities.contains(&Quantity::MiceS0) {
            self.train.validate()?;
            let need = self.train.min_dataset_size();
            if self.samples < need {
                return Err(Error::Config(format!("{} samples is below the minimum of {need} for training", self.samples)));
            }
        }
        if self.quantities.contains(&Quantity::MiceS0) {
            let sites: Vec<usize> = (0..self.n_sites).collect();
            crate::mice::halving_schedule(&sites, self.mice.terminal_size).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let bx = self.bx.values();
        self.bz
            .values()
            .into_iter()
            .flat_map(|z| bx.iter().map(move |&x| (x, z)))
            .filter(|&(x, z)| !(z == 0.0 && x < MIN_BX_AT_ZERO_BZ - 1e-12))
            .collect()
    }
}

/// One number of a node record.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub quantity: Quantity,
    /// `None` when undefined or failed.
    pub value: Option<f64>,
    pub std: Option<f64>,
    pub flags: Vec<String>,
}

impl Entry {
    fn ok(quantity: Quantity, value: f64, std: Option<f64>) -> Self {
        Self { quantity, value: Some(value), std, flags: Vec::new() }
    }

    fn failed(quantity: Quantity, err: &Error) -> Self {
        let kind = if err.is_numeric() { "error_numeric" } else { "error" };
        Self { quantity, value: None, std: None, flags: vec![kind.to_string()] }
    }

    pub fn csv_row(&self, bx: f64, bz: f64) -> String {
        let value = self.value.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        let std = self.std.map_or_else(String::new, |s| s.to_string());
        format!("{bx},{bz},{},{value},{std},{},{}", self.quantity, self.quantity.provenance().name(), self.flags.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub bx: f64,
    pub bz: f64,
    pub entries: Vec<Entry>,
}

impl PointRecord {
    pub fn get(&self, q: Quantity) -> Option<&Entry> {
        self.entries.iter().find(|e| e.quantity == q)
    }

    pub fn value(&self, q: Quantity) -> Option<f64> {
        self.get(q).and_then(|e| e.value)
    }
}

/// Every selected quantity at one node. Failures become sentinel entries.
pub fn run_point(config: &SweepConfig, bx: f64, bz: f64) -> Result<PointRecord> {
    run_point_subset(config, bx, bz, &config.quantities)
}

fn run_point_subset(config: &SweepConfig, bx: f64, bz: f64, quantities: &[Quantity]) -> Result<PointRecord> {
    let params = ModelParams::new(config.n_sites, bx, bz)?;
    let part = config.partition.build(config.n_sites)?;
    let node_seed = seeds::for_node(config.seed, bx, bz);
    let opts = config.solver.with_seed(seeds::derive(node_seed, 0));

    let gs = match ground_state(&params, &opts) {
        Ok(gs) => gs,
        Err(e) => {
            let entries = quantities.iter().map(|&q| Entry::failed(q, &e)).collect();
            return Ok(PointRecord { bx, bz, entries });
        }
    };
    let psi = &gs.state;

    let dataset = if quantities.iter().any(|q| q.needs_samples()) {
        let meta = DatasetMeta { field_x: bx, field_z: bz, seed: seeds::derive(node_seed, 1) };
        Some(sample_bitstrings_with_meta(psi, config.samples, meta))
    } else {
        None
    };

    let mut entries = Vec::with_capacity(quantities.len());
    for &q in quantities {
        let result: Result<(Option<f64>, Option<f64>)> = match q {
            Quantity::Energy => Ok((Some(gs.energy), None)),
            Quantity::ExactMi => exact_mutual_information(psi, &part).map(|v| (Some(v), None)),
            Quantity::ExactS0 => Ok((Some(exact_specific_entropy(psi)), None)),
            Quantity::Svn => von_neumann_entropy(psi, &part).map(|v| (Some(v), None)),
            Quantity::Alpha => alpha_ratio(psi, &part, ALPHA_FLOOR).map(|v| (v, None)),
            Quantity::MeanSz => Ok((Some(mean_sz(psi)), None)),
            Quantity::ChiX => shifted_susceptibility(&params, psi, Axis::Z, config.delta, &opts).map(|v| (Some(v), None)),
            Quantity::ChiZ => shifted_susceptibility(&params, psi, Axis::X, config.delta, &opts).map(|v| (Some(v), None)),
            Quantity::MineMi => with_dataset(&dataset, |d| {
                let mut train = config.train.clone();
                train.seed = seeds::derive(node_seed, 2);
                estimate_mi(d, &part, &train).map(|est| (Some(est.value), Some(est.std)))
            }),
            Quantity::PluginMi => with_dataset(&dataset, |d| plugin_mi(d, &part).map(|v| (Some(v), None))),
            Quantity::MiceS0 => with_dataset(&dataset, |d| {
                let mut mice = config.mice.clone();
                mice.train.seed = seeds::derive(node_seed, 3);
                specific_entropy(d, &mice, MiceMode::Mine).map(|dec| {
                    let var: f64 = dec.levels.iter().map(|l| (0.5 * l.mi_std / l.volume as f64).powi(2)).sum();
                    (Some(dec.s0), Some(var.sqrt()))
                })
            }),
        };
        let mut entry = match result {
            Ok((Some(v), std)) => Entry::ok(q, v, std),
            Ok((None, _)) => Entry { quantity: q, value: None, std: None, flags: vec!["undefined".into()] },
            Err(e) => Entry::failed(q, &e),
        };
        if gs.near_degenerate() {
            entry.flags.push("near_degenerate".into());
        }
        entries.push(entry);
    }
    Ok(PointRecord { bx, bz, entries })
}

fn with_dataset<T>(
    dataset: &Option<Result<crate::sampling::BitstringDataset>>,
    f: impl FnOnce(&crate::sampling::BitstringDataset) -> Result<T>,
) -> Result<T> {
    match dataset {
        Some(Ok(d)) => f(d),
        Some(Err(e)) => Err(Error::Numeric(format!("sampling failed: {e}"))),
        None => unreachable!("dataset is drawn whenever a sampled quantity is requested"),
    }
}

fn shifted_susceptibility(
    params: &ModelParams,
    psi: &WaveFunction,
    shift: Axis,
    delta: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let shifted = match shift {
        Axis::X => params.with_fields(params.field_x() + delta, params.field_z())?,
        Axis::Z => params.with_fields(params.field_x(), params.field_z() + delta)?,
    };
    let other = ground_state(&shifted, opts)?;
    susceptibility_from_states(psi, &other.state, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub nodes_total: usize,
    pub nodes_computed: usize,
    pub files: Vec<PathBuf>,
}

pub fn quantity_path(dir: &Path, q: Quantity) -> PathBuf {
    dir.join(format!("{}.csv", q.name()))
}

/// Runs every missing `(node, quantity)` pair, appending rows to one CSV per
/// quantity, then rewrites the files in grid order and refreshes the
/// boundary table.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    config.validate()?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut done: BTreeMap<Quantity, BTreeSet<NodeKey>> = BTreeMap::new();
    for &q in &config.quantities {
        done.insert(q, read_done_nodes(&quantity_path(dir, q))?);
    }

    let nodes = config.nodes();
    let work: Vec<((f64, f64), Vec<Quantity>)> = nodes
        .iter()
        .filter_map(|&(x, z)| {
            let key = NodeKey::new(x, z);
            let missing: Vec<Quantity> = config.quantities.iter().copied().filter(|q| !done[q].contains(&key)).collect();
            (!missing.is_empty()).then_some(((x, z), missing))
        })
        .collect();

    let mut writers = BTreeMap::new();
    for &q in &config.quantities {
        let path = quantity_path(dir, q);
        let fresh = !path.exists() || fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        if fresh {
            writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
        }
        writers.insert(q, (path, w));
    }
    let writers = Mutex::new(writers);

    work.par_iter().try_for_each(|&((x, z), ref missing)| -> Result<()> {
        let record = run_point_subset(config, x, z, missing)?;
        let mut guard = writers.lock().expect("writer lock poisoned");
        for entry in &record.entries {
            let (path, w) = guard.get_mut(&entry.quantity).expect("writer for every quantity");
            writeln!(w, "{}", entry.csv_row(x, z)).map_err(|e| Error::io(path.clone(), e))?;
            w.flush().map_err(|e| Error::io(path.clone(), e))?;
        }
        Ok(())
    })?;

    let writers = writers.into_inner().expect("writer lock poisoned");
    let mut files = Vec::new();
    for (_, (path, w)) in writers {
        drop(w);
        if !work.is_empty() {
            sort_csv(&path)?;
        }
        files.push(path);
    }
    let boundaries = dir.join(BOUNDARY_FILE);
    write_boundaries(config, &boundaries)?;
    files.push(boundaries);
    Ok(SweepSummary { nodes_total: nodes.len(), nodes_computed: work.len(), files })
}

/// Node identity in files, by exact printed field values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct NodeKey(String, String);

impl NodeKey {
    fn new(bx: f64, bz: f64) -> Self {
        NodeKey(bx.to_string(), bz.to_string())
    }
}

fn read_done_nodes(path: &Path) -> Result<BTreeSet<NodeKey>> {
    let mut done = BTreeSet::new();
    if !path.exists() {
        return Ok(done);
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut it = line.split(',');
        if let (Some(x), Some(z), Some(_)) = (it.next(), it.next(), it.next()) {
            done.insert(NodeKey(x.to_string(), z.to_string()));
        }
    }
    Ok(done)
}

fn sort_csv(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(f64, f64, &str)> = text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut it = l.split(',');
            let x = it.next().and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
            let z = it.next().and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
            (x, z, l)
        })
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)).then(a.2.cmp(b.2)));
    let mut out = String::with_capacity(text.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (_, _, l) in rows {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A quantity sampled on a rectangular grid; `NaN` marks undefined cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub quantity: String,
    pub bx_values: Vec<f64>,
    pub bz_values: Vec<f64>,
    /// Row-major in `Bᶻ`: cell `(ix, iz)` is at `iz * bx_values.len() + ix`.
    pub cells: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(quantity: impl Into<String>, bx_values: Vec<f64>, bz_values: Vec<f64>, cells: Vec<f64>) -> Result<Self> {
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !ascending(&bx_values) || !ascending(&bz_values) {
            return Err(Error::InvalidParams("grid axes must be strictly ascending".into()));
        }
        if cells.len() != bx_values.len() * bz_values.len() {
            return Err(Error::Dimension { expected: bx_values.len() * bz_values.len(), got: cells.len() });
        }
        Ok(Self { quantity: quantity.into(), bx_values, bz_values, cells })
    }

    pub fn from_fn(
        quantity: impl Into<String>,
        bx_values: Vec<f64>,
        bz_values: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let cells = bz_values.iter().flat_map(|&z| bx_values.iter().map(|&x| f(x, z)).collect::<Vec<_>>()).collect();
        Self::new(quantity, bx_values, bz_values, cells)
    }

    /// Grid of one quantity from node records; missing nodes are undefined.
    pub fn from_records(q: Quantity, records: &[PointRecord]) -> Result<Self> {
        let mut xs: Vec<f64> = records.iter().map(|r| r.bx).collect();
        let mut zs: Vec<f64> = records.iter().map(|r| r.bz).collect();
        for v in [&mut xs, &mut zs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut cells = vec![f64::NAN; xs.len() * zs.len()];
        for r in records {
            let ix = xs.partition_point(|&x| x < r.bx);
            let iz = zs.partition_point(|&z| z < r.bz);
            cells[iz * xs.len() + ix] = r.value(q).unwrap_or(f64::NAN);
        }
        Self::new(q.name(), xs, zs, cells)
    }

    /// Reads a sweep CSV of a single quantity.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        let mut quantity = String::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Parse { line: i + 1, message: format!("expected 7 fields, found {}", f.len()) });
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse { line: i + 1, message: format!("bad number {s:?}") });
            rows.push((num(f[0])?, num(f[1])?, num(f[3])?));
            quantity = f[2].to_string();
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut zs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut xs, &mut zs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut cells = vec![f64::NAN; xs.len() * zs.len()];
        for (x, z, v) in rows {
            cells[zs.partition_point(|&t| t < z) * xs.len() + xs.partition_point(|&t| t < x)] = v;
        }
        Self::new(quantity, xs, zs, cells)
    }

    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.cells[iz * self.bx_values.len() + ix]
    }

    fn axis_values(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.bx_values,
            Axis::Z => &self.bz_values,
        }
    }

    fn fixed_values(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.bz_values,
            Axis::Z => &self.bx_values,
        }
    }

    /// Values along `axis` with the other field at index `fixed`.
    pub fn line(&self, axis: Axis, fixed: usize) -> Vec<f64> {
        match axis {
            Axis::X => (0..self.bx_values.len()).map(|ix| self.get(ix, fixed)).collect(),
            Axis::Z => (0..self.bz_values.len()).map(|iz| self.get(fixed, iz)).collect(),
        }
    }
}

/// Finite-difference derivative of a line: central inside, one-sided at the edges.
pub fn line_derivative(x: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 || f.len() != n {
        return Err(Error::InvalidParams(format!("derivative needs at least 3 nodes, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (f[b] - f[a]) / (x[b] - x[a])
        })
        .collect())
}

pub fn derivative_scan(grid: &PhaseGrid, axis: Axis) -> Result<PhaseGrid> {
    let along = grid.axis_values(axis).to_vec();
    let n_fixed = grid.fixed_values(axis).len();
    let nx = grid.bx_values.len();
    let mut cells = vec![0.0; grid.cells.len()];
    for k in 0..n_fixed {
        let d = line_derivative(&along, &grid.line(axis, k))?;
        for (i, v) in d.into_iter().enumerate() {
            let idx = match axis {
                Axis::X => k * nx + i,
                Axis::Z => i * nx + k,
            };
            cells[idx] = v;
        }
    }
    PhaseGrid::new(
        format!("d({})/db{}", grid.quantity, axis.name()),
        grid.bx_values.clone(),
        grid.bz_values.clone(),
        cells,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    /// Value of the field held fixed on this scan line.
    pub fixed_field: f64,
    /// Field along the scan axis at the extremum.
    pub location: f64,
    pub derivative: f64,
    /// More than one node shares the maximum magnitude.
    pub flat: bool,
}

/// Per scan line, the node of largest `|derivative|`; ties go to the smaller field.
pub fn boundary_trace(derivative: &PhaseGrid, axis: Axis) -> Vec<BoundaryPoint> {
    let along = derivative.axis_values(axis);
    let fixed = derivative.fixed_values(axis);
    let mut out = Vec::new();
    for (k, &fixed_field) in fixed.iter().enumerate() {
        let line = derivative.line(axis, k);
        let Some((best, max)) = line
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                Some((_, m)) if v.abs() <= m => acc,
                _ => Some((i, v.abs())),
            })
        else {
            continue;
        };
        let tol = 1e-12 * max.max(1.0);
        let ties = line.iter().filter(|v| v.is_finite() && (v.abs() - max).abs() <= tol).count();
        out.push(BoundaryPoint { fixed_field, location: along[best], derivative: line[best], flat: ties > 1 });
    }
    out
}

const BOUNDARY_QUANTITIES: [Quantity; 5] =
    [Quantity::ExactMi, Quantity::MineMi, Quantity::MiceS0, Quantity::ExactS0, Quantity::MeanSz];

fn write_boundaries(config: &SweepConfig, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(BOUNDARY_HEADER);
    out.push('\n');
    for q in BOUNDARY_QUANTITIES {
        let file = quantity_path(&config.out_dir, q);
        if !config.quantities.contains(&q) || !file.exists() {
            continue;
        }
        let grid = PhaseGrid::read_csv(&file)?;
        for axis in [Axis::X, Axis::Z] {
            let Ok(d) = derivative_scan(&grid, axis) else { continue };
            for p in boundary_trace(&d, axis) {
                out.push_str(&format!(
                    "{q},{},{},{},{},{}\n",
                    axis.name(),
                    p.fixed_field,
                    p.location,
                    p.derivative,
                    if p.flat { "flat" } else { "" }
                ));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibilityScan {
    pub fixed_axis: Axis,
    pub fixed_value: f64,
    pub points: Vec<(f64, f64)>,
    /// Indices of interior local maxima.
    pub interior_maxima: Vec<usize>,
}

impl SusceptibilityScan {
    /// Largest χ on the scan, as `(field, χ)`.
    pub fn global_max(&self) -> Option<(f64, f64)> {
        self.points.iter().copied().filter(|p| p.1.is_finite()).fold(None, |acc, p| match acc {
            Some(a) if a.1 >= p.1 => Some(a),
            _ => Some(p),
        })
    }
}

/// `χ` along the free field with `fixed_axis` held at `fixed_value`; the
/// shift `delta` is applied to the scanned field.
pub fn susceptibility_scan(
    config: &SweepConfig,
    fixed_axis: Axis,
    fixed_value: f64,
    scan: &FieldRange,
    delta: f64,
) -> Result<SusceptibilityScan> {
    let fields = scan.values();
    let points = fields
        .par_iter()
        .map(|&f| {
            let (bx, bz, shift) = match fixed_axis {
                Axis::X => (fixed_value, f, Axis::Z),
                Axis::Z => (f, fixed_value, Axis::X),
            };
            let params = ModelParams::new(config.n_sites, bx, bz)?;
            let opts = config.solver.with_seed(seeds::derive(seeds::for_node(config.seed, bx, bz), 0));
            let psi = ground_state(&params, &opts)?.state;
            Ok((f, shifted_susceptibility(&params, &psi, shift, delta, &opts)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let interior_maxima = (1..points.len().saturating_sub(1))
        .filter(|&i| points[i].1 > points[i - 1].1 && points[i].1 >= points[i + 1].1)
        .collect();
    Ok(SusceptibilityScan { fixed_axis, fixed_value, points, interior_maxima })
}

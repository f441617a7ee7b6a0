use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{align, GridSpec};
use super::scenario::{simulate_scenario_with, TrajectoryRecord, REFERENCE_TOLERANCE};
use crate::error::{Error, Result};
use crate::ode_solver::SolverSettings;
use crate::parallel;
use crate::power_system::ReducedSystem;

const MAGIC: &[u8; 4] = b"SWPT";
const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.csv";
const META: &str = "database.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Ok,
    Failed,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "dP7")]
    pub dp7: f64,
    pub pre_hash: String,
    pub file: String,
    pub n_samples: usize,
    pub status: EntryStatus,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    hash: String,
    lattice: GridSpec,
    settings: SolverSettings,
}

/// Outcome of a generation pass.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub simulated: usize,
    pub reused: usize,
    pub failed: usize,
}

/// Trajectories over a `(dP7, t)` lattice, one binary file per disturbance
/// row plus a CSV manifest. Rows are simulated on demand; rows already on
/// disk with a matching content hash are reused.
#[derive(Debug)]
pub struct Database {
    root: PathBuf,
    system: ReducedSystem,
    lattice: GridSpec,
    settings: SolverSettings,
    hash: String,
    entries: BTreeMap<usize, ManifestEntry>,
    dp7: Vec<f64>,
    times: Vec<f64>,
}

impl Database {
    pub fn open(root: impl AsRef<Path>, system: &ReducedSystem, lattice: GridSpec) -> Result<Self> {
        Self::open_with(
            root,
            system,
            lattice,
            SolverSettings::with_tolerance(REFERENCE_TOLERANCE),
        )
    }

    pub fn open_with(
        root: impl AsRef<Path>,
        system: &ReducedSystem,
        lattice: GridSpec,
        settings: SolverSettings,
    ) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let hash = content_hash(system, &lattice, &settings)?;
        let mut db = Self {
            dp7: lattice.dp7_values(),
            times: lattice.time_values(),
            root,
            system: system.clone(),
            lattice,
            settings,
            hash,
            entries: BTreeMap::new(),
        };
        db.load_manifest()?;
        db.write_meta()?;
        Ok(db)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lattice(&self) -> GridSpec {
        self.lattice
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn system(&self) -> &ReducedSystem {
        &self.system
    }

    pub fn dp7_values(&self) -> &[f64] {
        &self.dp7
    }

    pub fn time_values(&self) -> &[f64] {
        &self.times
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &ManifestEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Lattice rows of the given disturbance values.
    pub fn rows_of(&self, dp7: &[f64]) -> Result<Vec<usize>> {
        align(dp7, &self.dp7, "dP7")
    }

    fn file_name(row: usize) -> String {
        format!("traj_{row:05}.bin")
    }

    /// Stored with the current hash. Failed rows count as settled: the
    /// simulation is deterministic and would fail again.
    fn is_current(&self, row: usize) -> bool {
        self.entries.get(&row).is_some_and(|e| {
            e.pre_hash == self.hash
                && (e.status == EntryStatus::Failed || self.root.join(&e.file).is_file())
        })
    }

    /// Simulates every listed row that is not already stored with the
    /// current hash. Scenario failures are recorded in the manifest and
    /// counted, not returned as errors.
    pub fn ensure_rows(&mut self, rows: &[usize]) -> Result<GenerationReport> {
        let mut report = GenerationReport::default();
        let mut todo = Vec::new();
        for &r in rows {
            if r >= self.dp7.len() {
                return Err(Error::Alignment(format!("row {r} outside the lattice")));
            }
            if self.is_current(r) {
                match self.entries[&r].status {
                    EntryStatus::Ok => report.reused += 1,
                    EntryStatus::Failed => report.failed += 1,
                }
            } else if !todo.contains(&r) {
                todo.push(r);
            }
        }
        if todo.is_empty() {
            return Ok(report);
        }
        info!("simulating {} trajectories into {}", todo.len(), self.root.display());
        let batch = 8 * parallel::threads();
        for chunk in todo.chunks(batch) {
            let results = parallel::par_map(chunk, |&r| {
                simulate_scenario_with(&self.system, self.dp7[r], &self.times, &self.settings)
            });
            for (&r, res) in chunk.iter().zip(results) {
                let file = Self::file_name(r);
                let entry = match res {
                    Ok(rec) => {
                        write_record(&self.root.join(&file), &rec)?;
                        report.simulated += 1;
                        ManifestEntry {
                            dp7: self.dp7[r],
                            pre_hash: self.hash.clone(),
                            file,
                            n_samples: rec.len(),
                            status: EntryStatus::Ok,
                        }
                    }
                    Err(e) => {
                        warn!("{e}");
                        report.failed += 1;
                        ManifestEntry {
                            dp7: self.dp7[r],
                            pre_hash: self.hash.clone(),
                            file,
                            n_samples: 0,
                            status: EntryStatus::Failed,
                        }
                    }
                };
                self.entries.insert(r, entry);
            }
            self.write_manifest()?;
        }
        Ok(report)
    }

    /// Loads one stored row, simulating it first if needed.
    pub fn record(&mut self, row: usize) -> Result<TrajectoryRecord> {
        self.ensure_rows(&[row])?;
        let e = &self.entries[&row];
        if e.status != EntryStatus::Ok {
            return Err(Error::Scenario {
                dp7: e.dp7,
                source: Box::new(Error::Config(
                    "scenario failed during generation; see the manifest".into(),
                )),
            });
        }
        read_record(&self.root.join(&e.file))
    }

    /// Loads all listed rows, simulating missing ones in parallel first.
    pub fn records(&mut self, rows: &[usize]) -> Result<Vec<TrajectoryRecord>> {
        self.ensure_rows(rows)?;
        rows.iter().map(|&r| self.record(r)).collect()
    }

    /// Removes the stored file of a row, as after an interrupted run.
    #[cfg(test)]
    fn drop_row_file(&self, row: usize) {
        fs::remove_file(self.root.join(Self::file_name(row))).unwrap();
    }

    fn load_manifest(&mut self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        if !path.exists() {
            return Ok(());
        }
        let mut rdr = csv::Reader::from_path(&path)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        for row in rdr.deserialize::<ManifestEntry>() {
            let entry = row.map_err(|e| Error::format(&path, e.to_string()))?;
            // Rows from a different lattice are not addressable; skip them.
            if let Ok(idx) = align(&[entry.dp7], &self.dp7, "dP7") {
                self.entries.insert(idx[0], entry);
            }
        }
        Ok(())
    }

    /// Rewrites the manifest. Rows that another process added since it was
    /// loaded are merged in first, so concurrent writers only duplicate work.
    fn write_manifest(&mut self) -> Result<()> {
        let mine = std::mem::take(&mut self.entries);
        self.load_manifest()?;
        self.entries.extend(mine);
        let path = self.root.join(MANIFEST);
        let tmp = self.root.join(format!("{MANIFEST}.{}.tmp", std::process::id()));
        {
            let mut w = csv::Writer::from_path(&tmp)
                .map_err(|e| Error::format(&tmp, e.to_string()))?;
            for e in self.entries.values() {
                w.serialize(e).map_err(|e| Error::format(&tmp, e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn write_meta(&self) -> Result<()> {
        let meta = Meta {
            format_version: FORMAT_VERSION,
            hash: self.hash.clone(),
            lattice: self.lattice,
            settings: self.settings,
        };
        let path = self.root.join(META);
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }
}

/// Simulates the whole lattice into `root`.
pub fn build_database(
    root: impl AsRef<Path>,
    system: &ReducedSystem,
    lattice: GridSpec,
) -> Result<(Database, GenerationReport)> {
    let mut db = Database::open(root, system, lattice)?;
    let rows: Vec<usize> = (0..lattice.n_trajectories).collect();
    let report = db.ensure_rows(&rows)?;
    Ok((db, report))
}

fn content_hash(system: &ReducedSystem, lattice: &GridSpec, settings: &SolverSettings) -> Result<String> {
    let mut h = Sha256::new();
    h.update(format!("swingpinn-trajectories-v{FORMAT_VERSION}\n"));
    h.update(system.config().canonical_json());
    h.update(system.fingerprint());
    h.update(serde_json::to_vec(lattice)?);
    h.update(serde_json::to_vec(settings)?);
    Ok(hex::encode(h.finalize()))
}

/// Writes a trajectory in the little-endian binary layout:
/// magic `SWPT`, `u32` version, `u32` state count, `u64` sample count,
/// `f64` dP7, then `x0`, the time column and the row-major state matrix.
pub fn write_record(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let tmp = path.with_extension(format!("bin.{}.tmp", std::process::id()));
    let n_states = rec.x0.len();
    {
        let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(&tmp, e));
        put(MAGIC)?;
        put(&FORMAT_VERSION.to_le_bytes())?;
        put(&(n_states as u32).to_le_bytes())?;
        put(&(rec.times.len() as u64).to_le_bytes())?;
        put(&rec.dp7.to_le_bytes())?;
        for v in rec.x0.iter().chain(&rec.times).chain(rec.states.iter()) {
            put(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_record(path: &Path) -> Result<TrajectoryRecord> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why);
    if buf.len() < 28 || &buf[..4] != MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_states = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    let dp7 = f64::from_le_bytes(buf[20..28].try_into().unwrap());
    let body = &buf[28..];
    let count = n_states + n + n * n_states;
    if body.len() != 8 * count {
        return Err(bad("truncated body"));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let x0 = vals[..n_states].to_vec();
    let times = vals[n_states..n_states + n].to_vec();
    let states = Array2::from_shape_vec((n, n_states), vals[n_states + n..].to_vec())
        .map_err(|e| bad(&e.to_string()))?;
    Ok(TrajectoryRecord {
        dp7,
        x0,
        times,
        states,
    })
}

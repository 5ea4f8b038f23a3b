//! Atomic output files, each with a `<file>.provenance.json` stamp.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spgan_core::io::write_atomic;
use spgan_core::volume::pgv1_paths;
use spgan_core::VoxelVolume;

use crate::error::{CliResult, Context};

pub const TOOL: &str = "spgan";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Stamp<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a [String],
    seed: Option<u64>,
    output: String,
}

/// Everything a command needs to label what it writes.
pub struct Run {
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub seed: Option<u64>,
}

impl Run {
    pub fn with_seed(&self, seed: u64) -> Run {
        Run {
            args: self.args.clone(),
            seed: Some(seed),
        }
    }

    fn stamp(&self, path: &Path) -> CliResult<()> {
        let mut command = vec![TOOL.to_string()];
        command.extend(self.args.iter().cloned());
        let stamp = Stamp {
            tool: TOOL,
            version: VERSION,
            command: &command,
            seed: self.seed,
            output: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        let mut json = serde_json::to_vec_pretty(&stamp).expect("stamp serializes");
        json.push(b'\n');
        write_atomic(&provenance_path(path), &json)
            .context(format!("writing provenance for {}", path.display()))
    }

    pub fn write(&self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        ensure_parent(path)?;
        write_atomic(path, bytes).context(format!("writing {}", path.display()))?;
        self.stamp(path)
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> CliResult<()> {
        let mut json = serde_json::to_vec_pretty(value).expect("report serializes");
        json.push(b'\n');
        self.write(path, &json)
    }

    /// Saves a PGV1 pair and stamps both halves.
    pub fn save_volume(&self, vol: &VoxelVolume, path: &Path) -> CliResult<()> {
        ensure_parent(path)?;
        vol.save(path)
            .context(format!("writing {}", path.display()))?;
        let (header, raw) = pgv1_paths(path);
        self.stamp(&header)?;
        self.stamp(&raw)
    }

    /// Stamps every unstamped file directly inside `dir` (e.g. a checkpoint
    /// written by library code).
    pub fn stamp_dir(&self, dir: &Path) -> CliResult<()> {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).context(format!("listing {}", dir.display()))? {
            let path = entry.context(format!("listing {}", dir.display()))?.path();
            let stamp = path.to_string_lossy().ends_with(".provenance.json");
            if path.is_file() && !stamp {
                files.push(path);
            }
        }
        files.sort();
        files.iter().try_for_each(|f| self.stamp(f))
    }
}

pub fn provenance_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".provenance.json");
    p.into()
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).context(format!("creating {}", dir.display()))?;
    }
    Ok(())
}

//! Command-line front end for the simulator: experiment sweeps across
//! schemes, dimming levels, reuse modes, and placement seeds; illuminance
//! maps of a finished run or an explicit LED selection; reference-scenario
//! scaffolding.
//!
//! Everything is deterministic given the seeds. Output files carry no
//! timestamps, so identical invocations produce byte-identical artifacts,
//! and every file is written atomically (temp sibling, then rename).

pub mod experiment;
pub mod map;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use vlc_core::scenario::Scenario;

// ---------------------------------------------------------------------------
// Error classification
// ---------------------------------------------------------------------------

/// Input the operator got wrong — bad flag values, an unreadable or invalid
/// scenario, an impossible plan. The binary reports these with its
/// invalid-input exit code, distinct from runs that failed.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid input: {}", self.0)
    }
}

impl std::error::Error for InvalidInput {}

/// Build an `anyhow` error that the binary will classify as invalid input.
pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InvalidInput(msg.into()))
}

/// Whether any link of the error chain is an [`InvalidInput`].
pub fn is_invalid_input(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<InvalidInput>().is_some())
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Write a file atomically: its bytes go to a temp sibling in the same
/// directory, which is then renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read, parse, and validate a scenario file.
pub fn load_scenario_file(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read scenario {}: {e}", path.display())))?;
    vlc_core::scenario::load_scenario(&text)
        .map_err(|e| invalid(format!("scenario {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

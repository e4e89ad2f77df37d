//! Scenario discovery: shipped scenarios plus an optional user directory.

use std::path::{Path, PathBuf};

use cca_core::sim::shipped::{shipped, SHIPPED};
use cca_core::sim::{load_scenario, Scenario, ScenarioError};

pub struct Entry {
    pub name: String,
    pub description: String,
    pub origin: String,
}

pub struct Listing {
    pub entries: Vec<Entry>,
    pub warnings: Vec<String>,
}

/// `*.toml` files directly inside `dir`, sorted by name.
fn user_files(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let read = std::fs::read_dir(dir).map_err(|e| format!("cannot read scenario directory {}: {e}", dir.display()))?;
    let mut files: Vec<PathBuf> = read
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    Ok(files)
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or_default().trim().to_string()
}

pub fn list(user_dir: Option<&Path>) -> Listing {
    let mut entries: Vec<Entry> = SHIPPED
        .iter()
        .map(|s| Entry {
            name: s.name.to_string(),
            description: shipped(s.name)
                .and_then(Result::ok)
                .map(|sc| first_line(&sc.description))
                .unwrap_or_default(),
            origin: "shipped".to_string(),
        })
        .collect();
    let mut warnings = Vec::new();
    if let Some(dir) = user_dir {
        match user_files(dir) {
            Ok(files) => {
                for file in files {
                    let stem = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
                    let description = match load_scenario(&file) {
                        Ok(sc) => first_line(&sc.description),
                        Err(e) => {
                            warnings.push(e.to_string());
                            "(invalid)".to_string()
                        }
                    };
                    entries.push(Entry {
                        name: stem,
                        description,
                        origin: file.display().to_string(),
                    });
                }
            }
            Err(e) => warnings.push(e),
        }
    }
    Listing { entries, warnings }
}

/// Resolves `name` as a path to a scenario file, then a shipped scenario,
/// then `<user_dir>/<name>.toml`.
pub fn resolve(name: &str, user_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let as_path = Path::new(name);
    if as_path.is_file() {
        return load_scenario(as_path);
    }
    if let Some(found) = shipped(name) {
        return found;
    }
    if let Some(dir) = user_dir {
        let candidate = dir.join(format!("{name}.toml"));
        if candidate.is_file() {
            return load_scenario(&candidate);
        }
    }
    Err(ScenarioError::Io {
        path: name.to_string(),
        message: "no shipped scenario, user scenario or file with that name (see `cca list`)".to_string(),
    })
}

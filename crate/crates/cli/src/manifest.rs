//! JSON experiment manifests: a list of named CLI invocations.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, ManifestArgs};
use crate::commands::OutputRoot;
use crate::{dispatch, is_divergence, UsageError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub description: String,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub name: String,
    /// Figure or table the run regenerates.
    #[serde(default)]
    pub figure: String,
    /// Arguments after the program name, e.g. `["solve", "--problem", "biomass", ...]`.
    pub args: Vec<String>,
    /// The run is expected to diverge (explicit methods on stiff problems).
    #[serde(default)]
    pub expect_divergence: bool,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("malformed manifest {}: {e}", path.display())).into())
    }

    /// Parses every run up front so a bad entry fails before anything executes.
    pub fn parse(&self) -> anyhow::Result<Vec<(&ManifestRun, Command)>> {
        self.runs
            .iter()
            .map(|run| {
                let cli = Cli::try_parse_from(std::iter::once("aderdec".to_string()).chain(run.args.iter().cloned()))
                    .map_err(|e| UsageError(format!("run `{}`: {}", run.name, e.render())))?;
                if matches!(cli.command, Command::Manifest(_)) {
                    return Err(UsageError(format!("run `{}`: manifests cannot nest", run.name)).into());
                }
                Ok((run, cli.command))
            })
            .collect()
    }
}

pub fn run(a: &ManifestArgs) -> anyhow::Result<()> {
    let manifest = Manifest::load(&a.path)?;
    let runs = manifest.parse()?;
    if a.check {
        eprintln!("{}: {} runs parse", a.path.display(), runs.len());
        return Ok(());
    }
    let root = OutputRoot {
        dir: Some(match &a.out_dir {
            Some(d) => d.clone(),
            None => a.path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        }),
        sidecar: true,
    };
    let filter = a.filter.as_deref();
    let mut failed = Vec::new();
    for (run, command) in runs {
        if filter.is_some_and(|f| !run.name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let result = dispatch(&command, &root);
        let secs = start.elapsed().as_secs_f64();
        match (result, run.expect_divergence) {
            (Ok(()), false) => eprintln!("{}: ok ({secs:.2}s)", run.name),
            (Err(e), true) if is_divergence(&e) => eprintln!("{}: diverged as expected ({secs:.2}s)", run.name),
            (Ok(()), true) => {
                eprintln!("{}: expected divergence but the run completed", run.name);
                failed.push(run.name.clone());
            }
            (Err(e), _) => {
                eprintln!("{}: failed: {e:#}", run.name);
                failed.push(run.name.clone());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        anyhow::bail!("{} manifest run(s) failed: {}", failed.len(), failed.join(", "))
    }
}

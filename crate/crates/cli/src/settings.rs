//! Seed, thread-cap, and format resolution: flags beat the config file,
//! which beats the environment, which beats built-in defaults.

use std::path::Path;

use anyhow::{bail, Context};

use crate::output::OutputFormat;

pub const SEED_ENV: &str = "STRATA_SEED";
pub const THREADS_ENV: &str = "STRATA_THREADS";

#[derive(Debug, Default, Clone, Copy)]
pub struct Settings {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<OutputFormat>,
}

/// Parses a flat `key=value` file. Recognized keys: seed, threads, format.
pub fn load_config(path: &Path) -> anyhow::Result<Settings> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut settings = Settings::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config {} line {}: expected key=value", path.display(), idx + 1);
        };
        let (key, value) = (key.trim(), value.trim());
        let parse_context = || format!("config {} line {}", path.display(), idx + 1);
        match key {
            "seed" => {
                settings.seed = Some(value.parse().with_context(parse_context)?);
            }
            "threads" => {
                settings.threads = Some(value.parse().with_context(parse_context)?);
            }
            "format" => {
                settings.format = Some(
                    value
                        .parse()
                        .map_err(anyhow::Error::msg)
                        .with_context(parse_context)?,
                );
            }
            other => bail!("{}: unknown key '{other}'", parse_context()),
        }
    }
    Ok(settings)
}

fn env_u64(name: &str) -> anyhow::Result<Option<u64>> {
    match std::env::var(name) {
        Err(_) => Ok(None),
        Ok(raw) => Ok(Some(
            raw.parse()
                .with_context(|| format!("environment variable {name}"))?,
        )),
    }
}

/// Applies the precedence chain to the global options.
pub fn resolve(
    flag_seed: Option<u64>,
    flag_threads: Option<usize>,
    flag_format: Option<OutputFormat>,
    config_path: Option<&Path>,
) -> anyhow::Result<Settings> {
    let config = match config_path {
        Some(path) => load_config(path)?,
        None => Settings::default(),
    };
    let env_seed = env_u64(SEED_ENV)?;
    let env_threads = env_u64(THREADS_ENV)?.map(|n| n as usize);
    Ok(Settings {
        seed: flag_seed.or(config.seed).or(env_seed),
        threads: flag_threads.or(config.threads).or(env_threads),
        format: flag_format.or(config.format),
    })
}

/// Seed of last resort for stochastic commands invoked without one; the
/// chosen value is always reported in the output.
pub fn generate_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ u64::from(std::process::id()).rotate_left(32)
}

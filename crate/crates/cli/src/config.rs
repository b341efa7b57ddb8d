//! Accelerator configuration lookup: built-in presets, a preset directory,
//! or an explicit TOML file.

use std::path::{Path, PathBuf};

use vsa_forge::sim::AccConfig;

use crate::CliError;

pub const CONFIG_DIR_ENV: &str = "VSA_FORGE_CONFIG_DIR";

fn looks_like_path(spec: &str) -> bool {
    spec.contains('/') || spec.contains(std::path::MAIN_SEPARATOR) || spec.ends_with(".toml")
}

/// Resolves `spec`:
///
/// * anything that looks like a path is read as a TOML file;
/// * a bare name is looked up as `$VSA_FORGE_CONFIG_DIR/<name>.toml` first,
///   then among the built-in presets `acc2`, `acc4`, `acc8`.
pub fn resolve(spec: &str) -> Result<AccConfig, CliError> {
    if looks_like_path(spec) {
        return load_file(Path::new(spec));
    }
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        let path = PathBuf::from(dir).join(format!("{spec}.toml"));
        if path.is_file() {
            return load_file(&path);
        }
    }
    AccConfig::by_name(spec).ok_or_else(|| CliError::UnknownConfig(spec.to_string()))
}

pub fn load_file(path: &Path) -> Result<AccConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile { path: path.to_owned(), source: e })?;
    let mut cfg: AccConfig =
        toml::from_str(&text).map_err(|e| CliError::ConfigParse { path: path.to_owned(), msg: e.to_string() })?;
    if cfg.name.is_empty() {
        cfg.name = path.file_stem().map_or_else(|| "custom".into(), |s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

/// Applies command-line overrides and validates the result.
pub fn apply(mut cfg: AccConfig, tiles_mask: Option<u64>, fold_width: Option<usize>) -> Result<AccConfig, CliError> {
    if let Some(m) = tiles_mask {
        cfg.active_tile_mask = Some(m);
    }
    if let Some(w) = fold_width {
        cfg.fold_width = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `0x`-prefixed hex, `0b`-prefixed binary, or decimal.
pub fn parse_mask(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let parsed = if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16)
    } else if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        u64::from_str_radix(b, 2)
    } else {
        t.parse()
    };
    parsed.map_err(|e| format!("bad tile mask `{s}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks() {
        assert_eq!(parse_mask("0x5").unwrap(), 5);
        assert_eq!(parse_mask("0b0110").unwrap(), 6);
        assert_eq!(parse_mask("12").unwrap(), 12);
        assert!(parse_mask("0xZZ").is_err());
    }

    #[test]
    fn presets_and_files() {
        assert_eq!(resolve("acc4").unwrap(), AccConfig::acc4());
        assert!(matches!(resolve("acc3"), Err(CliError::UnknownConfig(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mine.toml");
        let mut cfg = AccConfig::acc2();
        cfg.name = String::new();
        std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
        let back = resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(back.name, "mine");
        assert_eq!(back.tiles, 2);
    }
}

//! Plain `key = value` configuration files mapped onto `SPARSESCENE_*`
//! environment variables, so that flags beat the environment and the
//! environment beats the file.

use std::path::Path;

use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "SPARSESCENE_";
/// Variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SPARSESCENE_CONFIG";

/// Parse `key = value` lines; `#` starts a comment, blank lines are ignored,
/// values may be wrapped in double quotes.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = k.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Config(format!("line {}: bad key {key:?}", n + 1)));
        }
        let v = v.trim();
        let value = v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v);
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Environment variable for a flag or config key: `out-prefix` becomes `SPARSESCENE_OUT_PREFIX`.
pub fn env_key(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('-', "_"))
}

/// Pairs of (variable, value) from a config file that the environment does not already set.
pub fn config_overrides(path: impl AsRef<Path>, env: impl Fn(&str) -> Option<String>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(parse_key_values(&text)?
        .into_iter()
        .map(|(k, v)| (env_key(&k), v))
        .filter(|(k, _)| env(k).is_none())
        .collect())
}

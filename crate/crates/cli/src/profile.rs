//! Three-column `index re im` profile files.
//!
//! Blank lines and lines starting with `#` are skipped. Indices must be
//! distinct; sites not listed are zero.

use std::path::Path;

use dgl_core::{LatticeState, C64};

use crate::config::ConfigError;

pub fn parse_profile(text: &str, key: &str) -> Result<LatticeState, ConfigError> {
    let mut entries: Vec<(i64, C64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| ConfigError::invalid(key, format!("line {}: {what}", lineno + 1));
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(bad(&format!("expected 3 columns, found {}", cols.len())));
        }
        let n: i64 = cols[0]
            .parse()
            .map_err(|_| bad("index is not an integer"))?;
        let re: f64 = cols[1]
            .parse()
            .map_err(|_| bad("real part is not a number"))?;
        let im: f64 = cols[2]
            .parse()
            .map_err(|_| bad("imaginary part is not a number"))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(bad("value is not finite"));
        }
        entries.push((n, C64::new(re, im)));
    }
    if entries.is_empty() {
        return Err(ConfigError::invalid(key, "profile has no entries"));
    }
    entries.sort_by_key(|e| e.0);
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ConfigError::invalid(
            key,
            format!("index {} listed twice", w[0].0),
        ));
    }
    let lo = entries[0].0;
    let len = (entries[entries.len() - 1].0 - lo + 1) as usize;
    let mut values = vec![C64::new(0.0, 0.0); len];
    for (n, z) in entries {
        values[(n - lo) as usize] = z;
    }
    LatticeState::new(lo, values).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

/// Loads a profile, resolving `path` against `base`.
pub fn load_profile(base: &Path, path: &Path, key: &str) -> Result<LatticeState, ConfigError> {
    let full = base.join(path);
    let text = std::fs::read_to_string(&full)
        .map_err(|e| ConfigError::invalid(key, format!("cannot read {}: {e}", full.display())))?;
    parse_profile(&text, key)
}

/// Rescales to `‖·‖² = norm2`; a zero profile can only be rescaled to zero.
pub fn rescale(state: &LatticeState, norm2: f64, key: &str) -> Result<LatticeState, ConfigError> {
    let current = state.norm2();
    if current == 0.0 {
        return if norm2 == 0.0 {
            Ok(state.clone())
        } else {
            Err(ConfigError::invalid(key, "cannot rescale a zero profile"))
        };
    }
    Ok(state.scaled((norm2 / current).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sparse_profile() {
        let p = parse_profile("# n re im\n-1 0.5 0\n\n2 0 -1.5\n", "k").unwrap();
        assert_eq!(p.min_index(), -1);
        assert_eq!(p.max_index(), 2);
        assert_eq!(p.get(0), C64::new(0.0, 0.0));
        assert_eq!(p.get(2), C64::new(0.0, -1.5));
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        assert!(parse_profile("0 1 0\n0 2 0\n", "k").is_err());
        let err = parse_profile("0 1\n", "forcing.profile_file").unwrap_err();
        assert_eq!(err.key(), Some("forcing.profile_file"));
        assert!(parse_profile("# only comments\n", "k").is_err());
    }

    #[test]
    fn rescales() {
        let p = parse_profile("0 3 4\n", "k").unwrap();
        assert!((rescale(&p, 2.0, "k").unwrap().norm2() - 2.0).abs() < 1e-15);
    }
}

//! Flat `key = value` run configuration.
//!
//! `example`, `seed`, `out` and `plot` are run settings; every other key is
//! handed to the example as an override and checked there.

use std::ops::RangeInclusive;
use std::path::PathBuf;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub example: Option<String>,
    pub seeds: Option<RangeInclusive<u64>>,
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub overrides: Vec<(String, String)>,
}

/// `N` or `A..B` (inclusive), e.g. `1..20`.
pub fn parse_seeds(text: &str) -> Result<RangeInclusive<u64>, String> {
    let text = text.trim();
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("seed: expected N or A..B, got {text:?}"))
    };
    match text.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("seed range {text:?} is empty"));
            }
            Ok(a..=b)
        }
        None => {
            let s = num(text)?;
            Ok(s..=s)
        }
    }
}

pub fn split_pair(item: &str) -> Result<(String, String), String> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {item:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("missing key in {item:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            cfg.set(&k, &v).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "example" => self.example = Some(value.to_string()),
            "seed" => self.seeds = Some(parse_seeds(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "plot" => {
                self.plot = match value {
                    "true" | "1" | "on" | "yes" => true,
                    "false" | "0" | "off" | "no" => false,
                    _ => return Err(format!("plot: expected true or false, got {value:?}")),
                }
            }
            _ => self.overrides.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_settings_and_overrides() {
        let cfg = RunConfig::parse(
            "# sweep\nexample = affine-mimo\nseed = 1..3\nalpha = 5   # slower\n\nplot = true\nout=runs/a.csv\n",
        )
        .unwrap();
        assert_eq!(cfg.example.as_deref(), Some("affine-mimo"));
        assert_eq!(cfg.seeds, Some(1..=3));
        assert!(cfg.plot);
        assert_eq!(cfg.out, Some(PathBuf::from("runs/a.csv")));
        assert_eq!(cfg.overrides, vec![("alpha".to_string(), "5".to_string())]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(RunConfig::parse("alpha 5").unwrap_err().contains("line 1"));
        assert!(RunConfig::parse("= 5").is_err());
        assert!(RunConfig::parse("seed = x").is_err());
        assert!(RunConfig::parse("plot = maybe").is_err());
    }

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("7").unwrap(), 7..=7);
        assert_eq!(parse_seeds("2..5").unwrap(), 2..=5);
        assert_eq!(parse_seeds("2..=5").unwrap(), 2..=5);
        assert!(parse_seeds("5..2").is_err());
    }
}

//! `key = value` configuration files merged with command-line flags.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in a config file. They match the long flag names.
pub const KNOWN_KEYS: &[&str] = &[
    "out", "format", "seed", "clamp", "d", "k", "v", "w", "model", "n", "z", "restarts",
    "epsilon", "rounds-out", "endpoints", "lambda", "nu", "nu-a", "nu-b", "mu", "mu-a", "mu-b",
    "pl", "pl-a", "pl-b", "pc", "pc-a", "pc-b", "tb", "dt", "pp", "gamma", "nu-max", "points",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the config entry parsed as `T`.
    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{s}`")))
            })
            .transpose()
    }

    pub fn text(&self, key: &str, flag: Option<&str>) -> Option<String> {
        flag.map(str::to_string).or_else(|| self.raw(key).map(str::to_string))
    }

    /// Counts accept scientific notation such as `1e6`.
    pub fn count(&self, key: &str, flag: Option<&str>) -> Result<Option<u64>, CliError> {
        self.text(key, flag).map(|s| parse_count(key, &s)).transpose()
    }

    pub fn flag(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        Ok(self.get::<bool>(key, None)?.unwrap_or(false))
    }
}

pub fn parse_count(key: &str, s: &str) -> Result<u64, CliError> {
    let bad = || CliError::Usage(format!("`{key}`: `{s}` is not a non-negative integer"));
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| bad())?;
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(bad())
    }
}

/// Integer lists: `2,4,8`, inclusive ranges `2..8`, or a mix.
pub fn parse_usize_list(key: &str, s: &str) -> Result<Vec<usize>, CliError> {
    let bad = |part: &str| CliError::Usage(format!("`{key}`: cannot parse `{part}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad(part))?;
                let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad(part))?;
                if lo > hi {
                    return Err(bad(part));
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("`{key}`: empty list")));
    }
    Ok(out)
}

/// Float lists: `0.5,0.9`, or `lo..hi:n` for `n` evenly spaced points.
pub fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |part: &str| CliError::Usage(format!("`{key}`: cannot parse `{part}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, rest)) => {
                let (hi, n) = rest.split_once(':').ok_or_else(|| bad(part))?;
                let lo: f64 = lo.trim().parse().map_err(|_| bad(part))?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad(part))?;
                let n: usize = n.trim().parse().map_err(|_| bad(part))?;
                if n < 2 {
                    return Err(bad(part));
                }
                out.extend((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64));
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("`{key}`: empty list")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists() {
        assert_eq!(parse_usize_list("d", "2,4..6, 9").unwrap(), vec![2, 4, 5, 6, 9]);
        assert_eq!(parse_usize_list("d", "2..=3").unwrap(), vec![2, 3]);
        assert!(parse_usize_list("d", "8..2").is_err());
        assert!(parse_usize_list("d", "").is_err());
        assert_eq!(parse_f64_list("v", "0..1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_f64_list("v", "0.25").unwrap(), vec![0.25]);
        assert!(parse_f64_list("v", "0..1").is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("n", "1e6").unwrap(), 1_000_000);
        assert_eq!(parse_count("n", "42").unwrap(), 42);
        assert!(parse_count("n", "1.5").is_err());
        assert!(parse_count("n", "-3").is_err());
    }

    #[test]
    fn file_parsing_and_precedence() {
        let s = Settings::parse("# comment\nlambda = 2e5\nnu_a=3 # inline\n\n").unwrap();
        assert_eq!(s.get::<f64>("lambda", None).unwrap(), Some(2e5));
        assert_eq!(s.get::<f64>("lambda", Some(1.0)).unwrap(), Some(1.0));
        assert_eq!(s.get::<f64>("nu-a", None).unwrap(), Some(3.0));
        assert_eq!(s.get::<f64>("mu", None).unwrap(), None);
        assert!(Settings::parse("bogus = 1").is_err());
        assert!(Settings::parse("lambda 1").is_err());
        assert!(Settings::parse("lambda = x").unwrap().get::<f64>("lambda", None).is_err());
    }
}

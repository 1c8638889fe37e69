//! Run configuration: one TOML file per run (nested key-value tables), with
//! every CLI flag overriding the matching config key. Schema validation
//! reports field-level diagnostics without running anything.

use std::fs;
use std::path::Path;

use erglab_core::systems::{FiniteSystem, TorusMap};
use erglab_core::{FiniteSystem64, TorusMap64};

use crate::{CliError, CliResult};

pub const SUBCOMMANDS: &[&str] = &[
    "spectrum",
    "dominate",
    "block",
    "decompose",
    "disk",
    "oracle",
    "perturb",
    "sweep",
    "validate",
];

/// Required config keys per subcommand (after flag overrides are merged).
pub fn required_fields(sub: &str) -> Option<&'static [&'static str]> {
    Some(match sub {
        "spectrum" => &["system", "points", "n", "seed"],
        "dominate" => &["system", "index", "n", "m_max", "seed"],
        "block" => &["system", "eta", "index"],
        "decompose" => &["system", "n", "radius", "seed"],
        "disk" => &["system", "x", "r", "ell", "depth"],
        "oracle" => &["lemma", "count", "seed"],
        "perturb" => &["seed"],
        "sweep" => &["system", "param", "from", "to", "steps", "seed"],
        "validate" => &[],
        _ => return None,
    })
}

/// Merged parameter view: flag values first, then `[sub]` table keys, then
/// top-level keys of the config file.
pub struct Params {
    sub: String,
    table: toml::Table,
}

impl Params {
    pub fn load(config: Option<&Path>, sub: &str) -> CliResult<Self> {
        let table = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Schema(format!("cannot read config {}: {e}", path.display()))
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Schema(format!("config parse error: {e}")))?
            }
            None => toml::Table::new(),
        };
        Ok(Params {
            sub: sub.to_string(),
            table,
        })
    }

    fn lookup(&self, key: &str) -> Option<&toml::Value> {
        if let Some(toml::Value::Table(t)) = self.table.get(&self.sub) {
            if let Some(v) = t.get(key) {
                return Some(v);
            }
        }
        self.table.get(key)
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::Schema(format!(
            "missing field `{}.{key}` (set it in the config file or pass --{})",
            self.sub,
            key.replace('_', "-")
        ))
    }

    pub fn string(&self, key: &str, flag: Option<String>) -> CliResult<String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(CliError::Schema(format!(
                "field `{}.{key}` must be a string, got {v}",
                self.sub
            ))),
            None => Err(self.missing(key)),
        }
    }

    pub fn string_or(&self, key: &str, flag: Option<String>, default: &str) -> CliResult<String> {
        match self.string(key, flag) {
            Ok(v) => Ok(v),
            Err(CliError::Schema(msg)) if msg.starts_with("missing field") => {
                Ok(default.to_string())
            }
            Err(e) => Err(e),
        }
    }

    pub fn integer(&self, key: &str, flag: Option<u64>) -> CliResult<u64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(CliError::Schema(format!(
                "field `{}.{key}` must be a nonnegative integer, got {v}",
                self.sub
            ))),
            None => Err(self.missing(key)),
        }
    }

    pub fn integer_or(&self, key: &str, flag: Option<u64>, default: u64) -> CliResult<u64> {
        match self.integer(key, flag) {
            Ok(v) => Ok(v),
            Err(CliError::Schema(msg)) if msg.starts_with("missing field") => Ok(default),
            Err(e) => Err(e),
        }
    }

    pub fn real(&self, key: &str, flag: Option<f64>) -> CliResult<f64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(toml::Value::Float(x)) => Ok(*x),
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(CliError::Schema(format!(
                "field `{}.{key}` must be a number, got {v}",
                self.sub
            ))),
            None => Err(self.missing(key)),
        }
    }

    pub fn real_or(&self, key: &str, flag: Option<f64>, default: f64) -> CliResult<f64> {
        match self.real(key, flag) {
            Ok(v) => Ok(v),
            Err(CliError::Schema(msg)) if msg.starts_with("missing field") => Ok(default),
            Err(e) => Err(e),
        }
    }
}

/// Validate a config file without running: full field-level diagnostics.
/// Returns the diagnostic lines; any line marked `error:` means exit 2.
pub fn validate_config(path: &Path) -> (Vec<String>, bool) {
    let mut lines = Vec::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            lines.push(format!("error: cannot read {}: {e}", path.display()));
            return (lines, false);
        }
    };
    let table = match text.parse::<toml::Table>() {
        Ok(t) => t,
        Err(e) => {
            lines.push(format!("error: TOML parse failure: {e}"));
            return (lines, false);
        }
    };
    let sub = match table.get("subcommand") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(v) => {
            lines.push(format!("error: `subcommand` must be a string, got {v}"));
            return (lines, false);
        }
        None => {
            lines.push("error: missing field `subcommand`".to_string());
            return (lines, false);
        }
    };
    let Some(required) = required_fields(&sub) else {
        let nearest = SUBCOMMANDS
            .iter()
            .min_by_key(|c| levenshtein(c, &sub))
            .unwrap();
        lines.push(format!(
            "error: unknown subcommand `{sub}`; did you mean `{nearest}`? (valid: {})",
            SUBCOMMANDS.join(", ")
        ));
        return (lines, false);
    };
    let mut ok = true;
    let sub_table = match table.get(&sub) {
        Some(toml::Value::Table(t)) => Some(t),
        _ => None,
    };
    for key in required {
        let present =
            sub_table.map_or(false, |t| t.contains_key(*key)) || table.contains_key(*key);
        if present {
            lines.push(format!("ok: `{sub}.{key}` present"));
        } else {
            lines.push(format!("error: missing field `{sub}.{key}`"));
            ok = false;
        }
    }
    (lines, ok)
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, &cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            cur.push((prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

/// A resolved experiment system.
pub enum AnySystem {
    Torus(TorusMap64),
    Finite(FiniteSystem64),
}

/// Parse a system spec: a zoo name with optional colon-separated parameters
/// ("cat", "standard:1.5", "abc:0.9,0.4,0.7", "perturbed_cat:0.01"),
/// "file:PATH" for a serialized finite system, or "random:INDEX" for a
/// seeded fuzz instance.
pub fn resolve_system(spec: &str, seed: u64) -> CliResult<AnySystem> {
    let (head, tail) = match spec.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (spec, None),
    };
    match head {
        "file" => {
            let path = tail
                .ok_or_else(|| CliError::Schema("system `file:` needs a path".to_string()))?;
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Schema(format!("cannot read system file {path}: {e}"))
            })?;
            Ok(AnySystem::Finite(FiniteSystem::from_text(&text)?))
        }
        "random" => {
            let idx: u64 = tail
                .unwrap_or("0")
                .parse()
                .map_err(|_| CliError::Schema("system `random:` needs an integer index".into()))?;
            Ok(AnySystem::Finite(erglab_core::fuzz::random_finite_system(
                seed, idx,
            )))
        }
        name => {
            let params: Vec<f64> = match tail {
                Some(t) if !t.is_empty() => t
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            CliError::Schema(format!("bad parameter `{s}` in system spec"))
                        })
                    })
                    .collect::<CliResult<_>>()?,
                _ => Vec::new(),
            };
            Ok(AnySystem::Torus(TorusMap::from_zoo(name, &params)?))
        }
    }
}

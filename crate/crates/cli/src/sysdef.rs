//! Plain-text system definitions.
//!
//! ```text
//! # comment
//! name = working
//! n = 2
//! m = 1
//! T = 1
//! f0 = ["1+y^2", "0"]
//! f1 = ["0", "1"]
//! ```
//!
//! Optional keys: `x0`, `guard_radius`, `K` (alias of `intervals`) and any
//! solver setting by name.

use std::collections::BTreeMap;
use std::path::Path;

use ocp_core::dynamics::{AffineSystem, SystemError};
use ocp_core::expr::ParseError;
use ocp_core::field::ExprField;
use ocp_core::settings::Settings;
use ocp_core::systems;

#[derive(Debug, thiserror::Error)]
pub enum SysDefError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    Duplicate { line: usize, key: String },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("line {line}: '{key}' has {got} entries, expected {expected}")]
    Arity {
        line: usize,
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: '{key}': {source}")]
    Expr {
        line: usize,
        key: String,
        source: ParseError,
    },
    #[error("unknown built-in system '{0}' (known: {known})", known = systems::BUILTIN_NAMES.join(", "))]
    UnknownBuiltin(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// `builtin:NAME` or a path to a definition file.
pub fn load_system(spec: &str) -> Result<AffineSystem, SysDefError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return systems::builtin(name).ok_or_else(|| SysDefError::UnknownBuiltin(name.to_string()));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| SysDefError::Io {
        path: spec.to_string(),
        source,
    })?;
    parse_system(&text)
}

#[derive(Debug, Clone)]
enum Raw {
    Scalar(String),
    List(Vec<String>),
}

struct Entry {
    line: usize,
    value: Raw,
}

const SETTING_KEYS: [&str; 14] = [
    "intervals",
    "oversample",
    "flow_step",
    "shoot_tol",
    "dedup_tol",
    "seed_radius",
    "seed_count",
    "shoot_max_iter",
    "abn_tol",
    "rank_tol",
    "target_tol",
    "level_tol",
    "h_bracket",
    "mu_max",
];

fn known_key(key: &str) -> bool {
    matches!(
        key,
        "name" | "n" | "m" | "T" | "x0" | "guard_radius" | "K" | "f0"
    ) || SETTING_KEYS.contains(&key)
        || key
            .strip_prefix('f')
            .is_some_and(|d| !d.starts_with('0') && d.parse::<usize>().is_ok())
}

pub fn parse_system(text: &str) -> Result<AffineSystem, SysDefError> {
    let entries = parse_entries(text)?;
    let scalar = |key: &'static str| -> Result<Option<(usize, String)>, SysDefError> {
        match entries.get(key) {
            None => Ok(None),
            Some(Entry {
                line,
                value: Raw::Scalar(s),
            }) => Ok(Some((*line, s.clone()))),
            Some(Entry { line, .. }) => Err(SysDefError::Syntax {
                line: *line,
                message: format!("'{key}' must be a scalar"),
            }),
        }
    };
    let required =
        |key: &'static str| scalar(key)?.ok_or_else(|| SysDefError::Missing(key.to_string()));

    let (nl, n) = required("n")?;
    let n = parse_count(&n, nl, "n")?;
    let (ml, m) = required("m")?;
    let m = parse_count(&m, ml, "m")?;
    let (tl, t) = required("T")?;
    let horizon = parse_float(&t, tl, "T")?;
    let name = scalar("name")?.map_or_else(|| "system".to_string(), |(_, s)| s);

    let field = |key: String| -> Result<ExprField, SysDefError> {
        let entry = entries
            .get(key.as_str())
            .ok_or_else(|| SysDefError::Missing(key.clone()))?;
        let Raw::List(items) = &entry.value else {
            return Err(SysDefError::Syntax {
                line: entry.line,
                message: format!("'{key}' must be a bracketed list"),
            });
        };
        if items.len() != n {
            return Err(SysDefError::Arity {
                line: entry.line,
                key,
                expected: n,
                got: items.len(),
            });
        }
        ExprField::parse(items, n).map_err(|source| SysDefError::Expr {
            line: entry.line,
            key,
            source,
        })
    };
    let drift = field("f0".to_string())?;
    let fields = (1..=m)
        .map(|i| field(format!("f{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    for (key, e) in &entries {
        if let Some(i) = key.strip_prefix('f').and_then(|d| d.parse::<usize>().ok()) {
            if i > m {
                return Err(SysDefError::UnknownKey {
                    line: e.line,
                    key: key.clone(),
                });
            }
        }
    }

    let mut sys = AffineSystem::new(name, drift, fields, horizon)?;
    if let Some(e) = entries.get("x0") {
        let Raw::List(items) = &e.value else {
            return Err(SysDefError::Syntax {
                line: e.line,
                message: "'x0' must be a bracketed list".into(),
            });
        };
        if items.len() != n {
            return Err(SysDefError::Arity {
                line: e.line,
                key: "x0".into(),
                expected: n,
                got: items.len(),
            });
        }
        let x0 = items
            .iter()
            .map(|s| parse_float(s, e.line, "x0"))
            .collect::<Result<Vec<_>, _>>()?;
        sys = sys.with_x0(x0.into())?;
    }
    if let Some((line, g)) = scalar("guard_radius")? {
        sys = sys.with_guard_radius(parse_float(&g, line, "guard_radius")?)?;
    }
    let settings = settings_from(&entries)?;
    Ok(sys.with_settings(settings))
}

fn settings_from(entries: &BTreeMap<String, Entry>) -> Result<Settings, SysDefError> {
    let mut s = Settings::default();
    for (key, e) in entries {
        let key = if key == "K" {
            "intervals"
        } else {
            key.as_str()
        };
        if !SETTING_KEYS.contains(&key) {
            continue;
        }
        let Raw::Scalar(v) = &e.value else {
            return Err(SysDefError::Syntax {
                line: e.line,
                message: format!("'{key}' must be a scalar"),
            });
        };
        let line = e.line;
        match key {
            "intervals" => s.intervals = parse_count(v, line, key)?,
            "oversample" => s.oversample = parse_count(v, line, key)?,
            "seed_count" => s.seed_count = parse_count(v, line, key)?,
            "shoot_max_iter" => s.shoot_max_iter = parse_count(v, line, key)?,
            "flow_step" => s.flow_step = parse_positive(v, line, key)?,
            "shoot_tol" => s.shoot_tol = parse_positive(v, line, key)?,
            "dedup_tol" => s.dedup_tol = parse_positive(v, line, key)?,
            "seed_radius" => s.seed_radius = parse_positive(v, line, key)?,
            "abn_tol" => s.abn_tol = parse_positive(v, line, key)?,
            "rank_tol" => s.rank_tol = parse_positive(v, line, key)?,
            "target_tol" => s.target_tol = parse_positive(v, line, key)?,
            "level_tol" => s.level_tol = parse_positive(v, line, key)?,
            "h_bracket" => s.h_bracket = parse_positive(v, line, key)?,
            "mu_max" => s.mu_max = parse_positive(v, line, key)?,
            _ => unreachable!("key list and match agree"),
        }
    }
    Ok(s)
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>, SysDefError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(SysDefError::Syntax {
                line,
                message: format!("expected key = value, found '{content}'"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(SysDefError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        if !known_key(key) {
            return Err(SysDefError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        let value = value.trim();
        let value = if let Some(inner) = value.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return Err(SysDefError::Syntax {
                    line,
                    message: "unterminated list".into(),
                });
            };
            Raw::List(split_list(inner, line)?)
        } else {
            Raw::Scalar(unquote(value, line)?)
        };
        if out.insert(key.to_string(), Entry { line, value }).is_some() {
            return Err(SysDefError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(out)
}

/// Drop a `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Split on commas outside quotes and parentheses.
fn split_list(inner: &str, line: usize) -> Result<Vec<String>, SysDefError> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '(' if !quoted => depth += 1,
            ')' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                items.push(unquote(inner[start..i].trim(), line)?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if quoted {
        return Err(SysDefError::Syntax {
            line,
            message: "unterminated string".into(),
        });
    }
    items.push(unquote(inner[start..].trim(), line)?);
    Ok(items)
}

fn unquote(s: &str, line: usize) -> Result<String, SysDefError> {
    if let Some(rest) = s.strip_prefix('"') {
        return match rest.strip_suffix('"') {
            Some(body) if !body.contains('"') => Ok(body.to_string()),
            _ => Err(SysDefError::Syntax {
                line,
                message: format!("malformed string {s}"),
            }),
        };
    }
    if s.is_empty() {
        return Err(SysDefError::Syntax {
            line,
            message: "empty value".into(),
        });
    }
    Ok(s.to_string())
}

fn parse_float(s: &str, line: usize, key: &str) -> Result<f64, SysDefError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| SysDefError::Syntax {
            line,
            message: format!("'{key}': '{s}' is not a finite number"),
        })
}

fn parse_positive(s: &str, line: usize, key: &str) -> Result<f64, SysDefError> {
    let v = parse_float(s, line, key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(SysDefError::Syntax {
            line,
            message: format!("'{key}' must be positive, got {s}"),
        })
    }
}

fn parse_count(s: &str, line: usize, key: &str) -> Result<usize, SysDefError> {
    s.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| SysDefError::Syntax {
            line,
            message: format!("'{key}' must be a positive integer, got '{s}'"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKING: &str = "# working example\nname = working\nn = 2\nm = 1\nT = 1\nf0 = [\"1+y^2\", \"0\"]\nf1 = [0, 1]\n";

    #[test]
    fn loads_working_example() {
        let sys = parse_system(WORKING).unwrap();
        assert_eq!((sys.n(), sys.m(), sys.horizon()), (2, 1, 1.0));
        assert_eq!(sys.name, "working");
    }

    #[test]
    fn settings_overrides() {
        let sys = parse_system(&format!(
            "{WORKING}K = 16\nshoot_tol = 1e-8\nguard_radius = 50\nx0 = [0.5, 0]\n"
        ))
        .unwrap();
        assert_eq!(sys.settings.intervals, 16);
        assert_eq!(sys.settings.shoot_tol, 1e-8);
        assert_eq!(sys.guard_radius(), 50.0);
        assert_eq!(sys.x0()[0], 0.5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_system(&format!("{WORKING}colour = red\n")).unwrap_err();
        assert!(
            matches!(err, SysDefError::UnknownKey { line: 8, .. }),
            "{err}"
        );
        let err = parse_system("n = 2\nm = 1\nT = 1\nf0 = [0, 0]\nf1 = [1]\n").unwrap_err();
        assert!(
            matches!(
                err,
                SysDefError::Arity {
                    line: 5,
                    expected: 2,
                    got: 1,
                    ..
                }
            ),
            "{err}"
        );
        let err = parse_system("n = 2\nm 1\n").unwrap_err();
        assert!(matches!(err, SysDefError::Syntax { line: 2, .. }), "{err}");
        let err = parse_system("n = 2\nn = 3\n").unwrap_err();
        assert!(
            matches!(err, SysDefError::Duplicate { line: 2, .. }),
            "{err}"
        );
        let err = parse_system(&format!("{WORKING}f2 = [0, 1]\n")).unwrap_err();
        assert!(
            matches!(err, SysDefError::UnknownKey { line: 8, .. }),
            "{err}"
        );
        let err = parse_system("n = 2\nm = 1\nT = 1\nf0 = [\"1+\", 0]\nf1 = [0, 1]\n").unwrap_err();
        assert!(matches!(err, SysDefError::Expr { line: 4, .. }), "{err}");
    }

    #[test]
    fn missing_keys_and_builtins() {
        assert!(
            matches!(parse_system("n = 2\nm = 1\n").unwrap_err(), SysDefError::Missing(k) if k == "T")
        );
        assert_eq!(load_system("builtin:heisenberg").unwrap().n(), 3);
        assert!(matches!(
            load_system("builtin:nope").unwrap_err(),
            SysDefError::UnknownBuiltin(_)
        ));
    }

    #[test]
    fn commas_inside_parentheses_stay_together() {
        assert_eq!(
            split_list("\"a, b\", (1,2), 3", 1).unwrap(),
            vec!["a, b", "(1,2)", "3"]
        );
    }
}

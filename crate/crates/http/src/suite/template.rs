//! `{{name}}` substitution and dot-path lookup.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use regex::Regex;
use serde_json::Value;

static PLACEHOLDER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

pub type Variables = BTreeMap<String, Value>;

pub fn placeholders_in_str(text: &str) -> BTreeSet<String> {
    PLACEHOLDER
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

pub fn placeholders_in_value(value: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk(value, &mut |s| out.extend(placeholders_in_str(s)));
    out
}

fn walk(value: &Value, f: &mut impl FnMut(&str)) {
    match value {
        Value::String(s) => f(s),
        Value::Array(items) => items.iter().for_each(|v| walk(v, f)),
        Value::Object(map) => {
            for (k, v) in map {
                f(k);
                walk(v, f);
            }
        }
        _ => {}
    }
}

/// Name of the first variable in `text` that `vars` does not define.
pub fn first_unresolved(text: &str, vars: &Variables) -> Option<String> {
    placeholders_in_str(text)
        .into_iter()
        .find(|name| !vars.contains_key(name))
}

fn display(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Substitutes placeholders in a string. Fails with the variable name when
/// one is undefined.
pub fn render_str(text: &str, vars: &Variables) -> Result<String, String> {
    if let Some(missing) = first_unresolved(text, vars) {
        return Err(missing);
    }
    Ok(PLACEHOLDER
        .replace_all(text, |c: &regex::Captures<'_>| display(&vars[&c[1]]))
        .into_owned())
}

/// Substitutes placeholders throughout a JSON value. A string consisting of
/// a single placeholder takes the variable's JSON value as-is, so captured
/// numbers and booleans keep their type.
pub fn render_value(value: &Value, vars: &Variables) -> Result<Value, String> {
    Ok(match value {
        Value::String(s) => {
            if let Some(c) = PLACEHOLDER.captures(s) {
                if c.get(0).unwrap().as_str() == s {
                    return vars.get(&c[1]).cloned().ok_or_else(|| c[1].to_string());
                }
            }
            Value::String(render_str(s, vars)?)
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|v| render_value(v, vars))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => {
            let mut out = serde_json::Map::new();
            for (k, v) in map {
                out.insert(render_str(k, vars)?, render_value(v, vars)?);
            }
            Value::Object(out)
        }
        other => other.clone(),
    })
}

/// Looks up a dot-path such as `articles.0.slug`. Numeric segments index
/// arrays.
pub fn lookup<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    let mut cur = value;
    for segment in path.split('.').filter(|s| !s.is_empty()) {
        cur = match cur {
            Value::Object(map) => map.get(segment)?,
            Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn whole_placeholder_keeps_type() {
        let mut vars = Variables::new();
        vars.insert("n".into(), json!(3));
        vars.insert("u".into(), json!("bob"));
        assert_eq!(render_value(&json!("{{n}}"), &vars).unwrap(), json!(3));
        assert_eq!(
            render_value(&json!("celeb_{{u}}"), &vars).unwrap(),
            json!("celeb_bob")
        );
        assert_eq!(
            render_str("/x/{{missing}}", &vars),
            Err("missing".to_string())
        );
    }

    #[test]
    fn dot_paths_index_arrays() {
        let v = json!({"articles": [{"slug": "a"}, {"slug": "b"}]});
        assert_eq!(lookup(&v, "articles.1.slug"), Some(&json!("b")));
        assert_eq!(lookup(&v, "articles.2.slug"), None);
        assert_eq!(lookup(&v, "articles.x"), None);
    }
}

//! Lenient extraction of value lists and JSON objects from raw completions.

use indexmap::IndexSet;
use serde_json::Value;

use crate::model::MaskToken;

/// Byte index of the bracket closing the one at `open`, skipping string contents.
fn matching_close(text: &str, open: usize, open_ch: u8, close_ch: u8) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            _ if b == open_ch => depth += 1,
            _ if b == close_ch => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn json_array(raw: &str) -> Option<Vec<String>> {
    for (start, _) in raw.match_indices('[') {
        let Some(end) = matching_close(raw, start, b'[', b']') else {
            continue;
        };
        if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&raw[start..=end]) {
            return Some(items.iter().filter_map(scalar_to_string).collect());
        }
    }
    None
}

fn trim_item(s: &str) -> &str {
    s.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

fn bracket_list(raw: &str) -> Option<Vec<String>> {
    let start = raw.find('[')?;
    let end = start + raw[start..].find(']')?;
    Some(
        raw[start + 1..end]
            .split(',')
            .map(|s| trim_item(s).to_string())
            .collect(),
    )
}

fn strip_bullet(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .or_else(|| line.strip_prefix("• "))
    {
        return rest;
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest;
        }
    }
    line
}

fn lines(raw: &str) -> Vec<String> {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .map(|l| trim_item(strip_bullet(l)).trim_end_matches(',').to_string())
        .collect()
}

/// Extracts candidate values: a JSON array anywhere in `raw`, else a bracketed
/// comma list, else one value per non-empty line.
pub fn parse_value_list(raw: &str) -> Vec<String> {
    let items = json_array(raw)
        .or_else(|| bracket_list(raw))
        .unwrap_or_else(|| lines(raw));
    let unique: IndexSet<String> = items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && !MaskToken::any_in(s))
        .collect();
    unique.into_iter().collect()
}

/// The first balanced `{...}` substring that parses as a JSON object.
pub fn extract_json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in raw.match_indices('{') {
        let Some(end) = matching_close(raw, start, b'{', b'}') else {
            continue;
        };
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[start..=end]) {
            return Some(map);
        }
    }
    None
}

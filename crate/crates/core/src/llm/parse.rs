//! Tolerant extraction of code and structured data from model replies.
//!
//! Replies often wrap code in fences and surround JSON with prose, and the
//! JSON itself is frequently Python-flavoured (single quotes, `True`,
//! percentages). Structured extraction uses the last well-formed `{...}`
//! block in the reply.

use std::collections::BTreeMap;

use serde_json::{Map, Number, Value};

use crate::program::MotifType;

/// Tolerance on probability pairs summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 0.01;

/// Contents of triple-backtick fenced blocks, without the language tag.
pub fn fenced_blocks(reply: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(close) = after.find("```") else {
            break;
        };
        let inner = &after[..close];
        // language tag runs to the end of the opening line
        let body = match inner.find('\n') {
            Some(nl) if !inner[..nl].trim().contains(' ') => &inner[nl + 1..],
            _ => inner,
        };
        out.push(body.trim_matches('\n'));
        rest = &after[close + 3..];
    }
    out
}

/// Program text from a code reply: the longest fenced block, or the whole
/// reply when it has no fences.
pub fn extract_code(reply: &str) -> String {
    match fenced_blocks(reply).into_iter().max_by_key(|b| b.len()) {
        Some(block) => block.trim_end().to_string(),
        None => reply.trim().to_string(),
    }
}

/// A single call expression from a reply. Takes the first balanced
/// `function_name(...)` in the code; falls back to the code itself, so a call
/// to the wrong function still reaches the executor and yields feedback.
pub fn extract_call(reply: &str, function_name: &str) -> String {
    let code = extract_code(reply);
    let needle = format!("{function_name}(");
    let mut search = 0;
    while let Some(pos) = code[search..].find(&needle).map(|p| p + search) {
        let preceded_by_ident = code[..pos]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.');
        if !preceded_by_ident {
            if let Some(end) = balanced_end(&code[pos + needle.len() - 1..], '(', ')') {
                return code[pos..pos + needle.len() - 1 + end].to_string();
            }
        }
        search = pos + needle.len();
    }
    code.trim().to_string()
}

/// Byte length of the balanced group starting at `s[0] == open`, honouring
/// quoted strings.
fn balanced_end(s: &str, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            c if c == open => depth += 1,
            c if c == close => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + c.len_utf8());
                }
            }
            _ => {}
        }
    }
    None
}

/// Candidate `{...}` spans in order of appearance (outermost only).
fn brace_spans(reply: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while let Some(off) = reply[i..].find('{') {
        let start = i + off;
        match balanced_end(&reply[start..], '{', '}') {
            Some(len) => {
                spans.push((start, start + len));
                i = start + len;
            }
            None => i = start + 1,
        }
    }
    spans
}

/// Parses JSON or a Python-style literal (single quotes, `True`/`False`/`None`,
/// bare keys, trailing commas, `40%`).
pub fn parse_json_like(text: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str(text) {
        return Some(v);
    }
    serde_json::from_str(&pythonish_to_json(text)?).ok()
}

fn pythonish_to_json(text: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' | '\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let ch = *chars.get(i)?;
                    if ch == '\\' {
                        let next = *chars.get(i + 1)?;
                        match next {
                            '\'' | '"' | '\\' => s.push(next),
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            other => {
                                s.push('\\');
                                s.push(other);
                            }
                        }
                        i += 2;
                    } else if ch == c {
                        i += 1;
                        break;
                    } else {
                        s.push(ch);
                        i += 1;
                    }
                }
                out.push_str(&serde_json::to_string(&s).ok()?);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(',');
                }
                i += 1;
            }
            '(' => {
                out.push('[');
                i += 1;
            }
            ')' => {
                out.push(']');
                i += 1;
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '-' | '+')) {
                    i += 1;
                }
                let tok: String = chars[start..i].iter().collect();
                let v: f64 = tok.trim_start_matches('+').parse().ok()?;
                let mut v = v;
                if chars.get(i) == Some(&'%') {
                    v /= 100.0;
                    i += 1;
                }
                if v.fract() == 0.0 && v.abs() < 1e15 && !tok.contains('.') && !tok.contains('e') {
                    out.push_str(&format!("{}", v as i64));
                } else {
                    out.push_str(&Number::from_f64(v)?.to_string());
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match word.as_str() {
                    "True" | "true" => out.push_str("true"),
                    "False" | "false" => out.push_str("false"),
                    "None" | "null" => out.push_str("null"),
                    _ => out.push_str(&serde_json::to_string(&word).ok()?),
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    Some(out)
}

/// The last `{...}` block in the reply that parses to an object accepted by `f`.
pub fn last_object_where<T>(reply: &str, f: impl Fn(&Map<String, Value>) -> Option<T>) -> Option<T> {
    brace_spans(reply)
        .into_iter()
        .rev()
        .filter_map(|(a, b)| parse_json_like(&reply[a..b]))
        .find_map(|v| v.as_object().and_then(&f))
}

/// Text following the last `{...}` block (the model's explanation).
pub fn trailing_text(reply: &str) -> String {
    let end = brace_spans(reply).last().map_or(0, |s| s.1);
    reply[end..].trim().trim_start_matches("```").trim().to_string()
}

fn as_count(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// `{label: count}` with non-negative integer counts.
pub fn parse_counts(reply: &str) -> Option<BTreeMap<String, u32>> {
    last_object_where(reply, |m| {
        if m.is_empty() {
            return None;
        }
        m.iter().map(|(k, v)| Some((k.clone(), as_count(v)?))).collect()
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ListingVerdict {
    pub valid: bool,
    pub variable_names: Vec<String>,
}

/// `{'valid': 'yes'|'no', 'variable_names': [...]}`.
pub fn parse_listing_verdict(reply: &str) -> Option<ListingVerdict> {
    last_object_where(reply, |m| {
        let valid = match m.get("valid")? {
            Value::Bool(b) => *b,
            Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "yes" | "true" | "valid" => true,
                "no" | "false" | "invalid" => false,
                _ => return None,
            },
            _ => return None,
        };
        let variable_names = match m.get("variable_names") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(a)) => a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
            Some(Value::String(s)) if s.trim().is_empty() => Vec::new(),
            Some(Value::String(s)) => vec![s.clone()],
            Some(_) => return None,
        };
        Some(ListingVerdict { valid, variable_names })
    })
}

/// `{"1": "f(...)", "2": "f(...)"}` keyed by 1-based example order.
pub fn parse_call_map(reply: &str) -> Option<BTreeMap<usize, String>> {
    last_object_where(reply, |m| {
        if m.is_empty() {
            return None;
        }
        m.iter()
            .map(|(k, v)| {
                let idx: usize = k.trim().trim_start_matches("program").trim().parse().ok()?;
                let call = v.as_str()?.trim();
                (idx >= 1 && !call.is_empty()).then(|| (idx, call.to_string()))
            })
            .collect()
    })
}

/// A motif type named in a classification reply, matched case-insensitively.
pub fn parse_motif_type(reply: &str) -> Option<MotifType> {
    let text = extract_code(reply).to_ascii_lowercase();
    let whole = text.trim().trim_matches(|c: char| !c.is_alphanumeric() && c != '_');
    if let Ok(t) = whole.replace([' ', '-'], "_").parse() {
        return Some(t);
    }
    let tokens: Vec<&str> = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .collect();
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(next) = tokens.get(i + 1) {
            if let Ok(t) = format!("{tok}_{next}").parse() {
                return Some(t);
            }
        }
        if *tok != "letter" {
            if let Ok(t) = tok.parse() {
                return Some(t);
            }
        }
    }
    None
}

fn as_probability(v: &Value) -> Option<f64> {
    let p = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => {
            let s = s.trim();
            match s.strip_suffix('%') {
                Some(num) => num.trim().parse::<f64>().ok()? / 100.0,
                None => s.parse().ok()?,
            }
        }
        _ => return None,
    };
    p.is_finite().then_some(p)
}

/// Reads a complementary pair, accepting either fractions or percentages.
fn probability_pair(m: &Map<String, Value>, a: &str, b: &str) -> Option<(f64, f64)> {
    let get = |k: &str| {
        m.iter()
            .find(|(key, _)| key.trim().eq_ignore_ascii_case(k))
            .and_then(|(_, v)| as_probability(v))
    };
    let (mut pa, mut pb) = (get(a)?, get(b)?);
    if pa > 1.0 || pb > 1.0 {
        pa /= 100.0;
        pb /= 100.0;
    }
    let in_range = |p: f64| (0.0..=1.0).contains(&p);
    (in_range(pa) && in_range(pb) && (pa + pb - 1.0).abs() <= PROBABILITY_SUM_TOL).then_some((pa, pb))
}

/// `{"touch": X, "no_touch": 1-X}`.
pub fn parse_touch(reply: &str) -> Option<(f64, f64)> {
    last_object_where(reply, |m| probability_pair(m, "touch", "no_touch"))
}

/// `{label: {"correct": X, "incorrect": 1-X}, ...}`. Only entries with a valid
/// pair are returned; keys keep the reply's spelling.
pub fn parse_orientation(reply: &str) -> Option<BTreeMap<String, (f64, f64)>> {
    last_object_where(reply, |m| {
        let out: BTreeMap<String, (f64, f64)> = m
            .iter()
            .filter_map(|(k, v)| Some((k.clone(), probability_pair(v.as_object()?, "correct", "incorrect")?)))
            .collect();
        (!out.is_empty()).then_some(out)
    })
}

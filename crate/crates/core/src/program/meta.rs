use serde::{Deserialize, Serialize};

use super::{MotifType, ProgramError};

/// A generalized, callable program for one motif type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaProgram {
    pub source: String,
    pub function_name: String,
    pub motif_type: MotifType,
    /// Calls that recreated the validated example programs.
    #[serde(default)]
    pub example_calls: Vec<String>,
    /// Library entry ids of the motif programs it was validated against.
    #[serde(default)]
    pub validated_against: Vec<String>,
}

impl MetaProgram {
    /// Check the source defines exactly one top-level function whose
    /// documentation shows at least one example call.
    pub fn new(
        source: impl Into<String>,
        motif_type: MotifType,
        example_calls: Vec<String>,
        validated_against: Vec<String>,
    ) -> Result<Self, ProgramError> {
        let source = source.into();
        let function_name = single_function_name(&source)?;
        let doc = docstring(&source, &function_name)
            .ok_or_else(|| ProgramError::InvalidMeta(format!("`{function_name}` has no docstring")))?;
        if documented_calls(&doc, &function_name).is_empty() {
            return Err(ProgramError::InvalidMeta(format!(
                "docstring of `{function_name}` has no example call"
            )));
        }
        Ok(MetaProgram {
            source,
            function_name,
            motif_type,
            example_calls,
            validated_against,
        })
    }

    /// Example calls found in the documentation block.
    pub fn documented_calls(&self) -> Vec<String> {
        docstring(&self.source, &self.function_name)
            .map(|d| documented_calls(&d, &self.function_name))
            .unwrap_or_default()
    }
}

/// Names of all top-level `def` statements.
pub fn top_level_functions(source: &str) -> Vec<String> {
    source
        .lines()
        .filter_map(|line| line.strip_prefix("def "))
        .filter_map(|rest| {
            let name: String = rest
                .trim_start()
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            (!name.is_empty()).then_some(name)
        })
        .collect()
}

/// The name of the single top-level function defined in `source`.
pub fn single_function_name(source: &str) -> Result<String, ProgramError> {
    let mut names = top_level_functions(source);
    match names.len() {
        1 => Ok(names.remove(0)),
        0 => Err(ProgramError::InvalidMeta("no top-level function definition".into())),
        n => Err(ProgramError::InvalidMeta(format!(
            "expected exactly one top-level function, found {n}: {}",
            names.join(", ")
        ))),
    }
}

/// The first string literal statement in the body of `function_name`.
pub fn docstring(source: &str, function_name: &str) -> Option<String> {
    let header = format!("def {function_name}");
    let start = source.lines().position(|l| l.starts_with(&header))?;
    // skip the (possibly multi-line) signature
    let lines: Vec<&str> = source.lines().collect();
    let mut i = start;
    while i < lines.len() && !lines[i].trim_end().ends_with(':') {
        i += 1;
    }
    let body = lines.get(i + 1..)?.join("\n");
    let trimmed = body.trim_start();
    let quote = ["\"\"\"", "'''"].into_iter().find(|q| trimmed.starts_with(q))?;
    let rest = &trimmed[quote.len()..];
    let end = rest.find(quote)?;
    Some(rest[..end].to_string())
}

/// Copy of `source` whose docstring for `function_name` shows `call`, adding a
/// docstring when there is none. `None` if the function is not defined.
pub fn with_example_call(source: &str, function_name: &str, call: &str) -> Option<String> {
    let header = format!("def {function_name}");
    let lines: Vec<&str> = source.lines().collect();
    let start = lines.iter().position(|l| l.starts_with(&header))?;
    let mut sig_end = start;
    while sig_end < lines.len() && !lines[sig_end].trim_end().ends_with(':') {
        sig_end += 1;
    }
    let body = lines.get(sig_end + 1..)?;
    let first = body.iter().position(|l| !l.trim().is_empty())?;
    let first_line = body[first];
    let indent = &first_line[..first_line.len() - first_line.trim_start().len()];
    let example = format!("{indent}Example Call:\n{indent}{call}");
    let at = sig_end + 1 + first;
    let mut out: Vec<String> = lines[..at].iter().map(|l| l.to_string()).collect();
    let quote = ["\"\"\"", "'''"]
        .into_iter()
        .find(|q| first_line.trim_start().starts_with(q));
    match quote {
        Some(q) => {
            let after_open = &first_line.trim_start()[q.len()..];
            let close = if after_open.contains(q) {
                at
            } else {
                (at + 1..lines.len()).find(|&i| lines[i].contains(q))?
            };
            if close == at {
                let end = after_open.find(q)?;
                out.push(format!("{indent}{q}{}", after_open[..end].trim()));
                out.push(String::new());
                out.push(example);
                out.push(format!("{indent}{}", &after_open[end..]));
            } else {
                out.extend(lines[at..close].iter().map(|l| l.to_string()));
                let closing = lines[close];
                let cut = closing.find(q)?;
                let before = &closing[..cut];
                if !before.trim().is_empty() {
                    out.push(before.trim_end().to_string());
                }
                out.push(String::new());
                out.push(example);
                out.push(format!("{indent}{}", &closing[cut..]));
            }
            out.extend(lines[close + 1..].iter().map(|l| l.to_string()));
        }
        None => {
            out.push(format!("{indent}\"\"\""));
            out.push(example);
            out.push(format!("{indent}\"\"\""));
            out.extend(lines[at..].iter().map(|l| l.to_string()));
        }
    }
    let mut text = out.join("\n");
    if source.ends_with('\n') {
        text.push('\n');
    }
    Some(text)
}

/// Balanced `function_name(...)` call expressions inside `text`.
pub fn documented_calls(text: &str, function_name: &str) -> Vec<String> {
    let needle = format!("{function_name}(");
    let mut out = Vec::new();
    let mut search = 0;
    while let Some(pos) = text[search..].find(&needle) {
        let begin = search + pos;
        let prev = text[..begin].chars().next_back();
        search = begin + needle.len();
        if prev.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '.') {
            continue;
        }
        if let Some(end) = matching_paren(text, begin + needle.len() - 1) {
            out.push(text[begin..=end].to_string());
            search = end + 1;
        }
    }
    out
}

fn matching_paren(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, ch) in text[open..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' => quote = Some(ch),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::MotifKind;

    const DOCUMENTED: &str = r#"import random

def create_stack(label, num_objects, initial_position,
                 displacement_y, half_size, random_offset=None):
    """
    Create a stack.

    Example Call:
    objs = create_stack('plate', 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853])
    """
    objs = []
    return objs
"#;

    #[test]
    fn accepts_documented_single_function() {
        let m = MetaProgram::new(DOCUMENTED, MotifKind::Stack.into(), vec![], vec![]).unwrap();
        assert_eq!(m.function_name, "create_stack");
        assert_eq!(
            m.documented_calls(),
            vec!["create_stack('plate', 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853])"]
        );
    }

    #[test]
    fn rejects_missing_example_call() {
        let src = "def f(a):\n    \"\"\"Does things.\"\"\"\n    return []\n";
        assert!(matches!(
            MetaProgram::new(src, MotifKind::Row.into(), vec![], vec![]),
            Err(ProgramError::InvalidMeta(_))
        ));
    }

    #[test]
    fn rejects_two_functions() {
        let src = "def f():\n    '''f()'''\n    pass\n\ndef g():\n    pass\n";
        assert!(single_function_name(src).is_err());
        // nested helpers are fine
        let nested = "def f():\n    '''f()'''\n    def inner():\n        pass\n    return []\n";
        assert_eq!(single_function_name(nested).unwrap(), "f");
    }

    #[test]
    fn call_extraction_skips_prefixed_names() {
        let calls = documented_calls("my_f(1) and f(2, ')') then x.f(3)", "f");
        assert_eq!(calls, vec!["f(2, ')')"]);
    }

    #[test]
    fn example_call_is_inserted_into_docstrings() {
        let call = "f(1, 2)";
        let multi = "def f(a, b):\n    \"\"\"\n    Adds.\n    \"\"\"\n    return [a, b]\n";
        let single = "def f(a, b):\n    '''Adds.'''\n    return [a, b]\n";
        let bare = "import math\n\ndef f(a,\n      b):\n    return [a, b]\n";
        for src in [multi, single, bare] {
            let out = with_example_call(src, "f", call).unwrap();
            let m = MetaProgram::new(out.clone(), MotifKind::Row.into(), vec![], vec![]).unwrap();
            assert_eq!(m.documented_calls(), vec![call], "{out}");
            assert!(out.ends_with("    return [a, b]\n"), "{out}");
        }
        assert!(with_example_call(multi, "g", call).is_none());
    }
}

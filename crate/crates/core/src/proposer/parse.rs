//! Line-wise parsing of rubric statements out of backend output. Backends
//! are instructed to emit a fenced list; malformed lines are skipped with a
//! warning instead of failing the round.

/// Extracts one statement per line. The content of the first fenced code
/// block is used when present, otherwise the whole text. List markers and
/// numbering are stripped; lines that normalize to empty are dropped.
pub fn parse_statement_list(text: &str) -> Vec<String> {
    let body = fenced_block(text).unwrap_or(text);
    let mut statements = Vec::new();
    for line in body.lines() {
        let stripped = strip_list_marker(line.trim());
        if stripped.is_empty() {
            continue;
        }
        if crate::types::normalize_rubric_text(stripped).is_err() {
            log::warn!("skipping malformed rubric line: {line:?}");
            continue;
        }
        statements.push(stripped.to_string());
    }
    statements
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after_fence = &text[start + 3..];
    // Skip an optional language tag on the fence line.
    let body_start = after_fence.find('\n')? + 1;
    let body = &after_fence[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

fn strip_list_marker(line: &str) -> &str {
    if matches!(line, "-" | "*" | "•") {
        return "";
    }
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return rest.trim();
        }
    }
    // Numbered lists: "3. rule" or "3) rule".
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    line
}

//! Labeled-section plain text, the response format shared by every
//! text-producing backend.
//!
//! A section starts at a line `label:` (optionally decorated with markdown
//! `#` or `*`) whose normalized label is one of the caller's known labels.
//! Text after the colon is the section's inline value; following lines up to
//! the next known label are its items, with bullet markers removed. Lines
//! before the first label belong to no section.

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Section<'a> {
    pub label: &'static str,
    pub inline: Option<&'a str>,
    pub items: Vec<&'a str>,
}

/// Lowercase, with spaces and hyphens folded to underscores.
pub fn normalize_label(label: &str) -> String {
    label
        .trim()
        .trim_matches('*')
        .trim()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

fn match_label<'a>(line: &'a str, known: &[(&str, &'static str)]) -> Option<(&'static str, &'a str)> {
    let stripped = line.trim().trim_start_matches(['#', '*']).trim_start();
    let (label, rest) = stripped.split_once(':')?;
    let norm = normalize_label(label);
    known
        .iter()
        .find(|(alias, _)| *alias == norm)
        .map(|(_, canonical)| (*canonical, rest.trim().trim_start_matches('*').trim()))
}

/// Remove a leading bullet (`-`, `*`, `•`, `1.` or `1)`) and surrounding space.
pub fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return rest.trim();
        }
    }
    if t == "-" || t == "*" || t == "•" {
        return "";
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    t
}

/// Split `raw` into known sections. `known` maps normalized aliases to
/// canonical labels. Repeated labels produce repeated sections.
pub fn parse<'a>(raw: &'a str, known: &[(&str, &'static str)]) -> Vec<Section<'a>> {
    let mut out: Vec<Section<'a>> = Vec::new();
    for line in raw.lines() {
        if let Some((label, inline)) = match_label(line, known) {
            out.push(Section {
                label,
                inline: (!inline.is_empty()).then_some(inline),
                items: Vec::new(),
            });
        } else if let Some(current) = out.last_mut() {
            let item = strip_bullet(line);
            if !item.is_empty() {
                current.items.push(item);
            }
        }
    }
    out
}

/// Inline value split on `,`/`;` followed by the item lines, all trimmed.
pub fn list_values<'a>(section: &Section<'a>) -> Vec<&'a str> {
    section
        .inline
        .into_iter()
        .flat_map(|s| s.split([',', ';']))
        .map(str::trim)
        .chain(section.items.iter().copied())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Inline value if present, otherwise the item lines joined by spaces.
pub fn scalar_value(section: &Section<'_>) -> String {
    match section.inline {
        Some(v) => v.to_string(),
        None => section.items.join(" "),
    }
}

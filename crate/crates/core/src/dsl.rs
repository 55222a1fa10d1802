//! Pull tool calls out of model pseudocode without running any of it.
//!
//! Accepted statement shape:
//!
//! ```text
//! [ident =] surface_name ( [ident =] ident , [ident =] ["a", 'b', ...] [, [ident =] ident] )
//! ```
//!
//! The scan covers the whole message, fenced blocks and prose alike. The
//! first and third arguments are placeholders; the harness supplies the
//! image and the geometry itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{StructureLayout, TargetClass};
use crate::tools::{resolve_label, Effect, RegistryEntry, ToolId};

/// Upper bound on how far one call's argument list may stretch. Keeps
/// scanning linear on adversarial input.
const MAX_CALL_BYTES: usize = 8 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolId,
    pub targets: Vec<String>,
    /// Byte range of the call expression in the source.
    pub raw_span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub calls: Vec<ToolCall>,
    pub ignored_statements: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseReport {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    /// Drop all calls because the message also gave an answer.
    pub fn discard_calls_for_answer(&mut self) {
        if self.calls.is_empty() {
            return;
        }
        let span = (self.calls[0].raw_span.0, self.calls.last().unwrap().raw_span.1);
        self.diagnostics.push(Diagnostic {
            severity: Severity::Warning,
            message: format!("{} tool call(s) ignored because the message contains an ANSWER", self.calls.len()),
            span,
        });
        self.calls.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("the pseudocode has errors:\n{}", .0.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("\n"))]
    Diagnostics(Vec<Diagnostic>),
    #[error("UnknownTarget: {label:?} is not a valid {class} name; available: {available:?}{}", suggestion.as_ref().map(|s| format!("; did you mean {s:?}?")).unwrap_or_default())]
    UnknownTarget { label: String, class: TargetClass, available: Vec<String>, suggestion: Option<String> },
    #[error("TargetClassMismatch: {surface} works on {class}, which a {layout} image does not have")]
    ClassMismatch { surface: &'static str, class: TargetClass, layout: &'static str },
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    limit: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        (self.pos < self.limit).then(|| self.src[self.pos])
    }

    fn ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        self.ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.ws();
        let start = self.pos;
        if !matches!(self.peek(), Some(b) if is_ident_start(b)) {
            return None;
        }
        while matches!(self.peek(), Some(b) if is_ident(b)) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()
    }

    /// Single- or double-quoted string on one line, with backslash escapes.
    fn string(&mut self) -> Option<String> {
        self.ws();
        let q = self.peek().filter(|&b| b == b'"' || b == b'\'')?;
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            let b = self.peek()?;
            self.pos += 1;
            match b {
                b'\n' => return None,
                b'\\' => {
                    let e = self.peek()?;
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b't' => out.push(b'\t'),
                        other => out.push(other),
                    }
                }
                _ if b == q => break,
                _ => out.push(b),
            }
        }
        String::from_utf8(out).ok()
    }

    /// `[ident =] [ "a", "b" ]`
    fn string_list(&mut self) -> Option<Vec<String>> {
        let save = self.pos;
        if self.ident().is_some() && !self.eat(b'=') {
            self.pos = save;
        }
        if !self.eat(b'[') {
            return None;
        }
        let mut items = Vec::new();
        loop {
            if self.eat(b']') {
                return Some(items);
            }
            items.push(self.string()?);
            if self.eat(b',') {
                continue;
            }
            return self.eat(b']').then_some(items);
        }
    }

    /// `[ident =] ident`
    fn placeholder(&mut self) -> Option<()> {
        self.ident()?;
        let save = self.pos;
        if self.eat(b'=') && self.ident().is_none() {
            self.pos = save;
            return None;
        }
        Some(())
    }

    /// Everything after the opening parenthesis.
    fn arguments(&mut self) -> Option<Vec<String>> {
        self.placeholder()?;
        if !self.eat(b',') {
            return None;
        }
        let targets = self.string_list()?;
        if self.eat(b',') {
            // optional bbox placeholder, then an optional trailing comma
            if self.placeholder().is_some() {
                let save = self.pos;
                if !self.eat(b',') {
                    self.pos = save;
                }
            }
        }
        self.eat(b')').then_some(targets)
    }
}

/// Scan `source` for calls to registered tool names.
pub fn extract_calls(source: &str, registry: &[RegistryEntry]) -> ParseReport {
    let src = source.as_bytes();
    let mut report = ParseReport::default();
    let mut i = 0;
    while i < src.len() {
        let b = src[i];
        if !is_ident_start(b) || (i > 0 && is_ident(src[i - 1])) {
            i += 1;
            continue;
        }
        let start = i;
        while i < src.len() && is_ident(src[i]) {
            i += 1;
        }
        let name = &source[start..i];
        let mut c = Cursor { src, pos: i, limit: src.len().min(i + MAX_CALL_BYTES) };
        if !c.eat(b'(') {
            continue;
        }
        let args = c.arguments();
        let span = (start, c.pos);
        // `obj.name(...)` and `"name(...)"` are an attribute call and a
        // string, never a tool call
        let indirect = match start.checked_sub(1).map(|p| src[p]) {
            Some(b'.') => Some("call it directly, not as an attribute"),
            Some(b'"' | b'\'') => Some("a call inside a string literal is not run"),
            _ => None,
        };
        let entry = registry.iter().find(|e| e.surface_name == name).filter(|_| indirect.is_none());
        match (entry, args) {
            (Some(e), Some(targets)) => {
                if targets.is_empty() {
                    report.diagnostics.push(Diagnostic {
                        severity: Severity::Error,
                        message: format!("{name} was called with an empty target list"),
                        span,
                    });
                } else {
                    report.calls.push(ToolCall { tool: e.tool, targets, raw_span: span });
                }
                i = c.pos;
            }
            (Some(_), None) => report.diagnostics.push(Diagnostic {
                severity: Severity::Error,
                message: format!(
                    "could not read the arguments of {name}; write it as {name}(image, [\"target\", ...], bbox)"
                ),
                span: (start, i),
            }),
            (None, Some(_)) => {
                report.diagnostics.push(Diagnostic {
                    severity: Severity::Error,
                    message: if let Some(why) = indirect {
                        format!("{name}: {why}")
                    } else {
                        format!("{name} is not an available tool; use only the functions listed in the instructions")
                    },
                    span,
                });
                i = c.pos;
            }
            (None, None) => report.ignored_statements += 1,
        }
    }
    report
}

/// Check every call against `layout` and return them with targets rewritten
/// to the layout's own spelling.
pub fn validate_calls(report: &ParseReport, layout: &StructureLayout) -> Result<Vec<ToolCall>, DslError> {
    if report.has_errors() {
        return Err(DslError::Diagnostics(report.errors().cloned().collect()));
    }
    report
        .calls
        .iter()
        .map(|call| {
            let class = call.tool.target_class();
            let available = layout.targets(class).map_err(|_| DslError::ClassMismatch {
                surface: call.tool.surface_name(),
                class,
                layout: layout.kind_name(),
            })?;
            let targets = call
                .targets
                .iter()
                .map(|t| {
                    resolve_label(&available, t).map(|e| e.name.clone()).ok_or_else(|| DslError::UnknownTarget {
                        label: t.clone(),
                        class,
                        available: available.iter().map(|e| e.name.clone()).collect(),
                        suggestion: suggest(&available.iter().map(|e| e.name.as_str()).collect::<Vec<_>>(), t),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ToolCall { tool: call.tool, targets, raw_span: call.raw_span })
        })
        .collect()
}

// containment either way, case-insensitive; only a hint in the message
fn suggest(available: &[&str], label: &str) -> Option<String> {
    let l = label.trim().to_lowercase();
    if l.is_empty() {
        return None;
    }
    available
        .iter()
        .find(|a| {
            let a = a.to_lowercase();
            a.contains(&l) || l.contains(&a)
        })
        .map(|a| a.to_string())
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// One assignment statement in the prompt's call style.
pub fn render_call(call: &ToolCall) -> String {
    let placeholder = match call.tool.target_class() {
        TargetClass::Columns => "columns_bbox",
        TargetClass::Rows => "rows_bbox",
        TargetClass::BarsX => "x_values_bbox",
        TargetClass::BarsY => "y_values_bbox",
        TargetClass::Subplots => "subplots_bbox",
    };
    let list: Vec<String> = call.targets.iter().map(|t| quote(t)).collect();
    format!("image = {}(image, [{}], {placeholder})", call.tool.surface_name(), list.join(", "))
}

pub fn render_calls(calls: &[ToolCall]) -> String {
    calls.iter().map(render_call).collect::<Vec<_>>().join("\n")
}

/// Which tools a report would run, for logging.
pub fn summarize(calls: &[ToolCall]) -> String {
    calls
        .iter()
        .map(|c| {
            let verb = match c.tool.effect() {
                Effect::Highlight => "highlight",
                Effect::MaskKeep => "mask",
                Effect::Draw => "draw",
            };
            format!("{verb} {} {:?}", c.tool.target_class(), c.targets)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{NamedRegion, TableLayout};
    use crate::raster::Region;
    use crate::tools::tool_registry;
    use proptest::prelude::*;

    fn parse(s: &str) -> ParseReport {
        extract_calls(s, tool_registry())
    }

    fn table() -> StructureLayout {
        let r = Region::new(0, 0, 9, 9);
        StructureLayout::Table(TableLayout {
            table_region: r,
            columns: ["Team", "Country", "Wins"].iter().map(|n| NamedRegion::new(*n, r)).collect(),
            rows: vec![NamedRegion::new("row_1", r)],
            header_region: None,
        })
    }

    #[test]
    fn listing_form() {
        let rep = parse(r#"image = focus_on_columns_with_highlight(image, ["Team", "Wins"], columns_bbox)"#);
        assert_eq!(rep.calls.len(), 1);
        assert_eq!(rep.calls[0].tool, ToolId::HighlightColumns);
        assert_eq!(rep.calls[0].targets, ["Team", "Wins"]);
        assert!(rep.diagnostics.is_empty());
    }

    #[test]
    fn fenced_block_two_calls_in_order() {
        let src = "Let me look.\n```python\nimage_1 = focus_on_columns_with_mask(image, ['Team', 'Country', 'Wins'], columns_bbox)\nimage_2 = focus_on_rows_with_draw(image_1, [\"row_1\"], rows_bbox)\n```\n";
        let rep = parse(src);
        let tools: Vec<_> = rep.calls.iter().map(|c| c.tool).collect();
        assert_eq!(tools, [ToolId::MaskColumnsKeep, ToolId::DrawRows]);
        assert!(rep.calls[0].raw_span.1 <= rep.calls[1].raw_span.0);
        assert_eq!(&src[rep.calls[1].raw_span.0..rep.calls[1].raw_span.0 + 23], "focus_on_rows_with_draw");
    }

    #[test]
    fn lookalikes_never_call() {
        let rep = parse("image = focus_on_collumns_with_mask(image, [\"Team\"], bbox)\nx = my_focus_on_columns_with_mask(image, [\"Team\"])");
        assert!(rep.calls.is_empty());
        assert_eq!(rep.errors().count(), 2);
    }

    #[test]
    fn malformed_and_empty() {
        let rep = parse("focus_on_rows_with_draw(image, row_1)");
        assert!(rep.calls.is_empty() && rep.has_errors());
        let rep = parse("focus_on_rows_with_draw(image, [])");
        assert!(rep.calls.is_empty() && rep.has_errors());
        let rep = parse("print(image)\nlen(x)");
        assert_eq!(rep.ignored_statements, 2);
        assert!(!rep.has_errors());
    }

    #[test]
    fn keyword_list_and_escapes() {
        let rep = parse(r#"focus_on_columns_with_draw(image, columns_to_focus_on=["Say \"hi\"", 'it\'s'],)"#);
        assert_eq!(rep.calls[0].targets, ["Say \"hi\"", "it's"]);
    }

    #[test]
    fn validation_resolves_case() {
        let rep = parse(r#"focus_on_columns_with_mask(image, ["country", "Wins"], b)"#);
        let calls = validate_calls(&rep, &table()).unwrap();
        assert_eq!(calls[0].targets, ["Country", "Wins"]);
        let rep = parse(r#"focus_on_columns_with_mask(image, ["Nation"], b)"#);
        assert!(matches!(validate_calls(&rep, &table()), Err(DslError::UnknownTarget { .. })));
        let rep = parse(r#"focus_on_x_values_with_draw(image, ["UK"], b)"#);
        assert!(matches!(validate_calls(&rep, &table()), Err(DslError::ClassMismatch { .. })));
    }

    #[test]
    fn answer_discards_calls() {
        let mut rep = parse(r#"focus_on_columns_with_mask(image, ["Wins"], b)"#);
        rep.discard_calls_for_answer();
        assert!(rep.calls.is_empty());
        assert_eq!(rep.diagnostics[0].severity, Severity::Warning);
    }

    fn arb_call() -> impl Strategy<Value = ToolCall> {
        (0usize..15, proptest::collection::vec("[ -~]{1,12}", 1..4)).prop_map(|(i, targets)| ToolCall {
            tool: ToolId::ALL[i],
            targets,
            raw_span: (0, 0),
        })
    }

    proptest! {
        #[test]
        fn render_extract_fixed_point(calls in proptest::collection::vec(arb_call(), 0..5)) {
            let text = render_calls(&calls);
            let got = parse(&text);
            prop_assert!(got.diagnostics.is_empty());
            let stripped: Vec<_> = got.calls.iter().map(|c| (c.tool, c.targets.clone())).collect();
            let want: Vec<_> = calls.iter().map(|c| (c.tool, c.targets.clone())).collect();
            prop_assert_eq!(&stripped, &want);
            let again = render_calls(&got.calls);
            prop_assert_eq!(again, text);
        }

        #[test]
        fn arbitrary_text_is_safe(s in "\\PC{0,300}") {
            let rep = parse(&s);
            for c in &rep.calls {
                prop_assert!(c.raw_span.0 < c.raw_span.1 && c.raw_span.1 <= s.len());
            }
        }
    }
}

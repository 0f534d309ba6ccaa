//! Native line-oriented layout format, plus a mirrored JSON form.
//!
//! ```text
//! # comment
//! name=or_std
//! reconstruction=true
//! logic=a,b->f|00:0|01:1|10:1|11:1
//! cell <x_nm> <y_nm> <layer> <zone> <role>
//! ```
//!
//! `role` is one of `normal`, `input:<label>`, `output:<label>`, `fixed:+1`,
//! `fixed:-1`. A document whose first non-blank character is `{` is read as
//! JSON instead.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Cell, CellRole, ClockZone, Layout, LayoutError, Polarity, TruthRow, TruthTable};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown clock zone `{0}` (expected 0..3)")]
    UnknownClockZone(String),
    #[error("{0}")]
    Layout(LayoutError),
}

impl ParseError {
    fn syntax(line: usize, column: usize, msg: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }
}

/// Parses a native or JSON layout document.
pub fn parse_layout(text: &str) -> Result<Layout, ParseError> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str::<Layout>(text).map_err(|e| ParseError {
            line: e.line(),
            column: e.column(),
            kind: ParseErrorKind::Syntax(e.to_string()),
        });
    }

    let mut name: Option<String> = None;
    let mut reconstruction = false;
    let mut logic: Option<(usize, TruthTable)> = None;
    let mut cells = Vec::new();
    let mut cell_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let content = content.trim();

        if let Some(rest) = content.strip_prefix("cell") {
            if !rest.starts_with(char::is_whitespace) {
                return Err(ParseError::syntax(line_no, indent + 1, "expected `cell` record"));
            }
            cells.push(parse_cell(raw, line_no)?);
            cell_lines.push(line_no);
            continue;
        }

        let Some((key, value)) = content.split_once('=') else {
            return Err(ParseError::syntax(
                line_no,
                indent + 1,
                format!("expected `key=value` or `cell` record, found `{content}`"),
            ));
        };
        let value_col = indent + key.len() + 2;
        match key.trim() {
            "name" => name = Some(value.trim().to_string()),
            "reconstruction" => {
                reconstruction = match value.trim() {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(ParseError::syntax(
                            line_no,
                            value_col,
                            format!("expected true/false, found `{other}`"),
                        ))
                    }
                }
            }
            "logic" => {
                let table = parse_logic(value.trim()).map_err(|msg| {
                    ParseError::syntax(line_no, value_col, format!("bad logic spec: {msg}"))
                })?;
                logic = Some((line_no, table));
            }
            other => {
                return Err(ParseError::syntax(
                    line_no,
                    indent + 1,
                    format!("unknown header key `{other}`"),
                ))
            }
        }
    }

    let logic_line = logic.as_ref().map(|(l, _)| *l).unwrap_or(1);
    Layout::new(name.unwrap_or_default(), cells, logic.map(|(_, t)| t))
        .map(|l| l.with_reconstruction(reconstruction))
        .map_err(|e| {
            let line = match &e {
                LayoutError::DuplicatePosition { second, .. } => cell_lines[*second],
                LayoutError::DanglingLabel(_)
                | LayoutError::UnmappedInput(_)
                | LayoutError::LogicWithoutInputs => logic_line,
                LayoutError::DuplicateLabel(label) => cells_line_for_label(text, label),
                _ => text.lines().count().max(1),
            };
            ParseError {
                line,
                column: 1,
                kind: ParseErrorKind::Layout(e),
            }
        })
}

fn cells_line_for_label(text: &str, label: &str) -> usize {
    let needle_in = format!("input:{label}");
    let needle_out = format!("output:{label}");
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.contains(&needle_in) || l.contains(&needle_out))
        .map(|(i, _)| i + 1)
        .nth(1)
        .unwrap_or(1)
}

/// Splits a line into whitespace-separated tokens with 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch == '#' {
            break;
        }
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let end = line.find('#').unwrap_or(line.len());
        out.push((s + 1, &line[s..end]));
    }
    out
}

fn parse_cell(line: &str, line_no: usize) -> Result<Cell, ParseError> {
    let toks = tokens(line);
    if toks.len() != 6 {
        let col = toks.get(6).map(|t| t.0).unwrap_or(line.len() + 1);
        return Err(ParseError::syntax(
            line_no,
            col,
            format!(
                "cell record needs 5 fields (x y layer zone role), found {}",
                toks.len().saturating_sub(1)
            ),
        ));
    }
    let num = |(col, s): (usize, &str), what: &str| -> Result<f64, ParseError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ParseError::syntax(line_no, col, format!("invalid {what} `{s}`")))
    };
    let x = num(toks[1], "x coordinate")?;
    let y = num(toks[2], "y coordinate")?;
    let layer = toks[3]
        .1
        .parse::<u32>()
        .map_err(|_| ParseError::syntax(line_no, toks[3].0, format!("invalid layer `{}`", toks[3].1)))?;
    let zone = toks[4]
        .1
        .parse::<u8>()
        .ok()
        .and_then(ClockZone::new)
        .ok_or_else(|| ParseError {
            line: line_no,
            column: toks[4].0,
            kind: ParseErrorKind::UnknownClockZone(toks[4].1.to_string()),
        })?;
    let role = parse_role(toks[5].1)
        .map_err(|msg| ParseError::syntax(line_no, toks[5].0, msg))?;
    Ok(Cell::new(x, y, layer, zone, role))
}

fn parse_role(s: &str) -> Result<CellRole, String> {
    let valid_label = |l: &str| {
        !l.is_empty()
            && l.chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
    };
    match s {
        "normal" => Ok(CellRole::Normal),
        "fixed:+1" | "fixed:1" => Ok(CellRole::Fixed(Polarity::Pos)),
        "fixed:-1" => Ok(CellRole::Fixed(Polarity::Neg)),
        _ => {
            if let Some(l) = s.strip_prefix("input:") {
                valid_label(l)
                    .then(|| CellRole::Input(l.to_string()))
                    .ok_or_else(|| format!("invalid input label `{l}`"))
            } else if let Some(l) = s.strip_prefix("output:") {
                valid_label(l)
                    .then(|| CellRole::Output(l.to_string()))
                    .ok_or_else(|| format!("invalid output label `{l}`"))
            } else {
                Err(format!(
                    "unknown role `{s}` (expected normal, input:<label>, output:<label>, fixed:+1, fixed:-1)"
                ))
            }
        }
    }
}

/// `a,b->f,g|00:01|01:11|...`
fn parse_logic(spec: &str) -> Result<TruthTable, String> {
    let mut parts = spec.split('|');
    let head = parts.next().ok_or("empty logic spec")?;
    let (ins, outs) = head.split_once("->").ok_or("missing `->` in label header")?;
    let labels = |s: &str| -> Vec<String> {
        s.split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    };
    let inputs = labels(ins);
    let outputs = labels(outs);
    let bits = |s: &str| -> Result<Vec<bool>, String> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid bit `{other}`")),
            })
            .collect()
    };
    let mut rows = Vec::new();
    for row in parts {
        let (i, o) = row
            .split_once(':')
            .ok_or_else(|| format!("row `{row}` lacks `:`"))?;
        rows.push(TruthRow {
            inputs: bits(i)?,
            outputs: bits(o)?,
        });
    }
    TruthTable::new(inputs, outputs, rows).map_err(|e| e.to_string())
}

fn role_token(role: &CellRole) -> String {
    match role {
        CellRole::Normal => "normal".into(),
        CellRole::Input(l) => format!("input:{l}"),
        CellRole::Output(l) => format!("output:{l}"),
        CellRole::Fixed(Polarity::Pos) => "fixed:+1".into(),
        CellRole::Fixed(Polarity::Neg) => "fixed:-1".into(),
    }
}

fn logic_spec(t: &TruthTable) -> String {
    let mut s = format!("{}->{}", t.inputs().join(","), t.outputs().join(","));
    for r in t.rows() {
        s.push('|');
        s.push_str(&super::bits_to_string(&r.inputs));
        s.push(':');
        s.push_str(&super::bits_to_string(&r.outputs));
    }
    s
}

/// Writes the native format. Coordinates use the shortest representation
/// that parses back to the same `f64`.
pub fn serialize_layout(layout: &Layout) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name={}", layout.name());
    if layout.is_reconstruction() {
        out.push_str("reconstruction=true\n");
    }
    if let Some(t) = layout.expected_logic() {
        let _ = writeln!(out, "logic={}", logic_spec(t));
    }
    for c in layout.cells() {
        let _ = writeln!(
            out,
            "cell {} {} {} {} {}",
            c.x,
            c.y,
            c.layer,
            c.zone,
            role_token(&c.role)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIRE: &str = "\
# eight-cell wire, two cells per zone
name=wire
cell 0 0 0 0 input:in
cell 20 0 0 0 normal
cell 40 0 0 1 normal
cell 60 0 0 1 normal
cell 80 0 0 2 normal
cell 100 0 0 2 normal   # trailing comment
cell 120 0 0 3 normal
cell 140 0 0 3 output:out
logic=in->out|0:0|1:1
";

    #[test]
    fn parses_eight_cell_wire() {
        let l = parse_layout(WIRE).unwrap();
        assert_eq!(l.len(), 8);
        let zones: Vec<u8> = l.cells().iter().map(|c| c.zone.index()).collect();
        assert_eq!(zones, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(l.cells()[7].role, CellRole::Output("out".into()));
        assert!(l.expected_logic().unwrap().is_total());
    }

    #[test]
    fn empty_cell_list() {
        let err = parse_layout("name=nothing\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Layout(LayoutError::Empty));
        assert_eq!(err.kind.to_string(), "layout has no cells");
    }

    #[test]
    fn duplicate_position_reports_second_line() {
        let err = parse_layout("name=d\ncell 0 0 0 0 normal\ncell 0 0 0 1 normal\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(matches!(
            err.kind,
            ParseErrorKind::Layout(LayoutError::DuplicatePosition { .. })
        ));
    }

    #[test]
    fn unknown_zone_has_column() {
        let err = parse_layout("name=z\ncell 0 0 0 4 normal\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 12));
        assert_eq!(err.kind, ParseErrorKind::UnknownClockZone("4".into()));
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse_layout("name=z\ncell 0 zero 0 0 normal\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 8));
        let err = parse_layout("name=z\n  bogus line\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        let err = parse_layout("name=z\ncell 0 0 0 0 sideways\n").unwrap_err();
        assert_eq!(err.column, 14);
    }

    #[test]
    fn dangling_logic_label() {
        let err = parse_layout("name=d\nlogic=a->q|0:0|1:1\ncell 0 0 0 0 input:a\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(
            err.kind,
            ParseErrorKind::Layout(LayoutError::DanglingLabel("q".into()))
        );
    }

    #[test]
    fn single_fixed_cell_document() {
        let l = Layout::new(
            "one",
            vec![Cell::new(0.0, 0.0, 0, ClockZone::new(0).unwrap(), CellRole::Fixed(Polarity::Pos))],
            None,
        )
        .unwrap();
        let doc = serialize_layout(&l);
        let records: Vec<&str> = doc.lines().filter(|l| l.starts_with("cell")).collect();
        assert_eq!(records, vec!["cell 0 0 0 0 fixed:+1"]);
        assert_eq!(parse_layout(&doc).unwrap(), l);
    }

    #[test]
    fn json_mirror_is_accepted() {
        let l = parse_layout(WIRE).unwrap();
        let json = serde_json::to_string_pretty(&l).unwrap();
        assert_eq!(parse_layout(&json).unwrap(), l);
        // validation still applies to JSON input
        let bad = json.replace("\"zone\": 3", "\"zone\": 7");
        assert!(parse_layout(&bad).is_err());
    }
}

//! Text formats.
//!
//! Matrix: first line `n`, then `n` lines of `n` whitespace-separated
//! distances. Dendrogram: nested `(child,child,...):height` with leaves
//! `p1..pn`, e.g. `((p1,p2):1,(p3,p4):2):4`. In both, `#` starts a comment
//! that runs to the end of the line. Parse errors carry line and column.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Dendrogram, DendrogramNode, DistanceMatrix, MetricSpace, Space};

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Whitespace-separated tokens of `line` with their 1-based columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = line;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let start = rest.find(|c: char| !c.is_whitespace())?;
        let tail = &rest[start..];
        let len = tail.find(char::is_whitespace).unwrap_or(tail.len());
        let token = &tail[..len];
        let column = line[..offset + start].chars().count() + 1;
        offset += start + len;
        rest = &tail[len..];
        Some((column, token))
    })
}

pub fn parse_matrix(text: &str) -> Result<DistanceMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::format_at("empty matrix file", 1, 1))?;
    let mut header_tokens = tokens(header);
    let (col, tok) = header_tokens.next().expect("non-blank line has a token");
    let n: usize = tok
        .parse()
        .map_err(|_| Error::format_at(format!("expected point count, found `{tok}`"), line_no, col))?;
    if n == 0 {
        return Err(Error::format_at("point count must be at least 1", line_no, col));
    }
    if let Some((col, tok)) = header_tokens.next() {
        return Err(Error::format_at(
            format!("unexpected `{tok}` after point count"),
            line_no,
            col,
        ));
    }

    let mut data = Vec::with_capacity(n * n);
    let mut last_line = line_no;
    for row in 0..n {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| Error::format_at(format!("expected {n} rows, found {row}"), last_line + 1, 1))?;
        last_line = line_no;
        let mut count = 0;
        for (col, tok) in tokens(line) {
            count += 1;
            if count > n {
                return Err(Error::format_at(
                    format!("row {} has more than {n} entries", row + 1),
                    line_no,
                    col,
                ));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format_at(format!("`{tok}` is not a number"), line_no, col))?;
            if v.is_nan() || v.is_infinite() || v < 0.0 {
                return Err(Error::format_at(
                    format!("distance `{tok}` must be finite and non-negative"),
                    line_no,
                    col,
                ));
            }
            data.push(v);
        }
        if count < n {
            return Err(Error::format_at(
                format!("row {} has {count} entries, expected {n}", row + 1),
                line_no,
                line.chars().count() + 1,
            ));
        }
    }
    if let Some((line_no, line)) = lines.next() {
        let col = tokens(line).next().map_or(1, |(c, _)| c);
        return Err(Error::format_at(
            format!("unexpected data after {n} rows"),
            line_no,
            col,
        ));
    }
    DistanceMatrix::from_flat(n, data)
}

pub fn write_matrix(m: &DistanceMatrix) -> String {
    let n = m.len();
    let mut out = String::with_capacity(n * n * 8);
    writeln!(out, "{n}").unwrap();
    for i in 0..n {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c == '#' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::format_at(msg, self.line, self.column)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|&c| pred(c)) {
            s.push(c);
            self.bump();
        }
        s
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_trivia();
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.error(format!("expected `{want}`, found end of input"))),
        }
    }
}

/// Parses the parenthesized dendrogram format.
pub fn parse_dendrogram(text: &str) -> Result<Dendrogram> {
    let mut cur = Cursor {
        chars: text.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut nodes: Vec<DendrogramNode> = Vec::new();
    // open groups: child node indices collected so far
    let mut open: Vec<Vec<usize>> = Vec::new();
    let mut root = None;

    let root = loop {
        cur.skip_trivia();
        let (line, column) = (cur.line, cur.column);
        let finished = match cur.peek() {
            Some('(') => {
                cur.bump();
                open.push(Vec::new());
                continue;
            }
            Some('p') => {
                cur.bump();
                let digits = cur.take_while(|c| c.is_ascii_digit());
                let label: usize = digits.parse().ok().filter(|&v| v >= 1).ok_or_else(|| {
                    Error::format_at("leaf label must be `p` followed by a positive integer", line, column)
                })?;
                nodes.push(DendrogramNode::leaf(label - 1));
                nodes.len() - 1
            }
            Some(c) => return Err(cur.error(format!("expected `(` or a leaf `pN`, found `{c}`"))),
            None => return Err(cur.error("unexpected end of input")),
        };

        // close as many groups as the input allows
        let mut node = finished;
        loop {
            match open.last_mut() {
                None => {
                    cur.skip_trivia();
                    if let Some(c) = cur.peek() {
                        return Err(cur.error(format!("unexpected `{c}` after the root")));
                    }
                    root = Some(node);
                    break;
                }
                Some(children) => {
                    children.push(node);
                    cur.skip_trivia();
                    match cur.peek() {
                        Some(',') => {
                            cur.bump();
                            break;
                        }
                        Some(')') => {
                            cur.bump();
                            cur.expect(':')?;
                            cur.skip_trivia();
                            let (line, column) = (cur.line, cur.column);
                            let num = cur.take_while(|c| c.is_ascii_digit() || "+-.eE".contains(c));
                            let height: f64 = num.parse().map_err(|_| {
                                Error::format_at(format!("expected a height, found `{num}`"), line, column)
                            })?;
                            if !(height.is_finite() && height > 0.0) {
                                return Err(Error::format_at(
                                    "internal heights must be positive and finite",
                                    line,
                                    column,
                                ));
                            }
                            let children = open.pop().unwrap();
                            nodes.push(DendrogramNode::internal(height, children));
                            node = nodes.len() - 1;
                        }
                        Some(c) => return Err(cur.error(format!("expected `,` or `)`, found `{c}`"))),
                        None => return Err(cur.error("unclosed `(`")),
                    }
                }
            }
        }
        if let Some(r) = root {
            break r;
        }
    };
    Dendrogram::new(nodes, root).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(format!("malformed dendrogram: {message}")),
        other => other,
    })
}

pub fn write_dendrogram(d: &Dendrogram) -> String {
    fn emit(d: &Dendrogram, v: usize, out: &mut String) {
        let node = &d.nodes()[v];
        match node.point {
            Some(p) => write!(out, "p{}", p + 1).unwrap(),
            None => {
                out.push('(');
                for (i, &c) in node.children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    emit(d, c, out);
                }
                write!(out, "):{}", node.height).unwrap();
            }
        }
    }
    let mut out = String::new();
    emit(d, d.root(), &mut out);
    out.push('\n');
    out
}

/// Loads either format, sniffing the first significant character.
pub fn load_instance(path: &Path) -> Result<Space> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

pub(crate) fn parse_instance(text: &str) -> Result<Space> {
    let first = text
        .lines()
        .map(strip_comment)
        .find_map(|l| l.trim_start().chars().next());
    match first {
        Some('(') | Some('p') => parse_dendrogram(text).map(Space::Dendrogram),
        _ => parse_matrix(text).map(Space::Matrix),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const D4: &str = "# running example\n4\n0 1 4 4\n1 0 4 4\n4 4 0 2 # row 3\n4 4 2 0\n";

    #[test]
    fn matrix_parse_and_write() {
        let m = parse_matrix(D4).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.distance(0, 2), 4.0);
        assert_eq!(write_matrix(&m), "4\n0 1 4 4\n1 0 4 4\n4 4 0 2\n4 4 2 0\n");
        assert_eq!(parse_matrix(&write_matrix(&m)).unwrap(), m);
    }

    fn position(e: Error) -> (usize, usize) {
        match e {
            Error::Format { position: Some(p), .. } => (p.line, p.column),
            other => panic!("expected positioned format error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_errors_report_position() {
        assert_eq!(position(parse_matrix("2\n0 1\n1 x\n").unwrap_err()), (3, 3));
        assert_eq!(position(parse_matrix("2\n0 1\n1\n").unwrap_err()), (3, 2));
        assert_eq!(position(parse_matrix("2\n0 1 1\n1 0\n").unwrap_err()), (2, 5));
        assert_eq!(position(parse_matrix("2\n0 1\n").unwrap_err()), (3, 1));
        assert_eq!(position(parse_matrix("two\n").unwrap_err()), (1, 1));
        assert_eq!(position(parse_matrix("1\n  -3\n").unwrap_err()), (2, 3));
        assert_eq!(position(parse_matrix("1\n0\n0\n").unwrap_err()), (3, 1));
        assert_eq!(position(parse_matrix("1\nNaN\n").unwrap_err()), (2, 1));
    }

    #[test]
    fn dendrogram_parse_and_write() {
        let d = parse_dendrogram("((p1,p2):1,(p3,p4):2):4").unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.distance(0, 1), 1.0);
        assert_eq!(d.distance(2, 3), 2.0);
        assert_eq!(d.distance(0, 3), 4.0);
        assert_eq!(write_dendrogram(&d), "((p1,p2):1,(p3,p4):2):4\n");

        let spaced = parse_dendrogram("# comment\n( (p2 , p1):0.5,\n  p3 ):2.5\n").unwrap();
        assert_eq!(spaced.distance(0, 1), 0.5);
        assert_eq!(spaced.distance(2, 0), 2.5);

        let single = parse_dendrogram("p1").unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn dendrogram_errors_report_position() {
        assert_eq!(position(parse_dendrogram("((p1,p2):1,p3").unwrap_err()), (1, 14));
        assert_eq!(position(parse_dendrogram("(p1,p2)").unwrap_err()), (1, 8));
        assert_eq!(position(parse_dendrogram("(p1,\n q2):1").unwrap_err()), (2, 2));
        assert_eq!(position(parse_dendrogram("(p1,p2):x").unwrap_err()), (1, 9));
        assert_eq!(position(parse_dendrogram("(p1,p2):1 p3").unwrap_err()), (1, 11));
        assert_eq!(position(parse_dendrogram("(p0,p2):1").unwrap_err()), (1, 2));
        // structural problems have no single position
        assert!(parse_dendrogram("((p1,p2):3,p3):2").is_err());
        assert!(parse_dendrogram("(p1,p3):1").is_err());
        assert!(parse_dendrogram("((p1,p2):1):2").is_err());
    }

    #[test]
    fn sniffing() {
        assert!(matches!(parse_instance(D4).unwrap(), Space::Matrix(_)));
        assert!(matches!(
            parse_instance("# x\n(p1,p2):3").unwrap(),
            Space::Dendrogram(_)
        ));
    }
}

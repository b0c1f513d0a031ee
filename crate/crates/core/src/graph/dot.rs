//! Graphviz DOT rendering of an [`FsmGraph`], and a reader for the same
//! dialect so rendered graphs can be checked against their source.

use std::fmt::Write;

use thiserror::Error;

use super::{Edge, EdgeId, FsmGraph};

/// Renders `digraph <branch> { ... }` with one node statement per state and
/// one labeled edge statement per operation, both in declaration order.
/// Pruned edges get `style=dashed`, risky edges additionally `color=red`.
pub fn export_dot(g: &FsmGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", id(g.branch()));
    for node in g.nodes() {
        let _ = writeln!(out, "  {};", quote(node));
    }
    for e in g.edges() {
        let _ = write!(out, "  {} -> {} [label={}", quote(e.src()), quote(&e.dst), quote(e.op()));
        if e.pruned {
            out.push_str(", style=dashed");
        }
        if e.risky {
            out.push_str(", color=red");
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    out
}

fn id(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        quote(name)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("DOT parse error at token {position}: {message}")]
pub struct DotError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Id(String),
    Punct(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<Token>, DotError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let err = |tokens: &Vec<Token>, m: &str| DotError { position: tokens.len(), message: m.to_string() };
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '{' | '}' | '[' | ']' | ';' | ',' | '=' => {
                chars.next();
                tokens.push(Token::Punct(match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    ';' => ";",
                    ',' => ",",
                    _ => "=",
                }));
            }
            '-' => {
                chars.next();
                if chars.next() != Some('>') {
                    return Err(err(&tokens, "expected '->'"));
                }
                tokens.push(Token::Punct("->"));
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(err(&tokens, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('n') => s.push('\n'),
                            Some(other) => s.push(other),
                            None => return Err(err(&tokens, "unterminated string")),
                        },
                        Some(other) => s.push(other),
                    }
                }
                tokens.push(Token::Id(s));
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Id(s));
            }
            other => return Err(err(&tokens, &format!("unexpected character {other:?}"))),
        }
    }
    Ok(tokens)
}

/// Reads a graph written by [`export_dot`]. Edge costs are not part of the
/// dialect and come back as 1.
pub fn parse_dot(text: &str) -> Result<FsmGraph, DotError> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let fail = |pos: usize, m: &str| DotError { position: pos, message: m.to_string() };
    let ident = |pos: &mut usize| -> Result<String, DotError> {
        match tokens.get(*pos) {
            Some(Token::Id(s)) => {
                *pos += 1;
                Ok(s.clone())
            }
            _ => Err(fail(*pos, "expected identifier")),
        }
    };
    let punct = |pos: &mut usize, p: &str| -> Result<(), DotError> {
        match tokens.get(*pos) {
            Some(Token::Punct(q)) if *q == p => {
                *pos += 1;
                Ok(())
            }
            _ => Err(fail(*pos, &format!("expected '{p}'"))),
        }
    };

    if ident(&mut pos)? != "digraph" {
        return Err(fail(0, "expected 'digraph'"));
    }
    let branch = ident(&mut pos)?;
    punct(&mut pos, "{")?;
    let mut nodes: Vec<String> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    loop {
        if punct(&mut pos, "}").is_ok() {
            break;
        }
        let first = ident(&mut pos)?;
        if punct(&mut pos, "->").is_ok() {
            let dst = ident(&mut pos)?;
            let mut label = None;
            let (mut pruned, mut risky) = (false, false);
            if punct(&mut pos, "[").is_ok() {
                loop {
                    if punct(&mut pos, "]").is_ok() {
                        break;
                    }
                    let key = ident(&mut pos)?;
                    punct(&mut pos, "=")?;
                    let value = ident(&mut pos)?;
                    match key.as_str() {
                        "label" => label = Some(value),
                        "style" if value == "dashed" => pruned = true,
                        "color" if value == "red" => risky = true,
                        _ => {}
                    }
                    let _ = punct(&mut pos, ",");
                }
            }
            let op = label.ok_or_else(|| fail(pos, "edge without a label"))?;
            for n in [&first, &dst] {
                if !nodes.contains(n) {
                    nodes.push(n.clone());
                }
            }
            edges.push(Edge { id: EdgeId::new(first, op), dst, cost: 1.0, pruned, risky });
        } else if !nodes.contains(&first) {
            nodes.push(first);
        }
        punct(&mut pos, ";")?;
    }
    if pos != tokens.len() {
        return Err(fail(pos, "trailing input after closing brace"));
    }
    Ok(FsmGraph::from_parts(&branch, nodes, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::smsl::parse;

    fn hanoi() -> FsmGraph {
        FsmGraph::build(parse(corpus::HANOI).unwrap().branch("SB1").unwrap())
    }

    #[test]
    fn empty_graph() {
        let g = FsmGraph::build(&crate::smsl::StateBranch::new("B"));
        assert_eq!(export_dot(&g), "digraph B {\n}\n");
    }

    #[test]
    fn statement_counts() {
        let dot = export_dot(&hanoi());
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        let nodes = dot.lines().filter(|l| l.starts_with("  \"") && !l.contains("->")).count();
        assert_eq!((nodes, edges), (27, 78));
        assert!(dot.contains("  \"State_aaa\" -> \"State_baa\" [label=\"Op_1b\"];\n"));
    }

    #[test]
    fn pruned_and_risky_styles() {
        let mut g = hanoi();
        g.prune_edge(&EdgeId::new("State_aaa", "Op_1b")).unwrap();
        g.mark_risky(&EdgeId::new("State_aaa", "Op_1c"), true).unwrap();
        let dot = export_dot(&g);
        assert!(dot.contains("\"State_aaa\" -> \"State_baa\" [label=\"Op_1b\", style=dashed];"));
        assert!(dot.contains("\"State_aaa\" -> \"State_caa\" [label=\"Op_1c\", style=dashed, color=red];"));
    }

    #[test]
    fn reparse_matches() {
        let mut g = hanoi();
        g.mark_risky(&EdgeId::new("State_bca", "Op_2a"), true).unwrap();
        let back = parse_dot(&export_dot(&g)).unwrap();
        assert_eq!(back, g);
        let odd = FsmGraph::build(
            parse(r#"{"my branch": {"a \"q\"": {"go\\": "a \"q\""}}}"#).unwrap().branch("my branch").unwrap(),
        );
        assert_eq!(parse_dot(&export_dot(&odd)).unwrap(), odd);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_dot("graph x {}").is_err());
        assert!(parse_dot("digraph x { \"a\" -> \"b\"; }").is_err());
        assert!(parse_dot("digraph x { \"a\";").is_err());
    }
}

use std::collections::HashSet;

use super::{
    BranchHeader, Location, OrderedMap, Operations, ParseError, SmslDocument, StateBranch, Value,
    HEADER_KEY,
};

/// Parses SMSL text into a document.
///
/// Structural problems that need cross-referencing (dangling targets, bad
/// sub-branch references) are left to [`super::validate`]; this only rejects
/// malformed text, duplicate keys and values of the wrong kind.
pub fn parse(text: &str) -> Result<SmslDocument, ParseError> {
    let root = Reader::new(text).document()?;
    let entries = match root.kind {
        Kind::Object(entries) => entries,
        other => return Err(type_error(root.at, format!("document must be a mapping, found {}", other.describe()))),
    };

    let mut doc = SmslDocument::new();
    for entry in entries {
        if entry.key.starts_with('_') {
            continue;
        }
        let branch = branch(entry.key, entry.value)?;
        doc.branches.insert(branch.name.clone(), branch);
    }
    Ok(doc)
}

fn branch(name: String, node: Node) -> Result<StateBranch, ParseError> {
    let entries = match node.kind {
        Kind::Object(entries) => entries,
        other => {
            return Err(type_error(
                node.at,
                format!("branch {name:?} must be a mapping, found {}", other.describe()),
            ))
        }
    };
    let mut branch = StateBranch::new(name);
    for entry in entries {
        if entry.key.starts_with('_') {
            continue;
        }
        if entry.key == HEADER_KEY {
            branch.header = header(entry.value)?;
            continue;
        }
        let ops = operations(&entry.key, entry.value)?;
        branch.states.insert(entry.key, ops);
    }
    Ok(branch)
}

fn operations(state: &str, node: Node) -> Result<Operations, ParseError> {
    let entries = match node.kind {
        Kind::Object(entries) => entries,
        other => {
            return Err(type_error(
                node.at,
                format!("state {state:?} must be a mapping, found {}", other.describe()),
            ))
        }
    };
    let mut ops = Operations::new();
    for entry in entries {
        if entry.key.starts_with('_') {
            continue;
        }
        match entry.value.kind {
            Kind::String(target) => {
                ops.insert(entry.key, target);
            }
            other => {
                return Err(type_error(
                    entry.value.at,
                    format!(
                        "operation {:?} of state {state:?} must name a target state, found {}",
                        entry.key,
                        other.describe()
                    ),
                ))
            }
        }
    }
    Ok(ops)
}

fn header(node: Node) -> Result<BranchHeader, ParseError> {
    let entries = match node.kind {
        Kind::Object(entries) => entries,
        other => return Err(structure_error(node.at, format!("HEADER must be a mapping, found {}", other.describe()))),
    };
    let mut header = BranchHeader::default();
    for entry in entries {
        if entry.key.starts_with('_') {
            continue;
        }
        let at = entry.value.at;
        match entry.key.as_str() {
            "INITIAL" | "ACTIVATING" => {
                let Kind::String(state) = entry.value.kind else {
                    return Err(structure_error(at, format!("{} must be a state name", entry.key)));
                };
                if entry.key == "INITIAL" {
                    header.initial = Some(state);
                } else {
                    header.activating = Some(state);
                }
            }
            "NUM_FACTS" => {
                let Kind::Number(literal) = &entry.value.kind else {
                    return Err(type_error(at, format!("NUM_FACTS must be an integer, found {}", entry.value.kind.describe())));
                };
                let n = integer(literal).ok_or_else(|| type_error(at, format!("NUM_FACTS must be an integer, found {literal}")))?;
                if n <= 0 {
                    return Err(structure_error(at, format!("NUM_FACTS must be positive, found {n}")));
                }
                header.num_facts = Some(usize::try_from(n).map_err(|_| structure_error(at, "NUM_FACTS out of range"))?);
            }
            "SUB_SBS" => {
                let Kind::Object(links) = entry.value.kind else {
                    return Err(structure_error(at, "SUB_SBS must map branch names to fact indices"));
                };
                for link in links {
                    if link.key.starts_with('_') {
                        continue;
                    }
                    let index = match &link.value.kind {
                        Kind::Number(literal) => integer(literal).filter(|n| *n >= 0),
                        _ => None,
                    };
                    let index = index
                        .and_then(|n| usize::try_from(n).ok())
                        .ok_or_else(|| {
                            structure_error(
                                link.value.at,
                                format!("SUB_SBS entry {:?} must be a non-negative integer fact index", link.key),
                            )
                        })?;
                    header.sub_sbs.insert(link.key, index);
                }
            }
            _ => {
                header.extra.insert(entry.key, entry.value.into_value());
            }
        }
    }
    Ok(header)
}

fn integer(literal: &str) -> Option<i64> {
    literal.parse::<i64>().ok()
}

fn type_error(at: Location, message: impl Into<String>) -> ParseError {
    ParseError::Type { at, message: message.into() }
}

fn structure_error(at: Location, message: impl Into<String>) -> ParseError {
    ParseError::Structure { at, message: message.into() }
}

struct Node {
    at: Location,
    kind: Kind,
}

struct Entry {
    key: String,
    value: Node,
}

enum Kind {
    Null,
    Bool(bool),
    Number(String),
    String(String),
    Array(Vec<Node>),
    Object(Vec<Entry>),
}

impl Kind {
    fn describe(&self) -> &'static str {
        match self {
            Kind::Null => "null",
            Kind::Bool(_) => "a boolean",
            Kind::Number(_) => "a number",
            Kind::String(_) => "a string",
            Kind::Array(_) => "a list",
            Kind::Object(_) => "a mapping",
        }
    }
}

impl Node {
    /// Converts to a generic value, dropping underscore keys.
    fn into_value(self) -> Value {
        match self.kind {
            Kind::Null => Value::Null,
            Kind::Bool(b) => Value::Bool(b),
            Kind::Number(n) => Value::Number(n),
            Kind::String(s) => Value::String(s),
            Kind::Array(items) => Value::Array(items.into_iter().map(Node::into_value).collect()),
            Kind::Object(entries) => Value::Object(
                entries
                    .into_iter()
                    .filter(|e| !e.key.starts_with('_'))
                    .map(|e| (e.key, e.value.into_value()))
                    .collect::<OrderedMap<_>>(),
            ),
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        Reader { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn here(&self) -> Location {
        Location { line: self.line, column: self.column }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { at: self.here(), message: message.into() }
    }

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

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\n' | '\r')) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected '{want}', found '{}'", c.escape_debug()))),
            None => Err(self.error(format!("expected '{want}', found end of input"))),
        }
    }

    fn document(mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let node = self.value()?;
        self.skip_ws();
        if let Some(c) = self.peek() {
            return Err(self.error(format!("unexpected '{}' after document", c.escape_debug())));
        }
        Ok(node)
    }

    fn value(&mut self) -> Result<Node, ParseError> {
        let at = self.here();
        let kind = match self.peek() {
            Some('{') => self.object()?,
            Some('[') => self.array()?,
            Some('"') => Kind::String(self.string()?),
            Some('-' | '0'..='9') => Kind::Number(self.number()?),
            Some('t') => {
                self.keyword("true")?;
                Kind::Bool(true)
            }
            Some('f') => {
                self.keyword("false")?;
                Kind::Bool(false)
            }
            Some('n') => {
                self.keyword("null")?;
                Kind::Null
            }
            Some(c) => return Err(self.error(format!("unexpected '{}'", c.escape_debug()))),
            None => return Err(self.error("unexpected end of input")),
        };
        Ok(Node { at, kind })
    }

    fn keyword(&mut self, word: &str) -> Result<(), ParseError> {
        let at = self.here();
        for want in word.chars() {
            if self.peek() != Some(want) {
                return Err(ParseError::Syntax { at, message: format!("invalid literal, expected {word}") });
            }
            self.bump();
        }
        Ok(())
    }

    fn object(&mut self) -> Result<Kind, ParseError> {
        self.expect('{')?;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        self.skip_ws();
        if self.peek() == Some('}') {
            self.bump();
            return Ok(Kind::Object(entries));
        }
        loop {
            self.skip_ws();
            let key_at = self.here();
            if self.peek() != Some('"') {
                return Err(self.error("expected a quoted key"));
            }
            let key = self.string()?;
            if !seen.insert(key.clone()) {
                return Err(ParseError::Syntax { at: key_at, message: format!("duplicate key {key:?}") });
            }
            self.skip_ws();
            self.expect(':')?;
            self.skip_ws();
            let value = self.value()?;
            entries.push(Entry { key, value });
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some('}') => {
                    self.bump();
                    return Ok(Kind::Object(entries));
                }
                _ => return Err(self.error("expected ',' or '}'")),
            }
        }
    }

    fn array(&mut self) -> Result<Kind, ParseError> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(Kind::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {
                    self.bump();
                    return Ok(Kind::Array(items));
                }
                _ => return Err(self.error("expected ',' or ']'")),
            }
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated string")),
                Some('"') => {
                    self.bump();
                    return Ok(out);
                }
                Some('\\') => {
                    self.bump();
                    out.push(self.escape()?);
                }
                Some(c) if (c as u32) < 0x20 => {
                    return Err(self.error("control character in string"));
                }
                Some(c) => {
                    self.bump();
                    out.push(c);
                }
            }
        }
    }

    fn escape(&mut self) -> Result<char, ParseError> {
        let c = match self.bump() {
            Some('"') => '"',
            Some('\\') => '\\',
            Some('/') => '/',
            Some('b') => '\u{8}',
            Some('f') => '\u{c}',
            Some('n') => '\n',
            Some('r') => '\r',
            Some('t') => '\t',
            Some('u') => {
                let hi = self.hex4()?;
                if (0xD800..0xDC00).contains(&hi) {
                    if self.bump() != Some('\\') || self.bump() != Some('u') {
                        return Err(self.error("unpaired surrogate in \\u escape"));
                    }
                    let lo = self.hex4()?;
                    if !(0xDC00..0xE000).contains(&lo) {
                        return Err(self.error("invalid low surrogate in \\u escape"));
                    }
                    let code = 0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00);
                    return char::from_u32(code).ok_or_else(|| self.error("invalid \\u escape"));
                }
                return char::from_u32(hi).ok_or_else(|| self.error("invalid \\u escape"));
            }
            Some(other) => return Err(self.error(format!("invalid escape '\\{}'", other.escape_debug()))),
            None => return Err(self.error("unterminated string")),
        };
        Ok(c)
    }

    fn hex4(&mut self) -> Result<u32, ParseError> {
        let mut n = 0;
        for _ in 0..4 {
            let d = self
                .peek()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.error("expected four hex digits"))?;
            self.bump();
            n = n * 16 + d;
        }
        Ok(n)
    }

    fn number(&mut self) -> Result<String, ParseError> {
        let mut out = String::new();
        if self.peek() == Some('-') {
            out.push('-');
            self.bump();
        }
        match self.peek() {
            Some('0') => {
                out.push('0');
                self.bump();
            }
            Some('1'..='9') => self.digits(&mut out),
            _ => return Err(self.error("invalid number")),
        }
        if self.peek() == Some('.') {
            out.push('.');
            self.bump();
            if !matches!(self.peek(), Some('0'..='9')) {
                return Err(self.error("expected digits after decimal point"));
            }
            self.digits(&mut out);
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            out.push(e);
            self.bump();
            if let Some(s @ ('+' | '-')) = self.peek() {
                out.push(s);
                self.bump();
            }
            if !matches!(self.peek(), Some('0'..='9')) {
                return Err(self.error("expected exponent digits"));
            }
            self.digits(&mut out);
        }
        Ok(out)
    }

    fn digits(&mut self, out: &mut String) {
        while let Some(c @ '0'..='9') = self.peek() {
            out.push(c);
            self.bump();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn hanoi_branch_and_first_state() {
        let doc = parse(corpus::HANOI).unwrap();
        assert_eq!(doc.branch_names().collect::<Vec<_>>(), ["SB1"]);
        let sb1 = doc.branch("SB1").unwrap();
        assert_eq!(sb1.state_count(), 27);
        let ops = sb1.operations("State_aaa").unwrap();
        let ops: Vec<_> = ops.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(ops, [("Op_1b", "State_baa"), ("Op_1c", "State_caa")]);
    }

    #[test]
    fn empty_document() {
        assert!(parse("{}").unwrap().is_empty());
        assert!(parse("  {\n}\n").unwrap().is_empty());
    }

    #[test]
    fn underscore_keys_dropped() {
        let doc = parse(corpus::HIERARCHICAL).unwrap();
        assert_eq!(doc.branch_names().collect::<Vec<_>>(), ["SB1", "SB2"]);

        let doc = parse(
            r#"{"A": {"HEADER": {"_x": 1, "NUM_FACTS": 1}, "_hidden": {}, "S_0": {"_op": "S_1", "op": "S_1"}, "S_1": {}}}"#,
        )
        .unwrap();
        let a = doc.branch("A").unwrap();
        assert_eq!(a.state_names().collect::<Vec<_>>(), ["S_0", "S_1"]);
        assert_eq!(a.operations("S_0").unwrap().len(), 1);
        assert!(a.header.extra.is_empty());
    }

    #[test]
    fn hierarchical_header() {
        let doc = parse(corpus::HIERARCHICAL).unwrap();
        let sb1 = doc.branch("SB1").unwrap();
        assert_eq!(sb1.header.initial.as_deref(), Some("State000"));
        assert_eq!(sb1.header.num_facts, Some(3));
        assert_eq!(sb1.header.sub_sbs.get("SB2"), Some(&1));
        let sb2 = doc.branch("SB2").unwrap();
        assert_eq!(sb2.header.activating.as_deref(), Some("State1"));
        assert_eq!(sb2.operation_count(), 2);
    }

    #[test]
    fn duplicate_key_is_syntax_error() {
        let err = parse("{\n  \"A\": {\"S\": {}, \"S\": {}}\n}").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }), "{err}");
        assert_eq!(err.location(), Location { line: 2, column: 18 });
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("{\n  \"A\": {\n    \"S\": {,}\n  }\n}").unwrap_err();
        assert_eq!(err.location(), Location { line: 3, column: 11 });
        assert!(matches!(parse("{\"A\": {}"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("{\"A\": {}} x"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("{\"A\": {},}"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse(""), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("{\"A\": tru}"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn type_errors() {
        assert!(matches!(parse("[]"), Err(ParseError::Type { .. })));
        assert!(matches!(parse(r#"{"A": "x"}"#), Err(ParseError::Type { .. })));
        assert!(matches!(parse(r#"{"A": {"S": "T"}}"#), Err(ParseError::Type { .. })));
        assert!(matches!(parse(r#"{"A": {"S": {"op": 3}}}"#), Err(ParseError::Type { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"NUM_FACTS": "3"}}}"#), Err(ParseError::Type { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"NUM_FACTS": 2.5}}}"#), Err(ParseError::Type { .. })));
    }

    #[test]
    fn structure_errors() {
        assert!(matches!(parse(r#"{"A": {"HEADER": ""}}"#), Err(ParseError::Structure { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"NUM_FACTS": 0}}}"#), Err(ParseError::Structure { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"INITIAL": 1}}}"#), Err(ParseError::Structure { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"SUB_SBS": []}}}"#), Err(ParseError::Structure { .. })));
        assert!(matches!(parse(r#"{"A": {"HEADER": {"SUB_SBS": {"B": -1}}}}"#), Err(ParseError::Structure { .. })));
    }

    #[test]
    fn unknown_header_fields_kept() {
        let doc = parse(r#"{"A": {"HEADER": {"VERSION": [1, "x", null, true]}}}"#).unwrap();
        let extra = &doc.branch("A").unwrap().header.extra;
        assert_eq!(
            extra.get("VERSION"),
            Some(&Value::Array(vec![
                Value::Number("1".into()),
                Value::String("x".into()),
                Value::Null,
                Value::Bool(true)
            ]))
        );
    }

    #[test]
    fn string_escapes() {
        let doc = parse(r#"{"Aé\n": {"S\"q": {"o\\p": "S\"q"}, "😀": {}}}"#).unwrap();
        let a = doc.branch("A\u{e9}\n").unwrap();
        assert!(a.contains_state("S\"q"));
        assert!(a.contains_state("\u{1F600}"));
        assert!(matches!(parse(r#"{"\q": {}}"#), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse(r#"{"\ud83d": {}}"#), Err(ParseError::Syntax { .. })));
    }
}

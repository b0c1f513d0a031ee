use std::fmt::Write;

use super::{BranchHeader, OrderedMap, SmslDocument, Value, HEADER_KEY};

/// Emits canonical SMSL text: two-space indentation, LF line endings,
/// `HEADER` first in each branch, everything else in declaration order.
pub fn serialize(doc: &SmslDocument) -> String {
    let mut out = String::new();
    let branches: Vec<_> = doc
        .branches()
        .map(|b| {
            let mut fields: Vec<(String, Block)> = Vec::with_capacity(b.state_count() + 1);
            fields.push((HEADER_KEY.to_string(), header_block(&b.header)));
            for (state, ops) in b.states() {
                let ops = ops
                    .iter()
                    .map(|(op, target)| (op.clone(), Block::Inline(quote(target))))
                    .collect();
                fields.push((state.clone(), Block::Map(ops)));
            }
            (b.name().to_string(), Block::Map(fields))
        })
        .collect();
    write_block(&mut out, &Block::Map(branches), 0);
    out.push('\n');
    out
}

enum Block {
    Inline(String),
    Map(Vec<(String, Block)>),
    List(Vec<Block>),
}

fn header_block(h: &BranchHeader) -> Block {
    let mut fields = Vec::new();
    if let Some(initial) = &h.initial {
        fields.push(("INITIAL".to_string(), Block::Inline(quote(initial))));
    }
    if let Some(activating) = &h.activating {
        fields.push(("ACTIVATING".to_string(), Block::Inline(quote(activating))));
    }
    if let Some(n) = h.num_facts {
        fields.push(("NUM_FACTS".to_string(), Block::Inline(n.to_string())));
    }
    if !h.sub_sbs.is_empty() {
        let links = h
            .sub_sbs
            .iter()
            .map(|(name, index)| (name.clone(), Block::Inline(index.to_string())))
            .collect();
        fields.push(("SUB_SBS".to_string(), Block::Map(links)));
    }
    for (key, value) in &h.extra {
        fields.push((key.clone(), value_block(value)));
    }
    Block::Map(fields)
}

fn value_block(v: &Value) -> Block {
    match v {
        Value::Null => Block::Inline("null".into()),
        Value::Bool(b) => Block::Inline(b.to_string()),
        Value::Number(n) => Block::Inline(n.clone()),
        Value::String(s) => Block::Inline(quote(s)),
        Value::Array(items) => Block::List(items.iter().map(value_block).collect()),
        Value::Object(map) => Block::Map(object_fields(map)),
    }
}

fn object_fields(map: &OrderedMap<Value>) -> Vec<(String, Block)> {
    map.iter().map(|(k, v)| (k.clone(), value_block(v))).collect()
}

fn write_block(out: &mut String, block: &Block, depth: usize) {
    match block {
        Block::Inline(s) => out.push_str(s),
        Block::Map(fields) if fields.is_empty() => out.push_str("{}"),
        Block::List(items) if items.is_empty() => out.push_str("[]"),
        Block::Map(fields) => {
            out.push_str("{\n");
            for (i, (key, value)) in fields.iter().enumerate() {
                indent(out, depth + 1);
                out.push_str(&quote(key));
                out.push_str(": ");
                write_block(out, value, depth + 1);
                if i + 1 < fields.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push('}');
        }
        Block::List(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_block(out, item, depth + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push(']');
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

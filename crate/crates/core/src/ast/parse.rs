use serde_json::{Map, Value};

use super::hierarchy::{infer_hierarchy, LeveledNode};
use super::{AstError, AstTree, CallTarget, CanonicalAstNode, RawAstDocument, SrcSpan, UNKNOWN_KIND};

/// Canonicalizes a compiler AST document.
///
/// Every JSON object carrying an integer `id` becomes one node; objects and
/// arrays without an id are transparent containers. The node kind comes from
/// `nodeType` (compact format) or `name` (legacy format).
pub fn parse_ast_document(raw: &RawAstDocument) -> Result<AstTree, AstError> {
    let mut flat = Vec::new();
    let mut without_kind = 0usize;
    collect(&raw.root, 0, &mut flat, &mut without_kind);

    if flat.is_empty() {
        return Err(AstError::MalformedAst(format!(
            "{}: no id-bearing nodes",
            raw.source_unit_path
        )));
    }
    if without_kind * 2 > flat.len() {
        return Err(AstError::UnsupportedFormat { without_kind, total: flat.len() });
    }

    let nodes = infer_hierarchy(flat)?;
    AstTree::from_nodes(raw.source_unit_path.clone(), raw.compiler_version.clone(), nodes)
}

fn collect(value: &Value, level: usize, out: &mut Vec<LeveledNode>, without_kind: &mut usize) {
    match value {
        Value::Object(obj) => {
            let child_level = match obj.get("id").and_then(Value::as_i64) {
                Some(id) => {
                    let node = canonical_node(id, obj);
                    if node.is_unknown() {
                        *without_kind += 1;
                    }
                    out.push(LeveledNode::new(node, level));
                    level + 1
                }
                None => level,
            };
            for child in obj.values() {
                collect(child, child_level, out, without_kind);
            }
        }
        Value::Array(items) => {
            for item in items {
                collect(item, level, out, without_kind);
            }
        }
        _ => {}
    }
}

enum Encoding<'a> {
    Compact(&'a str),
    Legacy { kind: &'a str, attributes: Option<&'a Map<String, Value>> },
    Unknown,
}

fn encoding(obj: &Map<String, Value>) -> Encoding<'_> {
    if let Some(kind) = obj.get("nodeType").and_then(Value::as_str) {
        Encoding::Compact(kind)
    } else if let Some(kind) = obj.get("name").and_then(Value::as_str) {
        Encoding::Legacy { kind, attributes: obj.get("attributes").and_then(Value::as_object) }
    } else {
        Encoding::Unknown
    }
}

fn text(obj: Option<&Map<String, Value>>, key: &str) -> Option<String> {
    obj.and_then(|o| o.get(key)).and_then(Value::as_str).map(str::to_owned)
}

fn int(obj: Option<&Map<String, Value>>, key: &str) -> Option<i64> {
    obj.and_then(|o| o.get(key)).and_then(Value::as_i64)
}

fn canonical_node(id: i64, obj: &Map<String, Value>) -> CanonicalAstNode {
    let mut node = CanonicalAstNode::new(id, UNKNOWN_KIND);
    node.src_span = obj.get("src").and_then(Value::as_str).map(SrcSpan::parse).unwrap_or_default();

    match encoding(obj) {
        Encoding::Compact(kind) => {
            node.kind = kind.to_owned();
            node.name = text(Some(obj), "name").or_else(|| text(Some(obj), "memberName"));
            node.value = text(Some(obj), "value");
            node.referenced_declaration = int(Some(obj), "referencedDeclaration");
            node.type_string = obj
                .get("typeDescriptions")
                .and_then(Value::as_object)
                .and_then(|t| text(Some(t), "typeString"));
            match kind {
                "FunctionDefinition" | "ModifierDefinition" | "EventDefinition" => {
                    node.arity = obj
                        .get("parameters")
                        .and_then(|p| p.get("parameters"))
                        .and_then(Value::as_array)
                        .map(Vec::len);
                }
                "FunctionCall" => {
                    let arity = obj.get("arguments").and_then(Value::as_array).map_or(0, Vec::len);
                    node.call = obj.get("expression").and_then(|e| compact_callee(e, arity));
                }
                _ => {}
            }
        }
        Encoding::Legacy { kind, attributes } => {
            node.kind = kind.to_owned();
            let children = obj.get("children").and_then(Value::as_array);
            if kind == "Identifier" {
                // legacy identifiers store their name in `value`
                node.name = text(attributes, "value");
            } else {
                node.name = text(attributes, "name").or_else(|| text(attributes, "member_name"));
                node.value = text(attributes, "value");
            }
            node.referenced_declaration = int(attributes, "referencedDeclaration");
            node.type_string = text(attributes, "type");
            match kind {
                "FunctionDefinition" | "ModifierDefinition" | "EventDefinition" => {
                    node.arity = children
                        .and_then(|c| c.first())
                        .filter(|p| p.get("name").and_then(Value::as_str) == Some("ParameterList"))
                        .map(|p| p.get("children").and_then(Value::as_array).map_or(0, Vec::len));
                }
                "FunctionCall" => {
                    if let Some((callee, args)) = children.and_then(|c| c.split_first()) {
                        node.call = legacy_callee(callee, args.len());
                    }
                }
                _ => {}
            }
        }
        Encoding::Unknown => {}
    }
    node
}

fn contract_of_type(type_string: &str) -> Option<String> {
    type_string
        .strip_prefix("contract ")
        .or_else(|| type_string.strip_prefix("type(contract "))
        .map(|rest| rest.trim_end_matches(')').split_whitespace().next().unwrap_or("").to_owned())
        .filter(|s| !s.is_empty())
}

fn compact_callee(expr: &Value, arity: usize) -> Option<CallTarget> {
    match expr.get("nodeType").and_then(Value::as_str)? {
        "Identifier" => Some(CallTarget {
            qualifier: None,
            name: expr.get("name")?.as_str()?.to_owned(),
            arity,
        }),
        "MemberAccess" => {
            let base = expr.get("expression");
            let qualifier = base
                .and_then(|b| b.get("typeDescriptions"))
                .and_then(|t| t.get("typeString"))
                .and_then(Value::as_str)
                .and_then(contract_of_type)
                .or_else(|| {
                    base.filter(|b| b.get("nodeType").and_then(Value::as_str) == Some("Identifier"))
                        .and_then(|b| b.get("name"))
                        .and_then(Value::as_str)
                        .filter(|n| n.starts_with(|c: char| c.is_ascii_uppercase()))
                        .map(str::to_owned)
                });
            Some(CallTarget {
                qualifier,
                name: expr.get("memberName")?.as_str()?.to_owned(),
                arity,
            })
        }
        "FunctionCallOptions" => compact_callee(expr.get("expression")?, arity),
        _ => None,
    }
}

fn legacy_callee(expr: &Value, arity: usize) -> Option<CallTarget> {
    let attrs = expr.get("attributes").and_then(Value::as_object);
    match expr.get("name").and_then(Value::as_str)? {
        "Identifier" => Some(CallTarget { qualifier: None, name: text(attrs, "value")?, arity }),
        "MemberAccess" => {
            let base = expr.get("children").and_then(Value::as_array).and_then(|c| c.first());
            let base_attrs = base.and_then(|b| b.get("attributes")).and_then(Value::as_object);
            let qualifier = text(base_attrs, "type").as_deref().and_then(contract_of_type).or_else(|| {
                base.filter(|b| b.get("name").and_then(Value::as_str) == Some("Identifier"))
                    .and_then(|_| text(base_attrs, "value"))
                    .filter(|n| n.starts_with(|c: char| c.is_ascii_uppercase()))
            });
            Some(CallTarget { qualifier, name: text(attrs, "member_name")?, arity })
        }
        "FunctionCallOptions" => {
            let inner = expr.get("children").and_then(Value::as_array).and_then(|c| c.first())?;
            legacy_callee(inner, arity)
        }
        _ => None,
    }
}

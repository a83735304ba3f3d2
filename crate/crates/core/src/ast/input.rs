use std::path::Path;

use serde_json::Value;

use super::{AstError, RawAstDocument};

/// Reads every AST document contained in a file.
pub fn load_ast_file(path: &Path) -> Result<Vec<RawAstDocument>, AstError> {
    let text = std::fs::read_to_string(path).map_err(|source| AstError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_ast_text(&text, &path.display().to_string())
}

/// Splits compiler output into AST documents.
///
/// Accepted shapes:
/// - standard-JSON output (`{"sources": {path: {"ast": ...}}}`, also `legacyAST`),
/// - a single AST root object (compact or legacy),
/// - console output of `solc --ast-compact-json`, where each document is
///   preceded by a `======= path =======` banner.
pub fn parse_ast_text(text: &str, origin: &str) -> Result<Vec<RawAstDocument>, AstError> {
    if text.lines().any(is_banner) {
        return split_console_output(text, origin);
    }
    let value: Value = serde_json::from_str(text)
        .map_err(|e| AstError::MalformedAst(format!("{origin}: invalid JSON: {e}")))?;
    from_json(value, origin)
}

fn is_banner(line: &str) -> bool {
    let line = line.trim();
    line.len() > 16 && line.starts_with("======= ") && line.ends_with(" =======")
}

fn split_console_output(text: &str, origin: &str) -> Result<Vec<RawAstDocument>, AstError> {
    let mut docs = Vec::new();
    let mut current: Option<(String, String)> = None;
    let flush = |entry: Option<(String, String)>, docs: &mut Vec<RawAstDocument>| -> Result<(), AstError> {
        if let Some((path, body)) = entry {
            let root: Value = serde_json::from_str(&body)
                .map_err(|e| AstError::MalformedAst(format!("{origin}: document {path}: {e}")))?;
            docs.push(RawAstDocument { compiler_version: pragma_version(&root), source_unit_path: path, root });
        }
        Ok(())
    };
    for line in text.lines() {
        if is_banner(line) {
            flush(current.take(), &mut docs)?;
            let path = line.trim().trim_start_matches("=======").trim_end_matches("=======").trim();
            current = Some((path.to_owned(), String::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    flush(current.take(), &mut docs)?;
    Ok(docs)
}

fn from_json(value: Value, origin: &str) -> Result<Vec<RawAstDocument>, AstError> {
    if let Some(sources) = value.get("sources").and_then(Value::as_object) {
        let mut docs = Vec::new();
        for (path, entry) in sources {
            let Some(root) = entry.get("ast").or_else(|| entry.get("legacyAST")) else {
                continue;
            };
            docs.push(RawAstDocument {
                source_unit_path: path.clone(),
                compiler_version: pragma_version(root),
                root: root.clone(),
            });
        }
        if docs.is_empty() {
            return Err(AstError::MalformedAst(format!("{origin}: `sources` holds no AST")));
        }
        return Ok(docs);
    }
    let path = value
        .get("absolutePath")
        .or_else(|| value.get("attributes").and_then(|a| a.get("absolutePath")))
        .and_then(Value::as_str)
        .unwrap_or(origin)
        .to_owned();
    Ok(vec![RawAstDocument { compiler_version: pragma_version(&value), source_unit_path: path, root: value }])
}

/// Version constraint from the first `pragma solidity` directive, or
/// `"unknown"`.
fn pragma_version(root: &Value) -> String {
    fn find(value: &Value) -> Option<String> {
        match value {
            Value::Object(obj) => {
                let kind = obj.get("nodeType").or_else(|| obj.get("name")).and_then(Value::as_str);
                if kind == Some("PragmaDirective") {
                    let literals = obj
                        .get("literals")
                        .or_else(|| obj.get("attributes").and_then(|a| a.get("literals")))
                        .and_then(Value::as_array)?;
                    let parts: Vec<&str> = literals.iter().filter_map(Value::as_str).collect();
                    if parts.first() == Some(&"solidity") {
                        return Some(parts[1..].concat());
                    }
                }
                obj.values().find_map(find)
            }
            Value::Array(items) => items.iter().find_map(find),
            _ => None,
        }
    }
    find(root).unwrap_or_else(|| "unknown".to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn console_output_splits_per_banner() {
        let text = "JSON AST (compact format):\n\n\n======= a.sol =======\n{\"id\": 1, \"nodeType\": \"SourceUnit\", \"nodes\": [\n{\"id\": 2, \"nodeType\": \"PragmaDirective\", \"literals\": [\"solidity\", \"^\", \"0.8\", \".0\"]}]}\n======= b.sol =======\n{\"id\": 3, \"nodeType\": \"SourceUnit\"}\n";
        let docs = parse_ast_text(text, "out.txt").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].source_unit_path, "a.sol");
        assert_eq!(docs[0].compiler_version, "^0.8.0");
        assert_eq!(docs[1].source_unit_path, "b.sol");
        assert_eq!(docs[1].compiler_version, "unknown");
    }

    #[test]
    fn standard_json_output() {
        let text = r#"{"sources": {"x.sol": {"id": 0, "ast": {"id": 1, "nodeType": "SourceUnit"}},
                       "y.sol": {"id": 1, "legacyAST": {"id": 5, "name": "SourceUnit"}}}}"#;
        let docs = parse_ast_text(text, "std.json").unwrap();
        let paths: Vec<_> = docs.iter().map(|d| d.source_unit_path.as_str()).collect();
        assert_eq!(paths, vec!["x.sol", "y.sol"]);
    }

    #[test]
    fn single_root_uses_absolute_path() {
        let docs = parse_ast_text(r#"{"id": 1, "nodeType": "SourceUnit", "absolutePath": "c/A.sol"}"#, "f.json").unwrap();
        assert_eq!(docs[0].source_unit_path, "c/A.sol");
        let docs = parse_ast_text(r#"{"id": 1, "name": "SourceUnit", "attributes": {}}"#, "f.json").unwrap();
        assert_eq!(docs[0].source_unit_path, "f.json");
    }

    #[test]
    fn invalid_json_is_malformed() {
        assert!(matches!(parse_ast_text("{\"id\": ", "bad.json"), Err(AstError::MalformedAst(_))));
    }
}

//! Newline-delimited JSON ASTs: one array of node objects per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use astcomp_core::corpus::{AstNode, AstTree};
use astcomp_core::Error as CoreError;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

fn parse_error(msg: impl std::fmt::Display) -> CoreError {
    CoreError::Parse(msg.to_string())
}

fn scalar_value(v: &Value, index: usize) -> astcomp_core::Result<Option<String>> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s.clone())),
        Value::Number(n) => Ok(Some(n.to_string())),
        Value::Bool(b) => Ok(Some(b.to_string())),
        _ => Err(parse_error(format!("node {index}: value must be a string, number or boolean"))),
    }
}

fn parse_node(obj: &Map<String, Value>, index: usize) -> astcomp_core::Result<AstNode> {
    let kind = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(parse_error(format!("node {index}: \"type\" must be a string"))),
        None => return Err(parse_error(format!("node {index}: missing \"type\""))),
    };
    let value = obj.get("value").map(|v| scalar_value(v, index)).transpose()?.flatten();
    let children = match obj.get("children") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|c| {
                c.as_u64()
                    .map(|c| c as usize)
                    .ok_or_else(|| parse_error(format!("node {index}: child indices must be non-negative integers")))
            })
            .collect::<astcomp_core::Result<_>>()?,
        Some(_) => return Err(parse_error(format!("node {index}: \"children\" must be an array"))),
    };
    Ok(AstNode { kind, value, children })
}

/// Parses one line of the corpus format into a validated tree.
///
/// A trailing bare `0` after the last node object is tolerated, as found at
/// the end of every line of some public corpora.
pub fn parse_ast_json(line: &str) -> astcomp_core::Result<AstTree> {
    AstTree::new(parse_nodes(line)?)
}

/// Parses the nodes left of a cursor. Child references past the last node
/// point at nodes not yet written and are dropped; `[]` is the empty prefix.
pub fn parse_partial_ast_json(line: &str) -> astcomp_core::Result<Option<AstTree>> {
    let mut nodes = parse_nodes(line)?;
    if nodes.is_empty() {
        return Ok(None);
    }
    let n = nodes.len();
    for node in &mut nodes {
        node.children.retain(|&c| c < n);
    }
    AstTree::new(nodes).map(Some)
}

fn parse_nodes(line: &str) -> astcomp_core::Result<Vec<AstNode>> {
    let parsed: Value = serde_json::from_str(line).map_err(parse_error)?;
    let Value::Array(mut items) = parsed else {
        return Err(parse_error("expected a JSON array of nodes"));
    };
    if items.len() > 1 && items.last().and_then(Value::as_u64) == Some(0) {
        items.pop();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| match item {
            Value::Object(obj) => parse_node(obj, i),
            _ => Err(parse_error(format!("node {i}: expected an object"))),
        })
        .collect()
}

#[derive(serde::Serialize)]
struct NodeOut<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<&'a str>,
    #[serde(skip_serializing_if = "<[usize]>::is_empty")]
    children: &'a [usize],
}

/// The corpus line for `tree`.
pub fn tree_to_json(tree: &AstTree) -> String {
    let nodes: Vec<NodeOut<'_>> = tree
        .nodes()
        .iter()
        .map(|n| NodeOut { kind: &n.kind, value: n.value.as_deref(), children: &n.children })
        .collect();
    serde_json::to_string(&nodes).expect("string keys and scalar values always serialize")
}

/// Outcome of reading one corpus file.
#[derive(Debug, Default)]
pub struct FileTrees {
    pub trees: Vec<AstTree>,
    /// `(line, error)` for every rejected line, 1-based.
    pub failures: Vec<(usize, CoreError)>,
}

/// Reads every non-blank line of `path`. With `strict` the first bad line is
/// returned as an error; otherwise bad lines are collected and skipped.
pub fn read_trees(path: &Path, strict: bool) -> Result<FileTrees> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut out = FileTrees::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_ast_json(&line) {
            Ok(tree) => out.trees.push(tree),
            Err(e) if strict => return Err(Error::Record { path: path.to_owned(), line: i + 1, source: e }),
            Err(e) => out.failures.push((i + 1, e)),
        }
    }
    Ok(out)
}

pub fn write_trees(path: &Path, trees: &[AstTree]) -> Result<()> {
    crate::files::write_atomic(path, |w| {
        for t in trees {
            writeln!(w, "{}", tree_to_json(t))?;
        }
        Ok(())
    })
}

fn is_bookkeeping(path: &Path) -> bool {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    name.starts_with('.') || name == crate::manifest::MANIFEST_FILE
}

/// Expands directories into their regular files, sorted by name and skipping
/// hidden files and run manifests; explicit files are kept in the given order.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        let meta = std::fs::metadata(input).map_err(Error::io(input))?;
        if meta.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(Error::io(input))?
                .map(|e| e.map(|e| e.path()).map_err(Error::io(input)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|p| p.is_file() && !is_bookkeeping(p))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("no input files".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_trees_drop_dangling_children() {
        let t = parse_partial_ast_json(r#"[{"type":"Module","children":[1,3]},{"type":"Expr","children":[2]}]"#)
            .unwrap()
            .unwrap();
        assert_eq!(t.nodes()[0].children, vec![1]);
        assert_eq!(t.nodes()[1].children, Vec::<usize>::new());
        assert!(parse_partial_ast_json("[]").unwrap().is_none());
        assert!(parse_partial_ast_json("[{}]").is_err());
    }

    #[test]
    fn minimal_and_two_node_trees() {
        let t = parse_ast_json(r#"[{"type":"Module"}]"#).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.nodes()[0].children.is_empty());
        let t = parse_ast_json(r#"[{"type":"Module","children":[1]},{"type":"Break"}]"#).unwrap();
        assert_eq!(t.parent(1), Some(0));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_ast_json(r#"[{"type":"A","children":[2]}]"#), Err(CoreError::Structure { .. })));
        assert!(matches!(
            parse_ast_json(r#"[{"type":"A","children":[1]},{"type":"B","children":[0]}]"#),
            Err(CoreError::Structure { .. })
        ));
        assert!(matches!(parse_ast_json(r#"[{"type":"A"},{"type":"B"}]"#), Err(CoreError::Structure { .. })));
    }

    #[test]
    fn malformed_input() {
        for bad in [
            "[{\"type\":\"A\"",
            "{\"type\":\"A\"}",
            "[{\"value\":\"x\"}]",
            "[{\"type\":3}]",
            "[{\"type\":\"A\",\"children\":[-1]}]",
            "[{\"type\":\"A\",\"value\":[1]}]",
            "[1]",
        ] {
            assert!(matches!(parse_ast_json(bad), Err(CoreError::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn trailing_zero_and_scalar_values() {
        let t = parse_ast_json(r#"[{"type":"Num","value":10},0]"#).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.nodes()[0].value.as_deref(), Some("10"));
    }

    #[test]
    fn json_round_trip() {
        let line = r#"[{"type":"Module","children":[1,2]},{"type":"Name","value":"x"},{"type":"Pass"}]"#;
        let t = parse_ast_json(line).unwrap();
        assert_eq!(tree_to_json(&t), line);
        assert_eq!(parse_ast_json(&tree_to_json(&t)).unwrap(), t);
    }
}

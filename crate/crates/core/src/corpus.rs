//! Parsed ASTs, pre-order flattening, path-to-root features and query generation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Value assigned to nodes that carry none.
pub const EMPTY: &str = "EMPTY";
/// Out-of-vocabulary marker.
pub const UNK: &str = "<unk>";
/// Padding for path slots beyond the root.
pub const PAD: &str = "<pad>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub kind: String,
    pub value: Option<String>,
    pub children: Vec<usize>,
}

impl AstNode {
    pub fn new(kind: impl Into<String>, value: Option<&str>, children: Vec<usize>) -> Self {
        Self { kind: kind.into(), value: value.map(ToString::to_string), children }
    }
}

/// A validated tree whose root is node 0.
///
/// Every child index is larger than its parent's index and every non-root
/// node has exactly one parent, which together rule out cycles and make
/// every node reachable from the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstTree {
    nodes: Vec<AstNode>,
    parents: Vec<Option<usize>>,
}

impl AstTree {
    pub fn new(nodes: Vec<AstNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Structure { index: 0, reason: "tree has no nodes".into() });
        }
        let mut parents = vec![None; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if node.kind.is_empty() {
                return Err(Error::Structure { index: i, reason: "empty type".into() });
            }
            for &c in &node.children {
                if c >= nodes.len() {
                    return Err(Error::Structure {
                        index: i,
                        reason: format!("child {c} does not exist ({} nodes)", nodes.len()),
                    });
                }
                if c <= i {
                    return Err(Error::Structure { index: i, reason: format!("child {c} does not follow its parent") });
                }
                if let Some(p) = parents[c] {
                    return Err(Error::Structure { index: i, reason: format!("child {c} already has parent {p}") });
                }
                parents[c] = Some(i);
            }
        }
        if let Some(orphan) = (1..nodes.len()).find(|&i| parents[i].is_none()) {
            return Err(Error::Structure { index: orphan, reason: "second root (node has no parent)".into() });
        }
        Ok(Self { nodes, parents })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_index(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> Result<&AstNode> {
        self.nodes.get(index).ok_or(Error::Index { index, len: self.nodes.len() })
    }

    pub fn parent(&self, index: usize) -> Option<usize> {
        self.parents.get(index).copied().flatten()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    /// Node indices in pre-order (parent first, children in stored order).
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(self.nodes[i].children.iter().rev());
        }
        order
    }

    /// Depth of a node (root has depth 0).
    pub fn depth(&self, index: usize) -> usize {
        let mut d = 0;
        let mut cur = index;
        while let Some(p) = self.parents[cur] {
            d += 1;
            cur = p;
        }
        d
    }
}

/// One flattened node: its type and its value (`EMPTY` when absent).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeLabel {
    pub kind: String,
    pub value: String,
}

impl NodeLabel {
    pub fn new(kind: &str, value: &str) -> Self {
        Self { kind: kind.into(), value: value.into() }
    }
}

impl core::fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}[{}]", self.kind, self.value)
    }
}

pub fn flatten(tree: &AstTree) -> Vec<NodeLabel> {
    tree.preorder()
        .into_iter()
        .map(|i| {
            let n = &tree.nodes[i];
            NodeLabel { kind: n.kind.clone(), value: n.value.clone().unwrap_or_else(|| EMPTY.into()) }
        })
        .collect()
}

/// Ancestor types of a node, nearest first, padded with [`PAD`] to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootPath {
    pub types: Vec<String>,
    pub true_length: usize,
}

impl RootPath {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Builds a path from caller-supplied ancestor types (nearest first).
    /// More than `m` ancestors keeps the nearest `m`.
    pub fn from_ancestors<S: AsRef<str>>(ancestors: &[S], m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("path length m must be at least 1".into()));
        }
        let true_length = ancestors.len().min(m);
        let mut types: Vec<String> = ancestors[..true_length].iter().map(|s| s.as_ref().into()).collect();
        types.resize(m, PAD.into());
        Ok(Self { types, true_length })
    }
}

/// A [`RootPath`] encoded with the type vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PathIds {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

impl PathIds {
    /// The path of a root node: every slot is `PAD`.
    pub fn empty(m: usize) -> Self {
        Self { ids: vec![crate::vocab::PAD_ID; m], true_length: 0 }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl RootPath {
    pub fn encode(&self, types: &crate::vocab::Vocab) -> PathIds {
        let ids = self
            .types
            .iter()
            .enumerate()
            .map(|(i, t)| if i < self.true_length { types.encode(t) } else { crate::vocab::PAD_ID })
            .collect();
        PathIds { ids, true_length: self.true_length }
    }
}

/// Path from `node_index` to the root, keeping the `m` nearest ancestors.
pub fn path_to_root(tree: &AstTree, node_index: usize, m: usize) -> Result<RootPath> {
    if node_index >= tree.len() {
        return Err(Error::Index { index: node_index, len: tree.len() });
    }
    if m == 0 {
        return Err(Error::Domain("path length m must be at least 1".into()));
    }
    let mut types = Vec::with_capacity(m);
    let mut cur = tree.parent(node_index);
    while let Some(p) = cur {
        if types.len() == m {
            break;
        }
        types.push(tree.nodes[p].kind.clone());
        cur = tree.parent(p);
    }
    let true_length = types.len();
    types.resize(m, PAD.into());
    Ok(RootPath { types, true_length })
}

/// One prediction instance: everything left of `position` predicts the node there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query<'a> {
    pub context: &'a [NodeLabel],
    pub target: &'a NodeLabel,
    pub path: &'a RootPath,
    pub position: usize,
}

/// All queries of one tree, one per node in flat order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Queries {
    flat: Vec<NodeLabel>,
    paths: Vec<RootPath>,
}

impl Queries {
    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn flat(&self) -> &[NodeLabel] {
        &self.flat
    }

    pub fn paths(&self) -> &[RootPath] {
        &self.paths
    }

    pub fn get(&self, position: usize) -> Option<Query<'_>> {
        (position < self.flat.len()).then(|| Query {
            context: &self.flat[..position],
            target: &self.flat[position],
            path: &self.paths[position],
            position,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Query<'_>> {
        (0..self.flat.len()).filter_map(|p| self.get(p))
    }
}

pub fn make_queries(tree: &AstTree, m: usize) -> Result<Queries> {
    let order = tree.preorder();
    let flat = flatten(tree);
    let paths = order.iter().map(|&i| path_to_root(tree, i, m)).collect::<Result<Vec<_>>>()?;
    Ok(Queries { flat, paths })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn n(kind: &str, value: Option<&str>, children: &[usize]) -> AstNode {
        AstNode::new(kind, value, children.to_vec())
    }

    /// `while count < 10: if count == 5: break; count += 1` style tree.
    pub(crate) fn while_if_break() -> AstTree {
        AstTree::new(vec![
            n("Module", None, &[1]),
            n("While", None, &[2, 5]),
            n("CompareLt", None, &[3, 4]),
            n("NameLoad", Some("count"), &[]),
            n("Num", Some("10"), &[]),
            n("body", None, &[6, 12]),
            n("If", None, &[7, 10]),
            n("CompareEq", None, &[8, 9]),
            n("NameLoad", Some("count"), &[]),
            n("Num", Some("5"), &[]),
            n("body", None, &[11]),
            n("Break", None, &[]),
            n("AugAssignAdd", None, &[13, 14]),
            n("NameStore", Some("count"), &[]),
            n("Num", Some("1"), &[]),
        ])
        .unwrap()
    }

    /// `def f(a, b): return a + b`
    pub(crate) fn function_return_binop() -> AstTree {
        AstTree::new(vec![
            n("FunctionDef", Some("f"), &[1, 4]),
            n("arguments", None, &[2, 3]),
            n("NameParam", Some("a"), &[]),
            n("NameParam", Some("b"), &[]),
            n("body", None, &[5]),
            n("Return", None, &[6]),
            n("BinOp", None, &[7, 8, 9]),
            n("NameLoad", Some("a"), &[]),
            n("Add", None, &[]),
            n("NameLoad", Some("b"), &[]),
        ])
        .unwrap()
    }

    #[test]
    fn minimal_tree() {
        let t = AstTree::new(vec![n("Module", None, &[])]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(flatten(&t), vec![NodeLabel::new("Module", EMPTY)]);
    }

    #[test]
    fn two_node_parent() {
        let t = AstTree::new(vec![n("Module", None, &[1]), n("Break", None, &[])]).unwrap();
        assert_eq!(t.parent(1), Some(0));
        assert_eq!(t.parent(0), None);
    }

    #[test]
    fn structure_errors() {
        let dangling = AstTree::new(vec![n("A", None, &[2])]);
        assert!(matches!(dangling, Err(Error::Structure { index: 0, .. })));
        let dup = AstTree::new(vec![n("A", None, &[1, 1]), n("B", None, &[])]);
        assert!(matches!(dup, Err(Error::Structure { index: 0, .. })));
        let shared = AstTree::new(vec![n("A", None, &[1, 2]), n("B", None, &[2]), n("C", None, &[])]);
        assert!(matches!(shared, Err(Error::Structure { index: 1, .. })));
        let back = AstTree::new(vec![n("A", None, &[1]), n("B", None, &[1])]);
        assert!(matches!(back, Err(Error::Structure { index: 1, .. })));
        let two_roots = AstTree::new(vec![n("A", None, &[]), n("B", None, &[])]);
        assert!(matches!(two_roots, Err(Error::Structure { index: 1, .. })));
        assert!(AstTree::new(vec![]).is_err());
    }

    #[test]
    fn flatten_is_parent_first() {
        let t = AstTree::new(vec![n("A", None, &[1, 2]), n("B", None, &[]), n("C", None, &[])]).unwrap();
        assert_eq!(
            flatten(&t),
            vec![NodeLabel::new("A", EMPTY), NodeLabel::new("B", EMPTY), NodeLabel::new("C", EMPTY)]
        );
    }

    #[test]
    fn flatten_ends_with_last_leaf() {
        let t = function_return_binop();
        let flat = flatten(&t);
        assert_eq!(flat.len(), t.len());
        assert_eq!(flat.last().unwrap(), &NodeLabel::new("NameLoad", "b"));
    }

    #[test]
    fn path_for_break() {
        let t = while_if_break();
        let p = path_to_root(&t, 11, 5).unwrap();
        assert_eq!(p.types, ["body", "If", "body", "While", "Module"]);
        assert_eq!(p.true_length, 5);
    }

    #[test]
    fn path_for_last_leaf_is_padded() {
        let t = function_return_binop();
        let p = path_to_root(&t, 9, 5).unwrap();
        assert_eq!(p.types, ["BinOp", "Return", "body", "FunctionDef", PAD]);
        assert_eq!(p.true_length, 4);
    }

    #[test]
    fn root_path_is_all_pad() {
        let t = function_return_binop();
        for m in 1..4 {
            let p = path_to_root(&t, 0, m).unwrap();
            assert_eq!(p.true_length, 0);
            assert!(p.types.iter().all(|s| s == PAD));
            assert_eq!(p.len(), m);
        }
    }

    #[test]
    fn deep_chain_keeps_nearest_ancestors() {
        let mut nodes = (0..9).map(|i| n(&format!("T{i}"), None, &[])).collect::<Vec<_>>();
        for (i, node) in nodes.iter_mut().take(8).enumerate() {
            node.children = vec![i + 1];
        }
        let t = AstTree::new(nodes).unwrap();
        // Node 8 has depth 8; walk parent pointers independently.
        let mut expected = Vec::new();
        let mut cur = 8;
        while cur > 0 {
            cur -= 1;
            expected.push(format!("T{cur}"));
        }
        expected.truncate(5);
        let p = path_to_root(&t, 8, 5).unwrap();
        assert_eq!(p.types, expected);
        assert_eq!(p.true_length, 5);
        assert!(!p.types.contains(&"T0".to_string()));
    }

    #[test]
    fn path_index_error() {
        let t = function_return_binop();
        assert_eq!(path_to_root(&t, 10, 5), Err(Error::Index { index: 10, len: 10 }));
    }

    #[test]
    fn queries_one_per_node() {
        let single = AstTree::new(vec![n("Module", None, &[])]).unwrap();
        let q = make_queries(&single, 5).unwrap();
        assert_eq!(q.len(), 1);
        assert!(q.get(0).unwrap().context.is_empty());

        let t = while_if_break();
        let qs = make_queries(&t, 5).unwrap();
        assert_eq!(qs.len(), t.len());
        let brk = qs.iter().find(|q| q.target.kind == "Break").unwrap();
        assert_eq!(brk.context.len(), brk.position);
        assert!(brk.context.iter().all(|l| l.kind != "Break"));
        assert_eq!(brk.path.types, ["body", "If", "body", "While", "Module"]);
    }

    #[test]
    fn caller_supplied_paths() {
        let p = RootPath::from_ancestors(&["a", "b"], 3).unwrap();
        assert_eq!(p.types, ["a", "b", PAD]);
        let p = RootPath::from_ancestors(&["a", "b", "c", "d"], 3).unwrap();
        assert_eq!(p.types, ["a", "b", "c"]);
        assert!(RootPath::from_ancestors::<&str>(&[], 0).is_err());
    }
}

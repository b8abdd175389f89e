//! Deterministic synthetic corpora.
//!
//! Programs follow a small statement grammar with JavaScript-style type
//! names. A `Header` leaf right under the root carries the program's mode;
//! the mode decides which loop statement the program uses and every leaf
//! value is a fixed function of (leaf family, mode), so values are only
//! predictable from context that may lie several segments back. Simple
//! statements are chosen mostly by their block depth, which the path to the
//! root exposes directly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AstNode, AstTree};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub programs: usize,
    /// Distinct header modes.
    pub modes: usize,
    /// Deepest block nesting.
    pub max_depth: usize,
    /// Statements per block, inclusive range.
    pub min_statements: usize,
    pub max_statements: usize,
    /// Chance that a statement below `max_depth` opens a nested block.
    pub compound_prob: f64,
    /// Chance that a simple statement deviates from its depth's default kind.
    pub noise: f64,
    /// Give every program a distinct header value (`prog<i>`) instead of its mode.
    pub unique_headers: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            programs: 50,
            modes: 4,
            max_depth: 3,
            min_statements: 2,
            max_statements: 4,
            compound_prob: 0.45,
            noise: 0.1,
            unique_headers: false,
            seed: 0,
        }
    }
}

const SIMPLE_BY_DEPTH: [&str; 3] = ["ExpressionStatement", "ReturnStatement", "ThrowStatement"];
const LOOPS: [&str; 2] = ["WhileStatement", "ForStatement"];

struct Builder {
    nodes: Vec<AstNode>,
}

impl Builder {
    fn push(&mut self, kind: &str, value: Option<String>) -> usize {
        self.nodes.push(AstNode { kind: kind.into(), value, children: Vec::new() });
        self.nodes.len() - 1
    }

    fn child(&mut self, parent: usize, kind: &str, value: Option<String>) -> usize {
        let id = self.push(kind, value);
        self.nodes[parent].children.push(id);
        id
    }
}

struct Program<'a> {
    cfg: &'a SynthConfig,
    mode: usize,
    rng: &'a mut ChaCha8Rng,
    b: Builder,
}

impl Program<'_> {
    fn ident(&self, family: &str) -> Option<String> {
        Some(format!("{family}{}", self.mode))
    }

    fn expression(&mut self, parent: usize) {
        let e = self.b.child(parent, "BinaryExpression", None);
        let v = self.ident("x");
        self.b.child(e, "Identifier", v);
        let lit = Some(format!("{}", self.mode * 10));
        self.b.child(e, "Literal", lit);
    }

    fn block(&mut self, parent: usize, depth: usize) {
        let body = self.b.child(parent, "BlockStatement", None);
        let n = self.rng.gen_range(self.cfg.min_statements..=self.cfg.max_statements);
        for _ in 0..n {
            self.statement(body, depth);
        }
    }

    fn statement(&mut self, parent: usize, depth: usize) {
        if depth < self.cfg.max_depth && self.rng.gen_bool(self.cfg.compound_prob) {
            let kind = if self.rng.gen_bool(0.5) { "IfStatement" } else { LOOPS[self.mode % 2] };
            let s = self.b.child(parent, kind, None);
            self.expression(s);
            self.block(s, depth + 1);
            return;
        }
        let kind = if self.rng.gen_bool(self.cfg.noise) {
            if depth > 0 {
                "ContinueStatement"
            } else {
                "EmptyStatement"
            }
        } else {
            SIMPLE_BY_DEPTH[depth % SIMPLE_BY_DEPTH.len()]
        };
        let s = self.b.child(parent, kind, None);
        match kind {
            "ExpressionStatement" => {
                let call = self.b.child(s, "CallExpression", None);
                let f = self.ident("f");
                self.b.child(call, "Identifier", f);
                let a = self.ident("x");
                self.b.child(call, "Identifier", a);
            }
            "ReturnStatement" | "ThrowStatement" => self.expression(s),
            _ => {}
        }
    }
}

/// Renumbers nodes into pre-order so every child index follows its parent.
fn into_tree(nodes: Vec<AstNode>) -> AstTree {
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        order.push(i);
        stack.extend(nodes[i].children.iter().rev());
    }
    let mut new_index = vec![0usize; nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let renumbered = order
        .iter()
        .map(|&old| {
            let n = &nodes[old];
            AstNode {
                kind: n.kind.clone(),
                value: n.value.clone(),
                children: n.children.iter().map(|&c| new_index[c]).collect(),
            }
        })
        .collect();
    AstTree::new(renumbered).expect("generated trees are valid")
}

/// Generates `cfg.programs` trees; the same config always yields the same corpus.
pub fn generate(cfg: &SynthConfig) -> Vec<AstTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.programs)
        .map(|i| {
            let mode = rng.gen_range(0..cfg.modes.max(1));
            let mut p = Program { cfg, mode, rng: &mut rng, b: Builder { nodes: Vec::new() } };
            let root = p.b.push("Program", None);
            let header = if cfg.unique_headers { format!("prog{i}") } else { format!("mode{mode}") };
            p.b.child(root, "Header", Some(header));
            p.block(root, 0);
            into_tree(p.b.nodes)
        })
        .collect()
}

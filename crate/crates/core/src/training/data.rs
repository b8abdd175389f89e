use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{flatten, path_to_root, AstTree, PathIds};
use crate::error::{Error, Result};
use crate::vocab::{Vocab, PAD_ID};

/// A flattened program in vocabulary ids, with the path of every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedProgram {
    pub types: Vec<u32>,
    pub values: Vec<u32>,
    pub paths: Vec<PathIds>,
}

impl EncodedProgram {
    pub fn from_tree(tree: &AstTree, types: &Vocab, values: &Vocab, m: usize) -> Result<Self> {
        let order = tree.preorder();
        let flat = flatten(tree);
        let paths =
            order.iter().map(|&i| path_to_root(tree, i, m).map(|p| p.encode(types))).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            types: flat.iter().map(|l| types.encode(&l.kind)).collect(),
            values: flat.iter().map(|l| values.encode(&l.value)).collect(),
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.values.len() != self.types.len() || self.paths.len() != self.types.len() {
            return Err(Error::Shape("program arrays differ in length".into()));
        }
        if self.types.is_empty() {
            return Err(Error::Shape("program has no nodes".into()));
        }
        if let Some(p) = self.paths.iter().find(|p| p.ids.len() != m || p.true_length > m) {
            return Err(Error::Shape(alloc::format!("path {:?} does not have length m = {m}", p.ids)));
        }
        Ok(())
    }
}

/// Fingerprints of the two vocabularies a shard was encoded with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub types: String,
    pub values: String,
}

impl Fingerprints {
    pub fn of(types: &Vocab, values: &Vocab) -> Self {
        Self { types: types.fingerprint(), values: values.fingerprint() }
    }

    pub fn check(&self, expected: &Fingerprints) -> Result<()> {
        if self != expected {
            return Err(Error::Config(alloc::format!(
                "vocabulary fingerprint mismatch: found types {}/values {}, expected {}/{}",
                short(&self.types),
                short(&self.values),
                short(&expected.types),
                short(&expected.values)
            )));
        }
        Ok(())
    }
}

fn short(s: &str) -> &str {
    &s[..s.len().min(12)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub path_len: usize,
    pub fingerprints: Fingerprints,
    pub programs: Vec<EncodedProgram>,
}

impl Shard {
    pub fn encode(trees: &[AstTree], types: &Vocab, values: &Vocab, m: usize) -> Result<Self> {
        let programs =
            trees.iter().map(|t| EncodedProgram::from_tree(t, types, values, m)).collect::<Result<Vec<_>>>()?;
        Ok(Self { path_len: m, fingerprints: Fingerprints::of(types, values), programs })
    }

    /// Total queries (one per node).
    pub fn num_queries(&self) -> usize {
        self.programs.iter().map(EncodedProgram::len).sum()
    }
}

/// Prediction of a program's first node, made from the learned initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialQuery {
    pub target_type: u32,
    pub target_value: u32,
    pub path: PathIds,
}

/// One batch row: a length-`L` window of one program.
///
/// Position `t` holds input node `start + t` and, when `mask[t]` is set, the
/// target node `start + t + 1` with that target's path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRow {
    /// Index of the program in the shard; `None` for an idle row.
    pub program: Option<usize>,
    pub start: usize,
    pub len: usize,
    pub input_types: Vec<u32>,
    pub input_values: Vec<u32>,
    pub target_types: Vec<u32>,
    pub target_values: Vec<u32>,
    pub paths: Vec<PathIds>,
    pub mask: Vec<bool>,
    /// Set on the first segment of a program; memory starts empty there.
    pub reset: bool,
    pub initial: Option<InitialQuery>,
}

impl SegmentRow {
    fn idle(l: usize, m: usize) -> Self {
        Self {
            program: None,
            start: 0,
            len: 0,
            input_types: vec![PAD_ID; l],
            input_values: vec![PAD_ID; l],
            target_types: vec![PAD_ID; l],
            target_values: vec![PAD_ID; l],
            paths: vec![PathIds::empty(m); l],
            mask: vec![false; l],
            reset: true,
            initial: None,
        }
    }

    fn new(shard: &Shard, program: usize, segment: usize, l: usize) -> Self {
        let p = &shard.programs[program];
        let m = shard.path_len;
        let start = segment * l;
        let len = (p.len() - start).min(l);
        let mut row = Self::idle(l, m);
        row.program = Some(program);
        row.start = start;
        row.len = len;
        row.reset = segment == 0;
        for t in 0..len {
            let pos = start + t;
            row.input_types[t] = p.types[pos];
            row.input_values[t] = p.values[pos];
            if pos + 1 < p.len() {
                row.target_types[t] = p.types[pos + 1];
                row.target_values[t] = p.values[pos + 1];
                row.paths[t] = p.paths[pos + 1].clone();
                row.mask[t] = true;
            }
        }
        if segment == 0 {
            row.initial =
                Some(InitialQuery { target_type: p.types[0], target_value: p.values[0], path: p.paths[0].clone() });
        }
        row
    }

    /// Number of loss positions, counting the initial query.
    pub fn num_targets(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count() + usize::from(self.initial.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentBatch {
    pub rows: Vec<SegmentRow>,
}

impl SegmentBatch {
    pub fn reset_mask(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.reset).collect()
    }

    pub fn num_targets(&self) -> usize {
        self.rows.iter().map(SegmentRow::num_targets).sum()
    }
}

/// Iterator over [`SegmentBatch`]es; see [`segment_stream`].
#[derive(Debug, Clone)]
pub struct SegmentStream<'a> {
    shard: &'a Shard,
    queues: Vec<Vec<(usize, usize)>>,
    step: usize,
    segment_len: usize,
}

impl SegmentStream<'_> {
    /// Batches this stream yields in total.
    pub fn num_steps(&self) -> usize {
        self.queues.iter().map(Vec::len).max().unwrap_or(0)
    }
}

impl Iterator for SegmentStream<'_> {
    type Item = SegmentBatch;

    fn next(&mut self) -> Option<SegmentBatch> {
        if self.step >= self.num_steps() {
            return None;
        }
        let rows = self
            .queues
            .iter()
            .map(|q| match q.get(self.step) {
                Some(&(program, segment)) => SegmentRow::new(self.shard, program, segment, self.segment_len),
                None => SegmentRow::idle(self.segment_len, self.shard.path_len),
            })
            .collect();
        self.step += 1;
        Some(SegmentBatch { rows })
    }
}

/// Splits every program into consecutive length-`L` segments and lays them
/// out over `batch_size` rows.
///
/// Programs are visited in `order` (shard order when `None`); each goes whole
/// to the row with the fewest queued segments, so a program's segments are
/// consecutive within one row and memory can be carried between them.
pub fn segment_stream<'a>(
    shard: &'a Shard,
    expected: &Fingerprints,
    segment_len: usize,
    batch_size: usize,
    order: Option<&[usize]>,
) -> Result<SegmentStream<'a>> {
    shard.fingerprints.check(expected)?;
    if segment_len == 0 || batch_size == 0 {
        return Err(Error::Config("segment length and batch size must be positive".into()));
    }
    for p in &shard.programs {
        p.validate(shard.path_len)?;
    }
    let default_order: Vec<usize>;
    let order = match order {
        Some(o) => o,
        None => {
            default_order = (0..shard.programs.len()).collect();
            &default_order
        }
    };
    let mut queues: Vec<Vec<(usize, usize)>> = vec![Vec::new(); batch_size];
    for &program in order {
        let n = shard.programs.get(program).ok_or(Error::Index { index: program, len: shard.programs.len() })?.len();
        let segments = n.div_ceil(segment_len);
        let row = (0..batch_size).min_by_key(|&r| (queues[r].len(), r)).expect("batch_size > 0");
        queues[row].extend((0..segments).map(|s| (program, s)));
    }
    Ok(SegmentStream { shard, queues, step: 0, segment_len })
}

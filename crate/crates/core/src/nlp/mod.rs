//! Dependency-parsed questions and the trees the classifier runs over.

mod conllu;
mod server;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub use conllu::{
    parse_conllu, read_conllu, read_conllu_lenient, write_conllu, ConlluBlockError, ConlluError,
    ConlluErrorKind,
};
pub use server::{ParseServerClient, ParseServerError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("CYCLE: token {0} is on a head cycle")]
    Cycle(usize),
    #[error("MULTIPLE_ROOTS: tokens {0:?} all have head 0")]
    MultipleRoots(Vec<usize>),
    #[error("NO_ROOT: no token has head 0")]
    NoRoot,
    #[error("DUPLICATE_ID: token id {0} appears twice")]
    DuplicateId(usize),
    #[error("BAD_INDEX: token ids must run 1..={expected_max}, found {found}")]
    BadIndex { found: usize, expected_max: usize },
    #[error("BAD_HEAD: token {index} has head {head} outside 0..={len}")]
    BadHead { index: usize, head: usize, len: usize },
    #[error("DISCONNECTED: token {0} is unreachable from the root")]
    Disconnected(usize),
    #[error("EMPTY: sentence has no tokens")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub surface: String,
    /// Penn Treebank tag.
    pub pos: String,
    pub rel: String,
    /// Index of the governing token, 0 for the root.
    pub head: usize,
}

impl Token {
    pub fn new(index: usize, surface: &str, pos: &str, rel: &str, head: usize) -> Self {
        Token {
            index,
            surface: surface.to_string(),
            pos: pos.to_string(),
            rel: rel.to_string(),
            head,
        }
    }
}

/// Nodes are addressed by 0-based position (`token.index - 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    nodes: Vec<Token>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl DependencyTree {
    pub fn nodes(&self) -> &[Token] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Breadth-first from the root; children in token order.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(n) = queue.pop_front() {
            order.push(n);
            queue.extend(self.children[n].iter().copied());
        }
        order
    }

    /// Reverse breadth-first order: every child precedes its parent.
    pub fn bottom_up_order(&self) -> Vec<usize> {
        let mut order = self.bfs_order();
        order.reverse();
        order
    }

    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        for n in self.bfs_order() {
            for &c in &self.children[n] {
                depth[c] = depth[n] + 1;
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }
}

/// Validates tokens and links them into a tree.
pub fn build_tree(mut tokens: Vec<Token>) -> Result<DependencyTree, TreeError> {
    if tokens.is_empty() {
        return Err(TreeError::Empty);
    }
    tokens.sort_by_key(|t| t.index);
    let n = tokens.len();
    let mut seen = BTreeSet::new();
    for t in &tokens {
        if !seen.insert(t.index) {
            return Err(TreeError::DuplicateId(t.index));
        }
    }
    for (pos, t) in tokens.iter().enumerate() {
        if t.index != pos + 1 {
            return Err(TreeError::BadIndex {
                found: t.index,
                expected_max: n,
            });
        }
        if t.head > n {
            return Err(TreeError::BadHead {
                index: t.index,
                head: t.head,
                len: n,
            });
        }
        if t.head == t.index {
            return Err(TreeError::Cycle(t.index));
        }
    }
    let roots: Vec<usize> = tokens.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
    let root = match roots.as_slice() {
        [] => return Err(TreeError::NoRoot),
        [r] => r - 1,
        _ => return Err(TreeError::MultipleRoots(roots)),
    };
    // Walk each head chain; a chain longer than n never reaches the root.
    for t in &tokens {
        let mut cur = t.index;
        for _ in 0..=n {
            if cur == 0 {
                break;
            }
            cur = tokens[cur - 1].head;
        }
        if cur != 0 {
            return Err(TreeError::Cycle(t.index));
        }
    }
    let mut children = vec![Vec::new(); n];
    for t in &tokens {
        if t.head > 0 {
            children[t.head - 1].push(t.index - 1);
        }
    }
    let tree = DependencyTree {
        nodes: tokens,
        children,
        root,
    };
    let reached = tree.bfs_order();
    if reached.len() != n {
        let reached: BTreeSet<usize> = reached.into_iter().collect();
        let missing = (0..n).find(|i| !reached.contains(i)).unwrap_or(0);
        return Err(TreeError::Disconnected(missing + 1));
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuestion {
    /// Links the parse to a question record.
    pub qid: Option<String>,
    pub text: String,
    pub tree: DependencyTree,
}

impl ParsedQuestion {
    pub fn new(qid: Option<String>, text: Option<String>, tokens: Vec<Token>) -> Result<Self, TreeError> {
        let tree = build_tree(tokens)?;
        let text = text.unwrap_or_else(|| {
            tree.nodes().iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ")
        });
        Ok(ParsedQuestion { qid, text, tree })
    }
}

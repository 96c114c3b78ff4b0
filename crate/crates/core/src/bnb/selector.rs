use super::NodeId;
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

/// Node selection rule.
///
/// `BestFirst` stands in for a general-purpose solver's default selector:
/// lowest dual bound first, ties by creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelectorKind {
    BestFirst,
    /// LIFO; after branching the down child is explored first.
    Dfs,
    /// FIFO by creation.
    Bfs,
}

impl NodeSelectorKind {
    pub const ALL: [NodeSelectorKind; 3] = [Self::BestFirst, Self::Dfs, Self::Bfs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BestFirst => "best_first",
            Self::Dfs => "dfs",
            Self::Bfs => "bfs",
        }
    }
}

impl fmt::Display for NodeSelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeSelectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best_first" | "best" | "default" => Ok(Self::BestFirst),
            "dfs" => Ok(Self::Dfs),
            "bfs" => Ok(Self::Bfs),
            other => Err(format!("unknown node selector '{other}' (best_first|dfs|bfs)")),
        }
    }
}

/// Open-node bookkeeping. The bound-ordered set is kept for every selector
/// because the global dual bound is its minimum; the stack/queue hold stale
/// entries that are skipped on pop.
pub(crate) struct OpenNodes {
    kind: NodeSelectorKind,
    by_bound: BTreeSet<(OrderedFloat<f64>, NodeId)>,
    bound_of: HashMap<NodeId, f64>,
    order: VecDeque<NodeId>,
}

impl OpenNodes {
    pub fn new(kind: NodeSelectorKind) -> Self {
        OpenNodes {
            kind,
            by_bound: BTreeSet::new(),
            bound_of: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    /// Adds the children of one branching, given as `[down, up]` with
    /// already-fathomed children omitted.
    pub fn push_children(&mut self, children: &[(NodeId, f64)]) {
        for &(id, bound) in children {
            self.by_bound.insert((OrderedFloat(bound), id));
            self.bound_of.insert(id, bound);
        }
        match self.kind {
            NodeSelectorKind::BestFirst => {}
            NodeSelectorKind::Dfs => {
                // down child ends up on top
                for &(id, _) in children.iter().rev() {
                    self.order.push_back(id);
                }
            }
            NodeSelectorKind::Bfs => {
                for &(id, _) in children {
                    self.order.push_back(id);
                }
            }
        }
    }

    pub fn pop(&mut self) -> Option<NodeId> {
        match self.kind {
            NodeSelectorKind::BestFirst => {
                let (_, id) = self.by_bound.pop_first()?;
                self.bound_of.remove(&id);
                Some(id)
            }
            NodeSelectorKind::Dfs | NodeSelectorKind::Bfs => loop {
                let id = if self.kind == NodeSelectorKind::Dfs {
                    self.order.pop_back()?
                } else {
                    self.order.pop_front()?
                };
                if let Some(bound) = self.bound_of.remove(&id) {
                    self.by_bound.remove(&(OrderedFloat(bound), id));
                    return Some(id);
                }
            },
        }
    }

    pub fn best(&self) -> Option<(f64, NodeId)> {
        self.by_bound.first().map(|&(b, id)| (b.0, id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.bound_of.contains_key(&id)
    }

    /// Removes and returns every open node with bound `>= threshold`.
    pub fn drain_dominated(&mut self, threshold: f64) -> Vec<NodeId> {
        let cut = (OrderedFloat(threshold), 0);
        let tail: Vec<_> = self.by_bound.range(cut..).copied().collect();
        for key in &tail {
            self.by_bound.remove(key);
            self.bound_of.remove(&key.1);
        }
        tail.into_iter().map(|(_, id)| id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.by_bound.is_empty()
    }
}

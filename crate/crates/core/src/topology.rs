//! Network topology: a validated single origin-destination DAG.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::maxflow::EdmondsKarp;

/// Node identifier; the origin is `0` and the destination is `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of a link in [`Topology::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl LinkId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Raw link description accepted by [`Topology::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub tail: usize,
    pub head: usize,
    pub rho_max: f64,
}

impl LinkSpec {
    pub fn new(name: impl Into<String>, tail: usize, head: usize, rho_max: f64) -> Self {
        Self {
            name: name.into(),
            tail,
            head,
            rho_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub tail: NodeId,
    pub head: NodeId,
    pub rho_max: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("network has no links")]
    Empty,
    #[error("link `{link}` references node {node}, outside 0..{node_count}")]
    DanglingLink {
        link: String,
        node: usize,
        node_count: usize,
    },
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link `{link}` has non-positive density capacity {rho_max}")]
    InvalidDensityCapacity { link: String, rho_max: f64 },
    #[error("the link graph contains a directed cycle")]
    CycleDetected,
    #[error("nodes {0:?} have no incoming links; exactly one origin is allowed")]
    MultipleOrigins(Vec<usize>),
    #[error("nodes {0:?} have no outgoing links; exactly one destination is allowed")]
    MultipleDestinations(Vec<usize>),
    #[error("node labels are not topological: {0}")]
    LabelingViolation(String),
    #[error("node {0} does not lie on an origin-destination path")]
    UnreachableNode(usize),
}

/// An origin-destination cut `U` (contains the origin, not the destination).
#[derive(Debug, Clone, PartialEq)]
pub struct CutReport {
    pub cut_node_set: Vec<NodeId>,
    pub crossing_links: Vec<LinkId>,
    pub capacity: f64,
}

/// Validated topology. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    links: Vec<Link>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
    distance: Vec<usize>,
    layers: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Validates `links` over nodes `0..node_count` and builds the topology.
    ///
    /// Node labels must already be topological (`tail < head` on every link);
    /// they are verified, never relabelled.
    pub fn new(node_count: usize, links: Vec<LinkSpec>) -> Result<Self, TopologyError> {
        if links.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (i, l) in links.iter().enumerate() {
            for node in [l.tail, l.head] {
                if node >= node_count {
                    return Err(TopologyError::DanglingLink {
                        link: l.name.clone(),
                        node,
                        node_count,
                    });
                }
            }
            if links[..i].iter().any(|o| o.name == l.name) {
                return Err(TopologyError::DuplicateLink(l.name.clone()));
            }
            if !(l.rho_max > 0.0 && l.rho_max.is_finite()) {
                return Err(TopologyError::InvalidDensityCapacity {
                    link: l.name.clone(),
                    rho_max: l.rho_max,
                });
            }
        }

        let mut out_links = vec![Vec::new(); node_count];
        let mut in_links = vec![Vec::new(); node_count];
        for (i, l) in links.iter().enumerate() {
            out_links[l.tail].push(LinkId(i));
            in_links[l.head].push(LinkId(i));
        }

        // Kahn's algorithm.
        let mut indegree: Vec<usize> = in_links.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..node_count).filter(|&v| indegree[v] == 0).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop_front() {
            visited += 1;
            for &LinkId(e) in &out_links[v] {
                let w = links[e].head;
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if visited != node_count {
            return Err(TopologyError::CycleDetected);
        }

        let origins: Vec<usize> = (0..node_count).filter(|&v| in_links[v].is_empty()).collect();
        if origins.len() != 1 {
            return Err(TopologyError::MultipleOrigins(origins));
        }
        let destinations: Vec<usize> = (0..node_count)
            .filter(|&v| out_links[v].is_empty())
            .collect();
        if destinations.len() != 1 {
            return Err(TopologyError::MultipleDestinations(destinations));
        }
        if origins[0] != 0 {
            return Err(TopologyError::LabelingViolation(alloc::format!(
                "origin is node {}, expected 0",
                origins[0]
            )));
        }
        if destinations[0] != node_count - 1 {
            return Err(TopologyError::LabelingViolation(alloc::format!(
                "destination is node {}, expected {}",
                destinations[0],
                node_count - 1
            )));
        }
        if let Some(l) = links.iter().find(|l| l.tail >= l.head) {
            return Err(TopologyError::LabelingViolation(alloc::format!(
                "link `{}` goes from {} to {}",
                l.name,
                l.tail,
                l.head
            )));
        }

        let distance = bfs_distance(node_count, &out_links, &links, 0);
        if let Some(v) = (0..node_count).find(|&v| distance[v] == usize::MAX) {
            return Err(TopologyError::UnreachableNode(v));
        }
        // Every node must also reach the destination.
        let mut reaches = vec![false; node_count];
        reaches[node_count - 1] = true;
        for v in (0..node_count).rev() {
            if out_links[v].iter().any(|&LinkId(e)| reaches[links[e].head]) {
                reaches[v] = true;
            }
        }
        if let Some(v) = (0..node_count).find(|&v| !reaches[v]) {
            return Err(TopologyError::UnreachableNode(v));
        }

        let j_star = (0..node_count - 1).map(|v| distance[v]).max().unwrap_or(0);
        let mut layers = vec![Vec::new(); j_star + 1];
        for v in 0..node_count - 1 {
            layers[distance[v]].push(NodeId(v));
        }

        let links = links
            .into_iter()
            .map(|l| Link {
                name: l.name,
                tail: NodeId(l.tail),
                head: NodeId(l.head),
                rho_max: l.rho_max,
            })
            .collect();

        Ok(Self {
            node_count,
            links,
            out_links,
            in_links,
            distance,
            layers,
        })
    }

    /// Number of nodes, `n + 1`.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn origin(&self) -> NodeId {
        NodeId(0)
    }

    pub fn destination(&self) -> NodeId {
        NodeId(self.node_count - 1)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name).map(LinkId)
    }

    /// Outgoing links `E_v^+`, in input order.
    pub fn out_links(&self, v: NodeId) -> &[LinkId] {
        &self.out_links[v.0]
    }

    /// Incoming links `E_v^-`, in input order.
    pub fn in_links(&self, v: NodeId) -> &[LinkId] {
        &self.in_links[v.0]
    }

    /// Non-destination nodes, in topological (label) order.
    pub fn routing_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count - 1).map(NodeId)
    }

    /// Hop distance from the origin.
    pub fn distance(&self, v: NodeId) -> usize {
        self.distance[v.0]
    }

    /// `layers()[j]` holds the non-destination nodes at distance `j`.
    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    /// Largest distance of a non-destination node from the origin.
    pub fn j_star(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn rho_max(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.rho_max).collect()
    }

    /// True iff every non-destination node is reached from the origin by
    /// exactly one path.
    pub fn is_tree_like(&self) -> bool {
        // Path counts saturate at 2; labels are topological.
        let mut paths = vec![0u8; self.node_count];
        paths[0] = 1;
        for v in 1..self.node_count {
            let total: u32 = self.in_links[v]
                .iter()
                .map(|&e| u32::from(paths[self.links[e.0].tail.0]))
                .sum();
            paths[v] = total.min(2) as u8;
        }
        paths[..self.node_count - 1].iter().all(|&p| p == 1)
    }

    /// Capacity of the cut `U = { v : in_cut[v] }` under link capacities `caps`.
    pub fn cut(&self, in_cut: &[bool], caps: &[f64]) -> CutReport {
        let crossing_links: Vec<LinkId> = (0..self.links.len())
            .filter(|&e| in_cut[self.links[e].tail.0] && !in_cut[self.links[e].head.0])
            .map(LinkId)
            .collect();
        let capacity = crossing_links.iter().map(|e| caps[e.0]).sum();
        CutReport {
            cut_node_set: (0..self.node_count)
                .filter(|&v| in_cut[v])
                .map(NodeId)
                .collect(),
            crossing_links,
            capacity,
        }
    }

    /// Minimum origin-destination cut under link capacities `caps`
    /// (one entry per link), found through a maximum flow.
    pub fn min_cut(&self, caps: &[f64]) -> CutReport {
        assert_eq!(caps.len(), self.links.len(), "one capacity per link");
        let mut net = EdmondsKarp::new(self.node_count);
        for (l, &c) in self.links.iter().zip(caps) {
            net.add_edge(l.tail.0, l.head.0, c);
        }
        net.max_flow(0, self.node_count - 1);
        let side = net.source_side(0);
        self.cut(&side, caps)
    }
}

fn bfs_distance(
    node_count: usize,
    out_links: &[Vec<LinkId>],
    links: &[LinkSpec],
    from: usize,
) -> Vec<usize> {
    let mut dist = vec![usize::MAX; node_count];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &LinkId(e) in &out_links[v] {
            let w = links[e].head;
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn figure1() -> Topology {
        Topology::new(
            3,
            vec![
                LinkSpec::new("e1", 0, 2, 1.0),
                LinkSpec::new("e2", 0, 1, 1.0),
                LinkSpec::new("e3", 1, 2, 1.0),
                LinkSpec::new("e4", 1, 2, 1.0),
            ],
        )
        .unwrap()
    }

    fn diamond() -> Topology {
        Topology::new(
            5,
            vec![
                LinkSpec::new("a", 0, 1, 1.0),
                LinkSpec::new("b", 0, 2, 1.0),
                LinkSpec::new("c", 1, 3, 1.0),
                LinkSpec::new("d", 2, 3, 1.0),
                LinkSpec::new("e", 3, 4, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn figure1_layers() {
        let t = figure1();
        assert_eq!(t.layers(), &[vec![NodeId(0)], vec![NodeId(1)]]);
        assert_eq!(t.j_star(), 1);
        assert_eq!(t.out_links(NodeId(1)), &[LinkId(2), LinkId(3)]);
        assert_eq!(t.in_links(NodeId(2)), &[LinkId(0), LinkId(2), LinkId(3)]);
        assert!(t.is_tree_like());
    }

    #[test]
    fn single_link() {
        let t = Topology::new(2, vec![LinkSpec::new("l", 0, 1, 1.0)]).unwrap();
        assert_eq!(t.layers(), &[vec![NodeId(0)]]);
        assert_eq!(t.j_star(), 0);
        assert!(t.is_tree_like());
    }

    #[test]
    fn two_cycle_rejected() {
        let err = Topology::new(
            2,
            vec![LinkSpec::new("a", 0, 1, 1.0), LinkSpec::new("b", 1, 0, 1.0)],
        )
        .unwrap_err();
        assert_eq!(err, TopologyError::CycleDetected);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(Topology::new(2, vec![]).unwrap_err(), TopologyError::Empty);
        assert!(matches!(
            Topology::new(2, vec![LinkSpec::new("a", 0, 2, 1.0)]),
            Err(TopologyError::DanglingLink { node: 2, .. })
        ));
        assert!(matches!(
            Topology::new(
                3,
                vec![LinkSpec::new("a", 0, 2, 1.0), LinkSpec::new("b", 1, 2, 1.0)]
            ),
            Err(TopologyError::MultipleOrigins(_))
        ));
        assert!(matches!(
            Topology::new(
                3,
                vec![LinkSpec::new("a", 0, 1, 1.0), LinkSpec::new("b", 0, 2, 1.0)]
            ),
            Err(TopologyError::MultipleDestinations(_))
        ));
        assert!(matches!(
            Topology::new(
                3,
                vec![LinkSpec::new("a", 0, 2, 1.0), LinkSpec::new("b", 2, 1, 1.0)]
            ),
            Err(TopologyError::LabelingViolation(_))
        ));
        assert!(matches!(
            Topology::new(2, vec![LinkSpec::new("a", 0, 1, 0.0)]),
            Err(TopologyError::InvalidDensityCapacity { .. })
        ));
        assert!(matches!(
            Topology::new(
                2,
                vec![LinkSpec::new("a", 0, 1, 1.0), LinkSpec::new("a", 0, 1, 1.0)]
            ),
            Err(TopologyError::DuplicateLink(_))
        ));
    }

    #[test]
    fn diamond_is_not_tree_like() {
        let t = diamond();
        assert!(!t.is_tree_like());
        assert_eq!(t.layers().len(), 3);
    }

    #[test]
    fn min_cut_examples() {
        let t = figure1();
        let cut = t.min_cut(&[3.0, 1.5, 0.75, 0.75]);
        assert!((cut.capacity - 4.5).abs() < 1e-12);
        assert!(cut.cut_node_set.contains(&NodeId(0)));
        assert!(!cut.cut_node_set.contains(&NodeId(2)));

        let t = Topology::new(2, vec![LinkSpec::new("l", 0, 1, 1.0)]).unwrap();
        assert_eq!(t.min_cut(&[5.0]).capacity, 5.0);

        let t = Topology::new(
            2,
            vec![LinkSpec::new("a", 0, 1, 1.0), LinkSpec::new("b", 0, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(t.min_cut(&[1.0, 2.0]).capacity, 3.0);
    }
}

//! Geometric and graph value types shared by every module.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar point or displacement in meters.
pub type Vec2 = Vector2<f64>;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar pose in the common frame. Heading is normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

/// Euclidean distance between the positions of two poses.
pub fn true_range(a: &Pose2, b: &Pose2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Dense agent index in `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered agent pair, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Edge {
    a: usize,
    b: usize,
}

impl Edge {
    pub fn new(i: usize, j: usize) -> Self {
        Self { a: i.min(j), b: i.max(j) }
    }

    pub fn lo(&self) -> usize {
        self.a
    }

    pub fn hi(&self) -> usize {
        self.b
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.a == agent || self.b == agent
    }

    /// The endpoint that is not `agent`, if `agent` is an endpoint.
    pub fn other(&self, agent: usize) -> Option<usize> {
        if agent == self.a {
            Some(self.b)
        } else if agent == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

impl From<[usize; 2]> for Edge {
    fn from(v: [usize; 2]) -> Self {
        Edge::new(v[0], v[1])
    }
}

impl From<Edge> for [usize; 2] {
    fn from(e: Edge) -> Self {
        [e.a, e.b]
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// Undirected ranging graph over `n_agents` agents. Need not be connected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct RangingGraph {
    n_agents: usize,
    edges: BTreeSet<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n_agents: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for RangingGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        RangingGraph::new(r.n_agents, r.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<RangingGraph> for GraphRepr {
    fn from(g: RangingGraph) -> Self {
        GraphRepr { n_agents: g.n_agents, edges: g.edges.iter().map(|&e| e.into()).collect() }
    }
}

impl RangingGraph {
    /// Builds the graph, deduplicating `(i,j)`/`(j,i)` and rejecting self-loops.
    pub fn new<I>(n_agents: usize, edge_list: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = BTreeSet::new();
        for (i, j) in edge_list {
            for index in [i, j] {
                if index >= n_agents {
                    return Err(Error::IndexOutOfRange { index, n_agents });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            edges.insert(Edge::new(i, j));
        }
        Ok(Self { n_agents, edges })
    }

    pub fn complete(n_agents: usize) -> Self {
        let edges = (0..n_agents).flat_map(|i| (i + 1..n_agents).map(move |j| Edge::new(i, j))).collect();
        Self { n_agents, edges }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&Edge::new(i, j))
    }

    pub fn contains_edge(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    /// Edges in ascending `(lo, hi)` order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn neighbors(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |e| e.other(agent))
    }
}

/// Rectangular arena used for uniform particle initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ArenaBounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let b = Self { x_min, x_max, y_min, y_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(Error::EmptyBounds { x_min: self.x_min, x_max: self.x_max, y_min: self.y_min, y_max: self.y_max })
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub position: Vec2,
}

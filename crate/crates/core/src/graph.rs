//! Infinite, locally finite graphs given by a lazy neighbor oracle, together
//! with the boundary calculus on finite regions.
//!
//! Only finite truncations of a graph are ever materialized. Vertices carry a
//! fixed total order (lexicographic on their integer coordinates) so that all
//! downstream enumerations and tensor-leg orderings are deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {0} is not a vertex of the graph")]
    UnknownVertex(VertexId),
    #[error("region must be nonempty")]
    EmptyRegion,
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("asymmetric adjacency: {from} lists {to} but not conversely")]
    Asymmetric { from: VertexId, to: VertexId },
    #[error("invalid graph spec: {0}")]
    InvalidSpec(String),
}

/// A vertex identifier: an integer index or an integer coordinate tuple.
///
/// Ordering is lexicographic on the coordinates, which for single-index
/// vertices is the usual integer order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(SmallVec<[i64; 2]>);

impl VertexId {
    pub fn index(i: i64) -> Self {
        VertexId(smallvec::smallvec![i])
    }

    pub fn coords(c: &[i64]) -> Self {
        VertexId(SmallVec::from_slice(c))
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    /// Stable 64-bit key (FNV-1a over the little-endian coordinates). Used to
    /// derive per-site random streams.
    pub fn stable_key(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in self.0.iter() {
            for b in c.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (i, c) in self.0.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<i64> for VertexId {
    fn from(i: i64) -> Self {
        VertexId::index(i)
    }
}

impl<const N: usize> From<[i64; N]> for VertexId {
    fn from(c: [i64; N]) -> Self {
        VertexId::coords(&c)
    }
}

// Single-index vertices serialize as a bare integer, coordinate tuples as arrays.
impl Serialize for VertexId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            s.serialize_i64(self.0[0])
        } else {
            self.0.as_slice().serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(i64),
            Coords(Vec<i64>),
        }
        match Raw::deserialize(d)? {
            Raw::Index(i) => Ok(VertexId::index(i)),
            Raw::Coords(c) if !c.is_empty() => Ok(VertexId::coords(&c)),
            Raw::Coords(_) => Err(serde::de::Error::custom("empty vertex coordinate list")),
        }
    }
}

/// A finite set of vertices kept sorted in the canonical vertex order.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<VertexId>", into = "Vec<VertexId>")]
pub struct Region(Vec<VertexId>);

impl From<Vec<VertexId>> for Region {
    fn from(mut v: Vec<VertexId>) -> Self {
        v.sort();
        v.dedup();
        Region(v)
    }
}

impl From<Region> for Vec<VertexId> {
    fn from(r: Region) -> Self {
        r.0
    }
}

impl FromIterator<VertexId> for Region {
    fn from_iter<I: IntoIterator<Item = VertexId>>(iter: I) -> Self {
        Region::from(iter.into_iter().collect::<Vec<_>>())
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a VertexId;
    type IntoIter = std::slice::Iter<'a, VertexId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl Region {
    pub fn empty() -> Self {
        Region(Vec::new())
    }

    pub fn singleton(v: VertexId) -> Self {
        Region(vec![v])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VertexId> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[VertexId] {
        &self.0
    }

    pub fn first(&self) -> Option<&VertexId> {
        self.0.first()
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        self.0.binary_search(v).is_ok()
    }

    /// Position of `v` in canonical order, if present.
    pub fn position(&self, v: &VertexId) -> Option<usize> {
        self.0.binary_search(v).ok()
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Region(out)
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region(self.0.iter().filter(|v| other.contains(v)).cloned().collect())
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region(self.0.iter().filter(|v| !other.contains(v)).cloned().collect())
    }

    pub fn symmetric_difference(&self, other: &Region) -> Region {
        self.difference(other).union(&other.difference(self))
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.0.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.0.iter().all(|v| !large.contains(v))
    }

    pub fn insert(&mut self, v: VertexId) {
        if let Err(pos) = self.0.binary_search(&v) {
            self.0.insert(pos, v);
        }
    }
}

/// Graph generators understood by [`make_graph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Path on vertices `1, 2, 3, ...`; infinite (a half-line) when `n` is absent.
    Path {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
    },
    /// Cycle on vertices `1..=n`.
    Cycle { n: u64 },
    /// Regular tree with coordination number `k`; vertices numbered in BFS
    /// discovery order from the origin `0`.
    RegularTree { k: u64 },
    /// The integer lattice of dimension `d` with nearest-neighbor edges.
    Lattice { d: usize },
    /// Undirected edge list; duplicates collapse to a single edge.
    EdgeList { edges: Vec<[VertexId; 2]> },
    /// Explicit adjacency lists, which must be symmetric.
    Adjacency { neighbors: Vec<(VertexId, Vec<VertexId>)> },
}

/// Source of nearest neighbors. Implementations must be pure and thread safe.
pub trait NeighborOracle: Send + Sync + fmt::Debug {
    /// Neighbors of `v` in any order; `Err` for vertices outside the graph.
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError>;

    /// The full vertex set, when finite.
    fn vertices(&self) -> Option<Region> {
        None
    }
}

#[derive(Debug)]
struct PathOracle {
    n: Option<u64>,
}

impl NeighborOracle for PathOracle {
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError> {
        let i = single_index(v)?;
        let last = self.n.map(|n| n as i64).unwrap_or(i64::MAX);
        if i < 1 || i > last {
            return Err(GraphError::UnknownVertex(v.clone()));
        }
        let mut out = Vec::with_capacity(2);
        if i > 1 {
            out.push(VertexId::index(i - 1));
        }
        if i < last {
            out.push(VertexId::index(i + 1));
        }
        Ok(out)
    }

    fn vertices(&self) -> Option<Region> {
        self.n.map(|n| (1..=n as i64).map(VertexId::index).collect())
    }
}

#[derive(Debug)]
struct CycleOracle {
    n: i64,
}

impl NeighborOracle for CycleOracle {
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError> {
        let i = single_index(v)?;
        if i < 1 || i > self.n {
            return Err(GraphError::UnknownVertex(v.clone()));
        }
        let prev = if i == 1 { self.n } else { i - 1 };
        let next = if i == self.n { 1 } else { i + 1 };
        Ok(vec![VertexId::index(prev), VertexId::index(next)])
    }

    fn vertices(&self) -> Option<Region> {
        Some((1..=self.n).map(VertexId::index).collect())
    }
}

/// Regular tree in BFS numbering: the root `0` has children `1..=k`; every
/// other vertex `v` has the `k-1` children starting at `k + 1 + (v-1)(k-1)`.
#[derive(Debug)]
struct TreeOracle {
    k: i64,
}

impl NeighborOracle for TreeOracle {
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError> {
        let i = single_index(v)?;
        if i < 0 {
            return Err(GraphError::UnknownVertex(v.clone()));
        }
        let k = self.k;
        if i == 0 {
            return Ok((1..=k).map(VertexId::index).collect());
        }
        let parent = if i <= k { 0 } else { 1 + (i - k - 1) / (k - 1) };
        let first_child = k + 1 + (i - 1) * (k - 1);
        let mut out = Vec::with_capacity(k as usize);
        out.push(VertexId::index(parent));
        out.extend((first_child..first_child + k - 1).map(VertexId::index));
        Ok(out)
    }
}

#[derive(Debug)]
struct LatticeOracle {
    d: usize,
}

impl NeighborOracle for LatticeOracle {
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError> {
        let c = v.as_slice();
        if c.len() != self.d {
            return Err(GraphError::UnknownVertex(v.clone()));
        }
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            for step in [-1i64, 1] {
                let mut w: SmallVec<[i64; 2]> = SmallVec::from_slice(c);
                w[axis] += step;
                out.push(VertexId(w));
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
struct ExplicitOracle {
    adjacency: BTreeMap<VertexId, Region>,
}

impl NeighborOracle for ExplicitOracle {
    fn neighbors(&self, v: &VertexId) -> Result<Vec<VertexId>, GraphError> {
        self.adjacency
            .get(v)
            .map(|r| r.as_slice().to_vec())
            .ok_or_else(|| GraphError::UnknownVertex(v.clone()))
    }

    fn vertices(&self) -> Option<Region> {
        Some(self.adjacency.keys().cloned().collect())
    }
}

fn single_index(v: &VertexId) -> Result<i64, GraphError> {
    match v.as_slice() {
        [i] => Ok(*i),
        _ => Err(GraphError::UnknownVertex(v.clone())),
    }
}

/// An undirected simple graph behind a neighbor oracle. Cheap to clone.
#[derive(Clone, Debug)]
pub struct Graph {
    oracle: Arc<dyn NeighborOracle>,
    spec: Option<GraphSpec>,
}

impl Graph {
    pub fn from_oracle(oracle: Arc<dyn NeighborOracle>) -> Self {
        Graph { oracle, spec: None }
    }

    pub fn spec(&self) -> Option<&GraphSpec> {
        self.spec.as_ref()
    }

    /// `N_y` in canonical order.
    pub fn neighbors(&self, y: &VertexId) -> Result<Region, GraphError> {
        let n = Region::from(self.oracle.neighbors(y)?);
        if n.contains(y) {
            return Err(GraphError::SelfLoop(y.clone()));
        }
        Ok(n)
    }

    /// The plaquette `{y} ∪ N_y`.
    pub fn plaquette(&self, y: &VertexId) -> Result<Region, GraphError> {
        let mut p = self.neighbors(y)?;
        p.insert(y.clone());
        Ok(p)
    }

    pub fn contains(&self, y: &VertexId) -> bool {
        self.oracle.neighbors(y).is_ok()
    }

    pub fn vertices(&self) -> Option<Region> {
        self.oracle.vertices()
    }

    /// Checks `y ∈ N_x ⇒ x ∈ N_y` for every `x` in `region`.
    pub fn check_symmetry(&self, region: &Region) -> Result<(), GraphError> {
        for x in region {
            for y in &self.neighbors(x)? {
                if !self.neighbors(y)?.contains(x) {
                    return Err(GraphError::Asymmetric { from: x.clone(), to: y.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn boundaries(&self, region: &Region) -> Result<Boundaries, GraphError> {
        if region.is_empty() {
            return Err(GraphError::EmptyRegion);
        }
        let mut internal = Vec::new();
        let mut external = BTreeSet::new();
        for x in region {
            let mut on_boundary = false;
            for y in &self.neighbors(x)? {
                if !region.contains(y) {
                    on_boundary = true;
                    external.insert(y.clone());
                }
            }
            if on_boundary {
                internal.push(x.clone());
            }
        }
        let internal = Region::from(internal);
        let external: Region = external.into_iter().collect();
        Ok(Boundaries {
            interior: region.difference(&internal),
            closure: region.union(&external),
            internal,
            external,
        })
    }

    /// Breadth-first search for a shortest edge path from `x` to `y` that
    /// stays within `max_radius` steps of `x`. Neighbors are explored in
    /// canonical order, so ties resolve towards smaller vertices.
    pub fn edge_path(
        &self,
        x: &VertexId,
        y: &VertexId,
        max_radius: usize,
    ) -> Result<PathSearch, GraphError> {
        self.neighbors(x)?;
        self.neighbors(y)?;
        if x == y {
            return Ok(PathSearch::Found { path: vec![x.clone()], length: 0 });
        }
        let mut parent: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        let mut dist: BTreeMap<VertexId, usize> = BTreeMap::new();
        dist.insert(x.clone(), 0);
        let mut queue = VecDeque::from([x.clone()]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            if du == max_radius {
                continue;
            }
            for w in &self.neighbors(&u)? {
                if dist.contains_key(w) {
                    continue;
                }
                dist.insert(w.clone(), du + 1);
                parent.insert(w.clone(), u.clone());
                if w == y {
                    let mut path = vec![y.clone()];
                    let mut cur = y;
                    while let Some(p) = parent.get(cur) {
                        path.push(p.clone());
                        cur = p;
                    }
                    path.reverse();
                    let length = path.len() - 1;
                    return Ok(PathSearch::Found { path, length });
                }
                queue.push_back(w.clone());
            }
        }
        Ok(PathSearch::NotFoundWithinRadius { radius: max_radius })
    }

    /// The ball of radius `radius` around `center`, and whether it already
    /// exhausts a finite graph.
    pub fn connectivity_within(
        &self,
        center: &VertexId,
        radius: usize,
    ) -> Result<Connectivity, GraphError> {
        let mut seen: BTreeSet<VertexId> = BTreeSet::from([center.clone()]);
        let mut frontier = vec![center.clone()];
        for _ in 0..radius {
            let mut next = Vec::new();
            for u in &frontier {
                for w in &self.neighbors(u)? {
                    if seen.insert(w.clone()) {
                        next.push(w.clone());
                    }
                }
            }
            frontier = next;
        }
        let ball: Region = seen.into_iter().collect();
        let exhausts_graph = self.vertices().map(|v| v.len() == ball.len()).unwrap_or(false);
        Ok(Connectivity { radius, ball_size: ball.len(), exhausts_graph })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Boundaries {
    pub internal: Region,
    pub interior: Region,
    pub external: Region,
    pub closure: Region,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathSearch {
    Found { path: Vec<VertexId>, length: usize },
    /// Possibly disconnected within the searched radius.
    NotFoundWithinRadius { radius: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Connectivity {
    pub radius: usize,
    pub ball_size: usize,
    pub exhausts_graph: bool,
}

pub fn make_graph(spec: &GraphSpec) -> Result<Graph, GraphError> {
    let oracle: Arc<dyn NeighborOracle> = match spec {
        GraphSpec::Path { n } => {
            if *n == Some(0) {
                return Err(GraphError::InvalidSpec("path needs at least one vertex".into()));
            }
            Arc::new(PathOracle { n: *n })
        }
        GraphSpec::Cycle { n } => {
            if *n < 3 {
                return Err(GraphError::InvalidSpec("cycle needs at least 3 vertices".into()));
            }
            Arc::new(CycleOracle { n: *n as i64 })
        }
        GraphSpec::RegularTree { k } => {
            if *k < 2 {
                return Err(GraphError::InvalidSpec("tree coordination must be at least 2".into()));
            }
            Arc::new(TreeOracle { k: *k as i64 })
        }
        GraphSpec::Lattice { d } => {
            if *d == 0 {
                return Err(GraphError::InvalidSpec("lattice dimension must be positive".into()));
            }
            Arc::new(LatticeOracle { d: *d })
        }
        GraphSpec::EdgeList { edges } => {
            let mut adj: BTreeMap<VertexId, BTreeSet<VertexId>> = BTreeMap::new();
            for [a, b] in edges {
                if a == b {
                    return Err(GraphError::SelfLoop(a.clone()));
                }
                adj.entry(a.clone()).or_default().insert(b.clone());
                adj.entry(b.clone()).or_default().insert(a.clone());
            }
            let adjacency = adj.into_iter().map(|(v, n)| (v, n.into_iter().collect())).collect();
            Arc::new(ExplicitOracle { adjacency })
        }
        GraphSpec::Adjacency { neighbors } => {
            let mut adjacency: BTreeMap<VertexId, Region> = BTreeMap::new();
            for (v, n) in neighbors {
                let r = Region::from(n.clone());
                if r.contains(v) {
                    return Err(GraphError::SelfLoop(v.clone()));
                }
                adjacency.entry(v.clone()).or_default();
                let merged = adjacency[v].union(&r);
                adjacency.insert(v.clone(), merged);
            }
            for (v, n) in &adjacency {
                for w in n {
                    if !adjacency.get(w).map(|m| m.contains(v)).unwrap_or(false) {
                        return Err(GraphError::Asymmetric { from: v.clone(), to: w.clone() });
                    }
                }
            }
            Arc::new(ExplicitOracle { adjacency })
        }
    };
    Ok(Graph { oracle, spec: Some(spec.clone()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: i64) -> VertexId {
        VertexId::index(i)
    }

    fn region(ids: &[i64]) -> Region {
        ids.iter().copied().map(v).collect()
    }

    fn c(x: i64, y: i64) -> VertexId {
        VertexId::coords(&[x, y])
    }

    #[test]
    fn path_neighbors() {
        let g = make_graph(&GraphSpec::Path { n: Some(5) }).unwrap();
        assert_eq!(g.neighbors(&v(3)).unwrap(), region(&[2, 4]));
        assert_eq!(g.neighbors(&v(1)).unwrap(), region(&[2]));
        assert!(matches!(g.neighbors(&v(6)), Err(GraphError::UnknownVertex(_))));
    }

    #[test]
    fn tree_and_lattice_degrees() {
        let g = make_graph(&GraphSpec::RegularTree { k: 3 }).unwrap();
        assert_eq!(g.neighbors(&v(0)).unwrap(), region(&[1, 2, 3]));
        for i in 0..200 {
            assert_eq!(g.neighbors(&v(i)).unwrap().len(), 3);
        }
        g.check_symmetry(&(0..200).map(v).collect()).unwrap();

        let z2 = make_graph(&GraphSpec::Lattice { d: 2 }).unwrap();
        let n = z2.neighbors(&c(0, 0)).unwrap();
        assert_eq!(n, Region::from(vec![c(1, 0), c(-1, 0), c(0, 1), c(0, -1)]));
        assert_eq!(z2.neighbors(&c(7, -3)).unwrap().len(), 4);
    }

    #[test]
    fn edge_list_dedup_and_validation() {
        let g = make_graph(&GraphSpec::EdgeList { edges: vec![[v(1), v(2)], [v(2), v(1)]] }).unwrap();
        assert_eq!(g.neighbors(&v(1)).unwrap(), region(&[2]));
        assert_eq!(g.neighbors(&v(2)).unwrap(), region(&[1]));
        assert_eq!(
            make_graph(&GraphSpec::EdgeList { edges: vec![[v(1), v(1)]] }).unwrap_err(),
            GraphError::SelfLoop(v(1))
        );
        let asym = GraphSpec::Adjacency { neighbors: vec![(v(1), vec![v(2)]), (v(2), vec![])] };
        assert!(matches!(make_graph(&asym), Err(GraphError::Asymmetric { .. })));
    }

    #[test]
    fn boundaries_on_path() {
        let g = make_graph(&GraphSpec::Path { n: Some(5) }).unwrap();
        let b = g.boundaries(&region(&[1, 2, 3])).unwrap();
        assert_eq!(b.internal, region(&[3]));
        assert_eq!(b.interior, region(&[1, 2]));
        assert_eq!(b.external, region(&[4]));
        assert_eq!(b.closure, region(&[1, 2, 3, 4]));

        let all = g.vertices().unwrap();
        let b = g.boundaries(&all).unwrap();
        assert!(b.internal.is_empty() && b.external.is_empty());
        assert_eq!(b.interior, all);
        assert_eq!(b.closure, all);

        assert_eq!(g.boundaries(&Region::empty()).unwrap_err(), GraphError::EmptyRegion);
    }

    #[test]
    fn boundaries_of_lattice_plus() {
        let g = make_graph(&GraphSpec::Lattice { d: 2 }).unwrap();
        let plus = Region::from(vec![c(0, 0), c(1, 0), c(-1, 0), c(0, 1), c(0, -1)]);
        let b = g.boundaries(&plus).unwrap();
        assert_eq!(b.internal, plus.difference(&Region::singleton(c(0, 0))));
        // brute force: every lattice point at distance one from the plus but outside it
        let mut expected = Vec::new();
        for x in -3..=3 {
            for y in -3..=3 {
                let p = c(x, y);
                if plus.contains(&p) {
                    continue;
                }
                if plus.iter().any(|q| {
                    let (a, b) = (q.as_slice(), p.as_slice());
                    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() == 1
                }) {
                    expected.push(p);
                }
            }
        }
        assert_eq!(expected.len(), 8);
        assert_eq!(b.external, Region::from(expected));
    }

    #[test]
    fn edge_paths() {
        let g = make_graph(&GraphSpec::Path { n: None }).unwrap();
        assert_eq!(
            g.edge_path(&v(1), &v(4), 10).unwrap(),
            PathSearch::Found { path: vec![v(1), v(2), v(3), v(4)], length: 3 }
        );
        assert_eq!(
            g.edge_path(&v(2), &v(2), 0).unwrap(),
            PathSearch::Found { path: vec![v(2)], length: 0 }
        );
        assert_eq!(
            g.edge_path(&v(1), &v(9), 3).unwrap(),
            PathSearch::NotFoundWithinRadius { radius: 3 }
        );
        let z2 = make_graph(&GraphSpec::Lattice { d: 2 }).unwrap();
        match z2.edge_path(&c(0, 0), &c(1, 1), 4).unwrap() {
            PathSearch::Found { path, length } => {
                assert_eq!(length, 2);
                assert_eq!(path, vec![c(0, 0), c(0, 1), c(1, 1)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vertex_json_forms() {
        assert_eq!(serde_json::to_string(&v(4)).unwrap(), "4");
        assert_eq!(serde_json::to_string(&c(1, -2)).unwrap(), "[1,-2]");
        let back: VertexId = serde_json::from_str("[1,-2]").unwrap();
        assert_eq!(back, c(1, -2));
        let r: Region = serde_json::from_str("[3,1,2,1]").unwrap();
        assert_eq!(r, region(&[1, 2, 3]));
    }
}

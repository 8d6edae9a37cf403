//! Blocks of labelled points, tanglings and the multigraph ℋ(n,𝓉,A).

use serde::{Deserialize, Serialize};

use super::EvenPartition;
use crate::currents::{Current, Moment};
use crate::error::{Error, Result};
use crate::gs::{CouplingGraph, IsingCurrent};
use crate::union_find::UnionFind;

/// A labelled point of a block ℬ_z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Point {
    /// k-th unit of current `current` on the pair {z, y}
    Edge { current: usize, y: usize, k: u32 },
    /// k-th copy of the source mark `mark` at z
    Source { mark: usize, k: u32 },
}

/// Sources A (or B) attached to one of the currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMark {
    pub moment: Moment,
    pub current: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub owner: usize,
    pub points: Vec<Point>,
}

impl Block {
    pub fn of(z: usize, currents: &[Current], marks: &[SourceMark]) -> Block {
        let mut points = Vec::new();
        for (c, n) in currents.iter().enumerate() {
            for y in 0..=n.n_vertices {
                if y == z {
                    continue;
                }
                for k in 0..n.get(z, y) {
                    points.push(Point::Edge { current: c, y, k });
                }
            }
        }
        for (l, m) in marks.iter().enumerate() {
            for k in 0..m.moment.x[z] {
                points.push(Point::Source { mark: l, k });
            }
        }
        Block { owner: z, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Which current's sub-block a point belongs to.
    pub fn sub_block(&self, i: usize, marks: &[SourceMark]) -> usize {
        match self.points[i] {
            Point::Edge { current, .. } => current,
            Point::Source { mark, .. } => marks[mark].current,
        }
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.points.iter().position(|q| q == p)
    }
}

/// Currents, their source marks and one partition per block of Λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangledCurrent {
    pub currents: Vec<Current>,
    pub marks: Vec<SourceMark>,
    pub tangling: Vec<EvenPartition>,
}

impl TangledCurrent {
    pub fn new(currents: Vec<Current>, marks: Vec<SourceMark>, tangling: Vec<EvenPartition>) -> Result<Self> {
        let lam = currents.first().map(|c| c.n_vertices).unwrap_or(0);
        if currents.iter().any(|c| c.n_vertices != lam) || marks.iter().any(|m| m.moment.x.len() != lam || m.current >= currents.len()) {
            return Err(Error::Contract("currents and marks live on different vertex sets".into()));
        }
        if tangling.len() != lam {
            return Err(Error::Contract(format!("{} partitions for {lam} blocks", tangling.len())));
        }
        for z in 0..lam {
            let b = Block::of(z, &currents, &marks);
            let p = &tangling[z];
            if p.size != b.len() {
                return Err(Error::Contract(format!("block {z} has {} points, partition has {}", b.len(), p.size)));
            }
            if !p.is_even() {
                return Err(Error::Contract(format!("partition at block {z} has an odd class")));
            }
            if currents.len() > 1 {
                for c in &p.classes {
                    for cur in 0..currents.len() {
                        if c.iter().filter(|&&i| b.sub_block(i, &marks) == cur).count() % 2 == 1 {
                            return Err(Error::Contract(format!("partition at block {z} is not admissible")));
                        }
                    }
                }
            }
        }
        Ok(TangledCurrent { currents, marks, tangling })
    }

    /// The tangling with a single class per nonempty block.
    pub fn full_classes(currents: Vec<Current>, marks: Vec<SourceMark>) -> Result<Self> {
        let lam = currents.first().map(|c| c.n_vertices).unwrap_or(0);
        let t = (0..lam).map(|z| EvenPartition::whole(Block::of(z, &currents, &marks).len())).collect();
        Self::new(currents, marks, t)
    }

    pub fn n_vertices(&self) -> usize {
        self.tangling.len()
    }

    pub fn block(&self, z: usize) -> Block {
        Block::of(z, &self.currents, &self.marks)
    }
}

/// ℋ(n,𝓉,A): one node per partition class plus the ghost node (last).
#[derive(Debug, Clone)]
pub struct Multigraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// node of each (block, class)
    pub node_of: Vec<Vec<usize>>,
    /// owning block of each node; `None` for the ghost
    pub owner: Vec<Option<usize>>,
    uf: UnionFind,
}

impl Multigraph {
    pub fn build(tc: &TangledCurrent) -> Result<Self> {
        Self::build_restricted(tc, None)
    }

    /// Multigraph keeping only blocks in `region` (and the ghost when
    /// `region` says so through its last entry).
    pub fn build_restricted(tc: &TangledCurrent, region: Option<&[bool]>) -> Result<Self> {
        let lam = tc.n_vertices();
        let keep = |z: usize| region.map(|r| r[z]).unwrap_or(true);
        let mut node_of = Vec::with_capacity(lam);
        let mut owner = Vec::new();
        let mut next = 0;
        for z in 0..lam {
            let k = tc.tangling[z].classes.len();
            node_of.push((next..next + k).collect::<Vec<_>>());
            owner.extend(std::iter::repeat_n(Some(z), k));
            next += k;
        }
        let ghost = next;
        owner.push(None);
        let n_nodes = next + 1;
        let blocks: Vec<Block> = (0..lam).map(|z| tc.block(z)).collect();
        let class_of: Vec<Vec<usize>> = tc.tangling.iter().map(|p| p.class_of()).collect();
        let node = |z: usize, p: Point| -> Result<usize> {
            let i = blocks[z]
                .index_of(&p)
                .ok_or_else(|| Error::Contract(format!("point {p:?} missing from block {z}")))?;
            Ok(node_of[z][class_of[z][i]])
        };
        let mut edges = Vec::new();
        let mut uf = UnionFind::new(n_nodes);
        for (c, n) in tc.currents.iter().enumerate() {
            for (x, y, v) in n.entries() {
                let gx = y == n.ghost();
                let keep_edge = keep(x) && if gx { region.map(|r| r[lam]).unwrap_or(true) } else { keep(y) };
                if !keep_edge {
                    continue;
                }
                for k in 0..v {
                    let a = node(x, Point::Edge { current: c, y, k })?;
                    let b = if gx { ghost } else { node(y, Point::Edge { current: c, y: x, k })? };
                    edges.push((a, b));
                    uf.union(a, b);
                }
            }
        }
        Ok(Multigraph {
            n_nodes,
            edges,
            node_of,
            owner,
            uf,
        })
    }

    pub fn ghost(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn connected_nodes(&mut self, a: usize, b: usize) -> bool {
        self.uf.connected(a, b)
    }

    /// x ↔ y: some class of ℬ_x shares a component with some class of ℬ_y.
    pub fn blocks_connected(&mut self, x: usize, y: usize) -> bool {
        let (nx, ny) = (self.node_of[x].clone(), self.node_of[y].clone());
        nx.iter().any(|&a| ny.iter().any(|&b| self.uf.connected(a, b)))
    }

    /// Components restricted to nodes that carry at least one edge or belong
    /// to a nonempty block.
    pub fn component_labels(&mut self) -> Vec<usize> {
        self.uf.labels()
    }

    pub fn count_components(&mut self) -> usize {
        self.uf.count_components()
    }
}

/// ℱ_B^{Λ'}: in the multigraph restricted to Λ' (plus the ghost when
/// `region[|Λ|]`), every component meets the points of mark `b` evenly.
pub fn pairing_event_fb(tc: &TangledCurrent, b: usize, region: &[bool]) -> Result<bool> {
    let lam = tc.n_vertices();
    if region.len() != lam + 1 {
        return Err(Error::Contract("region needs one flag per vertex plus the ghost".into()));
    }
    let mark = tc.marks.get(b).ok_or_else(|| Error::Contract(format!("no mark {b}")))?;
    for z in 0..lam {
        if mark.moment.x[z] > 0 && !region[z] {
            return Err(Error::Contract(format!("B is not supported in the region (vertex {z})")));
        }
    }
    let mut mg = Multigraph::build_restricted(tc, Some(region))?;
    let mut parity = vec![false; mg.n_nodes];
    for z in 0..lam {
        if !region[z] {
            continue;
        }
        let blk = tc.block(z);
        let cls = tc.tangling[z].class_of();
        for (i, p) in blk.points.iter().enumerate() {
            if let Point::Source { mark: m, .. } = p {
                if *m == b {
                    let r = mg.uf.find(mg.node_of[z][cls[i]]);
                    parity[r] = !parity[r];
                }
            }
        }
    }
    if mark.moment.ghost % 2 == 1 && region[lam] {
        let r = mg.uf.find(mg.ghost());
        parity[r] = !parity[r];
    }
    Ok(!parity.iter().any(|&p| p))
}

/// Partition of the labelled source points by the clusters of the summed
/// currents. `points[i]` is the vertex carrying label i.
pub fn induced_source_partition(g: &CouplingGraph, currents: &[&IsingCurrent], points: &[usize]) -> Result<EvenPartition> {
    let mut uf = UnionFind::new(g.n);
    for c in currents {
        if c.values.len() != g.n_edges() {
            return Err(Error::Contract("current does not match the graph".into()));
        }
        for (i, &(u, v, _)) in g.edges.iter().enumerate() {
            if c.values[i] > 0 {
                uf.union(u, v);
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &p) in points.iter().enumerate() {
        if p >= g.n {
            return Err(Error::Contract(format!("point {p} not in graph")));
        }
        by_root.entry(uf.find(p)).or_default().push(i);
    }
    EvenPartition::new(points.len(), by_root.into_values().collect())
}

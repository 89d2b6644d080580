//! Structured hexahedral element meshes, weighted rank assignment, and
//! gather-scatter exchange volumes.
//!
//! Elements carry identical computational load, so a partition is fully
//! described by which rank owns each element. Communication between ranks
//! is unit-depth: for every mesh face whose two elements live on different
//! ranks, both sides exchange the `(N+1)^2` points shared across that face,
//! and nothing deeper.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh dimensions must be positive, got ({0}, {1}, {2})")]
    ZeroDimension(u32, u32, u32),
    #[error("rank counts sum to {got}, mesh has {expected} elements")]
    CountMismatch { expected: u64, got: u64 },
    #[error("rank weights must not all be zero")]
    AllZeroWeights,
    #[error("negative rank weight at rank {0}")]
    NegativeWeight(usize),
    #[error("partition covers {got} elements, mesh has {expected}")]
    PartitionMismatch { expected: u64, got: u64 },
    #[error("no rank {0} in this partition")]
    UnknownRank(usize),
    #[error("no box factorization of {elements} elements with aspect ratio <= {max_aspect}; pass explicit dimensions")]
    NoBoxFactorization { elements: u64, max_aspect: u32 },
}

/// Structured grid of `nx * ny * nz` hexahedral elements, indexed
/// lexicographically with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMesh {
    nx: u32,
    ny: u32,
    nz: u32,
}

impl BoxMesh {
    pub fn new(nx: u32, ny: u32, nz: u32) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(MeshError::ZeroDimension(nx, ny, nz));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn dims(&self) -> (u32, u32, u32) {
        (self.nx, self.ny, self.nz)
    }

    pub fn elements(&self) -> u64 {
        self.nx as u64 * self.ny as u64 * self.nz as u64
    }

    pub fn coords(&self, id: u64) -> (u32, u32, u32) {
        let nx = self.nx as u64;
        let ny = self.ny as u64;
        ((id % nx) as u32, ((id / nx) % ny) as u32, (id / (nx * ny)) as u32)
    }

    pub fn id(&self, x: u32, y: u32, z: u32) -> u64 {
        x as u64 + self.nx as u64 * (y as u64 + self.ny as u64 * z as u64)
    }

    /// Face neighbors of an element (6-connectivity; fewer on the boundary).
    pub fn face_neighbors(&self, id: u64) -> Vec<u64> {
        let (x, y, z) = self.coords(id);
        let mut out = Vec::with_capacity(6);
        if x > 0 {
            out.push(self.id(x - 1, y, z));
        }
        if x + 1 < self.nx {
            out.push(self.id(x + 1, y, z));
        }
        if y > 0 {
            out.push(self.id(x, y - 1, z));
        }
        if y + 1 < self.ny {
            out.push(self.id(x, y + 1, z));
        }
        if z > 0 {
            out.push(self.id(x, y, z - 1));
        }
        if z + 1 < self.nz {
            out.push(self.id(x, y, z + 1));
        }
        out
    }

    /// Number of interior (element-to-element) faces.
    pub fn interior_faces(&self) -> u64 {
        let (nx, ny, nz) = (self.nx as u64, self.ny as u64, self.nz as u64);
        (nx - 1) * ny * nz + nx * (ny - 1) * nz + nx * ny * (nz - 1)
    }

    /// Visit every interior face once as an (element, element) pair.
    pub fn for_each_face<F: FnMut(u64, u64)>(&self, mut f: F) {
        for z in 0..self.nz {
            for y in 0..self.ny {
                for x in 0..self.nx {
                    let a = self.id(x, y, z);
                    if x + 1 < self.nx {
                        f(a, self.id(x + 1, y, z));
                    }
                    if y + 1 < self.ny {
                        f(a, self.id(x, y + 1, z));
                    }
                    if z + 1 < self.nz {
                        f(a, self.id(x, y, z + 1));
                    }
                }
            }
        }
    }
}

/// Build a structured box mesh.
pub fn build_box_mesh(nx: u32, ny: u32, nz: u32) -> Result<BoxMesh, MeshError> {
    BoxMesh::new(nx, ny, nz)
}

/// Factor an element count into the box `(nx, ny, nz)` with the smallest
/// surface area, i.e. the most cubic shape. Factorizations whose longest
/// edge exceeds `MAX_ASPECT` times the shortest are rejected so degenerate
/// chains never come out of auto-sizing.
pub fn auto_box_dims(elements: u64) -> Result<(u32, u32, u32), MeshError> {
    const MAX_ASPECT: u32 = 8;
    if elements == 0 {
        return Err(MeshError::ZeroDimension(0, 0, 0));
    }
    let mut best: Option<(u64, (u64, u64, u64))> = None;
    let mut a = 1u64;
    while a * a * a <= elements {
        if elements % a == 0 {
            let rest = elements / a;
            let mut b = a;
            while b * b <= rest {
                if rest % b == 0 {
                    let c = rest / b;
                    if c <= a * MAX_ASPECT as u64 {
                        let surface = a * b + b * c + c * a;
                        let candidate = (surface, (a, b, c));
                        if best.map_or(true, |cur| candidate < cur) {
                            best = Some(candidate);
                        }
                    }
                    }
                b += 1;
            }
        }
        a += 1;
    }
    match best {
        Some((_, (a, b, c))) => Ok((a as u32, b as u32, c as u32)),
        None => Err(MeshError::NoBoxFactorization {
            elements,
            max_aspect: MAX_ASPECT,
        }),
    }
}

/// Per-rank partition weights plus the rank-to-device-class mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RankWeights {
    pub weights: Vec<f64>,
    /// Device class index of each rank (all zero when the run is
    /// homogeneous or the mapping does not matter).
    pub class_of: Vec<u32>,
}

impl RankWeights {
    pub fn new(weights: Vec<f64>) -> Self {
        let class_of = vec![0; weights.len()];
        Self { weights, class_of }
    }

    pub fn with_classes(weights: Vec<f64>, class_of: Vec<u32>) -> Self {
        assert_eq!(weights.len(), class_of.len());
        Self { weights, class_of }
    }

    pub fn uniform(ranks: usize) -> Self {
        Self::new(vec![1.0; ranks])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Largest-remainder apportionment of `total` integer units proportional to
/// `weights`. Sums to `total` exactly; remainder ties break toward the
/// lower index.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Result<Vec<u64>, MeshError> {
    for (i, w) in weights.iter().enumerate() {
        if *w < 0.0 || !w.is_finite() {
            return Err(MeshError::NegativeWeight(i));
        }
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(MeshError::AllZeroWeights);
    }
    let mut counts = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0u64;
    for (i, w) in weights.iter().enumerate() {
        let quota = total as f64 * w / sum;
        let base = quota.floor() as u64;
        counts.push(base);
        assigned += base;
        if *w > 0.0 {
            fracs.push((i, quota - base as f64));
        }
    }
    let mut leftover = total.saturating_sub(assigned);
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in fracs {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    debug_assert_eq!(counts.iter().sum::<u64>(), total);
    Ok(counts)
}

/// Target element count per rank, proportional to the rank weights.
pub fn target_counts(elements: u64, weights: &RankWeights) -> Result<Vec<u64>, MeshError> {
    largest_remainder(elements, &weights.weights)
}

/// Assignment of every element to exactly one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Owning rank per element, indexed by element id.
    pub assignment: Vec<u32>,
    /// Elements per rank.
    pub counts: Vec<u64>,
}

impl Partition {
    pub fn n_ranks(&self) -> usize {
        self.counts.len()
    }
}

/// Recursive coordinate bisection: split the rank set in half, order the
/// elements along the longest axis of their bounding box (ties x -> y -> z),
/// and cut at the exact element count the left rank half should receive.
/// Deterministic for fixed inputs; every rank gets exactly its target.
pub fn partition_rcb(mesh: &BoxMesh, counts: &[u64]) -> Result<Partition, MeshError> {
    let total: u64 = counts.iter().sum();
    if total != mesh.elements() {
        return Err(MeshError::CountMismatch {
            expected: mesh.elements(),
            got: total,
        });
    }
    let mut ids: Vec<u64> = (0..mesh.elements()).collect();
    let mut assignment = vec![0u32; mesh.elements() as usize];
    rcb_recurse(mesh, &mut ids, 0..counts.len(), counts, &mut assignment);
    Ok(Partition {
        assignment,
        counts: counts.to_vec(),
    })
}

fn rcb_recurse(
    mesh: &BoxMesh,
    ids: &mut [u64],
    ranks: Range<usize>,
    counts: &[u64],
    assignment: &mut [u32],
) {
    if ranks.len() == 1 {
        let r = ranks.start as u32;
        for &id in ids.iter() {
            assignment[id as usize] = r;
        }
        return;
    }
    let mid = ranks.len() / 2;
    let left_ranks = ranks.start..ranks.start + mid;
    let right_ranks = ranks.start + mid..ranks.end;
    let left_total: u64 = counts[left_ranks.clone()].iter().sum();
    let k = left_total as usize;

    if k > 0 && k < ids.len() {
        let mut lo = [u32::MAX; 3];
        let mut hi = [0u32; 3];
        for &id in ids.iter() {
            let (x, y, z) = mesh.coords(id);
            for (a, c) in [x, y, z].into_iter().enumerate() {
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
        let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut axis = 0;
        if extent[1] > extent[axis] {
            axis = 1;
        }
        if extent[2] > extent[axis] {
            axis = 2;
        }
        // Total order: chosen axis first, remaining axes in x -> y -> z
        // order. Coordinates are unique per element so no further tie key
        // is needed.
        let key = |id: &u64| {
            let c = mesh.coords(*id);
            let c = [c.0, c.1, c.2];
            match axis {
                0 => (c[0], c[1], c[2]),
                1 => (c[1], c[0], c[2]),
                _ => (c[2], c[0], c[1]),
            }
        };
        ids.select_nth_unstable_by_key(k - 1, key);
    }
    let (left, right) = ids.split_at_mut(k.min(ids.len()));
    rcb_recurse(mesh, left, left_ranks, counts, assignment);
    rcb_recurse(mesh, right, right_ranks, counts, assignment);
}

/// Partition balance relative to the weighted targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    /// `max_r count_r / target_r` over ranks with a positive target;
    /// 1.0 is perfect.
    pub imbalance: f64,
    pub max_count: u64,
    pub min_count: u64,
}

pub fn partition_stats(partition: &Partition, weights: &RankWeights) -> PartitionStats {
    let total: u64 = partition.counts.iter().sum();
    let wsum: f64 = weights.weights.iter().sum();
    let mut imbalance: f64 = 0.0;
    for (r, &count) in partition.counts.iter().enumerate() {
        let w = weights.weights.get(r).copied().unwrap_or(0.0);
        let target = total as f64 * w / wsum;
        if target > 0.0 {
            imbalance = imbalance.max(count as f64 / target);
        } else if count > 0 {
            imbalance = f64::INFINITY;
        }
    }
    PartitionStats {
        imbalance,
        max_count: partition.counts.iter().copied().max().unwrap_or(0),
        min_count: partition.counts.iter().copied().min().unwrap_or(0),
    }
}

/// Gather-scatter exchange volumes implied by a partition.
///
/// Face points only: shared edge and vertex points are counted once per
/// adjacent face rather than deduplicated across neighbors, so the volumes
/// are an upper bound on the unique-point exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct CommPlan {
    n_ranks: usize,
    points_per_face: u64,
    /// Inter-rank faces per normalized rank pair (a < b), sorted.
    pair_faces: Vec<((u32, u32), u64)>,
    /// Per rank: (neighbor, points exchanged each way), sorted by neighbor.
    per_rank: Vec<Vec<(u32, u64)>>,
}

impl CommPlan {
    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn points_per_face(&self) -> u64 {
        self.points_per_face
    }

    /// Messages of one rank as (neighbor, points sent and received).
    pub fn messages(&self, rank: usize) -> Result<&[(u32, u64)], MeshError> {
        self.per_rank
            .get(rank)
            .map(Vec::as_slice)
            .ok_or(MeshError::UnknownRank(rank))
    }

    /// Points this rank exchanges each way per gather-scatter invocation.
    pub fn total_points(&self, rank: usize) -> Result<u64, MeshError> {
        Ok(self.messages(rank)?.iter().map(|(_, p)| p).sum())
    }

    pub fn inter_rank_faces(&self) -> u64 {
        self.pair_faces.iter().map(|(_, f)| f).sum()
    }

    /// Sum over ranks of points exchanged: `2 * faces * (N+1)^2`.
    pub fn total_exchanged_points(&self) -> u64 {
        2 * self.inter_rank_faces() * self.points_per_face
    }

    /// Normalized rank pairs with their one-way point volume.
    pub fn pair_points(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.pair_faces
            .iter()
            .map(move |((a, b), f)| (*a, *b, f * self.points_per_face))
    }
}

/// Derive the communication plan: every mesh face whose two elements lie on
/// different ranks makes both ranks exchange `(N+1)^2` points.
pub fn comm_plan(
    mesh: &BoxMesh,
    partition: &Partition,
    poly_order: u32,
) -> Result<CommPlan, MeshError> {
    if partition.assignment.len() as u64 != mesh.elements() {
        return Err(MeshError::PartitionMismatch {
            expected: mesh.elements(),
            got: partition.assignment.len() as u64,
        });
    }
    let points_per_face = ((poly_order as u64) + 1).pow(2);
    let mut pairs: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    mesh.for_each_face(|a, b| {
        let ra = partition.assignment[a as usize];
        let rb = partition.assignment[b as usize];
        if ra != rb {
            let key = (ra.min(rb), ra.max(rb));
            *pairs.entry(key).or_insert(0) += 1;
        }
    });
    let n_ranks = partition.n_ranks();
    let mut per_rank: Vec<Vec<(u32, u64)>> = vec![Vec::new(); n_ranks];
    for (&(a, b), &faces) in &pairs {
        let points = faces * points_per_face;
        per_rank[a as usize].push((b, points));
        per_rank[b as usize].push((a, points));
    }
    for msgs in &mut per_rank {
        msgs.sort_by_key(|(n, _)| *n);
    }
    Ok(CommPlan {
        n_ranks,
        points_per_face,
        pair_faces: pairs.into_iter().collect(),
        per_rank,
    })
}

/// Write a partition as `element_id,rank` CSV.
pub fn write_partition_csv<W: Write>(mut w: W, partition: &Partition) -> io::Result<()> {
    writeln!(w, "element_id,rank")?;
    for (id, rank) in partition.assignment.iter().enumerate() {
        writeln!(w, "{id},{rank}")?;
    }
    Ok(())
}

/// Write a communication plan as `rank_a,rank_b,points` CSV, one row per
/// rank pair with the one-way point volume.
pub fn write_comm_csv<W: Write>(mut w: W, plan: &CommPlan) -> io::Result<()> {
    writeln!(w, "rank_a,rank_b,points")?;
    for (a, b, points) in plan.pair_points() {
        writeln!(w, "{a},{b},{points}")?;
    }
    Ok(())
}

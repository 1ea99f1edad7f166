//! Benchmark construction by anomaly injection: planted cliques for
//! structural anomalies and long-range attribute swaps for attribute
//! anomalies. Injection is a pure function of (graph, spec): one seed, one
//! result, on every platform.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::nn::Tensor2;

/// Parameters of one injection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Nodes per planted clique.
    pub s: usize,
    /// Number of cliques.
    pub t: usize,
    /// Candidate-pool size for attribute swaps.
    pub k: usize,
    pub seed: u64,
    /// Alternative reading of the swap: label and overwrite the farthest
    /// candidate (the donor) instead of the sampled target.
    #[serde(default)]
    pub label_donor: bool,
}

impl InjectionSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s < 2 {
            return Err(Error::InvalidArgument(format!(
                "clique size s must be >= 2, got {}",
                self.s
            )));
        }
        if self.t < 1 || self.k < 1 {
            return Err(Error::InvalidArgument(format!(
                "t and k must be >= 1, got t = {}, k = {}",
                self.t, self.k
            )));
        }
        if 2 * self.s * self.t > n {
            return Err(Error::Capacity {
                needed: 2 * self.s * self.t,
                available: n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Structural,
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub node: usize,
    pub kind: AnomalyKind,
}

/// A perturbed graph plus ground truth.
#[derive(Debug, Clone)]
pub struct InjectionResult {
    pub graph: AttributedGraph,
    /// 0/1 per node; 1 iff the node appears in `records`.
    pub labels: Vec<u8>,
    /// Sorted by node index.
    pub records: Vec<AnomalyRecord>,
    /// Candidate-pool size actually used (clamped to n - 1 when k >= n).
    pub k_used: usize,
}

/// Sample `count` distinct elements of `pool` by partial Fisher-Yates.
fn sample_distinct(rng: &mut impl Rng, mut pool: Vec<usize>, count: usize) -> Result<Vec<usize>> {
    if count > pool.len() {
        return Err(Error::Capacity {
            needed: count,
            available: pool.len(),
        });
    }
    for i in 0..count {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(count);
    Ok(pool)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plant `t` disjoint cliques of `s` nodes each. Existing edges inside a
/// group are kept; nothing outside the groups changes. All members are
/// anomalous.
pub fn inject_structural(
    g: &AttributedGraph,
    s: usize,
    t: usize,
    rng: &mut impl Rng,
) -> Result<(AttributedGraph, Vec<usize>)> {
    let n = g.n();
    if s * t > n {
        return Err(Error::Capacity {
            needed: s * t,
            available: n,
        });
    }
    let members = sample_distinct(rng, (0..n).collect(), s * t)?;
    let mut edges: BTreeSet<(usize, usize)> = g.edges().into_iter().collect();
    for group in members.chunks(s) {
        for (i, &u) in group.iter().enumerate() {
            for &v in &group[i + 1..] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let perturbed = AttributedGraph::new(&edges, g.attributes().clone())?;
    Ok((perturbed, members))
}

/// Perturb `s * t` nodes outside `exclude` by overwriting each one's
/// attribute row with the row of the farthest of `k` sampled candidates
/// (distances taken on the pre-injection attributes). With `label_donor`
/// the roles flip: the farthest candidate receives the sampled node's row
/// and carries the label.
pub fn inject_attribute(
    g: &AttributedGraph,
    s: usize,
    t: usize,
    k: usize,
    rng: &mut impl Rng,
    exclude: &BTreeSet<usize>,
    label_donor: bool,
) -> Result<(AttributedGraph, Vec<usize>, usize)> {
    let n = g.n();
    let count = s * t;
    let available: Vec<usize> = (0..n).filter(|i| !exclude.contains(i)).collect();
    if count > available.len() {
        return Err(Error::Capacity {
            needed: count,
            available: available.len(),
        });
    }
    let k_used = if k >= n { n - 1 } else { k };
    let original = g.attributes().clone();
    let mut attrs = original.clone();
    let targets = sample_distinct(rng, available, count)?;
    let mut labeled: Vec<usize> = Vec::with_capacity(count);

    for &target in &targets {
        if label_donor {
            let labeled_set: BTreeSet<usize> = labeled.iter().copied().collect();
            let pool: Vec<usize> = (0..n)
                .filter(|i| *i != target && !exclude.contains(i) && !labeled_set.contains(i))
                .collect();
            if pool.is_empty() {
                return Err(Error::Capacity {
                    needed: 1,
                    available: 0,
                });
            }
            let candidates = sample_distinct(rng, pool.clone(), k_used.min(pool.len()))?;
            let donor = farthest(&original, target, &candidates);
            let row = original.row(target).to_vec();
            attrs.row_mut(donor).copy_from_slice(&row);
            labeled.push(donor);
        } else {
            let pool: Vec<usize> = (0..n).filter(|i| *i != target).collect();
            let candidates = sample_distinct(rng, pool, k_used)?;
            let donor = farthest(&original, target, &candidates);
            let row = original.row(donor).to_vec();
            attrs.row_mut(target).copy_from_slice(&row);
            labeled.push(target);
        }
    }
    let perturbed = g.with_attributes(attrs)?;
    Ok((perturbed, labeled, k_used))
}

fn farthest(attrs: &Tensor2, from: usize, candidates: &[usize]) -> usize {
    let base = attrs.row(from);
    let mut best = candidates[0];
    let mut best_dist = squared_distance(base, attrs.row(best));
    for &c in &candidates[1..] {
        let d = squared_distance(base, attrs.row(c));
        if d > best_dist {
            best = c;
            best_dist = d;
        }
    }
    best
}

/// Run the full protocol: structural injection first, then attribute
/// injection on nodes disjoint from the structural anomalies.
pub fn inject_benchmark(g: &AttributedGraph, spec: &InjectionSpec) -> Result<InjectionResult> {
    spec.validate(g.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (graph, structural) = inject_structural(g, spec.s, spec.t, &mut rng)?;
    let exclude: BTreeSet<usize> = structural.iter().copied().collect();
    let (graph, attribute, k_used) = inject_attribute(
        &graph,
        spec.s,
        spec.t,
        spec.k,
        &mut rng,
        &exclude,
        spec.label_donor,
    )?;

    let mut labels = vec![0u8; g.n()];
    let mut records = Vec::with_capacity(2 * spec.s * spec.t);
    for &node in &structural {
        labels[node] = 1;
        records.push(AnomalyRecord {
            node,
            kind: AnomalyKind::Structural,
        });
    }
    for &node in &attribute {
        labels[node] = 1;
        records.push(AnomalyRecord {
            node,
            kind: AnomalyKind::Attribute,
        });
    }
    records.sort_by_key(|r| r.node);
    Ok(InjectionResult {
        graph,
        labels,
        records,
        k_used,
    })
}

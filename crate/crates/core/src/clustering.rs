//! Correlation-based AP clustering and capacity-limited user association.

use nalgebra::DMatrix;

use crate::channel_training::TrainingState;
use crate::linalg::CVector;
use crate::{Complex64, Error, Result};

/// How the normalized inner product of two stacked AP channels becomes a
/// real similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    /// `|rho|`, insensitive to the arbitrary phase of each AP's channel.
    #[default]
    Magnitude,
    /// `Re(rho)`, so that distances span `[0, 2]`.
    RealPart,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "abs" | "magnitude" => Ok(Similarity::Magnitude),
            "re" | "real" => Ok(Similarity::RealPart),
            other => Err(Error::config(format!(
                "unknown similarity '{other}' (abs|re)"
            ))),
        }
    }
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Similarity::Magnitude => "abs",
            Similarity::RealPart => "re",
        })
    }
}

/// AP-AP similarities and distances `D = 1 - rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApDistance {
    pub rho: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// APs whose stacked estimate was identically zero.
    pub zero_rows: Vec<usize>,
}

impl ApDistance {
    /// Wraps a precomputed distance matrix.
    pub fn from_distances(d: DMatrix<f64>) -> Result<Self> {
        let n = d.nrows();
        if d.ncols() != n || n == 0 {
            return Err(Error::config(
                "distance matrix must be square and non-empty",
            ));
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::config(format!(
                    "D[{i}][{i}] = {} is not zero",
                    d[(i, i)]
                )));
            }
            for j in 0..i {
                if d[(i, j)] != d[(j, i)] || !d[(i, j)].is_finite() {
                    return Err(Error::config(format!("D is not symmetric at ({i}, {j})")));
                }
            }
        }
        let rho = d.map(|v| 1.0 - v);
        Ok(Self {
            rho,
            d,
            zero_rows: Vec::new(),
        })
    }

    pub fn num_aps(&self) -> usize {
        self.d.nrows()
    }
}

/// Similarity between stacked per-AP vectors.
///
/// A zero vector has similarity 0 to every other AP and 1 to itself.
pub fn correlation_from_stacked(stacked: &[CVector], similarity: Similarity) -> ApDistance {
    let n = stacked.len();
    let norms: Vec<f64> = stacked.iter().map(|v| v.norm()).collect();
    let zero_rows: Vec<usize> = (0..n).filter(|&l| norms[l] == 0.0).collect();
    let mut rho = DMatrix::identity(n, n);
    for l in 0..n {
        for k in (l + 1)..n {
            if norms[l] == 0.0 || norms[k] == 0.0 {
                continue;
            }
            let inner: Complex64 = stacked[l].dotc(&stacked[k]);
            let z = inner / (norms[l] * norms[k]);
            let s = match similarity {
                Similarity::Magnitude => z.norm(),
                Similarity::RealPart => z.re,
            }
            .clamp(-1.0, 1.0);
            rho[(l, k)] = s;
            rho[(k, l)] = s;
        }
    }
    let d = rho.map(|v| 1.0 - v);
    ApDistance { rho, d, zero_rows }
}

/// Stacks `[h_hat_l1; ...; h_hat_lU]` per AP and correlates the stacks.
pub fn ap_correlation_matrix(training: &TrainingState, similarity: Similarity) -> ApDistance {
    let stacked: Vec<CVector> = (0..training.num_aps)
        .map(|l| {
            let parts: Vec<&CVector> = (0..training.num_ues)
                .map(|u| training.estimate(l, u))
                .collect();
            let len: usize = parts.iter().map(|v| v.len()).sum();
            CVector::from_iterator(len, parts.into_iter().flat_map(|v| v.iter().copied()))
        })
        .collect();
    correlation_from_stacked(&stacked, similarity)
}

/// One agglomeration step. Clusters are named by their smallest AP index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub first: usize,
    pub second: usize,
    pub distance: f64,
}

/// Full average-linkage merge sequence, down to a single cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub num_aps: usize,
    pub merges: Vec<Merge>,
}

/// Disjoint cover of the APs.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Clusters with ascending members, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub merge_history: Vec<Merge>,
    /// Index into `clusters` for every AP.
    pub cluster_of: Vec<usize>,
}

impl Partition {
    pub fn from_clusters(num_aps: usize, mut clusters: Vec<Vec<usize>>) -> Result<Self> {
        for c in clusters.iter_mut() {
            c.sort_unstable();
        }
        clusters.retain(|c| !c.is_empty());
        clusters.sort_by_key(|c| c[0]);
        let mut cluster_of = vec![usize::MAX; num_aps];
        for (s, c) in clusters.iter().enumerate() {
            for &l in c {
                if l >= num_aps || cluster_of[l] != usize::MAX {
                    return Err(Error::config(format!(
                        "AP {l} is out of range or in two clusters"
                    )));
                }
                cluster_of[l] = s;
            }
        }
        if let Some(l) = cluster_of.iter().position(|&s| s == usize::MAX) {
            return Err(Error::config(format!("AP {l} is in no cluster")));
        }
        Ok(Self {
            clusters,
            merge_history: Vec::new(),
            cluster_of,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }
}

/// Builds the complete merge sequence with Lance-Williams updates.
///
/// Each step merges the pair with the smallest average linkage; equal
/// linkages go to the lexicographically smallest pair of cluster names.
pub fn dendrogram(dist: &ApDistance) -> Dendrogram {
    let n = dist.num_aps();
    let mut link = dist.d.clone();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                if link[(i, j)] < best.0 {
                    best = (link[(i, j)], i, j);
                }
            }
        }
        let (value, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k != i && k != j {
                let v = (ni * link[(i, k)] + nj * link[(j, k)]) / (ni + nj);
                link[(i, k)] = v;
                link[(k, i)] = v;
            }
        }
        size[i] += size[j];
        active.retain(|&k| k != j);
        merges.push(Merge {
            first: i,
            second: j,
            distance: value,
        });
    }
    Dendrogram { num_aps: n, merges }
}

impl Dendrogram {
    /// Replays merges until the next one would exceed `kappa`.
    ///
    /// This is exactly the threshold stopping rule: the minimum linkage at
    /// step `k` is `merges[k].distance`.
    pub fn cut(&self, kappa: f64) -> Partition {
        let n = self.num_aps;
        let mut members: Vec<Vec<usize>> = (0..n).map(|l| vec![l]).collect();
        let mut history = Vec::new();
        for m in &self.merges {
            if m.distance > kappa {
                break;
            }
            let moved = std::mem::take(&mut members[m.second]);
            members[m.first].extend(moved);
            history.push(*m);
        }
        let mut p = Partition::from_clusters(n, members).expect("merges keep a disjoint cover");
        p.merge_history = history;
        p
    }
}

/// Average-linkage clustering stopped once every inter-cluster linkage
/// exceeds `kappa`.
pub fn hierarchical_cluster(dist: &ApDistance, kappa: f64) -> Partition {
    dendrogram(dist).cut(kappa)
}

/// Which APs serve which users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub num_aps: usize,
    /// Serving set `A_u`, ascending.
    pub serving_sets: Vec<Vec<usize>>,
    /// Users served by each AP.
    pub load: Vec<usize>,
}

impl Association {
    pub fn from_serving_sets(num_aps: usize, mut serving_sets: Vec<Vec<usize>>) -> Self {
        let mut load = vec![0; num_aps];
        for set in serving_sets.iter_mut() {
            set.sort_unstable();
            set.dedup();
            for &l in set.iter() {
                load[l] += 1;
            }
        }
        Self {
            num_aps,
            serving_sets,
            load,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.serving_sets.len()
    }

    pub fn serves(&self, l: usize, u: usize) -> bool {
        self.serving_sets[u].binary_search(&l).is_ok()
    }

    pub fn max_load(&self) -> usize {
        self.load.iter().copied().max().unwrap_or(0)
    }

    /// L x U 0/1 matrix.
    pub fn matrix(&self) -> DMatrix<u8> {
        let mut a = DMatrix::zeros(self.num_aps, self.num_ues());
        for (u, set) in self.serving_sets.iter().enumerate() {
            for &l in set {
                a[(l, u)] = 1;
            }
        }
        a
    }
}

/// APs sorted by gain for user `u`, strongest first, ties to the lower index.
fn ranked_aps(gains: &DMatrix<f64>, u: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.nrows()).collect();
    order.sort_by(|&a, &b| gains[(b, u)].total_cmp(&gains[(a, u)]).then(a.cmp(&b)));
    order
}

/// Serves each user, in index order, from the cluster of its strongest AP.
///
/// A user takes the whole cluster when every member still has room
/// (`load < tau`), otherwise the members with room. When none has room the
/// user moves to the other cluster whose free members carry the largest
/// total gain, ties to the lower cluster index.
pub fn associate_users(
    partition: &Partition,
    gains: &DMatrix<f64>,
    tau: usize,
) -> Result<Association> {
    let num_aps = partition.cluster_of.len();
    if gains.nrows() != num_aps {
        return Err(Error::config(format!(
            "gains cover {} APs, partition {num_aps}",
            gains.nrows()
        )));
    }
    if tau == 0 {
        return Err(Error::config("tau must be >= 1"));
    }
    let mut load = vec![0usize; num_aps];
    let mut serving_sets = Vec::with_capacity(gains.ncols());
    for u in 0..gains.ncols() {
        let top = ranked_aps(gains, u)[0];
        let home = partition.cluster_of[top];
        let free = |s: usize, load: &[usize]| -> Vec<usize> {
            partition.clusters[s]
                .iter()
                .copied()
                .filter(|&l| load[l] < tau)
                .collect()
        };
        let mut chosen = free(home, &load);
        if chosen.is_empty() {
            let mut best: Option<(f64, usize)> = None;
            for s in 0..partition.num_clusters() {
                if s == home {
                    continue;
                }
                let open = free(s, &load);
                if open.is_empty() {
                    continue;
                }
                let total: f64 = open.iter().map(|&l| gains[(l, u)]).sum();
                if best.is_none_or(|(b, _)| total > b) {
                    best = Some((total, s));
                }
            }
            let (_, s) = best.ok_or(Error::CapacityExhausted { ue: u })?;
            chosen = free(s, &load);
        }
        for &l in &chosen {
            load[l] += 1;
        }
        serving_sets.push(chosen);
    }
    Ok(Association {
        num_aps,
        serving_sets,
        load,
    })
}

/// Reference associations without a load cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    AllAps,
    TopN(usize),
}

pub fn baseline_association(gains: &DMatrix<f64>, mode: Baseline) -> Result<Association> {
    let (num_aps, num_ues) = gains.shape();
    match mode {
        Baseline::AllAps => Ok(Association::from_serving_sets(
            num_aps,
            vec![(0..num_aps).collect(); num_ues],
        )),
        Baseline::TopN(n) => top_n_per_user(gains, &vec![n; num_ues]),
    }
}

/// Serves user `u` with its `counts[u]` strongest APs.
pub fn top_n_per_user(gains: &DMatrix<f64>, counts: &[usize]) -> Result<Association> {
    let (num_aps, num_ues) = gains.shape();
    if counts.len() != num_ues {
        return Err(Error::config("one AP count per user is required"));
    }
    let mut sets = Vec::with_capacity(num_ues);
    for (u, &n) in counts.iter().enumerate() {
        if n == 0 || n > num_aps {
            return Err(Error::config(format!(
                "user {u}: top-N needs 1 <= N <= {num_aps}, got {n}"
            )));
        }
        let mut set = ranked_aps(gains, u);
        set.truncate(n);
        sets.push(set);
    }
    Ok(Association::from_serving_sets(num_aps, sets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(rows: &[&[f64]]) -> ApDistance {
        let n = rows.len();
        ApDistance::from_distances(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = CVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)]);
        let ortho = CVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]);
        let b = CVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(3.0, 0.0)]);
        let c = CVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)]);
        let d = correlation_from_stacked(&[a.clone(), a.clone(), -a.clone()], Similarity::RealPart);
        assert!((d.rho[(0, 1)] - 1.0).abs() < 1e-12 && d.d[(0, 1)].abs() < 1e-12);
        assert!((d.rho[(0, 2)] + 1.0).abs() < 1e-12 && (d.d[(0, 2)] - 2.0).abs() < 1e-12);
        let e = correlation_from_stacked(&[b, c, ortho], Similarity::Magnitude);
        assert_eq!(e.rho[(0, 1)], 0.0);
        assert_eq!(e.d[(0, 1)], 1.0);
        assert_eq!(e.zero_rows, vec![2]);
        assert_eq!(e.rho[(2, 2)], 1.0);
        assert_eq!(e.rho[(0, 2)], 0.0);
    }

    #[test]
    fn magnitude_ignores_per_ap_phase() {
        let a = CVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)]);
        let rotated = &a * Complex64::from_polar(1.0, 1.1);
        let d = correlation_from_stacked(&[a, rotated], Similarity::Magnitude);
        assert!(d.d[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn threshold_extremes() {
        let d = dist(&[&[0.0, 0.1, 0.9], &[0.1, 0.0, 0.8], &[0.9, 0.8, 0.0]]);
        assert_eq!(hierarchical_cluster(&d, 0.0).num_clusters(), 3);
        assert_eq!(hierarchical_cluster(&d, 2.0).clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn hand_traced_average_linkage() {
        let d = dist(&[&[0.0, 0.1, 0.9], &[0.1, 0.0, 0.8], &[0.9, 0.8, 0.0]]);
        let p = hierarchical_cluster(&d, 0.5);
        assert_eq!(p.clusters, vec![vec![0, 1], vec![2]]);
        assert_eq!(p.merge_history.len(), 1);
        let full = dendrogram(&d);
        assert!((full.merges[1].distance - 0.85).abs() < 1e-12);
    }

    #[test]
    fn equal_linkages_merge_lowest_pair() {
        let d = dist(&[
            &[0.0, 0.5, 0.5, 0.5],
            &[0.5, 0.0, 0.5, 0.5],
            &[0.5, 0.5, 0.0, 0.5],
            &[0.5, 0.5, 0.5, 0.0],
        ]);
        let m = dendrogram(&d).merges;
        assert_eq!((m[0].first, m[0].second), (0, 1));
        assert_eq!((m[1].first, m[1].second), (0, 2));
    }

    #[test]
    fn single_strongest_ap() {
        let p = Partition::from_clusters(2, vec![vec![0], vec![1]]).unwrap();
        let g = DMatrix::from_row_slice(2, 1, &[1e-9, 1e-7]);
        let a = associate_users(&p, &g, 3).unwrap();
        assert_eq!(a.serving_sets, vec![vec![1]]);
    }

    #[test]
    fn saturated_single_cluster_exhausts() {
        let p = Partition::from_clusters(2, vec![vec![0, 1]]).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.5, 0.5]);
        let err = associate_users(&p, &g, 1).unwrap_err();
        assert_eq!(err, Error::CapacityExhausted { ue: 1 });
    }

    #[test]
    fn partial_assignment_keeps_free_members() {
        let p = Partition::from_clusters(3, vec![vec![0, 1], vec![2]]).unwrap();
        // user 0 fills AP 0 (tau = 1) via cluster {0, 1}? No: it takes both.
        // user 1 prefers AP 2; user 2 prefers AP 0 whose cluster is full.
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 0.1, 1.0, //
                0.5, 0.1, 0.2, //
                0.1, 1.0, 0.3,
            ],
        );
        let a = associate_users(&p, &g, 2).unwrap();
        assert_eq!(a.serving_sets[0], vec![0, 1]);
        assert_eq!(a.serving_sets[1], vec![2]);
        assert_eq!(a.serving_sets[2], vec![0, 1]);
        let a = associate_users(
            &Partition::from_clusters(3, vec![vec![0, 1, 2]]).unwrap(),
            &g,
            1,
        )
        .unwrap_err();
        assert_eq!(a, Error::CapacityExhausted { ue: 1 });
    }

    #[test]
    fn reassignment_picks_largest_free_gain() {
        // Clusters {0}, {1, 2}, {3}. User 0 saturates AP 0 (tau = 1); user 1
        // also prefers AP 0 and must move. Free gain: {1,2} -> 0.3 + 0.3,
        // {3} -> 0.5.
        let p = Partition::from_clusters(4, vec![vec![0], vec![1, 2], vec![3]]).unwrap();
        let g = DMatrix::from_row_slice(
            4,
            2,
            &[
                1.0, 1.0, //
                0.1, 0.3, //
                0.1, 0.3, //
                0.1, 0.5,
            ],
        );
        let a = associate_users(&p, &g, 1).unwrap();
        assert_eq!(a.serving_sets, vec![vec![0], vec![1, 2]]);
        assert_eq!(a.load, vec![1, 1, 1, 0]);
    }

    #[test]
    fn baselines() {
        let g = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.5, 0.2, 0.3, 0.4]);
        let all = baseline_association(&g, Baseline::AllAps).unwrap();
        assert_eq!(all.matrix().iter().filter(|&&v| v == 1).count(), 6);
        let top1 = baseline_association(&g, Baseline::TopN(1)).unwrap();
        assert_eq!(top1.serving_sets, vec![vec![1], vec![0]]);
        assert_eq!(baseline_association(&g, Baseline::TopN(3)).unwrap(), all);
        assert!(baseline_association(&g, Baseline::TopN(4)).is_err());
    }

    /// Recomputes every average linkage from the raw distances each step.
    fn brute_force(d: &DMatrix<f64>, kappa: f64) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..d.nrows()).map(|l| vec![l]).collect();
        loop {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in (a + 1)..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d[(i, j)];
                        }
                    }
                    let v = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if v < best.0 {
                        best = (v, a, b);
                    }
                }
            }
            if clusters.len() < 2 || best.0 > kappa {
                let mut out = clusters;
                out.iter_mut().for_each(|c| c.sort_unstable());
                out.sort_by_key(|c| c[0]);
                return out;
            }
            let moved = clusters.remove(best.2);
            clusters[best.1].extend(moved);
        }
    }

    fn random_distance(n: usize, vals: &[f64]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                d[(i, j)] = vals[k];
                d[(j, i)] = vals[k];
                k += 1;
            }
        }
        d
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=8, vals in prop::collection::vec(0.0..2.0f64, 28), kappa in 0.0..2.0f64) {
            let d = random_distance(n, &vals);
            let p = hierarchical_cluster(&ApDistance::from_distances(d.clone()).unwrap(), kappa);
            prop_assert_eq!(p.clusters, brute_force(&d, kappa));
        }

        #[test]
        fn permutation_equivariance(n in 2usize..=8, vals in prop::collection::vec(0.0..2.0f64, 28), kappa in 0.0..1.5f64, shift in 1usize..8) {
            let d = random_distance(n, &vals);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let dp = DMatrix::from_fn(n, n, |i, j| d[(perm[i], perm[j])]);
            let p = hierarchical_cluster(&ApDistance::from_distances(d).unwrap(), kappa);
            let q = hierarchical_cluster(&ApDistance::from_distances(dp).unwrap(), kappa);
            let mapped: Vec<Vec<usize>> = q.clusters.iter().map(|c| c.iter().map(|&i| perm[i]).collect()).collect();
            prop_assert_eq!(Partition::from_clusters(n, mapped).unwrap().clusters, p.clusters);
        }

        #[test]
        fn capacity_never_exceeded(
            gains in prop::collection::vec(1e-9..1e-5f64, 60),
            tau in 1usize..4,
            kappa in 0.0..1.0f64,
            vals in prop::collection::vec(0.0..1.0f64, 45),
        ) {
            let l = 10;
            let g = DMatrix::from_column_slice(l, 6, &gains);
            let p = hierarchical_cluster(&ApDistance::from_distances(random_distance(l, &vals)).unwrap(), kappa);
            if let Ok(a) = associate_users(&p, &g, tau) {
                prop_assert!(a.max_load() <= tau);
                prop_assert!(a.serving_sets.iter().all(|s| !s.is_empty()));
                prop_assert_eq!(Association::from_serving_sets(l, a.serving_sets.clone()).load, a.load.clone());
            }
        }

        #[test]
        fn scale_invariance(re in prop::collection::vec(-1.0..1.0f64, 24), im in prop::collection::vec(-1.0..1.0f64, 24), scale in 1e-6..1e6f64) {
            let stacked: Vec<CVector> = (0..6)
                .map(|l| CVector::from_fn(4, |k, _| Complex64::new(re[l * 4 + k], im[l * 4 + k])))
                .collect();
            let scaled: Vec<CVector> = stacked.iter().map(|v| v * Complex64::new(scale, 0.0)).collect();
            let a = correlation_from_stacked(&stacked, Similarity::Magnitude);
            let b = correlation_from_stacked(&scaled, Similarity::Magnitude);
            prop_assert!((a.d.clone() - b.d.clone()).abs().max() < 1e-12);
            prop_assert_eq!(hierarchical_cluster(&a, 0.4).clusters, hierarchical_cluster(&b, 0.4).clusters);
        }
    }
}

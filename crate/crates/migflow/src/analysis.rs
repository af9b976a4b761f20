//! Clustering of per-pair posterior parameter vectors under cosine
//! dissimilarity, plus χ² homogeneity tests on cluster-conditional covariate
//! distributions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::data::FlowPanel;
use crate::error::{Error, Result};

/// Posterior-mean parameter vector for one ordered pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairVector {
    pub pair_id: usize,
    pub values: Vec<f64>,
}

/// cosine_distance: 1 - cos(u, v), in [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::validation("vector length mismatch"));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::validation("cosine distance undefined for zero vectors"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    // Clamp to the valid range; rounding can push |cos| a hair past 1.
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

/// One merge in the dendrogram. Clusters are labelled by the smallest
/// pair id they contain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub pair_ids: Vec<usize>,
}

impl Dendrogram {
    /// Heights should be nondecreasing for average linkage on a metric;
    /// returns the merge indices violating monotonicity.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.merges
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].height < w[0].height - 1e-12)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    pub dendrogram: Dendrogram,
    pub k: usize,
    /// assignment[i] in 0..k for the i-th input vector. Cluster labels are
    /// ordered by the smallest member pair id.
    pub assignment: Vec<usize>,
}

/// agglomerative_cluster: bottom-up average-linkage merging under cosine
/// distance, cut at `k` clusters. Ties break on the smallest pair ids.
pub fn agglomerative_cluster(vectors: &[PairVector], k: usize) -> Result<Clustering> {
    let n = vectors.len();
    if n < k || k == 0 {
        return Err(Error::validation(format!("need at least k={k} vectors, got {n}")));
    }
    let mut dist = vec![vec![0.0_f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(&vectors[i].values, &vectors[j].values)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // active clusters: member row indices, labelled by min pair id.
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let label = |m: &[usize]| -> usize {
        m.iter().map(|&i| vectors[i].pair_id).min().unwrap()
    };
    let mut merges = Vec::with_capacity(n - 1);
    let mut cut_assignment = None;
    for step in 0..(n - 1) {
        let active: Vec<usize> = (0..n).filter(|&i| members[i].is_some()).collect();
        if active.len() == k && cut_assignment.is_none() {
            cut_assignment = Some(snapshot_assignment(&members, n));
        }
        // Smallest distance, ties by (label_a, label_b).
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let d = dist[a][b];
                let la = label(members[a].as_ref().unwrap());
                let lb = label(members[b].as_ref().unwrap());
                let (la, lb) = (la.min(lb), la.max(lb));
                let key = (d, la, lb);
                let better = match &best {
                    None => true,
                    Some((bd, bla, blb, _, _)) => {
                        key < (*bd, *bla, *blb)
                    }
                };
                if better {
                    best = Some((d, la, lb, a, b));
                }
            }
        }
        let (d, la, lb, a, b) = best.expect("non-empty active set");
        let size_a = members[a].as_ref().unwrap().len();
        let size_b = members[b].as_ref().unwrap().len();
        // Lance-Williams update for average linkage.
        for &c in &active {
            if c != a && c != b {
                let upd = (size_a as f64 * dist[a][c] + size_b as f64 * dist[b][c])
                    / (size_a + size_b) as f64;
                dist[a][c] = upd;
                dist[c][a] = upd;
            }
        }
        let mut merged = members[a].take().unwrap();
        merged.extend(members[b].take().unwrap());
        members[a] = Some(merged);
        merges.push(Merge { left: la, right: lb, height: d, size: size_a + size_b });
        let _ = step;
    }
    let assignment = match cut_assignment {
        Some(a) => a,
        // k == n: every vector is its own cluster.
        None => (0..n).collect(),
    };
    Ok(Clustering {
        dendrogram: Dendrogram { merges, pair_ids: vectors.iter().map(|v| v.pair_id).collect() },
        k,
        assignment,
    })
}

fn snapshot_assignment(members: &[Option<Vec<usize>>], n: usize) -> Vec<usize> {
    let mut clusters: Vec<&Vec<usize>> = members.iter().flatten().collect();
    clusters.sort_by_key(|m| m.iter().min().copied());
    let mut assignment = vec![0; n];
    for (c, m) in clusters.iter().enumerate() {
        for &i in m.iter() {
            assignment[i] = c;
        }
    }
    assignment
}

/// Survival function of the χ² distribution via the regularized upper
/// incomplete gamma function.
pub fn chi_square_survival(statistic: f64, dof: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof / 2.0, statistic / 2.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityTest {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: f64,
    pub bin_edges: Vec<f64>,
    pub counts_a: Vec<usize>,
    pub counts_b: Vec<usize>,
}

/// chi_square_homogeneity: 2 x B contingency test on pooled-quantile
/// bins; pooled-empty bins are merged into their neighbours.
pub fn chi_square_homogeneity(
    sample_a: &[f64],
    sample_b: &[f64],
    n_bins: usize,
) -> Result<HomogeneityTest> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::validation("both samples must be nonempty"));
    }
    if n_bins < 2 {
        return Err(Error::validation("n_bins must be at least 2"));
    }
    let mut pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if pooled.first() == pooled.last() {
        return Err(Error::validation("degenerate pooled sample: all values equal"));
    }
    // Interior pooled quantile edges, deduplicated. Bins are half-open
    // [e_{i-1}, e_i) with open ends.
    let mut edges = Vec::new();
    for q in 1..n_bins {
        let pos = (q as f64 / n_bins as f64 * pooled.len() as f64).ceil() as usize;
        let e = pooled[pos.min(pooled.len() - 1)];
        if edges.last() != Some(&e) {
            edges.push(e);
        }
    }
    let bin_of = |x: f64| edges.iter().take_while(|&&e| x >= e).count();
    let n_b = edges.len() + 1;
    let mut counts_a = vec![0usize; n_b];
    let mut counts_b = vec![0usize; n_b];
    for &x in sample_a {
        counts_a[bin_of(x)] += 1;
    }
    for &x in sample_b {
        counts_b[bin_of(x)] += 1;
    }
    // Merge pooled-zero bins into the previous (or next) bin.
    let mut i = 0;
    while i < counts_a.len() {
        if counts_a[i] + counts_b[i] == 0 && counts_a.len() > 1 {
            let into = if i == 0 { 1 } else { i - 1 };
            counts_a[into] += counts_a[i];
            counts_b[into] += counts_b[i];
            counts_a.remove(i);
            counts_b.remove(i);
            if i > 0 {
                edges.remove(i - 1);
            } else {
                edges.remove(0);
            }
        } else {
            i += 1;
        }
    }
    if counts_a.len() < 2 {
        return Err(Error::validation("fewer than 2 usable bins after merging"));
    }

    let total_a: f64 = sample_a.len() as f64;
    let total_b: f64 = sample_b.len() as f64;
    let total = total_a + total_b;
    let mut statistic = 0.0;
    for b in 0..counts_a.len() {
        let col = (counts_a[b] + counts_b[b]) as f64;
        for (obs, row_total) in [(counts_a[b] as f64, total_a), (counts_b[b] as f64, total_b)] {
            let expected = row_total * col / total;
            statistic += (obs - expected).powi(2) / expected;
        }
    }
    let dof = (counts_a.len() - 1) as f64;
    Ok(HomogeneityTest {
        statistic,
        p_value: chi_square_survival(statistic, dof),
        dof,
        bin_edges: edges,
        counts_a,
        counts_b,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateTest {
    pub covariate: String,
    pub test: HomogeneityTest,
    /// Per-cluster log-ratio samples (cluster 0, cluster 1).
    pub samples: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_pairs: usize,
    pub mean_log_flow: f64,
    pub mean_log_population_product: f64,
    pub mean_distance_km: f64,
}

/// Figure-3-style report: dendrogram, 2-cluster assignment, conditional
/// covariate histograms with χ² p-values, and per-cluster flow, population,
/// and distance summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    pub clustering: Clustering,
    pub covariate_tests: Vec<CovariateTest>,
    pub summaries: Vec<ClusterSummary>,
    pub binning: String,
}

/// Look up a covariate value for a region averaged over the panel years.
/// `land_area_sqmi` resolves to the region field; anything else must be a
/// covariate column.
fn covariate_value(panel: &FlowPanel, name: &str, region: usize, years: &[i32]) -> Result<f64> {
    if name == "land_area_sqmi" {
        return Ok(panel.regions[region].land_area_sqmi);
    }
    let col = panel
        .covariates
        .get(name)
        .ok_or_else(|| Error::validation(format!("missing covariate column {name:?}")))?;
    let values: Vec<f64> = years
        .iter()
        .filter_map(|&t| col.get(&(region, t)).copied())
        .collect();
    if values.is_empty() {
        return Err(Error::validation(format!(
            "covariate {name:?} has no values for region {}",
            panel.regions[region].id
        )));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// conditional_covariate_report: per-pair log-ratio covariates split by
/// 2-cluster assignment, χ²-tested for homogeneity.
pub fn conditional_covariate_report(
    clustering: &Clustering,
    pairs: &[(usize, usize)],
    panel: &FlowPanel,
    covariate_names: &[String],
    n_bins: usize,
) -> Result<ClusterReport> {
    if clustering.k != 2 {
        return Err(Error::validation(format!(
            "conditional report requires a 2-cluster assignment, got k={}",
            clustering.k
        )));
    }
    if pairs.len() != clustering.assignment.len() {
        return Err(Error::validation("pair list does not match the clustering"));
    }
    let years = panel.years();
    let distances = panel.distance_matrix()?;

    let mut covariate_tests = Vec::new();
    for name in covariate_names {
        let mut samples: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (&(i, j), &cluster) in pairs.iter().zip(&clustering.assignment) {
            let vi = covariate_value(panel, name, i, &years)?;
            let vj = covariate_value(panel, name, j, &years)?;
            if vi <= 0.0 || vj <= 0.0 {
                return Err(Error::validation(format!(
                    "covariate {name:?} must be positive to take a log ratio"
                )));
            }
            samples[cluster].push((vi / vj).ln());
        }
        let test = chi_square_homogeneity(&samples[0], &samples[1], n_bins)?;
        covariate_tests.push(CovariateTest { covariate: name.clone(), test, samples });
    }

    // Per-cluster flow magnitude, population, distance summaries.
    let mut flow_by_pair: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for obs in &panel.observations {
        flow_by_pair
            .entry((obs.origin, obs.dest))
            .or_default()
            .push(0.5 * (obs.flow_lo + obs.flow_hi));
    }
    let mut summaries = Vec::new();
    for cluster in 0..2 {
        let mut log_flows = Vec::new();
        let mut log_pops = Vec::new();
        let mut dists = Vec::new();
        for (&(i, j), &c) in pairs.iter().zip(&clustering.assignment) {
            if c != cluster {
                continue;
            }
            if let Some(flows) = flow_by_pair.get(&(i, j)) {
                let mean_flow = flows.iter().sum::<f64>() / flows.len() as f64;
                if mean_flow > 0.0 {
                    log_flows.push(mean_flow.ln());
                }
            }
            let pops: Vec<f64> = years
                .iter()
                .filter_map(|&t| {
                    let pi = panel.populations.get(&(i, t))?;
                    let pj = panel.populations.get(&(j, t))?;
                    Some((pi * pj).ln())
                })
                .collect();
            if !pops.is_empty() {
                log_pops.push(pops.iter().sum::<f64>() / pops.len() as f64);
            }
            dists.push(distances[i][j]);
        }
        let avg = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        summaries.push(ClusterSummary {
            n_pairs: clustering.assignment.iter().filter(|&&c| c == cluster).count(),
            mean_log_flow: avg(&log_flows),
            mean_log_population_product: avg(&log_pops),
            mean_distance_km: avg(&dists),
        });
    }

    Ok(ClusterReport {
        clustering: clustering.clone(),
        covariate_tests,
        summaries,
        binning: format!("{n_bins} pooled-quantile bins, zero-count bins merged"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cosine_distance_basics() {
        assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-12);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((cosine_distance(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_distance_scale_invariant() {
        let u = [0.3, -1.2, 0.7];
        let v = [1.1, 0.4, -0.2];
        let base = cosine_distance(&u, &v).unwrap();
        let us: Vec<f64> = u.iter().map(|x| 13.0 * x).collect();
        let vs: Vec<f64> = v.iter().map(|x| 0.004 * x).collect();
        assert!((cosine_distance(&us, &vs).unwrap() - base).abs() < 1e-12);
    }

    fn vecs(values: &[[f64; 2]]) -> Vec<PairVector> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| PairVector { pair_id: i, values: v.to_vec() })
            .collect()
    }

    #[test]
    fn identical_vectors_merge_at_zero() {
        let vs = vecs(&[[1.0, 1.0]; 4]);
        let c = agglomerative_cluster(&vs, 2).unwrap();
        for m in &c.clustering_heights() {
            assert!(m.abs() < 1e-12);
        }
        assert_eq!(c.assignment.len(), 4);
        // Deterministic: rerun gives the same assignment.
        let c2 = agglomerative_cluster(&vs, 2).unwrap();
        assert_eq!(c.assignment, c2.assignment);
    }

    #[test]
    fn four_vector_average_linkage_trace() {
        // Two tight direction groups plus a mild intruder; verify heights
        // against a hand-computed average-linkage trace.
        let vs = vecs(&[[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [0.1, 1.0]]);
        let c = agglomerative_cluster(&vs, 2).unwrap();
        let d = |a: &[f64], b: &[f64]| cosine_distance(a, b).unwrap();
        let d01 = d(&[1.0, 0.0], &[1.0, 0.1]);
        let d23 = d(&[0.0, 1.0], &[0.1, 1.0]);
        // First two merges join the within-group pairs.
        assert!((c.dendrogram.merges[0].height - d01.min(d23)).abs() < 1e-12);
        assert!((c.dendrogram.merges[1].height - d01.max(d23)).abs() < 1e-12);
        // Final merge height is the average of all four cross distances.
        let cross = (d(&[1.0, 0.0], &[0.0, 1.0])
            + d(&[1.0, 0.0], &[0.1, 1.0])
            + d(&[1.0, 0.1], &[0.0, 1.0])
            + d(&[1.0, 0.1], &[0.1, 1.0]))
            / 4.0;
        assert!((c.dendrogram.merges[2].height - cross).abs() < 1e-12);
        assert_eq!(c.assignment, vec![0, 0, 1, 1]);
        assert!(c.dendrogram.monotonicity_violations().is_empty());
    }

    #[test]
    fn planted_direction_blobs_recovered() {
        let mut rng = StdRng::seed_from_u64(17);
        let mut vectors = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let (base, lbl) = if i % 2 == 0 { (0.0_f64, 0) } else { (90.0_f64, 1) };
            let angle = (base + rng.gen_range(-5.0..5.0)).to_radians();
            let scale = rng.gen_range(0.5..2.0);
            vectors.push(PairVector {
                pair_id: i,
                values: vec![scale * angle.cos(), scale * angle.sin()],
            });
            truth.push(lbl);
        }
        let c = agglomerative_cluster(&vectors, 2).unwrap();
        let rand = rand_index(&truth, &c.assignment);
        assert!(rand >= 0.95, "rand index {rand}");
    }

    pub(crate) fn rand_index(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut agree = 0usize;
        let mut total = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                total += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn chi_square_identical_samples() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = chi_square_homogeneity(&xs, &xs, 10).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn chi_square_survival_reference_point() {
        assert!((chi_square_survival(3.841, 1.0) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn chi_square_detects_shift() {
        let mut rng = StdRng::seed_from_u64(5);
        let a: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0) + rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 1.2).collect();
        let t = chi_square_homogeneity(&a, &b, 10).unwrap();
        assert!(t.p_value < 0.01, "p = {}", t.p_value);
    }

    #[test]
    fn chi_square_symmetric_in_samples() {
        let mut rng = StdRng::seed_from_u64(6);
        let a: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.gen_range(0.2..1.2)).collect();
        let t1 = chi_square_homogeneity(&a, &b, 8).unwrap();
        let t2 = chi_square_homogeneity(&b, &a, 8).unwrap();
        assert_eq!(t1.statistic, t2.statistic);
    }

    #[test]
    fn chi_square_rejects_degenerate() {
        let xs = vec![1.0; 50];
        assert!(chi_square_homogeneity(&xs, &xs, 5).is_err());
    }

    impl Clustering {
        fn clustering_heights(&self) -> Vec<f64> {
            self.dendrogram.merges.iter().map(|m| m.height).collect()
        }
    }
}

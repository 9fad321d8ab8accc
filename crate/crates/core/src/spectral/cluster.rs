use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous groups of a sorted spectrum that are unresolvable at the
/// threshold `tau_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralClusters {
    /// Cluster index of every eigenvalue.
    pub assignment: Vec<usize>,
    pub centroids: Vec<f64>,
    /// Members of each cluster, as index ranges into the spectrum.
    pub members: Vec<std::ops::Range<usize>>,
    /// Spread `max − min` inside each cluster.
    pub internal_gap: Vec<f64>,
    /// Distance to the nearest eigenvalue outside the cluster (`+∞` if none).
    pub external_gap: Vec<f64>,
    pub tau_n: f64,
}

impl SpectralClusters {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

/// `max(τ_num, C·sqrt(ln N / N))`.
pub fn cluster_threshold(tau_num: f64, n_data: usize, c: f64) -> f64 {
    let n = n_data as f64;
    tau_num.max(c * (n.ln() / n).sqrt())
}

/// Single left-to-right sweep: a new cluster starts when the next eigenvalue is
/// at least `τ_N` away from the running centroid of the current one.
pub fn cluster(eigenvalues: &[f64], tau_num: f64, n_data: usize, c: f64) -> Result<SpectralClusters> {
    if n_data < 2 {
        return Err(Error::InvalidArgument("cluster threshold needs N ≥ 2".into()));
    }
    if !(tau_num > 0.0) || !(c >= 0.0) {
        return Err(Error::InvalidArgument("tau_num must be positive and C nonnegative".into()));
    }
    if let Some(i) = eigenvalues.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::NotSorted(i + 1));
    }
    let tau_n = cluster_threshold(tau_num, n_data, c);

    let mut members = Vec::new();
    let mut centroids = Vec::new();
    let mut start = 0;
    let mut sum = 0.0;
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        if i > start {
            let centroid = sum / (i - start) as f64;
            if (lambda - centroid).abs() >= tau_n {
                members.push(start..i);
                centroids.push(centroid);
                start = i;
                sum = 0.0;
            }
        }
        sum += lambda;
    }
    if !eigenvalues.is_empty() {
        centroids.push(sum / (eigenvalues.len() - start) as f64);
        members.push(start..eigenvalues.len());
    }

    let mut assignment = vec![0; eigenvalues.len()];
    let mut internal_gap = Vec::with_capacity(members.len());
    let mut external_gap = Vec::with_capacity(members.len());
    for (k, range) in members.iter().enumerate() {
        for i in range.clone() {
            assignment[i] = k;
        }
        internal_gap.push(eigenvalues[range.end - 1] - eigenvalues[range.start]);
        let left = if range.start > 0 {
            eigenvalues[range.start] - eigenvalues[range.start - 1]
        } else {
            f64::INFINITY
        };
        let right = if range.end < eigenvalues.len() {
            eigenvalues[range.end] - eigenvalues[range.end - 1]
        } else {
            f64::INFINITY
        };
        external_gap.push(left.min(right));
    }

    Ok(SpectralClusters { assignment, centroids, members, internal_gap, external_gap, tau_n })
}

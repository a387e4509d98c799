//! Rank-based Mahalanobis distances with a propensity-caliper penalty.
//!
//! Covariates are replaced by average ranks over the full sample, the rank
//! covariance is rescaled so every diagonal entry equals the untied-rank
//! variance (N^2 - 1)/12, and distances use the pseudoinverse of that
//! rescaled matrix. Caliper violations add a graduated penalty instead of
//! forbidding the pair, so every matching problem stays feasible.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::CovariateTable;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// inverting the rescaled rank covariance (one-hot expansions are exactly
/// collinear).
const EIGEN_TOLERANCE: f64 = 1e-10;

/// Treated-by-control distances within one stratum.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub stratum: usize,
    pub treated_ids: Vec<String>,
    pub control_ids: Vec<String>,
    /// d[t][c], nonnegative and finite.
    pub d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn n_treated(&self) -> usize {
        self.treated_ids.len()
    }

    pub fn n_controls(&self) -> usize {
        self.control_ids.len()
    }

    /// Swaps rows and columns (used by subset matching, which relabels
    /// controls as treated units).
    pub fn transposed(&self) -> DistanceMatrix {
        let mut d = vec![vec![0.0; self.n_treated()]; self.n_controls()];
        for (t, row) in self.d.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                d[c][t] = v;
            }
        }
        DistanceMatrix {
            stratum: self.stratum,
            treated_ids: self.control_ids.clone(),
            control_ids: self.treated_ids.clone(),
            d,
        }
    }
}

/// Replaces each column by average ranks over all subjects (ties share the
/// mean of the positions they occupy).
pub fn rank_transform(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    columns.iter().map(|col| rank_column(col)).collect()
}

fn rank_column(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && col[order[j + 1]] == col[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) tie; average of 1-based ranks
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// The rank-Mahalanobis metric over the full sample, applied to any pair
/// of subjects. Subjects are pre-transformed so each pairwise distance is
/// a plain Euclidean norm.
#[derive(Debug, Clone)]
pub struct RankMetric {
    transformed: Vec<Vec<f64>>,
}

impl RankMetric {
    /// Builds the metric from rank columns (each of length N >= 2).
    pub fn from_ranks(rank_columns: &[Vec<f64>]) -> Result<Self> {
        let n = rank_columns.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::TooFewSubjects { n });
        }
        let p = rank_columns.len();
        let untied_variance = (n as f64 * n as f64 - 1.0) / 12.0;

        let mut means = vec![0.0; p];
        for (j, col) in rank_columns.iter().enumerate() {
            means[j] = col.iter().sum::<f64>() / n as f64;
        }
        let mut cov = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let mut s = 0.0;
                for i in 0..n {
                    s += (rank_columns[a][i] - means[a]) * (rank_columns[b][i] - means[b]);
                }
                let v = s / (n as f64 - 1.0);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        // rescale so diagonals equal the untied-rank variance; constant
        // columns contribute nothing (factor 0, handled by pseudoinverse)
        let factors: Vec<f64> = (0..p)
            .map(|j| {
                let v = cov[(j, j)];
                if v > 0.0 {
                    (untied_variance / v).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] *= factors[a] * factors[b];
            }
        }

        let eigen = cov.symmetric_eigen();
        let max_eig = eigen.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let cutoff = EIGEN_TOLERANCE * max_eig;
        // rows of sqrt(pinv(Lambda)) Q^T map rank vectors to coordinates
        // where the metric is Euclidean
        let mut map = DMatrix::zeros(p, p);
        for k in 0..p {
            let l = eigen.eigenvalues[k];
            if l > cutoff {
                let w = 1.0 / l.sqrt();
                for j in 0..p {
                    map[(k, j)] = w * eigen.eigenvectors[(j, k)];
                }
            }
        }

        let mut transformed = Vec::with_capacity(n);
        for i in 0..n {
            let mut u = vec![0.0; p];
            for (k, row) in u.iter_mut().enumerate() {
                let mut s = 0.0;
                for j in 0..p {
                    s += map[(k, j)] * rank_columns[j][i];
                }
                *row = s;
            }
            transformed.push(u);
        }
        Ok(RankMetric { transformed })
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ua, ub) = (&self.transformed[a], &self.transformed[b]);
        ua.iter()
            .zip(ub)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn matrix(
        &self,
        stratum: usize,
        treated: &[usize],
        controls: &[usize],
        ids: &dyn Fn(usize) -> String,
    ) -> DistanceMatrix {
        let d = treated
            .iter()
            .map(|&t| controls.iter().map(|&c| self.distance(t, c)).collect())
            .collect();
        DistanceMatrix {
            stratum,
            treated_ids: treated.iter().map(|&i| ids(i)).collect(),
            control_ids: controls.iter().map(|&i| ids(i)).collect(),
            d,
        }
    }
}

/// Convenience wrapper: metric plus matrix in one call.
pub fn rank_mahalanobis(
    rank_columns: &[Vec<f64>],
    treated: &[usize],
    controls: &[usize],
) -> Result<DistanceMatrix> {
    let metric = RankMetric::from_ranks(rank_columns)?;
    Ok(metric.matrix(0, treated, controls, &|i| i.to_string()))
}

/// Adds `penalty_scale * (|e_t - e_c| - w) / w` to every entry whose score
/// discrepancy exceeds the caliper width `w = width_multiplier * score_sd`.
/// Entries inside the caliper are untouched.
pub fn apply_caliper(
    dm: &mut DistanceMatrix,
    treated_scores: &[f64],
    control_scores: &[f64],
    score_sd: f64,
    width_multiplier: f64,
    penalty_scale: f64,
) {
    debug_assert!(width_multiplier > 0.0 && penalty_scale > 0.0);
    let w = width_multiplier * score_sd;
    if w <= 0.0 {
        return; // zero spread: no discrepancy can exist
    }
    for (t, row) in dm.d.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            let gap = (treated_scores[t] - control_scores[c]).abs();
            if gap > w {
                *entry += penalty_scale * (gap - w) / w;
            }
        }
    }
}

/// A user-supplied treated-by-control distance table, keyed by subject IDs.
/// Cells may be blank for pairs that never share a stratum.
#[derive(Debug, Clone)]
pub struct ExternalDistances {
    row_of: HashMap<String, usize>,
    col_of: HashMap<String, usize>,
    entries: Vec<Vec<Option<f64>>>,
}

impl ExternalDistances {
    pub fn load(path: &Path, delimiter: u8) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .clone();
        let col_of: HashMap<String, usize> = headers
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, h)| (h.to_string(), j))
            .collect();
        let mut row_of = HashMap::new();
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let id = record.get(0).unwrap_or("").trim().to_string();
            let mut row = Vec::with_capacity(col_of.len());
            for cell in record.iter().skip(1) {
                let cell = cell.trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    row.push(None);
                } else {
                    let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("bad distance {cell:?} in row for {id:?}"),
                    })?;
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            message: format!("distance {v} for {id:?} must be finite and >= 0"),
                        });
                    }
                    row.push(Some(v));
                }
            }
            row_of.insert(id, entries.len());
            entries.push(row);
        }
        Ok(ExternalDistances {
            row_of,
            col_of,
            entries,
        })
    }

    pub fn matrix(
        &self,
        stratum: usize,
        treated_ids: &[String],
        control_ids: &[String],
    ) -> Result<DistanceMatrix> {
        let mut d = Vec::with_capacity(treated_ids.len());
        for t in treated_ids {
            let ri = self.row_of.get(t).ok_or_else(|| Error::MissingDistance {
                treated: t.clone(),
                control: "*".to_string(),
            })?;
            let mut row = Vec::with_capacity(control_ids.len());
            for c in control_ids {
                let cj = self.col_of.get(c).ok_or_else(|| Error::MissingDistance {
                    treated: t.clone(),
                    control: c.clone(),
                })?;
                let v = self.entries[*ri]
                    .get(*cj)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::MissingDistance {
                        treated: t.clone(),
                        control: c.clone(),
                    })?;
                row.push(v);
            }
            d.push(row);
        }
        Ok(DistanceMatrix {
            stratum,
            treated_ids: treated_ids.to_vec(),
            control_ids: control_ids.to_vec(),
            d,
        })
    }
}

/// Where per-stratum distance matrices come from: computed from the table's
/// ranks (with the caliper penalty) or read from a user-supplied file.
pub enum DistanceSource {
    Computed {
        metric: RankMetric,
        scores: Vec<f64>,
        score_sd: f64,
        width_multiplier: f64,
        penalty_scale: f64,
    },
    External(ExternalDistances),
}

impl DistanceSource {
    pub fn matrix_for(
        &self,
        stratum: usize,
        table: &CovariateTable,
        treated: &[usize],
        controls: &[usize],
    ) -> Result<DistanceMatrix> {
        match self {
            DistanceSource::Computed {
                metric,
                scores,
                score_sd,
                width_multiplier,
                penalty_scale,
            } => {
                let mut dm =
                    metric.matrix(stratum, treated, controls, &|i| table.subject(i).id.clone());
                let t_scores: Vec<f64> = treated.iter().map(|&i| scores[i]).collect();
                let c_scores: Vec<f64> = controls.iter().map(|&i| scores[i]).collect();
                apply_caliper(
                    &mut dm,
                    &t_scores,
                    &c_scores,
                    *score_sd,
                    *width_multiplier,
                    *penalty_scale,
                );
                Ok(dm)
            }
            DistanceSource::External(ext) => {
                let t_ids: Vec<String> = treated.iter().map(|&i| table.subject(i).id.clone()).collect();
                let c_ids: Vec<String> = controls.iter().map(|&i| table.subject(i).id.clone()).collect();
                ext.matrix(stratum, &t_ids, &c_ids)
            }
        }
    }
}

/// Median of the entries across a set of matrices; the default caliper
/// penalty is 1000 times this (or 1000 when everything is zero).
pub fn default_penalty_scale(matrices: &[DistanceMatrix]) -> f64 {
    let mut entries: Vec<f64> = matrices
        .iter()
        .flat_map(|m| m.d.iter().flatten().copied())
        .collect();
    if entries.is_empty() {
        return 1000.0;
    }
    entries.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = entries.len() / 2;
    let median = if entries.len() % 2 == 1 {
        entries[mid]
    } else {
        0.5 * (entries[mid - 1] + entries[mid])
    };
    if median > 0.0 {
        1000.0 * median
    } else {
        1000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ranks_strictly_increasing() {
        assert_eq!(rank_column(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(rank_column(&[5.0, 5.0, 9.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn ranks_constant_column() {
        assert_eq!(rank_column(&[7.0, 7.0, 7.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn one_dimensional_distance_matches_hand_formula() {
        // N = 5 untied subjects; ranks 3 and 1 differ by 2, untied variance
        // is (25 - 1)/12 = 2, so d = 2/sqrt(2) = sqrt(2)
        let col = vec![vec![30.0, 10.0, 20.0, 40.0, 50.0]];
        let ranks = rank_transform(&col);
        let metric = RankMetric::from_ranks(&ranks).unwrap();
        assert_relative_eq!(metric.distance(0, 1), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn identical_rows_have_zero_distance() {
        let cols = vec![vec![1.0, 1.0, 3.0, 4.0], vec![2.0, 2.0, 0.0, 5.0]];
        let ranks = rank_transform(&cols);
        let metric = RankMetric::from_ranks(&ranks).unwrap();
        assert_eq!(metric.distance(0, 1), 0.0);
    }

    fn brute_force_squared(ranks: &[Vec<f64>], i: usize, j: usize) -> f64 {
        // direct 2x2 construction of sigma*, inverted in closed form
        let n = ranks[0].len() as f64;
        let untied = (n * n - 1.0) / 12.0;
        let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
        let cov = |a: &[f64], b: &[f64]| {
            let (ma, mb) = (mean(a), mean(b));
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>()
                / (a.len() as f64 - 1.0)
        };
        let (s00, s11, s01) = (
            cov(&ranks[0], &ranks[0]),
            cov(&ranks[1], &ranks[1]),
            cov(&ranks[0], &ranks[1]),
        );
        let (f0, f1) = ((untied / s00).sqrt(), (untied / s11).sqrt());
        let (a, bb, c) = (s00 * f0 * f0, s11 * f1 * f1, s01 * f0 * f1);
        let det = a * bb - c * c;
        let d0 = ranks[0][i] - ranks[0][j];
        let d1 = ranks[1][i] - ranks[1][j];
        (bb * d0 * d0 - 2.0 * c * d0 * d1 + a * d1 * d1) / det
    }

    #[test]
    fn independent_covariates_decompose_into_squared_terms() {
        // rank patterns with zero covariance: d^2 is the sum of
        // per-covariate squared standardized rank differences
        let cols = vec![
            vec![10.0, 20.0, 30.0, 40.0], // ranks 1 2 3 4
            vec![20.0, 40.0, 10.0, 30.0], // ranks 2 4 1 3
        ];
        let ranks = rank_transform(&cols);
        let metric = RankMetric::from_ranks(&ranks).unwrap();
        let untied = (16.0 - 1.0) / 12.0;
        for i in 0..4 {
            for j in 0..4 {
                let d0 = ranks[0][i] - ranks[0][j];
                let d1 = ranks[1][i] - ranks[1][j];
                let expect = (d0 * d0 + d1 * d1) / untied;
                assert_relative_eq!(metric.distance(i, j).powi(2), expect, epsilon = 1e-9);
                assert_relative_eq!(
                    metric.distance(i, j).powi(2),
                    brute_force_squared(&ranks, i, j),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn correlated_covariates_match_brute_force_inverse() {
        let cols = vec![vec![1.0, 2.0, 4.0, 3.0], vec![1.0, 3.0, 2.0, 4.0]];
        let ranks = rank_transform(&cols);
        let metric = RankMetric::from_ranks(&ranks).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(
                    metric.distance(i, j).powi(2),
                    brute_force_squared(&ranks, i, j),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn monotone_transform_leaves_distances_unchanged() {
        let cols = vec![vec![1.0, 5.0, 2.0, 8.0, 3.0], vec![0.1, 0.5, 0.9, 0.2, 0.4]];
        let ranks_a = rank_transform(&cols);
        let squashed: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| c.iter().map(|v| (v * 3.0 + 1.0).ln()).collect())
            .collect();
        let ranks_b = rank_transform(&squashed);
        let ma = RankMetric::from_ranks(&ranks_a).unwrap();
        let mb = RankMetric::from_ranks(&ranks_b).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(ma.distance(i, j).to_bits(), mb.distance(i, j).to_bits());
            }
        }
    }

    #[test]
    fn too_few_subjects_rejected() {
        assert!(matches!(
            RankMetric::from_ranks(&[vec![1.0]]),
            Err(Error::TooFewSubjects { n: 1 })
        ));
    }

    fn toy_matrix() -> DistanceMatrix {
        DistanceMatrix {
            stratum: 1,
            treated_ids: vec!["t".into()],
            control_ids: vec!["a".into(), "b".into(), "c".into()],
            d: vec![vec![1.0, 2.0, 3.0]],
        }
    }

    #[test]
    fn caliper_boundary_is_not_a_violation() {
        let mut dm = toy_matrix();
        // sd = 0.2, multiplier 0.5 -> w = 0.1; gaps: 0.1 (boundary), 0.2, 0.0
        apply_caliper(&mut dm, &[0.5], &[0.4, 0.3, 0.5], 0.2, 0.5, 1000.0);
        assert_eq!(dm.d[0][0], 1.0);
        assert_relative_eq!(dm.d[0][1], 2.0 + 1000.0 * (0.2 - 0.1) / 0.1, epsilon = 1e-9);
        assert_eq!(dm.d[0][2], 3.0);
    }

    #[test]
    fn gap_of_twice_width_adds_full_penalty() {
        let mut dm = toy_matrix();
        let w: f64 = 0.1;
        apply_caliper(&mut dm, &[0.5], &[0.5 - 2.0 * w, 0.5, 0.5], 0.2, 0.5, 1000.0);
        assert_relative_eq!(dm.d[0][0], 1.0 + 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn equal_scores_leave_matrix_unchanged() {
        let mut dm = toy_matrix();
        let before = dm.d.clone();
        apply_caliper(&mut dm, &[0.5], &[0.5, 0.5, 0.5], 0.0, 0.5, 1000.0);
        assert_eq!(dm.d, before);
    }

    #[test]
    fn default_penalty_uses_median() {
        let dm = toy_matrix();
        assert_relative_eq!(default_penalty_scale(&[dm]), 2000.0);
        assert_relative_eq!(default_penalty_scale(&[]), 1000.0);
    }
}

//! Propensity scores, entire numbers, and the score-interval stratification
//! that fixes each treated subject's control ratio before matching.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ingest::CovariateTable;

/// Scores are clamped this far inside (0, 1).
pub const SCORE_EPS: f64 = 1e-6;

const MAX_ITERATIONS: usize = 100;
const COEF_TOLERANCE: f64 = 1e-8;

/// A fitted (or externally supplied) propensity model.
#[derive(Debug, Clone)]
pub struct PropensityResult {
    /// Intercept followed by one weight per covariate; `None` when scores
    /// were supplied externally.
    pub coefficients: Option<Vec<f64>>,
    /// Estimated e(x) per subject, clamped inside (0, 1).
    pub scores: Vec<f64>,
    /// Inverse odds (1 - e) / e per subject.
    pub entire_numbers: Vec<f64>,
    /// Sample standard deviation of the scores over all subjects.
    pub score_sd: f64,
    /// Set when an unpenalized fit pushed some score to the clamp bound,
    /// which suggests (quasi-)separation.
    pub separation_warning: bool,
}

impl PropensityResult {
    fn from_raw_scores(
        coefficients: Option<Vec<f64>>,
        raw: Vec<f64>,
        flag_separation: bool,
    ) -> Self {
        let scores: Vec<f64> = raw
            .iter()
            .map(|&s| s.clamp(SCORE_EPS, 1.0 - SCORE_EPS))
            .collect();
        let separation_warning = flag_separation
            && scores
                .iter()
                .any(|&s| s <= SCORE_EPS || s >= 1.0 - SCORE_EPS);
        let entire_numbers = scores.iter().map(|&s| (1.0 - s) / s).collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let score_sd = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        PropensityResult {
            coefficients,
            scores,
            entire_numbers,
            score_sd,
            separation_warning,
        }
    }

    /// Wraps externally fitted scores (one per subject, each in (0, 1)).
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        for &s in &scores {
            if !(s > 0.0 && s < 1.0) || !s.is_finite() {
                return Err(Error::ScoreOutOfRange { value: s });
            }
        }
        Ok(Self::from_raw_scores(None, scores, false))
    }
}

/// Fits logistic regression of treatment on all covariates (plus intercept)
/// by iteratively reweighted least squares, with an optional ridge penalty
/// on the non-intercept terms.
pub fn fit_propensity(table: &CovariateTable, ridge: f64) -> Result<PropensityResult> {
    debug_assert!(table.is_imputed(), "fit on an imputed table");
    let n = table.n();
    let p = table.n_covariates() + 1;

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, subj) in table.subjects().iter().enumerate() {
        x[(i, 0)] = 1.0;
        for j in 0..table.n_covariates() {
            x[(i, j + 1)] = subj.value(j);
        }
        y[i] = if subj.z { 1.0 } else { 0.0 };
    }

    let mut beta = DVector::zeros(p);
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let eta = &x * &beta;
        let mu: DVector<f64> = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        // Newton step: (X'WX + ridge I*) delta = X'(y - mu) - ridge beta*
        let mut grad = x.transpose() * (&y - &mu);
        let mut hess = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = (mu[i] * (1.0 - mu[i])).max(1e-10);
            for a in 0..p {
                let xa = x[(i, a)] * w;
                for b in a..p {
                    hess[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        if ridge > 0.0 {
            for j in 1..p {
                hess[(j, j)] += ridge;
                grad[j] -= ridge * beta[j];
            }
        }
        let delta = solve_spd(&hess, &grad);
        let step_max = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        beta += &delta;
        if step_max < COEF_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS,
        });
    }

    let raw: Vec<f64> = (&x * &beta)
        .iter()
        .map(|e| 1.0 / (1.0 + (-e).exp()))
        .collect();
    Ok(PropensityResult::from_raw_scores(
        Some(beta.iter().copied().collect()),
        raw,
        ridge == 0.0,
    ))
}

/// Solve H d = g for symmetric positive semidefinite H, falling back to an
/// SVD pseudo-solve when collinear columns make H singular.
fn solve_spd(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = hess.clone().cholesky() {
        return ch.solve(grad);
    }
    let svd = hess.clone().svd(true, true);
    svd.solve(grad, 1e-12 * hess.amax().max(1.0))
        .unwrap_or_else(|_| DVector::zeros(grad.len()))
}

/// Inverse odds nu = (1 - e) / e of a propensity score.
pub fn entire_number(score: f64) -> Result<f64> {
    if !(score > 0.0 && score < 1.0) || !score.is_finite() {
        return Err(Error::ScoreOutOfRange { value: score });
    }
    Ok((1.0 - score) / score)
}

/// Control count for a treated subject: max(1, min(floor(nu), beta)).
pub fn ratio_rule(nu: f64, beta: usize) -> usize {
    debug_assert!(beta >= 1);
    let floored = nu.floor().max(0.0) as usize;
    floored.clamp(1, beta)
}

/// Score intervals S_1 = (1/3, 1], S_k = (1/(k+2), 1/(k+1)] for middle k,
/// and S_K = [0, 1/(K+1)]; together they partition [0, 1].
#[derive(Debug, Clone)]
pub struct StratumPartition {
    /// Maximum controls per treated subject (K).
    pub k_max: usize,
    /// 1-based stratum label per subject.
    pub assignment: Vec<usize>,
}

/// The unique stratum in 1..=k_max whose interval contains the score.
pub fn stratum_of(score: f64, k_max: usize) -> usize {
    debug_assert!(k_max >= 1);
    if score > 1.0 / 3.0 {
        return 1;
    }
    for k in 2..k_max {
        if score > 1.0 / (k as f64 + 2.0) {
            return k;
        }
    }
    k_max
}

/// Assigns every subject to its entire-number stratum.
pub fn stratify(result: &PropensityResult, k_max: usize) -> StratumPartition {
    assert!(k_max >= 2, "stratification needs K >= 2");
    let assignment = result
        .scores
        .iter()
        .map(|&s| stratum_of(s, k_max))
        .collect();
    StratumPartition { k_max, assignment }
}

impl StratumPartition {
    /// Per-stratum subject indices for members with the given treatment arm.
    pub fn members(&self, stratum: usize, table: &CovariateTable, treated: bool) -> Vec<usize> {
        (0..table.n())
            .filter(|&i| self.assignment[i] == stratum && table.subject(i).z == treated)
            .collect()
    }

    /// Builds a degenerate single-stratum partition (used for pair matching
    /// on the full sample).
    pub fn single(n: usize) -> Self {
        StratumPartition {
            k_max: 1,
            assignment: vec![1; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{impute_with_indicators, load_table, Schema};
    use approx::assert_relative_eq;
    use std::io::Write;

    fn table_from(content: &str) -> CovariateTable {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        let mut schema = Schema::new("z");
        schema.id = Some("id".to_string());
        impute_with_indicators(&load_table(f.path(), &schema).unwrap()).unwrap()
    }

    /// Finite-difference check of the penalized log-likelihood gradient.
    fn max_grad_component(table: &CovariateTable, beta: &[f64], ridge: f64) -> f64 {
        let loglik = |b: &[f64]| -> f64 {
            let mut ll = 0.0;
            for subj in table.subjects() {
                let mut eta = b[0];
                for j in 0..table.n_covariates() {
                    eta += b[j + 1] * subj.value(j);
                }
                let y = if subj.z { 1.0 } else { 0.0 };
                ll += y * eta - (1.0 + eta.exp()).ln();
            }
            for bj in &b[1..] {
                ll -= 0.5 * ridge * bj * bj;
            }
            ll
        };
        let h = 1e-6;
        let mut worst = 0.0f64;
        for j in 0..beta.len() {
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[j] += h;
            dn[j] -= h;
            let g = (loglik(&up) - loglik(&dn)) / (2.0 * h);
            worst = worst.max(g.abs());
        }
        worst
    }

    #[test]
    fn saturated_two_by_two_recovers_cell_proportions() {
        // P(Z=1|x=1) = 0.75, P(Z=1|x=0) = 0.25, balanced groups of 4
        let t = table_from(
            "id,z,x\na1,1,1\na2,1,1\na3,1,1\na4,0,1\nb1,1,0\nb2,0,0\nb3,0,0\nb4,0,0\n",
        );
        let fit = fit_propensity(&t, 0.0).unwrap();
        for (i, subj) in t.subjects().iter().enumerate() {
            let expect = if subj.value(0) == 1.0 { 0.75 } else { 0.25 };
            assert_relative_eq!(fit.scores[i], expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn constant_covariate_gives_intercept_only_scores() {
        let t = table_from("id,z,x\na,1,5\nb,1,5\nc,0,5\nd,0,5\ne,0,5\n");
        let fit = fit_propensity(&t, 0.0).unwrap();
        for s in &fit.scores {
            assert_relative_eq!(*s, 0.4, epsilon = 1e-8);
        }
    }

    #[test]
    fn separable_data_with_ridge_stays_finite() {
        let t = table_from("id,z,x\na,1,2\nb,1,3\nc,1,4\nd,0,-2\ne,0,-3\nf,0,-4\n");
        let fit = fit_propensity(&t, 0.01).unwrap();
        let beta = fit.coefficients.as_ref().unwrap();
        assert!(beta.iter().all(|b| b.is_finite()));
        assert!(max_grad_component(&t, beta, 0.01) < 1e-6);
        assert!(!fit.separation_warning);
    }

    #[test]
    fn gradient_vanishes_at_reported_mle() {
        let t = table_from(
            "id,z,x,y\na,1,1,0.5\nb,1,0,1.5\nc,1,1,2.0\nd,0,0,0.5\ne,0,1,1.0\nf,0,0,2.5\ng,0,1,0.0\n",
        );
        let fit = fit_propensity(&t, 0.0).unwrap();
        let beta = fit.coefficients.as_ref().unwrap();
        assert!(max_grad_component(&t, beta, 0.0) < 1e-6);
    }

    #[test]
    fn external_scores_validate_range() {
        assert!(PropensityResult::from_scores(vec![0.5, 1.0]).is_err());
        assert!(PropensityResult::from_scores(vec![0.5, 0.0]).is_err());
        let ok = PropensityResult::from_scores(vec![0.5, 0.25]).unwrap();
        assert_eq!(ok.entire_numbers, vec![1.0, 3.0]);
        assert!(ok.coefficients.is_none());
    }

    #[test]
    fn entire_number_examples() {
        assert_relative_eq!(entire_number(0.25).unwrap(), 3.0);
        assert_relative_eq!(entire_number(0.5).unwrap(), 1.0);
        assert_relative_eq!(entire_number(0.1).unwrap(), 9.0, epsilon = 1e-12);
        assert!(entire_number(0.0).is_err());
        assert!(entire_number(1.0).is_err());
        assert!(entire_number(-0.2).is_err());
    }

    #[test]
    fn ratio_rule_examples() {
        assert_eq!(ratio_rule(3.0, 5), 3);
        assert_eq!(ratio_rule(0.4, 5), 1);
        assert_eq!(ratio_rule(7.2, 5), 5);
    }

    #[test]
    fn ratio_rule_is_monotone_and_bounded() {
        let beta = 5;
        let mut prev = 0;
        for i in 0..1000 {
            let nu = i as f64 * 0.01;
            let k = ratio_rule(nu, beta);
            assert!(k >= prev);
            assert!((1..=beta).contains(&k));
            prev = k;
        }
    }

    #[test]
    fn stratum_examples() {
        assert_eq!(stratum_of(0.30, 5), 2);
        assert_eq!(stratum_of(0.50, 5), 1);
        assert_eq!(stratum_of(0.10, 5), 5);
        // right-closed boundaries: a score exactly 1/(k+1) joins S_k
        assert_eq!(stratum_of(1.0 / 3.0, 5), 2);
        assert_eq!(stratum_of(0.25, 5), 3);
        assert_eq!(stratum_of(1.0, 5), 1);
        assert_eq!(stratum_of(0.0, 5), 5);
    }

    #[test]
    fn partition_is_exhaustive_and_consistent_with_entire_numbers() {
        for k_max in 2..=10usize {
            for g in 0..=10_000 {
                let score = g as f64 / 10_000.0;
                let k = stratum_of(score, k_max);
                assert!((1..=k_max).contains(&k));
                if k >= 2 && k < k_max && score > 0.0 {
                    let nu = (1.0 - score) / score;
                    assert!(
                        nu >= k as f64 - 1e-9 && nu < k as f64 + 1.0 + 1e-9,
                        "score {score} put in stratum {k} but nu = {nu}"
                    );
                }
            }
        }
    }
}

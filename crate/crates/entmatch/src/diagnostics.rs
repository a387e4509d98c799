//! Covariate balance diagnostics: weighted group means, standardized
//! differences against the before-matching pooled SD, stratified
//! permutation p-values, effective sample size, and QQ data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::CovariateTable;
use crate::matcher::MatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLabel {
    Unmatched,
    Matched,
}

impl SampleLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleLabel::Unmatched => "unmatched",
            SampleLabel::Matched => "matched",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_control: f64,
    pub mean_treated: f64,
    pub std_diff: f64,
    pub p_value: f64,
    /// The covariate had no variance before matching; std_diff is reported
    /// as zero.
    pub zero_variance: bool,
}

#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub label: SampleLabel,
    pub rows: Vec<BalanceRow>,
    /// Pair-equivalent count; absent for unmatched reports.
    pub effective_sample_size: Option<f64>,
}

/// Per-set member values for one covariate: the treated value first,
/// then the controls.
fn set_values(result: &MatchResult, table: &CovariateTable, j: usize) -> Result<Vec<Vec<f64>>> {
    if result.sets.is_empty() {
        return Err(Error::EmptyMatch);
    }
    result
        .sets
        .iter()
        .map(|set| {
            let mut vals = Vec::with_capacity(set.k() + 1);
            let t = table
                .index_of_id(&set.treated_id)
                .ok_or_else(|| Error::Config(format!("unknown id {:?}", set.treated_id)))?;
            vals.push(table.subject(t).value(j));
            for c in &set.control_ids {
                let ci = table
                    .index_of_id(c)
                    .ok_or_else(|| Error::Config(format!("unknown id {c:?}")))?;
                vals.push(table.subject(ci).value(j));
            }
            Ok(vals)
        })
        .collect()
}

/// Weighted difference statistic: designated-treated mean minus the mean of
/// per-set control means, so each control carries weight 1/k_i and each set
/// weighs equally.
fn weighted_stat(sets: &[Vec<f64>], designated: impl Fn(usize) -> usize) -> f64 {
    let n = sets.len() as f64;
    let mut t_sum = 0.0;
    let mut c_sum = 0.0;
    for (s, vals) in sets.iter().enumerate() {
        let d = designated(s);
        let total: f64 = vals.iter().sum();
        let k = (vals.len() - 1) as f64;
        t_sum += vals[d];
        c_sum += (total - vals[d]) / k;
    }
    t_sum / n - c_sum / n
}

/// Matched-group means per covariate: (mean_treated, mean_control), with
/// controls weighted 1/k_i within each set.
pub fn weighted_means(result: &MatchResult, table: &CovariateTable) -> Result<Vec<(f64, f64)>> {
    (0..table.n_covariates())
        .map(|j| {
            let sets = set_values(result, table, j)?;
            let n = sets.len() as f64;
            let mean_t = sets.iter().map(|v| v[0]).sum::<f64>() / n;
            let mean_c = sets
                .iter()
                .map(|v| v[1..].iter().sum::<f64>() / (v.len() - 1) as f64)
                .sum::<f64>()
                / n;
            Ok((mean_t, mean_c))
        })
        .collect()
}

/// (treated mean - control mean) / pooled before-matching SD; zero-variance
/// covariates report 0 (the caller flags them).
pub fn std_diff(mean_t: f64, mean_c: f64, pooled_sd_before: f64) -> f64 {
    if pooled_sd_before > 0.0 {
        (mean_t - mean_c) / pooled_sd_before
    } else {
        0.0
    }
}

/// sqrt((s^2_treated + s^2_control) / 2) on the full unmatched sample.
pub fn pooled_sd_before(table: &CovariateTable, j: usize) -> f64 {
    let var = |idx: &[usize]| -> f64 {
        if idx.len() < 2 {
            return 0.0;
        }
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| table.subject(i).value(j)).sum::<f64>() / n;
        idx.iter()
            .map(|&i| (table.subject(i).value(j) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    };
    let vt = var(&table.treated_indices());
    let vc = var(&table.control_indices());
    ((vt + vc) / 2.0).sqrt()
}

/// Pair-equivalent information content: a 1:k set counts 2k/(k+1) toward
/// the total, so a pair counts exactly 1. Sets are grouped by ratio before
/// summing, so compositions of round fractions stay exact.
pub fn effective_sample_size(result: &MatchResult) -> f64 {
    let mut by_ratio: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for s in &result.sets {
        *by_ratio.entry(s.k()).or_insert(0) += 1;
    }
    let composition: Vec<(usize, usize)> = by_ratio.into_iter().collect();
    effective_sample_size_of(&composition)
}

/// Same formula from a (ratio, count) composition.
pub fn effective_sample_size_of(composition: &[(usize, usize)]) -> f64 {
    composition
        .iter()
        .map(|&(k, count)| count as f64 * (2.0 * k as f64 / (k as f64 + 1.0)))
        .sum()
}

/// Two-sided Monte-Carlo p-value for the weighted mean difference under
/// random relabeling of the treated unit within each matched set, with the
/// add-one correction (count + 1) / (draws + 1).
pub fn permutation_pvalue(
    result: &MatchResult,
    table: &CovariateTable,
    covariate: usize,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let sets = set_values(result, table, covariate)?;
    let observed = weighted_stat(&sets, |_| 0).abs();
    let mut count = 0usize;
    let mut picks = vec![0usize; sets.len()];
    for _ in 0..draws {
        for (s, vals) in sets.iter().enumerate() {
            picks[s] = rng.gen_range(0..vals.len());
        }
        let stat = weighted_stat(&sets, |s| picks[s]).abs();
        if stat >= observed {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (draws + 1) as f64)
}

/// Unstratified analogue for the unmatched sample: relabels which subjects
/// are treated, holding the group sizes fixed.
pub fn two_sample_permutation_pvalue(
    values: &[f64],
    z: &[bool],
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = values.len();
    let n_t = z.iter().filter(|&&t| t).count();
    let total: f64 = values.iter().sum();
    let diff_for = |t_sum: f64| -> f64 {
        t_sum / n_t as f64 - (total - t_sum) / (n - n_t) as f64
    };
    let observed = diff_for(
        values
            .iter()
            .zip(z)
            .filter(|(_, &t)| t)
            .map(|(v, _)| v)
            .sum(),
    )
    .abs();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    for _ in 0..draws {
        // Fisher-Yates prefix of length n_t selects the permuted treated group
        for i in 0..n_t {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        let t_sum: f64 = idx[..n_t].iter().map(|&i| values[i]).sum();
        if diff_for(t_sum).abs() >= observed {
            count += 1;
        }
    }
    (count + 1) as f64 / (draws + 1) as f64
}

/// Sorted p-values against uniform plotting positions (i - 0.5)/n.
pub fn qq_uniform(pvalues: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pvalues.is_empty() {
        return Err(Error::EmptyPValues);
    }
    debug_assert!(pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, p)| ((i as f64 + 0.5) / n, p))
        .collect())
}

fn covariate_rng(seed: u64, j: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Balance table for the full unmatched sample.
pub fn unmatched_report(table: &CovariateTable, draws: usize, seed: u64) -> BalanceReport {
    let z: Vec<bool> = table.subjects().iter().map(|s| s.z).collect();
    let treated = table.treated_indices();
    let controls = table.control_indices();
    let rows = (0..table.n_covariates())
        .map(|j| {
            let values = table.column_values(j);
            let mean_t = treated.iter().map(|&i| values[i]).sum::<f64>() / treated.len() as f64;
            let mean_c = controls.iter().map(|&i| values[i]).sum::<f64>() / controls.len() as f64;
            let sd = pooled_sd_before(table, j);
            let mut rng = covariate_rng(seed, j);
            BalanceRow {
                covariate: table.covariate_names()[j].clone(),
                mean_control: mean_c,
                mean_treated: mean_t,
                std_diff: std_diff(mean_t, mean_c, sd),
                p_value: two_sample_permutation_pvalue(&values, &z, draws, &mut rng),
                zero_variance: sd <= 0.0,
            }
        })
        .collect();
    BalanceReport {
        label: SampleLabel::Unmatched,
        rows,
        effective_sample_size: None,
    }
}

/// Balance table for a matched sample, with 1/k_i control weighting and
/// stratified permutation p-values.
pub fn matched_report(
    table: &CovariateTable,
    result: &MatchResult,
    draws: usize,
    seed: u64,
) -> Result<BalanceReport> {
    let means = weighted_means(result, table)?;
    let rows = (0..table.n_covariates())
        .map(|j| {
            let (mean_t, mean_c) = means[j];
            let sd = pooled_sd_before(table, j);
            let mut rng = covariate_rng(seed, j);
            Ok(BalanceRow {
                covariate: table.covariate_names()[j].clone(),
                mean_control: mean_c,
                mean_treated: mean_t,
                std_diff: std_diff(mean_t, mean_c, sd),
                p_value: permutation_pvalue(result, table, j, draws, &mut rng)?,
                zero_variance: sd <= 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BalanceReport {
        label: SampleLabel::Matched,
        rows,
        effective_sample_size: Some(effective_sample_size(result)),
    })
}

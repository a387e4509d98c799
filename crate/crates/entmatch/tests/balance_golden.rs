//! Diagnostics on the worked small example: weighted means, standardized
//! differences, permutation p-values against exact enumeration, and the
//! effective sample size of the fixture match.

use std::io::Write;
use std::path::PathBuf;

use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use entmatch::diagnostics;
use entmatch::ingest::{impute_with_indicators, load_table, Schema};
use entmatch::matcher::{MatchResult, MatchedSet};
use entmatch::pipeline::{self, Policy, RunConfig};

fn fixture_config(fine_balance: bool, out: PathBuf) -> RunConfig {
    let mut c = RunConfig::default();
    c.input = PathBuf::from("tests/data/small_example.csv");
    c.out = out;
    c.seed = 7;
    c.schema.treatment = "treat".to_string();
    c.schema.id = Some("id".to_string());
    c.schema.covariates = vec!["drug".to_string()];
    c.propensity.scores = Some("pscore".to_string());
    c.matching.k = 3;
    c.matching.policy = Policy::Fail;
    c.matching.distance_file = Some(PathBuf::from("tests/data/small_example_distances.csv"));
    if fine_balance {
        c.matching.fine_balance = vec!["drug".to_string()];
    }
    c
}

#[test]
fn fixture_weighted_means_on_drug_use() {
    let dir = tempfile::tempdir().unwrap();
    let summary = pipeline::run_pipeline(&fixture_config(false, dir.path().to_path_buf())).unwrap();
    let means = diagnostics::weighted_means(&summary.result, &summary.table).unwrap();
    let drug = summary.table.find_covariate("drug").unwrap();
    let (mean_t, mean_c) = means[drug];
    // hand tally over the matched sets: per-set control means are
    // 1, 0, 0, 0, 1/2, 0, 1/2, 2/3, averaging to exactly 1/3
    assert_relative_eq!(mean_t, 0.5, epsilon = 1e-12);
    assert_relative_eq!(mean_c, 1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn fixture_standardized_differences_on_drug_use() {
    // pooled before-matching SD: treated variance 2/7, control variance
    // (1224/289)/16, so sd = sqrt((2/7 + 1224/4624)/2)
    let sd = ((2.0 / 7.0 + 1224.0 / 4624.0) / 2.0f64).sqrt();

    let dir = tempfile::tempdir().unwrap();
    let plain = pipeline::run_pipeline(&fixture_config(false, dir.path().to_path_buf())).unwrap();
    let row = plain
        .matched
        .rows
        .iter()
        .find(|r| r.covariate == "drug")
        .unwrap();
    assert_relative_eq!(row.std_diff, (0.5 - 1.0 / 3.0) / sd, epsilon = 1e-12);

    let dir2 = tempfile::tempdir().unwrap();
    let balanced = pipeline::run_pipeline(&fixture_config(true, dir2.path().to_path_buf())).unwrap();
    let row = balanced
        .matched
        .rows
        .iter()
        .find(|r| r.covariate == "drug")
        .unwrap();
    // near-fine balance moves the weighted control mean to 13/24, putting
    // the standardized difference near -0.08
    assert_relative_eq!(row.std_diff, (0.5 - 13.0 / 24.0) / sd, epsilon = 1e-12);
    assert!((row.std_diff - (-0.079)).abs() < 1e-3);
}

#[test]
fn fixture_effective_sample_size() {
    let dir = tempfile::tempdir().unwrap();
    let summary = pipeline::run_pipeline(&fixture_config(true, dir.path().to_path_buf())).unwrap();
    // 4 pairs + 3 triples + 1 quadruple = 4 + 3*(4/3) + 3/2
    assert_eq!(
        summary.matched.effective_sample_size.unwrap(),
        4.0 + 4.0 + 1.5
    );
}

fn paired_table(pairs: &[(f64, f64)]) -> (entmatch::ingest::CovariateTable, MatchResult) {
    let mut csv = String::from("id,z,x\n");
    let mut sets = Vec::new();
    for (i, (t, c)) in pairs.iter().enumerate() {
        csv.push_str(&format!("t{i},1,{t}\n"));
        csv.push_str(&format!("c{i},0,{c}\n"));
        sets.push(MatchedSet {
            stratum: 1,
            treated_id: format!("t{i}"),
            control_ids: vec![format!("c{i}")],
        });
    }
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(csv.as_bytes()).unwrap();
    f.flush().unwrap();
    let mut schema = Schema::new("z");
    schema.id = Some("id".to_string());
    let table = impute_with_indicators(&load_table(f.path(), &schema).unwrap()).unwrap();
    let result = MatchResult {
        sets,
        discarded_treated: Vec::new(),
        discarded_controls: Vec::new(),
        strata: Vec::new(),
    };
    (table, result)
}

#[test]
fn permutation_pvalue_matches_exact_enumeration_on_three_pairs() {
    let pairs = [(3.0, 1.0), (2.0, 5.0), (4.0, 4.5)];
    let (table, result) = paired_table(&pairs);

    // exact two-sided p over the 2^3 within-pair relabelings
    let diffs: Vec<f64> = pairs.iter().map(|(t, c)| t - c).collect();
    let observed = (diffs.iter().sum::<f64>() / 3.0).abs();
    let mut hits = 0;
    for mask in 0..8u32 {
        let stat: f64 = diffs
            .iter()
            .enumerate()
            .map(|(i, d)| if mask & (1 << i) != 0 { -d } else { *d })
            .sum::<f64>()
            / 3.0;
        if stat.abs() >= observed - 1e-12 {
            hits += 1;
        }
    }
    let exact = hits as f64 / 8.0;

    let draws = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = diagnostics::permutation_pvalue(&result, &table, 0, draws, &mut rng).unwrap();
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    assert!(
        (p - exact).abs() <= 3.0 * se + 1.0 / (draws as f64 + 1.0),
        "monte carlo {p} vs exact {exact}"
    );
}

#[test]
fn permutation_pvalue_degenerate_cases() {
    // a covariate identical for everyone has a degenerate null: p = 1
    let (table, result) = paired_table(&[(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = diagnostics::permutation_pvalue(&result, &table, 0, 500, &mut rng).unwrap();
    assert_eq!(p, 1.0);

    // a covariate equal to the treatment indicator over 20 pairs separates
    // maximally; no draw reproduces it, so p sits at the floor
    let pairs: Vec<(f64, f64)> = (0..20).map(|_| (1.0, 0.0)).collect();
    let (table, result) = paired_table(&pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 1000;
    let p = diagnostics::permutation_pvalue(&result, &table, 0, draws, &mut rng).unwrap();
    assert_eq!(p, 1.0 / (draws as f64 + 1.0));
}

//! Variable-ratio matching: subjects are stratified by entire number, each
//! stratum is matched at a fixed 1:k ratio with near-fine balance by solving
//! one min-cost-flow problem, and the per-stratum matches are unioned.
//!
//! Balance-first semantics come from a single network: controls reach the
//! sink through per-level nodes whose free capacity equals the fine-balance
//! target, with overflow arcs priced high enough that one unit of balance
//! deviation always outweighs any achievable total distance.

use std::collections::BTreeSet;

use crate::distance::{DistanceMatrix, DistanceSource};
use crate::error::{Error, Result};
use crate::ingest::CovariateTable;
use crate::netflow::{self, FlowNetwork};
use crate::propensity::{PropensityResult, StratumPartition};

/// Cost integerization scale; ties closer than 1/scale may resolve either way.
pub const COST_SCALE: i64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonSupportPolicy {
    /// Relabel controls as treated and pair-match, discarding the least
    /// matchable treated units.
    SubsetMatch,
    /// Drop treated above the top control score and controls below the
    /// bottom treated score, then match.
    TrimScores,
    Fail,
}

/// Matching options. The minimum ratio is fixed at one control per treated.
#[derive(Debug, Clone)]
pub struct MatchConfig {
    /// Maximum controls per treated subject (beta).
    pub k_max: usize,
    pub fine_balance: Option<FineBalanceSpec>,
    pub policy: CommonSupportPolicy,
}

/// A nominal balance variable: one level per subject, with display labels.
#[derive(Debug, Clone)]
pub struct FineBalanceSpec {
    pub label: String,
    pub level_labels: Vec<String>,
    /// Level index per subject, aligned with the table.
    pub level_of: Vec<usize>,
}

impl FineBalanceSpec {
    pub fn num_levels(&self) -> usize {
        self.level_labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum LevelKey {
    Value(i64),
    Missing,
}

impl LevelKey {
    fn label(&self) -> String {
        match self {
            LevelKey::Value(v) => v.to_string(),
            LevelKey::Missing => "NA".to_string(),
        }
    }
}

/// Builds a nominal covariate whose levels are the observed combinations of
/// the given discrete columns. Cells that were missing before imputation
/// form their own level.
pub fn interact(table: &CovariateTable, columns: &[usize]) -> Result<FineBalanceSpec> {
    assert!(!columns.is_empty());
    let mut keys: Vec<Vec<LevelKey>> = Vec::with_capacity(table.n());
    for subj in table.subjects() {
        let mut key = Vec::with_capacity(columns.len());
        for &j in columns {
            if subj.is_missing(j) {
                key.push(LevelKey::Missing);
            } else {
                let v = subj.value(j);
                if (v - v.round()).abs() > 1e-6 {
                    return Err(Error::NonDiscreteColumn {
                        column: table.covariate_names()[j].clone(),
                    });
                }
                key.push(LevelKey::Value(v.round() as i64));
            }
        }
        keys.push(key);
    }
    let levels: Vec<Vec<LevelKey>> = keys.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let level_of = keys
        .iter()
        .map(|k| levels.binary_search(k).unwrap())
        .collect();
    let names: Vec<&str> = columns
        .iter()
        .map(|&j| table.covariate_names()[j].as_str())
        .collect();
    let level_labels = levels
        .iter()
        .map(|combo| {
            names
                .iter()
                .zip(combo)
                .map(|(n, k)| format!("{n}={}", k.label()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    Ok(FineBalanceSpec {
        label: names.join(" x "),
        level_labels,
        level_of,
    })
}

/// Per-stratum slice of a balance variable, aligned with a distance matrix.
#[derive(Debug, Clone)]
pub struct BalanceLevels {
    pub num_levels: usize,
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
}

/// One matched set: a treated subject and its k_i controls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedSet {
    pub stratum: usize,
    pub treated_id: String,
    pub control_ids: Vec<String>,
}

impl MatchedSet {
    pub fn k(&self) -> usize {
        self.control_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    /// Stratum held treated subjects but no controls at all.
    NoControlsInStratum,
    /// Dropped by optimal subset matching in a scarce stratum.
    NoCommonSupport,
    /// Treated score above every control score (trimming).
    ScoreAboveControls,
    /// Control score below every treated score (trimming).
    ScoreBelowTreated,
    /// Control simply not selected by the optimal match.
    Unmatched,
}

impl DiscardReason {
    pub fn code(&self) -> &'static str {
        match self {
            DiscardReason::NoControlsInStratum => "no_controls_in_stratum",
            DiscardReason::NoCommonSupport => "no_common_support",
            DiscardReason::ScoreAboveControls => "trimmed_score_above_controls",
            DiscardReason::ScoreBelowTreated => "trimmed_score_below_treated",
            DiscardReason::Unmatched => "unmatched",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discard {
    pub id: String,
    pub reason: DiscardReason,
}

/// What happened inside one stratum.
#[derive(Debug, Clone)]
pub struct StratumOutcome {
    pub stratum: usize,
    pub n_treated: usize,
    pub n_controls: usize,
    /// Controls per treated actually used (0 when nothing was matched).
    pub ratio: usize,
    pub subset: bool,
    /// Sum over levels of |matched - target|; None without fine balance.
    pub deviation: Option<u64>,
    /// Total matched distance in integerized units (divide by COST_SCALE).
    pub cost_scaled: i64,
}

/// The assembled variable-ratio match.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Sorted by stratum, then treated ID.
    pub sets: Vec<MatchedSet>,
    pub discarded_treated: Vec<Discard>,
    pub discarded_controls: Vec<Discard>,
    pub strata: Vec<StratumOutcome>,
}

impl MatchResult {
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn matched_controls(&self) -> usize {
        self.sets.iter().map(MatchedSet::k).sum()
    }

    pub fn total_deviation(&self) -> Option<u64> {
        self.strata
            .iter()
            .filter_map(|s| s.deviation)
            .fold(None, |acc, d| Some(acc.unwrap_or(0) + d))
    }

    pub fn total_cost_scaled(&self) -> i64 {
        self.strata.iter().map(|s| s.cost_scaled).sum()
    }

    pub fn total_distance(&self) -> f64 {
        self.total_cost_scaled() as f64 / COST_SCALE as f64
    }
}

/// Result of a fixed-ratio solve, in distance-matrix index space.
#[derive(Debug, Clone)]
pub struct FixedRatioMatch {
    /// (treated index, sorted control indices), one entry per treated.
    pub assignments: Vec<(usize, Vec<usize>)>,
    pub deviation: Option<u64>,
    pub cost_scaled: i64,
}

/// Builds the fixed-ratio flow network: treated nodes supply k units each,
/// arcs of capacity 1 carry integerized distances to control nodes, and
/// controls reach the sink either directly (no balance variable) or through
/// per-level nodes with free capacity at the target and priced overflow.
/// Returns the network and the treated-by-control arc index table.
pub fn build_network(
    dm: &DistanceMatrix,
    k: usize,
    fb: Option<&BalanceLevels>,
) -> Result<(FlowNetwork, Vec<Vec<usize>>)> {
    let n_t = dm.n_treated();
    let n_c = dm.n_controls();
    let costs = netflow::integerize(&dm.d, COST_SCALE)?;
    let matched_total = (k * n_t) as i64;

    let mut net = FlowNetwork::new(n_t + n_c);
    for t in 0..n_t {
        net.set_supply(t, k as i64);
    }
    let mut arc_of = vec![vec![0usize; n_c]; n_t];
    for t in 0..n_t {
        for c in 0..n_c {
            arc_of[t][c] = net.add_arc(t, n_t + c, 1, costs[t][c]);
        }
    }

    match fb {
        None => {
            let sink = net.add_node();
            net.set_supply(sink, -matched_total);
            for c in 0..n_c {
                net.add_arc(n_t + c, sink, 1, 0);
            }
        }
        Some(b) => {
            let lambda = overflow_price(&costs, matched_total)?;
            let level_nodes: Vec<usize> = (0..b.num_levels).map(|_| net.add_node()).collect();
            let sink = net.add_node();
            net.set_supply(sink, -matched_total);
            for c in 0..n_c {
                net.add_arc(n_t + c, level_nodes[b.controls[c]], 1, 0);
            }
            let mut targets = vec![0i64; b.num_levels];
            for &lv in &b.treated {
                targets[lv] += k as i64;
            }
            for (lv, &node) in level_nodes.iter().enumerate() {
                if targets[lv] > 0 {
                    net.add_arc(node, sink, targets[lv], 0);
                }
                net.add_arc(node, sink, matched_total, lambda);
            }
        }
    }
    Ok((net, arc_of))
}

/// Optimal 1:k match of every treated unit in the matrix, minimizing
/// (fine-balance deviation, total distance) lexicographically. Requires
/// enough controls for the requested ratio; the ratio is never reduced here.
pub fn fixed_ratio_match(
    dm: &DistanceMatrix,
    k: usize,
    fb: Option<&BalanceLevels>,
) -> Result<FixedRatioMatch> {
    assert!(k >= 1);
    let n_t = dm.n_treated();
    let n_c = dm.n_controls();
    if n_c < k * n_t {
        return Err(Error::RatioInfeasible {
            stratum: dm.stratum,
            controls: n_c,
            needed: k * n_t,
            ratio: k,
        });
    }
    if n_t == 0 {
        return Ok(FixedRatioMatch {
            assignments: Vec::new(),
            deviation: fb.map(|_| 0),
            cost_scaled: 0,
        });
    }
    if let Some(b) = fb {
        debug_assert_eq!(b.treated.len(), n_t);
        debug_assert_eq!(b.controls.len(), n_c);
    }

    let costs = netflow::integerize(&dm.d, COST_SCALE)?;
    let (net, arc_of) = build_network(dm, k, fb)?;
    let sol = netflow::solve_mcf(&net)?;
    debug_assert!(sol.feasible, "enough controls implies a feasible network");

    let mut assignments = Vec::with_capacity(n_t);
    let mut cost_scaled = 0i64;
    for t in 0..n_t {
        let mut chosen = Vec::with_capacity(k);
        for c in 0..n_c {
            if sol.flows[arc_of[t][c]] == 1 {
                chosen.push(c);
                cost_scaled += costs[t][c];
            }
        }
        debug_assert_eq!(chosen.len(), k);
        assignments.push((t, chosen));
    }

    let deviation = fb.map(|b| {
        let mut targets = vec![0i64; b.num_levels];
        for &lv in &b.treated {
            targets[lv] += k as i64;
        }
        let mut matched = vec![0i64; b.num_levels];
        for (_, cs) in &assignments {
            for &c in cs {
                matched[b.controls[c]] += 1;
            }
        }
        matched
            .iter()
            .zip(&targets)
            .map(|(m, t)| m.abs_diff(*t))
            .sum()
    });

    Ok(FixedRatioMatch {
        assignments,
        deviation,
        cost_scaled,
    })
}

/// Price on balance-overflow arcs: scale * (1 + sum of integerized entries)
/// strictly exceeds any achievable total matched distance.
fn overflow_price(costs: &[Vec<i64>], matched_total: i64) -> Result<i64> {
    let total: i128 = costs
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| c as i128)
        .sum();
    let lambda = COST_SCALE as i128 * (1 + total);
    // total network cost must stay well inside i64
    let worst = lambda * (matched_total as i128 + 1) + total;
    if worst > i64::MAX as i128 / 2 {
        return Err(Error::CostOverflow {
            scaled: lambda as f64,
        });
    }
    Ok(lambda as i64)
}

/// Largest usable ratio given the stratum's counts, with a scarcity flag
/// when even pairs are impossible (controls < treated).
pub fn reduce_ratio(n_treated: usize, n_controls: usize, k_target: usize) -> (usize, bool) {
    debug_assert!(n_treated >= 1);
    let affordable = n_controls / n_treated;
    let k = affordable.clamp(1, k_target.max(1));
    (k, n_controls < n_treated)
}

/// Result of optimal subset matching in a stratum with excess treated units.
#[derive(Debug, Clone)]
pub struct SubsetMatch {
    /// (treated index, control index) pairs, sorted by treated index.
    pub assignments: Vec<(usize, usize)>,
    pub discarded_treated: Vec<usize>,
    pub deviation: Option<u64>,
    pub cost_scaled: i64,
}

/// Pair-matches every control to a distinct treated unit (roles swapped),
/// discarding the excess treated units least comparable to the controls.
pub fn subset_match(dm: &DistanceMatrix, fb: Option<&BalanceLevels>) -> Result<SubsetMatch> {
    let n_t = dm.n_treated();
    let n_c = dm.n_controls();
    if n_c == 0 {
        return Ok(SubsetMatch {
            assignments: Vec::new(),
            discarded_treated: (0..n_t).collect(),
            deviation: None,
            cost_scaled: 0,
        });
    }
    let flipped = dm.transposed();
    let swapped = fb.map(|b| BalanceLevels {
        num_levels: b.num_levels,
        treated: b.controls.clone(),
        controls: b.treated.clone(),
    });
    let m = fixed_ratio_match(&flipped, 1, swapped.as_ref())?;
    let mut assignments: Vec<(usize, usize)> = m
        .assignments
        .iter()
        .map(|(c, ts)| (ts[0], *c))
        .collect();
    assignments.sort_unstable();
    let matched: BTreeSet<usize> = assignments.iter().map(|&(t, _)| t).collect();
    let discarded_treated = (0..n_t).filter(|t| !matched.contains(t)).collect();
    Ok(SubsetMatch {
        assignments,
        discarded_treated,
        deviation: m.deviation,
        cost_scaled: m.cost_scaled,
    })
}

/// Common-support trimming: drops treated above the maximum control score
/// and controls below the minimum treated score.
#[derive(Debug, Clone)]
pub struct TrimOutcome {
    pub kept: Vec<usize>,
    pub trimmed_treated: Vec<usize>,
    pub trimmed_controls: Vec<usize>,
}

pub fn trim_scores(prop: &PropensityResult, table: &CovariateTable) -> Result<TrimOutcome> {
    let treated = table.treated_indices();
    let controls = table.control_indices();
    let max_control = controls
        .iter()
        .map(|&i| prop.scores[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let min_treated = treated
        .iter()
        .map(|&i| prop.scores[i])
        .fold(f64::INFINITY, f64::min);
    let trimmed_treated: Vec<usize> = treated
        .iter()
        .copied()
        .filter(|&i| prop.scores[i] > max_control)
        .collect();
    let trimmed_controls: Vec<usize> = controls
        .iter()
        .copied()
        .filter(|&i| prop.scores[i] < min_treated)
        .collect();
    if trimmed_treated.len() == treated.len() {
        return Err(Error::TrimEmpties {
            group: "treated".to_string(),
        });
    }
    if trimmed_controls.len() == controls.len() {
        return Err(Error::TrimEmpties {
            group: "control".to_string(),
        });
    }
    let dropped: BTreeSet<usize> = trimmed_treated
        .iter()
        .chain(&trimmed_controls)
        .copied()
        .collect();
    let kept = (0..table.n()).filter(|i| !dropped.contains(i)).collect();
    Ok(TrimOutcome {
        kept,
        trimmed_treated,
        trimmed_controls,
    })
}

/// What a stratum will do once its members are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratumAction {
    /// No controls at all: discard the stratum's treated units.
    DiscardAll,
    /// Treated outnumber controls: optimal subset pair match.
    Subset,
    /// Ordinary fixed-ratio match at the contained ratio.
    Fixed(usize),
}

/// Per-stratum membership and action, decided before any network is solved.
#[derive(Debug, Clone)]
pub struct StratumPlan {
    pub stratum: usize,
    pub treated: Vec<usize>,
    pub controls: Vec<usize>,
    pub action: StratumAction,
}

/// The full matching plan: trim discards (when the policy trims) plus one
/// plan entry per stratum holding treated subjects.
#[derive(Debug, Clone, Default)]
pub struct MatchPlan {
    pub strata: Vec<StratumPlan>,
    pub trimmed_treated: Vec<usize>,
    pub trimmed_controls: Vec<usize>,
}

/// Decides membership, trimming, ratio reduction, and common-support
/// handling for every stratum, without solving anything.
pub fn plan_strata(
    table: &CovariateTable,
    prop: &PropensityResult,
    partition: &StratumPartition,
    config: &MatchConfig,
) -> Result<MatchPlan> {
    let n = table.n();
    debug_assert_eq!(partition.assignment.len(), n);
    let mut active = vec![true; n];
    let mut plan = MatchPlan::default();

    let members = |active: &[bool], stratum: usize, treated: bool| -> Vec<usize> {
        (0..n)
            .filter(|&i| {
                active[i] && partition.assignment[i] == stratum && table.subject(i).z == treated
            })
            .collect()
    };
    let any_scarcity = |active: &[bool]| -> bool {
        (1..=partition.k_max).any(|k| {
            let t = members(active, k, true).len();
            t > 0 && members(active, k, false).len() < t
        })
    };

    if config.policy == CommonSupportPolicy::TrimScores && any_scarcity(&active) {
        let trim = trim_scores(prop, table)?;
        for &i in trim.trimmed_treated.iter().chain(&trim.trimmed_controls) {
            active[i] = false;
        }
        plan.trimmed_treated = trim.trimmed_treated;
        plan.trimmed_controls = trim.trimmed_controls;
    }

    for stratum in 1..=partition.k_max {
        let treated = members(&active, stratum, true);
        let controls = members(&active, stratum, false);
        let (n_t, n_c) = (treated.len(), controls.len());
        if n_t == 0 {
            continue;
        }
        let action = if n_c == 0 {
            if config.policy == CommonSupportPolicy::Fail {
                return Err(Error::CommonSupportFail { stratum });
            }
            StratumAction::DiscardAll
        } else if n_c < n_t {
            if config.policy == CommonSupportPolicy::Fail {
                return Err(Error::CommonSupportFail { stratum });
            }
            // after trimming, any remaining scarcity is subset-matched too
            StratumAction::Subset
        } else {
            let (ratio, _) = reduce_ratio(n_t, n_c, stratum);
            StratumAction::Fixed(ratio)
        };
        plan.strata.push(StratumPlan {
            stratum,
            treated,
            controls,
            action,
        });
    }
    Ok(plan)
}

fn balance_slice(spec: &FineBalanceSpec, ts: &[usize], cs: &[usize]) -> BalanceLevels {
    BalanceLevels {
        num_levels: spec.num_levels(),
        treated: ts.iter().map(|&i| spec.level_of[i]).collect(),
        controls: cs.iter().map(|&i| spec.level_of[i]).collect(),
    }
}

/// Runs the full per-stratum procedure and assembles the match.
pub fn variable_ratio_match(
    table: &CovariateTable,
    prop: &PropensityResult,
    partition: &StratumPartition,
    config: &MatchConfig,
    distances: &DistanceSource,
) -> Result<MatchResult> {
    let plan = plan_strata(table, prop, partition, config)?;
    let mut discarded_treated: Vec<(usize, DiscardReason)> = plan
        .trimmed_treated
        .iter()
        .map(|&i| (i, DiscardReason::ScoreAboveControls))
        .collect();
    let mut discarded_controls: Vec<(usize, DiscardReason)> = plan
        .trimmed_controls
        .iter()
        .map(|&i| (i, DiscardReason::ScoreBelowTreated))
        .collect();

    let mut sets: Vec<MatchedSet> = Vec::new();
    let mut strata: Vec<StratumOutcome> = Vec::new();

    for sp in &plan.strata {
        let (n_t, n_c) = (sp.treated.len(), sp.controls.len());
        let fb = config
            .fine_balance
            .as_ref()
            .map(|spec| balance_slice(spec, &sp.treated, &sp.controls));
        match sp.action {
            StratumAction::DiscardAll => {
                for &i in &sp.treated {
                    discarded_treated.push((i, DiscardReason::NoControlsInStratum));
                }
                strata.push(StratumOutcome {
                    stratum: sp.stratum,
                    n_treated: n_t,
                    n_controls: 0,
                    ratio: 0,
                    subset: false,
                    deviation: None,
                    cost_scaled: 0,
                });
            }
            StratumAction::Subset => {
                let dm = distances.matrix_for(sp.stratum, table, &sp.treated, &sp.controls)?;
                let sm = subset_match(&dm, fb.as_ref())?;
                for &(t, c) in &sm.assignments {
                    sets.push(MatchedSet {
                        stratum: sp.stratum,
                        treated_id: dm.treated_ids[t].clone(),
                        control_ids: vec![dm.control_ids[c].clone()],
                    });
                }
                for &t in &sm.discarded_treated {
                    discarded_treated.push((sp.treated[t], DiscardReason::NoCommonSupport));
                }
                strata.push(StratumOutcome {
                    stratum: sp.stratum,
                    n_treated: n_t,
                    n_controls: n_c,
                    ratio: 1,
                    subset: true,
                    deviation: sm.deviation,
                    cost_scaled: sm.cost_scaled,
                });
            }
            StratumAction::Fixed(ratio) => {
                let dm = distances.matrix_for(sp.stratum, table, &sp.treated, &sp.controls)?;
                let fm = fixed_ratio_match(&dm, ratio, fb.as_ref())?;
                for (t, cs) in &fm.assignments {
                    sets.push(MatchedSet {
                        stratum: sp.stratum,
                        treated_id: dm.treated_ids[*t].clone(),
                        control_ids: cs.iter().map(|&c| dm.control_ids[c].clone()).collect(),
                    });
                }
                strata.push(StratumOutcome {
                    stratum: sp.stratum,
                    n_treated: n_t,
                    n_controls: n_c,
                    ratio,
                    subset: false,
                    deviation: fm.deviation,
                    cost_scaled: fm.cost_scaled,
                });
            }
        }
    }

    sets.sort_by(|a, b| (a.stratum, &a.treated_id).cmp(&(b.stratum, &b.treated_id)));

    // every control not in a set is discarded: trimmed ones keep their
    // reason, the rest are simply unmatched
    let matched_controls: BTreeSet<&String> =
        sets.iter().flat_map(|s| s.control_ids.iter()).collect();
    for i in table.control_indices() {
        let id = &table.subject(i).id;
        if !matched_controls.contains(id) && !discarded_controls.iter().any(|&(j, _)| j == i) {
            discarded_controls.push((i, DiscardReason::Unmatched));
        }
    }

    let to_discards = |items: Vec<(usize, DiscardReason)>| -> Vec<Discard> {
        let mut out: Vec<Discard> = items
            .into_iter()
            .map(|(i, reason)| Discard {
                id: table.subject(i).id.clone(),
                reason,
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    };

    Ok(MatchResult {
        sets,
        discarded_treated: to_discards(discarded_treated),
        discarded_controls: to_discards(discarded_controls),
        strata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(stratum: usize, d: Vec<Vec<f64>>) -> DistanceMatrix {
        DistanceMatrix {
            stratum,
            treated_ids: (0..d.len()).map(|t| format!("t{}", t + 1)).collect(),
            control_ids: (0..d[0].len()).map(|c| format!("c{}", c + 1)).collect(),
            d,
        }
    }

    /// Stratum 1 of the worked small example.
    fn stratum1() -> DistanceMatrix {
        matrix(
            1,
            vec![
                vec![1.2, 1.5, 6.7, 5.2, 1.2, 3.4],
                vec![1.5, 4.4, 10.0, 0.8, 5.0, 7.6],
                vec![6.0, 1.5, 3.2, 5.4, 6.0, 5.4],
                vec![8.2, 5.6, 7.1, 0.6, 8.1, 7.3],
            ],
        )
    }

    fn stratum1_drug() -> BalanceLevels {
        BalanceLevels {
            num_levels: 2,
            treated: vec![0, 1, 1, 1],
            controls: vec![0, 1, 0, 0, 1, 1],
        }
    }

    #[test]
    fn pair_match_without_balance_totals_4_8() {
        let fm = fixed_ratio_match(&stratum1(), 1, None).unwrap();
        assert_eq!(fm.cost_scaled, 48_000);
        assert_eq!(fm.deviation, None);
        let picks: Vec<usize> = fm.assignments.iter().map(|(_, cs)| cs[0]).collect();
        assert_eq!(picks, vec![4, 0, 1, 3]); // c5, c1, c2, c4
    }

    #[test]
    fn pair_match_with_balance_totals_10_5() {
        let fm = fixed_ratio_match(&stratum1(), 1, Some(&stratum1_drug())).unwrap();
        assert_eq!(fm.cost_scaled, 105_000);
        assert_eq!(fm.deviation, Some(0));
        let picks: Vec<usize> = fm.assignments.iter().map(|(_, cs)| cs[0]).collect();
        assert_eq!(picks, vec![5, 4, 1, 3]); // c6, c5, c2, c4
    }

    #[test]
    fn one_to_three_near_fine_balance_swaps_in_c15() {
        // stratum 3 of the small example: t8 is a non-user, two of the four
        // controls are users, so deviation 2 is the best achievable
        let dm = matrix(3, vec![vec![1.4, 3.4, 0.7, 1.8]]);
        let fb = BalanceLevels {
            num_levels: 2,
            treated: vec![0],
            controls: vec![1, 0, 1, 0],
        };
        let fm = fixed_ratio_match(&dm, 3, Some(&fb)).unwrap();
        assert_eq!(fm.assignments[0].1, vec![1, 2, 3]); // c15, c16, c17
        assert_eq!(fm.deviation, Some(2));
        assert_eq!(fm.cost_scaled, 59_000);
    }

    #[test]
    fn ratio_precondition_is_enforced() {
        let dm = matrix(1, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(matches!(
            fixed_ratio_match(&dm, 2, None),
            Err(Error::RatioInfeasible { needed: 4, .. })
        ));
    }

    #[test]
    fn balance_is_attained_when_every_level_has_enough_controls() {
        let dm = matrix(
            1,
            vec![vec![5.0, 1.0, 1.0, 5.0], vec![1.0, 5.0, 5.0, 1.0]],
        );
        let fb = BalanceLevels {
            num_levels: 2,
            treated: vec![0, 1],
            controls: vec![0, 0, 1, 1],
        };
        let fm = fixed_ratio_match(&dm, 1, Some(&fb)).unwrap();
        assert_eq!(fm.deviation, Some(0));
    }

    #[test]
    fn reduce_ratio_examples() {
        assert_eq!(reduce_ratio(4, 15, 4), (3, false));
        assert_eq!(reduce_ratio(4, 16, 4), (4, false));
        assert_eq!(reduce_ratio(4, 3, 1), (1, true));
    }

    #[test]
    fn subset_match_keeps_the_closest_treated() {
        let dm = matrix(1, vec![vec![1.0, 9.0], vec![2.0, 9.0], vec![9.0, 1.0]]);
        let sm = subset_match(&dm, None).unwrap();
        assert_eq!(sm.assignments, vec![(0, 0), (2, 1)]);
        assert_eq!(sm.discarded_treated, vec![1]);
        assert_eq!(sm.cost_scaled, 20_000);
    }

    #[test]
    fn subset_match_with_equal_counts_discards_nobody() {
        let dm = matrix(1, vec![vec![1.0, 9.0], vec![9.0, 1.0]]);
        let sm = subset_match(&dm, None).unwrap();
        assert_eq!(sm.assignments.len(), 2);
        assert!(sm.discarded_treated.is_empty());
    }

    #[test]
    fn subset_match_with_zero_controls_discards_everyone() {
        let dm = DistanceMatrix {
            stratum: 1,
            treated_ids: vec!["t1".into(), "t2".into()],
            control_ids: Vec::new(),
            d: vec![Vec::new(), Vec::new()],
        };
        let sm = subset_match(&dm, None).unwrap();
        assert!(sm.assignments.is_empty());
        assert_eq!(sm.discarded_treated, vec![0, 1]);
    }

    #[test]
    fn interact_identity_and_crossing() {
        use crate::ingest::{impute_with_indicators, load_table, Schema};
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"id,z,a,b,x\ns1,1,0,0,0.5\ns2,0,0,1,0.5\ns3,0,1,0,0.5\ns4,0,1,1,0.5\ns5,0,0,0,0.5\n")
            .unwrap();
        f.flush().unwrap();
        let mut schema = Schema::new("z");
        schema.id = Some("id".into());
        let t = impute_with_indicators(&load_table(f.path(), &schema).unwrap()).unwrap();

        let single = interact(&t, &[0]).unwrap();
        assert_eq!(single.num_levels(), 2);

        let crossed = interact(&t, &[0, 1]).unwrap();
        assert_eq!(crossed.num_levels(), 4);
        assert_eq!(crossed.level_of, vec![0, 1, 2, 3, 0]);

        // continuous column is not discrete
        let x = t.find_covariate("x").unwrap();
        assert!(matches!(
            interact(&t, &[x]),
            Err(Error::NonDiscreteColumn { .. })
        ));
    }

    #[test]
    fn interact_skips_unobserved_combinations() {
        use crate::ingest::{impute_with_indicators, load_table, Schema};
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"id,z,a,b\ns1,1,0,0\ns2,0,0,1\ns3,0,1,0\n").unwrap();
        f.flush().unwrap();
        let mut schema = Schema::new("z");
        schema.id = Some("id".into());
        let t = impute_with_indicators(&load_table(f.path(), &schema).unwrap()).unwrap();
        let crossed = interact(&t, &[0, 1]).unwrap();
        assert_eq!(crossed.num_levels(), 3);
    }
}

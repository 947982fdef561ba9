use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::generate::{FamilyTruth, GroundTruth};
use crate::error::{Error, Result};
use crate::money::Cents;

/// What a pipeline run recovered for one family, in address strings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FamilyOutcome {
    pub clusters: BTreeSet<BTreeSet<String>>,
    pub expanded: BTreeSet<String>,
    pub expanded_tf: BTreeSet<String>,
    pub keys: BTreeSet<String>,
    pub payment_addresses: BTreeSet<String>,
    pub total_sat: u64,
    pub total_usd: Cents,
}

impl FamilyTruth {
    /// The outcome a perfect pipeline would report.
    pub fn outcome(&self) -> FamilyOutcome {
        FamilyOutcome {
            clusters: self.clusters.clone(),
            expanded: self.expanded.clone(),
            expanded_tf: self.expanded_tf.clone(),
            keys: self.keys.clone(),
            payment_addresses: self.payment_addresses.clone(),
            total_sat: self.ransom_sat,
            total_usd: self.ransom_usd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
}

impl Score {
    /// Set precision and recall. An empty prediction has precision 1 and
    /// an empty truth has recall 1.
    pub fn of<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> Score {
        let hit = predicted.intersection(truth).count() as f64;
        let ratio = |n: usize| if n == 0 { 1.0 } else { hit / n as f64 };
        Score {
            precision: ratio(predicted.len()),
            recall: ratio(truth.len()),
        }
    }

    pub fn is_perfect(&self) -> bool {
        self.precision == 1.0 && self.recall == 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyScore {
    pub family: String,
    /// Clusters count as hits only on exact membership match.
    pub clusters: Score,
    pub expanded: Score,
    pub expanded_tf: Score,
    pub keys: Score,
    pub payment_addresses: Score,
    pub total_sat_exact: bool,
    pub total_usd_exact: bool,
}

impl FamilyScore {
    pub fn is_perfect(&self) -> bool {
        [self.clusters, self.expanded, self.expanded_tf, self.keys, self.payment_addresses]
            .iter()
            .all(Score::is_perfect)
            && self.total_sat_exact
            && self.total_usd_exact
    }
}

/// Scores each family's outcome against the planted truth. Both sides must
/// name the same families.
pub fn evaluate(outcomes: &BTreeMap<String, FamilyOutcome>, truth: &GroundTruth) -> Result<Vec<FamilyScore>> {
    let got: BTreeSet<&String> = outcomes.keys().collect();
    let want: BTreeSet<&String> = truth.families.keys().collect();
    if got != want {
        let extra: Vec<_> = got.difference(&want).collect();
        let missing: Vec<_> = want.difference(&got).collect();
        return Err(Error::Evaluation(format!(
            "family sets differ: unexpected {extra:?}, missing {missing:?}"
        )));
    }
    Ok(truth
        .families
        .iter()
        .map(|(family, t)| {
            let o = &outcomes[family];
            FamilyScore {
                family: family.clone(),
                clusters: Score::of(&o.clusters, &t.clusters),
                expanded: Score::of(&o.expanded, &t.expanded),
                expanded_tf: Score::of(&o.expanded_tf, &t.expanded_tf),
                keys: Score::of(&o.keys, &t.keys),
                payment_addresses: Score::of(&o.payment_addresses, &t.payment_addresses),
                total_sat_exact: o.total_sat == t.ransom_sat,
                total_usd_exact: o.total_usd == t.ransom_usd,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{generate, CampaignSpec, TestbedSpec};

    fn truth() -> GroundTruth {
        let spec = TestbedSpec::new(vec![
            CampaignSpec::new("A", 12, 3, 4, "2016-02".parse().unwrap()),
            CampaignSpec::new("B", 5, 1, 2, "2016-06".parse().unwrap()),
        ]);
        generate(&spec, 3).unwrap().truth
    }

    fn perfect(t: &GroundTruth) -> BTreeMap<String, FamilyOutcome> {
        t.families.iter().map(|(f, ft)| (f.clone(), ft.outcome())).collect()
    }

    #[test]
    fn truth_against_itself_is_perfect() {
        let t = truth();
        let scores = evaluate(&perfect(&t), &t).unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores.iter().all(FamilyScore::is_perfect));
    }

    #[test]
    fn one_missed_collector() {
        let t = truth();
        let mut o = perfect(&t);
        let a = o.get_mut("A").unwrap();
        let k = a.keys.len();
        let first = t.families["A"].collectors.iter().next().unwrap().clone();
        a.keys.remove(&first);
        let s = &evaluate(&o, &t).unwrap()[0];
        assert_eq!(s.keys.precision, 1.0);
        assert!((s.keys.recall - (k - 1) as f64 / k as f64).abs() < 1e-12);
    }

    #[test]
    fn family_mismatch_is_fatal() {
        let t = truth();
        let mut o = perfect(&t);
        o.remove("B");
        assert!(matches!(evaluate(&o, &t), Err(Error::Evaluation(_))));
    }

    #[test]
    fn empty_prediction_scores() {
        let s = Score::of(&BTreeSet::<u8>::new(), &BTreeSet::from([1]));
        assert_eq!((s.precision, s.recall), (1.0, 0.0));
    }
}

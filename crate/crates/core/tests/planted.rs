//! Monte Carlo checks of the classifier screen against synthetic cohorts
//! whose ground truth is known by construction.

use rand::seq::SliceRandom;
use regionwise_core::rng::seeded;
use regionwise_core::stats::{evaluate_task, region_feature_name, CohortTable, FeatureKind, Task, ALPHA};
use regionwise_core::synth::{make_cohort, BrainVolumeEffect, CohortSpec, EffectRegion};
use regionwise_core::NUM_REGIONS;

const REPLICATIONS: u64 = 100;

/// Per-region count of replications in which the region was flagged.
fn flag_counts(spec_for: impl Fn(u64) -> CohortSpec) -> [u32; NUM_REGIONS] {
    let mut counts = [0u32; NUM_REGIONS];
    for rep in 0..REPLICATIONS {
        let cohort = make_cohort(&spec_for(rep)).unwrap();
        let report = evaluate_task(&cohort.table, Task::AdVsCn, FeatureKind::Regional, 5, rep).unwrap();
        for (r, c) in counts.iter_mut().enumerate() {
            let name = region_feature_name(r + 1);
            let idx = report.feature_names.iter().position(|f| *f == name).unwrap();
            let p = report.model.feature_p_values()[idx];
            assert_eq!(p < ALPHA, report.significant_regions.contains(&name));
            *c += (p < ALPHA) as u32;
        }
    }
    counts
}

#[test]
fn planted_regions_flagged_and_others_mostly_quiet() {
    let counts = flag_counts(|rep| CohortSpec { seed: 7000 + rep, ..CohortSpec::default() });
    for (r, &c) in counts.iter().enumerate() {
        let region = r + 1;
        if region == 1 || region == 22 {
            assert_eq!(c, REPLICATIONS as u32, "planted region {region} missed");
        } else {
            assert!(c * 10 <= REPLICATIONS as u32, "region {region} flagged in {c} of {REPLICATIONS}");
        }
    }
}

#[test]
fn class_null_cohorts_rarely_flag_any_region() {
    let base = CohortSpec::default();
    let same = |b: &BrainVolumeEffect| BrainVolumeEffect { mean: [b.mean[0]; 3], sd: [b.sd[0]; 3] };
    let counts = flag_counts(|rep| CohortSpec {
        effect_regions: vec![EffectRegion { region: 1, mean_counts: [5.0; 3] }],
        brain_volume_effects: base.brain_volume_effects.each_ref().map(same),
        seed: 9000 + rep,
        ..base.clone()
    });
    // Each region's count is Binomial(100, 0.05) under the null, so demand the
    // pooled rate stay under 10% and bound single regions by a far tail.
    let total: u32 = counts.iter().sum();
    let pooled = total as f64 / (REPLICATIONS as f64 * NUM_REGIONS as f64);
    assert!(pooled < 0.10, "pooled false-flag rate {pooled}");
    for (r, &c) in counts.iter().enumerate() {
        assert!(c <= 15, "region {} flagged in {c} of {REPLICATIONS}", r + 1);
    }
}

#[test]
fn permuted_labels_give_chance_auc() {
    let cohort = make_cohort(&CohortSpec { seed: 12, ..CohortSpec::default() }).unwrap();
    let mut diagnoses: Vec<_> = cohort.table.rows().iter().map(|r| r.diagnosis).collect();
    diagnoses.shuffle(&mut seeded(12));
    let rows = cohort.table.rows().iter().zip(diagnoses).map(|(r, d)| {
        let mut r = r.clone();
        r.diagnosis = d;
        r
    });
    let table = CohortTable::new(rows.collect()).unwrap();
    for kind in FeatureKind::ALL {
        let auc = evaluate_task(&table, Task::AdVsCn, kind, 5, 12).unwrap().pooled_auc;
        assert!((auc - 0.5).abs() <= 0.15, "{}: {auc}", kind.as_str());
    }
}

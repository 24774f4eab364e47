//! Metric oracles on randomized corpora, and regression against stored
//! prediction logs.

mod common;

use std::time::Instant;

use common::fixtures::STORED_RUNS;
use common::oracle::{group_oracle, instance_oracle, random_case};
use lateral_bench::dataset::{group_instances, load_dataset, DatasetFormat, Variant};
use lateral_bench::metrics::{
    group_accuracy, group_counts, instance_accuracy, instance_counts, score_breakdown, Accuracy, PAIR, TRIPLE,
};
use lateral_bench::report::{render_breakdown, rescore_from_log, BreakdownFormat};

const CORPUS: u64 = 1000;

#[test]
fn instance_and_group_accuracy_match_counting_oracles() {
    let started = Instant::now();
    for seed in 0..CORPUS {
        let (data, preds) = random_case(seed, 20, seed % 4 != 0);
        let groups = group_instances(&data).unwrap();
        for filter in [None, Some(Variant::Original), Some(Variant::Semantic), Some(Variant::Context)] {
            let (c, t) = instance_oracle(&preds, &data, filter);
            assert_eq!(instance_counts(&preds, &data, filter).unwrap(), Accuracy::new(c, t), "seed {seed}");
            let expected = (t > 0).then(|| c as f64 / t as f64);
            assert_eq!(instance_accuracy(&preds, &data, filter).unwrap(), expected, "seed {seed}");
        }
        for required in [&PAIR[..], &TRIPLE[..], &[Variant::Original][..]] {
            let (c, t) = group_oracle(&preds, &data, required);
            assert_eq!(group_counts(&preds, &groups, required).unwrap(), Accuracy::new(c, t), "seed {seed}");
            let expected = (t > 0).then(|| c as f64 / t as f64);
            assert_eq!(group_accuracy(&preds, &groups, required).unwrap(), expected, "seed {seed}");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 10.0, "took {:?}", started.elapsed());
}

#[test]
fn ordering_holds_on_every_complete_corpus() {
    for seed in 0..CORPUS {
        let (data, preds) = random_case(seed, 20, true);
        let b = score_breakdown(&preds, &data).unwrap();
        let v = |a: Accuracy| a.value().unwrap();
        assert!(v(b.group_triple) <= v(b.group_pair), "seed {seed}");
        assert!(v(b.group_pair) <= v(b.inst_or).min(v(b.inst_sr)), "seed {seed}");
        assert!(v(b.group_triple) <= v(b.inst_or).min(v(b.inst_sr)).min(v(b.inst_cr)), "seed {seed}");
    }
}

#[test]
fn stored_logs_rescore_to_their_cells() {
    for f in &STORED_RUNS {
        load_dataset(f.dataset(), DatasetFormat::Json).unwrap();
        let b = rescore_from_log(f.log(), f.dataset()).unwrap();
        let got = [b.inst_or, b.inst_sr, b.inst_cr, b.group_pair, b.group_triple].map(|a| (a.correct, a.total));
        assert_eq!(got, f.counts, "{}", f.name);
        assert_eq!(b.overall, Some(f.overall), "{}", f.name);

        let text = render_breakdown(&b, BreakdownFormat::Text);
        let overall_line = text.lines().find(|l| l.starts_with("overall ")).unwrap();
        assert_eq!(overall_line.split_whitespace().last(), Some(f.shown), "{}", f.name);
    }
}

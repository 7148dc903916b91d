use std::collections::{BTreeSet, HashMap};

use driftscope::analysis::{attribute_density, compare_scored, decompose_attribute, MAD_SCALE};
use driftscope::drift::{detect_drift_points, segment_at, segment_log, sliding_window_pvalues, DriftPoint};
use driftscope::eventlog::{
    AttributeDescriptor, AttributeKind, DiscretizerSpec, EventLog, EventLogBuilder, Schema,
};
use driftscope::plot::{Annotation, PlotDocument};
use driftscope::scoring::{score_log, trace_means};
use driftscope::structure::{build_structure, Node, Slice, StructureConfig};
use driftscope::testkit::{
    generate_log, ring_matrix, Applicants, DriftChange, DriftSpec, ProcessSpec, TraceLength,
};
use driftscope::train_model;

fn numeric_log(values: &[f64]) -> EventLog {
    let schema = Schema::new(vec![
        AttributeDescriptor::new("case", AttributeKind::TraceId),
        AttributeDescriptor::new("amount", AttributeKind::Numeric),
    ])
    .unwrap();
    let mut b = EventLogBuilder::new(schema);
    for (i, v) in values.iter().enumerate() {
        b.push(&format!("t{i}"), None, &[v.to_string()]).unwrap();
    }
    b.finish()
}

#[test]
fn discretizer_reuses_stored_boundaries() {
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let log = numeric_log(&values).discretize(&DiscretizerSpec {
        attribute: "amount".into(),
        bin_count: 10,
    })
    .unwrap();
    // Oracle: equal-frequency cut points at every tenth order statistic.
    let expected: Vec<f64> = (1..10).map(|j| values[j * values.len() / 10]).collect();
    let disc = &log.schema.discretizer("amount").unwrap();
    assert_eq!(disc.boundaries, expected);
    let top = disc.label(9);
    assert_eq!(disc.label_for("101").unwrap(), top);
    let applied = numeric_log(&[101.0]).apply_schema_discretizers(&log.schema).unwrap();
    assert_eq!(applied.cell(0, 0, 0), top);
}

#[test]
fn training_split_follows_cumulative_event_counts() {
    // Trace lengths shaped like a real agricultural grant log: minimum 24, about 57 on average.
    let spec = ProcessSpec {
        trace_length: TraceLength {
            min: 24,
            p: 1.0 / 34.0,
            max: 2973,
        },
        event_ids: false,
        ..ProcessSpec::example(8)
    };
    let log = generate_log(&spec, 1200, &[]).unwrap().log;
    let avg = log.event_count() as f64 / log.trace_count() as f64;
    assert!((50.0..64.0).contains(&avg), "average trace length {avg}");
    let (train, _) = log.split_train(30_000).unwrap();
    let mut acc = 0;
    let expected = log
        .traces()
        .iter()
        .position(|t| {
            acc += t.len();
            acc >= 30_000
        })
        .unwrap()
        + 1;
    assert_eq!(train.trace_count(), expected);
    assert!((450..600).contains(&expected), "{expected} training traces");
}

#[test]
fn markov_activity_gets_previous_slice_parent() {
    for seed in 0..20 {
        let spec = ProcessSpec {
            applicants: Applicants::Pool(30),
            ..ProcessSpec::example(seed)
        };
        let log = generate_log(&spec, 300, &[]).unwrap().log;
        let g = build_structure(&log, &StructureConfig::default()).unwrap();
        let act = log.attribute_index("activity").unwrap();
        let parents = &g.cd_parents_of(act).expect("activity has CD parents").parents;
        assert!(parents.contains(&Node::previous(act)), "seed {seed}: {g}");
    }
}

#[test]
fn independent_columns_stay_unlinked() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let schema = Schema::new(vec![
        AttributeDescriptor::new("case", AttributeKind::TraceId),
        AttributeDescriptor::new("x", AttributeKind::Categorical),
        AttributeDescriptor::new("y", AttributeKind::Categorical),
    ])
    .unwrap();
    let mut b = EventLogBuilder::new(schema);
    for i in 0..4000 {
        let x = rng.gen_range(0..5).to_string();
        let y = rng.gen_range(0..5).to_string();
        b.push(&format!("t{}", i / 8), None, &[x, y]).unwrap();
    }
    let g = build_structure(&b.finish(), &StructureConfig::default()).unwrap();
    assert!(g.cd_edges.is_empty() && g.fd_edges.is_empty(), "{g}");
}

#[test]
fn running_example_structure() {
    let spec = ProcessSpec {
        event_ids: false,
        ..ProcessSpec::example(2)
    };
    let log = generate_log(&spec, 600, &[])
        .unwrap()
        .log
        .filter_attributes(&["number_parcels", "department"])
        .unwrap();
    let g = build_structure(&log, &StructureConfig::default()).unwrap();
    let names = log.attribute_names();
    let fds: BTreeSet<(String, Slice, String)> = g
        .fd_edges
        .iter()
        .map(|e| (names[e.antecedent.attribute].clone(), e.antecedent.slice, names[e.consequent].clone()))
        .collect();
    for (a, s, c) in [
        ("applicant", Slice::Current, "area"),
        ("applicant", Slice::Current, "young_farmer"),
        ("applicant", Slice::Previous, "applicant"),
        ("area", Slice::Previous, "area"),
        ("young_farmer", Slice::Previous, "young_farmer"),
    ] {
        assert!(fds.contains(&(a.to_string(), s, c.to_string())), "missing {a}@{s:?} -> {c}");
    }
    let act = log.attribute_index("activity").unwrap();
    assert!(g.cd_parents_of(act).unwrap().parents.contains(&Node::previous(act)));
}

#[test]
fn generated_activities_follow_the_transition_matrix() {
    let spec = ProcessSpec::example(13);
    let log = generate_log(&spec, 100, &[]).unwrap().log;
    assert_eq!(log.trace_count(), 100);
    let act = log.attribute_index("activity").unwrap();
    let index: HashMap<&str, usize> = spec.activities.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let n = spec.activities.len();
    let mut counts = vec![vec![0.0f64; n]; n];
    for (ti, t) in log.traces().iter().enumerate() {
        for ei in 1..t.len() {
            let from = index[log.cell(ti, ei - 1, act)];
            let to = index[log.cell(ti, ei, act)];
            counts[from][to] += 1.0;
        }
    }
    let mut chi2 = 0.0;
    let mut df = 0;
    for (row, probs) in counts.iter().zip(&spec.transitions) {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            continue;
        }
        df += n - 1;
        for (&o, &p) in row.iter().zip(probs) {
            let e = total * p;
            chi2 += (o - e) * (o - e) / e;
        }
    }
    // 99.9% quantile of chi-square with 56 degrees of freedom.
    assert_eq!(df, 56);
    assert!(chi2 < 97.04, "chi-square {chi2:.1} with {df} df");
}

fn doctype_shift(at: usize, n: usize) -> EventLog {
    let spec = ProcessSpec {
        applicants: Applicants::Pool(50),
        event_ids: false,
        ..ProcessSpec::example(23)
    };
    let drift = DriftSpec {
        at_trace: at,
        changes: vec![DriftChange::NewValue {
            attribute: "doctype".into(),
            value: "Reference alignment".into(),
            probability: 0.3,
        }],
    };
    generate_log(&spec, n, &[drift]).unwrap().log
}

#[test]
fn post_drift_scores_are_stochastically_lower() {
    let spec = ProcessSpec {
        applicants: Applicants::Pool(50),
        event_ids: false,
        ..ProcessSpec::example(31)
    };
    let drift = DriftSpec {
        at_trace: 800,
        changes: vec![DriftChange::Transitions {
            matrix: ring_matrix(8, 3, 0.6, 0.1),
        }],
    };
    let log = generate_log(&spec, 1600, &[drift]).unwrap().log;
    let (train, full) = log.split_train(log.traces()[..400].iter().map(|t| t.len()).sum()).unwrap();
    let model = train_model(&train, &StructureConfig::default()).unwrap();
    let means = trace_means(&score_log(&model, &full).unwrap());
    let (pre, post) = (&means[400..800], &means[800..]);
    let ks = driftscope::drift::ks_two_sample(pre, post).unwrap();
    assert!(ks.p < 1e-6, "{ks:?}");
    let median = |v: &[f64]| driftscope::analysis::median(v).unwrap();
    assert!(median(post) < median(pre));
    // Stochastically lower: the post-drift ECDF lies on or above the pre-drift one.
    let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&s| s <= x).count() as f64 / v.len() as f64;
    let crossings = pre
        .iter()
        .filter(|&&x| ecdf(post, x) + 0.05 < ecdf(pre, x))
        .count();
    assert_eq!(crossings, 0);
}

#[test]
fn step_change_minimum_sits_on_the_step() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let scores: Vec<f64> = (0..200)
        .map(|i| if i < 100 { rng.gen_range(0.5..1.0) } else { rng.gen_range(0.0..0.5) })
        .collect();
    let series = sliding_window_pvalues(&scores, 40, 1).unwrap();
    let min = series
        .points
        .iter()
        .min_by(|a, b| a.p_value.total_cmp(&b.p_value))
        .unwrap();
    assert!(min.center_index.abs_diff(100) <= 1, "{min:?}");
    // Null windows can dip below the threshold on their own; the step is the strongest point.
    let points = detect_drift_points(&series, 0.01, 40).unwrap();
    let strongest = points.iter().min_by(|a, b| a.p_at_min.total_cmp(&b.p_at_min)).unwrap();
    assert!(strongest.trace_index.abs_diff(100) <= 1, "{points:?}");
}

#[test]
fn three_year_segmentation() {
    let drifts: Vec<DriftPoint> = [14_000, 29_000]
        .iter()
        .map(|&t| DriftPoint {
            trace_index: t,
            p_at_min: 1e-9,
            window_size: 400,
        })
        .collect();
    let segs = segment_log(43_809, &drifts).unwrap();
    let ranges: Vec<(usize, usize)> = segs.iter().map(|s| (s.start_trace, s.end_trace)).collect();
    assert_eq!(ranges, [(0, 14_000), (14_000, 29_000), (29_000, 43_809)]);
}

#[test]
fn trace_score_plot_marks_training_and_drifts() {
    let log = doctype_shift(300, 600);
    let (train, full) = log.split_train(2000).unwrap();
    let model = train_model(&train, &StructureConfig::default()).unwrap();
    let scores = score_log(&model, &full).unwrap();
    let drifts = [
        DriftPoint {
            trace_index: 300,
            p_at_min: 1e-5,
            window_size: 100,
        },
        DriftPoint {
            trace_index: 450,
            p_at_min: 1e-4,
            window_size: 100,
        },
    ];
    let doc = PlotDocument::trace_scores(&scores, Some(train.trace_count()), &drifts);
    let xs: Vec<f64> = doc
        .annotations
        .iter()
        .filter_map(|a| match a {
            Annotation::Vline { x, .. } => Some(*x),
            _ => None,
        })
        .collect();
    assert_eq!(xs, [train.trace_count() as f64, 300.0, 450.0]);
}

#[test]
fn doctype_shift_lowers_doctype_median() {
    let log = doctype_shift(1000, 2000);
    let (train, full) = log.split_train(log.traces()[..600].iter().map(|t| t.len()).sum()).unwrap();
    let model = train_model(&train, &StructureConfig::default()).unwrap();
    let scores = score_log(&model, &full).unwrap();
    let segs = segment_at(scores.len(), &[1000]).unwrap();
    let cmp = compare_scored(&model, &scores, &segs, 0).unwrap();
    let doctype = model.attribute_index("doctype").unwrap();
    let medians = &cmp.overlay.medians[doctype];
    assert!(medians[1] < medians[0], "{medians:?}");
    // The reference column of the overlay is the reference density itself.
    assert_eq!(cmp.summaries[0], attribute_density(&model, &scores[0..1000], 0).unwrap());
    assert!(cmp.overlay.deltas.iter().all(|row| row[0] == 0.0));
    // An unseen doctype also pulls down every CPT that has doctype as a parent, so such
    // children can edge past doctype itself. Nothing unrelated to doctype may outrank it.
    let ranked = cmp.overlay.ranked_changes(0, 1);
    let pos = ranked.iter().position(|(a, _)| a == "doctype").unwrap();
    for (name, _) in &ranked[..pos] {
        let child = model.attribute_index(name).unwrap();
        let parents = &model.graph.cd_parents_of(child).unwrap().parents;
        assert!(parents.contains(&Node::current(doctype)), "{name} outranks doctype: {ranked:?}");
    }
    assert!(pos <= 1, "{ranked:?}");
}

#[test]
fn identical_process_split_shows_no_median_shift() {
    let spec = ProcessSpec {
        applicants: Applicants::Pool(50),
        event_ids: false,
        ..ProcessSpec::example(19)
    };
    let log = generate_log(&spec, 2400, &[]).unwrap().log;
    let (train, full) = log.split_train(log.traces()[..800].iter().map(|t| t.len()).sum()).unwrap();
    let model = train_model(&train, &StructureConfig::default()).unwrap();
    let scores = score_log(&model, &full).unwrap();
    // Department-style split of the held-out traces: one department against the rest.
    let dept = full.attribute_index("department").unwrap();
    let (mut a, mut b): (Vec<usize>, Vec<usize>) = (800..full.trace_count()).partition(|&t| full.cell(t, 0, dept) == "e7");
    a.append(&mut b);
    let split = scores.len() - 800 - (full.trace_count() - 800 - a.iter().filter(|&&t| full.cell(t, 0, dept) == "e7").count());
    let reordered: Vec<_> = a.iter().map(|&t| scores[t].clone()).collect();
    let s0 = attribute_density(&model, &reordered[..split], 0).unwrap();
    let s1 = attribute_density(&model, &reordered[split..], 1).unwrap();
    for (x, y) in s0.per_attribute.iter().zip(&s1.per_attribute) {
        let spread = x.mad_raw.max(y.mad_raw) * MAD_SCALE;
        assert!(
            (x.median - y.median).abs() <= 2.0 * spread,
            "{}: {} vs {} (MAD {spread})",
            x.attribute,
            x.median,
            y.median
        );
    }
}

#[test]
fn attribute_without_parents_has_unit_cpt_and_two_valued_value_component() {
    let mut spec = ProcessSpec::example(41);
    spec.event_ids = false;
    spec.areas.truncate(146);
    let late = DriftSpec {
        at_trace: 600,
        changes: vec![DriftChange::NewValue {
            attribute: "area".into(),
            value: "area146".into(),
            probability: 0.3,
        }],
    };
    let log = generate_log(&spec, 1200, &[late])
        .unwrap()
        .log
        .filter_attributes(&["young_farmer", "number_parcels", "department"])
        .unwrap();
    let (train, full) = log.split_train(log.traces()[..600].iter().map(|t| t.len()).sum()).unwrap();
    let model = train_model(&train, &StructureConfig::default()).unwrap();
    let area = model.attribute_index("area").unwrap();
    assert!(model.graph.cd_parents_of(area).is_none());
    let scores = score_log(&model, &full).unwrap();
    let breakdown = decompose_attribute(&model, &scores[600..], "area").unwrap();
    assert!(breakdown.cpt_component.iter().all(|&c| c == 0.0));
    let rate = model.rates.new_value[area].log10();
    // Per-trace means of identical event values may differ from the value itself by an ulp.
    let (mut zero, mut low) = (0, 0);
    for &v in &breakdown.value_component {
        if v == 0.0 {
            zero += 1;
        } else {
            assert!((v - rate).abs() <= 4.0 * f64::EPSILON * rate.abs(), "{v} vs {rate}");
            low += 1;
        }
    }
    assert!(zero > 0 && low > 0, "{zero} seen, {low} unseen");
}

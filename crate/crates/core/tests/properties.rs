//! Property tests for the cross-cutting invariants: serialization
//! round-trips, validation equivalence with a brute-force checker, policy
//! laws, apportionment exactness, and metric bounds.

use babelkit::curate;
use babelkit::eval::{aggregate, chrf, rouge_l};
use babelkit::lang::LangTag;
use babelkit::llm::{request_hash, ChatMessage, ChatRequest, GenParams};
use babelkit::mix;
use babelkit::translate::{repair_image_tokens, sentence_bleu, validate_translation};
use babelkit::types::{
    validate_sample, CurationVerdict, InstructionSample, Region, Role, SourceRecord, StageManifest,
    SubjectCategory, TaskType, Turn, Violation, IMAGE_TOKEN,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Strategies for valid core values
// ---------------------------------------------------------------------------

fn id_strategy() -> impl Strategy<Value = String> {
    "[a-z0-9_-]{1,24}"
}

fn text_strategy() -> impl Strategy<Value = String> {
    // printable text including unicode and the image token substring
    prop::collection::vec(
        prop_oneof![
            Just("word".to_string()),
            Just("市場".to_string()),
            Just("gato".to_string()),
            Just("<image>".to_string()),
            Just("answer:".to_string()),
            "[a-zA-Z]{1,8}".prop_map(|s| s),
        ],
        0..8,
    )
    .prop_map(|words| words.join(" "))
}

fn source_record_strategy() -> impl Strategy<Value = SourceRecord> {
    (
        id_strategy(),
        "[a-z]{1,10}",
        text_strategy(),
        prop::option::of(1u32..4000),
        prop::option::of(1u32..4000),
        prop::collection::btree_map("[a-z]{1,6}", "[a-z0-9 ]{0,10}", 0..3),
    )
        .prop_map(|(id, host, alt_text, width_px, height_px, meta)| {
            serde_json::from_value(serde_json::json!({
                "id": id,
                "image_uri": format!("https://{host}.example/x.jpg"),
                "alt_text": alt_text,
                "width_px": width_px,
                "height_px": height_px,
                "meta": meta,
            }))
            .expect("valid record")
        })
}

fn region_strategy() -> impl Strategy<Value = Region> {
    prop_oneof![
        Just(Region::NoSpecificCountry),
        "[A-Z][a-z]{2,12}".prop_map(Region::Country),
    ]
}

fn verdict_strategy() -> impl Strategy<Value = CurationVerdict> {
    (1i64..=5, 0usize..11, region_strategy()).prop_map(|(quality, subject, region)| {
        CurationVerdict::new(quality, SubjectCategory::ALL[subject], region).unwrap()
    })
}

fn lang_strategy() -> impl Strategy<Value = LangTag> {
    prop::sample::select(babelkit::lang::supported_tags().collect::<Vec<_>>())
        .prop_map(|tag| LangTag::new(tag).unwrap())
}

/// A valid sample: strict alternation from human, image tokens matching refs.
fn valid_sample_strategy() -> impl Strategy<Value = InstructionSample> {
    (
        id_strategy(),
        1usize..4, // human/assistant turn pairs
        0usize..3, // images
        lang_strategy(),
        prop::option::of(prop::collection::vec(0usize..13, 1..3)),
    )
        .prop_map(|(id, pairs, images, language, task_idx)| {
            let image_refs: Vec<String> = (0..images).map(|i| format!("img://{id}/{i}")).collect();
            let mut turns = Vec::new();
            for p in 0..pairs {
                let mut text = format!("question {p}");
                if p == 0 {
                    for _ in 0..images {
                        text = format!("{IMAGE_TOKEN}\n{text}");
                    }
                }
                turns.push(Turn::human(text));
                turns.push(Turn::assistant(format!("answer {p}")));
            }
            InstructionSample {
                id,
                image_refs,
                turns,
                language,
                task_types: task_idx.map(|v| v.into_iter().map(|i| TaskType::ALL[i]).collect()),
                provenance: "proptest".to_string(),
            }
        })
}

/// Any sample, valid or not: random roles and freely counted image tokens.
fn any_sample_strategy() -> impl Strategy<Value = InstructionSample> {
    (
        id_strategy(),
        prop::collection::vec((prop::bool::ANY, text_strategy()), 0..6),
        0usize..3,
        lang_strategy(),
    )
        .prop_map(|(id, raw_turns, images, language)| InstructionSample {
            id,
            image_refs: (0..images).map(|i| format!("img://{i}")).collect(),
            turns: raw_turns
                .into_iter()
                .map(|(human, text)| Turn {
                    role: if human { Role::Human } else { Role::Assistant },
                    text,
                })
                .collect(),
            language,
            task_types: None,
            provenance: "proptest".to_string(),
        })
}

fn manifest_strategy() -> impl Strategy<Value = StageManifest> {
    (
        "[a-z_]{1,12}",
        prop::collection::btree_map("[A-Z][a-z]{1,10}", 0u64..50, 0..4),
        0u64..1000,
        "[0-9a-f]{16}",
    )
        .prop_map(|(stage, drops, kept, fingerprint)| {
            let dropped: u64 = drops.values().sum();
            serde_json::from_value(serde_json::json!({
                "stage": stage,
                "input_count": kept + dropped,
                "kept_count": kept,
                "drops": drops,
                "config_fingerprint": fingerprint,
            }))
            .expect("balanced manifest")
        })
}

// ---------------------------------------------------------------------------
// Round-trip law: parse(serialize(v)) == v
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn source_record_round_trips(record in source_record_strategy()) {
        let back: SourceRecord = babelkit::jsonl::round_trip(&record).unwrap();
        prop_assert_eq!(back, record);
    }

    #[test]
    fn verdict_round_trips(verdict in verdict_strategy()) {
        let back: CurationVerdict = babelkit::jsonl::round_trip(&verdict).unwrap();
        prop_assert_eq!(back, verdict);
    }

    #[test]
    fn sample_round_trips(sample in valid_sample_strategy()) {
        let back: InstructionSample = babelkit::jsonl::round_trip(&sample).unwrap();
        prop_assert_eq!(back, sample);
    }

    #[test]
    fn manifest_round_trips(manifest in manifest_strategy()) {
        let back: StageManifest = babelkit::jsonl::round_trip(&manifest).unwrap();
        prop_assert_eq!(back, manifest);
    }
}

// ---------------------------------------------------------------------------
// validate_sample agrees with an independent brute-force checker
// ---------------------------------------------------------------------------

fn brute_force_violations(sample: &InstructionSample) -> Vec<Violation> {
    let mut out = Vec::new();
    if sample.turns.is_empty() {
        return vec![Violation::EmptyTurns];
    }
    let mut alternates = true;
    for (i, turn) in sample.turns.iter().enumerate() {
        let want_human = i % 2 == 0;
        let is_human = turn.role == Role::Human;
        if want_human != is_human {
            alternates = false;
        }
    }
    if !alternates {
        out.push(Violation::RoleAlternation);
    }
    // independent token counting: explicit find loop
    let mut tokens = 0usize;
    for turn in &sample.turns {
        if turn.role != Role::Human {
            continue;
        }
        let mut at = 0;
        while let Some(pos) = turn.text[at..].find("<image>") {
            tokens += 1;
            at += pos + "<image>".len();
        }
    }
    if tokens != sample.image_refs.len() {
        out.push(Violation::ImageTokenMismatch);
    }
    out
}

proptest! {
    #[test]
    fn validation_matches_brute_force(sample in any_sample_strategy()) {
        prop_assert_eq!(validate_sample(&sample), brute_force_violations(&sample));
    }

    #[test]
    fn valid_samples_have_no_violations(sample in valid_sample_strategy()) {
        prop_assert!(validate_sample(&sample).is_empty());
    }
}

// ---------------------------------------------------------------------------
// Curation laws
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn policy_never_keeps_low_quality_or_no_country(
        verdicts in prop::collection::vec(verdict_strategy(), 1..80)
    ) {
        let mut records = Vec::new();
        let mut map = BTreeMap::new();
        for (i, verdict) in verdicts.into_iter().enumerate() {
            let record: SourceRecord = serde_json::from_value(serde_json::json!({
                "id": format!("r{i}"),
                "image_uri": "u",
                "alt_text": "t",
            })).unwrap();
            map.insert(record.id.clone(), verdict);
            records.push(record);
        }
        let (kept, manifest) = curate::apply_policy(records, &map, "fp").unwrap();
        manifest.check().unwrap();
        for record in kept {
            let verdict = &map[&record.id];
            prop_assert!(verdict.quality >= 4);
            prop_assert!(verdict.region != Region::NoSpecificCountry);
        }
    }

    #[test]
    fn verdict_format_parse_identity(verdict in verdict_strategy()) {
        let parsed = curate::parse_verdict(&curate::format_verdict(&verdict)).unwrap();
        prop_assert_eq!(parsed, verdict);
    }
}

// ---------------------------------------------------------------------------
// Mixture laws
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn largest_remainder_sums_exactly_and_stays_near_quota(
        total in 0u64..50_000,
        weights in prop::collection::btree_map("[a-z]{2}", 0.001f64..100.0, 1..12)
    ) {
        let plan = mix::largest_remainder(total, &weights);
        prop_assert_eq!(plan.values().sum::<u64>(), total);
        let weight_sum: f64 = weights.values().sum();
        for (language, &count) in &plan {
            let quota = total as f64 * weights[language] / weight_sum;
            prop_assert!((count as f64 - quota).abs() < 1.0 + 1e-9,
                "count {} vs quota {} for {}", count, quota, language);
        }
    }
}

// ---------------------------------------------------------------------------
// Aggregation permutation invariance
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn aggregate_is_permutation_invariant(
        scores in prop::collection::btree_map(
            "[a-z]{3,8}",
            prop::collection::btree_map("[a-z]{2}", 0.0f64..100.0, 1..6),
            1..5,
        ),
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        let report = aggregate(&scores, "en");
        // rebuild the same map via shuffled insertion order
        let mut rng = babelkit::util::derive_rng(seed, "perm");
        let mut entries: Vec<_> = scores.iter().collect();
        entries.shuffle(&mut rng);
        let mut shuffled: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (dataset, by_lang) in entries {
            let mut inner: Vec<_> = by_lang.iter().collect();
            inner.shuffle(&mut rng);
            shuffled.insert(dataset.clone(), inner.into_iter().map(|(k, v)| (k.clone(), *v)).collect());
        }
        let report_shuffled = aggregate(&shuffled, "en");
        prop_assert_eq!(report.overall, report_shuffled.overall);
    }
}

// ---------------------------------------------------------------------------
// Metric bounds and fixed points
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn metric_bounds(a in text_strategy(), b in text_strategy()) {
        let r = rouge_l(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        let c = chrf(&a, &b);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&c));
        let s = sentence_bleu(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn identical_strings_maximize_metrics(a in "[a-z ]{1,30}") {
        prop_assume!(!a.trim().is_empty());
        prop_assert!((rouge_l(&a, &a) - 1.0).abs() < 1e-12);
        prop_assert!((chrf(&a, &a) - 100.0).abs() < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Translation validator and repair
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn validator_is_reflexive(sample in valid_sample_strategy()) {
        prop_assert!(validate_translation(&sample, &sample).is_empty());
    }

    #[test]
    fn repair_restores_mangled_tokens(spaces_before in 0usize..3, spaces_after in 0usize..3, upper in prop::bool::ANY) {
        let word = if upper { "IMAGE" } else { "image" };
        let mangled = format!(
            "prefix <{}{}{}> suffix",
            " ".repeat(spaces_before),
            word,
            " ".repeat(spaces_after),
        );
        let repaired = repair_image_tokens(&mangled);
        prop_assert_eq!(repaired, "prefix <image> suffix".to_string());
    }

    #[test]
    fn repair_is_idempotent(text in text_strategy()) {
        let once = repair_image_tokens(&text);
        prop_assert_eq!(repair_image_tokens(&once), once.clone());
    }
}

// ---------------------------------------------------------------------------
// Request hashing
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn equal_requests_hash_equal(text in text_strategy(), temp_milli in 0u32..2000, seed in prop::option::of(0u64..100)) {
        let make = || ChatRequest::new(
            "model-x",
            vec![ChatMessage::user(text.clone())],
            GenParams {
                temperature: f64::from(temp_milli) / 1000.0,
                max_tokens: 256,
                seed,
            },
        );
        prop_assert_eq!(request_hash(&make()), request_hash(&make()));
    }

    #[test]
    fn differing_text_hashes_differ(text in "[a-z]{1,20}") {
        let base = ChatRequest::new("m", vec![ChatMessage::user(text.clone())], GenParams::default());
        let changed = ChatRequest::new("m", vec![ChatMessage::user(format!("{text}!"))], GenParams::default());
        prop_assert_ne!(request_hash(&base), request_hash(&changed));
    }
}

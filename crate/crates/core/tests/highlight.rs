//! Highlighter on a two-parameter schema small enough to work out by hand.

use presetlab_core::embed::{embed_generation, EmbeddingKey, EmbeddingVector, LookupProvider};
use presetlab_core::highlight::{group_importance, Baselines, HighlightConfig};
use presetlab_core::preset::{ParamValue, Preset, Provenance};
use presetlab_core::schema::ParameterSchema;
use presetlab_core::search::Query;
use presetlab_core::Generation;

/// Two scored groups plus eleven fillers whose single one-choice parameter
/// always lands in the same bin.
fn schema_text() -> String {
    let mut s = String::from("presetlab-schema format-version=1\ngroup name=Tone\ngroup name=Shape\n");
    for i in 0..11 {
        s.push_str(&format!("group name=Filler{i}\n"));
    }
    s.push_str("param id=cut group=Tone kind=continuous range=0,1 default=0.500000\n");
    s.push_str("param id=wave group=Shape kind=discrete choices=a,b default=a\n");
    for i in 0..11 {
        s.push_str(&format!("param id=fill{i} group=Filler{i} kind=discrete choices=x default=x\n"));
    }
    s
}

// Values computed offline with the KL-to-mixture form of the distance.
// Tone: conditioned (3,1,..,1)/13 over 11 bins against (3,1x8,3,3)/17.
const TONE_DISTANCE: f64 = 0.196_438_267_394_733_36;
// Shape: (3/4, 1/4) against (1/2, 1/2).
const SHAPE_DISTANCE: f64 = 0.220_895_768_849_017_35;

fn fixture() -> (ParameterSchema, Generation, LookupProvider) {
    let schema = ParameterSchema::parse(&schema_text()).unwrap();
    // id, cut, wave, embedding
    let rows = [
        ("p1", 0.05, 0, [1.0, 0.0]),
        ("p2", 0.05, 0, [0.9, 0.1]),
        ("p3", 0.95, 1, [0.0, 1.0]),
        ("p4", 0.95, 1, [0.0, 1.0]),
        ("p5", 0.5, 0, [0.5, 0.5]),
        ("p6", 0.5, 1, [0.4, 0.6]),
    ];
    let mut provider = LookupProvider::new(2);
    provider
        .insert(EmbeddingKey::Text("q".into()), EmbeddingVector::new(vec![1.0, 0.0]).unwrap())
        .unwrap();
    let presets = rows
        .iter()
        .map(|(id, cut, wave, e)| {
            provider
                .insert(EmbeddingKey::Preset(id.to_string()), EmbeddingVector::new(e.to_vec()).unwrap())
                .unwrap();
            let mut values = vec![ParamValue::Continuous(*cut), ParamValue::Discrete(*wave)];
            values.resize(13, ParamValue::Discrete(0));
            Preset::new(*id, *id, Provenance::Default, values, &schema).unwrap()
        })
        .collect();
    let mut bank = Generation::new(presets).unwrap();
    embed_generation(&mut bank, &provider, &schema).unwrap();
    (schema, bank, provider)
}

#[test]
fn toy_schema_matches_hand_computation() {
    let (schema, bank, provider) = fixture();
    let config = HighlightConfig {
        corpus_size: 2,
        ..HighlightConfig::default()
    };
    let baselines = Baselines::compute(&bank, &schema, config.smoothing);
    let imp = group_importance(&Query::Text("q".into()), &bank, &provider, &schema, &config, &baselines).unwrap();

    assert_eq!(imp.corpus_size, 2);
    assert!(!imp.truncated);
    assert!((imp.param_distances[0] - TONE_DISTANCE).abs() < 1e-9);
    assert!((imp.param_distances[1] - SHAPE_DISTANCE).abs() < 1e-9);

    let tone = &imp.groups[0];
    let shape = &imp.groups[1];
    assert_eq!((tone.group.as_str(), shape.group.as_str()), ("Tone", "Shape"));
    assert!((tone.raw - TONE_DISTANCE).abs() < 1e-9);
    assert_eq!(imp.max_group, Some(1));
    assert_eq!(shape.shade, 1.0);
    assert!((tone.shade - TONE_DISTANCE / SHAPE_DISTANCE).abs() < 1e-9);
    assert!(imp.groups[2..].iter().all(|g| g.raw == 0.0 && g.shade == 0.0));
}

#[test]
fn whole_bank_corpus_scores_zero() {
    let (schema, bank, provider) = fixture();
    let baselines = Baselines::compute(&bank, &schema, 1.0);
    let imp = group_importance(
        &Query::Anchor("p3".into()),
        &bank,
        &provider,
        &schema,
        &HighlightConfig::default(),
        &baselines,
    )
    .unwrap();
    assert!(imp.truncated);
    assert_eq!(imp.corpus_size, 6);
    assert_eq!(imp.max_group, None);
    assert!(imp.groups.iter().all(|g| g.raw.abs() < 1e-12 && g.shade == 0.0));
}

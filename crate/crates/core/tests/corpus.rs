use rehabloop_core::constraints::{validate, ClinicalNote, Constraint, NoteParser};
use serde::Deserialize;

#[derive(Deserialize)]
struct Corpus {
    version: u32,
    notes: Vec<Entry>,
}

#[derive(Deserialize)]
struct Entry {
    id: String,
    text: String,
    expected: Vec<Constraint>,
    #[serde(default)]
    residual: Vec<String>,
}

#[test]
fn every_corpus_note_extracts_exactly() {
    let corpus: Corpus =
        serde_json::from_str(include_str!("../data/corpus.v1.json")).expect("corpus parses");
    assert_eq!(corpus.version, 1);
    assert_eq!(corpus.notes.len(), 40);
    let parser = NoteParser::default();
    let mut failures = Vec::new();
    for entry in &corpus.notes {
        let set = parser.parse(&ClinicalNote::new(&entry.id, &entry.text)).unwrap();
        if set.constraints != entry.expected {
            failures.push(format!(
                "{}: got {}\n    want {}",
                entry.id,
                serde_json::to_string(&set.constraints).unwrap(),
                serde_json::to_string(&entry.expected).unwrap()
            ));
        }
        if set.residual_text != entry.residual {
            failures.push(format!("{}: residual {:?}", entry.id, set.residual_text));
        }
        assert!(validate(&set).is_valid(), "{} fails validation", entry.id);
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

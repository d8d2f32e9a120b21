use std::collections::BTreeMap;
use std::path::Path;

use dualmol_core::io::{
    correspondence_csv, parse_pair_corpus, parse_pair_corpus_str, read_pairs_csv, synth_corpus, write_pairs_csv, DrugPair,
    SYNTH_MAX_LEN, SYNTH_MIN_LEN,
};
use dualmol_core::Error;

fn parse(s: &str) -> dualmol_core::Result<dualmol_core::io::PairCorpus> {
    parse_pair_corpus_str(s, Path::new("corpus.tsv"))
}

#[test]
fn corpus_examples() {
    let c = parse("id\tsmiles\tiupac\nm1\tCCO\tethanol\n").unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.records[0].iupac, "ethanol");

    let err = parse("id\tsmiles\tiupac\nm1\tC\tmethane\nm1\tCC\tethane\n").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

    let crlf = parse("id\tsmiles\tiupac\r\nm1\tC\tmethane\r\nm2\tCC\tethane\r\n\r\n").unwrap();
    assert_eq!(crlf.ids(), ["m1", "m2"]);
    assert_eq!(crlf.records[1].iupac, "ethane");
}

#[test]
fn corpus_errors_cite_lines() {
    for (text, line) in [
        ("", 1),
        ("id,smiles,iupac\n", 1),
        ("id\tsmiles\tiupac\nm1\tC\n", 2),
        ("id\tsmiles\tiupac\nm1\tC\tmethane\nm2\t\tethane\n", 3),
        ("id\tsmiles\tiupac\nm1\tC\tmethane\tx\n", 2),
    ] {
        match parse(text) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn synthetic_corpus_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.tsv");
    let synth = synth_corpus(21, 150);
    synth.corpus.save(&path).unwrap();
    assert_eq!(parse_pair_corpus(&path).unwrap(), synth.corpus);
    assert_eq!(synth, synth_corpus(21, 150));
    assert!(synth.latent.iter().all(|l| (SYNTH_MIN_LEN..=SYNTH_MAX_LEN).contains(&l.len())));

    let pairs = vec![DrugPair { id_a: "a".into(), id_b: "b".into(), label: 0 }];
    let p = dir.path().join("pairs.csv");
    write_pairs_csv(&p, &pairs).unwrap();
    assert_eq!(read_pairs_csv(&p).unwrap(), pairs);
}

#[test]
fn invalid_utf8_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    std::fs::write(&path, b"id\tsmiles\tiupac\nm1\t\xff\tx\n").unwrap();
    assert!(matches!(parse_pair_corpus(&path), Err(Error::Parse { .. })));
    assert!(matches!(parse_pair_corpus(&dir.path().join("missing.tsv")), Err(Error::Io { .. })));
}

/// Recovers the planted correspondence from the corpus alone: a
/// single-fragment record pairs one morpheme with one code.
#[test]
fn correspondence_matches_rederivation_from_corpus() {
    let synth = synth_corpus(0, 3000);
    let mut derived = BTreeMap::new();
    for r in &synth.corpus.records {
        if !r.iupac.contains('-') && r.smiles.chars().count() == 1 {
            derived.insert(r.iupac.clone(), r.smiles.clone());
        }
    }
    let shipped: BTreeMap<String, String> = correspondence_csv()
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect();
    assert_eq!(derived, shipped);
    // Multi-fragment records concatenate codes and hyphen-join morphemes in order.
    for r in synth.corpus.records.iter().take(200) {
        let codes: String = r.iupac.split('-').map(|m| shipped[m].as_str()).collect();
        assert_eq!(codes, r.smiles);
    }
}

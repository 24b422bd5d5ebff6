use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CategorySchema, Document};
use crate::{Error, Result};

/// Writes one JSON document per line.
pub fn save_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSONL corpus, validating every document. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_schemas(schemas: &[CategorySchema], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(schemas)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_schemas(path: impl AsRef<Path>) -> Result<Vec<CategorySchema>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schemas: Vec<CategorySchema> = serde_json::from_str(&text)?;
    for s in &schemas {
        s.validate()?;
    }
    Ok(schemas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};

    fn sample() -> crate::corpus::Corpus {
        generate_corpus(&GeneratorConfig {
            categories: 3,
            docs_per_category: 5,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn corpus_round_trips() {
        let corpus = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&corpus.documents, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus.documents);
    }

    #[test]
    fn schemas_round_trip() {
        let corpus = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schemas.json");
        save_schemas(&corpus.schemas, &path).unwrap();
        assert_eq!(load_schemas(&path).unwrap(), corpus.schemas);
    }

    #[test]
    fn wire_format_has_exact_fields() {
        let corpus = sample();
        let line = serde_json::to_string(&corpus.documents[0]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec!["entities", "form_category", "id", "kv_links", "page_height", "page_width", "tokens"];
        expected.sort();
        let mut keys_sorted = keys.clone();
        keys_sorted.sort();
        assert_eq!(keys_sorted, expected);
        assert!(v["tokens"][0]["bbox"].is_array());
        assert!(v["entities"][0]["spans"][0].is_array());
        assert!(v["kv_links"].as_array().unwrap().iter().all(|l| l.get("key").is_some() && l.get("value").is_some()));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path).unwrap().is_empty());
    }

    #[test]
    fn inverted_bbox_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let line = r#"{"id":"bad-1","form_category":"c","page_width":1000,"page_height":1000,"tokens":[{"text":"a","bbox":[50,0,10,10]}],"entities":[],"kv_links":[]}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        match load_corpus(&path) {
            Err(Error::Validation { doc_id, .. }) => assert_eq!(doc_id, "bad-1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_line_number() {
        let corpus = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.jsonl");
        let good = serde_json::to_string(&corpus.documents[0]).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"id\": 3\n")).unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}

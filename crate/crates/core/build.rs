//! Fails the build when any language catalog is missing a key present in
//! another catalog, or carries an empty entry.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

const LANGUAGES: [&str; 8] = ["en", "es", "fr", "zh", "ja", "ar", "fa", "hi"];

fn main() {
    let dir = Path::new("i18n");
    println!("cargo:rerun-if-changed=i18n");

    let mut reference: Option<(String, BTreeSet<String>)> = None;
    for lang in LANGUAGES {
        let path = dir.join(format!("{lang}.toml"));
        println!("cargo:rerun-if-changed={}", path.display());
        let text = fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("catalog {} unreadable: {e}", path.display()));
        let table: toml::Table = text
            .parse()
            .unwrap_or_else(|e| panic!("catalog {} is not valid TOML: {e}", path.display()));

        let meta = table
            .get("meta")
            .and_then(|m| m.as_table())
            .unwrap_or_else(|| panic!("catalog {lang}: missing [meta] table"));
        match meta.get("direction").and_then(|d| d.as_str()) {
            Some("ltr") | Some("rtl") => {}
            other => panic!("catalog {lang}: meta.direction must be ltr or rtl, got {other:?}"),
        }

        let strings = table
            .get("strings")
            .and_then(|s| s.as_table())
            .unwrap_or_else(|| panic!("catalog {lang}: missing [strings] table"));
        let mut keys = BTreeSet::new();
        for (key, value) in strings {
            let value = value
                .as_str()
                .unwrap_or_else(|| panic!("catalog {lang}: {key} is not a string"));
            if value.trim().is_empty() {
                panic!("catalog {lang}: {key} is empty");
            }
            keys.insert(key.clone());
        }

        match &reference {
            None => reference = Some((lang.to_string(), keys)),
            Some((ref_lang, ref_keys)) => {
                let missing: Vec<_> = ref_keys.difference(&keys).collect();
                let extra: Vec<_> = keys.difference(ref_keys).collect();
                if !missing.is_empty() || !extra.is_empty() {
                    panic!(
                        "catalog {lang} differs from {ref_lang}: missing {missing:?}, extra {extra:?}"
                    );
                }
            }
        }
    }
}

//! Flat `key=value` run manifest written next to outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Default)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.set("tool", env!("CARGO_PKG_NAME"));
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string().replace('\n', " "));
    }

    /// Records the SHA-256 of a file, or `missing` when it cannot be read.
    pub fn hash_file(&mut self, key: &str, path: &Path) {
        let value = fs::read(path)
            .map(|b| hex::encode(Sha256::digest(b)))
            .unwrap_or_else(|_| "missing".into());
        self.set(&format!("{key}_sha256"), value);
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join("manifest.txt"), self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_flat_lines() {
        let mut m = Manifest::new("score");
        m.set("b", "two\nlines");
        m.set("a", 1);
        m.hash_file("nothing", Path::new("/definitely/not/here"));
        let text = m.render();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.contains("b=two lines\n"));
        assert!(text.contains("nothing_sha256=missing\n"));
    }
}

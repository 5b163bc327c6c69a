use std::fmt::Display;
use std::path::Path;
use std::time::Instant;

use hatrack::io::IoError;

/// Ordered `key=value` record of one run. Keys are unique.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", "hatrack");
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn extend<K: AsRef<str>>(&mut self, prefix: &str, entries: impl IntoIterator<Item = (K, String)>) {
        for (k, v) in entries {
            self.set(&format!("{prefix}{}", k.as_ref()), v);
        }
    }

    /// Records elapsed milliseconds since `start` under `time_<stage>_ms`.
    pub fn time(&mut self, stage: &str, start: Instant) {
        self.set(&format!("time_{stage}_ms"), format!("{:.3}", start.elapsed().as_secs_f64() * 1e3));
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.render()).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_unique_and_ordered() {
        let mut m = Manifest::new("track");
        m.set("alpha", 0.5);
        m.set("alpha", 0.9);
        let text = m.render();
        assert_eq!(text.matches("alpha=").count(), 1);
        assert!(text.contains("alpha=0.9\n"));
        assert!(text.starts_with("tool=hatrack\n"));
    }
}

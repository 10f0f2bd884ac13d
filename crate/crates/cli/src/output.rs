//! CSV emission. Every file ends with a `# complete rows=<n>` trailer, or
//! `# incomplete rows=<n> error=<message>` when a run stops early.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub const LN_2: f64 = std::f64::consts::LN_2;

pub fn bits(nats: f64) -> f64 {
    nats / LN_2
}

/// Deterministic text form of a float (shortest round-trip representation).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub struct Table {
    writer: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Self { writer, rows: 0 })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn trailer(mut self, line: String) -> Result<()> {
        self.writer.flush()?;
        let mut inner = self.writer.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?;
        writeln!(inner, "{line}")?;
        inner.flush()?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let n = self.rows;
        self.trailer(format!("# complete rows={n}"))
    }

    pub fn abandon(self, error: &str) -> Result<()> {
        let n = self.rows;
        let msg = error.replace('\n', " ");
        self.trailer(format!("# incomplete rows={n} error={msg}"))
    }

    /// Writes rows until the first error, then closes the file with the
    /// matching trailer and returns that error.
    pub fn finish_with<T, E>(mut self, items: Vec<std::result::Result<T, E>>, mut render: impl FnMut(&T) -> Vec<String>) -> Result<()>
    where
        E: Into<anyhow::Error>,
    {
        for item in items {
            match item {
                Ok(v) => self.row(render(&v))?,
                Err(e) => {
                    let e = e.into();
                    self.abandon(&format!("{e:#}"))?;
                    return Err(e);
                }
            }
        }
        self.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailer_marks_completeness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::create(&path, &["a", "b"]).unwrap();
        t.row(["1", "2"]).unwrap();
        t.finish().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n# complete rows=1\n");

        let t = Table::create(&path, &["a"]).unwrap();
        let items: Vec<std::result::Result<f64, anyhow::Error>> = vec![Ok(1.5), Err(anyhow::anyhow!("boom"))];
        assert!(t.finish_with(items, |v| vec![num(*v)]).is_err());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a\n1.5\n# incomplete rows=1 error=boom\n");
    }
}

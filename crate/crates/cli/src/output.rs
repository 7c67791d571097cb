//! Output files. Every CSV starts with a `# config_hash=...` comment line
//! and every JSON sidecar carries a `config_hash` field.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{json, Value};

/// Refused because the target already exists and `--force` was not given.
#[derive(Debug, thiserror::Error)]
#[error("{0} already exists; pass --force to overwrite")]
pub struct Exists(pub PathBuf);

#[derive(Clone, Debug)]
pub struct Outputs {
    pub root: PathBuf,
    pub config_hash: String,
    pub force: bool,
}

impl Outputs {
    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of a file about to be written; creates parent directories and
    /// refuses to clobber without `--force`.
    pub fn target(&self, rel: impl AsRef<Path>) -> anyhow::Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() && !self.force {
            return Err(Exists(p).into());
        }
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(p)
    }

    /// Fail early if any of `rels` exists and `--force` was not given.
    pub fn check_free<P: AsRef<Path>>(&self, rels: impl IntoIterator<Item = P>) -> anyhow::Result<()> {
        if self.force {
            return Ok(());
        }
        for rel in rels {
            let p = self.path(rel);
            if p.exists() {
                return Err(Exists(p).into());
            }
        }
        Ok(())
    }

    pub fn csv(&self, rel: impl AsRef<Path>, header: &[&str]) -> anyhow::Result<CsvOut> {
        let path = self.target(rel)?;
        let mut file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(file, "# config_hash={}", self.config_hash)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        Ok(CsvOut { w, path })
    }

    /// JSON sidecar; `body` must be an object and gains a `config_hash` key.
    pub fn json(&self, rel: impl AsRef<Path>, body: Value) -> anyhow::Result<PathBuf> {
        let path = self.target(rel)?;
        let mut obj = match body {
            Value::Object(m) => m,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        obj.insert("config_hash".into(), json!(self.config_hash));
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub struct CsvOut {
    w: csv::Writer<BufWriter<File>>,
    pub path: PathBuf,
}

impl CsvOut {
    pub fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Fixed-precision float formatting shared by every CSV; NaN becomes empty.
pub fn f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.10e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_hash_line_and_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs {
            root: dir.path().to_path_buf(),
            config_hash: "abc".into(),
            force: false,
        };
        let mut c = out.csv("a/b.csv", &["x", "y"]).unwrap();
        c.row([f(1.0), f(f64::NAN)]).unwrap();
        let p = c.finish().unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "# config_hash=abc\nx,y\n1.0000000000e0,\n"
        );
        assert!(out.csv("a/b.csv", &["x"]).is_err());
        out.force = true;
        assert!(out.csv("a/b.csv", &["x"]).is_ok());
    }

    #[test]
    fn json_sidecar_gets_hash() {
        let dir = tempfile::tempdir().unwrap();
        let out = Outputs {
            root: dir.path().to_path_buf(),
            config_hash: "h".into(),
            force: false,
        };
        let p = out.json("s.json", json!({"k": 1})).unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "h");
        assert_eq!(v["k"], 1);
    }
}

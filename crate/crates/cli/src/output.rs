//! Output directory handling. Everything written here is a pure function of
//! the resolved config, so reruns produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use serde::Serialize;

pub struct OutDir {
    root: PathBuf,
    gzip: bool,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, gzip: bool) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            gzip,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn open(&mut self, name: &str, compress: bool) -> Result<Box<dyn Write>> {
        let name = if compress {
            format!("{name}.gz")
        } else {
            name.to_string()
        };
        let path = self.root.join(&name);
        let file = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        self.written.push(name);
        Ok(if compress {
            // Zero mtime and no file name keep the bytes reproducible.
            let enc: GzEncoder<_> = GzBuilder::new()
                .mtime(0)
                .write(file, Compression::default());
            Box::new(enc)
        } else {
            Box::new(file)
        })
    }

    /// CSV with a header row. Honours the gzip setting.
    pub fn csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> Result<()> {
        let gzip = self.gzip;
        let mut w = csv::Writer::from_writer(self.open(name, gzip)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pretty JSON, never compressed.
    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.open(name, false)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Read a file, transparently gunzipping `*.gz`. Falls back to `path.gz`
/// when `path` does not exist.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let gz = PathBuf::from(format!("{}.gz", path.display()));
    let (actual, compressed) = if path.exists() {
        (
            path.to_path_buf(),
            path.extension().is_some_and(|e| e == "gz"),
        )
    } else if gz.exists() {
        (gz, true)
    } else {
        anyhow::bail!("{} not found (also tried .gz)", path.display());
    };
    let raw = std::fs::read(&actual).with_context(|| format!("reading {}", actual.display()))?;
    if !compressed {
        return Ok(raw);
    }
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(&raw[..])
        .read_to_end(&mut out)
        .with_context(|| format!("decompressing {}", actual.display()))?;
    Ok(out)
}

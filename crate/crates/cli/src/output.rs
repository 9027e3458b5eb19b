use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Writer for one command's artifacts; every file opens with the command
/// name, seed and resolved configuration.
pub(crate) struct Artifacts<'a> {
    dir: PathBuf,
    command: &'static str,
    cfg: &'a RunConfig,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl<'a> Artifacts<'a> {
    pub fn new(command: &'static str, cfg: &'a RunConfig) -> Result<Self, CliError> {
        let dir = cfg.out_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            command,
            cfg,
            written: Vec::new(),
        })
    }

    /// Header text without comment markers.
    pub fn header(&self) -> String {
        let mut h = format!(
            "embodied {}\nseed = {}\nresolved configuration:\n",
            self.command, self.cfg.seed
        );
        h.push_str(&self.cfg.to_toml());
        h
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(file)))
    }

    pub fn csv(
        &mut self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let header = self.header();
        let (path, mut w) = self.create(name)?;
        let mut body = || -> std::io::Result<()> {
            for line in header.lines() {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "{}", columns.join(","))?;
            for row in rows {
                debug_assert_eq!(row.len(), columns.len());
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()
        };
        body().map_err(|e| io_err(&path, e))
    }

    /// JSON document whose first member `run` carries the command, seed and
    /// configuration.
    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Run<'c> {
            command: &'static str,
            seed: u64,
            config: &'c RunConfig,
        }
        #[derive(Serialize)]
        struct Doc<'c, T> {
            run: Run<'c>,
            #[serde(flatten)]
            payload: &'c T,
        }
        let doc = Doc {
            run: Run {
                command: self.command,
                seed: self.cfg.seed,
                config: self.cfg,
            },
            payload,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        let (path, mut w) = self.create(name)?;
        writeln!(w, "{text}")
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))
    }

    pub fn codebook_csv(
        &mut self,
        name: &str,
        cb: &embodied_core::codebook::Codebook,
    ) -> Result<(), CliError> {
        let header = self.header();
        let (path, mut w) = self.create(name)?;
        cb.write_csv(&mut w, &header)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))
    }
}

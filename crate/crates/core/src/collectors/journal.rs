use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::CollectorBatch;

/// Append-only store of collector batches, one JSON line per batch and one
/// file per collector. Every append is synced before it returns.
pub struct Journal {
    dir: PathBuf,
    files: BTreeMap<String, File>,
}

impl Journal {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Journal {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn append(&mut self, batch: &CollectorBatch) -> io::Result<()> {
        if !self.files.contains_key(&batch.collector_id) {
            let path = self.dir.join(format!("{}.jsonl", batch.collector_id));
            let f = OpenOptions::new().create(true).append(true).open(path)?;
            self.files.insert(batch.collector_id.clone(), f);
        }
        let f = self.files.get_mut(&batch.collector_id).expect("just inserted");
        let mut line = serde_json::to_vec(batch).map_err(io::Error::other)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()
    }
}

/// Reads all batches in a journal directory, ordered by collector id and
/// then by append order. A torn final line is ignored.
pub fn read_journal(dir: &Path) -> io::Result<Vec<CollectorBatch>> {
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let lines: Vec<String> = BufReader::new(File::open(&p)?).lines().collect::<Result<_, _>>()?;
        let n = lines.len();
        for (i, line) in lines.into_iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CollectorBatch>(&line) {
                Ok(b) => out.push(b),
                Err(_) if i + 1 == n => {}
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", p.display(), i + 1),
                    ))
                }
            }
        }
    }
    Ok(out)
}

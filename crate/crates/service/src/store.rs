//! Append-only session log, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use presetlab_core::{Error, Result};

use crate::session::Mutation;

pub const LOG_FILE: &str = "sessions.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Created { session: String, at: u64 },
    Mutation { session: String, at: u64, mutation: Mutation },
}

pub struct SessionStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionStore {
    /// Opens (creating if needed) the log in `dir` and returns it with the
    /// records already on disk. A torn final line from a crash is dropped.
    pub fn open(dir: &Path) -> Result<(Self, Vec<Record>)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        let path = dir.join(LOG_FILE);
        let mut records = Vec::new();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::Io { path, source: e }),
        };
        let mut good_len = 0;
        let mut offset = 0;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (i, line) in lines.iter().enumerate() {
            offset += line.len();
            if line.trim().is_empty() {
                good_len = offset;
                continue;
            }
            match serde_json::from_str(line.trim_end()) {
                Ok(r) if line.ends_with('\n') => {
                    records.push(r);
                    good_len = offset;
                }
                Ok(_) | Err(_) if i + 1 == lines.len() => break,
                Ok(_) => unreachable!("only the last line can lack a newline"),
                Err(e) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("{}: {e}", path.display()),
                    })
                }
            }
        }
        if good_len < text.len() {
            let f = OpenOptions::new()
                .write(true)
                .open(&path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            f.set_len(good_len as u64)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok((Self { path, file: Mutex::new(file) }, records))
    }

    pub fn append(&self, record: &Record) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("store lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::FavoriteAction;

    #[test]
    fn append_and_reload_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let (store, records) = SessionStore::open(dir.path()).unwrap();
        assert!(records.is_empty());
        let a = Record::Created { session: "s".into(), at: 1 };
        let b = Record::Mutation {
            session: "s".into(),
            at: 2,
            mutation: Mutation::Favorite { preset_id: Some("p0001".into()), action: FavoriteAction::Add },
        };
        store.append(&a).unwrap();
        store.append(&b).unwrap();
        drop(store);
        std::fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join(LOG_FILE))
            .unwrap()
            .write_all(b"{\"record\":\"crea")
            .unwrap();
        let (store, records) = SessionStore::open(dir.path()).unwrap();
        assert_eq!(records, vec![a.clone(), b.clone()]);
        store.append(&a).unwrap();
        drop(store);
        let (_, records) = SessionStore::open(dir.path()).unwrap();
        assert_eq!(records, vec![a.clone(), b, a]);
    }
}

//! Durable per-node storage.
//!
//! Nodes persist their append-only files (block log, raft journal, private
//! log) through this interface. The memory backend survives simulated
//! crashes — the simulator keeps the map while the node's volatile state is
//! torn down — and the disk backend carries state across CLI invocations.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::rc::Rc;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("storage i/o on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

type MemDir = Rc<RefCell<HashMap<String, Vec<u8>>>>;

#[derive(Clone)]
pub enum NodeStore {
    Mem(MemDir),
    Disk {
        dir: PathBuf,
        handles: Rc<RefCell<HashMap<String, File>>>,
    },
}

impl NodeStore {
    pub fn memory() -> NodeStore {
        NodeStore::Mem(Rc::new(RefCell::new(HashMap::new())))
    }

    pub fn disk(dir: PathBuf) -> Result<NodeStore, StorageError> {
        std::fs::create_dir_all(&dir).map_err(|source| StorageError::Io {
            file: dir.display().to_string(),
            source,
        })?;
        Ok(NodeStore::Disk {
            dir,
            handles: Rc::new(RefCell::new(HashMap::new())),
        })
    }

    pub fn append(&self, file: &str, data: &[u8]) -> Result<(), StorageError> {
        match self {
            NodeStore::Mem(map) => {
                map.borrow_mut().entry(file.to_string()).or_default().extend_from_slice(data);
                Ok(())
            }
            NodeStore::Disk { dir, handles } => {
                let mut handles = handles.borrow_mut();
                let f = match handles.entry(file.to_string()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let f = OpenOptions::new()
                            .create(true)
                            .append(true)
                            .open(dir.join(file))
                            .map_err(|source| StorageError::Io {
                                file: file.to_string(),
                                source,
                            })?;
                        e.insert(f)
                    }
                };
                f.write_all(data).map_err(|source| StorageError::Io {
                    file: file.to_string(),
                    source,
                })
            }
        }
    }

    /// Full contents of a file; empty if it does not exist.
    pub fn read_all(&self, file: &str) -> Result<Vec<u8>, StorageError> {
        match self {
            NodeStore::Mem(map) => Ok(map.borrow().get(file).cloned().unwrap_or_default()),
            NodeStore::Disk { dir, .. } => {
                let path = dir.join(file);
                if !path.exists() {
                    return Ok(Vec::new());
                }
                std::fs::read(&path).map_err(|source| StorageError::Io {
                    file: file.to_string(),
                    source,
                })
            }
        }
    }

    pub fn read_range(&self, file: &str, offset: u64, len: usize) -> Result<Vec<u8>, StorageError> {
        match self {
            NodeStore::Mem(map) => {
                let map = map.borrow();
                let data = map.get(file).map(|v| v.as_slice()).unwrap_or(&[]);
                let start = (offset as usize).min(data.len());
                let end = (start + len).min(data.len());
                Ok(data[start..end].to_vec())
            }
            NodeStore::Disk { dir, .. } => {
                let mut f = File::open(dir.join(file)).map_err(|source| StorageError::Io {
                    file: file.to_string(),
                    source,
                })?;
                f.seek(SeekFrom::Start(offset)).map_err(|source| StorageError::Io {
                    file: file.to_string(),
                    source,
                })?;
                let mut buf = vec![0u8; len];
                let mut read = 0;
                while read < len {
                    match f.read(&mut buf[read..]) {
                        Ok(0) => break,
                        Ok(n) => read += n,
                        Err(source) => {
                            return Err(StorageError::Io {
                                file: file.to_string(),
                                source,
                            })
                        }
                    }
                }
                buf.truncate(read);
                Ok(buf)
            }
        }
    }

    pub fn size(&self, file: &str) -> u64 {
        match self {
            NodeStore::Mem(map) => map.borrow().get(file).map(|v| v.len() as u64).unwrap_or(0),
            NodeStore::Disk { dir, .. } => std::fs::metadata(dir.join(file))
                .map(|m| m.len())
                .unwrap_or(0),
        }
    }
}

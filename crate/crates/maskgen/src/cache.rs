//! Content-addressed stage cache.
//!
//! An entry lives at `<root>/<stage>/<key>/` and is complete once it
//! contains the marker file. Entries are built in a private temporary
//! directory and renamed into place, so readers never observe a partial
//! entry. Builders of the same key serialize on an advisory file lock.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

const COMPLETE: &str = ".complete";

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub dir: PathBuf,
    pub hit: bool,
}

impl Cache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)
            .map_err(|e| HarnessError::Cache(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_dir(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(stage).join(key)
    }

    pub fn contains(&self, stage: &str, key: &str) -> bool {
        self.entry_dir(stage, key).join(COMPLETE).is_file()
    }

    /// Returns the entry for `(stage, key)`, running `build` on an empty
    /// directory first if the entry does not exist yet.
    pub fn get_or_build(&self, stage: &str, key: &str, build: impl FnOnce(&Path) -> Result<()>) -> Result<Entry> {
        let dir = self.entry_dir(stage, key);
        if self.contains(stage, key) {
            return Ok(Entry { dir, hit: true });
        }
        let stage_dir = self.root.join(stage);
        fs::create_dir_all(&stage_dir)?;
        let lock = File::create(stage_dir.join(format!("{key}.lock")))?;
        lock.lock()?;
        // another process may have finished while we waited
        if self.contains(stage, key) {
            return Ok(Entry { dir, hit: true });
        }
        let tmp = stage_dir.join(format!(".{key}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        if let Err(e) = build(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        File::create(tmp.join(COMPLETE))?.sync_all()?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)?;
        Ok(Entry { dir, hit: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn builds_once_then_hits() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = Cache::open(tmp.path()).unwrap();
        let e = cache
            .get_or_build("s", "k", |d| Ok(fs::write(d.join("x"), b"1")?))
            .unwrap();
        assert!(!e.hit);
        assert_eq!(fs::read(e.dir.join("x")).unwrap(), b"1");
        let again = cache.get_or_build("s", "k", |_| panic!("must not rebuild")).unwrap();
        assert!(again.hit);
    }

    #[test]
    fn failed_build_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = Cache::open(tmp.path()).unwrap();
        let r = cache.get_or_build("s", "k", |_| Err(HarnessError::Input("boom".into())));
        assert!(r.is_err());
        assert!(!cache.contains("s", "k"));
        let names: Vec<_> = fs::read_dir(tmp.path().join("s"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["k.lock".to_string()]);
    }

    #[test]
    fn concurrent_builders_serialize() {
        let tmp = tempfile::tempdir().unwrap();
        let builds = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let root = tmp.path().to_path_buf();
                let builds = builds.clone();
                std::thread::spawn(move || {
                    let cache = Cache::open(root).unwrap();
                    cache
                        .get_or_build("s", "k", |d| {
                            builds.fetch_add(1, Ordering::SeqCst);
                            std::thread::sleep(std::time::Duration::from_millis(20));
                            Ok(fs::write(d.join("x"), b"v")?)
                        })
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            let e = h.join().unwrap();
            assert_eq!(fs::read(e.dir.join("x")).unwrap(), b"v");
        }
        assert_eq!(builds.load(Ordering::SeqCst), 1);
    }
}

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use agentmesh_acl::frame::{encode_raw, split_frame};

use crate::StoreError;

/// An append-only file of length-prefixed frames.
pub(crate) struct FrameFile {
    path: PathBuf,
    file: File,
    len: u64,
    sync: bool,
}

/// Payloads of every complete frame in `path` with their offsets. A torn
/// final frame, left by a crash mid-append, is cut off the file when
/// `repair` is set and reported as corruption otherwise.
pub(crate) fn read_frames(path: &Path, repair: bool) -> Result<Vec<(u64, Vec<u8>)>, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        match split_frame(&bytes[pos..]) {
            Ok(Some((payload, used))) => {
                out.push((pos as u64, payload.to_vec()));
                pos += used;
            }
            Ok(None) | Err(_) => break,
        }
    }
    if pos < bytes.len() {
        if !repair {
            return Err(StoreError::Corrupt(format!("{} has a torn frame at byte {pos}", path.display())));
        }
        log::warn!("{}: dropping {} bytes of torn frame", path.display(), bytes.len() - pos);
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(pos as u64)?;
        f.sync_all()?;
    }
    Ok(out)
}

impl FrameFile {
    pub(crate) fn open(path: &Path, sync: bool) -> Result<FrameFile, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        Ok(FrameFile { path: path.to_path_buf(), file, len, sync })
    }

    pub(crate) fn len(&self) -> u64 {
        self.len
    }

    /// Appends one frame and returns its offset. With `sync` the frame is
    /// on stable storage when this returns.
    pub(crate) fn append(&mut self, payload: &[u8]) -> Result<u64, StoreError> {
        let frame = encode_raw(payload).map_err(|e| StoreError::Integrity(e.to_string()))?;
        let offset = self.len;
        self.file.write_all(&frame)?;
        self.len += frame.len() as u64;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(offset)
    }

    /// Appends several frames with a single sync.
    pub(crate) fn append_all<'a>(&mut self, payloads: impl IntoIterator<Item = &'a [u8]>) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        for p in payloads {
            buf.extend(encode_raw(p).map_err(|e| StoreError::Integrity(e.to_string()))?);
        }
        if buf.is_empty() {
            return Ok(());
        }
        self.file.write_all(&buf)?;
        self.len += buf.len() as u64;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    /// Replaces the file's contents with `payloads`, atomically.
    pub(crate) fn rewrite<'a>(&mut self, payloads: impl IntoIterator<Item = &'a [u8]>) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            for p in payloads {
                f.write_all(&encode_raw(p).map_err(|e| StoreError::Integrity(e.to_string()))?)?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        sync_dir(&self.path);
        *self = FrameFile::open(&self.path, self.sync)?;
        Ok(())
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &[u8], sync: bool) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)?;
    if sync {
        sync_dir(path);
    }
    Ok(())
}

fn sync_dir(path: &Path) {
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.log");
        let mut f = FrameFile::open(&path, false).unwrap();
        assert_eq!(f.append(b"one").unwrap(), 0);
        assert_eq!(f.append(b"two").unwrap(), 7);
        f.append_all([b"a".as_slice(), b"bc".as_slice()]).unwrap();
        let frames = read_frames(&path, false).unwrap();
        let payloads: Vec<_> = frames.iter().map(|(_, p)| p.as_slice()).collect();
        assert_eq!(payloads, [b"one".as_slice(), b"two", b"a", b"bc"]);
        assert_eq!(frames[1].0, 7);
    }

    #[test]
    fn torn_tail_is_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.log");
        let mut f = FrameFile::open(&path, false).unwrap();
        f.append(b"kept").unwrap();
        drop(f);
        let mut raw = OpenOptions::new().append(true).open(&path).unwrap();
        raw.write_all(&[0, 0, 0, 9, b'p']).unwrap();
        drop(raw);
        assert!(read_frames(&path, false).is_err());
        assert_eq!(read_frames(&path, true).unwrap().len(), 1);
        assert_eq!(fs::metadata(&path).unwrap().len(), 8);
    }

    #[test]
    fn rewrite_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.log");
        let mut f = FrameFile::open(&path, false).unwrap();
        f.append(b"old").unwrap();
        f.rewrite([b"new".as_slice()]).unwrap();
        f.append(b"more").unwrap();
        let payloads: Vec<_> = read_frames(&path, false).unwrap().into_iter().map(|(_, p)| p).collect();
        assert_eq!(payloads, [b"new".to_vec(), b"more".to_vec()]);
    }

    #[test]
    fn missing_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_frames(&dir.path().join("none.log"), false).unwrap().is_empty());
    }
}

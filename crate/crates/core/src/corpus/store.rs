use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Content-addressed image directory: `images/<first 2 hex>/<sha256>.<ext>`.
#[derive(Clone, Debug)]
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Relative path with `/` separators, as recorded in the manifest.
    pub fn relative_path(content_hash: &str, ext: &str) -> String {
        format!("images/{}/{}.{}", &content_hash[..2], content_hash, ext)
    }

    pub fn absolute(&self, relative: &str) -> PathBuf {
        relative.split('/').fold(self.root.clone(), |p, part| p.join(part))
    }

    /// Writes the bytes unless a file already exists at the address.
    pub fn put(&self, content_hash: &str, ext: &str, bytes: &[u8]) -> io::Result<String> {
        let rel = Self::relative_path(content_hash, ext);
        let path = self.absolute(&rel);
        if !path.is_file() {
            fs::create_dir_all(path.parent().expect("image path has parent"))?;
            let tmp = path.with_extension("partial");
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(rel)
    }

    pub fn read(&self, relative: &str) -> io::Result<Vec<u8>> {
        fs::read(self.absolute(relative))
    }
}

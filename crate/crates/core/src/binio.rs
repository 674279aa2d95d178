//! Little-endian helpers shared by the model file formats.

use std::io::{self, Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl FileError {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        FileError::Format(msg.into())
    }
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> io::Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reader that turns short reads into `FileError::Format("truncated ...")`.
pub(crate) struct LeReader<R> {
    inner: R,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner }
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<(), FileError> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                FileError::format(format!("truncated file while reading {what}"))
            } else {
                FileError::Io(e)
            }
        })
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8]) -> Result<(), FileError> {
        let mut buf = vec![0u8; magic.len()];
        self.fill(&mut buf, "magic")?;
        if buf != magic {
            return Err(FileError::format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&buf)
            )));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32, FileError> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64, FileError> {
        let mut b = [0u8; 8];
        self.fill(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>, FileError> {
        let mut buf = vec![0u8; n];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FileError> {
        let raw = self.bytes(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Errors unless the stream is exhausted.
    pub(crate) fn expect_eof(&mut self) -> Result<(), FileError> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(FileError::format("trailing bytes after payload")),
        }
    }
}

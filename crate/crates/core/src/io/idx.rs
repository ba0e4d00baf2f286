//! IDX (MNIST distribution format) reader.

use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};

use crate::engine::Tensor;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images `[N, 1, rows, cols]` scaled to `[0, 1]` with their labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub split: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// The first `n` examples.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        Dataset {
            images: self.images.gather(&idx),
            labels: self.labels[..n].to_vec(),
            split: self.split.clone(),
        }
    }

    /// Images and labels at `idx`.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        (self.images.gather(idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

struct Reader<'a> {
    path: &'a Path,
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Idx {
            path: self.path.to_path_buf(),
            offset: self.cur.position(),
            msg: msg.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let at = self.cur.position();
        self.cur.read_u32::<BigEndian>().map_err(|_| Error::Idx {
            path: self.path.to_path_buf(),
            offset: at,
            msg: format!("truncated while reading {what}"),
        })
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let at = self.cur.position();
        let available = self.cur.get_ref().len() as u64 - at;
        if (n as u64) > available {
            return Err(Error::Idx {
                path: self.path.to_path_buf(),
                offset: at + available,
                msg: format!("truncated {what}: expected {n} bytes, found {available}"),
            });
        }
        let mut buf = vec![0; n];
        self.cur.read_exact(&mut buf)?;
        Ok(buf)
    }
}

fn header(r: &mut Reader<'_>, magic: u32, ndim: usize) -> Result<Vec<usize>> {
    let found = r.u32("magic number")?;
    if found != magic {
        return Err(Error::Idx {
            path: r.path.to_path_buf(),
            offset: 0,
            msg: format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    (0..ndim)
        .map(|i| Ok(r.u32(&format!("dimension {i}"))? as usize))
        .collect()
}

/// Parses an image file: returns `(count, rows, cols, pixels)`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = Reader {
        path,
        cur: Cursor::new(bytes),
    };
    let dims = header(&mut r, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = r.bytes(n * rows * cols, "pixel data")?;
    if r.cur.position() != bytes.len() as u64 {
        return Err(r.err("trailing bytes after pixel data"));
    }
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader {
        path,
        cur: Cursor::new(bytes),
    };
    let n = header(&mut r, LABELS_MAGIC, 1)?[0];
    let labels = r.bytes(n, "label data")?;
    if r.cur.position() != bytes.len() as u64 {
        return Err(r.err("trailing bytes after label data"));
    }
    Ok(labels)
}

pub fn load_idx(images: &Path, labels: &Path, split: &str) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_images(images, &super::read_file(images)?)?;
    let raw_labels = parse_labels(labels, &super::read_file(labels)?)?;
    if raw_labels.len() != n {
        return Err(Error::Idx {
            path: labels.to_path_buf(),
            offset: 4,
            msg: format!("{} labels for {n} images", raw_labels.len()),
        });
    }
    let data: Vec<f32> = pixels.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(Dataset {
        images: Tensor::new(vec![n, 1, rows, cols], data)?,
        labels: raw_labels.into_iter().map(usize::from).collect(),
        split: split.to_string(),
    })
}

/// Standard file names of the two MNIST splits inside `dir`.
pub fn mnist_paths(dir: &Path, split: &str) -> Result<(PathBuf, PathBuf)> {
    let prefix = match split {
        "train" => "train",
        "test" => "t10k",
        other => return Err(Error::InvalidArgument(format!("unknown MNIST split '{other}'"))),
    };
    Ok((
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    ))
}

pub fn load_mnist(dir: &Path, split: &str) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split)?;
    load_idx(&images, &labels, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, n, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        b
    }

    #[test]
    fn parses_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, image_file(2, 2, 3, 255)).unwrap();
        let mut lab = LABELS_MAGIC.to_be_bytes().to_vec();
        lab.extend(2u32.to_be_bytes());
        lab.extend([7, 3]);
        std::fs::write(&lp, lab).unwrap();
        let ds = load_idx(&ip, &lp, "train").unwrap();
        assert_eq!(ds.images.shape(), &[2, 1, 2, 3]);
        assert!(ds.images.data().iter().all(|&v| v == 1.0));
        assert_eq!(ds.labels, vec![7, 3]);
    }

    #[test]
    fn truncation_reports_offset() {
        let mut b = image_file(2, 2, 2, 1);
        b.truncate(16 + 5);
        let err = parse_images(Path::new("x"), &b).unwrap_err();
        match err {
            Error::Idx { offset, msg, .. } => {
                assert_eq!(offset, 21);
                assert!(msg.contains("truncated"), "{msg}");
            }
            e => panic!("{e}"),
        }
        let err = parse_images(Path::new("x"), &b[..6]).unwrap_err();
        assert!(matches!(err, Error::Idx { offset: 4, .. }));
    }

    #[test]
    fn bad_magic() {
        let mut b = image_file(1, 1, 1, 0);
        b[3] = 0x01;
        assert!(matches!(
            parse_images(Path::new("x"), &b),
            Err(Error::Idx { offset: 0, .. })
        ));
    }
}

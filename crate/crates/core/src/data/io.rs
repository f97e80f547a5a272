//! Dataset file format: little-endian `"DISP"`, `u32` version, `u32` n,
//! `u32` p, `u8` has_labels, `n·p` `f32` row-major values, then `n` `u32`
//! labels when present.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DISP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 17;

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let (n, p) = (d.len(), d.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + n * p * 4 + n * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(p as u32).to_le_bytes());
    out.push(u8::from(d.labels.is_some()));
    for v in d.x.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    if let Some(labels) = &d.labels {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format { offset, msg: format!("truncated: need 4 bytes, file has {}", bytes.len()) })
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 {
        return Err(Error::Format { offset: 0, msg: format!("file too short ({} bytes)", bytes.len()) });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic {:?}", &bytes[..4]) });
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Format { offset: 4, msg: format!("unsupported version {version}") });
    }
    let n = read_u32(bytes, 8)? as usize;
    let p = read_u32(bytes, 12)? as usize;
    let has_labels = *bytes
        .get(16)
        .ok_or_else(|| Error::Format { offset: 16, msg: "truncated before label flag".into() })?;
    if has_labels > 1 {
        return Err(Error::Format { offset: 16, msg: format!("label flag must be 0 or 1, got {has_labels}") });
    }
    let values_end = HEADER_LEN + n * p * 4;
    let end = values_end + if has_labels == 1 { n * 4 } else { 0 };
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("truncated payload: expected {end} bytes, found {}", bytes.len()),
        });
    }
    if bytes.len() > end {
        return Err(Error::Format { offset: end, msg: "trailing bytes after payload".into() });
    }
    let data: Vec<f64> = bytes[HEADER_LEN..values_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels = (has_labels == 1).then(|| {
        bytes[values_end..end].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()
    });
    let x = if n == 0 { Tensor::zeros(&[0, p.max(1)]) } else { Tensor::matrix(n, p, data)? };
    Dataset::new(x, labels, Split::Unspecified)
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(d))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

/// CSV with header `x0,x1[,label]`.
pub fn write_csv(path: &Path, d: &Dataset) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let mut header: Vec<String> = (0..d.dim()).map(|i| format!("x{i}")).collect();
    if d.labels.is_some() {
        header.push("label".into());
    }
    writeln!(f, "{}", header.join(","))?;
    for (i, row) in d.x.iter_rows().enumerate().take(d.len()) {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = &d.labels {
            cells.push(l[i].to_string());
        }
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| invalid("empty CSV"))?.split(',').map(str::trim).collect();
    let has_labels = header.last() == Some(&"label");
    let p = header.len() - usize::from(has_labels);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(invalid(format!("line {}: expected {} cells, got {}", ln + 2, header.len(), cells.len())));
        }
        for c in &cells[..p] {
            data.push(c.parse::<f64>().map_err(|e| invalid(format!("line {}: {e}", ln + 2)))?);
        }
        if has_labels {
            labels.push(cells[p].parse::<u32>().map_err(|e| invalid(format!("line {}: {e}", ln + 2)))?);
        }
    }
    let n = data.len() / p.max(1);
    Dataset::new(Tensor::matrix(n, p, data)?, has_labels.then_some(labels), Split::Unspecified)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_ring;

    #[test]
    fn write_then_read_is_identity() {
        let d = make_ring(40, 4, 0.5, 0.1, 0.0, 3).unwrap();
        let bytes = encode_dataset(&d);
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(encode_dataset(&back), bytes);
        assert_eq!(back.labels, d.labels);
        for (a, b) in back.x.data().iter().zip(d.x.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn corrupt_magic_and_truncation_report_offsets() {
        let d = make_ring(5, 2, 0.5, 0.1, 0.0, 3).unwrap();
        let mut bytes = encode_dataset(&d);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_dataset(truncated), Err(Error::Format { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_dataset(&[]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn empty_payload_is_valid() {
        let d = Dataset::new(Tensor::zeros(&[0, 2]), None, Split::Unspecified).unwrap();
        let back = decode_dataset(&encode_dataset(&d)).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 2);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ring.csv");
        let d = make_ring(12, 3, 0.5, 0.1, 0.0, 3).unwrap();
        write_csv(&path, &d).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.labels, d.labels);
    }
}

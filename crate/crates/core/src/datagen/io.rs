//! Dataset files.
//!
//! Layout (little-endian): magic `DBPMDATA`, `u32` version, `u32` N, C, K,
//! `u32` class count, then `N*C*K` `f32` values, `N` `i32` labels and `N`
//! `u8` pair-type codes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{DataError, LabeledDataset, PairType, Result, Split};

pub const DATASET_MAGIC: &[u8; 8] = b"DBPMDATA";
pub const DATASET_VERSION: u32 = 1;

// 2^32 values is 16 GiB of f32; anything beyond is a corrupt header
const MAX_VALUES: u64 = 1 << 32;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| DataError::Format(format!("{what} = {v} does not fit the header")))
}

pub fn write_dataset<W: Write>(mut out: W, ds: &LabeledDataset) -> Result<()> {
    ds.validate()?;
    out.write_all(DATASET_MAGIC)?;
    out.write_u32::<LittleEndian>(DATASET_VERSION)?;
    for (v, what) in [(ds.len(), "N"), (ds.channels, "C"), (ds.length, "K"), (ds.num_classes, "classes")] {
        out.write_u32::<LittleEndian>(to_u32(v, what)?)?;
    }
    for &v in &ds.values {
        out.write_f32::<LittleEndian>(v)?;
    }
    for &l in &ds.labels {
        out.write_i32::<LittleEndian>(i32::try_from(l).map_err(|_| DataError::Format(format!("label {l} too large")))?)?;
    }
    for p in &ds.pair_types {
        out.write_u8(p.code())?;
    }
    out.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> DataError {
    if e.kind() == ErrorKind::UnexpectedEof {
        DataError::Format("truncated file".into())
    } else {
        DataError::Io(e)
    }
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<LabeledDataset> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != DATASET_MAGIC {
        return Err(DataError::Format("bad magic".into()));
    }
    let version = input.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != DATASET_VERSION {
        return Err(DataError::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0u32; 4];
    for d in &mut dims {
        *d = input.read_u32::<LittleEndian>().map_err(truncated)?;
    }
    let [n, c, k, classes] = dims.map(|d| d as usize);
    let total = (n as u64).checked_mul(c as u64).and_then(|v| v.checked_mul(k as u64));
    match total {
        Some(t) if t <= MAX_VALUES => {}
        _ => return Err(DataError::Format(format!("dimension overflow: {n} x {c} x {k}"))),
    }
    let total = n * c * k;
    // grow with the data rather than trusting the header for allocation
    let mut values = Vec::with_capacity(total.min(1 << 20));
    for _ in 0..total {
        values.push(input.read_f32::<LittleEndian>().map_err(truncated)?);
    }
    let mut labels = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let l = input.read_i32::<LittleEndian>().map_err(truncated)?;
        labels.push(usize::try_from(l).map_err(|_| DataError::Format(format!("negative label {l}")))?);
    }
    let mut pair_types = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let code = input.read_u8().map_err(truncated)?;
        pair_types.push(PairType::from_code(code).ok_or_else(|| DataError::Format(format!("unknown pair type {code}")))?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(DataError::Format("trailing bytes after dataset".into()));
    }
    let ds = LabeledDataset { channels: c, length: k, num_classes: classes, values, labels, pair_types, split: Split::All };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Single-channel CSV: one instance per row, class label in the last column.
///
/// Labels may be any integers (written as `3` or `3.0`); they are mapped to
/// `0..classes` in ascending order. A first row whose label does not parse
/// is treated as a header. Every instance is tagged normal.
pub fn import_csv<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut length = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(DataError::Format(format!("row {} needs at least one value and a label", row + 1)));
        }
        let label_field = &record[record.len() - 1];
        let label = match label_field.parse::<f64>() {
            Ok(l) if l.fract() == 0.0 && l.abs() < 1e9 => l as i64,
            _ if row == 0 => continue,
            _ => return Err(DataError::Format(format!("row {}: label {label_field:?} is not an integer", row + 1))),
        };
        let k = record.len() - 1;
        if *length.get_or_insert(k) != k {
            return Err(DataError::Format(format!("row {} has {k} values, expected {}", row + 1, length.unwrap_or(0))));
        }
        for field in record.iter().take(k) {
            let v: f32 = field.parse().map_err(|_| DataError::Format(format!("row {}: bad value {field:?}", row + 1)))?;
            values.push(v);
        }
        raw_labels.push(label);
    }
    let length = length.ok_or_else(|| DataError::Format("no data rows".into()))?;
    let classes: BTreeMap<i64, usize> = {
        let mut distinct: Vec<i64> = raw_labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let n = raw_labels.len();
    let ds = LabeledDataset {
        channels: 1,
        length,
        num_classes: classes.len(),
        values,
        labels: raw_labels.iter().map(|l| classes[l]).collect(),
        pair_types: vec![PairType::Normal; n],
        split: Split::All,
    };
    ds.validate()?;
    Ok(ds)
}

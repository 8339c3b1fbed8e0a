//! Item vector files.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "OSV1" | n: u32 | d: u32 | n x ( item_id: u64 | d x f32 )
//! ```
//!
//! The CSV alternative has the header `item_id,x0,...,x{d-1}` and one item per row.
//! Embeddings are re-validated on load: vectors within 1e-6 of unit norm are
//! re-normalized, anything further off is rejected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{Item, ItemId, ItemUniverse, UnitVector, INGEST_TOLERANCE};

pub const VECTOR_MAGIC: &[u8; 4] = b"OSV1";

fn ingest(id: ItemId, coords: &[f64]) -> Result<Item> {
    let embedding = UnitVector::with_tolerance(coords, INGEST_TOLERANCE)
        .map_err(|e| Error::malformed(format!("item {id}: {e}")))?;
    Ok(Item { id, embedding })
}

pub fn decode_items(bytes: &[u8]) -> Result<ItemUniverse> {
    let mut r = Reader::new(bytes);
    r.magic(VECTOR_MAGIC)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    if d < 2 {
        return Err(Error::malformed(format!("header dimension {d} is below 2")));
    }
    let record = 8 + 4 * d;
    let left = bytes.len() - 12;
    if n.saturating_mul(record) > left {
        return Err(Error::malformed(format!(
            "truncated payload: header promises {n} records of {record} bytes, found {left} bytes"
        )));
    }
    let mut items = Vec::with_capacity(n);
    let mut coords = vec![0.0f64; d];
    for _ in 0..n {
        let id = ItemId(r.u64()?);
        for c in coords.iter_mut() {
            *c = r.f32()? as f64;
        }
        items.push(ingest(id, &coords)?);
    }
    r.finish()?;
    ItemUniverse::new(d, items)
}

/// Parse a vector file from any byte stream.
pub fn load_items<R: Read>(mut source: R) -> Result<ItemUniverse> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_items(&bytes)
}

pub fn encode_items(universe: &ItemUniverse) -> Result<Vec<u8>> {
    let n = u32::try_from(universe.len()).map_err(|_| Error::param("too many items for OSV1"))?;
    let mut w = Writer::new();
    w.bytes(VECTOR_MAGIC);
    w.u32(n);
    w.u32(universe.dim() as u32);
    for item in universe.items() {
        w.u64(item.id.0);
        for &x in item.embedding.as_slice() {
            w.f32(x as f32);
        }
    }
    Ok(w.finish())
}

pub fn load_items_csv<R: Read>(source: R) -> Result<ItemUniverse> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("item_id") {
        return Err(Error::malformed("CSV header must start with item_id"));
    }
    let d = headers.len() - 1;
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("x{j}") {
            return Err(Error::malformed(format!(
                "CSV column {} must be x{j}, found {h}",
                j + 1
            )));
        }
    }
    let mut items = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::malformed(format!("bad number {s:?}: {e}")))
        };
        let id = row[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::malformed(format!("bad item id {:?}: {e}", &row[0])))?;
        let coords = row.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        items.push(ingest(ItemId(id), &coords)?);
    }
    ItemUniverse::new(d, items)
}

pub fn write_items_csv<W: Write>(universe: &ItemUniverse, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["item_id".to_string()];
    header.extend((0..universe.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for item in universe.items() {
        let mut row = vec![item.id.to_string()];
        row.extend(item.embedding.as_slice().iter().map(|x| format!("{x:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a vector file, choosing CSV when the extension is `.csv`.
pub fn read_path(path: &Path) -> Result<ItemUniverse> {
    let file = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        load_items_csv(file)
    } else {
        load_items(file)
    }
}

pub fn write_path(universe: &ItemUniverse, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_items_csv(universe, BufWriter::new(File::create(path)?))
    } else {
        std::fs::write(path, encode_items(universe)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(n: u32, d: u32) -> Vec<u8> {
        let mut b = VECTOR_MAGIC.to_vec();
        b.extend(n.to_le_bytes());
        b.extend(d.to_le_bytes());
        b
    }

    fn record(b: &mut Vec<u8>, id: u64, xs: &[f32]) {
        b.extend(id.to_le_bytes());
        for x in xs {
            b.extend(x.to_le_bytes());
        }
    }

    #[test]
    fn parses_two_items() {
        let mut b = header(2, 2);
        record(&mut b, 10, &[1.0, 0.0]);
        record(&mut b, 11, &[0.0, 1.0]);
        let u = decode_items(&b).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(u.embedding(ItemId(11)).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn empty_universe_is_valid() {
        let u = decode_items(&header(0, 2)).unwrap();
        assert!(u.is_empty());
    }

    #[test]
    fn rejects_nan_truncation_and_bad_magic() {
        let mut b = header(1, 2);
        record(&mut b, 1, &[f32::NAN, 1.0]);
        assert!(matches!(decode_items(&b), Err(Error::Malformed(_))));

        let mut b = header(2, 2);
        record(&mut b, 1, &[1.0, 0.0]);
        assert!(matches!(decode_items(&b), Err(Error::Malformed(_))));

        let mut b = header(1, 2);
        record(&mut b, 1, &[1.0, 0.0]);
        b[0] = b'X';
        assert!(matches!(decode_items(&b), Err(Error::Version(_))));

        assert!(decode_items(b"OSV").is_err());
    }

    #[test]
    fn renormalizes_within_tolerance_and_rejects_beyond() {
        let mut b = header(1, 2);
        record(&mut b, 1, &[1.0 + 4e-7, 0.0]);
        let u = decode_items(&b).unwrap();
        assert_eq!(u.embedding(ItemId(1)).unwrap().as_slice(), &[1.0, 0.0]);

        let mut b = header(1, 2);
        record(&mut b, 1, &[0.5, 0.0]);
        assert!(decode_items(&b).is_err());
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let mut b = header(3, 3);
        record(&mut b, 5, &[0.6, 0.8, 0.0]);
        record(&mut b, 7, &[0.0, 0.0, 1.0]);
        record(&mut b, 9, &[0.0, -1.0, 0.0]);
        let u = decode_items(&b).unwrap();
        assert_eq!(encode_items(&u).unwrap(), b);

        let mut text = Vec::new();
        write_items_csv(&u, &mut text).unwrap();
        assert!(text.starts_with(b"item_id,x0,x1,x2\n"));
        let back = load_items_csv(text.as_slice()).unwrap();
        assert_eq!(back.items(), u.items());
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let text = "id,x0,x1\n1,1,0\n";
        assert!(load_items_csv(text.as_bytes()).is_err());
    }
}

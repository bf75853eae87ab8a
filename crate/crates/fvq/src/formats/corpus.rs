//! Corpus files: magic `FVQ1`, then `u32` set count, `u32` d, `u32` class
//! count; per set a `u32` id length, the UTF-8 id, `u32` label, `u32` row
//! count, and `rows·d` `f32` values row-major. Little-endian, no padding.

use std::path::Path;

use fvq_core::{Corpus, DescriptorSet, Split};

use super::{put_f32s, put_u32, read_file, to_u32, write_file, FormatError, Reader, Result};

pub const MAGIC: &[u8; 4] = b"FVQ1";

pub fn encode_corpus(corpus: &Corpus) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + corpus.num_descriptors() * corpus.dim() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, to_u32(corpus.len(), "set count")?);
    put_u32(&mut out, to_u32(corpus.dim(), "descriptor width")?);
    put_u32(&mut out, corpus.num_classes());
    for set in corpus.sets() {
        if let Some(index) = set.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(fvq_core::Error::NonFinite { index }.into());
        }
        put_u32(&mut out, to_u32(set.set_id().len(), "set id length")?);
        out.extend_from_slice(set.set_id().as_bytes());
        put_u32(&mut out, set.label());
        put_u32(&mut out, to_u32(set.len(), "descriptor count")?);
        put_f32s(&mut out, set.as_slice());
    }
    Ok(out)
}

pub fn decode_corpus(bytes: &[u8], split: Split) -> Result<Corpus> {
    let mut r = Reader::new(bytes);
    if r.take(4, "header")? != MAGIC {
        return Err(FormatError::BadMagic { expected: "FVQ1" });
    }
    let num_sets = r.u32("header")? as usize;
    let dim = r.u32("header")? as usize;
    let num_classes = r.u32("header")?;
    if dim == 0 {
        return Err(FormatError::Malformed("descriptor width is zero".into()));
    }
    let mut sets = Vec::with_capacity(num_sets.min(1 << 16));
    for _ in 0..num_sets {
        let id_len = r.u32("record")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "record")?)
            .map_err(|_| FormatError::Malformed("set id is not UTF-8".into()))?
            .to_owned();
        let label = r.u32("record")?;
        let rows = r.u32("record")? as usize;
        if rows == 0 {
            return Err(FormatError::Malformed(format!("set {id:?} has no descriptors")));
        }
        let data = r.f32s(rows * dim, "record")?;
        sets.push(DescriptorSet::new(id, label, dim, data)?);
    }
    if r.remaining() > 0 {
        return Err(FormatError::TrailingBytes(r.remaining()));
    }
    Ok(Corpus::new(sets, dim, num_classes, split)?)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let bytes = encode_corpus(corpus)?;
    write_file(path, &bytes)
}

pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    decode_corpus(&read_file(path)?, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_set_bytes(dim: u32, values: &[f32]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        for v in [1u32, dim, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&1u32.to_le_bytes());
        b.push(b'a');
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_minimal_file() {
        let c = decode_corpus(&one_set_bytes(2, &[0.5, -1.0]), Split::Train).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sets()[0].row(0), &[0.5, -1.0]);
        assert_eq!(c.sets()[0].label(), 0);
        assert_eq!(encode_corpus(&c).unwrap(), one_set_bytes(2, &[0.5, -1.0]));
    }

    #[test]
    fn short_record_is_truncated() {
        let err = decode_corpus(&one_set_bytes(3, &[0.5, -1.0]), Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "truncated record");
    }

    #[test]
    fn rejects_nan_bad_label_and_magic() {
        assert!(matches!(
            decode_corpus(&one_set_bytes(2, &[f32::NAN, 1.0]), Split::Train),
            Err(FormatError::Core(fvq_core::Error::NonFinite { .. }))
        ));
        let mut b = one_set_bytes(2, &[1.0, 1.0]);
        b[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_corpus(&b, Split::Train),
            Err(FormatError::Core(fvq_core::Error::LabelOutOfRange { .. }))
        ));
        let mut b = one_set_bytes(2, &[1.0, 1.0]);
        b[0] = b'X';
        assert!(matches!(decode_corpus(&b, Split::Train), Err(FormatError::BadMagic { .. })));
        assert!(matches!(decode_corpus(&b[..10], Split::Train), Err(FormatError::BadMagic { .. } | FormatError::Truncated(_))));
        let mut b = one_set_bytes(2, &[1.0, 1.0]);
        b.push(0);
        assert!(matches!(decode_corpus(&b, Split::Train), Err(FormatError::TrailingBytes(1))));
    }
}

//! Dataset file: `MSD1`, u64 LE record count, then per record a u16 LE
//! period, 512 bytes of MSB-first packed shape bits and 58 f32 LE
//! transmittances (TE then TM).

use std::fs;
use std::path::Path;

use crate::datagen::{DeviceRecord, Period, ShapeImage, Spectrum, IMAGE_PIXELS, SPECTRUM_LEN};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"MSD1";
const SHAPE_BYTES: usize = IMAGE_PIXELS / 8;
pub const RECORD_BYTES: usize = 2 + SHAPE_BYTES + 4 * SPECTRUM_LEN;

pub fn encode_dataset(records: &[DeviceRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + records.len() * RECORD_BYTES);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (index, rec) in records.iter().enumerate() {
        if !rec.shape.is_binary() {
            return Err(Error::Record { index, message: "shape is not binary".into() });
        }
        out.extend_from_slice(&rec.period.nm().to_le_bytes());
        let mut bits = [0u8; SHAPE_BYTES];
        for (p, &v) in rec.shape.pixels().iter().enumerate() {
            if v == 1.0 {
                bits[p / 8] |= 0x80 >> (p % 8);
            }
        }
        out.extend_from_slice(&bits);
        for &t in rec.spectrum.values() {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<DeviceRecord>> {
    if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad magic, expected MSD1".into() });
    }
    let count = bytes
        .get(4..12)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or(Error::Format { offset: 4, message: "truncated record count".into() })?;
    let needed = (count as u128) * RECORD_BYTES as u128 + 12;
    if (bytes.len() as u128) < needed {
        let index = (bytes.len() - 12) / RECORD_BYTES;
        return Err(Error::Format {
            offset: (12 + index * RECORD_BYTES) as u64,
            message: format!("truncated at record {index} of {count}"),
        });
    }
    if (bytes.len() as u128) > needed {
        return Err(Error::Format { offset: needed as u64, message: "trailing bytes after last record".into() });
    }
    let mut records = Vec::with_capacity(count as usize);
    for index in 0..count as usize {
        let rec = &bytes[12 + index * RECORD_BYTES..][..RECORD_BYTES];
        let period = Period::new(u16::from_le_bytes([rec[0], rec[1]]))
            .map_err(|e| Error::Record { index, message: e.to_string() })?;
        let pixels: Vec<f32> = (0..IMAGE_PIXELS)
            .map(|p| if rec[2 + p / 8] & (0x80 >> (p % 8)) != 0 { 1.0 } else { 0.0 })
            .collect();
        let shape = ShapeImage::new(pixels).expect("bits decode to binary pixels");
        let values: Vec<f32> = rec[2 + SHAPE_BYTES..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let spectrum = Spectrum::new(&values).map_err(|e| Error::Record { index, message: e.to_string() })?;
        records.push(DeviceRecord { shape, period, spectrum });
    }
    Ok(records)
}

pub fn save_dataset(records: &[DeviceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(records)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DeviceRecord>> {
    let path = path.as_ref();
    decode_dataset(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_dataset;

    #[test]
    fn layout_is_exact() {
        let recs = generate_dataset(3, 1).unwrap();
        let bytes = encode_dataset(&recs).unwrap();
        assert_eq!(bytes.len(), 12 + 3 * RECORD_BYTES);
        assert_eq!(&bytes[4..12], &3u64.to_le_bytes());
        assert_eq!(u16::from_le_bytes([bytes[12], bytes[13]]), recs[0].period.nm());
        // first pixel is the MSB of the first shape byte
        assert_eq!(bytes[14] >> 7, recs[0].shape.pixels()[0] as u8);
        assert_eq!(decode_dataset(&bytes).unwrap(), recs);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let recs = generate_dataset(4, 2).unwrap();
        let mut bytes = encode_dataset(&recs).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));

        // spectrum value 1.5 in record 2
        let off = 12 + 2 * RECORD_BYTES + 2 + SHAPE_BYTES + 4 * 7;
        bytes[off..off + 4].copy_from_slice(&1.5f32.to_le_bytes());
        match decode_dataset(&bytes) {
            Err(Error::Record { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }

        let mut bytes = encode_dataset(&recs).unwrap();
        let off = 12 + RECORD_BYTES;
        bytes[off..off + 2].copy_from_slice(&450u16.to_le_bytes());
        assert!(matches!(decode_dataset(&bytes), Err(Error::Record { index: 1, .. })));
    }
}

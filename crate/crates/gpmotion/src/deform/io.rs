//! Raw field-file format: little-endian `f32`, header `H u16, W u16, T u16`,
//! then `T·H·W·2` values with the displacement component varying fastest.

use std::io::{Read, Write};

use super::{DeformError, DeformationField};

/// Serializes a deformation sequence.
pub fn write_fields(out: &mut impl Write, fields: &[DeformationField]) -> Result<(), DeformError> {
    if fields.is_empty() {
        return Err(DeformError::Format("cannot write an empty field sequence".into()));
    }
    let (h, w) = fields[0].extents();
    if h > u16::MAX as usize || w > u16::MAX as usize || fields.len() > u16::MAX as usize {
        return Err(DeformError::Format("extent exceeds u16 header range".into()));
    }
    out.write_all(&(h as u16).to_le_bytes())?;
    out.write_all(&(w as u16).to_le_bytes())?;
    out.write_all(&(fields.len() as u16).to_le_bytes())?;
    let plane = h * w;
    for f in fields {
        if f.extents() != (h, w) {
            return Err(DeformError::GridMismatch {
                context: "write_fields",
                a: vec![h, w],
                b: vec![f.extents().0, f.extents().1],
            });
        }
        let d = f.displacement().data();
        for p in 0..plane {
            out.write_all(&(d[p] as f32).to_le_bytes())?;
            out.write_all(&(d[plane + p] as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a deformation sequence written by [`write_fields`].
pub fn read_fields(input: &mut impl Read) -> Result<Vec<DeformationField>, DeformError> {
    let mut hdr = [0u8; 6];
    input
        .read_exact(&mut hdr)
        .map_err(|_| DeformError::Format("truncated header".into()))?;
    let h = u16::from_le_bytes([hdr[0], hdr[1]]) as usize;
    let w = u16::from_le_bytes([hdr[2], hdr[3]]) as usize;
    let t = u16::from_le_bytes([hdr[4], hdr[5]]) as usize;
    let plane = h * w;
    let mut buf = vec![0u8; plane * 2 * 4];
    let mut fields = Vec::with_capacity(t);
    for _ in 0..t {
        input
            .read_exact(&mut buf)
            .map_err(|_| DeformError::Format("truncated field data".into()))?;
        let mut field = DeformationField::identity(h, w);
        for p in 0..plane {
            let uy = f32::from_le_bytes(buf[8 * p..8 * p + 4].try_into().unwrap()) as f64;
            let ux = f32::from_le_bytes(buf[8 * p + 4..8 * p + 8].try_into().unwrap()) as f64;
            field.displacement_mut().data_mut()[p] = uy;
            field.displacement_mut().data_mut()[plane + p] = ux;
        }
        fields.push(field);
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let mut fields = Vec::new();
        for t in 0..3 {
            let mut f = DeformationField::identity(5, 4);
            for i in 0..5 {
                for j in 0..4 {
                    f.displacement_mut().set(&[0, i, j], (t * 20 + i * 4 + j) as f64 * 0.125);
                    f.displacement_mut().set(&[1, i, j], -((i + j) as f64) * 0.25);
                }
            }
            fields.push(f);
        }
        let mut buf = Vec::new();
        write_fields(&mut buf, &fields).unwrap();
        assert_eq!(buf.len(), 6 + 3 * 5 * 4 * 2 * 4);
        let back = read_fields(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&fields) {
            assert_eq!(a.displacement().data(), b.displacement().data());
        }
    }

    #[test]
    fn truncated_file_is_a_distinct_error() {
        let mut fields = vec![DeformationField::identity(4, 4)];
        fields[0].displacement_mut().set(&[0, 1, 1], 1.0);
        let mut buf = Vec::new();
        write_fields(&mut buf, &fields).unwrap();
        buf.truncate(buf.len() - 3);
        let err = read_fields(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, DeformError::Format(_)));
    }
}

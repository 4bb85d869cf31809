use std::io::{Read, Write};

use super::IoError;

pub fn write_u32(w: &mut impl Write, v: u32) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f32s(w: &mut impl Write, values: &[f32]) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_exact<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N], IoError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => IoError::Truncated(what.to_string()),
        _ => IoError::Io(e),
    })?;
    Ok(buf)
}

pub fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, IoError> {
    Ok(u32::from_le_bytes(read_exact::<4>(r, what)?))
}

pub fn read_f32s(r: &mut impl Read, count: usize, what: &str) -> Result<Vec<f32>, IoError> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => IoError::Truncated(what.to_string()),
        _ => IoError::Io(e),
    })?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<(), IoError> {
    let got = read_exact::<4>(r, "magic")?;
    if &got != magic {
        return Err(IoError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&got).into_owned(),
        });
    }
    Ok(())
}

use std::io::{self, Read, Write};

use super::GroundTruthMask;
use crate::error::{Error, Result};

/// Reads a binary PGM (`P5`, maxval 255) label mask.
pub fn read_pgm<R: Read>(reader: &mut R) -> Result<GroundTruthMask> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<stream>", e))?;

    let mut pos = 0;
    let magic = token(&bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedPgm(format!(
            "expected magic P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = number(&bytes, &mut pos, "width")?;
    let height = number(&bytes, &mut pos, "height")?;
    let maxval = number(&bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::MalformedPgm(format!(
            "maxval must be 255, found {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedPgm(format!("empty image {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::MalformedPgm(
                "missing separator before raster".into(),
            ))
        }
    }
    let raster = &bytes[pos..];
    if raster.len() != width * height {
        return Err(Error::MalformedPgm(format!(
            "raster has {} bytes, expected {}",
            raster.len(),
            width * height
        )));
    }
    GroundTruthMask::new(height, width, raster.to_vec())
}

pub fn write_pgm<W: Write>(writer: &mut W, mask: &GroundTruthMask) -> io::Result<()> {
    write!(writer, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    writer.write_all(mask.labels())
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::MalformedPgm("truncated header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let t = token(bytes, pos)?;
    std::str::from_utf8(t)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedPgm(format!("bad {what}: {:?}", String::from_utf8_lossy(t))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_two_by_two() {
        let bytes = b"P5\n2 2\n255\n\x00\x01\xff\x00";
        let m = read_pgm(&mut &bytes[..]).unwrap();
        assert_eq!((m.height(), m.width()), (2, 2));
        assert_eq!(m.labels(), &[0, 1, 255, 0]);
    }

    #[test]
    fn accepts_comments_in_header() {
        let bytes = b"P5 # mask\n# size\n3 1\n255\n\x00\x01\x00";
        let m = read_pgm(&mut &bytes[..]).unwrap();
        assert_eq!((m.height(), m.width()), (1, 3));
    }

    #[test]
    fn illegal_label() {
        let bytes = b"P5\n2 2\n255\n\x00\x07\x01\x00";
        assert!(matches!(
            read_pgm(&mut &bytes[..]),
            Err(Error::IllegalLabelValue { value: 7, index: 1 })
        ));
    }

    #[test]
    fn malformed() {
        let cases: &[&[u8]] = &[
            b"P2\n2 2\n255\n0 1 1 0",
            b"P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00",
            b"P5\n2 2\n255\n\x00\x00\x00",
            b"P5\n2 x\n255\n\x00\x00",
            b"P5\n2 2",
            b"P5\n0 2\n255\n",
        ];
        for c in cases {
            assert!(
                matches!(read_pgm(&mut &c[..]), Err(Error::MalformedPgm(_))),
                "{:?}",
                String::from_utf8_lossy(c)
            );
        }
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..8, w in 1usize..8, picks in proptest::collection::vec(0usize..3, 64)) {
            let labels: Vec<u8> = (0..h * w).map(|i| [0, 1, 255][picks[i % picks.len()]]).collect();
            let m = GroundTruthMask::new(h, w, labels).unwrap();
            let mut buf = Vec::new();
            write_pgm(&mut buf, &m).unwrap();
            prop_assert_eq!(read_pgm(&mut buf.as_slice()).unwrap(), m);
        }
    }
}
